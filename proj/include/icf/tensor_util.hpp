// Copyright 2026 The ICF Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>

#include <torch/torch.h>

namespace icf {

// CPU generator with a fixed seed; every random draw in the library goes
// through one of these so runs are reproducible.
torch::Generator make_generator(std::uint64_t seed);

// Throws NumericalError naming `module` and `what` if `t` holds NaN or Inf.
void check_finite(const torch::Tensor& t, const std::string& module, const std::string& what);

}  // namespace icf
