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

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace icf {

// Base class for every error raised by the library. The module name is
// carried separately so the harness can report which stage failed.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

// Input or configuration violates a declared precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A numerical computation produced NaN/Inf or otherwise broke down.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Filesystem or format problem.
class IoError : public Error {
 public:
  using Error::Error;
};

// Process-wide call counters. Used by tests to prove that disabled
// training components never run.
struct CallCounters {
  std::atomic<std::uint64_t> text_inversions{0};
  std::atomic<std::uint64_t> codebook_encodes{0};
  std::atomic<std::uint64_t> forward_diffusions{0};
  std::atomic<std::uint64_t> reverse_chains{0};
  std::atomic<std::uint64_t> counterfactual_losses{0};
  std::atomic<std::uint64_t> contrast_losses{0};

  void reset() {
    text_inversions = 0;
    codebook_encodes = 0;
    forward_diffusions = 0;
    reverse_chains = 0;
    counterfactual_losses = 0;
    contrast_losses = 0;
  }
};

CallCounters& counters();

// 64-bit FNV-1a, used for config hashes and seed derivation.
std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t seed = 1469598103934665603ULL);
std::uint64_t fnv1a64(const std::string& s);

// Mixes a base seed with a stream id (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace icf
