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
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include <torch/torch.h>

#include "icf/common.hpp"

namespace icf {

// Little-endian byte sink used by the codebook and checkpoint formats.
class BinaryWriter {
 public:
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  // dtype tag, rank, sizes, raw contiguous data
  void tensor(const torch::Tensor& t);

  const std::vector<char>& data() const { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<char> buf_;
};

class BinaryReader {
 public:
  BinaryReader(std::vector<char> data, std::string source)
      : buf_(std::move(data)), source_(std::move(source)) {}
  static BinaryReader open(const std::filesystem::path& path);

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  void bytes(void* out, std::size_t n) { std::memcpy(out, take(n), n); }
  std::string str();
  torch::Tensor tensor();
  bool done() const { return pos_ == buf_.size(); }

 private:
  const char* take(std::size_t n);

  std::vector<char> buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace icf
