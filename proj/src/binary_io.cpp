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

#include "icf/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace icf {
namespace {

std::uint8_t dtype_tag(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32:
      return 1;
    case torch::kFloat64:
      return 2;
    case torch::kInt64:
      return 3;
    case torch::kUInt8:
      return 4;
    case torch::kInt32:
      return 5;
    case torch::kBool:
      return 6;
    default:
      throw IoError("binary_io", "unsupported tensor dtype");
  }
}

torch::ScalarType tag_dtype(std::uint8_t tag) {
  switch (tag) {
    case 1:
      return torch::kFloat32;
    case 2:
      return torch::kFloat64;
    case 3:
      return torch::kInt64;
    case 4:
      return torch::kUInt8;
    case 5:
      return torch::kInt32;
    case 6:
      return torch::kBool;
    default:
      throw IoError("binary_io", "unknown tensor dtype tag " + std::to_string(tag));
  }
}

}  // namespace

void BinaryWriter::tensor(const torch::Tensor& t) {
  const auto c = t.detach().cpu().contiguous();
  put<std::uint8_t>(dtype_tag(c.scalar_type()));
  put<std::uint32_t>(static_cast<std::uint32_t>(c.dim()));
  for (auto s : c.sizes()) put<std::int64_t>(s);
  bytes(c.data_ptr(), c.numel() * c.element_size());
}

void BinaryWriter::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("binary_io", "cannot write " + path.string());
  out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw IoError("binary_io", "short write to " + path.string());
}

BinaryReader BinaryReader::open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("binary_io", "cannot open " + path.string());
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return BinaryReader(std::move(data), path.string());
}

const char* BinaryReader::take(std::size_t n) {
  if (pos_ + n > buf_.size()) throw IoError("binary_io", source_ + ": unexpected end of file");
  const char* p = buf_.data() + pos_;
  pos_ += n;
  return p;
}

std::string BinaryReader::str() {
  const auto n = get<std::uint32_t>();
  const char* p = take(n);
  return std::string(p, n);
}

torch::Tensor BinaryReader::tensor() {
  const auto dtype = tag_dtype(get<std::uint8_t>());
  const auto rank = get<std::uint32_t>();
  if (rank > 8) throw IoError("binary_io", source_ + ": implausible tensor rank");
  std::vector<std::int64_t> sizes(rank);
  for (auto& s : sizes) {
    s = get<std::int64_t>();
    if (s < 0) throw IoError("binary_io", source_ + ": negative tensor size");
  }
  auto t = torch::empty(sizes, torch::TensorOptions().dtype(dtype));
  bytes(t.data_ptr(), t.numel() * t.element_size());
  return t;
}

}  // namespace icf
