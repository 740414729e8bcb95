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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "icf/data_synth.hpp"

namespace icf::data {

namespace fs = std::filesystem;

struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;       // 1 (gray or palette index) or 3 (RGB)
  bool paletted = false;  // data holds palette indices
  std::vector<std::uint8_t> data;
};

PngImage read_png(const fs::path& path);
void write_png_rgb(const fs::path& path, int width, int height,
                   const std::uint8_t* rgb);
void write_png_gray(const fs::path& path, int width, int height,
                    const std::uint8_t* gray);
// Indexed-colour PNG; the palette index of each pixel is the class label.
void write_png_indexed(const fs::path& path, int width, int height,
                       const std::uint8_t* indices,
                       const std::vector<std::array<std::uint8_t, 3>>& palette);

struct WavAudio {
  int sample_rate = 0;
  std::vector<float> samples;  // mono, [-1, 1)
};

WavAudio read_wav(const fs::path& path);
void write_wav_pcm16(const fs::path& path, const std::vector<float>& samples,
                     int sample_rate);

enum class Split { kTrain, kVal, kTest };
std::string split_name(Split split);
Split parse_split(const std::string& name);

struct IndexEntry {
  std::string id;
  std::string subset;  // s4 | m3 | avss
};

// Palette used for semantic label maps: index 0 is background, 1..12 the
// synthetic concepts, everything else grey.
std::vector<std::array<std::uint8_t, 3>> semantic_palette();

// Writes <root>/<split>/<clip.id>/{frames,masks}/%d.png and audio.wav.
void write_clip_dir(const fs::path& root, Split split, const RawClip& clip);
void write_index(const fs::path& root, Split split,
                 const std::vector<IndexEntry>& entries);
// Throws IoError when index.json is missing or malformed.
std::vector<IndexEntry> read_index(const fs::path& root, Split split);

struct ClipRecord {
  std::string id;
  std::string subset;
  std::optional<RawClip> clip;  // empty when loading failed
  std::string error;            // names the clip and the missing piece

  bool ok() const { return clip.has_value(); }
};

// Streams clips listed in index.json. Per-clip problems become error records;
// a malformed index throws from the constructor.
class AvsBenchReader {
 public:
  AvsBenchReader(fs::path root, Split split);

  std::optional<ClipRecord> next();
  std::size_t size() const { return entries_.size(); }

 private:
  ClipRecord load(const IndexEntry& entry) const;

  fs::path dir_;
  std::vector<IndexEntry> entries_;
  std::size_t cursor_ = 0;
};

std::vector<ClipRecord> load_avsbench_dir(const fs::path& root, Split split);

}  // namespace icf::data
