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

#include "icf/dataset_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <set>

#include <nlohmann/json.hpp>

#include "icf/common.hpp"

namespace icf::data {
namespace {

using FilePtr = std::unique_ptr<FILE, int (*)(FILE*)>;

IoError io_error(const std::string& what) { return IoError("dataset_io", what); }

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode), &std::fclose);
  if (!f) throw io_error("cannot open " + path.string());
  return f;
}

struct PngErrorState {
  std::jmp_buf jump;
  char message[256] = {0};
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngErrorState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", msg);
  std::longjmp(state->jump, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

void write_png(const fs::path& path, int width, int height, int color_type,
               const std::uint8_t* data, int row_bytes,
               const std::vector<std::array<std::uint8_t, 3>>* palette) {
  auto file = open_file(path, "wb");
  PngErrorState state;
  std::vector<png_color> colors;
  if (palette) {
    for (const auto& c : *palette) colors.push_back({c[0], c[1], c[2]});
  }
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &state, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw io_error("libpng init failed");
  }
  if (setjmp(state.jump)) {
    png_destroy_write_struct(&png, &info);
    throw io_error(std::string("png write failed: ") + state.message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (palette) png_set_PLTE(png, info, colors.data(), static_cast<int>(colors.size()));
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(y) * row_bytes));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

PngImage read_png(const fs::path& path) {
  auto file = open_file(path, "rb");
  PngErrorState state;
  PngImage image;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> raw;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &state, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw io_error("libpng init failed");
  }
  if (setjmp(state.jump)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw io_error("png read failed for " + path.string() + ": " + state.message);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    if (bit_depth < 8) png_set_packing(png);
  } else {
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  image.width = static_cast<int>(png_get_image_width(png, info));
  image.height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  raw.resize(row_bytes * image.height);
  rows.resize(image.height);
  for (int y = 0; y < image.height; ++y) rows[y] = raw.data() + row_bytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  image.paletted = color_type == PNG_COLOR_TYPE_PALETTE;
  image.channels = channels >= 3 ? 3 : 1;
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  image.data.resize(n * image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const auto* src = raw.data() + row_bytes * y + static_cast<std::size_t>(x) * channels;
      auto* dst = image.data.data() + (static_cast<std::size_t>(y) * image.width + x) * image.channels;
      std::memcpy(dst, src, image.channels);
    }
  }
  return image;
}

void write_png_rgb(const fs::path& path, int width, int height, const std::uint8_t* rgb) {
  write_png(path, width, height, PNG_COLOR_TYPE_RGB, rgb, width * 3, nullptr);
}

void write_png_gray(const fs::path& path, int width, int height, const std::uint8_t* gray) {
  write_png(path, width, height, PNG_COLOR_TYPE_GRAY, gray, width, nullptr);
}

void write_png_indexed(const fs::path& path, int width, int height,
                       const std::uint8_t* indices,
                       const std::vector<std::array<std::uint8_t, 3>>& palette) {
  if (palette.empty() || palette.size() > 256) throw io_error("palette must hold 1..256 colours");
  write_png(path, width, height, PNG_COLOR_TYPE_PALETTE, indices, width, &palette);
}

// --- WAV -------------------------------------------------------------------

namespace {

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t offset) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return v;
}

}  // namespace

void write_wav_pcm16(const fs::path& path, const std::vector<float>& samples, int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, 1);  // PCM
  put<std::uint16_t>(out, 1);  // mono
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate) * 2);
  put<std::uint16_t>(out, 2);
  put<std::uint16_t>(out, 16);
  out.write("data", 4);
  put<std::uint32_t>(out, data_bytes);
  for (float s : samples) {
    const double v = std::round(static_cast<double>(s) * 32768.0);
    put<std::int16_t>(out, static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0)));
  }
}

WavAudio read_wav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw io_error(path.string() + " is not a RIFF/WAVE file");
  }
  WavAudio audio;
  int channels = 0, bits = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto size = get<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > buf.size()) throw io_error(path.string() + ": truncated chunk " + id);
    if (id == "fmt ") {
      if (get<std::uint16_t>(buf, body) != 1) throw io_error(path.string() + ": only PCM supported");
      channels = get<std::uint16_t>(buf, body + 2);
      audio.sample_rate = static_cast<int>(get<std::uint32_t>(buf, body + 4));
      bits = get<std::uint16_t>(buf, body + 14);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw io_error(path.string() + ": data before fmt");
      if (channels != 1 || bits != 16) throw io_error(path.string() + ": expected mono 16-bit PCM");
      const std::size_t n = size / 2;
      audio.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        audio.samples[i] = static_cast<float>(get<std::int16_t>(buf, body + 2 * i) / 32768.0);
      }
      return audio;
    }
    pos = body + size + (size & 1);
  }
  throw io_error(path.string() + ": no data chunk");
}

// --- AVSBench layout -------------------------------------------------------

std::string split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ValidationError("dataset_io", "unknown split '" + name + "'");
}

std::vector<std::array<std::uint8_t, 3>> semantic_palette() {
  std::vector<std::array<std::uint8_t, 3>> palette(256, {128, 128, 128});
  palette[0] = {0, 0, 0};
  for (int c = 0; c < kNumConcepts; ++c) palette[c + 1] = concept_color(c);
  return palette;
}

void write_clip_dir(const fs::path& root, Split split, const RawClip& clip) {
  const fs::path dir = root / split_name(split) / clip.id;
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "masks");
  const auto palette = semantic_palette();
  std::vector<std::uint8_t> gray(clip.pixels_per_frame());
  for (int t = 0; t < clip.num_frames; ++t) {
    const auto name = std::to_string(t) + ".png";
    write_png_rgb(dir / "frames" / name, clip.width, clip.height, clip.frame(t).data());
    const auto mask = clip.mask(t);
    if (clip.mask_mode == MaskMode::kBinary) {
      std::transform(mask.begin(), mask.end(), gray.begin(),
                     [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
      write_png_gray(dir / "masks" / name, clip.width, clip.height, gray.data());
    } else {
      write_png_indexed(dir / "masks" / name, clip.width, clip.height, mask.data(), palette);
    }
  }
  write_wav_pcm16(dir / "audio.wav", clip.waveform, clip.sample_rate);
}

void write_index(const fs::path& root, Split split, const std::vector<IndexEntry>& entries) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["clips"] = nlohmann::ordered_json::array();
  for (const auto& e : entries) j["clips"].push_back({{"id", e.id}, {"subset", e.subset}});
  fs::create_directories(root / split_name(split));
  std::ofstream out(root / split_name(split) / "index.json");
  out << j.dump(2) << "\n";
}

std::vector<IndexEntry> read_index(const fs::path& root, Split split) {
  const fs::path path = root / split_name(split) / "index.json";
  std::ifstream in(path);
  if (!in) throw io_error("missing index file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw io_error("malformed index " + path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("clips") || !j["clips"].is_array()) {
    throw io_error("malformed index " + path.string() + ": expected {\"clips\": [...]}");
  }
  std::vector<IndexEntry> entries;
  for (const auto& c : j["clips"]) {
    if (!c.is_object() || !c.contains("id") || !c["id"].is_string()) {
      throw io_error("malformed index " + path.string() + ": clip entry without id");
    }
    IndexEntry e{c["id"].get<std::string>(), c.value("subset", std::string("s4"))};
    if (e.subset != "s4" && e.subset != "m3" && e.subset != "avss") {
      throw io_error("malformed index " + path.string() + ": unknown subset '" + e.subset + "'");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

namespace {

// Numbered PNGs in a directory, keyed by frame index.
std::map<int, fs::path> numbered_pngs(const fs::path& dir) {
  std::map<int, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".png") continue;
    const auto stem = entry.path().stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), ::isdigit)) continue;
    out.emplace(std::stoi(stem), entry.path());
  }
  return out;
}

}  // namespace

AvsBenchReader::AvsBenchReader(fs::path root, Split split)
    : dir_(root / split_name(split)), entries_(read_index(root, split)) {}

std::optional<ClipRecord> AvsBenchReader::next() {
  if (cursor_ >= entries_.size()) return std::nullopt;
  return load(entries_[cursor_++]);
}

ClipRecord AvsBenchReader::load(const IndexEntry& entry) const {
  ClipRecord rec{entry.id, entry.subset, std::nullopt, ""};
  const fs::path dir = dir_ / entry.id;
  auto fail = [&](const std::string& why) {
    rec.error = "clip " + entry.id + ": " + why;
    return rec;
  };
  const auto frames = numbered_pngs(dir / "frames");
  const auto masks = numbered_pngs(dir / "masks");
  if (frames.empty()) return fail("no frame files");
  if (masks.empty()) return fail("missing mask files");
  if (!fs::exists(dir / "audio.wav")) return fail("missing audio.wav");
  for (const auto& [t, _] : frames) {
    if (!masks.count(t)) return fail("missing mask for frame " + std::to_string(t));
  }

  try {
    RawClip clip;
    clip.id = entry.id;
    clip.num_frames = static_cast<int>(frames.size());
    clip.frame_provenance.assign(clip.num_frames, "");
    bool first = true;
    for (const auto& [t, path] : frames) {
      const auto img = read_png(path);
      if (img.paletted || img.channels != 3) return fail("frame " + std::to_string(t) + " is not RGB");
      if (first) {
        clip.width = img.width;
        clip.height = img.height;
        first = false;
      } else if (img.width != clip.width || img.height != clip.height) {
        return fail("frame sizes differ");
      }
      clip.frames.insert(clip.frames.end(), img.data.begin(), img.data.end());

      const auto m = read_png(masks.at(t));
      if (m.width != clip.width || m.height != clip.height || m.channels != 1) {
        return fail("mask " + std::to_string(t) + " has wrong shape");
      }
      if (t == frames.begin()->first) {
        clip.mask_mode = m.paletted ? MaskMode::kSemantic : MaskMode::kBinary;
      }
      for (auto v : m.data) {
        if (clip.mask_mode == MaskMode::kBinary) {
          clip.masks.push_back(v >= 128 ? 1 : 0);
        } else {
          clip.masks.push_back(v);
        }
      }
    }
    const auto wav = read_wav(dir / "audio.wav");
    clip.sample_rate = wav.sample_rate;
    const std::size_t per = wav.samples.size() / clip.num_frames;
    if (per == 0) return fail("audio shorter than frame count");
    clip.waveform.assign(wav.samples.begin(), wav.samples.begin() + per * clip.num_frames);
    if (clip.mask_mode == MaskMode::kSemantic) {
      std::set<int> present(clip.masks.begin(), clip.masks.end());
      for (int label : present) {
        if (label > 0) clip.class_labels.push_back(label - 1);
      }
    }
    rec.clip = std::move(clip);
  } catch (const IoError& e) {
    return fail(e.what());
  }
  return rec;
}

std::vector<ClipRecord> load_avsbench_dir(const fs::path& root, Split split) {
  AvsBenchReader reader(root, split);
  std::vector<ClipRecord> out;
  while (auto rec = reader.next()) out.push_back(std::move(*rec));
  return out;
}

}  // namespace icf::data
