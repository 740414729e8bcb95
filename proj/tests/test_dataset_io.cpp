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

#include <fstream>

#include <gtest/gtest.h>

#include "icf/common.hpp"
#include "icf/dataset_io.hpp"
#include "test_util.hpp"

using namespace icf::data;
using icf::testing::TempDir;

namespace {

RawClip fixture_clip(const std::string& id, Regime regime, std::uint64_t seed) {
  auto clip = generate_clip(make_regime_spec(regime, seed, 32, 32));
  clip.id = id;
  return clip;
}

}  // namespace

TEST(Png, RgbGrayAndIndexedRoundTrip) {
  TempDir dir("png");
  std::vector<std::uint8_t> rgb(6 * 4 * 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<std::uint8_t>(i * 7);
  write_png_rgb(dir.path() / "a.png", 6, 4, rgb.data());
  auto img = read_png(dir.path() / "a.png");
  EXPECT_EQ(img.width, 6);
  EXPECT_EQ(img.height, 4);
  EXPECT_EQ(img.channels, 3);
  EXPECT_EQ(img.data, rgb);

  std::vector<std::uint8_t> idx(6 * 4);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint8_t>(i % 13);
  write_png_indexed(dir.path() / "b.png", 6, 4, idx.data(), semantic_palette());
  img = read_png(dir.path() / "b.png");
  EXPECT_TRUE(img.paletted);
  EXPECT_EQ(img.data, idx);

  write_png_gray(dir.path() / "c.png", 6, 4, idx.data());
  img = read_png(dir.path() / "c.png");
  EXPECT_FALSE(img.paletted);
  EXPECT_EQ(img.data, idx);

  EXPECT_THROW(read_png(dir.path() / "missing.png"), icf::IoError);
  std::ofstream(dir.path() / "junk.png") << "not a png";
  EXPECT_THROW(read_png(dir.path() / "junk.png"), icf::IoError);
}

TEST(Wav, Pcm16RoundTripWithinQuantization) {
  TempDir dir("wav");
  std::vector<float> s{0.0f, 0.5f, -0.5f, 0.999f, -1.0f, 0.25f};
  write_wav_pcm16(dir.path() / "a.wav", s, 16000);
  const auto w = read_wav(dir.path() / "a.wav");
  EXPECT_EQ(w.sample_rate, 16000);
  ASSERT_EQ(w.samples.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(w.samples[i], s[i], 1.0 / 32768 + 1e-6);
}

TEST(AvsBench, TwoClipDirectoryPreservesCount) {
  TempDir dir("avs2");
  const auto a = fixture_clip("a", Regime::kS4, 1);
  const auto b = fixture_clip("b", Regime::kM3, 2);
  write_clip_dir(dir.path(), Split::kTrain, a);
  write_clip_dir(dir.path(), Split::kTrain, b);
  write_index(dir.path(), Split::kTrain, {{"a", "s4"}, {"b", "m3"}});
  const auto recs = load_avsbench_dir(dir.path(), Split::kTrain);
  ASSERT_EQ(recs.size(), 2u);
  for (const auto& r : recs) {
    ASSERT_TRUE(r.ok()) << r.error;
    EXPECT_EQ(r.clip->num_frames, 5);
  }
  EXPECT_EQ(recs[0].clip->frames, a.frames);
  EXPECT_EQ(recs[0].clip->masks, a.masks);
  EXPECT_EQ(recs[1].subset, "m3");
  ASSERT_EQ(recs[1].clip->waveform.size(), b.waveform.size());
  for (std::size_t i = 0; i < b.waveform.size(); i += 997) {
    EXPECT_NEAR(recs[1].clip->waveform[i], b.waveform[i], 1.0 / 32768 + 1e-6);
  }
}

TEST(AvsBench, MissingMasksYieldErrorRecordAndStreamContinues) {
  TempDir dir("avsmissing");
  write_clip_dir(dir.path(), Split::kVal, fixture_clip("broken", Regime::kS4, 3));
  write_clip_dir(dir.path(), Split::kVal, fixture_clip("fine", Regime::kS4, 4));
  std::filesystem::remove_all(dir.path() / "val" / "broken" / "masks");
  write_index(dir.path(), Split::kVal, {{"broken", "s4"}, {"fine", "s4"}});
  AvsBenchReader reader(dir.path(), Split::kVal);
  auto first = reader.next();
  ASSERT_TRUE(first.has_value());
  EXPECT_FALSE(first->ok());
  EXPECT_NE(first->error.find("broken"), std::string::npos);
  auto second = reader.next();
  ASSERT_TRUE(second.has_value());
  EXPECT_TRUE(second->ok());
  EXPECT_FALSE(reader.next().has_value());

  std::filesystem::remove(dir.path() / "val" / "fine" / "audio.wav");
  const auto recs = load_avsbench_dir(dir.path(), Split::kVal);
  EXPECT_FALSE(recs[1].ok());
  EXPECT_NE(recs[1].error.find("fine"), std::string::npos);
}

TEST(AvsBench, MalformedIndexIsFatal) {
  TempDir dir("avsbad");
  std::filesystem::create_directories(dir.path() / "test");
  std::ofstream(dir.path() / "test" / "index.json") << "{ clips: oops";
  EXPECT_THROW(load_avsbench_dir(dir.path(), Split::kTest), icf::IoError);
  std::ofstream(dir.path() / "test" / "index.json") << R"({"clips": [{"subset": "s4"}]})";
  EXPECT_THROW(load_avsbench_dir(dir.path(), Split::kTest), icf::IoError);
  EXPECT_THROW(load_avsbench_dir(dir.path(), Split::kTrain), icf::IoError);
}

// Hand-built AVSS-style fixture: ten frames, label maps as indexed PNGs.
TEST(AvsBench, SemanticFixtureIsDetectedAndLabelsPreserved) {
  TempDir dir("avss");
  const int H = 8, W = 12, T = 10;
  const auto clip_dir = dir.path() / "test" / "v0";
  std::filesystem::create_directories(clip_dir / "frames");
  std::filesystem::create_directories(clip_dir / "masks");
  std::vector<std::vector<std::uint8_t>> labels(T, std::vector<std::uint8_t>(H * W, 0));
  for (int t = 0; t < T; ++t) {
    std::vector<std::uint8_t> rgb(H * W * 3, static_cast<std::uint8_t>(10 * t));
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        if (x >= t && x < t + 3 && y < 4) labels[t][y * W + x] = 5;
        if (y >= 5 && x < 2) labels[t][y * W + x] = 12;
      }
    }
    write_png_rgb(clip_dir / "frames" / (std::to_string(t) + ".png"), W, H, rgb.data());
    write_png_indexed(clip_dir / "masks" / (std::to_string(t) + ".png"), W, H, labels[t].data(),
                      semantic_palette());
  }
  write_wav_pcm16(clip_dir / "audio.wav", std::vector<float>(T * 1600, 0.1f), 1600);
  write_index(dir.path(), Split::kTest, {{"v0", "avss"}});

  const auto recs = load_avsbench_dir(dir.path(), Split::kTest);
  ASSERT_EQ(recs.size(), 1u);
  ASSERT_TRUE(recs[0].ok()) << recs[0].error;
  const auto& c = *recs[0].clip;
  EXPECT_EQ(c.num_frames, T);
  EXPECT_EQ(c.height, H);
  EXPECT_EQ(c.width, W);
  EXPECT_EQ(c.mask_mode, MaskMode::kSemantic);
  EXPECT_EQ(c.sample_rate, 1600);
  EXPECT_EQ(c.samples_per_frame(), 1600u);
  EXPECT_EQ(recs[0].subset, "avss");
  for (int t = 0; t < T; ++t) {
    const auto m = c.mask(t);
    EXPECT_TRUE(std::equal(m.begin(), m.end(), labels[t].begin())) << "frame " << t;
    EXPECT_EQ(c.frame(t)[0], 10 * t);
  }
  EXPECT_EQ(c.class_labels, (std::vector<int>{4, 11}));
}

TEST(AvsBench, SyntheticSemanticClipRoundTrips) {
  TempDir dir("avssrt");
  const auto clip = fixture_clip("sem", Regime::kAvss, 9);
  write_clip_dir(dir.path(), Split::kTrain, clip);
  write_index(dir.path(), Split::kTrain, {{"sem", "avss"}});
  const auto recs = load_avsbench_dir(dir.path(), Split::kTrain);
  ASSERT_TRUE(recs[0].ok());
  EXPECT_EQ(recs[0].clip->mask_mode, MaskMode::kSemantic);
  EXPECT_EQ(recs[0].clip->num_frames, 10);
  EXPECT_EQ(recs[0].clip->masks, clip.masks);
}

TEST(Split, NamesRoundTrip) {
  for (auto s : {Split::kTrain, Split::kVal, Split::kTest}) EXPECT_EQ(parse_split(split_name(s)), s);
  EXPECT_THROW(parse_split("holdout"), icf::Error);
}
