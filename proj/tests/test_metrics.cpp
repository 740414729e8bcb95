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
#include <iterator>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "icf/common.hpp"
#include "icf/data_synth.hpp"
#include "icf/metrics.hpp"
#include "test_util.hpp"

using namespace icf::metrics;
namespace data = icf::data;

namespace {

torch::Tensor block(int r0, int r1, int c0, int c1) {
  auto m = torch::zeros({8, 8}, torch::kUInt8);
  m.slice(0, r0, r1).slice(1, c0, c1).fill_(1);
  return m;
}

data::RawClip make_clip(const std::string& id, double speed, int tones, std::uint64_t seed) {
  data::ClipSpec spec;
  spec.seed = seed;
  spec.height = 64;
  spec.width = 64;
  spec.num_frames = 5;
  if (tones > 0) {
    std::vector<bool> on(5, true), even(5), odd(5);
    for (int t = 0; t < 5; ++t) {
      even[t] = t % 2 == 0;
      odd[t] = t % 2 == 1;
    }
    data::Trajectory tr{0.3, 0.3, speed, speed * 0.5, 0.15};
    if (tones == 1) {
      spec.sources.push_back(data::make_concept_source(0, tr, on));
    } else {
      spec.sources.push_back(data::make_concept_source(0, tr, even));
      data::Trajectory tr2{0.6, 0.6, -speed, speed * 0.3, 0.12};
      spec.sources.push_back(data::make_concept_source(5, tr2, odd));
    }
  } else {
    // Drawn but never sounding.
    spec.sources.push_back(data::make_concept_source(3, data::Trajectory{0.3, 0.3, speed, speed, 0.15},
                                                     std::vector<bool>(5, false)));
  }
  auto clip = data::generate_clip(spec);
  clip.id = id;
  return clip;
}

}  // namespace

TEST(Jaccard, HandCases) {
  const auto gt = block(0, 8, 0, 8);
  EXPECT_DOUBLE_EQ(jaccard(gt, gt), 100.0);
  EXPECT_DOUBLE_EQ(jaccard(block(0, 4, 0, 4), block(4, 8, 4, 8)), 0.0);
  EXPECT_DOUBLE_EQ(jaccard(block(0, 8, 0, 4), gt), 50.0);
  EXPECT_DOUBLE_EQ(jaccard(torch::zeros({8, 8}), torch::zeros({8, 8})), 100.0);
  EXPECT_THROW(jaccard(torch::zeros({8, 8}), torch::zeros({8, 7})), icf::ValidationError);
  // Symmetric under swap.
  const auto a = block(0, 5, 1, 6), b = block(2, 8, 0, 3);
  EXPECT_DOUBLE_EQ(jaccard(a, b), jaccard(b, a));
}

TEST(FScore, HandCases) {
  const auto gt = block(0, 8, 0, 8);
  EXPECT_DOUBLE_EQ(fscore(gt, gt), 100.0);
  // P = 1, R = 0.5.
  EXPECT_NEAR(fscore(block(0, 8, 0, 4), gt), 81.25, 1e-12);
  EXPECT_DOUBLE_EQ(fscore(torch::zeros({8, 8}), gt), 0.0);
  EXPECT_DOUBLE_EQ(fscore(torch::zeros({8, 8}), torch::zeros({8, 8})), 100.0);
  EXPECT_DOUBLE_EQ(fscore(gt, torch::zeros({8, 8})), 0.0);
  // Not symmetric: P = 0.5, R = 1 gives 1.3 * 0.5 / (0.15 + 1).
  EXPECT_NEAR(fscore(gt, block(0, 8, 0, 4)), 100 * 1.3 * 0.5 / 1.15, 1e-12);
  EXPECT_NE(fscore(gt, block(0, 8, 0, 4)), fscore(block(0, 8, 0, 4), gt));
  EXPECT_THROW(fscore(gt, torch::zeros({4, 4})), icf::ValidationError);
}

TEST(Evaluate, PerfectPredictionsScoreHundred) {
  auto gen = torch::Generator(at::make_generator<at::CPUGeneratorImpl>(3));
  std::vector<ClipMasks> clips;
  for (int i = 0; i < 4; ++i) {
    const auto gt = (torch::rand({5, 16, 16}, gen) > 0.6).to(torch::kUInt8);
    clips.push_back({"c" + std::to_string(i), gt.clone(), gt});
  }
  clips[0].gt[2].zero_();
  clips[0].pred[2].zero_();
  const auto r = evaluate(clips, false);
  EXPECT_DOUBLE_EQ(r.j, 100.0);
  EXPECT_DOUBLE_EQ(r.f, 100.0);
  EXPECT_DOUBLE_EQ(r.jf, 100.0);
}

TEST(Evaluate, UnweightedClipMeanAndJF) {
  std::vector<ClipMasks> clips;
  const auto gt = block(0, 8, 0, 8).unsqueeze(0);
  clips.push_back({"half", block(0, 8, 0, 4).unsqueeze(0), gt});
  clips.push_back({"full", gt.clone(), gt});
  const auto r = evaluate(clips, false);
  EXPECT_DOUBLE_EQ(r.j, 75.0);
  EXPECT_NEAR(r.f, (81.25 + 100) / 2, 1e-12);
  EXPECT_NEAR(r.jf, (r.j + r.f) / 2, 1e-12);
  ASSERT_EQ(r.clips.size(), 2u);
  EXPECT_DOUBLE_EQ(r.clips[0].j, 50.0);
}

TEST(Evaluate, SemanticAveragesPresentClasses) {
  auto gt = torch::zeros({1, 8, 8}, torch::kLong);
  gt[0].slice(1, 0, 4).fill_(3);
  gt[0].slice(1, 4, 8).fill_(7);
  auto pred = gt.clone();
  pred[0].slice(1, 4, 8).fill_(0);  // class 7 missed entirely
  const auto r = evaluate({{"s", pred, gt}}, true);
  EXPECT_DOUBLE_EQ(r.j, 50.0);  // (100 + 0) / 2
  ASSERT_EQ(r.classes.size(), 2u);
  EXPECT_DOUBLE_EQ(r.classes.at(3).j, 100.0);
  EXPECT_DOUBLE_EQ(r.classes.at(7).j, 0.0);
  const auto empty = evaluate({{"e", torch::zeros({1, 4, 4}), torch::zeros({1, 4, 4})}}, true);
  EXPECT_DOUBLE_EQ(empty.jf, 100.0);
}

TEST(EvalReport, TsvRoundTrip) {
  std::vector<ClipMasks> clips;
  auto gt = torch::zeros({2, 8, 8}, torch::kLong);
  gt[0].slice(0, 0, 3).fill_(2);
  gt[1].slice(0, 2, 6).fill_(5);
  auto pred = gt.clone();
  pred[1][7].fill_(5);
  clips.push_back({"a", pred, gt});
  const auto r = evaluate(clips, true);
  icf::testing::TempDir dir("report");
  r.save(dir.path() / "r.tsv");
  std::ifstream in(dir.path() / "r.tsv");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto back = EvalReport::parse_tsv(text);
  EXPECT_DOUBLE_EQ(back.j, r.j);
  EXPECT_DOUBLE_EQ(back.jf, r.jf);
  ASSERT_EQ(back.clips.size(), 1u);
  EXPECT_EQ(back.clips[0].id, "a");
  EXPECT_DOUBLE_EQ(back.classes.at(5).j, r.classes.at(5).j);
  EXPECT_THROW(EvalReport::parse_tsv("nope\n"), icf::IoError);
}

TEST(Complexity, StaticSilentClipIsZero) {
  const auto clip = make_clip("still", 0.0, 0, 1);
  const auto c = clip_complexity(clip);
  EXPECT_DOUBLE_EQ(c.visual_mse, 0.0);
  EXPECT_DOUBLE_EQ(c.audio_melchange, 0.0);
  const auto report = corpus_complexity({clip, make_clip("busy", 0.08, 2, 2)});
  EXPECT_EQ(report.clips[0].quadrant, Quadrant::kBottomLeft);
  EXPECT_EQ(report.clips[1].quadrant, Quadrant::kTopRight);
}

TEST(Complexity, FastTwoToneExceedsSlowOneTone) {
  const auto slow = clip_complexity(make_clip("slow", 0.01, 1, 3));
  const auto fast = clip_complexity(make_clip("fast", 0.08, 2, 4));
  EXPECT_GT(fast.visual_mse, slow.visual_mse);
  EXPECT_GT(fast.audio_melchange, slow.audio_melchange);
}

TEST(Complexity, BalancedCorpusFillsEveryQuadrant) {
  std::vector<data::RawClip> corpus;
  std::uint64_t seed = 10;
  for (double speed : {0.0, 0.08})
    for (int tones : {0, 2})
      for (int rep = 0; rep < 2; ++rep) {
        corpus.push_back(make_clip("c" + std::to_string(seed), speed + 0.01 * rep * (speed > 0), tones, seed));
        ++seed;
      }
  const auto r = corpus_complexity(corpus);
  int counts[4] = {0, 0, 0, 0};
  for (const auto& c : r.clips) counts[static_cast<int>(c.quadrant)]++;
  for (int q = 0; q < 4; ++q) EXPECT_GT(counts[q], 0) << quadrant_name(static_cast<Quadrant>(q));
}

TEST(Complexity, SingleFrameIsAnError) {
  data::ClipSpec spec;
  spec.num_frames = 1;
  spec.height = 32;
  spec.width = 32;
  spec.sources.push_back(data::make_concept_source(0, data::Trajectory{}, {true}));
  const auto clip = data::generate_clip(spec);
  EXPECT_THROW(clip_complexity(clip), icf::ValidationError);
}
