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

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "icf/data_synth.hpp"
#include "icf/encoders.hpp"

namespace icf::metrics {

inline constexpr double kDefaultBeta2 = 0.3;

// Binary masks of equal shape (any dtype; nonzero = foreground). Scores in
// [0, 100]; two empty masks score 100.
double jaccard(const torch::Tensor& pred, const torch::Tensor& gt);
double fscore(const torch::Tensor& pred, const torch::Tensor& gt, double beta2 = kDefaultBeta2);

struct ClipScore {
  std::string id;
  double j = 0.0;
  double f = 0.0;
};

struct ClassScore {
  double j = 0.0;
  double f = 0.0;
  std::int64_t clips = 0;  // clips in which the class appeared
};

struct EvalReport {
  double j = 0.0;
  double f = 0.0;
  double jf = 0.0;
  std::vector<ClipScore> clips;
  std::map<int, ClassScore> classes;  // semantic mode only

  // Tab-separated text: a header line, one row per clip
  // (id, J, F, J&F), then "#summary" and "#class" blocks.
  std::string to_tsv() const;
  void save(const std::filesystem::path& path) const;
  static EvalReport parse_tsv(const std::string& text);
};

struct ClipMasks {
  std::string id;
  torch::Tensor pred;  // [T, H, W]; 0/1 (binary) or class labels (semantic)
  torch::Tensor gt;
};

// Binary: per-frame J and F averaged per clip, then over clips.
// Semantic: per clip, J and F per foreground class present in pred or gt
// (pixels pooled over the clip's frames), averaged over those classes.
EvalReport evaluate(const std::vector<ClipMasks>& clips, bool semantic, double beta2 = kDefaultBeta2);

enum class Quadrant { kBottomLeft = 0, kBottomRight = 1, kTopLeft = 2, kTopRight = 3 };
std::string quadrant_name(Quadrant q);

struct ClipComplexity {
  std::string id;
  double visual_mse = 0.0;       // x axis
  double audio_melchange = 0.0;  // y axis
  Quadrant quadrant = Quadrant::kBottomLeft;
};

struct ComplexityReport {
  double visual_median = 0.0;
  double audio_median = 0.0;
  std::vector<ClipComplexity> clips;
};

// Visual: mean squared difference of consecutive frames (pixels in [0, 1]).
// Audio: mean L2 distance between consecutive log-Mel frames over the whole
// clip. Quadrants split at the corpus medians (strictly above = high).
ClipComplexity clip_complexity(const data::RawClip& clip, const enc::MelConfig& mel = {});
ComplexityReport corpus_complexity(const std::vector<data::RawClip>& clips,
                                   const enc::MelConfig& mel = {});

}  // namespace icf::metrics
