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
#include <string>

#include <nlohmann/json.hpp>

#include "icf/cdcl.hpp"
#include "icf/counterfactual.hpp"
#include "icf/seg_decoder.hpp"
#include "icf/temporal_context.hpp"

namespace icf {

inline constexpr int kSchemaVersion = 1;

struct DataConfig {
  std::string source = "synthetic";  // synthetic | avsbench
  std::string regime = "s4";         // synthetic regime: s4 | m3 | avss
  std::string root;                  // avsbench root
  int train_clips = 16;
  int eval_clips = 16;
  // "train" evaluates on the training clips, "heldout" on fresh seeds (or the
  // test split of an avsbench root).
  std::string eval_split = "heldout";
  int height = 224;
  int width = 224;
  int frames = 0;  // 0: regime default
  std::uint64_t seed = 1;
};

struct ModelConfig {
  std::array<int, 4> visual_channels{32, 64, 128, 256};
  int feature_dim = 128;  // pooled visual, audio embedding and text width
  int detail_channels = 16;
  int queries = 16;
  int query_dim = 128;
  int mask_dim = 32;
  int heads = 4;
  int decoder_layers = 2;
  int denoiser_hidden = 256;
  int denoiser_blocks = 4;
};

struct TextConfig {
  int k_tokens = 4;
  int inversion_steps = 200;
  double inversion_lr = 0.05;
  double encoder_temperature = 0.3;
  int distractors = 20;
  std::uint64_t codebook_seed = 7;
  // Probability that a training step hides the text cue from the decoder.
  double cue_dropout = 0.5;
};

struct OptimConfig {
  double lr = 1e-4;
  double weight_decay = 0.01;
  int batch_size = 8;
  int epochs = 40;
  int max_steps = 0;  // > 0 caps the run regardless of epochs
  int eval_every = 1;  // epochs between evaluations; the last epoch always evaluates
  int pool_refresh_every = 1;  // epochs between counterfactual pool regenerations
};

struct Toggles {
  bool mit = true;
  bool sc = true;
  bool cdcl = true;
  bool pair_swap = false;  // in-batch swapped pairs replace generated counterfactuals
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;
  temporal::GranularityConfig granularity;
  TextConfig text;
  cf::CounterfactualConfig counterfactual;
  int diffusion_steps = 1000;
  cdcl::ContrastConfig contrast;
  cdcl::ContrastPairs pairs;
  seg::LossWeights loss;
  OptimConfig optim;
  Toggles toggles;

  // Throws ValidationError for illegal values or toggle combinations.
  void validate() const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys and a wrong schema
  // version are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Hash of everything that shapes the training trajectory; the run length
  // (epochs, max_steps) and eval_every are excluded so a run can be extended.
  std::uint64_t hash() const;
};

}  // namespace icf
