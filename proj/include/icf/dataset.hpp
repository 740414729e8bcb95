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
#include <vector>

#include <torch/torch.h>

#include "icf/config.hpp"
#include "icf/data_synth.hpp"
#include "icf/encoders.hpp"

namespace icf::data {

// Model-ready tensors of one clip.
struct Sample {
  std::string id;
  torch::Tensor frames;  // [T, 3, H, W] float
  torch::Tensor mel;     // [T, M, n_mels] float
  torch::Tensor masks;   // [T, H, W] uint8 (binary) or long (semantic labels)
};

struct Dataset {
  std::vector<RawClip> clips;
  std::vector<Sample> samples;
  bool semantic = false;
  int frames = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const { return samples.size(); }
  std::int64_t classes() const { return semantic ? kNumSemanticClasses : 1; }
};

// Converts raw clips; they must agree on T, resolution and mask mode.
Dataset prepare(std::vector<RawClip> clips, const enc::MelConfig& mel = {});

struct DataSplits {
  Dataset train;
  Dataset eval;
};

// Synthetic clips from the configured regime or an avsbench-layout root.
// Clips that fail to load are skipped with a message on stderr.
DataSplits build_datasets(const ExperimentConfig& cfg);

// Seeds of the synthetic train and held-out clips.
std::uint64_t train_clip_seed(const DataConfig& cfg, int index);
std::uint64_t eval_clip_seed(const DataConfig& cfg, int index);

struct Batch {
  torch::Tensor frames;      // [B*T, 3, H, W]
  torch::Tensor mel;         // [B*T, M, n_mels]
  torch::Tensor masks;       // [B*T, H, W]
  torch::Tensor clip_index;  // [B] long, positions in the dataset
  std::int64_t clips = 0;
  std::int64_t frames_per_clip = 0;
};

Batch make_batch(const Dataset& ds, const std::vector<std::int64_t>& indices);

// Additive white Gaussian noise at `snr_db` relative to the clip's mean
// signal power. An infinite SNR returns the clip unchanged.
RawClip add_audio_noise(const RawClip& clip, double snr_db, std::uint64_t seed);

// Replaces floor(fraction * T) frames of every clip with frames of other
// clips. Injected frames get an empty ground-truth mask (their objects are
// not the source of the clip's audio) and a provenance tag "<donor>:<t>".
std::vector<RawClip> mix_frames(const std::vector<RawClip>& clips, double fraction, std::uint64_t seed);

}  // namespace icf::data
