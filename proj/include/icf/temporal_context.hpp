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

#include <vector>

#include <torch/torch.h>

#include "icf/encoders.hpp"

namespace icf::temporal {

enum class SegmentWindow { kHalf, kQuarter };

struct GranularityConfig {
  // Softmax temperature; <= 0 selects sqrt(H * W) of the attended scale.
  double temperature = 0.0;
  SegmentWindow window = SegmentWindow::kHalf;
  bool video = true;
  bool segment = true;
  bool frame = true;

  // Throws ValidationError for a non-finite temperature.
  void validate() const;
  int window_size(int num_frames) const;
  double temperature_for(std::int64_t hw) const;
};

// One window per frame t covering [t - w + 1, t]; indices before 0 repeat
// frame 0. Every window holds exactly w entries.
std::vector<std::vector<int>> segment_windows(int num_frames, int window);

// Channel attention with (frame, channel) pairs as tokens. Q, K and V are
// linear maps over the flattened spatial axis, so the correlation matrix is
// (T*C) x (T*C) and never (T*H*W)^2.
class ChannelAttentionImpl : public torch::nn::Module {
 public:
  explicit ChannelAttentionImpl(std::int64_t spatial);

  struct Result {
    torch::Tensor output;     // same shape as the input
    torch::Tensor attention;  // [..., T*C, T*C]
  };

  // features: [T, C, H, W] or [B, T, C, H, W].
  torch::Tensor forward(const torch::Tensor& features, double temperature);
  Result forward_with_attention(const torch::Tensor& features, double temperature);

  torch::nn::Linear query{nullptr};
  torch::nn::Linear key{nullptr};
  torch::nn::Linear value{nullptr};
};
TORCH_MODULE(ChannelAttention);

struct GranularityStreams {
  torch::Tensor video;    // [B, T, C, H, W]
  torch::Tensor segment;  // [B, T, C, H, W]
  torch::Tensor frame;    // [B, T, C, H, W]

  // Mean of the enabled streams; the input itself when all are disabled.
  torch::Tensor combined(const GranularityConfig& cfg, const torch::Tensor& input) const;
};

// Video level attends across all T frames, segment level within each sliding
// window (emitting the window's last frame), frame level within one frame.
// Disabled levels pass the input through unchanged.
GranularityStreams apply_granularity(ChannelAttention& attention,
                                     const torch::Tensor& features,
                                     const GranularityConfig& cfg);

struct TemporalOutput {
  enc::VisualFeatureStack enriched;   // decoder input
  GranularityStreams coarsest;        // streams at the coarsest scale
};

// Applies the granularity operator on the coarsest two pyramid scales; the
// finer scales are passed through.
class TemporalContextImpl : public torch::nn::Module {
 public:
  TemporalContextImpl(std::vector<std::int64_t> spatial_sizes, GranularityConfig cfg);

  TemporalOutput forward(const enc::VisualFeatureStack& stack, std::int64_t frames_per_clip);

  const GranularityConfig& config() const { return cfg_; }
  ChannelAttention& attention(std::size_t i) { return attention_.at(i); }

 private:
  GranularityConfig cfg_;
  std::vector<ChannelAttention> attention_;  // one per attended scale
};
TORCH_MODULE(TemporalContext);

}  // namespace icf::temporal
