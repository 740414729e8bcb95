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

#include "icf/temporal_context.hpp"

#include <cmath>

#include "icf/common.hpp"

namespace icf::temporal {

void GranularityConfig::validate() const {
  if (!std::isfinite(temperature)) {
    throw ValidationError("temporal_context", "temperature must be finite");
  }
  if (!video && !segment && !frame) {
    throw ValidationError("temporal_context", "at least one granularity level must be enabled");
  }
}

int GranularityConfig::window_size(int num_frames) const {
  const int div = window == SegmentWindow::kHalf ? 2 : 4;
  return std::max(1, (num_frames + div - 1) / div);
}

double GranularityConfig::temperature_for(std::int64_t hw) const {
  return temperature > 0.0 ? temperature : std::sqrt(static_cast<double>(hw));
}

std::vector<std::vector<int>> segment_windows(int num_frames, int window) {
  if (num_frames < 1) throw ValidationError("temporal_context", "need at least one frame");
  if (window < 1) throw ValidationError("temporal_context", "window must be positive");
  std::vector<std::vector<int>> out(num_frames);
  for (int t = 0; t < num_frames; ++t) {
    out[t].reserve(window);
    for (int k = t - window + 1; k <= t; ++k) out[t].push_back(std::max(k, 0));
  }
  return out;
}

ChannelAttentionImpl::ChannelAttentionImpl(std::int64_t spatial) {
  query = register_module("query", torch::nn::Linear(spatial, spatial));
  key = register_module("key", torch::nn::Linear(spatial, spatial));
  value = register_module("value", torch::nn::Linear(spatial, spatial));
  torch::NoGradGuard guard;
  value->weight.zero_();
  value->bias.zero_();
}

ChannelAttentionImpl::Result ChannelAttentionImpl::forward_with_attention(
    const torch::Tensor& features, double temperature) {
  if (features.dim() != 4 && features.dim() != 5) {
    throw ValidationError("temporal_context", "expected [T, C, H, W] or [B, T, C, H, W]");
  }
  if (!(temperature > 0.0)) throw ValidationError("temporal_context", "temperature must be > 0");
  if (!torch::isfinite(features).all().item<bool>()) {
    throw NumericalError("temporal_context", "non-finite input to channel attention");
  }
  const bool batched = features.dim() == 5;
  auto x = batched ? features : features.unsqueeze(0);
  const auto b = x.size(0), t = x.size(1), c = x.size(2), h = x.size(3), w = x.size(4);
  auto tokens = x.reshape({b, t * c, h * w});
  auto q = query(tokens);
  auto k = key(tokens);
  auto v = value(tokens);
  auto attn = torch::softmax(torch::matmul(q, k.transpose(1, 2)) / temperature, -1);
  auto out = (tokens + torch::matmul(attn, v)).reshape(x.sizes());
  if (!batched) {
    out = out.squeeze(0);
    attn = attn.squeeze(0);
  }
  return {out, attn};
}

torch::Tensor ChannelAttentionImpl::forward(const torch::Tensor& features, double temperature) {
  return forward_with_attention(features, temperature).output;
}

torch::Tensor GranularityStreams::combined(const GranularityConfig& cfg,
                                           const torch::Tensor& input) const {
  std::vector<torch::Tensor> parts;
  if (cfg.video) parts.push_back(video);
  if (cfg.segment) parts.push_back(segment);
  if (cfg.frame) parts.push_back(frame);
  if (parts.empty()) return input;
  auto sum = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) sum = sum + parts[i];
  return parts.size() == 1 ? sum : sum / static_cast<double>(parts.size());
}

GranularityStreams apply_granularity(ChannelAttention& attention, const torch::Tensor& features,
                                     const GranularityConfig& cfg) {
  cfg.validate();
  if (features.dim() != 5) {
    throw ValidationError("temporal_context", "apply_granularity expects [B, T, C, H, W]");
  }
  const auto b = features.size(0), t = features.size(1), c = features.size(2),
             h = features.size(3), w = features.size(4);
  const double tau = cfg.temperature_for(h * w);
  GranularityStreams s;
  s.video = cfg.video ? attention->forward(features, tau) : features;

  if (cfg.frame) {
    s.frame = attention->forward(features.reshape({b * t, 1, c, h, w}), tau)
                  .reshape(features.sizes());
  } else {
    s.frame = features;
  }

  if (cfg.segment) {
    const int win = cfg.window_size(static_cast<int>(t));
    const auto windows = segment_windows(static_cast<int>(t), win);
    std::vector<std::int64_t> flat;
    flat.reserve(t * win);
    for (const auto& wi : windows) flat.insert(flat.end(), wi.begin(), wi.end());
    auto idx = torch::tensor(flat, torch::kLong);
    auto gathered = features.index_select(1, idx).reshape({b * t, win, c, h, w});
    auto attended = attention->forward(gathered, tau);
    s.segment = attended.select(1, win - 1).reshape(features.sizes());
  } else {
    s.segment = features;
  }
  return s;
}

TemporalContextImpl::TemporalContextImpl(std::vector<std::int64_t> spatial_sizes,
                                         GranularityConfig cfg)
    : cfg_(cfg) {
  cfg_.validate();
  for (std::size_t i = 0; i < spatial_sizes.size(); ++i) {
    attention_.push_back(register_module("attention" + std::to_string(i),
                                         ChannelAttention(spatial_sizes[i])));
  }
}

TemporalOutput TemporalContextImpl::forward(const enc::VisualFeatureStack& stack,
                                            std::int64_t frames_per_clip) {
  const auto n_scales = stack.scales.size();
  if (attention_.size() > n_scales) {
    throw ValidationError("temporal_context", "more attended scales than pyramid levels");
  }
  TemporalOutput out;
  out.enriched = stack;
  const auto first = n_scales - attention_.size();
  for (std::size_t i = 0; i < attention_.size(); ++i) {
    const auto& f = stack.scales[first + i];
    if (f.size(0) % frames_per_clip != 0) {
      throw ValidationError("temporal_context", "frame count is not a multiple of T");
    }
    auto clip = f.reshape({f.size(0) / frames_per_clip, frames_per_clip, f.size(1), f.size(2),
                           f.size(3)});
    auto streams = apply_granularity(attention_[i], clip, cfg_);
    out.enriched.scales[first + i] = streams.combined(cfg_, clip).reshape(f.sizes());
    if (i + 1 == attention_.size()) out.coarsest = std::move(streams);
  }
  return out;
}

}  // namespace icf::temporal
