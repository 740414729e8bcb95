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
#include <vector>

#include <torch/torch.h>

#include "icf/encoders.hpp"

namespace icf::seg {

struct MaskDecoderOptions {
  std::vector<std::int64_t> scale_channels{32, 64, 128, 256};
  std::int64_t detail_channels = 16;
  std::int64_t audio_dim = 128;
  std::int64_t text_dim = 128;  // 0 disables the implicit-text cue
  std::int64_t queries = 16;
  std::int64_t query_dim = 128;
  std::int64_t mask_dim = 32;
  std::int64_t heads = 4;
  int layers = 2;
  std::int64_t classes = 1;  // 1 = binary, otherwise semantic logits per class
};

struct MaskPrediction {
  torch::Tensor logits;   // [N, H, W] binary or [N, K, H, W] semantic
  torch::Tensor queries;  // [N, N_q, d_q]
};

// FPN over the feature pyramid with audio FiLM, followed by a query decoder
// whose queries cross-attend to the coarsest visual map (and the text cue
// when given). Per-query masks are fused with per-class query weights.
class MaskDecoderImpl : public torch::nn::Module {
 public:
  explicit MaskDecoderImpl(MaskDecoderOptions options = {});

  // audio [N, D_a]; text [B, L, d_t] with N = B * frames_per_clip, or undefined.
  MaskPrediction forward(const enc::VisualFeatureStack& stack, const torch::Tensor& audio,
                         const torch::Tensor& text = {}, std::int64_t frames_per_clip = 0);

  const MaskDecoderOptions& options() const { return options_; }

 private:
  MaskDecoderOptions options_;
  std::vector<torch::nn::Conv2d> lateral_;
  std::vector<torch::nn::Conv2d> smooth_;
  torch::nn::Linear film_{nullptr}, audio_query_{nullptr}, text_proj_{nullptr};
  torch::Tensor query_embed_;
  std::vector<torch::nn::MultiheadAttention> cross_, self_;
  std::vector<torch::nn::LayerNorm> norm1_, norm2_, norm3_;
  std::vector<torch::nn::Linear> ffn1_, ffn2_;
  torch::nn::Linear mask_embed_{nullptr}, class_head_{nullptr};
  torch::nn::Conv2d pixel_proj_{nullptr}, detail_proj_{nullptr};
};
TORCH_MODULE(MaskDecoder);

struct LossWeights {
  double bce = 1.0;
  double dice = 1.0;
  double focal = 2.0;
  double cf = 0.1;
  double cdcl = 0.5;
  double v_a = 1.0;
  double v_l = 1.0;
  double a_l = 1.0;

  void validate() const;
};

struct SegLossTerms {
  torch::Tensor bce, dice, focal, total;
};

double dice_smooth();
double focal_gamma();
double focal_alpha();

// Binary: logits [N, H, W], gt [N, H, W] with values in {0, 1}.
// Semantic: logits [N, K, H, W], gt [N, H, W] integer labels in [0, K).
// Dice is computed per mask and averaged.
SegLossTerms seg_loss(const torch::Tensor& logits, const torch::Tensor& gt, const LossWeights& w);

struct LossTerms {
  torch::Tensor seg;
  torch::Tensor cf;   // undefined when the component is off
  torch::Tensor v_a, v_l, a_l;
};

// L_seg + cf * L_cf + cdcl * (v_a L_va + v_l L_vl + a_l L_al); undefined terms count as 0.
torch::Tensor total_loss(const LossTerms& terms, const LossWeights& w);

}  // namespace icf::seg
