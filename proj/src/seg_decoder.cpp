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

#include "icf/seg_decoder.hpp"

#include "icf/common.hpp"

namespace icf::seg {
namespace {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

ValidationError invalid(const std::string& what) { return ValidationError("seg_decoder", what); }

torch::Tensor film(const torch::Tensor& x, const torch::Tensor& gamma, const torch::Tensor& beta) {
  return x * (1 + gamma.unsqueeze(-1).unsqueeze(-1)) + beta.unsqueeze(-1).unsqueeze(-1);
}

torch::Tensor upsample_to(const torch::Tensor& x, std::int64_t h, std::int64_t w) {
  if (x.size(-2) == h && x.size(-1) == w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

MaskDecoderImpl::MaskDecoderImpl(MaskDecoderOptions o) : options_(std::move(o)) {
  const auto& opt = options_;
  if (opt.scale_channels.empty()) throw invalid("decoder needs at least one scale");
  if (opt.classes < 1 || opt.queries < 1 || opt.layers < 1) throw invalid("bad decoder sizes");
  const auto d = opt.query_dim;
  for (std::size_t i = 0; i < opt.scale_channels.size(); ++i) {
    const auto n = std::to_string(i);
    lateral_.push_back(register_module("lateral" + n, nn::Conv2d(nn::Conv2dOptions(opt.scale_channels[i], d, 1))));
    if (i + 1 < opt.scale_channels.size()) {
      smooth_.push_back(register_module("smooth" + n, nn::Conv2d(nn::Conv2dOptions(d, d, 3).padding(1))));
    }
  }
  film_ = register_module("film", nn::Linear(opt.audio_dim, 2 * d));
  audio_query_ = register_module("audio_query", nn::Linear(opt.audio_dim, d));
  if (opt.text_dim > 0) text_proj_ = register_module("text_proj", nn::Linear(opt.text_dim, d));
  query_embed_ = register_parameter("query_embed", torch::randn({opt.queries, d}) * 0.02);
  for (int l = 0; l < opt.layers; ++l) {
    const auto n = std::to_string(l);
    cross_.push_back(register_module("cross" + n, nn::MultiheadAttention(nn::MultiheadAttentionOptions(d, opt.heads))));
    self_.push_back(register_module("self" + n, nn::MultiheadAttention(nn::MultiheadAttentionOptions(d, opt.heads))));
    norm1_.push_back(register_module("norm1_" + n, nn::LayerNorm(nn::LayerNormOptions({d}))));
    norm2_.push_back(register_module("norm2_" + n, nn::LayerNorm(nn::LayerNormOptions({d}))));
    norm3_.push_back(register_module("norm3_" + n, nn::LayerNorm(nn::LayerNormOptions({d}))));
    ffn1_.push_back(register_module("ffn1_" + n, nn::Linear(d, 2 * d)));
    ffn2_.push_back(register_module("ffn2_" + n, nn::Linear(2 * d, d)));
  }
  mask_embed_ = register_module("mask_embed", nn::Linear(d, opt.mask_dim));
  class_head_ = register_module("class_head", nn::Linear(d, opt.classes));
  pixel_proj_ = register_module("pixel_proj", nn::Conv2d(nn::Conv2dOptions(d, opt.mask_dim, 1)));
  detail_proj_ = register_module("detail_proj", nn::Conv2d(nn::Conv2dOptions(opt.detail_channels, opt.mask_dim, 1)));
}

MaskPrediction MaskDecoderImpl::forward(const enc::VisualFeatureStack& stack, const torch::Tensor& audio,
                                        const torch::Tensor& text, std::int64_t frames_per_clip) {
  const auto& opt = options_;
  if (stack.scales.size() != lateral_.size()) {
    throw invalid("expected " + std::to_string(lateral_.size()) + " scales, got " +
                  std::to_string(stack.scales.size()));
  }
  const auto n = stack.scales[0].size(0);
  for (std::size_t i = 0; i < stack.scales.size(); ++i) {
    if (stack.scales[i].dim() != 4 || stack.scales[i].size(0) != n ||
        stack.scales[i].size(1) != opt.scale_channels[i]) {
      throw invalid("scale " + std::to_string(i) + " has the wrong shape");
    }
  }
  if (!stack.detail.defined() || stack.detail.size(0) != n || stack.detail.size(1) != opt.detail_channels) {
    throw invalid("detail features have the wrong shape");
  }
  if (audio.dim() != 2 || audio.size(0) != n || audio.size(1) != opt.audio_dim) {
    throw invalid("audio features must be [N, " + std::to_string(opt.audio_dim) + "]");
  }

  const auto gb = film_(audio).chunk(2, 1);
  const int last = static_cast<int>(lateral_.size()) - 1;
  auto p = film(lateral_[last](stack.scales[last]), gb[0], gb[1]);
  const auto coarse = p;
  for (int i = last - 1; i >= 0; --i) {
    const auto lat = lateral_[i](stack.scales[i]);
    p = lat + upsample_to(p, lat.size(2), lat.size(3));
    p = torch::relu(smooth_[i](p));
  }
  p = film(p, gb[0], gb[1]);

  // Memory: coarsest map tokens, then projected text tokens.
  auto memory = coarse.flatten(2).permute({2, 0, 1});  // [hw, N, d]
  if (text.defined()) {
    if (!text_proj_) throw invalid("decoder was built without a text cue");
    if (text.dim() != 3 || frames_per_clip < 1 || text.size(0) * frames_per_clip != n) {
      throw invalid("text cue must be [B, L, d] with B * frames_per_clip = N");
    }
    const auto t = text_proj_(text).repeat_interleave(frames_per_clip, 0);  // [N, L, d]
    memory = torch::cat({memory, t.permute({1, 0, 2})}, 0);
  }

  auto q = (query_embed_.unsqueeze(1) + audio_query_(audio).unsqueeze(0));  // [N_q, N, d]
  for (std::size_t l = 0; l < cross_.size(); ++l) {
    q = norm1_[l](q + std::get<0>(cross_[l](q, memory, memory)));
    q = norm2_[l](q + std::get<0>(self_[l](q, q, q)));
    q = norm3_[l](q + ffn2_[l](torch::relu(ffn1_[l](q))));
  }
  q = q.permute({1, 0, 2});  // [N, N_q, d]

  const auto h = stack.detail.size(2), w = stack.detail.size(3);
  const auto pixel = upsample_to(pixel_proj_(p), h, w) + detail_proj_(stack.detail);
  const auto masks = torch::einsum("nqc,nchw->nqhw", {mask_embed_(q), pixel});
  const auto weights = torch::softmax(class_head_(q), 1);  // over queries, per class
  auto logits = torch::einsum("nqk,nqhw->nkhw", {weights, masks});
  if (opt.classes == 1) logits = logits.squeeze(1);
  return {logits, q};
}

void LossWeights::validate() const {
  for (double v : {bce, dice, focal, cf, cdcl, v_a, v_l, a_l}) {
    if (!(v >= 0.0)) throw invalid("loss weights must be non-negative");
  }
  if (bce + dice + focal <= 0.0) throw invalid("at least one segmentation weight must be positive");
}

double dice_smooth() { return 1.0; }
double focal_gamma() { return 2.0; }
double focal_alpha() { return 0.25; }

SegLossTerms seg_loss(const torch::Tensor& logits, const torch::Tensor& gt, const LossWeights& w) {
  torch::Tensor target;
  if (logits.dim() == gt.dim()) {
    if (logits.sizes() != gt.sizes()) throw invalid("prediction and ground truth shapes differ");
    if (((gt != 0) & (gt != 1)).any().item<bool>()) throw invalid("binary ground truth must be 0 or 1");
    target = gt.to(logits.scalar_type()).unsqueeze(1);
  } else if (logits.dim() == gt.dim() + 1) {
    const auto k = logits.size(1);
    if (logits.size(0) != gt.size(0) || logits.sizes().slice(2) != gt.sizes().slice(1)) {
      throw invalid("prediction and ground truth shapes differ");
    }
    if (gt.is_floating_point() && (gt != gt.round()).any().item<bool>()) {
      throw invalid("semantic labels must be integers");
    }
    if ((gt < 0).any().item<bool>() || (gt >= k).any().item<bool>()) {
      throw invalid("semantic label outside [0, " + std::to_string(k) + ")");
    }
    target = F::one_hot(gt.to(torch::kLong), k).movedim(-1, 1).to(logits.scalar_type());
  } else {
    throw invalid("prediction and ground truth ranks do not match");
  }
  const auto x = logits.dim() == gt.dim() ? logits.unsqueeze(1) : logits;  // [N, K, ...]

  SegLossTerms out;
  const auto ce = F::binary_cross_entropy_with_logits(
      x, target, F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kNone));
  out.bce = ce.mean();

  const auto p = torch::sigmoid(x);
  const auto inter = (p * target).flatten(2).sum(-1);
  const auto sums = p.flatten(2).sum(-1) + target.flatten(2).sum(-1);
  out.dice = (1.0 - (2.0 * inter + dice_smooth()) / (sums + dice_smooth())).mean();

  const auto p_t = p * target + (1 - p) * (1 - target);
  const auto alpha_t = focal_alpha() * target + (1 - focal_alpha()) * (1 - target);
  out.focal = (alpha_t * (1 - p_t).pow(focal_gamma()) * ce).mean();

  out.total = w.bce * out.bce + w.dice * out.dice + w.focal * out.focal;
  return out;
}

torch::Tensor total_loss(const LossTerms& terms, const LossWeights& w) {
  auto total = terms.seg;
  if (terms.cf.defined()) total = total + w.cf * terms.cf;
  torch::Tensor contrast;
  auto add = [&](const torch::Tensor& t, double weight) {
    if (!t.defined()) return;
    contrast = contrast.defined() ? contrast + weight * t : weight * t;
  };
  add(terms.v_a, w.v_a);
  add(terms.v_l, w.v_l);
  add(terms.a_l, w.a_l);
  if (contrast.defined()) total = total + w.cdcl * contrast;
  return total;
}

}  // namespace icf::seg
