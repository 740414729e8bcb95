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

#include "icf/model.hpp"

#include "icf/common.hpp"

namespace icf {

IcfModelImpl::IcfModelImpl(const ExperimentConfig& cfg, const DataShape& shape)
    : cfg_(cfg), shape_(shape), schedule_(cfg.diffusion_steps) {
  cfg_.validate();
  const auto& m = cfg.model;
  const std::int64_t d = m.feature_dim;

  enc::VisualEncoderOptions vo;
  vo.channels = m.visual_channels;
  vo.pooled_dim = m.feature_dim;
  vo.detail_channels = m.detail_channels;
  visual = register_module("visual", enc::VisualEncoder(vo));

  enc::AudioEncoderOptions ao;
  ao.embed_dim = m.feature_dim;
  audio = register_module("audio", enc::AudioEncoder(ao));

  const std::int64_t h16 = shape.height / 16, w16 = shape.width / 16;
  context = register_module(
      "context", temporal::TemporalContext(std::vector<std::int64_t>{h16 * w16, (h16 / 2) * (w16 / 2)},
                                           cfg.granularity));

  seg::MaskDecoderOptions dopt;
  dopt.scale_channels.assign(m.visual_channels.begin(), m.visual_channels.end());
  dopt.detail_channels = m.detail_channels;
  dopt.audio_dim = d;
  dopt.text_dim = d;
  dopt.queries = m.queries;
  dopt.query_dim = m.query_dim;
  dopt.mask_dim = m.mask_dim;
  dopt.heads = m.heads;
  dopt.layers = m.decoder_layers;
  dopt.classes = shape.classes;
  decoder = register_module("decoder", seg::MaskDecoder(dopt));

  const int k = cfg.text.k_tokens;
  composer = register_module("composer", text::TextComposer(d, k, shape.frames));

  cf::DenoiserOptions nopt;
  nopt.tokens = 2 * k;
  nopt.dim = d;
  nopt.cond_dim = d;
  nopt.hidden = m.denoiser_hidden;
  nopt.blocks = m.denoiser_blocks;
  denoiser = register_module("denoiser", cf::Denoiser(nopt));
  coeffs = register_module("coeffs", cf::MixingCoefficients(std::max<std::int64_t>(shape.train_clips, 1), 2 * k,
                                                            cfg.counterfactual, derive_seed(cfg.seed, 0xc0ef)));
  heads = register_module("heads", cdcl::ContrastHeads(d, d, d, cfg.contrast.embed_dim));

  visual_codebook_ = text::ConceptCodebook::build(text::Modality::kVisual, cfg.text.codebook_seed, m.feature_dim,
                                                  cfg.text.distractors);
  audio_codebook_ = text::ConceptCodebook::build(text::Modality::kAudio, cfg.text.codebook_seed + 1,
                                                 m.feature_dim, cfg.text.distractors);
}

Encoded IcfModelImpl::encode(const data::Batch& batch) {
  if (batch.frames_per_clip != shape_.frames) {
    throw ValidationError("harness", "batch has " + std::to_string(batch.frames_per_clip) +
                                         " frames per clip, model expects " + std::to_string(shape_.frames));
  }
  Encoded e;
  e.clips = batch.clips;
  e.frames = batch.frames_per_clip;
  auto stack = visual->forward(batch.frames);
  e.pooled = stack.pooled.view({e.clips, e.frames, -1});
  e.audio = audio->forward(batch.mel);
  e.context = context->forward(stack, e.frames);
  return e;
}

torch::Tensor IcfModelImpl::infer(const data::Batch& batch) {
  auto e = encode(batch);
  return decoder->forward(e.context.enriched, e.audio).logits;
}

text::ImplicitTextBundle IcfModelImpl::implicit_text(const Encoded& enc, std::uint64_t seed) {
  const auto b = enc.clips, t = enc.frames;
  const auto pooled = enc.pooled.detach();
  const int w = cfg_.granularity.window_size(static_cast<int>(t));
  const auto video = pooled.mean(1);
  const auto segment = pooled.slice(1, t - w).mean(1);
  const auto rows = torch::cat({video, segment, pooled.reshape({b * t, -1})}, 0);

  text::InversionOptions opt;
  opt.k_tokens = cfg_.text.k_tokens;
  opt.steps = cfg_.text.inversion_steps;
  opt.lr = cfg_.text.inversion_lr;
  opt.encoder_temperature = cfg_.text.encoder_temperature;
  opt.seed = derive_seed(seed, 1);
  const auto vis = text::invert_text(rows, visual_codebook_, opt).tokens;
  opt.seed = derive_seed(seed, 2);
  const auto aud = text::invert_text(enc.audio.detach().view({b, t, -1}).mean(1), audio_codebook_, opt).tokens;

  text::ImplicitTextBundle bundle;
  bundle.lv = vis.slice(0, 0, b);
  bundle.ls = vis.slice(0, b, 2 * b);
  bundle.lf = vis.slice(0, 2 * b).view({b, t, opt.k_tokens, -1});
  bundle.la = aud;
  composer->compose(bundle, {cfg_.granularity.video, cfg_.granularity.segment, cfg_.granularity.frame});
  return bundle;
}

torch::Tensor IcfModelImpl::recompose(const text::ImplicitTextBundle& bundle, const torch::Tensor& sources) {
  auto swapped = bundle;
  swapped.la = bundle.la.index_select(0, sources);
  composer->compose(swapped, {cfg_.granularity.video, cfg_.granularity.segment, cfg_.granularity.frame});
  return swapped.z;
}

}  // namespace icf
