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

#include <torch/torch.h>

#include "icf/cdcl.hpp"
#include "icf/config.hpp"
#include "icf/counterfactual.hpp"
#include "icf/dataset.hpp"
#include "icf/encoders.hpp"
#include "icf/implicit_text.hpp"
#include "icf/seg_decoder.hpp"
#include "icf/temporal_context.hpp"

namespace icf {

struct DataShape {
  std::int64_t train_clips = 0;
  std::int64_t classes = 1;
  int frames = 5;
  int height = 224;
  int width = 224;
};

struct Encoded {
  temporal::TemporalOutput context;
  torch::Tensor pooled;  // [B, T, D]
  torch::Tensor audio;   // [B*T, D]
  std::int64_t clips = 0;
  std::int64_t frames = 0;
};

// Every parameter block of the framework. All blocks exist regardless of
// the toggles so checkpoints share one layout; disabled blocks simply never
// run and never receive gradients.
class IcfModelImpl : public torch::nn::Module {
 public:
  IcfModelImpl(const ExperimentConfig& cfg, const DataShape& shape);

  Encoded encode(const data::Batch& batch);
  // Inference path: encoders, temporal context, decoder.
  torch::Tensor infer(const data::Batch& batch);

  // Implicit texts for the encoded clips. Inversion runs without autograd;
  // the composer's fusion weights, gates and projection stay differentiable.
  text::ImplicitTextBundle implicit_text(const Encoded& enc, std::uint64_t seed);
  // Composite text with the audio tokens of clip `sources[i]` paired with
  // the visual tokens of clip i.
  torch::Tensor recompose(const text::ImplicitTextBundle& bundle, const torch::Tensor& sources);

  const ExperimentConfig& config() const { return cfg_; }
  const DataShape& shape() const { return shape_; }
  const cf::DiffusionSchedule& schedule() const { return schedule_; }
  const text::ConceptCodebook& visual_codebook() const { return visual_codebook_; }
  const text::ConceptCodebook& audio_codebook() const { return audio_codebook_; }

  enc::VisualEncoder visual{nullptr};
  enc::AudioEncoder audio{nullptr};
  temporal::TemporalContext context{nullptr};
  seg::MaskDecoder decoder{nullptr};
  text::TextComposer composer{nullptr};
  cf::Denoiser denoiser{nullptr};
  cf::MixingCoefficients coeffs{nullptr};
  cdcl::ContrastHeads heads{nullptr};

 private:
  ExperimentConfig cfg_;
  DataShape shape_;
  cf::DiffusionSchedule schedule_;
  text::ConceptCodebook visual_codebook_;
  text::ConceptCodebook audio_codebook_;
};
TORCH_MODULE(IcfModel);

}  // namespace icf
