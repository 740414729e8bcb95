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
#include <string>
#include <vector>

#include <torch/torch.h>

namespace icf::text {

enum class Modality { kVisual = 0, kAudio = 1 };

// Frozen unit-norm concept embeddings standing in for a pretrained text
// tower. Entries are a buffer, never a parameter.
class ConceptCodebook {
 public:
  ConceptCodebook() = default;
  ConceptCodebook(torch::Tensor entries, std::vector<std::string> names, Modality modality);

  // 12 concept rows followed by `distractors` rows, orthonormalized from a
  // seeded Gaussian draw.
  static ConceptCodebook build(Modality modality, std::uint64_t seed, int dim = 128,
                               int distractors = 20);

  // Layout: "ICFCODEB", u32 version, u32 modality, u32 rows, u32 cols,
  // rows*cols little-endian float32 (row-major), then per row a u32 byte
  // length and the UTF-8 name.
  void save(const std::filesystem::path& path) const;
  static ConceptCodebook load(const std::filesystem::path& path);

  const torch::Tensor& entries() const { return entries_; }
  const std::vector<std::string>& names() const { return names_; }
  Modality modality() const { return modality_; }
  std::int64_t size() const { return entries_.size(0); }
  std::int64_t dim() const { return entries_.size(1); }

 private:
  torch::Tensor entries_;  // [N_e, d_t], float32
  std::vector<std::string> names_;
  Modality modality_ = Modality::kVisual;
};

// Frozen text-encoder stand-in: enc(l) = softmax(E l / temperature)^T E.
// tokens [..., d] -> [..., d].
torch::Tensor encode_tokens(const torch::Tensor& tokens, const ConceptCodebook& codebook,
                            double temperature);

struct InversionOptions {
  int k_tokens = 4;
  int steps = 200;
  double lr = 0.05;
  double encoder_temperature = 0.3;
  double diversity_weight = 5.0;
  double diversity_margin = 0.9;
  double init_noise = 0.01;
  std::uint64_t seed = 0;
  bool record_trace = false;
};

struct InversionResult {
  torch::Tensor tokens;      // [B, k, d]
  torch::Tensor similarity;  // [B], mean cosine of encoded tokens to the feature
  torch::Tensor trace;       // [steps + 1, B] when requested
};

// Mean cosine between encoded tokens and the feature direction; [B].
torch::Tensor inversion_similarity(const torch::Tensor& tokens, const torch::Tensor& features,
                                   const ConceptCodebook& codebook, double temperature);

// Full ascent objective (similarity minus diversity penalty), [B], and its
// analytic gradient with respect to the tokens. `directions` are unit rows.
torch::Tensor inversion_objective(const torch::Tensor& tokens, const torch::Tensor& directions,
                                  const ConceptCodebook& codebook, const InversionOptions& options);
torch::Tensor inversion_gradient(const torch::Tensor& tokens, const torch::Tensor& directions,
                                 const ConceptCodebook& codebook, const InversionOptions& options);

// Gradient ascent on the token matrix for each row of `features` ([d] or
// [B, d]). Runs without autograd. Throws ValidationError on a zero-norm
// feature row.
InversionResult invert_text(const torch::Tensor& features, const ConceptCodebook& codebook,
                            const InversionOptions& options);

// Softmax-weighted sum over every token of every granularity.
// tokens [..., N, d], logits [N] -> [..., d].
torch::Tensor fuse_texts(const torch::Tensor& tokens, const torch::Tensor& logits);
// Convenience form taking the three granularity blocks, each [k, d] or
// [T, k, d], and logits covering them in that order.
torch::Tensor fuse_texts(const torch::Tensor& lv, const torch::Tensor& ls, const torch::Tensor& lf,
                         const torch::Tensor& logits);

// Elementwise gate x * sigmoid(MLP(x)) with a 3-layer MLP.
class GateImpl : public torch::nn::Module {
 public:
  explicit GateImpl(std::int64_t dim);

  torch::Tensor gate_values(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x);

  // Pins the gate output to a constant (tests and ablations); negative
  // values restore the learned gate.
  void force(double value) { forced_ = value; }

 private:
  torch::nn::Sequential mlp_{nullptr};
  double forced_ = -1.0;
};
TORCH_MODULE(Gate);

struct ImplicitTextBundle {
  torch::Tensor lv;       // [B, k, d]
  torch::Tensor ls;       // [B, k, d]
  torch::Tensor lf;       // [B, T, k, d]
  torch::Tensor la;       // [B, k, d]
  torch::Tensor fused_v;  // [B, d]
  torch::Tensor fused_a;  // [B, d]
  torch::Tensor z;        // [B, 2k, d]
  torch::Tensor weights;  // softmax weights over the enabled visual tokens
};

struct TextLevels {
  bool video = true;
  bool segment = true;
  bool frame = true;
};

// Owns the fusion scores, the two gates and the shared projection.
class TextComposerImpl : public torch::nn::Module {
 public:
  TextComposerImpl(std::int64_t dim, int k_tokens, int num_frames);

  // Fills fused_v, fused_a, weights and z of a bundle whose token fields are
  // set. Disabled levels are dropped from the fusion.
  void compose(ImplicitTextBundle& bundle, const TextLevels& levels);

  // Gate both token sets, concatenate along tokens, then project.
  torch::Tensor gate_concat(const torch::Tensor& visual_tokens, const torch::Tensor& audio_tokens);

  torch::Tensor scores;  // [2k + T k] learnable fusion logits
  Gate gate_v{nullptr};
  Gate gate_a{nullptr};
  torch::nn::Linear proj{nullptr};

 private:
  int k_;
  int frames_;
};
TORCH_MODULE(TextComposer);

}  // namespace icf::text
