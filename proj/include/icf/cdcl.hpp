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

namespace icf::cdcl {

enum class ContrastMode { kDistribution, kPrototype, kFeature };

ContrastMode parse_contrast_mode(const std::string& name);
std::string contrast_mode_name(ContrastMode mode);

struct ContrastConfig {
  double tau = 1.0;  // kernel temperature
  double gamma = 0.1;
  double theta_pos = 0.85;
  double eps_reg = 1e-4;
  std::int64_t embed_dim = 64;
  ContrastMode mode = ContrastMode::kDistribution;

  void validate() const;
};

// Batched Gaussian summary of token sequences. mu [..., d], sigma [..., d, d],
// entropy [...]; `n` is the sequence length the summary was built from.
struct GaussianSummary {
  torch::Tensor mu;
  torch::Tensor sigma;
  torch::Tensor entropy;
  std::int64_t n = 0;
};

// seq [..., n, d] -> mean, biased (1/n) covariance + eps_reg I, entropy.
GaussianSummary gaussian_summary(const torch::Tensor& seq, double eps_reg);

// 0.5 log((2 pi e)^d det sigma) through a Cholesky log-determinant.
// sigma [..., d, d]; throws ValidationError if it is not symmetric.
torch::Tensor entropy(const torch::Tensor& sigma);

// Principal square root of symmetric PSD matrices [..., d, d] via eigh, with
// eigenvalues clamped below at `floor`. The backward pass uses the
// Daleckii-Krein form 1 / (sqrt(l_i) + sqrt(l_j)), which stays bounded at
// repeated eigenvalues.
torch::Tensor sym_sqrt(const torch::Tensor& a, double floor = 0.0);

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_b^1/2 S_a S_b^1/2)^1/2)
//   + gamma (H_a + H_b), broadcast over leading dims. Evaluated in float64 and
// returned in the dtype of a.mu. `floor` is the eigenvalue clamp for S_b^1/2
// (its square is used for the inner root).
torch::Tensor distance(const GaussianSummary& a, const GaussianSummary& b, double gamma,
                       double floor = 0.0);

// Positive mask [B, B]: j in P(i) iff cos(la_i, la_j) >= theta (always i in P(i)).
// la [B, d] (or [B, L, d], flattened).
torch::Tensor partition_by_audio_anchor(const torch::Tensor& la, double theta_pos);

// w_k = sqrt(1 - alpha_k) / sum_j sqrt(1 - alpha_j) over the last dim.
// Throws ValidationError if every alpha in a row equals 1.
torch::Tensor counterfactual_weights(const torch::Tensor& alphas);

// Pairwise distances between sequence sets under the configured mode,
// broadcast over leading dims: x [..., n, d], y [..., m, d] -> [R, ...].
// R = 1 except in feature mode, where every anchor row contributes its own
// distance (to the aligned row of y when n == m, else to y's mean).
torch::Tensor pairwise_distance(const torch::Tensor& x, const torch::Tensor& y,
                                const ContrastConfig& cfg);

// -mean_i log(sum_{P(i)} exp(-D/tau) / sum_all exp(-D/tau)).
// dist [R, B, B] (or [B, B]), positive [B, B] bool.
torch::Tensor anchored_infonce(const torch::Tensor& dist, const torch::Tensor& positive, double tau);

// -mean_i log(e_i / (e_i + sum_k w_ik exp(-Dneg_ik / tau))), e_i = exp(-Dpos_i / tau).
// pos [R, B], neg [R, B, K], weights [B, K].
torch::Tensor weighted_infonce(const torch::Tensor& pos, const torch::Tensor& neg,
                               const torch::Tensor& weights, double tau);

// Visual-audio loss. visual [B, T, d_e], audio [B, T', d_e] (embedded
// sequences); positive mask from partition_by_audio_anchor.
torch::Tensor loss_v_a(const torch::Tensor& visual, const torch::Tensor& audio,
                       const torch::Tensor& positive, const ContrastConfig& cfg);

// Modality-text loss against the factual text and that item's counterfactual
// pool only. anchor [B, n, d_e], z [B, L, d_e], pool [B, K, L, d_e], alphas [B, K].
torch::Tensor loss_x_l(const torch::Tensor& anchor, const torch::Tensor& z,
                       const torch::Tensor& pool, const torch::Tensor& alphas,
                       const ContrastConfig& cfg);

inline torch::Tensor loss_v_l(const torch::Tensor& visual, const torch::Tensor& z,
                              const torch::Tensor& pool, const torch::Tensor& alphas,
                              const ContrastConfig& cfg) {
  return loss_x_l(visual, z, pool, alphas, cfg);
}
inline torch::Tensor loss_a_l(const torch::Tensor& audio, const torch::Tensor& z,
                              const torch::Tensor& pool, const torch::Tensor& alphas,
                              const ContrastConfig& cfg) {
  return loss_x_l(audio, z, pool, alphas, cfg);
}

// Learnable projections of visual descriptors, audio rows and text tokens
// into the shared d_e space.
class ContrastHeadsImpl : public torch::nn::Module {
 public:
  ContrastHeadsImpl(std::int64_t visual_dim, std::int64_t audio_dim, std::int64_t text_dim,
                    std::int64_t embed_dim);

  torch::Tensor visual(const torch::Tensor& x) { return visual_->forward(x); }
  torch::Tensor audio(const torch::Tensor& x) { return audio_->forward(x); }
  torch::Tensor text(const torch::Tensor& x) { return text_->forward(x); }

 private:
  torch::nn::Linear visual_{nullptr}, audio_{nullptr}, text_{nullptr};
};
TORCH_MODULE(ContrastHeads);

struct ContrastPairs {
  bool v_a = true;
  bool v_l = true;
  bool a_l = true;
};

struct ContrastInputs {
  torch::Tensor visual;      // [B, T, C_v] pooled per-frame descriptors
  torch::Tensor audio;       // [B, T, C_a] audio rows
  torch::Tensor la;          // [B, k, d_t] audio implicit text (anchor)
  torch::Tensor z;           // [B, L, d_t]
  torch::Tensor pool;        // [B, K, L, d_t], undefined when no pool
  torch::Tensor pool_alpha;  // [B, K]
};

struct ContrastTerms {
  torch::Tensor v_a, v_l, a_l;  // undefined when the pair is off or skipped
};

// Embeds the inputs and evaluates the enabled pairs. v<->a needs B >= 2 and
// the text pairs need a pool; pairs that cannot run are left undefined.
ContrastTerms contrast_losses(const ContrastInputs& in, ContrastHeads& heads,
                              const ContrastConfig& cfg, const ContrastPairs& pairs);

}  // namespace icf::cdcl
