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

namespace icf::cf {

class DiffusionSchedule {
 public:
  explicit DiffusionSchedule(int num_steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

  int num_steps() const { return num_steps_; }
  // beta(t) and alpha_bar(t) for t in [0, num_steps]; beta(0) = 0, alpha_bar(0) = 1.
  double beta(int t) const;
  double alpha_bar(int t) const;
  // alpha_bar gathered for a [B] long tensor of steps.
  torch::Tensor alpha_bar(const torch::Tensor& t, torch::ScalarType dtype) const;

 private:
  int num_steps_;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

struct Diffused {
  torch::Tensor z_t;
  torch::Tensor noise;
};

// Closed-form marginal sqrt(ab) z + sqrt(1 - ab) eps. `t` is a scalar step
// or a [B] tensor of steps (one per leading row).
Diffused forward_diffuse(const torch::Tensor& z, int t, const DiffusionSchedule& schedule,
                         torch::Generator& gen);
Diffused forward_diffuse(const torch::Tensor& z, const torch::Tensor& t,
                         const DiffusionSchedule& schedule, const torch::Tensor& noise);

// Unit vector of r with its component along z removed; both [..., d]
// (applied row-wise). Rows whose residual falls below 1e-12 are redrawn
// from `gen` up to `max_retries` times before NumericalError.
torch::Tensor orthogonalize(const torch::Tensor& z, const torch::Tensor& r, torch::Generator& gen,
                            int max_retries = 8);

// sqrt(1 - ac) z_t + sqrt(ac) r_perp, exact at ac = 0 and ac = 1. `ac` is a
// double or a tensor broadcastable against the leading dims of z_t.
torch::Tensor mix_counterfactual(const torch::Tensor& z_t, const torch::Tensor& r_perp, double ac);
torch::Tensor mix_counterfactual(const torch::Tensor& z_t, const torch::Tensor& r_perp,
                                 const torch::Tensor& ac);

// ||z' - z||^2 + lambda_z (z' . z)^2 per sequence (flattened over all but
// the leading dim), averaged over the batch. 1-D inputs count as one sequence.
torch::Tensor ortho_loss(const torch::Tensor& z_prime, const torch::Tensor& z, double lambda_z);

struct DenoiserOptions {
  std::int64_t tokens = 8;
  std::int64_t dim = 128;
  std::int64_t cond_dim = 128;
  std::int64_t hidden = 256;
  std::int64_t time_dim = 64;
  int blocks = 4;
};

// epsilon-prediction network over the flattened token sequence.
class DenoiserImpl : public torch::nn::Module {
 public:
  explicit DenoiserImpl(DenoiserOptions options = {});

  // x [B, L, d], t [B] (long), cond [B, cond_dim] -> [B, L, d]
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& t, const torch::Tensor& cond);

  const DenoiserOptions& options() const { return options_; }

 private:
  DenoiserOptions options_;
  torch::nn::Linear in_{nullptr}, out_{nullptr}, time1_{nullptr}, time2_{nullptr}, cond_{nullptr};
  std::vector<torch::nn::LayerNorm> norms_;
  std::vector<torch::nn::Linear> fc1_, fc2_;
};
TORCH_MODULE(Denoiser);

torch::Tensor timestep_embedding(const torch::Tensor& t, std::int64_t dim);

// Reverse chain from step t to 0 with fixed variance beta_t. `stride` > 1
// skips steps using the deterministic closed-form jump between them.
// Throws NumericalError naming the step if a state turns non-finite.
torch::Tensor denoise(const torch::Tensor& z_t, int t, const torch::Tensor& cond, Denoiser& model,
                      const DiffusionSchedule& schedule, torch::Generator& gen, int stride = 1);

enum class CfSpace { kLatent, kFeature };

struct CounterfactualConfig {
  double alpha = 0.8;
  double alpha_low = 0.7;    // pool draws alpha*m, alpha*s from [low, high)
  double alpha_high = 0.8;
  int intervention_step = 200;
  int pool_size = 8;         // k^c
  int candidates_per_slot = 4;
  double lambda_z = 0.5;
  double lambda_ortho = 1.0;
  bool inter = true;
  bool intra = true;
  CfSpace space = CfSpace::kLatent;
  int reverse_stride = 1;

  // Throws ValidationError on an illegal combination.
  void validate(const DiffusionSchedule& schedule) const;
  // Legal bounds for the learnable m and s given alpha.
  double coeff_min() const { return alpha_low / alpha; }
  double coeff_max() const { return std::min(1.0, alpha_high / alpha); }
};

// Applies inter-sample mixing on whole sequences (coefficient a_inter [B])
// followed by intra-sample mixing per token (a_intra [B, L]). Mixing happens
// in normalized space and restores each unit's norm. Returns the mixed
// state and the effective alpha 1 - (1 - a_inter)(1 - mean a_intra) per row.
struct Mixed {
  torch::Tensor z_prime;
  torch::Tensor effective_alpha;
};
Mixed apply_mixing(const torch::Tensor& z_t, const torch::Tensor& a_inter,
                   const torch::Tensor& a_intra, torch::Generator& gen);

struct CfLossTerms {
  torch::Tensor noise_mse;  // E ||eps - eps_hat||^2, per token
  torch::Tensor ortho;      // ortho_loss on unit-normalized states
  torch::Tensor total;
};

// Counterfactual loss from a given prediction: mean over tokens of ||eps - eps_hat||^2
// plus lambda_ortho * ortho_loss on unit-normalized z'_t and z_t.
CfLossTerms cf_loss_from_prediction(const torch::Tensor& eps, const torch::Tensor& eps_hat,
                                    const torch::Tensor& z_t, const torch::Tensor& z_prime,
                                    double lambda_z, double lambda_ortho);

// Same, with the prediction eps_theta(z'_t, t, cond). z_t, z_prime, eps
// [B, L, d]; t [B].
CfLossTerms cf_loss_terms(const torch::Tensor& z_t, const torch::Tensor& z_prime,
                          const torch::Tensor& t, const torch::Tensor& eps, Denoiser& model,
                          const torch::Tensor& cond, double lambda_z, double lambda_ortho);

// Learnable coefficients m (one per training clip) and s (one per token
// position), squashed by a sigmoid and clamped into the configured band.
class MixingCoefficientsImpl : public torch::nn::Module {
 public:
  MixingCoefficientsImpl(std::int64_t clips, std::int64_t tokens, const CounterfactualConfig& cfg,
                         std::uint64_t seed);

  torch::Tensor m(const torch::Tensor& clip_index);  // [B] in (0, 1]
  torch::Tensor s();                                 // [L]
  void clamp_();

  torch::Tensor m_logits;
  torch::Tensor s_logits;

 private:
  double lo_, hi_;
};
TORCH_MODULE(MixingCoefficients);

// Full counterfactual loss: samples t in [1, s^d], noise and directions from `gen`.
// Mixing is disabled per axis according to cfg.inter / cfg.intra.
CfLossTerms cf_loss(const torch::Tensor& z, const torch::Tensor& clip_index, Denoiser& model,
                    MixingCoefficients& coeffs, const torch::Tensor& cond,
                    const DiffusionSchedule& schedule, const CounterfactualConfig& cfg,
                    torch::Generator& gen);

struct CounterfactualPool {
  torch::Tensor texts;         // [k, L, d]
  torch::Tensor alphas;        // [k]
  torch::Tensor similarities;  // [k], descending
  std::vector<std::int64_t> indices;
};

// Top-k candidates by cosine to z (flattened sequences), sorted descending
// with ties broken by candidate index. candidates [M, ...], z [...].
CounterfactualPool select_topk(const torch::Tensor& candidates, const torch::Tensor& z, int k,
                               const torch::Tensor& alphas = {});

// Draws cfg.candidates_per_slot * k^c counterfactuals per clip (forward
// diffusion to s^d, mixing with coefficients drawn from [low, high), reverse
// chain) and keeps the Top-k^c. z [B, L, d], cond [B, cond_dim].
std::vector<CounterfactualPool> generate_pools(const torch::Tensor& z, const torch::Tensor& cond,
                                               Denoiser& model, const DiffusionSchedule& schedule,
                                               const CounterfactualConfig& cfg,
                                               torch::Generator& gen);

}  // namespace icf::cf
