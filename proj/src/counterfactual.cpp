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

#include "icf/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "icf/common.hpp"
#include "icf/tensor_util.hpp"

namespace icf::cf {
namespace {

ValidationError invalid(const std::string& what) { return ValidationError("counterfactual", what); }

// Reshapes a coefficient tensor so it broadcasts over the trailing dims.
torch::Tensor expand_coeff(const torch::Tensor& ac, const torch::Tensor& like) {
  auto c = ac.to(like.scalar_type());
  while (c.dim() < like.dim()) c = c.unsqueeze(-1);
  return c;
}

}  // namespace

DiffusionSchedule::DiffusionSchedule(int num_steps, double beta_start, double beta_end)
    : num_steps_(num_steps) {
  if (num_steps < 1) throw invalid("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw invalid("betas must satisfy 0 < start <= end < 1");
  }
  betas_.assign(num_steps + 1, 0.0);
  alpha_bars_.assign(num_steps + 1, 1.0);
  for (int t = 1; t <= num_steps; ++t) {
    const double frac = num_steps == 1 ? 0.0 : static_cast<double>(t - 1) / (num_steps - 1);
    betas_[t] = beta_start + (beta_end - beta_start) * frac;
    alpha_bars_[t] = alpha_bars_[t - 1] * (1.0 - betas_[t]);
  }
}

double DiffusionSchedule::beta(int t) const {
  if (t < 0 || t > num_steps_) throw invalid("step " + std::to_string(t) + " out of range");
  return betas_[t];
}

double DiffusionSchedule::alpha_bar(int t) const {
  if (t < 0 || t > num_steps_) throw invalid("step " + std::to_string(t) + " out of range");
  return alpha_bars_[t];
}

torch::Tensor DiffusionSchedule::alpha_bar(const torch::Tensor& t, torch::ScalarType dtype) const {
  if (t.numel() > 0 && (t.min().item<std::int64_t>() < 0 || t.max().item<std::int64_t>() > num_steps_)) {
    throw invalid("step tensor out of range");
  }
  auto table = torch::tensor(alpha_bars_, torch::kFloat64);
  return table.index_select(0, t.to(torch::kLong).reshape(-1)).reshape(t.sizes()).to(dtype);
}

Diffused forward_diffuse(const torch::Tensor& z, int t, const DiffusionSchedule& schedule,
                         torch::Generator& gen) {
  const double ab = schedule.alpha_bar(t);  // validates t
  counters().forward_diffusions++;
  auto noise = torch::randn(z.sizes(), gen, z.options().requires_grad(false));
  if (t == 0) return {z.clone(), noise};
  return {std::sqrt(ab) * z + std::sqrt(1.0 - ab) * noise, noise};
}

Diffused forward_diffuse(const torch::Tensor& z, const torch::Tensor& t,
                         const DiffusionSchedule& schedule, const torch::Tensor& noise) {
  if (t.dim() != 1 || t.size(0) != z.size(0)) throw invalid("step tensor must be [B]");
  counters().forward_diffusions++;
  const auto ab = expand_coeff(schedule.alpha_bar(t, z.scalar_type()), z);
  return {torch::sqrt(ab) * z + torch::sqrt(1.0 - ab) * noise, noise};
}

torch::Tensor orthogonalize(const torch::Tensor& z, const torch::Tensor& r, torch::Generator& gen,
                            int max_retries) {
  if (z.sizes() != r.sizes()) throw invalid("orthogonalize: z and r shapes differ");
  const auto zn = z.norm(2, -1, true);
  if ((zn <= 0).any().item<bool>()) throw invalid("orthogonalize: zero-norm z");
  const auto zh = z / zn;
  auto project = [&](const torch::Tensor& v) {
    auto res = v - (v * zh).sum(-1, true) * zh;
    return res - (res * zh).sum(-1, true) * zh;  // second pass removes rounding residue
  };
  auto res = project(r);
  for (int attempt = 0;; ++attempt) {
    const auto small = res.norm(2, -1, true) < 1e-12;
    if (!small.any().item<bool>()) break;
    if (attempt >= max_retries) {
      throw NumericalError("counterfactual", "could not draw a direction orthogonal to z");
    }
    auto fresh = project(torch::randn(r.sizes(), gen, r.options()));
    res = torch::where(small, fresh, res);
  }
  return res / res.norm(2, -1, true);
}

torch::Tensor mix_counterfactual(const torch::Tensor& z_t, const torch::Tensor& r_perp, double ac) {
  if (!(ac >= 0.0 && ac <= 1.0)) throw invalid("alpha*c outside [0, 1]");
  if (ac == 0.0) return z_t.clone();
  if (ac == 1.0) return r_perp.clone();
  return std::sqrt(1.0 - ac) * z_t + std::sqrt(ac) * r_perp;
}

torch::Tensor mix_counterfactual(const torch::Tensor& z_t, const torch::Tensor& r_perp,
                                 const torch::Tensor& ac) {
  if (ac.numel() > 0 && ((ac < 0).any().item<bool>() || (ac > 1).any().item<bool>())) {
    throw invalid("alpha*c outside [0, 1]");
  }
  const auto c = expand_coeff(ac, z_t);
  const auto inner = c.clamp(1e-12, 1.0 - 1e-12);
  auto mixed = torch::sqrt(1.0 - inner) * z_t + torch::sqrt(inner) * r_perp;
  mixed = torch::where(c == 0, z_t, mixed);
  return torch::where(c == 1, r_perp, mixed);
}

torch::Tensor ortho_loss(const torch::Tensor& z_prime, const torch::Tensor& z, double lambda_z) {
  if (z_prime.sizes() != z.sizes()) throw invalid("ortho_loss shapes differ");
  const auto a = z_prime.dim() <= 1 ? z_prime.reshape({1, -1}) : z_prime.flatten(1);
  const auto b = z.dim() <= 1 ? z.reshape({1, -1}) : z.flatten(1);
  const auto dot = (a * b).sum(1);
  return ((a - b).pow(2).sum(1) + lambda_z * dot.pow(2)).mean();
}

torch::Tensor timestep_embedding(const torch::Tensor& t, std::int64_t dim) {
  const auto half = dim / 2;
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat64) / half);
  auto args = t.to(torch::kFloat64).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::sin(args), torch::cos(args)}, 1);
}

DenoiserImpl::DenoiserImpl(DenoiserOptions o) : options_(o) {
  namespace nn = torch::nn;
  const auto flat = o.tokens * o.dim;
  in_ = register_module("in", nn::Linear(flat, o.hidden));
  out_ = register_module("out", nn::Linear(o.hidden, flat));
  time1_ = register_module("time1", nn::Linear(o.time_dim, o.hidden));
  time2_ = register_module("time2", nn::Linear(o.hidden, o.hidden));
  cond_ = register_module("cond", nn::Linear(o.cond_dim, o.hidden));
  for (int i = 0; i < o.blocks; ++i) {
    const auto n = std::to_string(i);
    norms_.push_back(register_module("norm" + n, nn::LayerNorm(nn::LayerNormOptions({o.hidden}))));
    fc1_.push_back(register_module("fc1_" + n, nn::Linear(o.hidden, o.hidden)));
    fc2_.push_back(register_module("fc2_" + n, nn::Linear(o.hidden, o.hidden)));
  }
}

torch::Tensor DenoiserImpl::forward(const torch::Tensor& x, const torch::Tensor& t,
                                    const torch::Tensor& cond) {
  if (x.dim() != 3 || x.size(1) != options_.tokens || x.size(2) != options_.dim) {
    throw invalid("denoiser expects [B, tokens, dim] input");
  }
  if (cond.dim() != 2 || cond.size(0) != x.size(0) || cond.size(1) != options_.cond_dim) {
    throw invalid("denoiser condition has the wrong shape");
  }
  const auto temb = timestep_embedding(t, options_.time_dim).to(x.scalar_type());
  auto h = in_(x.flatten(1)) + time2_(torch::silu(time1_(temb))) + cond_(cond);
  for (std::size_t i = 0; i < fc1_.size(); ++i) {
    h = h + fc2_[i](torch::silu(fc1_[i](norms_[i](h))));
  }
  return out_(torch::silu(h)).view(x.sizes());
}

torch::Tensor denoise(const torch::Tensor& z_t, int t, const torch::Tensor& cond, Denoiser& model,
                      const DiffusionSchedule& schedule, torch::Generator& gen, int stride) {
  schedule.alpha_bar(t);
  if (stride < 1) throw invalid("reverse stride must be >= 1");
  counters().reverse_chains++;
  torch::NoGradGuard no_grad;
  auto x = z_t.detach().clone();
  const auto b = x.size(0);
  while (t > 0) {
    const auto steps = torch::full({b}, t, torch::kLong);
    const auto eps = model->forward(x, steps, cond);
    const int next = std::max(0, t - stride);
    if (stride == 1) {
      const double beta = schedule.beta(t);
      const double ab = schedule.alpha_bar(t);
      x = (x - beta / std::sqrt(1.0 - ab) * eps) / std::sqrt(1.0 - beta);
      if (t > 1) x = x + std::sqrt(beta) * torch::randn(x.sizes(), gen, x.options());
    } else {
      const double ab = schedule.alpha_bar(t), ab_next = schedule.alpha_bar(next);
      const auto x0 = (x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
      x = std::sqrt(ab_next) * x0 + std::sqrt(1.0 - ab_next) * eps;
    }
    if (!torch::isfinite(x).all().item<bool>()) {
      throw NumericalError("counterfactual", "non-finite state at reverse step " + std::to_string(t));
    }
    t = next;
  }
  return x;
}

void CounterfactualConfig::validate(const DiffusionSchedule& schedule) const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw invalid("alpha must lie in (0, 1]");
  if (!(alpha_low >= 0.0 && alpha_low <= alpha_high && alpha_high <= alpha + 1e-12)) {
    throw invalid("coefficient band must satisfy 0 <= low <= high <= alpha");
  }
  if (intervention_step < 1 || intervention_step >= schedule.num_steps()) {
    throw invalid("intervention step must lie in [1, num_steps)");
  }
  if (pool_size < 1 || candidates_per_slot < 1) throw invalid("pool sizes must be positive");
  if (lambda_z < 0.0 || lambda_ortho < 0.0) throw invalid("loss weights must be non-negative");
  if (reverse_stride < 1) throw invalid("reverse stride must be >= 1");
}

Mixed apply_mixing(const torch::Tensor& z_t, const torch::Tensor& a_inter,
                   const torch::Tensor& a_intra, torch::Generator& gen) {
  if (z_t.dim() != 3) throw invalid("apply_mixing expects [B, L, d]");
  const auto b = z_t.size(0);
  auto flat = z_t.flatten(1);
  auto n = flat.norm(2, 1, true);
  auto rp = orthogonalize(flat, torch::randn(flat.sizes(), gen, flat.options().requires_grad(false)), gen);
  auto z1 = (n * mix_counterfactual(flat / n, rp, a_inter)).view(z_t.sizes());

  auto tn = z1.norm(2, -1, true);
  auto rt = orthogonalize(z1, torch::randn(z1.sizes(), gen, z1.options().requires_grad(false)), gen);
  auto z2 = tn * mix_counterfactual(z1 / tn, rt, a_intra);
  const auto eff = 1.0 - (1.0 - a_inter.reshape({b})) * (1.0 - a_intra.reshape({b, -1}).mean(1));
  return {z2, eff};
}

CfLossTerms cf_loss_from_prediction(const torch::Tensor& eps, const torch::Tensor& eps_hat,
                                    const torch::Tensor& z_t, const torch::Tensor& z_prime,
                                    double lambda_z, double lambda_ortho) {
  CfLossTerms out;
  out.noise_mse = (eps - eps_hat).pow(2).sum(-1).mean();
  auto unit = [](const torch::Tensor& x) {
    const auto f = x.flatten(1);
    return f / f.norm(2, 1, true).clamp_min(1e-12);
  };
  out.ortho = ortho_loss(unit(z_prime), unit(z_t), lambda_z);
  out.total = out.noise_mse + lambda_ortho * out.ortho;
  return out;
}

CfLossTerms cf_loss_terms(const torch::Tensor& z_t, const torch::Tensor& z_prime,
                          const torch::Tensor& t, const torch::Tensor& eps, Denoiser& model,
                          const torch::Tensor& cond, double lambda_z, double lambda_ortho) {
  return cf_loss_from_prediction(eps, model->forward(z_prime, t, cond), z_t, z_prime, lambda_z,
                                 lambda_ortho);
}

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

MixingCoefficientsImpl::MixingCoefficientsImpl(std::int64_t clips, std::int64_t tokens,
                                               const CounterfactualConfig& cfg, std::uint64_t seed)
    : lo_(std::clamp(cfg.coeff_min(), 1e-4, 1.0 - 1e-4)),
      hi_(std::clamp(cfg.coeff_max(), 1e-4, 1.0 - 1e-4)) {
  auto gen = make_generator(seed);
  auto draw = [&](std::int64_t n) {
    auto u = torch::rand({n}, gen, torch::kFloat64) * (hi_ - lo_) + lo_;
    return torch::log(u / (1.0 - u)).to(torch::kFloat32);
  };
  m_logits = register_parameter("m_logits", draw(clips));
  s_logits = register_parameter("s_logits", draw(tokens));
}

torch::Tensor MixingCoefficientsImpl::m(const torch::Tensor& clip_index) {
  return torch::sigmoid(m_logits.index_select(0, clip_index.to(torch::kLong)));
}

torch::Tensor MixingCoefficientsImpl::s() { return torch::sigmoid(s_logits); }

void MixingCoefficientsImpl::clamp_() {
  torch::NoGradGuard ng;
  m_logits.clamp_(logit(lo_), logit(hi_));
  s_logits.clamp_(logit(lo_), logit(hi_));
}

CfLossTerms cf_loss(const torch::Tensor& z, const torch::Tensor& clip_index, Denoiser& model,
                    MixingCoefficients& coeffs, const torch::Tensor& cond,
                    const DiffusionSchedule& schedule, const CounterfactualConfig& cfg,
                    torch::Generator& gen) {
  counters().counterfactual_losses++;
  const auto b = z.size(0), l = z.size(1);
  auto a_inter = cfg.inter ? cfg.alpha * coeffs->m(clip_index).to(z.scalar_type())
                           : torch::zeros({b}, z.options().requires_grad(false));
  auto a_intra = cfg.intra ? (cfg.alpha * coeffs->s().to(z.scalar_type())).unsqueeze(0).expand({b, l})
                           : torch::zeros({b, l}, z.options().requires_grad(false));
  if (cfg.space == CfSpace::kFeature) {
    const auto mixed = apply_mixing(z, a_inter, a_intra, gen);
    CfLossTerms out;
    auto unit = [](const torch::Tensor& x) {
      const auto f = x.flatten(1);
      return f / f.norm(2, 1, true).clamp_min(1e-12);
    };
    out.noise_mse = torch::zeros({}, z.options());
    out.ortho = ortho_loss(unit(mixed.z_prime), unit(z), cfg.lambda_z);
    out.total = cfg.lambda_ortho * out.ortho;
    return out;
  }
  auto t = torch::randint(1, cfg.intervention_step + 1, {b}, gen, torch::kLong);
  auto eps = torch::randn(z.sizes(), gen, z.options().requires_grad(false));
  const auto z_t = forward_diffuse(z, t, schedule, eps).z_t;
  const auto mixed = apply_mixing(z_t, a_inter, a_intra, gen);
  return cf_loss_terms(z_t, mixed.z_prime, t, eps, model, cond, cfg.lambda_z, cfg.lambda_ortho);
}

CounterfactualPool select_topk(const torch::Tensor& candidates, const torch::Tensor& z, int k,
                               const torch::Tensor& alphas) {
  const auto m = candidates.size(0);
  if (k < 1) throw invalid("k must be >= 1");
  if (m < k) {
    throw invalid("need at least " + std::to_string(k) + " candidates, got " + std::to_string(m));
  }
  const auto flat = candidates.detach().reshape({m, -1}).to(torch::kFloat64);
  const auto target = z.detach().reshape({1, -1}).to(torch::kFloat64);
  if (flat.size(1) != target.size(1)) throw invalid("candidate and z sizes differ");
  const auto sims_t = torch::cosine_similarity(flat, target.expand_as(flat), 1, 1e-12).contiguous();
  const double* sims = sims_t.data_ptr<double>();
  std::vector<std::int64_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int64_t a, std::int64_t b) { return sims[a] > sims[b]; });
  order.resize(k);
  CounterfactualPool pool;
  pool.indices = order;
  const auto idx = torch::tensor(order, torch::kLong);
  pool.texts = candidates.index_select(0, idx);
  pool.similarities = sims_t.index_select(0, idx);
  pool.alphas = alphas.defined() ? alphas.index_select(0, idx) : torch::zeros({k}, torch::kFloat64);
  return pool;
}

std::vector<CounterfactualPool> generate_pools(const torch::Tensor& z, const torch::Tensor& cond,
                                               Denoiser& model, const DiffusionSchedule& schedule,
                                               const CounterfactualConfig& cfg,
                                               torch::Generator& gen) {
  cfg.validate(schedule);
  torch::NoGradGuard no_grad;
  const auto b = z.size(0), l = z.size(1);
  const auto n = static_cast<std::int64_t>(cfg.candidates_per_slot) * cfg.pool_size;
  const auto zr = z.detach().repeat_interleave(n, 0);
  const auto cr = cond.detach().repeat_interleave(n, 0);
  auto band = [&](std::vector<std::int64_t> shape) {
    return torch::rand(shape, gen, zr.options()) * (cfg.alpha_high - cfg.alpha_low) + cfg.alpha_low;
  };
  const auto a_inter = cfg.inter ? band({b * n}) : torch::zeros({b * n}, zr.options());
  const auto a_intra = cfg.intra ? band({b * n, l}) : torch::zeros({b * n, l}, zr.options());

  torch::Tensor out;
  torch::Tensor eff;
  if (cfg.space == CfSpace::kFeature) {
    auto mixed = apply_mixing(zr, a_inter, a_intra, gen);
    out = mixed.z_prime;
    eff = mixed.effective_alpha;
  } else {
    const auto diffused = forward_diffuse(zr, cfg.intervention_step, schedule, gen);
    auto mixed = apply_mixing(diffused.z_t, a_inter, a_intra, gen);
    eff = mixed.effective_alpha;
    out = denoise(mixed.z_prime, cfg.intervention_step, cr, model, schedule, gen, cfg.reverse_stride);
  }
  std::vector<CounterfactualPool> pools;
  pools.reserve(b);
  for (std::int64_t i = 0; i < b; ++i) {
    pools.push_back(select_topk(out.slice(0, i * n, (i + 1) * n), z[i], cfg.pool_size,
                                eff.slice(0, i * n, (i + 1) * n)));
  }
  return pools;
}

}  // namespace icf::cf
