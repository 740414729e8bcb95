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

#include "icf/cdcl.hpp"

#include <cmath>
#include <limits>

#include "icf/common.hpp"

namespace icf::cdcl {
namespace {

ValidationError invalid(const std::string& what) { return ValidationError("cdcl", what); }

using torch::autograd::AutogradContext;
using torch::autograd::tensor_list;

struct SymSqrtFn : public torch::autograd::Function<SymSqrtFn> {
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& a, double floor) {
    const auto [evals, evecs] = torch::linalg_eigh(a);
    const auto roots = evals.clamp_min(floor).sqrt();
    ctx->save_for_backward({roots, evecs});
    return torch::matmul(evecs * roots.unsqueeze(-2), evecs.mT());
  }

  static tensor_list backward(AutogradContext* ctx, tensor_list grads) {
    const auto saved = ctx->get_saved_variables();
    const auto& roots = saved[0];
    const auto& u = saved[1];
    const auto g = 0.5 * (grads[0] + grads[0].mT());
    const auto denom = (roots.unsqueeze(-1) + roots.unsqueeze(-2))
                           .clamp_min(std::numeric_limits<double>::min());
    const auto inner = torch::matmul(torch::matmul(u.mT(), g), u) / denom;
    return {torch::matmul(torch::matmul(u, inner), u.mT()), torch::Tensor()};
  }
};

}  // namespace

ContrastMode parse_contrast_mode(const std::string& name) {
  if (name == "distribution") return ContrastMode::kDistribution;
  if (name == "prototype") return ContrastMode::kPrototype;
  if (name == "feature") return ContrastMode::kFeature;
  throw invalid("unknown contrast mode '" + name + "'");
}

std::string contrast_mode_name(ContrastMode mode) {
  switch (mode) {
    case ContrastMode::kDistribution:
      return "distribution";
    case ContrastMode::kPrototype:
      return "prototype";
    case ContrastMode::kFeature:
      return "feature";
  }
  return "unknown";
}

void ContrastConfig::validate() const {
  if (!(tau > 0.0)) throw invalid("tau must be positive");
  if (!(eps_reg > 0.0)) throw invalid("eps_reg must be positive");
  if (!(gamma >= 0.0)) throw invalid("gamma must be non-negative");
  if (!(theta_pos >= -1.0 && theta_pos <= 1.0)) throw invalid("theta_pos must lie in [-1, 1]");
  if (embed_dim < 1) throw invalid("embed_dim must be positive");
}

GaussianSummary gaussian_summary(const torch::Tensor& seq, double eps_reg) {
  if (seq.dim() < 2 || seq.size(-2) < 1) throw invalid("gaussian_summary needs [..., n >= 1, d]");
  const auto n = seq.size(-2), d = seq.size(-1);
  GaussianSummary s;
  s.n = n;
  s.mu = seq.mean(-2);
  const auto centred = seq - s.mu.unsqueeze(-2);
  auto cov = torch::matmul(centred.mT(), centred) / static_cast<double>(n);
  cov = 0.5 * (cov + cov.mT());
  s.sigma = cov + eps_reg * torch::eye(d, seq.options());
  s.entropy = entropy(s.sigma);
  return s;
}

torch::Tensor entropy(const torch::Tensor& sigma) {
  if (sigma.dim() < 2 || sigma.size(-1) != sigma.size(-2)) throw invalid("entropy needs square matrices");
  const double scale = std::max(1.0, sigma.detach().abs().max().item<double>());
  const double tol = (sigma.scalar_type() == torch::kFloat64 ? 1e-12 : 1e-6) * scale;
  if ((sigma - sigma.mT()).abs().max().item<double>() > tol) {
    throw invalid("covariance is not symmetric");
  }
  const auto d = sigma.size(-1);
  const auto chol = torch::linalg_cholesky(sigma);
  const auto logdet = 2.0 * torch::log(torch::diagonal(chol, 0, -2, -1)).sum(-1);
  return 0.5 * (static_cast<double>(d) * std::log(2.0 * M_PI * M_E) + logdet);
}

torch::Tensor sym_sqrt(const torch::Tensor& a, double floor) { return SymSqrtFn::apply(a, floor); }

torch::Tensor distance(const GaussianSummary& a, const GaussianSummary& b, double gamma, double floor) {
  if (a.mu.size(-1) != b.mu.size(-1)) {
    throw invalid("summary dimensions differ: " + std::to_string(a.mu.size(-1)) + " vs " +
                  std::to_string(b.mu.size(-1)));
  }
  const auto mu_a = a.mu.to(torch::kFloat64), mu_b = b.mu.to(torch::kFloat64);
  const auto s_a = a.sigma.to(torch::kFloat64), s_b = b.sigma.to(torch::kFloat64);
  const auto root_b = sym_sqrt(s_b, floor);
  auto inner = torch::matmul(torch::matmul(root_b, s_a), root_b);
  inner = 0.5 * (inner + inner.mT());
  const auto cross = torch::diagonal(sym_sqrt(inner, floor * floor), 0, -2, -1).sum(-1);
  const auto trace = [](const torch::Tensor& m) { return torch::diagonal(m, 0, -2, -1).sum(-1); };
  auto d = (mu_a - mu_b).pow(2).sum(-1) + trace(s_a) + trace(s_b) - 2.0 * cross;
  if (gamma != 0.0) d = d + gamma * (a.entropy.to(torch::kFloat64) + b.entropy.to(torch::kFloat64));
  return d.to(a.mu.scalar_type());
}

torch::Tensor partition_by_audio_anchor(const torch::Tensor& la, double theta_pos) {
  if (la.size(0) < 2) throw invalid("audio-anchor partition needs a batch of at least 2");
  const auto flat = la.detach().reshape({la.size(0), -1}).to(torch::kFloat64);
  const auto unit = flat / flat.norm(2, 1, true).clamp_min(1e-12);
  auto positive = torch::matmul(unit, unit.t()) >= theta_pos;
  positive.fill_diagonal_(true);
  return positive;
}

torch::Tensor counterfactual_weights(const torch::Tensor& alphas) {
  if ((alphas < 0).any().item<bool>() || (alphas > 1).any().item<bool>()) {
    throw invalid("counterfactual alphas must lie in [0, 1]");
  }
  const auto roots = torch::sqrt(1.0 - alphas);
  const auto total = roots.sum(-1, true);
  if ((total <= 0).any().item<bool>()) throw invalid("all counterfactual alphas are 1; weights undefined");
  return roots / total;
}

torch::Tensor pairwise_distance(const torch::Tensor& x, const torch::Tensor& y,
                                const ContrastConfig& cfg) {
  switch (cfg.mode) {
    case ContrastMode::kDistribution:
      return distance(gaussian_summary(x, cfg.eps_reg), gaussian_summary(y, cfg.eps_reg), cfg.gamma,
                      cfg.eps_reg)
          .unsqueeze(0);
    case ContrastMode::kPrototype:
      return (x.mean(-2) - y.mean(-2)).pow(2).sum(-1).unsqueeze(0);
    case ContrastMode::kFeature: {
      const auto target = x.size(-2) == y.size(-2) ? y : y.mean(-2, true);
      return (x - target).pow(2).sum(-1).movedim(-1, 0);
    }
  }
  throw invalid("unknown contrast mode");
}

torch::Tensor anchored_infonce(const torch::Tensor& dist, const torch::Tensor& positive, double tau) {
  const auto logits = -dist / tau;
  const auto lse_all = torch::logsumexp(logits, -1);
  const auto lse_pos =
      torch::logsumexp(logits.masked_fill(positive.logical_not(), -std::numeric_limits<double>::infinity()), -1);
  return (lse_all - lse_pos).mean();
}

torch::Tensor weighted_infonce(const torch::Tensor& pos, const torch::Tensor& neg,
                               const torch::Tensor& weights, double tau) {
  const auto lp = -pos / tau;
  const auto ln = -neg / tau + torch::log(weights.to(neg.scalar_type()));
  const auto denom = torch::logsumexp(torch::cat({lp.unsqueeze(-1), ln.expand_as(neg)}, -1), -1);
  return (denom - lp).mean();
}

torch::Tensor loss_v_a(const torch::Tensor& visual, const torch::Tensor& audio,
                       const torch::Tensor& positive, const ContrastConfig& cfg) {
  const auto b = visual.size(0);
  if (audio.size(0) != b || positive.size(0) != b || positive.size(1) != b) {
    throw invalid("visual, audio and partition batch sizes differ");
  }
  const auto dist = pairwise_distance(visual.unsqueeze(1), audio.unsqueeze(0), cfg);
  return anchored_infonce(dist, positive, cfg.tau);
}

torch::Tensor loss_x_l(const torch::Tensor& anchor, const torch::Tensor& z,
                       const torch::Tensor& pool, const torch::Tensor& alphas,
                       const ContrastConfig& cfg) {
  if (pool.dim() != 4 || pool.size(0) != anchor.size(0) || pool.size(1) < 1) {
    throw invalid("counterfactual pool must be [B, K >= 1, L, d]");
  }
  const auto weights = counterfactual_weights(alphas.detach()).to(anchor.scalar_type());
  const auto pos = pairwise_distance(anchor, z, cfg);
  const auto neg = pairwise_distance(anchor.unsqueeze(1), pool, cfg);
  return weighted_infonce(pos, neg, weights, cfg.tau);
}

ContrastHeadsImpl::ContrastHeadsImpl(std::int64_t visual_dim, std::int64_t audio_dim,
                                     std::int64_t text_dim, std::int64_t embed_dim) {
  visual_ = register_module("visual", torch::nn::Linear(visual_dim, embed_dim));
  audio_ = register_module("audio", torch::nn::Linear(audio_dim, embed_dim));
  text_ = register_module("text", torch::nn::Linear(text_dim, embed_dim));
}

ContrastTerms contrast_losses(const ContrastInputs& in, ContrastHeads& heads,
                              const ContrastConfig& cfg, const ContrastPairs& pairs) {
  ContrastTerms out;
  const auto b = in.visual.size(0);
  const bool has_pool = in.pool.defined() && in.pool.numel() > 0;
  const bool need_visual = (pairs.v_a && b >= 2) || (pairs.v_l && has_pool);
  const bool need_audio = (pairs.v_a && b >= 2) || (pairs.a_l && has_pool);
  const auto v = need_visual ? heads->visual(in.visual) : torch::Tensor();
  const auto a = need_audio ? heads->audio(in.audio) : torch::Tensor();
  if (pairs.v_a && b >= 2) {
    counters().contrast_losses++;
    out.v_a = loss_v_a(v, a, partition_by_audio_anchor(in.la, cfg.theta_pos), cfg);
  }
  if (has_pool && (pairs.v_l || pairs.a_l)) {
    const auto z = heads->text(in.z);
    const auto pool = heads->text(in.pool);
    if (pairs.v_l) {
      counters().contrast_losses++;
      out.v_l = loss_v_l(v, z, pool, in.pool_alpha, cfg);
    }
    if (pairs.a_l) {
      counters().contrast_losses++;
      out.a_l = loss_a_l(a, z, pool, in.pool_alpha, cfg);
    }
  }
  return out;
}

}  // namespace icf::cdcl
