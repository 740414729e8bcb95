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

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <torch/torch.h>

#include "icf/cdcl.hpp"
#include "icf/common.hpp"
#include "icf/config.hpp"
#include "icf/counterfactual.hpp"
#include "icf/dataset.hpp"
#include "icf/implicit_text.hpp"
#include "icf/metrics.hpp"
#include "icf/seg_decoder.hpp"
#include "icf/tensor_util.hpp"
#include "icf/trainer.hpp"

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << what << " | " << detail << std::endl;
}

// Runs a criterion body; an exception counts as failure with its message.
void run(int id, const std::string& what, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [pass, detail] = body();
    report(id, pass, what, detail);
  } catch (const std::exception& e) {
    report(id, false, what, std::string("exception: ") + e.what());
  }
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// ---- 1 ----
std::pair<bool, std::string> orthogonalization() {
  const auto t0 = Clock::now();
  auto gen = icf::make_generator(101);
  double worst_dot = 0, worst_norm = 0;
  for (int d : {8, 64, 256}) {
    const auto z = torch::randn({1000, d}, gen, torch::kFloat32);
    const auto r = torch::randn({1000, d}, gen, torch::kFloat32);
    const auto rp = icf::cf::orthogonalize(z, r, gen).to(torch::kFloat64);
    const auto z64 = z.to(torch::kFloat64);
    const auto zh = z64 / z64.norm(2, 1, true);
    worst_dot = std::max(worst_dot, (rp * zh).sum(1).abs().max().item<double>());
    worst_norm = std::max(worst_norm, (rp.norm(2, 1) - 1).abs().max().item<double>());
  }
  const double secs = seconds_since(t0);
  const bool pass = worst_dot < 1e-6 && worst_norm < 1e-6 && secs < 5.0;
  return {pass, "max|<r,z>| " + fmt(worst_dot) + ", max|norm-1| " + fmt(worst_norm) + ", " + fmt(secs) + " s"};
}

// ---- 2 ----
std::pair<bool, std::string> mixing_endpoints() {
  auto gen = icf::make_generator(102);
  const auto z = torch::randn({64, 32}, gen);
  const auto rp = icf::cf::orthogonalize(z, torch::randn({64, 32}, gen), gen);
  const bool at0 = torch::equal(icf::cf::mix_counterfactual(z, rp, 0.0), z);
  const bool at1 = torch::equal(icf::cf::mix_counterfactual(z, rp, 1.0), rp);

  // Orthonormal pair: cosine of the halfway mix against z.
  auto u = torch::randn({32}, gen, torch::kFloat64);
  u = u / u.norm();
  const auto v = icf::cf::orthogonalize(u, torch::randn({32}, gen, torch::kFloat64), gen);
  const auto m = icf::cf::mix_counterfactual(u, v, 0.5);
  const double cos = (m * u).sum().item<double>() / (m.norm() * u.norm()).item<double>();
  const double err = std::abs(cos - std::sqrt(0.5));
  return {at0 && at1 && err < 1e-6, std::string("ac=0 bit-equal ") + (at0 ? "yes" : "no") + ", ac=1 bit-equal " +
                                        (at1 ? "yes" : "no") + ", |cos-sqrt(.5)| " + fmt(err)};
}

// ---- 3 ----
std::pair<bool, std::string> diffusion_marginals() {
  const auto t0 = Clock::now();
  icf::cf::DiffusionSchedule schedule(1000);
  auto gen = icf::make_generator(103);
  const int draws = 10000, d = 64;
  const auto z = torch::randn({1, d}, gen, torch::kFloat64);
  const auto zs = z.expand({draws, d}).contiguous();
  double worst_mean = 0, worst_var = 0;
  for (int t : {50, 200, 800}) {
    // Independent product form of alpha_bar for the linear beta schedule.
    double ab = 1.0;
    for (int s = 1; s <= t; ++s) ab *= 1.0 - (1e-4 + (2e-2 - 1e-4) * (s - 1) / 999.0);
    const auto zt = icf::cf::forward_diffuse(zs, t, schedule, gen).z_t;
    const double slope = ((zt.mean(0) * z[0]).sum() / z[0].pow(2).sum()).item<double>();
    // Mean error in units of the marginal's standard deviation.
    const double scale = std::sqrt(ab * z.var().item<double>() + 1.0 - ab);
    worst_mean = std::max(worst_mean, std::abs(slope - std::sqrt(ab)) / scale);
    const double var = zt.var(0).mean().item<double>();
    worst_var = std::max(worst_var, std::abs(var - (1 - ab)) / (1 - ab));
  }
  const double secs = seconds_since(t0);
  return {worst_mean < 0.01 && worst_var < 0.01 && secs < 30.0,
          "mean err / marginal std " + fmt(worst_mean) + ", var rel err " + fmt(worst_var) + ", " + fmt(secs) + " s"};
}

// ---- 4 ----
Eigen::MatrixXd to_eigen(const torch::Tensor& t) {
  const auto c = t.to(torch::kFloat64).contiguous();
  Eigen::MatrixXd m(c.size(0), c.size(1));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) m(i, j) = c[i][j].item<double>();
  return m;
}

Eigen::MatrixXd sqrtm(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

icf::cdcl::GaussianSummary summary_of(const torch::Tensor& mu, const torch::Tensor& sigma) {
  return {mu, sigma, icf::cdcl::entropy(sigma), 0};
}

torch::Tensor random_psd(int d, torch::Generator& gen) {
  const auto w = torch::randn({d, d}, gen, torch::kFloat64);
  return torch::matmul(w, w.t()) + 1e-3 * torch::eye(d, torch::kFloat64);
}

std::pair<bool, std::string> bures_oracle() {
  auto gen = icf::make_generator(104);
  double worst_oracle = 0, worst_axiom = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto ma = torch::randn({4}, gen, torch::kFloat64), mb = torch::randn({4}, gen, torch::kFloat64);
    const auto sa = random_psd(4, gen), sb = random_psd(4, gen);
    const auto a = summary_of(ma, sa), b = summary_of(mb, sb);
    const double d = icf::cdcl::distance(a, b, 0.0).item<double>();
    const Eigen::MatrixXd ea = to_eigen(sa), eb = to_eigen(sb);
    const Eigen::MatrixXd ra = sqrtm(ea);
    const Eigen::MatrixXd inner = ra * eb * ra;
    const Eigen::VectorXd dm = to_eigen(ma.unsqueeze(1)).col(0) - to_eigen(mb.unsqueeze(1)).col(0);
    const double oracle =
        dm.squaredNorm() + ea.trace() + eb.trace() - 2.0 * sqrtm(0.5 * (inner + inner.transpose())).trace();
    worst_oracle = std::max(worst_oracle, std::abs(d - oracle));

    const auto c = summary_of(torch::randn({4}, gen, torch::kFloat64), random_psd(4, gen));
    const double self = std::abs(icf::cdcl::distance(a, a, 0.0).item<double>());
    const double sym = std::abs(d - icf::cdcl::distance(b, a, 0.0).item<double>());
    const double ac = icf::cdcl::distance(a, c, 0.0).item<double>(), cb = icf::cdcl::distance(c, b, 0.0).item<double>();
    const double tri = std::max(0.0, std::sqrt(std::max(d, 0.0)) - std::sqrt(std::max(ac, 0.0)) -
                                         std::sqrt(std::max(cb, 0.0)));
    worst_axiom = std::max({worst_axiom, self, sym, tri, std::max(0.0, -d)});
  }
  const auto n0 = summary_of(torch::zeros({1}, torch::kFloat64), torch::ones({1, 1}, torch::kFloat64));
  const auto n3 = summary_of(torch::full({1}, 3.0, torch::kFloat64), torch::ones({1, 1}, torch::kFloat64));
  const double one_d = icf::cdcl::distance(n0, n3, 0.0).item<double>();
  const bool pass = worst_oracle < 1e-6 && worst_axiom < 1e-8 && std::abs(one_d - 9.0) < 1e-9;
  return {pass, "max oracle diff " + fmt(worst_oracle) + ", max axiom violation " + fmt(worst_axiom) +
                    ", 1D distance " + fmt(one_d, 12)};
}

// ---- 5 ----
std::pair<bool, std::string> entropy_analytics() {
  const double log2pie = std::log(2.0 * M_PI * M_E);
  const auto zero = torch::full({1, 1}, 1.0 / (2 * M_PI * M_E), torch::kFloat64);
  double worst = std::abs(icf::cdcl::entropy(zero).item<double>());
  for (int d : {1, 4, 16}) {
    worst = std::max(worst,
                     std::abs(icf::cdcl::entropy(torch::eye(d, torch::kFloat64)).item<double>() - 0.5 * d * log2pie));
  }
  return {worst < 1e-10, "max abs err " + fmt(worst)};
}

// ---- 6 ----
// Worst per-coordinate relative error between autograd and central differences.
double gradient_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x,
                      double h = 1e-6) {
  x = x.detach().clone().requires_grad_();
  f(x).backward();
  const auto analytic = x.grad().clone();
  torch::NoGradGuard ng;
  auto flat = x.view(-1);
  const double scale = analytic.abs().max().item<double>();
  double worst = 0;
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + h;
    const double up = f(x).item<double>();
    flat[i] = orig - h;
    const double dn = f(x).item<double>();
    flat[i] = orig;
    const double fd = (up - dn) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic.view(-1)[i].item<double>()) /
                                std::max({std::abs(fd), 1e-3 * scale, 1e-12}));
  }
  return worst;
}

std::pair<bool, std::string> gradient_checks() {
  const auto t0 = Clock::now();
  torch::manual_seed(106);
  auto gen = icf::make_generator(106);
  std::ostringstream detail;
  bool pass = true;
  auto check = [&](const std::string& name, double err, double tol) {
    detail << name << " " << fmt(err, 2) << (err < tol ? "" : " (over)") << ", ";
    pass = pass && err < tol;
  };

  const auto zref = torch::randn({2, 8}, gen, torch::kFloat64);
  check("ortho", gradient_error([&](const torch::Tensor& zp) { return icf::cf::ortho_loss(zp, zref, 0.5); },
                                torch::randn({2, 8}, gen, torch::kFloat64)),
        1e-4);

  icf::cf::DiffusionSchedule schedule(1000);
  icf::cf::DenoiserOptions dopt;
  dopt.tokens = 4;
  dopt.dim = 8;
  dopt.cond_dim = 6;
  dopt.hidden = 16;
  dopt.time_dim = 8;
  dopt.blocks = 1;
  icf::cf::Denoiser denoiser(dopt);
  denoiser->to(torch::kFloat64);
  icf::cf::CounterfactualConfig cfc;
  icf::cf::MixingCoefficients coeffs(3, 4, cfc, 107);
  coeffs->to(torch::kFloat64);
  const auto cond = torch::randn({2, 6}, gen, torch::kFloat64);
  const auto idx = torch::tensor({0, 2}, torch::kLong);
  check("cf",
        gradient_error(
            [&](const torch::Tensor& z) {
              auto g = icf::make_generator(108);
              return icf::cf::cf_loss(z, idx, denoiser, coeffs, cond, schedule, cfc, g).total;
            },
            torch::randn({2, 4, 8}, gen, torch::kFloat64)),
        1e-4);

  icf::cdcl::ContrastConfig cc;
  cc.eps_reg = 1e-2;
  const auto visual = torch::randn({3, 6, 4}, gen, torch::kFloat64);
  const auto audio = torch::randn({3, 6, 4}, gen, torch::kFloat64);
  const auto positive = torch::tensor({{1, 1, 0}, {1, 1, 0}, {0, 0, 1}}).to(torch::kBool);
  const auto z = torch::randn({3, 4, 4}, gen, torch::kFloat64);
  const auto pool = torch::randn({3, 3, 4, 4}, gen, torch::kFloat64);
  const auto alphas = torch::tensor({{0.7, 0.75, 0.8}, {0.72, 0.9, 0.1}, {0.0, 0.5, 0.75}}, torch::kFloat64);
  check("v-a", gradient_error([&](const torch::Tensor& v) { return icf::cdcl::loss_v_a(v, audio, positive, cc); },
                              visual),
        1e-3);
  check("v-l", gradient_error([&](const torch::Tensor& v) { return icf::cdcl::loss_v_l(v, z, pool, alphas, cc); },
                              visual),
        1e-3);
  check("a-l", gradient_error([&](const torch::Tensor& a) { return icf::cdcl::loss_a_l(a, z, pool, alphas, cc); },
                              audio),
        1e-3);
  cc.mode = icf::cdcl::ContrastMode::kPrototype;
  check("v-l/prototype",
        gradient_error([&](const torch::Tensor& v) { return icf::cdcl::loss_v_l(v, z, pool, alphas, cc); }, visual),
        1e-4);

  const auto gt = (torch::rand({2, 8, 8}, gen) > 0.5).to(torch::kFloat64);
  check("seg", gradient_error([&](const torch::Tensor& x) { return icf::seg::seg_loss(x, gt, {}).total; },
                              torch::randn({2, 8, 8}, gen, torch::kFloat64)),
        1e-4);
  const double secs = seconds_since(t0);
  detail << fmt(secs) << " s";
  return {pass && secs < 120.0, detail.str()};
}

// ---- 7 ----
std::pair<bool, std::string> topk_pool() {
  std::mt19937 rng(107);
  auto gen = icf::make_generator(107);
  int mismatches = 0;
  for (int m = 1; m <= 64; ++m) {
    auto cands = torch::randn({m, 3, 4}, gen, torch::kFloat64);
    for (int j = 1; j < m; j += 3) cands[j] = cands[std::uniform_int_distribution<int>(0, j - 1)(rng)];
    const auto z = torch::randn({3, 4}, gen, torch::kFloat64);
    std::vector<std::pair<double, int>> scored;
    const auto zf = z.reshape(-1);
    for (int i = 0; i < m; ++i) {
      const auto c = cands[i].reshape(-1);
      double dot = 0, nc = 0, nz = 0;
      for (int e = 0; e < 12; ++e) {
        const double a = c[e].item<double>(), b = zf[e].item<double>();
        dot += a * b;
        nc += a * a;
        nz += b * b;
      }
      scored.emplace_back(dot / std::sqrt(nc * nz), i);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (int k = 1; k <= m; ++k) {
      const auto pool = icf::cf::select_topk(cands, z, k);
      for (int i = 0; i < k; ++i) mismatches += pool.indices[i] != scored[i].second;
    }
  }
  const auto ws = icf::cdcl::counterfactual_weights(torch::rand({100, 8}, gen, torch::kFloat64));
  const double sum_err = (ws.sum(-1) - 1).abs().max().item<double>();
  const auto w = icf::cdcl::counterfactual_weights(torch::tensor({0.0, 0.75}, torch::kFloat64));
  const double fixture = std::max(std::abs(w[0].item<double>() - 2.0 / 3.0), std::abs(w[1].item<double>() - 1.0 / 3.0));
  return {mismatches == 0 && sum_err < 1e-6 && fixture < 1e-12,
          std::to_string(mismatches) + " ordering mismatches, weight sum err " + fmt(sum_err) + ", (0, .75) err " +
              fmt(fixture)};
}

// ---- 8 ----
std::pair<bool, std::string> softmax_fusion() {
  auto gen = icf::make_generator(108);
  const auto lv = torch::randn({2, 6}, gen, torch::kFloat64);
  const auto ls = torch::randn({2, 6}, gen, torch::kFloat64);
  const auto lf = torch::randn({3, 2, 6}, gen, torch::kFloat64);
  const auto all = torch::cat({lv, ls, lf.reshape({6, 6})}, 0);
  const auto uniform = icf::text::fuse_texts(lv, ls, lf, torch::zeros({10}, torch::kFloat64));
  const double uni_err = (uniform - all.mean(0)).abs().max().item<double>();
  auto logits = torch::zeros({10}, torch::kFloat64);
  logits[7] = 50.0;
  const double sat_err =
      (icf::text::fuse_texts(lv, ls, lf, logits) - all[7]).abs().max().item<double>();

  const auto rnd_logits = torch::randn({10}, gen, torch::kFloat64);
  const auto weights = torch::softmax(rnd_logits, 0);
  const double sum_err = std::abs(weights.sum().item<double>() - 1.0);
  const double fuse_err = (icf::text::fuse_texts(lv, ls, lf, rnd_logits) - (weights.unsqueeze(1) * all).sum(0))
                              .abs()
                              .max()
                              .item<double>();

  const auto tokens = torch::tensor({{1.0, 0.0}, {0.0, 1.0}, {M_SQRT1_2, M_SQRT1_2}}, torch::kFloat64);
  const auto hand = icf::text::fuse_texts(tokens, torch::tensor({0.0, std::log(2.0), 0.0}, torch::kFloat64));
  const double hx = (1.0 + M_SQRT1_2) / 4.0, hy = (2.0 + M_SQRT1_2) / 4.0;
  const double hand_err = std::max(std::abs(hand[0].item<double>() - hx), std::abs(hand[1].item<double>() - hy));
  const bool pass = uni_err < 1e-12 && sat_err < 1e-6 && sum_err < 1e-6 && fuse_err < 1e-12 && hand_err < 1e-12;
  return {pass, "uniform err " + fmt(uni_err) + ", saturation err " + fmt(sat_err) + ", weight sum err " +
                    fmt(sum_err) + ", hand case err " + fmt(hand_err)};
}

// ---- 11 ----
torch::Tensor block(int r0, int r1, int c0, int c1) {
  auto m = torch::zeros({8, 8}, torch::kUInt8);
  m.slice(0, r0, r1).slice(1, c0, c1).fill_(1);
  return m;
}

std::pair<bool, std::string> metric_fixtures() {
  using icf::metrics::fscore;
  using icf::metrics::jaccard;
  const auto gt = block(0, 8, 0, 8), half = block(0, 8, 0, 4), empty = torch::zeros({8, 8}, torch::kUInt8);
  const bool j_ok = jaccard(gt, gt) == 100.0 && jaccard(block(0, 4, 0, 4), block(4, 8, 4, 8)) == 0.0 &&
                    jaccard(half, gt) == 50.0 && jaccard(empty, empty) == 100.0;
  const bool f_ok = fscore(gt, gt) == 100.0 && std::abs(fscore(half, gt) - 81.25) < 1e-12 &&
                    fscore(empty, gt) == 0.0 && fscore(empty, empty) == 100.0;
  auto gen = icf::make_generator(111);
  std::vector<icf::metrics::ClipMasks> clips;
  for (int i = 0; i < 6; ++i) {
    const auto m = (torch::rand({5, 16, 16}, gen) > 0.6).to(torch::kUInt8);
    clips.push_back({"c" + std::to_string(i), m.clone(), m});
  }
  clips[1].gt[3].zero_();
  clips[1].pred[3].zero_();
  const auto r = icf::metrics::evaluate(clips, false);
  return {j_ok && f_ok && r.jf == 100.0, std::string("jaccard ") + (j_ok ? "ok" : "wrong") + ", fscore " +
                                             (f_ok ? "ok" : "wrong") + ", perfect J&F " + fmt(r.jf, 10)};
}

// ---- 12 ----
std::pair<bool, std::string> determinism(const icf::ExperimentConfig& cfg, const fs::path& out) {
  const auto splits = icf::data::build_datasets(cfg);
  auto run = [&](const fs::path& dir, std::int64_t stop, const std::optional<fs::path>& resume) {
    icf::RunOptions o;
    o.out_dir = dir;
    o.stop_at_step = stop;
    o.resume = resume;
    return icf::train(cfg, splits.train, splits.eval, o);
  };
  run(out / "a", 0, std::nullopt);
  run(out / "b", 0, std::nullopt);
  const bool same_log = slurp(out / "a" / "metrics.ndjson") == slurp(out / "b" / "metrics.ndjson") &&
                        !slurp(out / "a" / "metrics.ndjson").empty();

  icf::Trainer probe(cfg, splits.train);
  const auto stop = probe.steps_per_epoch() + probe.steps_per_epoch() / 2 + 1;  // mid-epoch
  const auto part = run(out / "c", stop, std::nullopt);
  run(out / "c", 0, part.checkpoint);
  const bool same_steps = slurp(out / "a" / "steps.ndjson") == slurp(out / "c" / "steps.ndjson");
  const bool same_resumed_log = slurp(out / "a" / "metrics.ndjson") == slurp(out / "c" / "metrics.ndjson");
  return {same_log && same_steps && same_resumed_log,
          std::string("seed-identical logs ") + (same_log ? "identical" : "differ") + ", resumed at step " +
              std::to_string(stop) + ": loss trajectory " + (same_steps ? "identical" : "differs") + ", log " +
              (same_resumed_log ? "identical" : "differs")};
}

// ---- 9 ----
std::pair<bool, std::string> overfit(const icf::ExperimentConfig& cfg, const fs::path& out) {
  const auto t0 = Clock::now();
  icf::RunOptions o;
  o.out_dir = out;
  const auto art = icf::train(cfg, o);
  const double secs = seconds_since(t0);
  const auto steps = static_cast<std::int64_t>(art.steps.size());
  const double jf = art.final_report->jf;
  const bool pass = jf >= 90.0 && steps <= 2000 && secs < 900.0;
  return {pass, "J&F " + fmt(jf, 4) + " after " + std::to_string(steps) + " steps, " + fmt(secs, 4) + " s"};
}

// ---- 10 ----
std::pair<bool, std::string> ablation_direction(const icf::ExperimentConfig& base, const fs::path& out) {
  const auto t0 = Clock::now();
  const auto splits = icf::data::build_datasets(base);
  const auto rows = icf::ablation_rows(base, "components");
  const icf::AblationRow* none = nullptr;
  const icf::AblationRow* full = nullptr;
  for (const auto& r : rows) {
    if (r.label == "none") none = &r;
    if (r.label == "MIT+SC+CDCL") full = &r;
  }
  if (!none || !full) throw std::runtime_error("components axis lacks the none/full rows");
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  auto mean_jf = [&](const icf::AblationRow& row, std::vector<double>& per_seed) {
    double sum = 0;
    for (auto seed : seeds) {
      auto c = row.config;
      c.seed = seed;
      icf::RunOptions o;
      o.out_dir = out / row.label / ("seed" + std::to_string(seed));
      const auto art = icf::train(c, splits.train, splits.eval, o);
      per_seed.push_back(art.final_report->jf);
      sum += art.final_report->jf;
      std::cerr << row.label << " seed " << seed << " J&F " << art.final_report->jf << " (" << fmt(seconds_since(t0), 4)
                << " s)" << std::endl;
    }
    return sum / seeds.size();
  };
  std::vector<double> none_jf, full_jf;
  const double n = mean_jf(*none, none_jf);
  const double f = mean_jf(*full, full_jf);
  const double secs = seconds_since(t0);
  std::ostringstream per;
  for (std::size_t i = 0; i < seeds.size(); ++i) per << fmt(full_jf[i], 4) << "/" << fmt(none_jf[i], 4) << " ";
  return {f - n >= 2.0 && secs < 7200.0, "full " + fmt(f, 4) + " vs none " + fmt(n, 4) + " (gap " + fmt(f - n, 3) +
                                             "; per seed full/none " + per.str() + "), " + fmt(secs, 4) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string group = "fast";
  std::string configs = ICF_CONFIG_DIR;
  std::string out = (fs::temp_directory_path() / "icf_acceptance").string();
  app.add_option("--group", group, "fast | overfit | ablation | all")
      ->check(CLI::IsMember({"fast", "overfit", "ablation", "all"}));
  app.add_option("--configs", configs, "directory holding the preset configs");
  app.add_option("--out", out, "scratch directory for training runs");
  CLI11_PARSE(app, argc, argv);
  torch::set_num_threads(1);

  const fs::path root = out;
  const bool all = group == "all";
  try {
    if (all || group == "fast") {
      run(1, "orthogonalization suite", orthogonalization);
      run(2, "mixing endpoints", mixing_endpoints);
      run(3, "forward-diffusion marginals", diffusion_marginals);
      run(4, "Bures/Wasserstein oracle equivalence", bures_oracle);
      run(5, "entropy analytics", entropy_analytics);
      run(6, "gradient checks", gradient_checks);
      run(7, "top-K pool and weights", topk_pool);
      run(8, "softmax fusion", softmax_fusion);
      run(11, "metrics fixtures", metric_fixtures);
      run(12, "determinism and checkpoint resume", [&] {
        fs::remove_all(root / "determinism");
        return determinism(icf::ExperimentConfig::load(fs::path(configs) / "smoke.json"), root / "determinism");
      });
    }
    if (all || group == "overfit") {
      run(9, "overfit 16-clip single-source set", [&] {
        fs::remove_all(root / "overfit");
        return overfit(icf::ExperimentConfig::load(fs::path(configs) / "overfit_s4.json"), root / "overfit");
      });
    }
    if (all || group == "ablation") {
      run(10, "ablation direction on 64-clip multi-source set", [&] {
        fs::remove_all(root / "ablation");
        return ablation_direction(icf::ExperimentConfig::load(fs::path(configs) / "ablation_m3.json"),
                                  root / "ablation");
      });
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
