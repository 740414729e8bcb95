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

#include "icf/implicit_text.hpp"

#include <cmath>
#include <random>

#include "icf/binary_io.hpp"
#include "icf/common.hpp"
#include "icf/data_synth.hpp"
#include "icf/tensor_util.hpp"

namespace icf::text {
namespace {

constexpr char kMagic[8] = {'I', 'C', 'F', 'C', 'O', 'D', 'E', 'B'};
constexpr std::uint32_t kVersion = 1;

ValidationError invalid(const std::string& what) { return ValidationError("implicit_text", what); }

}  // namespace

ConceptCodebook::ConceptCodebook(torch::Tensor entries, std::vector<std::string> names,
                                 Modality modality)
    : entries_(std::move(entries)), names_(std::move(names)), modality_(modality) {
  if (entries_.dim() != 2 || entries_.size(0) < 2) {
    throw invalid("codebook needs at least two entries");
  }
  if (static_cast<std::int64_t>(names_.size()) != entries_.size(0)) {
    throw invalid("codebook name count does not match entries");
  }
  entries_ = entries_.detach().to(torch::kFloat32).contiguous();
  const auto norms = entries_.norm(2, 1);
  if ((norms - 1).abs().max().item<float>() > 1e-4f) throw invalid("codebook rows must be unit norm");
}

ConceptCodebook ConceptCodebook::build(Modality modality, std::uint64_t seed, int dim,
                                       int distractors) {
  const int n = data::kNumConcepts + distractors;
  if (n > dim) throw invalid("codebook larger than its dimension cannot be orthonormal");
  std::mt19937_64 rng(derive_seed(seed, 100 + static_cast<int>(modality)));
  std::normal_distribution<double> normal;
  auto g = torch::empty({dim, n}, torch::kFloat64);
  auto acc = g.accessor<double, 2>();
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < n; ++j) acc[i][j] = normal(rng);
  }
  auto q = std::get<0>(torch::linalg_qr(g));  // [dim, n], orthonormal columns
  auto rows = q.t().contiguous();
  rows = rows / rows.norm(2, 1, true);
  std::vector<std::string> names;
  for (int c = 0; c < data::kNumConcepts; ++c) names.push_back(data::concept_name(c));
  for (int i = 0; i < distractors; ++i) names.push_back("distractor_" + std::to_string(i));
  return ConceptCodebook(rows, std::move(names), modality);
}

void ConceptCodebook::save(const std::filesystem::path& path) const {
  BinaryWriter w;
  w.bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(modality_));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dim()));
  w.bytes(entries_.data_ptr<float>(), entries_.numel() * sizeof(float));
  for (const auto& n : names_) w.str(n);
  w.save(path);
}

ConceptCodebook ConceptCodebook::load(const std::filesystem::path& path) {
  auto r = BinaryReader::open(path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw IoError("implicit_text", path.string() + " is not a codebook file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw IoError("implicit_text", "unsupported codebook version " + std::to_string(version));
  }
  const auto modality = r.get<std::uint32_t>();
  if (modality > 1) throw IoError("implicit_text", "unknown codebook modality");
  const auto rows = r.get<std::uint32_t>();
  const auto cols = r.get<std::uint32_t>();
  auto entries = torch::empty({rows, cols}, torch::kFloat32);
  r.bytes(entries.data_ptr<float>(), static_cast<std::size_t>(rows) * cols * sizeof(float));
  std::vector<std::string> names(rows);
  for (auto& n : names) n = r.str();
  if (!r.done()) throw IoError("implicit_text", path.string() + ": trailing bytes");
  return ConceptCodebook(entries, std::move(names), static_cast<Modality>(modality));
}

torch::Tensor encode_tokens(const torch::Tensor& tokens, const ConceptCodebook& codebook,
                            double temperature) {
  counters().codebook_encodes++;
  const auto e = codebook.entries().to(tokens.scalar_type());
  return torch::matmul(torch::softmax(torch::matmul(tokens, e.t()) / temperature, -1), e);
}

torch::Tensor inversion_similarity(const torch::Tensor& tokens, const torch::Tensor& features,
                                   const ConceptCodebook& codebook, double temperature) {
  const auto enc = encode_tokens(tokens, codebook, temperature);  // [B, k, d]
  const auto dir = features / features.norm(2, -1, true);
  return torch::cosine_similarity(enc, dir.unsqueeze(1).expand_as(enc), -1, 1e-12).mean(-1);
}

namespace {

// Pairwise penalty sum_{i<j} relu(cos_ij - margin)^2 per batch row and its
// clipped excess matrix R.
std::pair<torch::Tensor, torch::Tensor> diversity_terms(const torch::Tensor& unit, double margin) {
  const auto k = unit.size(1);
  auto cos = torch::matmul(unit, unit.transpose(1, 2));
  auto excess = torch::relu(cos - margin) * (1 - torch::eye(k, unit.options()));
  return {excess.pow(2).sum({1, 2}) / 2, cos};
}

}  // namespace

torch::Tensor inversion_objective(const torch::Tensor& tokens, const torch::Tensor& directions,
                                  const ConceptCodebook& codebook, const InversionOptions& o) {
  auto sim = inversion_similarity(tokens, directions, codebook, o.encoder_temperature);
  if (tokens.size(1) < 2 || o.diversity_weight == 0.0) return sim;
  const auto unit = tokens / tokens.norm(2, -1, true);
  return sim - o.diversity_weight * diversity_terms(unit, o.diversity_margin).first;
}

torch::Tensor inversion_gradient(const torch::Tensor& tokens, const torch::Tensor& directions,
                                 const ConceptCodebook& codebook, const InversionOptions& o) {
  const auto e = codebook.entries().to(tokens.scalar_type());  // [N, d]
  const double tau = o.encoder_temperature;
  const auto k = tokens.size(1);
  const auto fh = directions.unsqueeze(1);                       // [B, 1, d]
  const auto p = torch::softmax(torch::matmul(tokens, e.t()) / tau, -1);  // [B, k, N]
  const auto enc = torch::matmul(p, e);                          // [B, k, d]
  const auto en = enc.norm(2, -1, true).clamp_min(1e-12);
  const auto c = (enc * fh).sum(-1, true) / en;
  const auto dc_denc = (fh - c * enc / en) / en;
  const auto g = torch::matmul(dc_denc, e.t());                  // [B, k, N]
  const auto ds = p * (g - (p * g).sum(-1, true));
  auto grad = torch::matmul(ds, e) / (tau * static_cast<double>(k));
  if (k >= 2 && o.diversity_weight != 0.0) {
    const auto norm = tokens.norm(2, -1, true);
    const auto unit = tokens / norm;
    const auto cos = diversity_terms(unit, o.diversity_margin).second;
    auto excess = torch::relu(cos - o.diversity_margin) * (1 - torch::eye(k, tokens.options()));
    auto dpen = 2.0 * (torch::matmul(excess, unit) - (excess * cos).sum(-1, true) * unit) / norm;
    grad = grad - o.diversity_weight * dpen;
  }
  return grad;
}

InversionResult invert_text(const torch::Tensor& features, const ConceptCodebook& codebook,
                            const InversionOptions& o) {
  if (o.k_tokens < 1) throw invalid("k_tokens must be >= 1");
  if (o.k_tokens > codebook.size()) throw invalid("k_tokens exceeds codebook size");
  if (o.steps < 0 || !(o.lr > 0.0) || !(o.encoder_temperature > 0.0)) {
    throw invalid("invalid inversion budget");
  }
  torch::NoGradGuard no_grad;
  auto f = (features.dim() == 1 ? features.unsqueeze(0) : features).detach();
  if (f.dim() != 2 || f.size(1) != codebook.dim()) {
    throw invalid("features must be [B, d_t] with d_t = codebook dim");
  }
  if (!f.is_floating_point()) f = f.to(torch::kFloat32);
  const auto norms = f.norm(2, 1, true);
  if ((norms < 1e-12).any().item<bool>()) throw invalid("zero-norm feature summary");
  counters().text_inversions++;

  const auto dir = f / norms;
  const auto e = codebook.entries().to(f.scalar_type());
  const auto b = f.size(0);
  const auto k = o.k_tokens;
  // initialize at the k nearest entries, ties broken by index
  const auto order = torch::argsort(torch::matmul(dir, e.t()), /*stable=*/true, -1,
                                    /*descending=*/true)
                         .slice(1, 0, k);
  auto gen = make_generator(o.seed);
  auto tokens = e.index_select(0, order.reshape(-1)).reshape({b, k, e.size(1)}) +
                o.init_noise * torch::randn({b, k, e.size(1)}, gen, f.options());

  std::vector<torch::Tensor> trace;
  for (int s = 0; s < o.steps; ++s) {
    if (o.record_trace) trace.push_back(inversion_similarity(tokens, dir, codebook, o.encoder_temperature));
    tokens = tokens + o.lr * inversion_gradient(tokens, dir, codebook, o);
  }
  InversionResult out;
  out.similarity = inversion_similarity(tokens, dir, codebook, o.encoder_temperature);
  if (o.record_trace) {
    trace.push_back(out.similarity);
    out.trace = torch::stack(trace);
  }
  check_finite(tokens, "implicit_text", "inverted tokens");
  out.tokens = tokens;
  return out;
}

torch::Tensor fuse_texts(const torch::Tensor& tokens, const torch::Tensor& logits) {
  if (tokens.dim() < 2 || logits.dim() != 1 || logits.size(0) != tokens.size(-2)) {
    throw invalid("fuse_texts expects tokens [..., N, d] and logits [N]");
  }
  if (logits.size(0) < 1) throw invalid("fuse_texts needs at least one token");
  const auto w = torch::softmax(logits.to(tokens.scalar_type()), 0);
  return torch::matmul(w.unsqueeze(0), tokens).squeeze(-2);
}

torch::Tensor fuse_texts(const torch::Tensor& lv, const torch::Tensor& ls, const torch::Tensor& lf,
                         const torch::Tensor& logits) {
  const auto d = lv.size(-1);
  auto all = torch::cat({lv.reshape({-1, d}), ls.reshape({-1, d}), lf.reshape({-1, d})}, 0);
  return fuse_texts(all, logits);
}

GateImpl::GateImpl(std::int64_t dim) {
  mlp_ = register_module("mlp", torch::nn::Sequential(torch::nn::Linear(dim, dim), torch::nn::ReLU(),
                                                      torch::nn::Linear(dim, dim), torch::nn::ReLU(),
                                                      torch::nn::Linear(dim, dim)));
}

torch::Tensor GateImpl::gate_values(const torch::Tensor& x) {
  if (forced_ >= 0.0) return torch::full_like(x, forced_);
  return torch::sigmoid(mlp_->forward(x));
}

torch::Tensor GateImpl::forward(const torch::Tensor& x) { return x * gate_values(x); }

TextComposerImpl::TextComposerImpl(std::int64_t dim, int k_tokens, int num_frames)
    : k_(k_tokens), frames_(num_frames) {
  scores = register_parameter("scores", torch::zeros({(2 + num_frames) * k_tokens}));
  gate_v = register_module("gate_v", Gate(dim));
  gate_a = register_module("gate_a", Gate(dim));
  proj = register_module("proj", torch::nn::Linear(dim, dim));
}

torch::Tensor TextComposerImpl::gate_concat(const torch::Tensor& visual_tokens,
                                            const torch::Tensor& audio_tokens) {
  if (visual_tokens.size(-1) != audio_tokens.size(-1)) throw invalid("token dims differ");
  return proj(torch::cat({gate_v(visual_tokens), gate_a(audio_tokens)}, -2));
}

void TextComposerImpl::compose(ImplicitTextBundle& b, const TextLevels& levels) {
  if (!levels.video && !levels.segment && !levels.frame) {
    throw invalid("at least one text granularity must be enabled");
  }
  const auto batch = b.lv.size(0), d = b.lv.size(-1);
  if (b.lv.size(1) != k_ || b.la.size(1) != k_ || b.lf.size(1) != frames_) {
    throw invalid("token bundle does not match composer (k, T)");
  }
  // [B, P, k, d] with P = 2 + T granularity slots, scores viewed as [P, k]
  auto slots = torch::cat({b.lv.unsqueeze(1), b.ls.unsqueeze(1), b.lf}, 1);
  auto logits = scores.view({2 + frames_, k_}).to(slots.scalar_type());
  std::vector<std::int64_t> keep;
  if (levels.video) keep.push_back(0);
  if (levels.segment) keep.push_back(1);
  if (levels.frame) {
    for (int t = 0; t < frames_; ++t) keep.push_back(2 + t);
  }
  auto idx = torch::tensor(keep, torch::kLong);
  slots = slots.index_select(1, idx);
  logits = logits.index_select(0, idx);

  const auto flat_logits = logits.reshape({-1});
  b.weights = torch::softmax(flat_logits, 0);
  b.fused_v = fuse_texts(slots.reshape({batch, -1, d}), flat_logits);
  b.fused_a = b.la.mean(1);
  // per-slot renormalization of the same weights
  const auto slot_w = torch::softmax(logits, 0);  // [P', k]
  const auto visual = (slots * slot_w.unsqueeze(-1)).sum(1);  // [B, k, d]
  b.z = gate_concat(visual, b.la);
}

}  // namespace icf::text
