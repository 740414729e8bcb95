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

#include "icf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "icf/binary_io.hpp"
#include "icf/common.hpp"
#include "icf/tensor_util.hpp"

namespace icf {
namespace {

constexpr char kMagic[8] = {'I', 'C', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ValidationError invalid(const std::string& what) { return ValidationError("harness", what); }

// Seed streams: everything random in a step derives from (seed, step, stream).
enum Stream : std::uint64_t {
  kOrderStream = 0x0d5e,
  kStepStream = 0x57e9,
  kPoolStream = 0x9001,
  kEvalStream = 0xe7a1,
};

double item(const torch::Tensor& t) { return t.defined() ? t.item<double>() : kNaN; }

// Diffusion runs on unit-RMS latents; composite texts are much smaller than
// the unit-variance forward noise.
torch::Tensor latent_scale(const torch::Tensor& z) { return z.detach().pow(2).mean().sqrt().clamp_min(1e-8); }

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

struct CheckpointData {
  ExperimentConfig cfg;
  std::uint64_t hash = 0;
  DataShape shape;
  std::int64_t step = 0;
  int epoch = 0;
  std::int64_t position = 0;
  std::array<double, 6> sums{};
  std::array<std::int64_t, 6> counts{};
  std::vector<std::pair<std::string, torch::Tensor>> params, buffers;
  struct Adam {
    bool present = false;
    std::int64_t step = 0;
    torch::Tensor exp_avg, exp_avg_sq, max_exp_avg_sq;
  };
  std::vector<Adam> adam;
  std::vector<torch::Tensor> pool_texts, pool_alphas;
};

CheckpointData read_checkpoint(const fs::path& path, bool header_only = false) {
  auto r = BinaryReader::open(path);
  char magic[8];
  r.bytes(magic, 8);
  if (!std::equal(magic, magic + 8, kMagic)) throw IoError("harness", path.string() + " is not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("harness", "checkpoint version " + std::to_string(version) + " is not supported");
  }
  CheckpointData c;
  c.hash = r.get<std::uint64_t>();
  c.cfg = ExperimentConfig::from_json(nlohmann::json::parse(r.str()));
  c.shape.train_clips = r.get<std::int64_t>();
  c.shape.classes = r.get<std::int64_t>();
  c.shape.frames = r.get<std::int32_t>();
  c.shape.height = r.get<std::int32_t>();
  c.shape.width = r.get<std::int32_t>();
  if (header_only) return c;
  c.step = r.get<std::int64_t>();
  c.epoch = r.get<std::int32_t>();
  c.position = r.get<std::int64_t>();
  for (auto& s : c.sums) s = r.get<double>();
  for (auto& n : c.counts) n = r.get<std::int64_t>();
  const auto np = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < np; ++i) {
    auto name = r.str();
    c.params.emplace_back(std::move(name), r.tensor());
  }
  const auto nb = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < nb; ++i) {
    auto name = r.str();
    c.buffers.emplace_back(std::move(name), r.tensor());
  }
  c.adam.resize(np);
  for (auto& a : c.adam) {
    a.present = r.get<std::uint8_t>() != 0;
    if (!a.present) continue;
    a.step = r.get<std::int64_t>();
    a.exp_avg = r.tensor();
    a.exp_avg_sq = r.tensor();
    if (r.get<std::uint8_t>()) a.max_exp_avg_sq = r.tensor();
  }
  const auto npools = r.get<std::uint32_t>();
  c.pool_texts.resize(npools);
  c.pool_alphas.resize(npools);
  for (std::uint32_t i = 0; i < npools; ++i) {
    if (r.get<std::uint8_t>()) {
      c.pool_texts[i] = r.tensor();
      c.pool_alphas[i] = r.tensor();
    }
  }
  if (!r.done()) throw IoError("harness", path.string() + " has trailing bytes");
  return c;
}

void copy_named(torch::nn::Module& module, const std::vector<std::pair<std::string, torch::Tensor>>& src,
                bool parameters) {
  const auto dst = parameters ? module.named_parameters() : module.named_buffers();
  if (dst.size() != src.size()) throw ValidationError("harness", "checkpoint does not match the model layout");
  torch::NoGradGuard ng;
  std::size_t i = 0;
  for (const auto& item : dst) {
    const auto& [name, t] = src[i++];
    if (name != item.key() || t.sizes() != item.value().sizes()) {
      throw ValidationError("harness", "checkpoint entry " + name + " does not match model entry " + item.key());
    }
    item.value().copy_(t);
  }
}

DataShape shape_of(const data::Dataset& ds) {
  return {static_cast<std::int64_t>(ds.size()), ds.classes(), ds.frames, ds.height, ds.width};
}

metrics::EvalReport evaluate_model(IcfModel& model, const data::Dataset& ds, int batch_size) {
  const auto& shape = model->shape();
  if (ds.frames != shape.frames || ds.height != shape.height || ds.width != shape.width ||
      ds.classes() != shape.classes) {
    throw ValidationError("harness", "dataset (T " + std::to_string(ds.frames) + ", " + std::to_string(ds.height) +
                                         "x" + std::to_string(ds.width) + ", " + std::to_string(ds.classes()) +
                                         " classes) does not match the model");
  }
  torch::NoGradGuard ng;
  std::vector<metrics::ClipMasks> clips;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    std::vector<std::int64_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i) idx.push_back(i);
    const auto batch = data::make_batch(ds, idx);
    const auto logits = model->infer(batch);
    const auto pred = ds.semantic ? logits.argmax(1) : (logits > 0).to(torch::kUInt8);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto t = batch.frames_per_clip;
      clips.push_back({ds.samples[idx[j]].id, pred.slice(0, j * t, (j + 1) * t), ds.samples[idx[j]].masks});
    }
  }
  return metrics::evaluate(clips, ds.semantic);
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("harness", "cannot write " + path.string());
  out << line << '\n';
}

}  // namespace

nlohmann::ordered_json EpochRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["loss"] = number_or_null(mean.total);
  j["seg"] = number_or_null(mean.seg);
  j["cf"] = number_or_null(mean.cf);
  j["v_a"] = number_or_null(mean.v_a);
  j["v_l"] = number_or_null(mean.v_l);
  j["a_l"] = number_or_null(mean.a_l);
  j["J"] = report ? nlohmann::ordered_json(report->j) : nlohmann::ordered_json(nullptr);
  j["F"] = report ? nlohmann::ordered_json(report->f) : nlohmann::ordered_json(nullptr);
  j["JF"] = report ? nlohmann::ordered_json(report->jf) : nlohmann::ordered_json(nullptr);
  return j;
}

Trainer::Trainer(const ExperimentConfig& cfg, const data::Dataset& train) : cfg_(cfg), train_(train) {
  cfg_.validate();
  if (train.size() == 0) throw invalid("empty training set");
  torch::manual_seed(cfg_.seed);
  model_ = IcfModel(cfg_, shape_of(train));
  optim_ = std::make_unique<torch::optim::AdamW>(
      model_->parameters(), torch::optim::AdamWOptions(cfg_.optim.lr).weight_decay(cfg_.optim.weight_decay));
  pool_texts_.resize(train.size());
  pool_alphas_.resize(train.size());
}

std::int64_t Trainer::steps_per_epoch() const {
  const auto n = static_cast<std::int64_t>(train_.size());
  return (n + cfg_.optim.batch_size - 1) / cfg_.optim.batch_size;
}

std::int64_t Trainer::total_steps() const {
  const auto full = steps_per_epoch() * cfg_.optim.epochs;
  return cfg_.optim.max_steps > 0 ? std::min<std::int64_t>(full, cfg_.optim.max_steps) : full;
}

bool Trainer::finished() const { return step_ >= total_steps(); }

std::vector<std::int64_t> Trainer::epoch_order(int epoch) const {
  std::vector<std::int64_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(derive_seed(cfg_.seed, kOrderStream), static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

void Trainer::refresh_pools() {
  torch::NoGradGuard ng;
  const auto seed = derive_seed(derive_seed(cfg_.seed, kPoolStream), static_cast<std::uint64_t>(epoch_));
  auto gen = make_generator(seed);
  const auto b = static_cast<std::size_t>(cfg_.optim.batch_size);
  for (std::size_t start = 0; start < train_.size(); start += b) {
    std::vector<std::int64_t> idx;
    for (std::size_t i = start; i < std::min(train_.size(), start + b); ++i) idx.push_back(i);
    const auto batch = data::make_batch(train_, idx);
    const auto enc = model_->encode(batch);
    const auto bundle = model_->implicit_text(enc, derive_seed(seed, start));
    const auto scale = latent_scale(bundle.z);
    const auto pools = cf::generate_pools(bundle.z / scale, enc.pooled.mean(1), model_->denoiser,
                                          model_->schedule(), cfg_.counterfactual, gen);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      pool_texts_[idx[j]] = pools[j].texts * scale;
      pool_alphas_[idx[j]] = pools[j].alphas;
    }
  }
}

seg::LossTerms Trainer::losses(const data::Batch& batch, std::uint64_t seed) {
  const auto& tg = cfg_.toggles;
  auto& m = *model_;
  const auto enc = m.encode(batch);
  const auto b = enc.clips, t = enc.frames;

  text::ImplicitTextBundle bundle;
  torch::Tensor cue;
  if (tg.mit) {
    bundle = m.implicit_text(enc, derive_seed(seed, 1));
    auto gen = make_generator(derive_seed(seed, 2));
    if (torch::rand({1}, gen).item<double>() >= cfg_.text.cue_dropout) cue = bundle.z;
  }
  const auto pred = m.decoder->forward(enc.context.enriched, enc.audio, cue, t);
  const auto target = train_.semantic ? batch.masks : batch.masks.to(torch::kFloat32);

  seg::LossTerms terms;
  terms.seg = seg::seg_loss(pred.logits, target, cfg_.loss).total;

  if (tg.sc) {
    auto gen = make_generator(derive_seed(seed, 3));
    const auto z = bundle.z.detach();
    terms.cf = cf::cf_loss(z / latent_scale(z), batch.clip_index, m.denoiser, m.coeffs, enc.pooled.detach().mean(1),
                           m.schedule(), cfg_.counterfactual, gen)
                   .total;
  }

  if (tg.cdcl) {
    cdcl::ContrastInputs in;
    in.visual = enc.pooled;
    in.audio = enc.audio.view({b, t, -1});
    in.la = tg.mit ? bundle.la : in.audio.detach().mean(1);
    if (tg.mit) in.z = bundle.z;

    if (tg.pair_swap) {
      cdcl::ContrastPairs va{cfg_.pairs.v_a, false, false};
      auto out = cdcl::contrast_losses(in, m.heads, cfg_.contrast, va);
      terms.v_a = out.v_a;
      // Swapped items pair their visual texts with another clip's audio text;
      // that composite is their single negative.
      if (b / 2 >= 2 && (cfg_.pairs.v_l || cfg_.pairs.a_l)) {
        const auto src = data::pair_swap_sources(static_cast<int>(b), 0.5, derive_seed(seed, 4));
        std::vector<std::int64_t> swapped, sources;
        for (std::int64_t i = 0; i < b; ++i) {
          sources.push_back(src[i]);
          if (src[i] != i) swapped.push_back(i);
        }
        const auto rows = torch::tensor(swapped, torch::kLong);
        const auto z_swap = m.recompose(bundle, torch::tensor(sources, torch::kLong)).detach();
        cdcl::ContrastInputs sub;
        sub.visual = in.visual.index_select(0, rows);
        sub.audio = in.audio.index_select(0, rows);
        sub.la = in.la.index_select(0, rows);
        sub.z = in.z.index_select(0, rows);
        sub.pool = z_swap.index_select(0, rows).unsqueeze(1);
        sub.pool_alpha = torch::zeros({rows.size(0), 1}, sub.pool.options());
        auto text = cdcl::contrast_losses(sub, m.heads, cfg_.contrast, {false, cfg_.pairs.v_l, cfg_.pairs.a_l});
        terms.v_l = text.v_l;
        terms.a_l = text.a_l;
      }
    } else {
      if (tg.sc) {
        std::vector<torch::Tensor> texts, alphas;
        for (std::int64_t i = 0; i < b; ++i) {
          const auto c = batch.clip_index[i].item<std::int64_t>();
          if (!pool_texts_[c].defined()) throw invalid("no counterfactual pool for clip " + train_.samples[c].id);
          texts.push_back(pool_texts_[c]);
          alphas.push_back(pool_alphas_[c]);
        }
        in.pool = torch::stack(texts);
        in.pool_alpha = torch::stack(alphas);
      } else if (tg.mit && b >= 2) {
        // Without counterfactuals the other clips' texts are the negatives.
        std::vector<std::int64_t> others;
        for (std::int64_t i = 0; i < b; ++i)
          for (std::int64_t j = 0; j < b; ++j)
            if (j != i) others.push_back(j);
        const auto z = bundle.z.detach();
        in.pool = z.index_select(0, torch::tensor(others, torch::kLong)).view({b, b - 1, z.size(1), z.size(2)});
        in.pool_alpha = torch::zeros({b, b - 1}, z.options());
      }
      auto out = cdcl::contrast_losses(in, m.heads, cfg_.contrast, cfg_.pairs);
      terms.v_a = out.v_a;
      terms.v_l = out.v_l;
      terms.a_l = out.a_l;
    }
  }
  return terms;
}

StepLosses Trainer::step() {
  if (finished()) throw invalid("training already finished");
  if (position_ == 0 && cfg_.toggles.sc &&
      (epoch_ % cfg_.optim.pool_refresh_every == 0 || !pool_texts_.front().defined())) {
    refresh_pools();
  }
  const auto order = epoch_order(epoch_);
  const auto bs = cfg_.optim.batch_size;
  const auto begin = position_ * bs;
  const auto end = std::min<std::int64_t>(begin + bs, static_cast<std::int64_t>(order.size()));
  const std::vector<std::int64_t> idx(order.begin() + begin, order.begin() + end);
  const auto batch = data::make_batch(train_, idx);

  model_->train();
  const auto terms = losses(batch, derive_seed(derive_seed(cfg_.seed, kStepStream), static_cast<std::uint64_t>(step_)));
  const auto total = seg::total_loss(terms, cfg_.loss);
  check_finite(total, "harness", "training loss at step " + std::to_string(step_));
  optim_->zero_grad();
  total.backward();
  optim_->step();
  if (cfg_.toggles.sc) model_->coeffs->clamp_();

  StepLosses s{total.item<double>(), item(terms.seg), item(terms.cf),
               item(terms.v_a),     item(terms.v_l), item(terms.a_l)};
  const double values[6] = {s.total, s.seg, s.cf, s.v_a, s.v_l, s.a_l};
  for (int i = 0; i < 6; ++i) {
    if (std::isfinite(values[i])) {
      sums_[i] += values[i];
      counts_[i]++;
    }
  }
  ++step_;
  ++position_;
  return s;
}

std::optional<EpochRecord> Trainer::take_epoch_record(const data::Dataset* eval) {
  const bool closes = position_ == steps_per_epoch() || (finished() && position_ > 0);
  if (!closes) return std::nullopt;
  EpochRecord rec;
  rec.epoch = epoch_;
  rec.step = step_;
  double means[6];
  for (int i = 0; i < 6; ++i) means[i] = counts_[i] ? sums_[i] / counts_[i] : kNaN;
  rec.mean = {means[0], means[1], means[2], means[3], means[4], means[5]};
  if (eval && ((epoch_ + 1) % cfg_.optim.eval_every == 0 || finished())) rec.report = evaluate(*eval);
  sums_.fill(0.0);
  counts_.fill(0);
  ++epoch_;
  position_ = 0;
  return rec;
}

metrics::EvalReport Trainer::evaluate(const data::Dataset& ds) {
  model_->eval();
  auto r = evaluate_model(model_, ds, cfg_.optim.batch_size);
  model_->train();
  return r;
}

void Trainer::save_checkpoint(const fs::path& path) const {
  BinaryWriter w;
  w.bytes(kMagic, 8);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(cfg_.hash());
  w.str(cfg_.to_json().dump());
  const auto& shape = model_->shape();
  w.put<std::int64_t>(shape.train_clips);
  w.put<std::int64_t>(shape.classes);
  w.put<std::int32_t>(shape.frames);
  w.put<std::int32_t>(shape.height);
  w.put<std::int32_t>(shape.width);
  w.put<std::int64_t>(step_);
  w.put<std::int32_t>(epoch_);
  w.put<std::int64_t>(position_);
  for (double s : sums_) w.put<double>(s);
  for (auto n : counts_) w.put<std::int64_t>(n);
  const auto params = model_->named_parameters();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.key());
    w.tensor(p.value());
  }
  const auto buffers = model_->named_buffers();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(buffers.size()));
  for (const auto& b : buffers) {
    w.str(b.key());
    w.tensor(b.value());
  }
  const auto& state = optim_->state();
  for (const auto& p : params) {
    const auto it = state.find(p.value().unsafeGetTensorImpl());
    w.put<std::uint8_t>(it != state.end());
    if (it == state.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamWParamState&>(*it->second);
    w.put<std::int64_t>(s.step());
    w.tensor(s.exp_avg());
    w.tensor(s.exp_avg_sq());
    w.put<std::uint8_t>(s.max_exp_avg_sq().defined());
    if (s.max_exp_avg_sq().defined()) w.tensor(s.max_exp_avg_sq());
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(pool_texts_.size()));
  for (std::size_t i = 0; i < pool_texts_.size(); ++i) {
    w.put<std::uint8_t>(pool_texts_[i].defined());
    if (pool_texts_[i].defined()) {
      w.tensor(pool_texts_[i]);
      w.tensor(pool_alphas_[i]);
    }
  }
  w.save(path);
}

void Trainer::load_checkpoint(const fs::path& path) {
  auto c = read_checkpoint(path);
  if (c.hash != cfg_.hash()) {
    throw invalid("checkpoint " + path.string() + " was written under a different config (hash " +
                  std::to_string(c.hash) + " vs " + std::to_string(cfg_.hash()) + "); refusing to resume");
  }
  const auto& shape = model_->shape();
  if (c.shape.train_clips != shape.train_clips || c.shape.classes != shape.classes || c.shape.frames != shape.frames ||
      c.shape.height != shape.height || c.shape.width != shape.width) {
    throw invalid("checkpoint data shape does not match the training set");
  }
  copy_named(*model_, c.params, true);
  copy_named(*model_, c.buffers, false);
  auto& state = optim_->state();
  state.clear();
  const auto params = model_->named_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = c.adam[i];
    if (!a.present) continue;
    auto s = std::make_unique<torch::optim::AdamWParamState>();
    s->step(a.step);
    s->exp_avg(a.exp_avg.clone());
    s->exp_avg_sq(a.exp_avg_sq.clone());
    if (a.max_exp_avg_sq.defined()) s->max_exp_avg_sq(a.max_exp_avg_sq.clone());
    state[params[i].value().unsafeGetTensorImpl()] = std::move(s);
  }
  if (c.pool_texts.size() != pool_texts_.size()) throw invalid("checkpoint pool count does not match");
  pool_texts_ = c.pool_texts;
  pool_alphas_ = c.pool_alphas;
  step_ = c.step;
  epoch_ = c.epoch;
  position_ = c.position;
  sums_ = c.sums;
  counts_ = c.counts;
}

RunArtifacts train(const ExperimentConfig& cfg, const data::Dataset& train_set, const data::Dataset& eval_set,
                   const RunOptions& opts) {
  if (opts.out_dir.empty()) throw invalid("no output directory");
  fs::create_directories(opts.out_dir);
  cfg.save(opts.out_dir / "config.json");
  RunArtifacts art;
  art.checkpoint = opts.out_dir / "checkpoint.bin";
  art.metrics_log = opts.out_dir / "metrics.ndjson";
  const auto steps_log = opts.out_dir / "steps.ndjson";

  Trainer trainer(cfg, train_set);
  if (opts.resume) {
    trainer.load_checkpoint(*opts.resume);
  } else {
    std::ofstream(art.metrics_log, std::ios::trunc);
    std::ofstream(steps_log, std::ios::trunc);
  }

  while (!trainer.finished()) {
    if (opts.stop_at_step > 0 && trainer.global_step() >= opts.stop_at_step) break;
    const auto s = trainer.step();
    art.steps.push_back(s);
    nlohmann::ordered_json line;
    line["step"] = trainer.global_step() - 1;
    line["loss"] = number_or_null(s.total);
    append_line(steps_log, line.dump());
    if (auto rec = trainer.take_epoch_record(&eval_set)) {
      append_line(art.metrics_log, rec->to_json().dump());
      if (opts.verbose) std::cerr << rec->to_json().dump() << '\n';
      art.epochs.push_back(std::move(*rec));
    }
  }
  trainer.save_checkpoint(art.checkpoint);
  if (trainer.finished()) {
    if (!art.epochs.empty() && art.epochs.back().report) {
      art.final_report = art.epochs.back().report;
    } else {
      art.final_report = trainer.evaluate(eval_set);
    }
    art.final_report->save(opts.out_dir / "eval.tsv");
  }
  return art;
}

RunArtifacts train(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto splits = data::build_datasets(cfg);
  return train(cfg, splits.train, splits.eval, opts);
}

ExperimentConfig checkpoint_config(const fs::path& checkpoint) { return read_checkpoint(checkpoint, true).cfg; }

data::Dataset degrade(const data::Dataset& ds, const EvalOptions& opts) {
  const bool noise = !(std::isinf(opts.snr_db) && opts.snr_db > 0);
  if (!noise && opts.frame_mix == 0.0) return ds;
  auto clips = ds.clips;
  if (noise) {
    for (std::size_t i = 0; i < clips.size(); ++i) {
      clips[i] = data::add_audio_noise(clips[i], opts.snr_db, derive_seed(derive_seed(opts.seed, kEvalStream), i));
    }
  }
  if (opts.frame_mix > 0.0) clips = data::mix_frames(clips, opts.frame_mix, derive_seed(opts.seed, kEvalStream + 1));
  return data::prepare(std::move(clips));
}

metrics::EvalReport evaluate_checkpoint(const fs::path& checkpoint, const data::Dataset& ds, const EvalOptions& opts) {
  auto c = read_checkpoint(checkpoint);
  IcfModel model(c.cfg, c.shape);
  copy_named(*model, c.params, true);
  copy_named(*model, c.buffers, false);
  model->eval();
  return evaluate_model(model, degrade(ds, opts), c.cfg.optim.batch_size);
}

namespace {

ExperimentConfig with_components(ExperimentConfig c, bool mit, bool sc, bool cdcl) {
  c.toggles.mit = mit;
  c.toggles.sc = sc;
  c.toggles.cdcl = cdcl;
  c.toggles.pair_swap = false;
  return c;
}

std::string slug(const std::string& s) {
  std::string out;
  for (char ch : s) out += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
  return out;
}

}  // namespace

std::vector<AblationRow> ablation_rows(const ExperimentConfig& base, const std::string& axis) {
  std::vector<AblationRow> rows;
  auto add = [&](std::string label, ExperimentConfig c, std::string skipped = {}) {
    if (skipped.empty()) c.validate();
    rows.push_back({std::move(label), std::move(c), std::move(skipped), {}, 0, 0, 0});
  };
  const auto full = with_components(base, true, true, true);
  if (axis == "components") {
    add("none", with_components(base, false, false, false));
    add("MIT", with_components(base, true, false, false));
    add("CDCL", with_components(base, false, false, true));
    add("MIT+SC", with_components(base, true, true, false));
    add("MIT+CDCL", with_components(base, true, false, true));
    add("MIT+SC+CDCL", full);
  } else if (axis == "granularity") {
    auto c = with_components(base, true, false, false);
    c.granularity.video = c.granularity.segment = false;
    c.granularity.frame = true;
    add("frame", c);
    c.granularity.video = true;
    add("frame+video", c);
    c.granularity.segment = true;
    add("frame+video+segment", c);
  } else if (axis == "cf-dimension") {
    auto c = full;
    c.counterfactual.space = cf::CfSpace::kFeature;
    c.counterfactual.inter = c.counterfactual.intra = true;
    add("feature-level", c);
    c.counterfactual.space = cf::CfSpace::kLatent;
    c.counterfactual.intra = false;
    add("inter-sample", c);
    c.counterfactual.inter = false;
    c.counterfactual.intra = true;
    add("intra-sample", c);
    c.counterfactual.inter = true;
    add("inter+intra", c);
  } else if (axis == "cf-space") {
    add("discrete", full, "discrete (VQ-VAE) latent space is out of scope");
    auto c = full;
    c.counterfactual.space = cf::CfSpace::kLatent;
    c.counterfactual.lambda_ortho = 0.0;
    add("continuous", c);
    c.counterfactual.lambda_ortho = full.counterfactual.lambda_ortho > 0 ? full.counterfactual.lambda_ortho : 1.0;
    add("continuous+ortho", c);
  } else if (axis == "contrast-pairs") {
    auto c = full;
    c.pairs = {false, true, false};
    add("v-l", c);
    c.pairs = {false, true, true};
    add("v-l+a-l", c);
    c.pairs = {true, true, true};
    add("v-l+a-l+a-v", c);
  } else if (axis == "contrast-mode") {
    auto c = full;
    c.contrast.mode = cdcl::ContrastMode::kPrototype;
    add("prototype", c);
    c.contrast.mode = cdcl::ContrastMode::kFeature;
    add("feature", c);
    c.contrast.mode = cdcl::ContrastMode::kDistribution;
    add("distribution", c);
  } else if (axis == "pair-swap") {
    auto c = with_components(base, true, false, true);
    c.toggles.pair_swap = true;
    add("pair-swap", c);
    add("audio-replacement", c, "needs an external text-to-audio model");
    add("text-revision", c, "needs an external vision-language model");
  } else if (axis == "full") {
    add("full", full);
  } else {
    throw invalid("unknown ablation axis '" + axis + "'");
  }
  return rows;
}

std::vector<AblationRow> ablate(const ExperimentConfig& base, const std::string& axis,
                                const std::vector<std::uint64_t>& seeds, const fs::path& out, bool verbose) {
  if (seeds.empty()) throw invalid("ablation needs at least one seed");
  auto rows = ablation_rows(base, axis);
  const auto splits = data::build_datasets(base);
  for (auto& row : rows) {
    if (!row.skipped.empty()) continue;
    for (auto seed : seeds) {
      auto c = row.config;
      c.seed = seed;
      RunOptions opts;
      opts.out_dir = out / slug(row.label) / ("seed" + std::to_string(seed));
      opts.verbose = verbose;
      auto art = train(c, splits.train, splits.eval, opts);
      row.reports.push_back(*art.final_report);
      if (verbose) std::cerr << axis << " " << row.label << " seed " << seed << " J&F " << art.final_report->jf << '\n';
    }
    for (const auto& r : row.reports) {
      row.j += r.j / row.reports.size();
      row.f += r.f / row.reports.size();
      row.jf += r.jf / row.reports.size();
    }
  }
  fs::create_directories(out);
  std::ofstream(out / "ablation.tsv") << ablation_table(rows);
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream s;
  s << std::setprecision(6) << "row\tMIT\tSC\tCDCL\tJF\tJ\tF\tseeds\tnote\n";
  for (const auto& r : rows) {
    const auto& t = r.config.toggles;
    s << r.label << '\t' << t.mit << '\t' << t.sc << '\t' << t.cdcl << '\t';
    if (r.skipped.empty()) {
      s << r.jf << '\t' << r.j << '\t' << r.f << '\t' << r.reports.size() << "\t\n";
    } else {
      s << "-\t-\t-\t0\tskipped: " << r.skipped << '\n';
    }
  }
  return s.str();
}

ExperimentConfig sweep_config(const ExperimentConfig& base, const std::string& param, double v) {
  auto bad = [&](const std::string& why) {
    return invalid("illegal " + param + " value " + std::to_string(v) + ": " + why);
  };
  if (std::isnan(v)) throw bad("NaN");
  auto c = base;
  auto integer = [&](double lo, double hi) {
    if (v != std::floor(v) || v < lo || v > hi) {
      throw bad("expected an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return static_cast<int>(v);
  };
  if (param == "k_c") {
    c.counterfactual.pool_size = integer(1, 1024);
  } else if (param == "alpha_o") {
    if (!(v >= 0.0 && v <= 0.9 + 1e-12)) throw bad("band [v, v + 0.1) must lie in [0, 1]");
    c.counterfactual.alpha_low = v;
    c.counterfactual.alpha_high = std::min(1.0, v + 0.1);
    c.counterfactual.alpha = std::max(c.counterfactual.alpha, c.counterfactual.alpha_high);
  } else if (param == "s_d") {
    c.counterfactual.intervention_step = integer(1, base.diffusion_steps - 1);
  } else if (param == "r_a") {
    if (std::isinf(v) && v < 0) throw bad("SNR must not be -inf");
  } else if (param == "r_v") {
    if (!(v >= 0.0 && v <= 1.0)) throw bad("fraction must lie in [0, 1]");
  } else {
    throw invalid("unknown sweep parameter '" + param + "'");
  }
  c.validate();
  return c;
}

void validate_sweep(const ExperimentConfig& base, const std::string& param, const std::vector<double>& values) {
  if (values.empty()) throw invalid("sweep needs at least one value");
  for (double v : values) sweep_config(base, param, v);
}

std::vector<SweepPoint> sweep(const ExperimentConfig& base, const std::string& param,
                              const std::vector<double>& values, const fs::path& out, bool verbose) {
  validate_sweep(base, param, values);
  const auto splits = data::build_datasets(base);
  std::vector<SweepPoint> points;
  const bool degradation = param == "r_a" || param == "r_v";
  if (degradation) {
    RunOptions opts;
    opts.out_dir = out / "base";
    opts.verbose = verbose;
    const auto art = train(base, splits.train, splits.eval, opts);
    for (double v : values) {
      EvalOptions e;
      e.seed = base.seed;
      if (param == "r_a") e.snr_db = v;
      if (param == "r_v") e.frame_mix = v;
      points.push_back({v, evaluate_checkpoint(art.checkpoint, splits.eval, e)});
    }
  } else {
    for (double v : values) {
      RunOptions opts;
      std::ostringstream name;
      name << param << "_" << v;
      opts.out_dir = out / slug(name.str());
      opts.verbose = verbose;
      const auto art = train(sweep_config(base, param, v), splits.train, splits.eval, opts);
      points.push_back({v, *art.final_report});
    }
  }
  fs::create_directories(out);
  std::ofstream tsv(out / "sweep.tsv");
  tsv << std::setprecision(6) << param << "\tJF\tJ\tF\n";
  for (const auto& p : points) tsv << p.value << '\t' << p.report.jf << '\t' << p.report.j << '\t' << p.report.f << '\n';
  return points;
}

void export_embeddings(const fs::path& checkpoint, const data::Dataset& ds, const fs::path& out) {
  auto c = read_checkpoint(checkpoint);
  IcfModel model(c.cfg, c.shape);
  copy_named(*model, c.params, true);
  copy_named(*model, c.buffers, false);
  model->eval();
  torch::NoGradGuard ng;
  std::vector<torch::Tensor> pre, post;
  std::vector<std::pair<std::string, std::string>> meta;
  const auto bs = static_cast<std::size_t>(c.cfg.optim.batch_size);
  for (std::size_t start = 0; start < ds.size(); start += bs) {
    std::vector<std::int64_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + bs); ++i) idx.push_back(i);
    const auto batch = data::make_batch(ds, idx);
    const auto enc = model->encode(batch);
    const auto audio = enc.audio.view({enc.clips, enc.frames, -1});
    torch::Tensor z;
    if (c.cfg.toggles.mit) z = model->implicit_text(enc, derive_seed(c.cfg.seed, start)).z;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& id = ds.samples[idx[j]].id;
      pre.push_back(enc.pooled[j].mean(0));
      post.push_back(model->heads->visual(enc.pooled[j]).mean(0));
      meta.emplace_back(id, "visual");
      pre.push_back(audio[j].mean(0));
      post.push_back(model->heads->audio(audio[j]).mean(0));
      meta.emplace_back(id, "audio");
      if (z.defined()) {
        pre.push_back(z[j].mean(0));
        post.push_back(model->heads->text(z[j]).mean(0));
        meta.emplace_back(id, "text");
      }
    }
  }
  fs::create_directories(out);
  auto write = [&](const std::string& name, const std::vector<torch::Tensor>& rows) {
    const auto m = torch::stack(rows).to(torch::kFloat32).contiguous();
    std::ofstream f(out / name, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("harness", "cannot write " + (out / name).string());
    f.write(static_cast<const char*>(m.data_ptr()), static_cast<std::streamsize>(m.numel() * sizeof(float)));
    return m.sizes().vec();
  };
  const auto pre_shape = write("embeddings_pre.f32", pre);
  const auto post_shape = write("embeddings_post.f32", post);
  std::ofstream tsv(out / "embeddings.tsv");
  tsv << "# embeddings_pre.f32 float32 " << pre_shape[0] << "x" << pre_shape[1] << '\n';
  tsv << "# embeddings_post.f32 float32 " << post_shape[0] << "x" << post_shape[1] << '\n';
  tsv << "row\tclip\tmodality\n";
  for (std::size_t i = 0; i < meta.size(); ++i) tsv << i << '\t' << meta[i].first << '\t' << meta[i].second << '\n';
}

}  // namespace icf
