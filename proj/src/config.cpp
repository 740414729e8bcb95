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

#include "icf/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "icf/common.hpp"
#include "icf/data_synth.hpp"

namespace icf {
namespace {

using json = nlohmann::json;

ValidationError invalid(const std::string& what) { return ValidationError("config", what); }

// Reads fields out of one JSON object and remembers which keys were used so
// leftovers can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw invalid(path_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw invalid(path_ + "." + key + ": " + e.what());
    }
  }

  Section sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw invalid("unknown key " + path_ + "." + k);
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string window_name(temporal::SegmentWindow w) {
  return w == temporal::SegmentWindow::kHalf ? "half" : "quarter";
}

temporal::SegmentWindow parse_window(const std::string& s) {
  if (s == "half") return temporal::SegmentWindow::kHalf;
  if (s == "quarter") return temporal::SegmentWindow::kQuarter;
  throw invalid("granularity.window must be half or quarter, got '" + s + "'");
}

std::string space_name(cf::CfSpace s) { return s == cf::CfSpace::kLatent ? "latent" : "feature"; }

cf::CfSpace parse_space(const std::string& s) {
  if (s == "latent") return cf::CfSpace::kLatent;
  if (s == "feature") return cf::CfSpace::kFeature;
  throw invalid("counterfactual.space must be latent or feature, got '" + s + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (schema_version != kSchemaVersion) {
    throw invalid("schema_version " + std::to_string(schema_version) + " is not supported (expected " +
                  std::to_string(kSchemaVersion) + ")");
  }
  if (data.source != "synthetic" && data.source != "avsbench") {
    throw invalid("data.source must be synthetic or avsbench");
  }
  if (data.source == "synthetic") data::parse_regime(data.regime);
  if (data.source == "avsbench" && data.root.empty()) throw invalid("data.root is required for avsbench");
  if (data.train_clips < 1 || data.eval_clips < 1) throw invalid("clip counts must be positive");
  if (data.eval_split != "train" && data.eval_split != "heldout") {
    throw invalid("data.eval_split must be train or heldout");
  }
  if (data.height < 32 || data.width < 32 || data.height % 32 || data.width % 32) {
    throw invalid("data resolution must be a positive multiple of 32");
  }
  if (data.frames < 0) throw invalid("data.frames must be >= 0");

  for (int c : model.visual_channels) {
    if (c < 1) throw invalid("model.visual_channels must be positive");
  }
  if (model.feature_dim < 1 || model.detail_channels < 1 || model.queries < 1 || model.mask_dim < 1 ||
      model.decoder_layers < 1 || model.denoiser_hidden < 1 || model.denoiser_blocks < 1) {
    throw invalid("model sizes must be positive");
  }
  if (model.heads < 1 || model.query_dim % model.heads) throw invalid("model.query_dim must divide into heads");

  granularity.validate();
  if (text.k_tokens < 1 || text.inversion_steps < 1 || !(text.inversion_lr > 0) ||
      !(text.encoder_temperature > 0) || text.distractors < 0) {
    throw invalid("text inversion settings must be positive");
  }
  if (!(text.cue_dropout >= 0.0 && text.cue_dropout <= 1.0)) throw invalid("text.cue_dropout must lie in [0, 1]");

  if (diffusion_steps < 2) throw invalid("diffusion_steps must be >= 2");
  counterfactual.validate(cf::DiffusionSchedule(diffusion_steps));
  contrast.validate();
  loss.validate();

  if (!(optim.lr > 0) || optim.weight_decay < 0) throw invalid("optimizer settings out of range");
  if (optim.batch_size < 1 || optim.epochs < 1 || optim.max_steps < 0 || optim.eval_every < 1 ||
      optim.pool_refresh_every < 1) {
    throw invalid("optimizer counts out of range");
  }

  if (toggles.sc && !toggles.mit) throw invalid("SC requires MIT (counterfactuals are built from the implicit text)");
  if (toggles.pair_swap && (!toggles.mit || !toggles.cdcl)) throw invalid("pair_swap requires MIT and CDCL");
  if (toggles.pair_swap && toggles.sc) throw invalid("pair_swap replaces SC; enable only one");
  if (toggles.mit && !granularity.video && !granularity.segment && !granularity.frame) {
    throw invalid("MIT needs at least one granularity level");
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  const auto& c = counterfactual;
  return json{
      {"schema_version", schema_version},
      {"seed", seed},
      {"data",
       {{"source", data.source},
        {"regime", data.regime},
        {"root", data.root},
        {"train_clips", data.train_clips},
        {"eval_clips", data.eval_clips},
        {"eval_split", data.eval_split},
        {"height", data.height},
        {"width", data.width},
        {"frames", data.frames},
        {"seed", data.seed}}},
      {"model",
       {{"visual_channels", model.visual_channels},
        {"feature_dim", model.feature_dim},
        {"detail_channels", model.detail_channels},
        {"queries", model.queries},
        {"query_dim", model.query_dim},
        {"mask_dim", model.mask_dim},
        {"heads", model.heads},
        {"decoder_layers", model.decoder_layers},
        {"denoiser_hidden", model.denoiser_hidden},
        {"denoiser_blocks", model.denoiser_blocks}}},
      {"granularity",
       {{"temperature", granularity.temperature},
        {"window", window_name(granularity.window)},
        {"video", granularity.video},
        {"segment", granularity.segment},
        {"frame", granularity.frame}}},
      {"text",
       {{"k_tokens", text.k_tokens},
        {"inversion_steps", text.inversion_steps},
        {"inversion_lr", text.inversion_lr},
        {"encoder_temperature", text.encoder_temperature},
        {"distractors", text.distractors},
        {"codebook_seed", text.codebook_seed},
        {"cue_dropout", text.cue_dropout}}},
      {"counterfactual",
       {{"alpha", c.alpha},
        {"alpha_low", c.alpha_low},
        {"alpha_high", c.alpha_high},
        {"intervention_step", c.intervention_step},
        {"diffusion_steps", diffusion_steps},
        {"pool_size", c.pool_size},
        {"candidates_per_slot", c.candidates_per_slot},
        {"lambda_z", c.lambda_z},
        {"lambda_ortho", c.lambda_ortho},
        {"inter", c.inter},
        {"intra", c.intra},
        {"space", space_name(c.space)},
        {"reverse_stride", c.reverse_stride}}},
      {"contrast",
       {{"tau", contrast.tau},
        {"gamma", contrast.gamma},
        {"theta_pos", contrast.theta_pos},
        {"eps_reg", contrast.eps_reg},
        {"embed_dim", contrast.embed_dim},
        {"mode", cdcl::contrast_mode_name(contrast.mode)},
        {"v_a", pairs.v_a},
        {"v_l", pairs.v_l},
        {"a_l", pairs.a_l}}},
      {"loss",
       {{"bce", loss.bce},
        {"dice", loss.dice},
        {"focal", loss.focal},
        {"cf", loss.cf},
        {"cdcl", loss.cdcl},
        {"v_a", loss.v_a},
        {"v_l", loss.v_l},
        {"a_l", loss.a_l}}},
      {"optim",
       {{"lr", optim.lr},
        {"weight_decay", optim.weight_decay},
        {"batch_size", optim.batch_size},
        {"epochs", optim.epochs},
        {"max_steps", optim.max_steps},
        {"eval_every", optim.eval_every},
        {"pool_refresh_every", optim.pool_refresh_every}}},
      {"toggles",
       {{"mit", toggles.mit}, {"sc", toggles.sc}, {"cdcl", toggles.cdcl}, {"pair_swap", toggles.pair_swap}}},
  };
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  Section root(j, "config");
  if (!j.is_object() || !j.contains("schema_version")) throw invalid("config has no schema_version");
  root.get("schema_version", cfg.schema_version);
  if (cfg.schema_version != kSchemaVersion) {
    throw invalid("schema_version " + std::to_string(cfg.schema_version) + " is not supported");
  }
  root.get("seed", cfg.seed);

  auto d = root.sub("data");
  d.get("source", cfg.data.source);
  d.get("regime", cfg.data.regime);
  d.get("root", cfg.data.root);
  d.get("train_clips", cfg.data.train_clips);
  d.get("eval_clips", cfg.data.eval_clips);
  d.get("eval_split", cfg.data.eval_split);
  d.get("height", cfg.data.height);
  d.get("width", cfg.data.width);
  d.get("frames", cfg.data.frames);
  d.get("seed", cfg.data.seed);
  d.finish();

  auto m = root.sub("model");
  m.get("visual_channels", cfg.model.visual_channels);
  m.get("feature_dim", cfg.model.feature_dim);
  m.get("detail_channels", cfg.model.detail_channels);
  m.get("queries", cfg.model.queries);
  m.get("query_dim", cfg.model.query_dim);
  m.get("mask_dim", cfg.model.mask_dim);
  m.get("heads", cfg.model.heads);
  m.get("decoder_layers", cfg.model.decoder_layers);
  m.get("denoiser_hidden", cfg.model.denoiser_hidden);
  m.get("denoiser_blocks", cfg.model.denoiser_blocks);
  m.finish();

  auto g = root.sub("granularity");
  std::string window = window_name(cfg.granularity.window);
  g.get("temperature", cfg.granularity.temperature);
  g.get("window", window);
  cfg.granularity.window = parse_window(window);
  g.get("video", cfg.granularity.video);
  g.get("segment", cfg.granularity.segment);
  g.get("frame", cfg.granularity.frame);
  g.finish();

  auto t = root.sub("text");
  t.get("k_tokens", cfg.text.k_tokens);
  t.get("inversion_steps", cfg.text.inversion_steps);
  t.get("inversion_lr", cfg.text.inversion_lr);
  t.get("encoder_temperature", cfg.text.encoder_temperature);
  t.get("distractors", cfg.text.distractors);
  t.get("codebook_seed", cfg.text.codebook_seed);
  t.get("cue_dropout", cfg.text.cue_dropout);
  t.finish();

  auto c = root.sub("counterfactual");
  auto& cc = cfg.counterfactual;
  std::string space = space_name(cc.space);
  c.get("alpha", cc.alpha);
  c.get("alpha_low", cc.alpha_low);
  c.get("alpha_high", cc.alpha_high);
  c.get("intervention_step", cc.intervention_step);
  c.get("diffusion_steps", cfg.diffusion_steps);
  c.get("pool_size", cc.pool_size);
  c.get("candidates_per_slot", cc.candidates_per_slot);
  c.get("lambda_z", cc.lambda_z);
  c.get("lambda_ortho", cc.lambda_ortho);
  c.get("inter", cc.inter);
  c.get("intra", cc.intra);
  c.get("space", space);
  cc.space = parse_space(space);
  c.get("reverse_stride", cc.reverse_stride);
  c.finish();

  auto k = root.sub("contrast");
  std::string mode = cdcl::contrast_mode_name(cfg.contrast.mode);
  k.get("tau", cfg.contrast.tau);
  k.get("gamma", cfg.contrast.gamma);
  k.get("theta_pos", cfg.contrast.theta_pos);
  k.get("eps_reg", cfg.contrast.eps_reg);
  k.get("embed_dim", cfg.contrast.embed_dim);
  k.get("mode", mode);
  try {
    cfg.contrast.mode = cdcl::parse_contrast_mode(mode);
  } catch (const ValidationError& e) {
    throw invalid(e.what());
  }
  k.get("v_a", cfg.pairs.v_a);
  k.get("v_l", cfg.pairs.v_l);
  k.get("a_l", cfg.pairs.a_l);
  k.finish();

  auto l = root.sub("loss");
  l.get("bce", cfg.loss.bce);
  l.get("dice", cfg.loss.dice);
  l.get("focal", cfg.loss.focal);
  l.get("cf", cfg.loss.cf);
  l.get("cdcl", cfg.loss.cdcl);
  l.get("v_a", cfg.loss.v_a);
  l.get("v_l", cfg.loss.v_l);
  l.get("a_l", cfg.loss.a_l);
  l.finish();

  auto o = root.sub("optim");
  o.get("lr", cfg.optim.lr);
  o.get("weight_decay", cfg.optim.weight_decay);
  o.get("batch_size", cfg.optim.batch_size);
  o.get("epochs", cfg.optim.epochs);
  o.get("max_steps", cfg.optim.max_steps);
  o.get("eval_every", cfg.optim.eval_every);
  o.get("pool_refresh_every", cfg.optim.pool_refresh_every);
  o.finish();

  auto tg = root.sub("toggles");
  tg.get("mit", cfg.toggles.mit);
  tg.get("sc", cfg.toggles.sc);
  tg.get("cdcl", cfg.toggles.cdcl);
  tg.get("pair_swap", cfg.toggles.pair_swap);
  tg.finish();

  root.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config", "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("config", path.string() + ": " + e.what());
  }
  return from_json(j);
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("config", "cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

std::uint64_t ExperimentConfig::hash() const {
  auto j = to_json();
  j["optim"].erase("epochs");
  j["optim"].erase("max_steps");
  j["optim"].erase("eval_every");
  return fnv1a64(j.dump());
}

}  // namespace icf
