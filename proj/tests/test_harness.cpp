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

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "icf/common.hpp"
#include "icf/config.hpp"
#include "icf/dataset.hpp"
#include "icf/trainer.hpp"
#include "test_util.hpp"

namespace icf {
namespace {

using testing::TempDir;

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.seed = 3;
  c.data.train_clips = 4;
  c.data.eval_clips = 2;
  c.data.height = c.data.width = 32;
  c.model.visual_channels = {8, 16, 32, 64};
  c.model.feature_dim = 32;
  c.model.detail_channels = 8;
  c.model.queries = 4;
  c.model.query_dim = 32;
  c.model.mask_dim = 16;
  c.model.heads = 2;
  c.model.decoder_layers = 1;
  c.model.denoiser_hidden = 64;
  c.model.denoiser_blocks = 2;
  c.text.k_tokens = 2;
  c.text.inversion_steps = 5;
  c.text.distractors = 5;
  c.diffusion_steps = 100;
  c.counterfactual.intervention_step = 10;
  c.counterfactual.pool_size = 3;
  c.counterfactual.candidates_per_slot = 2;
  c.contrast.embed_dim = 16;
  c.optim.lr = 1e-3;
  c.optim.batch_size = 2;
  c.optim.epochs = 2;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(f, l);) out.push_back(l);
  return out;
}

TEST(HarnessConfig, JsonRoundTripIsLossless) {
  auto c = tiny();
  c.toggles.sc = false;
  c.contrast.mode = cdcl::ContrastMode::kPrototype;
  const auto back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());

  TempDir dir("cfg");
  c.save(dir.path() / "c.json");
  EXPECT_EQ(ExperimentConfig::load(dir.path() / "c.json").to_json(), c.to_json());
}

TEST(HarnessConfig, UnknownKeysAreRejected) {
  auto j = tiny().to_json();
  j["optim"]["momentum"] = 0.9;
  EXPECT_THROW(ExperimentConfig::from_json(j), ValidationError);
  auto k = tiny().to_json();
  k["extra_section"] = nlohmann::json::object();
  EXPECT_THROW(ExperimentConfig::from_json(k), ValidationError);
}

TEST(HarnessConfig, SchemaVersionIsChecked) {
  auto j = tiny().to_json();
  j["schema_version"] = kSchemaVersion + 1;
  EXPECT_THROW(ExperimentConfig::from_json(j), ValidationError);
  j.erase("schema_version");
  EXPECT_THROW(ExperimentConfig::from_json(j), ValidationError);
}

TEST(HarnessConfig, IllegalToggleCombinationsAreRejected) {
  auto c = tiny();
  c.toggles.mit = false;
  c.toggles.sc = true;
  EXPECT_THROW(c.validate(), ValidationError);

  c = tiny();
  c.toggles.pair_swap = true;  // with SC still on
  EXPECT_THROW(c.validate(), ValidationError);

  c = tiny();
  c.granularity.video = c.granularity.segment = c.granularity.frame = false;
  EXPECT_THROW(c.validate(), ValidationError);

  c = tiny();
  c.data.height = 48;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(HarnessConfig, HashIgnoresRunLengthOnly) {
  const auto c = tiny();
  auto longer = c;
  longer.optim.epochs = 99;
  longer.optim.max_steps = 7;
  longer.optim.eval_every = 5;
  EXPECT_EQ(c.hash(), longer.hash());
  auto other = c;
  other.optim.lr *= 2;
  EXPECT_NE(c.hash(), other.hash());
  other = c;
  other.toggles.cdcl = false;
  EXPECT_NE(c.hash(), other.hash());
}

class HarnessRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { splits_ = new data::DataSplits(data::build_datasets(tiny())); }
  static void TearDownTestSuite() {
    delete splits_;
    splits_ = nullptr;
  }
  const data::Dataset& train_set() const { return splits_->train; }
  const data::Dataset& eval_set() const { return splits_->eval; }

  static data::DataSplits* splits_;
};

data::DataSplits* HarnessRun::splits_ = nullptr;

TEST_F(HarnessRun, SegmentationLossDecreasesOnTinyData) {
  auto c = tiny();
  c.optim.epochs = 100;
  c.optim.max_steps = 10;
  Trainer t(c, train_set());
  std::vector<double> seg;
  while (!t.finished()) {
    const auto s = t.step();
    ASSERT_TRUE(std::isfinite(s.total));
    seg.push_back(s.seg);
    t.take_epoch_record(nullptr);
  }
  ASSERT_EQ(seg.size(), 10u);
  const double first = (seg[0] + seg[1] + seg[2]) / 3, last = (seg[7] + seg[8] + seg[9]) / 3;
  EXPECT_LT(last, first);
}

TEST_F(HarnessRun, FullModelReportsEveryLossTerm) {
  Trainer t(tiny(), train_set());
  const auto s = t.step();
  for (double v : {s.total, s.seg, s.cf, s.v_a, s.v_l, s.a_l}) EXPECT_TRUE(std::isfinite(v));
}

TEST_F(HarnessRun, TogglesOffLeaveOnlySegmentation) {
  auto c = tiny();
  c.toggles = {false, false, false, false};
  Trainer t(c, train_set());
  for (int i = 0; i < 2; ++i) {
    const auto s = t.step();
    EXPECT_TRUE(std::isnan(s.cf));
    EXPECT_TRUE(std::isnan(s.v_a));
    EXPECT_TRUE(std::isnan(s.v_l));
    EXPECT_TRUE(std::isnan(s.a_l));
    EXPECT_DOUBLE_EQ(s.total, s.seg);
  }
  const auto rec = t.take_epoch_record(nullptr);
  ASSERT_TRUE(rec);
  const auto j = rec->to_json();
  EXPECT_TRUE(j["cf"].is_null());
  EXPECT_TRUE(j["v_a"].is_null());
  EXPECT_FALSE(j["seg"].is_null());
}

TEST_F(HarnessRun, PairSwapProducesTextTerms) {
  auto c = tiny();
  c.toggles = {true, false, true, true};
  c.optim.batch_size = 4;
  Trainer t(c, train_set());
  const auto s = t.step();
  EXPECT_TRUE(std::isfinite(s.v_a));
  EXPECT_TRUE(std::isfinite(s.v_l));
  EXPECT_TRUE(std::isfinite(s.a_l));
  EXPECT_TRUE(std::isnan(s.cf));
}

TEST_F(HarnessRun, MetricsLogHasFixedFieldOrder) {
  TempDir dir("log");
  RunOptions o;
  o.out_dir = dir.path();
  const auto art = train(tiny(), train_set(), eval_set(), o);
  const auto log = lines(art.metrics_log);
  ASSERT_EQ(log.size(), 2u);
  const std::vector<std::string> expected{"epoch", "step", "loss", "seg", "cf", "v_a", "v_l", "a_l", "J", "F", "JF"};
  for (const auto& l : log) {
    const auto j = nlohmann::ordered_json::parse(l);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    EXPECT_EQ(keys, expected);
    EXPECT_TRUE(j["JF"].is_number());
  }
  EXPECT_EQ(lines(dir.path() / "steps.ndjson").size(), 4u);
  EXPECT_TRUE(fs::exists(dir.path() / "eval.tsv"));
  EXPECT_EQ(ExperimentConfig::load(dir.path() / "config.json").to_json(), tiny().to_json());
}

TEST_F(HarnessRun, ResumeReproducesUninterruptedRun) {
  auto c = tiny();
  c.optim.epochs = 3;
  TempDir a("full"), b("resumed");
  RunOptions full;
  full.out_dir = a.path();
  const auto ref = train(c, train_set(), eval_set(), full);

  RunOptions first;
  first.out_dir = b.path();
  first.stop_at_step = 3;  // mid-epoch
  const auto part = train(c, train_set(), eval_set(), first);
  EXPECT_FALSE(part.final_report);
  RunOptions second;
  second.out_dir = b.path();
  second.resume = part.checkpoint;
  train(c, train_set(), eval_set(), second);

  EXPECT_EQ(slurp(a.path() / "steps.ndjson"), slurp(b.path() / "steps.ndjson"));
  EXPECT_EQ(slurp(a.path() / "metrics.ndjson"), slurp(b.path() / "metrics.ndjson"));
  EXPECT_EQ(slurp(a.path() / "checkpoint.bin"), slurp(b.path() / "checkpoint.bin"));
}

TEST_F(HarnessRun, CheckpointSaveLoadSaveIsByteIdentical) {
  TempDir dir("ckpt");
  Trainer t(tiny(), train_set());
  t.step();
  t.save_checkpoint(dir.path() / "a.bin");
  Trainer u(tiny(), train_set());
  u.load_checkpoint(dir.path() / "a.bin");
  u.save_checkpoint(dir.path() / "b.bin");
  const auto a = slurp(dir.path() / "a.bin");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir.path() / "b.bin"));
  EXPECT_EQ(u.global_step(), 1);
}

TEST_F(HarnessRun, ResumeUnderAnotherConfigIsRefused) {
  TempDir dir("mismatch");
  Trainer t(tiny(), train_set());
  t.step();
  t.save_checkpoint(dir.path() / "a.bin");
  auto other = tiny();
  other.loss.cf *= 2;
  Trainer u(other, train_set());
  try {
    u.load_checkpoint(dir.path() / "a.bin");
    FAIL() << "expected a refusal";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("refusing"), std::string::npos);
  }
  auto longer = tiny();
  longer.optim.epochs = 10;
  Trainer v(longer, train_set());
  EXPECT_NO_THROW(v.load_checkpoint(dir.path() / "a.bin"));
}

TEST_F(HarnessRun, CorruptCheckpointIsRejected) {
  TempDir dir("corrupt");
  Trainer t(tiny(), train_set());
  t.save_checkpoint(dir.path() / "a.bin");
  auto bytes = slurp(dir.path() / "a.bin");
  std::ofstream(dir.path() / "trunc.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  std::ofstream(dir.path() / "tail.bin", std::ios::binary) << bytes << "x";
  EXPECT_THROW(t.load_checkpoint(dir.path() / "trunc.bin"), Error);
  EXPECT_THROW(t.load_checkpoint(dir.path() / "tail.bin"), Error);
  EXPECT_THROW(t.load_checkpoint(dir.path() / "missing.bin"), Error);
}

TEST_F(HarnessRun, EvaluationIsDeterministicAndNoiseFreeAtInfiniteSnr) {
  TempDir dir("eval");
  Trainer t(tiny(), train_set());
  t.step();
  t.save_checkpoint(dir.path() / "a.bin");
  const auto r1 = evaluate_checkpoint(dir.path() / "a.bin", eval_set());
  const auto r2 = evaluate_checkpoint(dir.path() / "a.bin", eval_set());
  EXPECT_EQ(r1.to_tsv(), r2.to_tsv());
  EvalOptions inf;
  inf.snr_db = std::numeric_limits<double>::infinity();
  inf.seed = 11;
  EXPECT_EQ(evaluate_checkpoint(dir.path() / "a.bin", eval_set(), inf).to_tsv(), r1.to_tsv());
  EXPECT_EQ(t.evaluate(eval_set()).to_tsv(), r1.to_tsv());
  ASSERT_EQ(r1.clips.size(), eval_set().size());
  EXPECT_GE(r1.jf, 0.0);
  EXPECT_LE(r1.jf, 100.0);
}

TEST_F(HarnessRun, InferenceDoesNotDependOnTrainingOnlyToggles) {
  const DataShape shape{4, 2, train_set().frames, 32, 32};
  auto off = tiny();
  off.toggles = {false, false, false, false};
  torch::manual_seed(5);
  IcfModel a(tiny(), shape);
  torch::manual_seed(5);
  IcfModel b(off, shape);
  a->eval();
  b->eval();
  torch::NoGradGuard ng;
  const auto batch = data::make_batch(eval_set(), {0, 1});
  const auto la = a->infer(batch);
  EXPECT_TRUE(torch::equal(la, b->infer(batch)));
  a->implicit_text(a->encode(batch), 1);
  EXPECT_TRUE(torch::equal(la, a->infer(batch)));
}

TEST_F(HarnessRun, AudioNoiseChangesOnlyTheAudio) {
  EvalOptions o;
  o.snr_db = 0.0;
  o.seed = 2;
  const auto d = degrade(eval_set(), o);
  ASSERT_EQ(d.size(), eval_set().size());
  EXPECT_TRUE(torch::equal(d.samples[0].frames, eval_set().samples[0].frames));
  EXPECT_FALSE(torch::equal(d.samples[0].mel, eval_set().samples[0].mel));
  EXPECT_TRUE(torch::equal(d.samples[0].masks, eval_set().samples[0].masks));
}

TEST(HarnessDegrade, NoiseMatchesRequestedSnr) {
  data::RawClip clip;
  clip.sample_rate = 16000;
  clip.waveform.resize(160000);
  for (std::size_t i = 0; i < clip.waveform.size(); ++i) clip.waveform[i] = std::sin(0.01 * static_cast<double>(i));
  const auto noisy = data::add_audio_noise(clip, 10.0, 4);
  double ps = 0, pn = 0;
  for (std::size_t i = 0; i < clip.waveform.size(); ++i) {
    ps += clip.waveform[i] * clip.waveform[i];
    const double n = noisy.waveform[i] - clip.waveform[i];
    pn += n * n;
  }
  EXPECT_NEAR(10.0 * std::log10(ps / pn), 10.0, 0.1);
  EXPECT_EQ(data::add_audio_noise(clip, std::numeric_limits<double>::infinity(), 4).waveform, clip.waveform);
  EXPECT_THROW(data::add_audio_noise(clip, std::nan(""), 4), ValidationError);
}

TEST(HarnessDegrade, FrameMixInjectsFloorOfFractionTimesT) {
  auto cfg = tiny();
  for (int frames : {5, 8}) {
    cfg.data.frames = frames;
    const auto clips = data::build_datasets(cfg).eval.clips;
    const auto mixed = data::mix_frames(clips, 0.25, 9);
    const int expected = static_cast<int>(std::floor(0.25 * frames));
    for (std::size_t i = 0; i < mixed.size(); ++i) {
      int injected = 0;
      for (int t = 0; t < frames; ++t) {
        const auto& p = mixed[i].frame_provenance.at(t);
        if (p.empty()) continue;
        ++injected;
        EXPECT_EQ(p.rfind(clips[i].id + ":", 0), std::string::npos) << "donor must be another clip";
        const auto px = mixed[i].pixels_per_frame();
        for (std::size_t k = 0; k < px; ++k) ASSERT_EQ(mixed[i].masks[t * px + k], 0);
      }
      EXPECT_EQ(injected, expected) << "T=" << frames;
    }
  }
  EXPECT_THROW(data::mix_frames({}, 1.5, 1), ValidationError);
}

TEST(HarnessAblation, AxesHaveTheExpectedRows) {
  const auto base = tiny();
  const std::map<std::string, std::pair<std::size_t, std::size_t>> expected{
      {"components", {6, 0}},   {"granularity", {3, 0}},   {"cf-dimension", {4, 0}}, {"cf-space", {3, 1}},
      {"contrast-pairs", {3, 0}}, {"contrast-mode", {3, 0}}, {"pair-swap", {3, 2}},    {"full", {1, 0}}};
  ASSERT_EQ(expected.size(), ablation_axes().size());
  for (const auto& axis : ablation_axes()) {
    const auto rows = ablation_rows(base, axis);
    std::size_t skipped = 0;
    std::set<std::string> labels;
    for (const auto& r : rows) {
      skipped += !r.skipped.empty();
      labels.insert(r.label);
    }
    EXPECT_EQ(rows.size(), expected.at(axis).first) << axis;
    EXPECT_EQ(skipped, expected.at(axis).second) << axis;
    EXPECT_EQ(labels.size(), rows.size()) << axis;
  }
  EXPECT_THROW(ablation_rows(base, "depth"), ValidationError);

  const auto comp = ablation_rows(base, "components");
  EXPECT_FALSE(comp[0].config.toggles.mit || comp[0].config.toggles.sc || comp[0].config.toggles.cdcl);
  EXPECT_TRUE(comp[5].config.toggles.mit && comp[5].config.toggles.sc && comp[5].config.toggles.cdcl);
  const auto pairs = ablation_rows(base, "contrast-pairs");
  EXPECT_FALSE(pairs[0].config.pairs.v_a || pairs[0].config.pairs.a_l);
  EXPECT_TRUE(pairs[2].config.pairs.v_a && pairs[2].config.pairs.v_l && pairs[2].config.pairs.a_l);
}

TEST_F(HarnessRun, FullAblationRowMatchesPlainTraining) {
  TempDir a("abl"), b("plain");
  auto base = tiny();
  base.optim.epochs = 1;
  const auto rows = ablate(base, "full", {base.seed}, a.path());
  ASSERT_EQ(rows.size(), 1u);
  ASSERT_EQ(rows[0].reports.size(), 1u);
  RunOptions o;
  o.out_dir = b.path();
  const auto art = train(base, train_set(), eval_set(), o);
  EXPECT_EQ(rows[0].reports[0].to_tsv(), art.final_report->to_tsv());
  EXPECT_DOUBLE_EQ(rows[0].jf, art.final_report->jf);
  EXPECT_TRUE(fs::exists(a.path() / "ablation.tsv"));
}

TEST(HarnessSweep, IllegalValuesAreRejectedBeforeTraining) {
  const auto base = tiny();
  TempDir dir("sweep");
  EXPECT_THROW(sweep(base, "k_c", {4, 2.5}, dir.path()), ValidationError);
  EXPECT_THROW(sweep(base, "k_c", {0}, dir.path()), ValidationError);
  EXPECT_THROW(sweep(base, "alpha_o", {0.5, 0.95}, dir.path()), ValidationError);
  EXPECT_THROW(sweep(base, "s_d", {0}, dir.path()), ValidationError);
  EXPECT_THROW(sweep(base, "s_d", {static_cast<double>(base.diffusion_steps)}, dir.path()), ValidationError);
  EXPECT_THROW(sweep(base, "r_a", {-std::numeric_limits<double>::infinity()}, dir.path()), ValidationError);
  EXPECT_THROW(sweep(base, "r_v", {1.5}, dir.path()), ValidationError);
  EXPECT_THROW(sweep(base, "r_v", {}, dir.path()), ValidationError);
  EXPECT_THROW(sweep(base, "lr", {0.1}, dir.path()), ValidationError);
  EXPECT_TRUE(fs::is_empty(dir.path()));
}

TEST(HarnessSweep, ValuesMapOntoTheConfig) {
  const auto base = tiny();
  EXPECT_EQ(sweep_config(base, "k_c", 12).counterfactual.pool_size, 12);
  const auto a = sweep_config(base, "alpha_o", 0.3);
  EXPECT_DOUBLE_EQ(a.counterfactual.alpha_low, 0.3);
  EXPECT_NEAR(a.counterfactual.alpha_high, 0.4, 1e-12);
  EXPECT_EQ(sweep_config(base, "s_d", 50).counterfactual.intervention_step, 50);
  EXPECT_EQ(sweep_config(base, "r_a", 5).to_json(), base.to_json());
  EXPECT_EQ(sweep_config(base, "r_v", 0.5).to_json(), base.to_json());
}

TEST_F(HarnessRun, SameSeedSameLogDifferentSeedDifferentLog) {
  auto c = tiny();
  c.optim.epochs = 1;
  TempDir a("s1"), b("s2"), d("s3");
  RunOptions o;
  o.out_dir = a.path();
  train(c, train_set(), eval_set(), o);
  o.out_dir = b.path();
  train(c, train_set(), eval_set(), o);
  c.seed += 1;
  o.out_dir = d.path();
  train(c, train_set(), eval_set(), o);
  EXPECT_EQ(slurp(a.path() / "metrics.ndjson"), slurp(b.path() / "metrics.ndjson"));
  EXPECT_NE(slurp(a.path() / "metrics.ndjson"), slurp(d.path() / "metrics.ndjson"));
}

TEST_F(HarnessRun, ExportWritesMatchingShapes) {
  TempDir dir("emb");
  Trainer t(tiny(), train_set());
  t.save_checkpoint(dir.path() / "a.bin");
  export_embeddings(dir.path() / "a.bin", eval_set(), dir.path() / "out");
  const auto rows = eval_set().size() * 3;  // visual, audio, text per clip
  const auto dim = static_cast<std::size_t>(tiny().model.feature_dim);
  const auto emb = static_cast<std::size_t>(tiny().contrast.embed_dim);
  EXPECT_EQ(fs::file_size(dir.path() / "out" / "embeddings_pre.f32"), rows * dim * sizeof(float));
  EXPECT_EQ(fs::file_size(dir.path() / "out" / "embeddings_post.f32"), rows * emb * sizeof(float));
  EXPECT_EQ(lines(dir.path() / "out" / "embeddings.tsv").size(), rows + 3);
}

}  // namespace
}  // namespace icf
