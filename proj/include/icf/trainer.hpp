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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "icf/config.hpp"
#include "icf/dataset.hpp"
#include "icf/metrics.hpp"
#include "icf/model.hpp"

namespace icf {

namespace fs = std::filesystem;

// Loss terms of one optimizer step; absent terms are NaN.
struct StepLosses {
  double total = 0.0;
  double seg = 0.0;
  double cf = 0.0;
  double v_a = 0.0;
  double v_l = 0.0;
  double a_l = 0.0;
};

// One metrics-log line. Field order is fixed: epoch, step, loss, seg, cf,
// v_a, v_l, a_l, J, F, JF (loss terms are epoch means; null when absent or
// not evaluated that epoch).
struct EpochRecord {
  int epoch = 0;
  std::int64_t step = 0;
  StepLosses mean;
  std::optional<metrics::EvalReport> report;

  nlohmann::ordered_json to_json() const;
};

struct EvalOptions {
  double snr_db = std::numeric_limits<double>::infinity();  // r^a
  double frame_mix = 0.0;                                     // r^v
  std::uint64_t seed = 0;
};

class Trainer {
 public:
  // Seeds LibTorch with cfg.seed before building the model so parameter
  // initialisation is reproducible.
  Trainer(const ExperimentConfig& cfg, const data::Dataset& train);

  // One optimizer step at the current position (regenerates counterfactual
  // pools at epoch boundaries when SC is on).
  StepLosses step();
  bool finished() const;
  std::int64_t total_steps() const;
  std::int64_t steps_per_epoch() const;

  // Closes the current epoch if the last step completed it.
  std::optional<EpochRecord> take_epoch_record(const data::Dataset* eval);

  metrics::EvalReport evaluate(const data::Dataset& ds);

  // Binary layout: "ICFCKPT\0", u32 version, u64 config hash, config JSON,
  // counters, epoch accumulators, every named parameter and buffer,
  // AdamW state per parameter, counterfactual pools.
  void save_checkpoint(const fs::path& path) const;
  // Throws ValidationError when the checkpoint was written under another
  // config hash.
  void load_checkpoint(const fs::path& path);

  IcfModel& model() { return model_; }
  const ExperimentConfig& config() const { return cfg_; }
  std::int64_t global_step() const { return step_; }
  int epoch() const { return epoch_; }

 private:
  std::vector<std::int64_t> epoch_order(int epoch) const;
  void refresh_pools();
  seg::LossTerms losses(const data::Batch& batch, std::uint64_t seed);

  ExperimentConfig cfg_;
  const data::Dataset& train_;
  IcfModel model_{nullptr};
  std::unique_ptr<torch::optim::AdamW> optim_;
  std::int64_t step_ = 0;
  int epoch_ = 0;
  std::int64_t position_ = 0;  // steps taken inside the current epoch
  // per training clip: [K, L, d] texts and [K] alphas
  std::vector<torch::Tensor> pool_texts_;
  std::vector<torch::Tensor> pool_alphas_;
  // running sums of the current epoch (value, count) per loss term
  std::array<double, 6> sums_{};
  std::array<std::int64_t, 6> counts_{};
};

struct RunOptions {
  fs::path out_dir;
  std::optional<fs::path> resume;
  // > 0: stop (and checkpoint) once the global step reaches this value.
  std::int64_t stop_at_step = 0;
  bool verbose = false;
};

struct RunArtifacts {
  fs::path checkpoint;
  fs::path metrics_log;
  std::vector<StepLosses> steps;  // steps run by this call
  std::vector<EpochRecord> epochs;
  std::optional<metrics::EvalReport> final_report;
};

// Trains on prepared datasets; writes config.json, metrics.ndjson,
// steps.ndjson, checkpoint.bin and (when the run completes) eval.tsv.
RunArtifacts train(const ExperimentConfig& cfg, const data::Dataset& train, const data::Dataset& eval,
                   const RunOptions& opts);
RunArtifacts train(const ExperimentConfig& cfg, const RunOptions& opts);

// Evaluates a checkpoint on `ds` (inference path only), optionally under an
// audio-noise or frame-mixing degradation.
metrics::EvalReport evaluate_checkpoint(const fs::path& checkpoint, const data::Dataset& ds,
                                        const EvalOptions& opts = {});
ExperimentConfig checkpoint_config(const fs::path& checkpoint);

// Applies the degradations in `opts` to a dataset.
data::Dataset degrade(const data::Dataset& ds, const EvalOptions& opts);

struct AblationRow {
  std::string label;
  ExperimentConfig config;
  std::string skipped;  // reason when the row is out of scope
  std::vector<metrics::EvalReport> reports;  // one per seed
  double j = 0.0, f = 0.0, jf = 0.0;       // means over seeds
};

inline const std::vector<std::string>& ablation_axes() {
  static const std::vector<std::string> axes{"components",    "granularity",    "cf-dimension", "cf-space",
                                             "contrast-pairs", "contrast-mode", "pair-swap",    "full"};
  return axes;
}

// Rows of an axis with their configs (no training). Throws for unknown axes.
std::vector<AblationRow> ablation_rows(const ExperimentConfig& base, const std::string& axis);
// Trains every runnable row once per seed and writes <out>/ablation.tsv.
std::vector<AblationRow> ablate(const ExperimentConfig& base, const std::string& axis,
                                const std::vector<std::uint64_t>& seeds, const fs::path& out, bool verbose = false);
std::string ablation_table(const std::vector<AblationRow>& rows);

struct SweepPoint {
  double value = 0.0;
  metrics::EvalReport report;
};

inline const std::vector<std::string>& sweep_params() {
  static const std::vector<std::string> params{"k_c", "alpha_o", "s_d", "r_a", "r_v"};
  return params;
}

// Config for one sweep value; throws ValidationError for illegal values.
// r_a and r_v leave the training config unchanged.
ExperimentConfig sweep_config(const ExperimentConfig& base, const std::string& param, double value);
// Checks every value before any training starts.
void validate_sweep(const ExperimentConfig& base, const std::string& param, const std::vector<double>& values);
std::vector<SweepPoint> sweep(const ExperimentConfig& base, const std::string& param,
                              const std::vector<double>& values, const fs::path& out, bool verbose = false);

// Writes embeddings_pre.f32 (pooled visual / audio features and, with MIT,
// the composite text mean), embeddings_post.f32 (the same rows through the
// contrast heads) and embeddings.tsv (row metadata plus matrix shapes).
void export_embeddings(const fs::path& checkpoint, const data::Dataset& ds, const fs::path& out);

}  // namespace icf
