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
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icf/common.hpp"
#include "icf/config.hpp"
#include "icf/dataset.hpp"
#include "icf/dataset_io.hpp"
#include "icf/metrics.hpp"
#include "icf/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string device = "cpu";
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "experiment config (JSON)");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (out_required) out->required();
  cmd->add_option("--device", c.device, "compute device (cpu)");
}

void check_device(const std::string& device) {
  if (device != "cpu" && device != "cpu:0") {
    throw icf::ValidationError("cli", "device '" + device + "' is not available; only cpu is supported");
  }
}

icf::ExperimentConfig load_config(const Common& c) {
  check_device(c.device);
  auto cfg = c.config.empty() ? icf::ExperimentConfig{} : icf::ExperimentConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

double parse_value(const std::string& s) {
  if (s == "inf" || s == "+inf" || s == "Inf") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw icf::ValidationError("cli", "not a number: " + s);
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_report(const icf::metrics::EvalReport& r) {
  std::cout << "J " << r.j << "  F " << r.f << "  J&F " << r.jf << "  (" << r.clips.size() << " clips)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implicit counterfactual framework for audio-visual segmentation"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, ablate_c, sweep_c, corpus_c, export_c;

  auto* gen = app.add_subcommand("gen-data", "write the configured synthetic clips in the AVSBench layout");
  add_common(gen, gen_c);

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, train_c);
  std::string resume;
  std::int64_t stop_at = 0;
  bool verbose = false;
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_option("--stop-at", stop_at, "stop (and checkpoint) at this global step");
  train->add_flag("--verbose", verbose, "print epoch records");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_c);
  std::string eval_ckpt;
  double snr = std::numeric_limits<double>::infinity(), frame_mix = 0.0;
  std::string snr_text = "inf";
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--snr", snr_text, "additive audio noise SNR in dB (inf = none)");
  eval->add_option("--frame-mix", frame_mix, "fraction of frames replaced from other clips");

  auto* ablate = app.add_subcommand("ablate", "train every row of an ablation axis");
  add_common(ablate, ablate_c);
  std::string axis, seeds_text = "0";
  ablate->add_option("--axis", axis, "components | granularity | cf-dimension | cf-space | contrast-pairs | "
                                     "contrast-mode | pair-swap | full")
      ->required();
  ablate->add_option("--seeds", seeds_text, "comma-separated seeds");
  ablate->add_flag("--verbose", verbose, "print progress");

  auto* sweep = app.add_subcommand("sweep", "sweep one hyperparameter");
  add_common(sweep, sweep_c);
  std::string param, values_text;
  sweep->add_option("--param", param, "k_c | alpha_o | s_d | r_a | r_v")->required();
  sweep->add_option("--values", values_text, "comma-separated values (inf allowed for r_a)")->required();
  sweep->add_flag("--verbose", verbose, "print progress");

  auto* corpus = app.add_subcommand("analyze-corpus", "visual/audio complexity quadrants of the training clips");
  add_common(corpus, corpus_c);
  std::string corpus_root;
  corpus->add_option("--data-root", corpus_root, "AVSBench-layout root (train split); default: config data");

  auto* exp = app.add_subcommand("export-embeddings", "dump pre/post contrast-head embeddings");
  add_common(exp, export_c);
  std::string export_ckpt;
  exp->add_option("--checkpoint", export_ckpt, "checkpoint file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto cfg = load_config(gen_c);
      if (cfg.data.source != "synthetic") throw icf::ValidationError("cli", "gen-data needs a synthetic data config");
      const auto splits = icf::data::build_datasets(cfg);
      const fs::path root = gen_c.out;
      auto write = [&](const icf::data::Dataset& ds, icf::data::Split split) {
        std::vector<icf::data::IndexEntry> index;
        for (const auto& clip : ds.clips) {
          icf::data::write_clip_dir(root, split, clip);
          index.push_back({clip.id, cfg.data.regime});
        }
        icf::data::write_index(root, split, index);
      };
      write(splits.train, icf::data::Split::kTrain);
      write(splits.eval, icf::data::Split::kTest);
      std::cout << "wrote " << splits.train.size() << " train and " << splits.eval.size() << " test clips to "
                << root << '\n';
    } else if (*train) {
      const auto cfg = load_config(train_c);
      icf::RunOptions opts;
      opts.out_dir = train_c.out;
      if (!resume.empty()) opts.resume = fs::path(resume);
      opts.stop_at_step = stop_at;
      opts.verbose = verbose;
      const auto art = icf::train(cfg, opts);
      std::cout << "checkpoint " << art.checkpoint << '\n';
      if (art.final_report) print_report(*art.final_report);
    } else if (*eval) {
      snr = parse_value(snr_text);
      check_device(eval_c.device);
      auto cfg = eval_c.config.empty() ? icf::checkpoint_config(eval_ckpt) : load_config(eval_c);
      const auto splits = icf::data::build_datasets(cfg);
      icf::EvalOptions opts;
      opts.snr_db = snr;
      opts.frame_mix = frame_mix;
      opts.seed = eval_c.seed.value_or(cfg.seed);
      const auto report = icf::evaluate_checkpoint(eval_ckpt, splits.eval, opts);
      report.save(fs::path(eval_c.out) / "eval.tsv");
      print_report(report);
    } else if (*ablate) {
      const auto cfg = load_config(ablate_c);
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split_list(seeds_text)) seeds.push_back(std::stoull(s));
      const auto rows = icf::ablate(cfg, axis, seeds, ablate_c.out, verbose);
      std::cout << icf::ablation_table(rows);
    } else if (*sweep) {
      const auto cfg = load_config(sweep_c);
      std::vector<double> values;
      for (const auto& s : split_list(values_text)) values.push_back(parse_value(s));
      const auto points = icf::sweep(cfg, param, values, sweep_c.out, verbose);
      for (const auto& p : points) std::cout << param << " = " << p.value << "  J&F " << p.report.jf << '\n';
    } else if (*corpus) {
      const auto cfg = load_config(corpus_c);
      std::vector<icf::data::RawClip> clips;
      if (!corpus_root.empty()) {
        for (auto& rec : icf::data::load_avsbench_dir(corpus_root, icf::data::Split::kTrain)) {
          if (rec.ok()) clips.push_back(std::move(*rec.clip));
          else std::cerr << "skipping clip: " << rec.error << '\n';
        }
      } else {
        clips = icf::data::build_datasets(cfg).train.clips;
      }
      const auto r = icf::metrics::corpus_complexity(clips);
      fs::create_directories(corpus_c.out);
      std::ofstream out(fs::path(corpus_c.out) / "complexity.tsv");
      out << std::setprecision(10) << "# visual_median\t" << r.visual_median << "\n# audio_median\t" << r.audio_median
          << "\nclip\tvisual_mse\taudio_melchange\tquadrant\n";
      int counts[4] = {0, 0, 0, 0};
      for (const auto& c : r.clips) {
        out << c.id << '\t' << c.visual_mse << '\t' << c.audio_melchange << '\t' << icf::metrics::quadrant_name(c.quadrant)
            << '\n';
        counts[static_cast<int>(c.quadrant)]++;
      }
      for (int q = 0; q < 4; ++q) {
        std::cout << icf::metrics::quadrant_name(static_cast<icf::metrics::Quadrant>(q)) << ": " << counts[q] << '\n';
      }
    } else if (*exp) {
      check_device(export_c.device);
      auto cfg = export_c.config.empty() ? icf::checkpoint_config(export_ckpt) : load_config(export_c);
      const auto splits = icf::data::build_datasets(cfg);
      icf::export_embeddings(export_ckpt, splits.eval, export_c.out);
      std::cout << "wrote embeddings to " << export_c.out << '\n';
    }
  } catch (const icf::Error& e) {
    std::cerr << "error [" << e.module() << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
