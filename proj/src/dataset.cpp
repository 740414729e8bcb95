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

#include "icf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <random>

#include "icf/common.hpp"
#include "icf/dataset_io.hpp"
#include "icf/tensor_util.hpp"

namespace icf::data {
namespace {

ValidationError invalid(const std::string& what) { return ValidationError("dataset", what); }

torch::Tensor mask_tensor(const RawClip& clip) {
  auto m = torch::from_blob(const_cast<std::uint8_t*>(clip.masks.data()),
                            {clip.num_frames, clip.height, clip.width}, torch::kUInt8)
               .clone();
  return clip.mask_mode == MaskMode::kSemantic ? m.to(torch::kLong) : m;
}

std::vector<RawClip> load_split(const fs::path& root, Split split) {
  std::vector<RawClip> clips;
  for (auto& rec : load_avsbench_dir(root, split)) {
    if (rec.ok()) {
      clips.push_back(std::move(*rec.clip));
    } else {
      std::cerr << "skipping clip: " << rec.error << '\n';
    }
  }
  return clips;
}

}  // namespace

Dataset prepare(std::vector<RawClip> clips, const enc::MelConfig& mel) {
  if (clips.empty()) throw invalid("no clips");
  Dataset ds;
  ds.frames = clips[0].num_frames;
  ds.height = clips[0].height;
  ds.width = clips[0].width;
  ds.semantic = clips[0].mask_mode == MaskMode::kSemantic;
  for (const auto& c : clips) {
    if (c.num_frames != ds.frames || c.height != ds.height || c.width != ds.width) {
      throw invalid("clip " + c.id + " does not match the first clip's T or resolution");
    }
    if ((c.mask_mode == MaskMode::kSemantic) != ds.semantic) throw invalid("clip " + c.id + " has another mask mode");
    Sample s;
    s.id = c.id;
    s.frames = enc::frames_to_tensor(c);
    s.mel = enc::mel_frontend(c.waveform, c.sample_rate, c.num_frames, mel);
    s.masks = mask_tensor(c);
    ds.samples.push_back(std::move(s));
  }
  ds.clips = std::move(clips);
  return ds;
}

std::uint64_t train_clip_seed(const DataConfig& cfg, int index) {
  return derive_seed(cfg.seed, static_cast<std::uint64_t>(index));
}

std::uint64_t eval_clip_seed(const DataConfig& cfg, int index) {
  return derive_seed(cfg.seed ^ 0x5eed5eed5eedULL, static_cast<std::uint64_t>(index));
}

DataSplits build_datasets(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  std::vector<RawClip> train, eval;
  if (d.source == "synthetic") {
    const auto regime = parse_regime(d.regime);
    auto make = [&](std::uint64_t seed, const std::string& id) {
      auto clip = generate_clip(make_regime_spec(regime, seed, d.height, d.width, d.frames));
      clip.id = id;
      return clip;
    };
    for (int i = 0; i < d.train_clips; ++i) {
      train.push_back(make(train_clip_seed(d, i), d.regime + "_train_" + std::to_string(i)));
    }
    if (d.eval_split == "heldout") {
      for (int i = 0; i < d.eval_clips; ++i) {
        eval.push_back(make(eval_clip_seed(d, i), d.regime + "_eval_" + std::to_string(i)));
      }
    }
  } else {
    train = load_split(d.root, Split::kTrain);
    if (static_cast<int>(train.size()) > d.train_clips) train.resize(d.train_clips);
    if (d.eval_split == "heldout") {
      eval = load_split(d.root, Split::kTest);
      if (static_cast<int>(eval.size()) > d.eval_clips) eval.resize(d.eval_clips);
    }
  }
  if (d.eval_split == "train") {
    eval.assign(train.begin(), train.begin() + std::min<std::size_t>(train.size(), d.eval_clips));
  }
  if (train.empty()) throw invalid("training split is empty");
  if (eval.empty()) throw invalid("evaluation split is empty");
  return {prepare(std::move(train)), prepare(std::move(eval))};
}

Batch make_batch(const Dataset& ds, const std::vector<std::int64_t>& indices) {
  if (indices.empty()) throw invalid("empty batch");
  std::vector<torch::Tensor> f, m, k;
  for (auto i : indices) {
    if (i < 0 || i >= static_cast<std::int64_t>(ds.size())) throw invalid("batch index out of range");
    const auto& s = ds.samples[i];
    f.push_back(s.frames);
    m.push_back(s.mel);
    k.push_back(s.masks);
  }
  Batch b;
  b.frames = torch::cat(f, 0);
  b.mel = torch::cat(m, 0);
  b.masks = torch::cat(k, 0);
  b.clip_index = torch::tensor(indices, torch::kLong);
  b.clips = static_cast<std::int64_t>(indices.size());
  b.frames_per_clip = ds.frames;
  return b;
}

RawClip add_audio_noise(const RawClip& clip, double snr_db, std::uint64_t seed) {
  if (std::isnan(snr_db)) throw invalid("SNR must not be NaN");
  RawClip out = clip;
  if (std::isinf(snr_db) && snr_db > 0) return out;
  if (std::isinf(snr_db)) throw invalid("SNR of -inf is not a degradation");
  double power = 0.0;
  for (float s : clip.waveform) power += static_cast<double>(s) * s;
  power /= std::max<std::size_t>(clip.waveform.size(), 1);
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& s : out.waveform) s = static_cast<float>(s + sigma * gauss(rng));
  return out;
}

std::vector<RawClip> mix_frames(const std::vector<RawClip>& clips, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw invalid("frame-mix fraction must lie in [0, 1]");
  std::vector<RawClip> out = clips;
  if (fraction == 0.0 || clips.empty()) return out;
  if (clips.size() < 2) throw invalid("frame mixing needs at least two clips");
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& clip = out[i];
    const int t = clip.num_frames;
    const int inject = static_cast<int>(std::floor(fraction * t + 1e-9));
    std::vector<int> order(t);
    for (int f = 0; f < t; ++f) order[f] = f;
    std::shuffle(order.begin(), order.end(), rng);
    clip.frame_provenance.resize(t);
    for (int n = 0; n < inject; ++n) {
      const int f = order[n];
      std::size_t donor = std::uniform_int_distribution<std::size_t>(0, clips.size() - 2)(rng);
      if (donor >= i) ++donor;
      const auto& src = clips[donor];
      if (src.height != clip.height || src.width != clip.width) throw invalid("frame mixing needs one resolution");
      const int df = std::uniform_int_distribution<int>(0, src.num_frames - 1)(rng);
      const auto px = clip.pixels_per_frame();
      std::copy_n(src.frames.begin() + df * px * 3, px * 3, clip.frames.begin() + f * px * 3);
      std::fill_n(clip.masks.begin() + f * px, px, std::uint8_t{0});
      clip.frame_provenance[f] = src.id + ":" + std::to_string(df);
    }
  }
  return out;
}

}  // namespace icf::data
