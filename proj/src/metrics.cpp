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

#include "icf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "icf/common.hpp"

namespace icf::metrics {
namespace {

ValidationError invalid(const std::string& what) { return ValidationError("metrics", what); }

void check_shapes(const torch::Tensor& pred, const torch::Tensor& gt) {
  if (pred.sizes() != gt.sizes()) throw invalid("prediction and ground truth shapes differ");
}

struct Counts {
  double tp = 0, pred = 0, gt = 0;
};

Counts count(const torch::Tensor& pred, const torch::Tensor& gt) {
  const auto p = pred != 0, g = gt != 0;
  return {static_cast<double>((p & g).sum().item<std::int64_t>()),
          static_cast<double>(p.sum().item<std::int64_t>()),
          static_cast<double>(g.sum().item<std::int64_t>())};
}

double jaccard_of(const Counts& c) {
  const double uni = c.pred + c.gt - c.tp;
  return uni == 0 ? 100.0 : 100.0 * c.tp / uni;
}

double fscore_of(const Counts& c, double beta2) {
  if (c.pred == 0 && c.gt == 0) return 100.0;
  if (c.pred == 0 || c.gt == 0 || c.tp == 0) return 0.0;
  const double p = c.tp / c.pred, r = c.tp / c.gt;
  return 100.0 * (1 + beta2) * p * r / (beta2 * p + r);
}

double median(std::vector<double> v) {
  if (v.empty()) throw invalid("median of an empty corpus");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double jaccard(const torch::Tensor& pred, const torch::Tensor& gt) {
  check_shapes(pred, gt);
  return jaccard_of(count(pred, gt));
}

double fscore(const torch::Tensor& pred, const torch::Tensor& gt, double beta2) {
  check_shapes(pred, gt);
  if (!(beta2 > 0)) throw invalid("beta^2 must be positive");
  return fscore_of(count(pred, gt), beta2);
}

EvalReport evaluate(const std::vector<ClipMasks>& clips, bool semantic, double beta2) {
  if (clips.empty()) throw invalid("nothing to evaluate");
  EvalReport report;
  std::map<int, std::pair<double, double>> class_sums;
  for (const auto& c : clips) {
    check_shapes(c.pred, c.gt);
    if (c.pred.dim() != 3) throw invalid("clip masks must be [T, H, W]");
    ClipScore s{c.id, 0.0, 0.0};
    if (!semantic) {
      const auto t = c.pred.size(0);
      for (std::int64_t i = 0; i < t; ++i) {
        const auto k = count(c.pred[i], c.gt[i]);
        s.j += jaccard_of(k);
        s.f += fscore_of(k, beta2);
      }
      s.j /= static_cast<double>(t);
      s.f /= static_cast<double>(t);
    } else {
      const auto labels = torch::cat({c.pred.reshape(-1), c.gt.reshape(-1)}).to(torch::kLong);
      const auto present = std::get<0>(torch::_unique(labels));
      int n = 0;
      for (std::int64_t i = 0; i < present.numel(); ++i) {
        const int cls = static_cast<int>(present[i].item<std::int64_t>());
        if (cls == 0) continue;
        const auto k = count(c.pred == cls, c.gt == cls);
        const double j = jaccard_of(k), f = fscore_of(k, beta2);
        s.j += j;
        s.f += f;
        auto& acc = report.classes[cls];
        acc.clips++;
        class_sums[cls].first += j;
        class_sums[cls].second += f;
        ++n;
      }
      if (n == 0) {
        s.j = s.f = 100.0;  // nothing sounding and nothing predicted
      } else {
        s.j /= n;
        s.f /= n;
      }
    }
    report.j += s.j;
    report.f += s.f;
    report.clips.push_back(s);
  }
  report.j /= static_cast<double>(clips.size());
  report.f /= static_cast<double>(clips.size());
  report.jf = 0.5 * (report.j + report.f);
  for (auto& [cls, score] : report.classes) {
    score.j = class_sums[cls].first / static_cast<double>(score.clips);
    score.f = class_sums[cls].second / static_cast<double>(score.clips);
  }
  return report;
}

std::string EvalReport::to_tsv() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "clip\tJ\tF\tJF\n";
  for (const auto& c : clips) out << c.id << '\t' << c.j << '\t' << c.f << '\t' << 0.5 * (c.j + c.f) << '\n';
  out << "#summary\t" << j << '\t' << f << '\t' << jf << '\n';
  for (const auto& [cls, s] : classes) {
    out << "#class\t" << cls << '\t' << s.j << '\t' << s.f << '\t' << s.clips << '\n';
  }
  return out.str();
}

void EvalReport::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("metrics", "cannot write " + path.string());
  out << to_tsv();
}

EvalReport EvalReport::parse_tsv(const std::string& text) {
  EvalReport r;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "clip\tJ\tF\tJF") throw IoError("metrics", "missing report header");
  bool summary = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string head;
    std::getline(row, head, '\t');
    if (head == "#summary") {
      row >> r.j >> r.f >> r.jf;
      summary = true;
    } else if (head == "#class") {
      int cls = 0;
      ClassScore s;
      row >> cls >> s.j >> s.f >> s.clips;
      r.classes[cls] = s;
    } else {
      ClipScore c{head, 0, 0};
      double jf = 0;
      row >> c.j >> c.f >> jf;
      r.clips.push_back(c);
    }
    if (row.fail()) throw IoError("metrics", "malformed report line: " + line);
  }
  if (!summary) throw IoError("metrics", "report has no summary line");
  return r;
}

std::string quadrant_name(Quadrant q) {
  switch (q) {
    case Quadrant::kBottomLeft:
      return "bottom-left";
    case Quadrant::kBottomRight:
      return "bottom-right";
    case Quadrant::kTopLeft:
      return "top-left";
    case Quadrant::kTopRight:
      return "top-right";
  }
  return "unknown";
}

ClipComplexity clip_complexity(const data::RawClip& clip, const enc::MelConfig& mel) {
  if (clip.num_frames < 2) throw invalid("clip " + clip.id + " has fewer than 2 frames");
  ClipComplexity c;
  c.id = clip.id;
  const auto frames = torch::from_blob(const_cast<std::uint8_t*>(clip.frames.data()),
                                       {clip.num_frames, static_cast<std::int64_t>(clip.frames.size() / clip.num_frames)},
                                       torch::kUInt8)
                          .to(torch::kFloat64) /
                      255.0;
  c.visual_mse = (frames.slice(0, 1) - frames.slice(0, 0, -1)).pow(2).mean().item<double>();
  const auto feats = enc::mel_frontend(clip.waveform, clip.sample_rate, clip.num_frames, mel)
                         .to(torch::kFloat64)
                         .reshape({-1, mel.n_mels});
  // Bands more than 80 dB below the clip peak are flattened so leakage noise
  // in empty bands does not count as spectral change.
  const auto floored = feats.clamp_min(feats.max().item<double>() - std::log(1e8));
  c.audio_melchange = (floored.slice(0, 1) - floored.slice(0, 0, -1)).norm(2, 1).mean().item<double>();
  return c;
}

ComplexityReport corpus_complexity(const std::vector<data::RawClip>& clips, const enc::MelConfig& mel) {
  if (clips.empty()) throw invalid("empty corpus");
  ComplexityReport r;
  std::vector<double> vis, aud;
  for (const auto& clip : clips) {
    r.clips.push_back(clip_complexity(clip, mel));
    vis.push_back(r.clips.back().visual_mse);
    aud.push_back(r.clips.back().audio_melchange);
  }
  r.visual_median = median(vis);
  r.audio_median = median(aud);
  for (auto& c : r.clips) {
    const int high_v = c.visual_mse > r.visual_median ? 1 : 0;
    const int high_a = c.audio_melchange > r.audio_median ? 2 : 0;
    c.quadrant = static_cast<Quadrant>(high_v + high_a);
  }
  return r;
}

}  // namespace icf::metrics
