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

#include "icf/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "icf/common.hpp"

namespace icf::data {
namespace {

constexpr std::uint8_t kBackgroundLevel = 96;

ValidationError invalid(const std::string& what) {
  return ValidationError("data_synth", what);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct PixelGeometry {
  double cx, cy, r;
};

PixelGeometry geometry_at(const SourceSpec& s, int t, int height, int width) {
  const double m = std::min(height, width);
  return {(s.trajectory.x0 + s.trajectory.vx * t) * width,
          (s.trajectory.y0 + s.trajectory.vy * t) * height,
          s.trajectory.radius * m};
}

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

void validate_source(const SourceSpec& s, const ClipSpec& spec, bool distractor) {
  if (static_cast<int>(s.active_frames.size()) != spec.num_frames && !distractor) {
    throw invalid("active_frames length must equal num_frames");
  }
  if (s.loudness < 0.0 || s.loudness > 1.0) throw invalid("loudness outside [0,1]");
  if (s.trajectory.radius <= 0.0) throw invalid("source radius must be positive");
  if (s.tone.frequency_hz <= 0.0 || s.tone.frequency_hz >= spec.audio_sr / 2.0) {
    throw invalid("tone frequency must lie in (0, sr/2)");
  }
  if (s.tone.timbre < 0 || s.tone.timbre > 2) throw invalid("unknown timbre id");
  if (distractor && s.audible_offscreen) return;  // never drawn
  for (int t = 0; t < spec.num_frames; ++t) {
    const auto g = geometry_at(s, t, spec.height, spec.width);
    if (g.cx - g.r < 0.0 || g.cx + g.r > spec.width || g.cy - g.r < 0.0 ||
        g.cy + g.r > spec.height) {
      throw invalid("trajectory leaves the frame at t=" + std::to_string(t));
    }
  }
}

double tone_sample(const Tone& tone, double time) {
  const double w = 2.0 * std::numbers::pi * tone.frequency_hz * time;
  switch (tone.timbre) {
    case 0:
      return std::sin(w);
    case 1:
      return (std::sin(w) + std::sin(3 * w) / 3.0 + std::sin(5 * w) / 5.0) /
             (1.0 + 1.0 / 3.0 + 1.0 / 5.0);
    default:
      return (std::sin(w) + std::sin(2 * w) / 2.0 + std::sin(3 * w) / 3.0 +
              std::sin(4 * w) / 4.0) /
             (1.0 + 0.5 + 1.0 / 3.0 + 0.25);
  }
}

bool sounding(const SourceSpec& s, int t) {
  return t < static_cast<int>(s.active_frames.size()) && s.active_frames[t];
}

}  // namespace

std::span<const std::uint8_t> RawClip::frame(int t) const {
  const auto n = pixels_per_frame() * 3;
  return {frames.data() + n * t, n};
}

std::span<const std::uint8_t> RawClip::mask(int t) const {
  const auto n = pixels_per_frame();
  return {masks.data() + n * t, n};
}

std::span<const float> RawClip::audio_window(int t) const {
  const auto n = samples_per_frame();
  return {waveform.data() + n * t, n};
}

void validate(const ClipSpec& spec) {
  if (spec.num_frames < 1) throw invalid("num_frames must be >= 1");
  if (spec.height < 4 || spec.width < 4) throw invalid("invalid resolution");
  if (spec.audio_sr <= 0) throw invalid("audio_sr must be positive");
  if (spec.sources.empty()) throw invalid("source list is empty");
  for (const auto& s : spec.sources) validate_source(s, spec, false);
  for (const auto& s : spec.noise_sources) validate_source(s, spec, true);
}

bool source_covers(const SourceSpec& source, int t, int px, int py, int height,
                   int width) {
  const auto g = geometry_at(source, t, height, width);
  const double x = px + 0.5 - g.cx;
  const double y = py + 0.5 - g.cy;
  switch (source.shape) {
    case ShapeClass::kCircle:
      return x * x + y * y <= g.r * g.r;
    case ShapeClass::kSquare:
      return std::abs(x) <= g.r && std::abs(y) <= g.r;
    case ShapeClass::kBar:
      return std::abs(x) <= g.r && std::abs(y) <= g.r / 3.0;
    case ShapeClass::kTriangle: {
      // apex up, base at the bottom of the bounding square
      const double e0 = edge(0, -g.r, -g.r, g.r, x, y);
      const double e1 = edge(-g.r, g.r, g.r, g.r, x, y);
      const double e2 = edge(g.r, g.r, 0, -g.r, x, y);
      return (e0 <= 0 && e1 <= 0 && e2 <= 0) || (e0 >= 0 && e1 >= 0 && e2 >= 0);
    }
  }
  return false;
}

std::vector<std::uint8_t> rasterize(const SourceSpec& source, int t, int height,
                                    int width) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(height) * width, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out[static_cast<std::size_t>(y) * width + x] =
          source_covers(source, t, x, y, height, width) ? 1 : 0;
    }
  }
  return out;
}

RawClip generate_clip(const ClipSpec& spec) {
  validate(spec);
  RawClip clip;
  clip.id = "synth_" + std::to_string(spec.seed);
  clip.num_frames = spec.num_frames;
  clip.height = spec.height;
  clip.width = spec.width;
  clip.sample_rate = spec.audio_sr;
  clip.mask_mode = spec.mask_mode;
  clip.frame_provenance.assign(spec.num_frames, "");
  for (const auto& s : spec.sources) clip.class_labels.push_back(s.concept_id);

  const std::size_t hw = clip.pixels_per_frame();
  const int T = spec.num_frames;

  // Static background texture, identical in every frame.
  std::vector<std::uint8_t> background(hw * 3, kBackgroundLevel);
  if (spec.background_noise > 0.0) {
    std::mt19937_64 rng(derive_seed(spec.seed, 2));
    for (auto& v : background) {
      const double n = uniform(rng, -1.0, 1.0) * spec.background_noise * 255.0;
      v = static_cast<std::uint8_t>(std::clamp(kBackgroundLevel + n, 0.0, 255.0));
    }
  }

  clip.frames.resize(hw * 3 * T);
  clip.masks.assign(hw * T, 0);
  for (int t = 0; t < T; ++t) {
    auto* frame = clip.frames.data() + hw * 3 * t;
    std::copy(background.begin(), background.end(), frame);
    auto* mask = clip.masks.data() + hw * t;
    auto paint = [&](const SourceSpec& s, bool label) {
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          if (!source_covers(s, t, x, y, spec.height, spec.width)) continue;
          const std::size_t p = static_cast<std::size_t>(y) * spec.width + x;
          std::copy(s.color.begin(), s.color.end(), frame + p * 3);
          if (!label) continue;
          mask[p] = spec.mask_mode == MaskMode::kBinary
                        ? 1
                        : static_cast<std::uint8_t>(std::max(s.concept_id, 0) + 1);
        }
      }
    };
    // Visible distractors sit behind the real sources.
    for (const auto& s : spec.noise_sources) {
      if (!s.audible_offscreen) paint(s, false);
    }
    for (const auto& s : spec.sources) paint(s, sounding(s, t));
  }

  const auto spf = static_cast<std::size_t>(spec.audio_sr);
  clip.waveform.assign(spf * T, 0.0f);
  std::mt19937_64 noise_rng(derive_seed(spec.seed, 1));
  for (int t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < spf; ++n) {
      const std::size_t idx = spf * t + n;
      const double time = static_cast<double>(idx) / spec.audio_sr;
      double v = 0.0;
      for (const auto& s : spec.sources) {
        if (sounding(s, t)) v += 0.25 * s.loudness * tone_sample(s.tone, time);
      }
      for (const auto& s : spec.noise_sources) {
        if (s.audible_offscreen && sounding(s, t)) {
          v += 0.25 * s.loudness * tone_sample(s.tone, time);
        }
      }
      if (spec.audio_noise > 0.0) v += spec.audio_noise * uniform(noise_rng, -1.0, 1.0);
      clip.waveform[idx] = static_cast<float>(v);
    }
  }
  return clip;
}

ShapeClass concept_shape(int concept_id) { return static_cast<ShapeClass>(concept_id % 4); }

Tone concept_tone(int concept_id) {
  return {220.0 * std::pow(2.0, concept_id / 4.0), concept_id / 4};
}

std::array<std::uint8_t, 3> concept_color(int concept_id) {
  static constexpr std::array<std::array<std::uint8_t, 3>, kNumConcepts> kPalette{{
      {230, 25, 75}, {60, 180, 75}, {255, 225, 25}, {0, 130, 200},
      {245, 130, 48}, {145, 30, 180}, {70, 240, 240}, {240, 50, 230},
      {210, 245, 60}, {250, 190, 190}, {0, 128, 128}, {170, 110, 40},
  }};
  return kPalette.at(static_cast<std::size_t>(concept_id));
}

std::string concept_name(int concept_id) {
  static constexpr std::array<const char*, 4> kShapes{"circle", "square", "triangle", "bar"};
  static constexpr std::array<const char*, 3> kTimbres{"sine", "odd", "harmonic"};
  return std::string(kShapes[concept_id % 4]) + "_" + kTimbres[concept_id / 4];
}

SourceSpec make_concept_source(int concept_id, const Trajectory& trajectory,
                               std::vector<bool> active, double loudness) {
  if (concept_id < 0 || concept_id >= kNumConcepts) throw invalid("concept_id id out of range");
  SourceSpec s;
  s.shape = concept_shape(concept_id);
  s.tone = concept_tone(concept_id);
  s.trajectory = trajectory;
  s.active_frames = std::move(active);
  s.loudness = loudness;
  s.concept_id = concept_id;
  s.color = concept_color(concept_id);
  return s;
}

Regime parse_regime(const std::string& name) {
  if (name == "s4") return Regime::kS4;
  if (name == "m3") return Regime::kM3;
  if (name == "avss") return Regime::kAvss;
  throw invalid("unknown regime '" + name + "'");
}

std::string regime_name(Regime regime) {
  switch (regime) {
    case Regime::kS4:
      return "s4";
    case Regime::kM3:
      return "m3";
    case Regime::kAvss:
      return "avss";
  }
  return "?";
}

namespace {

// Start and end centres both inside the frame, so the linear path is too.
Trajectory random_trajectory(std::mt19937_64& rng, double radius, int T,
                             double max_speed, int height, int width) {
  const double m = std::min(height, width);
  const double mx = radius * m / width + 1e-6;
  const double my = radius * m / height + 1e-6;
  Trajectory tr;
  tr.radius = radius;
  tr.x0 = uniform(rng, mx, 1.0 - mx);
  tr.y0 = uniform(rng, my, 1.0 - my);
  if (T > 1) {
    const double x1 = std::clamp(tr.x0 + uniform(rng, -max_speed, max_speed) * (T - 1), mx, 1.0 - mx);
    const double y1 = std::clamp(tr.y0 + uniform(rng, -max_speed, max_speed) * (T - 1), my, 1.0 - my);
    tr.vx = (x1 - tr.x0) / (T - 1);
    tr.vy = (y1 - tr.y0) / (T - 1);
  }
  return tr;
}

bool overlaps(const Trajectory& a, const Trajectory& b, int T) {
  for (int t = 0; t < T; ++t) {
    const double dx = (a.x0 + a.vx * t) - (b.x0 + b.vx * t);
    const double dy = (a.y0 + a.vy * t) - (b.y0 + b.vy * t);
    if (std::hypot(dx, dy) < (a.radius + b.radius) * 1.5) return true;
  }
  return false;
}

std::vector<int> distinct_concepts(std::mt19937_64& rng, int n) {
  std::vector<int> all(kNumConcepts);
  for (int i = 0; i < kNumConcepts; ++i) all[i] = i;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(n);
  return all;
}

}  // namespace

ClipSpec make_regime_spec(Regime regime, std::uint64_t seed, int height, int width,
                          int num_frames) {
  std::mt19937_64 rng(derive_seed(seed, 17));
  ClipSpec spec;
  spec.seed = seed;
  spec.height = height;
  spec.width = width;
  spec.num_frames = num_frames > 0 ? num_frames : (regime == Regime::kAvss ? 10 : 5);
  spec.background_noise = 0.04;
  spec.mask_mode = regime == Regime::kAvss ? MaskMode::kSemantic : MaskMode::kBinary;
  const int T = spec.num_frames;

  if (regime == Regime::kS4) {
    const int concept_id = std::uniform_int_distribution<int>(0, kNumConcepts - 1)(rng);
    const auto tr = random_trajectory(rng, uniform(rng, 0.14, 0.22), T, 0.03, height, width);
    spec.sources.push_back(
        make_concept_source(concept_id, tr, std::vector<bool>(T, true), uniform(rng, 0.6, 1.0)));
    return spec;
  }

  const int n_src = std::uniform_int_distribution<int>(2, 3)(rng);
  const auto concepts = distinct_concepts(rng, n_src + 2);
  std::vector<Trajectory> placed;
  auto place = [&](double radius) {
    Trajectory tr;
    for (int attempt = 0; attempt < 200; ++attempt) {
      tr = random_trajectory(rng, radius, T, 0.02, height, width);
      bool clash = false;
      for (const auto& p : placed) clash = clash || overlaps(tr, p, T);
      if (!clash) break;
    }
    placed.push_back(tr);
    return tr;
  };
  for (int i = 0; i < n_src; ++i) {
    std::vector<bool> active(T);
    for (int t = 0; t < T; ++t) active[t] = uniform(rng, 0.0, 1.0) < 0.6;
    const auto tr = place(uniform(rng, 0.11, 0.16));
    spec.sources.push_back(make_concept_source(concepts[i], tr, active, uniform(rng, 0.6, 1.0)));
  }
  // Visible but silent distractor.
  {
    const auto tr = place(uniform(rng, 0.11, 0.16));
    auto d = make_concept_source(concepts[n_src], tr, std::vector<bool>(T, false), 1.0);
    spec.noise_sources.push_back(d);
  }
  // Audible but off-screen distractor, half of the time.
  if (uniform(rng, 0.0, 1.0) < 0.5) {
    std::vector<bool> active(T);
    for (int t = 0; t < T; ++t) active[t] = uniform(rng, 0.0, 1.0) < 0.5;
    auto d = make_concept_source(concepts[n_src + 1], Trajectory{}, active, uniform(rng, 0.3, 0.6));
    d.audible_offscreen = true;
    spec.noise_sources.push_back(d);
  }
  return spec;
}

std::vector<int> pair_swap_sources(int batch_size, double fraction, std::uint64_t seed) {
  if (batch_size < 2) throw invalid("pair_swap needs a batch of at least 2");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw invalid("pair_swap fraction outside [0,1]");
  const int n = static_cast<int>(std::floor(fraction * batch_size));
  if (n == 1) throw invalid("pair_swap selects a single item; no derangement exists");
  std::vector<int> source(batch_size);
  for (int i = 0; i < batch_size; ++i) source[i] = i;
  if (n == 0) return source;

  std::mt19937_64 rng(derive_seed(seed, 31));
  std::vector<int> order = source;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> selected(order.begin(), order.begin() + n);
  // Sattolo's algorithm yields a single n-cycle, hence no fixed points.
  std::vector<int> cycle = selected;
  for (int i = n - 1; i > 0; --i) {
    const int j = std::uniform_int_distribution<int>(0, i - 1)(rng);
    std::swap(cycle[i], cycle[j]);
  }
  for (int i = 0; i < n; ++i) source[selected[i]] = cycle[i];
  return source;
}

std::vector<RawClip> pair_swap(const std::vector<RawClip>& batch, double fraction,
                               std::uint64_t seed) {
  const auto source = pair_swap_sources(static_cast<int>(batch.size()), fraction, seed);
  std::vector<RawClip> out = batch;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (source[i] == static_cast<int>(i)) continue;
    if (batch[source[i]].waveform.size() != batch[i].waveform.size()) {
      throw invalid("pair_swap requires equal waveform lengths");
    }
    out[i].waveform = batch[source[i]].waveform;
  }
  return out;
}

}  // namespace icf::data
