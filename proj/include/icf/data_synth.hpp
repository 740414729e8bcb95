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

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace icf::data {

enum class ShapeClass { kCircle = 0, kSquare = 1, kTriangle = 2, kBar = 3 };

enum class MaskMode { kBinary, kSemantic };

// Synthetic vocabulary: 4 shapes x 3 timbres.
inline constexpr int kNumConcepts = 12;
// Concepts plus background, used for semantic label maps.
inline constexpr int kNumSemanticClasses = kNumConcepts + 1;

struct Tone {
  double frequency_hz = 440.0;
  // 0: pure sine, 1: odd harmonics, 2: full harmonic series.
  int timbre = 0;
};

// Linear path in normalized image coordinates. The centre at frame t is
// (x0 + vx * t, y0 + vy * t); radius is a fraction of min(H, W).
struct Trajectory {
  double x0 = 0.5;
  double y0 = 0.5;
  double vx = 0.0;
  double vy = 0.0;
  double radius = 0.15;
};

struct SourceSpec {
  ShapeClass shape = ShapeClass::kCircle;
  Tone tone;
  Trajectory trajectory;
  std::vector<bool> active_frames;  // length T
  double loudness = 1.0;            // [0, 1]
  int concept_id = -1;              // class label, -1 when unlabeled
  std::array<std::uint8_t, 3> color{200, 60, 60};
  // Only meaningful for distractors: true means the source is heard but not
  // drawn; false means drawn but never heard.
  bool audible_offscreen = false;
};

struct ClipSpec {
  std::uint64_t seed = 0;
  int num_frames = 5;
  int height = 224;
  int width = 224;
  std::vector<SourceSpec> sources;
  std::vector<SourceSpec> noise_sources;
  int audio_sr = 16000;
  double audio_noise = 0.0;       // amplitude of additive white noise
  double background_noise = 0.0;  // static per-pixel texture amplitude (0..1)
  MaskMode mask_mode = MaskMode::kBinary;
};

struct RawClip {
  std::string id;
  int num_frames = 0;
  int height = 0;
  int width = 0;
  int sample_rate = 16000;
  MaskMode mask_mode = MaskMode::kBinary;
  std::vector<std::uint8_t> frames;  // T x H x W x 3
  std::vector<float> waveform;       // T x samples_per_frame
  std::vector<std::uint8_t> masks;   // T x H x W
  std::vector<int> class_labels;     // one per sounding source
  // Empty string for frames that belong to this clip; otherwise a tag naming
  // the donor clip and frame ("<clip_id>:<t>").
  std::vector<std::string> frame_provenance;

  std::size_t pixels_per_frame() const {
    return static_cast<std::size_t>(height) * width;
  }
  std::size_t samples_per_frame() const {
    return num_frames > 0 ? waveform.size() / num_frames : 0;
  }
  std::span<const std::uint8_t> frame(int t) const;
  std::span<const std::uint8_t> mask(int t) const;
  std::span<const float> audio_window(int t) const;
};

// Throws ValidationError when the spec breaks an invariant.
void validate(const ClipSpec& spec);

RawClip generate_clip(const ClipSpec& spec);

// True when pixel (px, py) (integer pixel indices, sampled at the pixel
// centre) lies inside the source footprint at frame t.
bool source_covers(const SourceSpec& source, int t, int px, int py, int height,
                   int width);

// Footprint of one source at frame t as a 0/1 map.
std::vector<std::uint8_t> rasterize(const SourceSpec& source, int t, int height,
                                    int width);

// Concept helpers for the 12-class vocabulary.
ShapeClass concept_shape(int concept_id);
Tone concept_tone(int concept_id);
std::array<std::uint8_t, 3> concept_color(int concept_id);
std::string concept_name(int concept_id);
SourceSpec make_concept_source(int concept_id, const Trajectory& trajectory,
                               std::vector<bool> active, double loudness = 1.0);

enum class Regime { kS4, kM3, kAvss };

Regime parse_regime(const std::string& name);
std::string regime_name(Regime regime);

// Random scene of the given regime. S4: one always-sounding source. M3: two
// or three sources with independent activity plus distractors. AVSS: like M3
// with ten frames and semantic label maps.
ClipSpec make_regime_spec(Regime regime, std::uint64_t seed, int height,
                          int width, int num_frames = 0);

// Exchanges waveforms among floor(fraction * B) randomly selected items using
// a derangement of the selected subset. Frames and masks are untouched.
std::vector<RawClip> pair_swap(const std::vector<RawClip>& batch, double fraction,
                               std::uint64_t seed);

// The permutation pair_swap applies: out[i] takes its waveform from
// batch[source[i]].
std::vector<int> pair_swap_sources(int batch_size, double fraction,
                                   std::uint64_t seed);

}  // namespace icf::data
