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
#include <span>
#include <vector>

#include <torch/torch.h>

#include "icf/data_synth.hpp"

namespace icf::enc {

struct MelConfig {
  int sample_rate = 16000;
  int n_fft = 512;
  int win_length = 400;  // 25 ms at 16 kHz
  int hop_length = 160;  // 10 ms at 16 kHz
  int n_mels = 64;
  double f_min = 0.0;
  double f_max = 0.0;  // 0 means sr / 2
  double log_floor = 1e-10;

  double upper_frequency() const { return f_max > 0.0 ? f_max : sample_rate / 2.0; }
  int bins() const { return n_fft / 2 + 1; }
  // STFT frames inside one window of `samples` samples (no centre padding;
  // the Hann window sits centred in each n_fft frame).
  int frames_for(int samples) const;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular HTK-style filters with unit peak, [n_mels, n_fft/2 + 1].
torch::Tensor mel_filterbank(const MelConfig& cfg);

// One-sided power spectrum |X_k|^2 of Hann-windowed frames, [frames, bins].
torch::Tensor power_spectrogram(const torch::Tensor& samples, const MelConfig& cfg);

// Per-window log-Mel features, [T, frames_per_window, n_mels]. Throws when
// `sample_rate` differs from the config or the audio is empty or cannot be
// split into `frame_count` equal windows.
torch::Tensor mel_frontend(const torch::Tensor& waveform, int sample_rate,
                           int frame_count, const MelConfig& cfg);
torch::Tensor mel_frontend(std::span<const float> waveform, int sample_rate,
                           int frame_count, const MelConfig& cfg);

// Frames as float [T, 3, H, W] scaled to roughly [-0.5, 0.5].
torch::Tensor frames_to_tensor(const data::RawClip& clip);

struct VisualFeatureStack {
  // Four scales at strides 4/8/16/32, each [N, C_i, H_i, W_i] where N counts
  // frames (clips are flattened frame-major).
  std::vector<torch::Tensor> scales;
  // Per-frame descriptor [N, pooled_dim].
  torch::Tensor pooled;
  // Full-resolution shallow features [N, C_d, H, W] used for mask detail.
  torch::Tensor detail;

  std::int64_t frames() const { return pooled.size(0); }
};

struct VisualEncoderOptions {
  std::array<int, 4> channels{32, 64, 128, 256};
  int pooled_dim = 128;
  int detail_channels = 16;
};

// Frame-wise convolutional pyramid; frames never interact.
class VisualEncoderImpl : public torch::nn::Module {
 public:
  explicit VisualEncoderImpl(VisualEncoderOptions options = {});

  VisualFeatureStack forward(const torch::Tensor& frames);
  // Accepts separately stored frames; they must share one size.
  VisualFeatureStack encode(const std::vector<torch::Tensor>& frames);

  const VisualEncoderOptions& options() const { return options_; }

 private:
  VisualEncoderOptions options_;
  std::vector<torch::nn::Sequential> stages_;
  torch::nn::Conv2d pool_proj_{nullptr};
  torch::nn::Sequential detail_{nullptr};
};
TORCH_MODULE(VisualEncoder);

struct AudioEncoderOptions {
  int n_mels = 64;
  int time_bins = 97;
  std::array<int, 2> channels{16, 32};
  int embed_dim = 128;
};

// Two conv blocks over each window's Mel patch, pooled over time, then a
// linear map to D. One output row per frame.
class AudioEncoderImpl : public torch::nn::Module {
 public:
  explicit AudioEncoderImpl(AudioEncoderOptions options = {});

  // mel: [N, M, n_mels] -> [N, D]
  torch::Tensor forward(const torch::Tensor& mel);

  const AudioEncoderOptions& options() const { return options_; }

 private:
  AudioEncoderOptions options_;
  torch::nn::Sequential blocks_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(AudioEncoder);

}  // namespace icf::enc
