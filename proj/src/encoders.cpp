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

#include "icf/encoders.hpp"

#include <cmath>

#include "icf/common.hpp"

namespace icf::enc {
namespace nn = torch::nn;

int MelConfig::frames_for(int samples) const {
  return samples < n_fft ? 0 : 1 + (samples - n_fft) / hop_length;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

torch::Tensor mel_filterbank(const MelConfig& cfg) {
  const int bins = cfg.bins();
  const double lo = hz_to_mel(cfg.f_min);
  const double hi = hz_to_mel(cfg.upper_frequency());
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (cfg.n_mels + 1));
  }
  auto fb = torch::zeros({cfg.n_mels, bins}, torch::kFloat32);
  auto acc = fb.accessor<float, 2>();
  for (int b = 0; b < cfg.n_mels; ++b) {
    const double left = edges[b], centre = edges[b + 1], right = edges[b + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      double w = 0.0;
      if (f > left && f <= centre) {
        w = (f - left) / (centre - left);
      } else if (f > centre && f < right) {
        w = (right - f) / (right - centre);
      }
      acc[b][k] = static_cast<float>(w);
    }
  }
  return fb;
}

torch::Tensor power_spectrogram(const torch::Tensor& samples, const MelConfig& cfg) {
  auto window = torch::hann_window(cfg.win_length, torch::TensorOptions().dtype(samples.dtype()));
  auto spec = torch::stft(samples, cfg.n_fft, cfg.hop_length, cfg.win_length, window,
                          /*normalized=*/false, /*onesided=*/true, /*return_complex=*/true,
                          /*align_to_window=*/std::nullopt);
  return spec.abs().pow(2).transpose(0, 1).contiguous();
}

torch::Tensor mel_frontend(const torch::Tensor& waveform, int sample_rate, int frame_count,
                           const MelConfig& cfg) {
  if (sample_rate != cfg.sample_rate) {
    throw ValidationError("encoders", "sample rate " + std::to_string(sample_rate) +
                                          " does not match config " +
                                          std::to_string(cfg.sample_rate));
  }
  const auto n = waveform.numel();
  if (n == 0) throw ValidationError("encoders", "zero-length audio");
  if (frame_count < 1 || n % frame_count != 0) {
    throw ValidationError("encoders", "waveform cannot be split into equal frame windows");
  }
  const auto per = n / frame_count;
  if (per < cfg.n_fft) throw ValidationError("encoders", "window shorter than STFT frame");

  static thread_local std::pair<int, torch::Tensor> cached_fb{-1, {}};
  const int key = cfg.n_mels * 100003 + cfg.n_fft * 31 + cfg.sample_rate;
  if (cached_fb.first != key) cached_fb = {key, mel_filterbank(cfg)};
  const auto& fb = cached_fb.second;

  auto wave = waveform.to(torch::kFloat32).reshape({frame_count, per});
  std::vector<torch::Tensor> out;
  out.reserve(frame_count);
  for (int t = 0; t < frame_count; ++t) {
    auto power = power_spectrogram(wave[t], cfg);              // [M, bins]
    auto mel = torch::matmul(power, fb.t());                   // [M, n_mels]
    out.push_back(torch::log(torch::clamp_min(mel, cfg.log_floor)));
  }
  return torch::stack(out);
}

torch::Tensor mel_frontend(std::span<const float> waveform, int sample_rate, int frame_count,
                           const MelConfig& cfg) {
  auto t = torch::from_blob(const_cast<float*>(waveform.data()),
                            {static_cast<std::int64_t>(waveform.size())}, torch::kFloat32);
  return mel_frontend(t, sample_rate, frame_count, cfg);
}

torch::Tensor frames_to_tensor(const data::RawClip& clip) {
  auto t = torch::from_blob(const_cast<std::uint8_t*>(clip.frames.data()),
                            {clip.num_frames, clip.height, clip.width, 3}, torch::kUInt8);
  return t.permute({0, 3, 1, 2}).to(torch::kFloat32).div(255.0).sub(0.5).contiguous();
}

namespace {

class ConvBlockImpl : public nn::Module {
 public:
  ConvBlockImpl(int in, int out, int kernel, int stride, int padding)
      : conv_(register_module(
            "conv", nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding)))),
        norm_(register_module("norm", nn::GroupNorm(nn::GroupNormOptions(std::min(8, out), out)))) {}

  torch::Tensor forward(const torch::Tensor& x) { return torch::relu(norm_(conv_(x))); }

 private:
  nn::Conv2d conv_;
  nn::GroupNorm norm_;
};
TORCH_MODULE(ConvBlock);

nn::Sequential conv_block(int in, int out, int kernel, int stride, int padding) {
  return nn::Sequential(ConvBlock(in, out, kernel, stride, padding));
}

nn::Sequential conv_pair(int in, int out, int kernel, int stride) {
  return nn::Sequential(ConvBlock(in, out, kernel, stride, 0), ConvBlock(out, out, 3, 1, 1));
}

}  // namespace

VisualEncoderImpl::VisualEncoderImpl(VisualEncoderOptions options) : options_(options) {
  int in = 3;
  for (int i = 0; i < 4; ++i) {
    const int c = options_.channels[i];
    const int k = i == 0 ? 4 : 2;
    auto stage = conv_pair(in, c, k, k);
    stages_.push_back(register_module("stage" + std::to_string(i + 1), stage));
    in = c;
  }
  pool_proj_ = register_module(
      "pool_proj", nn::Conv2d(nn::Conv2dOptions(options_.channels[0], options_.pooled_dim, 1)));
  detail_ = register_module("detail", conv_block(3, options_.detail_channels, 3, 1, 1));
}

VisualFeatureStack VisualEncoderImpl::forward(const torch::Tensor& frames) {
  if (frames.dim() != 4 || frames.size(1) != 3) {
    throw ValidationError("encoders", "visual encoder expects [N, 3, H, W] frames");
  }
  if (frames.size(2) % 32 != 0 || frames.size(3) % 32 != 0) {
    throw ValidationError("encoders", "frame size must be a multiple of 32");
  }
  VisualFeatureStack stack;
  auto x = frames;
  for (auto& stage : stages_) {
    x = stage->forward(x);
    stack.scales.push_back(x);
  }
  stack.pooled = pool_proj_(stack.scales[0]).mean({2, 3});
  stack.detail = detail_->forward(frames);
  return stack;
}

VisualFeatureStack VisualEncoderImpl::encode(const std::vector<torch::Tensor>& frames) {
  if (frames.empty()) throw ValidationError("encoders", "no frames given");
  for (const auto& f : frames) {
    if (f.sizes() != frames.front().sizes()) {
      throw ValidationError("encoders", "non-uniform frame sizes");
    }
  }
  return forward(torch::stack(frames));
}

AudioEncoderImpl::AudioEncoderImpl(AudioEncoderOptions options) : options_(options) {
  blocks_ = register_module(
      "blocks", nn::Sequential(ConvBlock(1, options_.channels[0], 3, 2, 1),
                               ConvBlock(options_.channels[0], options_.channels[1], 3, 2, 1)));
  const int freq = (((options_.n_mels - 1) / 2 + 1) - 1) / 2 + 1;
  head_ = register_module("head", nn::Linear(options_.channels[1] * freq, options_.embed_dim));
}

torch::Tensor AudioEncoderImpl::forward(const torch::Tensor& mel) {
  if (mel.dim() != 3 || mel.size(2) != options_.n_mels) {
    throw ValidationError("encoders", "audio encoder expects [N, M, n_mels] Mel input");
  }
  // log-Mel spans roughly [-23, 8]; centre it before the convolutions
  auto x = mel.unsqueeze(1).add(8.0).div(8.0);
  x = blocks_->forward(x);  // [N, C, M', F']
  x = x.mean(2).flatten(1);  // pool over time, keep frequency layout
  return head_(x);
}

}  // namespace icf::enc
