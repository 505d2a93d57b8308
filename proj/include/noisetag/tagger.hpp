// Copyright 2026 The Noisetag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "noisetag/autodiff.hpp"
#include "noisetag/dsp.hpp"
#include "noisetag/wav.hpp"

namespace noisetag::tagger {

/// Architecture of the tagger: eight convolutions in four blocks of two,
/// batch norm + ReLU after every convolution, 2x2 average pooling and
/// dropout after the first three blocks, global average pooling, one dense
/// layer, sigmoid. Variable-length input is handled by the global pooling.
struct TaggerConfig {
  std::vector<std::size_t> conv_channels{32, 32, 64, 64, 128, 128, 256, 256};
  std::size_t kernel_size = 3;
  std::vector<std::size_t> pool_after{1, 3, 5};  // conv indices, 0-based
  double dropout_rate = 0.3;
  std::size_t n_classes = 12;

  static constexpr std::size_t kConvLayers = 8;
  static constexpr std::size_t kPoolLayers = 3;
  /// After three 2x2 pools a frame axis below this cannot reach the global
  /// pooling stage.
  static constexpr std::size_t kMinFrames = 8;

  void validate() const;
  std::string canonical_text() const;
  static TaggerConfig from_text(const std::string& text);

  /// Narrow variant for fast CPU experiments; same 8-conv/3-pool structure.
  static TaggerConfig desk_preset();
};

class TaggerModel {
 public:
  static TaggerModel build(const TaggerConfig& config, std::uint64_t init_seed);

  /// batch: N x 1 x frames x 96, frames >= kMinFrames. Returns the sigmoid
  /// output node (N x n_classes). Train mode updates batch-norm running
  /// statistics and needs a dropout random source.
  nn::Var forward(nn::Graph& g, nn::Var batch, Rng* dropout_rng = nullptr);

  /// Convenience forward without keeping the graph.
  nn::Tensor forward_probs(const nn::Tensor& batch, Rng* dropout_rng = nullptr);

  /// Scores one clip at full length (eval mode only). Clips shorter than the
  /// training snippet are circular-padded to it before feature extraction.
  std::vector<double> predict_clip(const dsp::Waveform& w) const;

  /// Scores a precomputed feature matrix (eval mode only).
  std::vector<double> predict_features(const dsp::MelSpectrogram& features) const;

  nn::Mode mode() const { return mode_; }
  void set_mode(nn::Mode m) { mode_ = m; }

  const TaggerConfig& config() const { return config_; }
  nn::Parameters& params() { return params_; }
  const nn::Parameters& params() const { return params_; }

  /// Total number of trainable parameter elements.
  std::size_t parameter_count() const {
    return params_.trainable_element_count();
  }

  void save(const std::string& path) const;
  static TaggerModel load(const std::string& path);

 private:
  TaggerModel() = default;
  nn::Var forward_impl(nn::Graph& g, nn::Var batch, nn::Mode mode,
                       Rng* dropout_rng, nn::Parameters& params) const;

  TaggerConfig config_;
  nn::Parameters params_;
  nn::Mode mode_ = nn::Mode::kTrain;
};

/// Converts a feature matrix to the N=1 input tensor layout.
nn::Tensor features_to_input(const dsp::MelSpectrogram& features);

}  // namespace noisetag::tagger
