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

#include "noisetag/tagger.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "noisetag/checkpoint.hpp"
#include "noisetag/error.hpp"

namespace noisetag::tagger {
namespace {

constexpr double kBnMomentum = 0.1;
constexpr double kBnEps = 1e-5;

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<std::size_t>(std::stoul(item)));
  }
  return out;
}

std::string join_size_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

void TaggerConfig::validate() const {
  if (conv_channels.size() != kConvLayers) {
    throw ConfigError("tagger needs exactly " + std::to_string(kConvLayers) +
                      " convolutional layers, got " +
                      std::to_string(conv_channels.size()));
  }
  if (pool_after.size() != kPoolLayers) {
    throw ConfigError("tagger needs exactly " + std::to_string(kPoolLayers) +
                      " average-pooling layers, got " +
                      std::to_string(pool_after.size()));
  }
  for (std::size_t c : conv_channels) {
    if (c == 0) throw ConfigError("conv channel count must be positive");
  }
  for (std::size_t p : pool_after) {
    if (p >= kConvLayers) {
      throw ConfigError("pool position " + std::to_string(p) +
                        " out of range");
    }
  }
  std::vector<std::size_t> sorted = pool_after;
  std::sort(sorted.begin(), sorted.end());
  if (std::unique(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("pool positions must be distinct");
  }
  if (kernel_size == 0 || kernel_size % 2 == 0) {
    throw ConfigError("kernel size must be odd and positive");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0, 1)");
  }
  if (n_classes == 0) throw ConfigError("n_classes must be positive");
}

std::string TaggerConfig::canonical_text() const {
  std::string s;
  s += "conv_channels = " + join_size_list(conv_channels) + "\n";
  s += "dropout_rate = " + std::to_string(dropout_rate) + "\n";
  s += "kernel_size = " + std::to_string(kernel_size) + "\n";
  s += "n_classes = " + std::to_string(n_classes) + "\n";
  s += "pool_after = " + join_size_list(pool_after) + "\n";
  return s;
}

TaggerConfig TaggerConfig::from_text(const std::string& text) {
  TaggerConfig cfg;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 3);
    if (key == "conv_channels") {
      cfg.conv_channels = parse_size_list(val);
    } else if (key == "dropout_rate") {
      cfg.dropout_rate = std::stod(val);
    } else if (key == "kernel_size") {
      cfg.kernel_size = std::stoul(val);
    } else if (key == "n_classes") {
      cfg.n_classes = std::stoul(val);
    } else if (key == "pool_after") {
      cfg.pool_after = parse_size_list(val);
    } else {
      throw ParseError("unknown tagger config key: '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TaggerConfig TaggerConfig::desk_preset() {
  TaggerConfig cfg;
  cfg.conv_channels = {5, 5, 10, 10, 20, 20, 40, 40};
  // The narrow model needs less regularization over the short schedule.
  cfg.dropout_rate = 0.15;
  return cfg;
}

TaggerModel TaggerModel::build(const TaggerConfig& config,
                               std::uint64_t init_seed) {
  config.validate();
  TaggerModel model;
  model.config_ = config;

  std::size_t in_channels = 1;
  for (std::size_t i = 0; i < config.conv_channels.size(); ++i) {
    const std::size_t out_channels = config.conv_channels[i];
    const std::size_t k = config.kernel_size;
    Rng rng(derive_seed(init_seed, Stream::kInit, i));

    // He-uniform over the fan-in of the convolution.
    const double fan_in = static_cast<double>(in_channels * k * k);
    const double limit = std::sqrt(6.0 / fan_in);
    nn::Tensor w({out_channels, in_channels, k, k});
    for (auto& v : w.data) v = rng.uniform(-limit, limit);

    const std::string idx = std::to_string(i);
    model.params_.add("conv" + idx + ".weight", std::move(w));
    model.params_.add("conv" + idx + ".bias", nn::Tensor({out_channels}));

    nn::Tensor gamma({out_channels});
    gamma.fill(1.0);
    model.params_.add("bn" + idx + ".gamma", std::move(gamma));
    model.params_.add("bn" + idx + ".beta", nn::Tensor({out_channels}));
    nn::Tensor rv({out_channels});
    rv.fill(1.0);
    model.params_.add("bn" + idx + ".running_mean", nn::Tensor({out_channels}),
                      /*trainable=*/false);
    model.params_.add("bn" + idx + ".running_var", std::move(rv),
                      /*trainable=*/false);
    in_channels = out_channels;
  }

  Rng rng(derive_seed(init_seed, Stream::kInit, config.conv_channels.size()));
  const double limit = std::sqrt(6.0 / static_cast<double>(in_channels));
  nn::Tensor dw({config.n_classes, in_channels});
  for (auto& v : dw.data) v = rng.uniform(-limit, limit);
  model.params_.add("dense.weight", std::move(dw));
  model.params_.add("dense.bias", nn::Tensor({config.n_classes}));
  return model;
}

nn::Var TaggerModel::forward_impl(nn::Graph& g, nn::Var batch, nn::Mode mode,
                                  Rng* dropout_rng,
                                  nn::Parameters& params) const {
  const nn::Tensor& x = g.value(batch);
  if (x.rank() != 4 || x.shape[1] != 1) {
    throw ShapeError("tagger forward: need N x 1 x frames x " +
                     std::to_string(dsp::kMelBins) + " input, got " +
                     nn::shape_str(x.shape));
  }
  if (x.shape[3] != dsp::kMelBins) {
    throw ShapeError("tagger forward: expected " +
                     std::to_string(dsp::kMelBins) + " mel bins, got " +
                     nn::shape_str(x.shape));
  }
  if (x.shape[2] < TaggerConfig::kMinFrames) {
    throw ShapeError("tagger forward: input has " +
                     std::to_string(x.shape[2]) + " frames; pad the input to " +
                     std::to_string(TaggerConfig::kMinFrames) +
                     " frames or more");
  }
  if (mode == nn::Mode::kTrain && config_.dropout_rate > 0.0 &&
      dropout_rng == nullptr) {
    throw UsageError("tagger forward: train mode requires a dropout rng");
  }

  const std::size_t pad = (config_.kernel_size - 1) / 2;
  nn::Var h = batch;
  for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
    const std::string idx = std::to_string(i);
    nn::Var w = g.param(params.at("conv" + idx + ".weight"));
    nn::Var b = g.param(params.at("conv" + idx + ".bias"));
    h = g.conv2d(h, w, b, pad, 1);

    nn::Var gamma = g.param(params.at("bn" + idx + ".gamma"));
    nn::Var beta = g.param(params.at("bn" + idx + ".beta"));
    h = g.batchnorm(h, gamma, beta,
                    params.at("bn" + idx + ".running_mean").value,
                    params.at("bn" + idx + ".running_var").value, mode,
                    kBnMomentum, kBnEps);
    h = g.relu(h);

    if (std::find(config_.pool_after.begin(), config_.pool_after.end(), i) !=
        config_.pool_after.end()) {
      h = g.avgpool2x2(h);
      h = g.dropout(h, config_.dropout_rate, mode, dropout_rng);
    }
  }

  h = g.global_avg_pool(h);
  nn::Var dw = g.param(params.at("dense.weight"));
  nn::Var db = g.param(params.at("dense.bias"));
  h = g.dense(h, dw, db);
  return g.sigmoid(h);
}

nn::Var TaggerModel::forward(nn::Graph& g, nn::Var batch, Rng* dropout_rng) {
  return forward_impl(g, batch, mode_, dropout_rng, params_);
}

nn::Tensor TaggerModel::forward_probs(const nn::Tensor& batch,
                                      Rng* dropout_rng) {
  nn::Graph g;
  nn::Var out = forward(g, g.input(batch), dropout_rng);
  return g.value(out);
}

nn::Tensor features_to_input(const dsp::MelSpectrogram& features) {
  nn::Tensor x({1, 1, features.frames, features.bins});
  std::copy(features.values.begin(), features.values.end(), x.data.begin());
  return x;
}

std::vector<double> TaggerModel::predict_features(
    const dsp::MelSpectrogram& features) const {
  if (mode_ != nn::Mode::kEval) {
    throw UsageError("predict requires eval mode; call set_mode first");
  }
  nn::Graph g;
  // Eval mode touches neither weights nor running statistics.
  auto& mutable_params = const_cast<nn::Parameters&>(params_);
  nn::Var out = forward_impl(g, g.input(features_to_input(features)),
                             nn::Mode::kEval, nullptr, mutable_params);
  const nn::Tensor& probs = g.value(out);
  return std::vector<double>(probs.data.begin(), probs.data.end());
}

std::vector<double> TaggerModel::predict_clip(const dsp::Waveform& w) const {
  dsp::Waveform at_rate = w.sample_rate == dsp::kSampleRate
                              ? w
                              : dsp::resample(w, dsp::kSampleRate);
  if (at_rate.samples.size() < dsp::kSnippetSamples) {
    at_rate = dsp::circular_pad(at_rate, dsp::kSnippetSamples);
  }
  return predict_features(dsp::compute_features(at_rate));
}

void TaggerModel::save(const std::string& path) const {
  nn::save_checkpoint(path, params_, config_.canonical_text());
}

TaggerModel TaggerModel::load(const std::string& path) {
  const std::string header = nn::read_checkpoint_header(path);
  TaggerModel model = build(TaggerConfig::from_text(header), /*init_seed=*/0);
  nn::load_checkpoint(path, model.params_);
  return model;
}

}  // namespace noisetag::tagger
