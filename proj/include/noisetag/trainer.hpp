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
#include <optional>
#include <string>
#include <vector>

#include "noisetag/dataset.hpp"
#include "noisetag/eval.hpp"
#include "noisetag/tagger.hpp"

namespace noisetag::trainer {

enum class SnippetPolicy { kPerEpoch, kFixed };

/// Optimization schedule: Adam from lr0, divided by drop_factor once at
/// lr_drop_epoch, for total_epochs epochs. Five seeded runs by default.
struct TrainConfig {
  double lr0 = 0.001;
  std::size_t lr_drop_epoch = 80;
  std::size_t total_epochs = 100;
  double drop_factor = 10.0;
  std::size_t batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  /// Fresh snippet per clip per epoch, or one fixed snippet per clip.
  SnippetPolicy snippet_policy = SnippetPolicy::kPerEpoch;
  /// Disables prefetch/parallel shortcuts so reruns are byte-identical.
  bool strict_deterministic = false;

  void validate() const;
  std::string canonical_text() const;

  /// Scaled-down schedule for CPU experiments: 30 epochs, drop at 24,
  /// batch 16.
  static TrainConfig desk_preset();
};

/// Step learning rate: lr0 before lr_drop_epoch, lr0/drop_factor from there
/// to the end. epoch must lie in [0, total_epochs).
double lr_schedule(std::size_t epoch, const TrainConfig& cfg = TrainConfig{});

/// Adam first/second moment state, aligned with the trainable parameter
/// tensors in insertion order.
struct AdamState {
  std::size_t t = 0;
  std::vector<nn::Tensor> m;
  std::vector<nn::Tensor> v;

  static AdamState init(const nn::Parameters& params);
};

/// One bias-corrected Adam update over all trainable tensors. Throws
/// TrainAbortError (naming the tensor) on non-finite gradients.
void adam_step(nn::Parameters& params, AdamState& state, double lr,
               const TrainConfig& cfg);

/// Labelled evaluation set with precomputed full-clip features.
struct TestSet {
  std::vector<dsp::MelSpectrogram> features;  // aligned with labels rows
  data::LabelMatrix labels;
};

struct RunResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<double> loss_trace;  // one entry per epoch
  std::size_t optimizer_steps = 0;
  double test_map = 0.0;
  double test_mauc = 0.0;
  double val_map = 0.0;
  double val_mauc = 0.0;
  bool has_test = false;
  bool has_val = false;
  std::string run_dir;  // empty when nothing was written
};

/// Preloaded training audio, aligned with manifest records.
std::vector<dsp::Waveform> load_audio(const data::Manifest& manifest);

/// Builds full-clip features (and labels) for an evaluation manifest. When
/// cache_dir is non-empty, per-clip feature files are reused/created there.
TestSet build_test_set(const data::Manifest& manifest,
                       const data::TagVocabulary& vocab,
                       const std::string& cache_dir = "");

/// One seeded training run: per-epoch clip shuffling, one 3-second snippet
/// per clip per epoch, BCE objective, Adam with the step schedule. When
/// run_dir is non-empty, writes checkpoint.bin, loss.csv and config.toml
/// there. Deterministic given the seed.
RunResult train_run(const data::Manifest& train,
                    const data::TagVocabulary& vocab,
                    const std::vector<dsp::Waveform>& audio,
                    const tagger::TaggerConfig& model_config,
                    const TrainConfig& cfg, std::uint64_t seed,
                    const TestSet* test, const TestSet* val,
                    const std::string& run_dir);

/// Runs cfg.seeds independent runs (differing only in seed). jobs > 1 runs
/// them in parallel worker threads; results are ordered by seed position
/// regardless. Failures are captured per run, not thrown.
std::vector<RunResult> run_suite(const data::Manifest& train,
                                 const data::TagVocabulary& vocab,
                                 const tagger::TaggerConfig& model_config,
                                 const TrainConfig& cfg, const TestSet* test,
                                 const TestSet* val,
                                 const std::string& suite_dir,
                                 std::size_t jobs);

}  // namespace noisetag::trainer
