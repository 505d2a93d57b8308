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

#include "noisetag/trainer.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "noisetag/error.hpp"
#include "noisetag/wav.hpp"

namespace fs = std::filesystem;

namespace noisetag::trainer {

void TrainConfig::validate() const {
  if (lr0 <= 0.0) throw ConfigError("lr0 must be positive");
  if (total_epochs == 0) throw ConfigError("total_epochs must be positive");
  if (lr_drop_epoch >= total_epochs) {
    throw ConfigError("lr_drop_epoch must be below total_epochs");
  }
  if (drop_factor <= 0.0) throw ConfigError("drop_factor must be positive");
  if (batch_size < 2) {
    throw ConfigError("batch_size must be >= 2 (batch-norm statistics)");
  }
  if (seeds.empty()) throw ConfigError("at least one run seed required");
  std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
  if (uniq.size() != seeds.size()) {
    throw ConfigError("run seeds must be distinct");
  }
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 ||
      eps <= 0.0) {
    throw ConfigError("invalid Adam hyperparameters");
  }
}

std::string TrainConfig::canonical_text() const {
  char buf[512];
  std::string seeds_str;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i > 0) seeds_str += ",";
    seeds_str += std::to_string(seeds[i]);
  }
  std::snprintf(buf, sizeof(buf),
                "batch_size = %zu\n"
                "beta1 = %g\n"
                "beta2 = %g\n"
                "drop_factor = %g\n"
                "eps = %g\n"
                "lr0 = %g\n"
                "lr_drop_epoch = %zu\n"
                "seeds = %s\n"
                "snippet_policy = %s\n"
                "strict_deterministic = %s\n"
                "total_epochs = %zu\n",
                batch_size, beta1, beta2, drop_factor, eps, lr0, lr_drop_epoch,
                seeds_str.c_str(),
                snippet_policy == SnippetPolicy::kPerEpoch ? "per_epoch"
                                                           : "fixed",
                strict_deterministic ? "true" : "false", total_epochs);
  return buf;
}

TrainConfig TrainConfig::desk_preset() {
  TrainConfig cfg;
  cfg.total_epochs = 30;
  cfg.lr_drop_epoch = 24;
  cfg.batch_size = 16;
  return cfg;
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch >= cfg.total_epochs) {
    throw InvalidInputError("lr_schedule: epoch " + std::to_string(epoch) +
                            " outside [0, " + std::to_string(cfg.total_epochs) +
                            ")");
  }
  return epoch < cfg.lr_drop_epoch ? cfg.lr0 : cfg.lr0 / cfg.drop_factor;
}

AdamState AdamState::init(const nn::Parameters& params) {
  AdamState state;
  for (const auto& [name, p] : params.items()) {
    if (!p.trainable) continue;
    state.m.push_back(nn::Tensor::zeros(p.value.shape));
    state.v.push_back(nn::Tensor::zeros(p.value.shape));
  }
  return state;
}

void adam_step(nn::Parameters& params, AdamState& state, double lr,
               const TrainConfig& cfg) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

  std::size_t slot = 0;
  for (auto& [name, p] : params.items()) {
    if (!p.trainable) continue;
    if (slot >= state.m.size()) {
      throw UsageError("adam_step: state does not match parameter store");
    }
    nn::Tensor& m = state.m[slot];
    nn::Tensor& v = state.v[slot];
    ++slot;
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad.data[i];
      if (!std::isfinite(g)) {
        throw TrainAbortError("non-finite gradient in parameter '" + name +
                              "'");
      }
      m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g;
      v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m.data[i] / bc1;
      const double v_hat = v.data[i] / bc2;
      p.value.data[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

std::vector<dsp::Waveform> load_audio(const data::Manifest& manifest) {
  std::vector<dsp::Waveform> audio;
  audio.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) {
    dsp::Waveform w = dsp::read_wav(manifest.resolve_audio_path(rec));
    if (w.sample_rate != dsp::kSampleRate) {
      w = dsp::resample(w, dsp::kSampleRate);
    }
    audio.push_back(std::move(w));
  }
  return audio;
}

TestSet build_test_set(const data::Manifest& manifest,
                       const data::TagVocabulary& vocab,
                       const std::string& cache_dir) {
  TestSet set;
  set.labels = data::binarize(manifest, vocab);
  set.features.reserve(manifest.records.size());
  if (!cache_dir.empty()) fs::create_directories(cache_dir);
  for (const auto& rec : manifest.records) {
    std::string cache_path;
    if (!cache_dir.empty()) {
      cache_path = (fs::path(cache_dir) / (rec.id + ".mel")).string();
      if (auto cached = dsp::read_feature_cache(cache_path)) {
        set.features.push_back(std::move(*cached));
        continue;
      }
    }
    dsp::Waveform w = dsp::read_wav(manifest.resolve_audio_path(rec));
    if (w.sample_rate != dsp::kSampleRate) {
      w = dsp::resample(w, dsp::kSampleRate);
    }
    if (w.samples.size() < dsp::kSnippetSamples) {
      w = dsp::circular_pad(w, dsp::kSnippetSamples);
    }
    dsp::MelSpectrogram mel = dsp::compute_features(w);
    if (!cache_path.empty()) dsp::write_feature_cache(cache_path, mel);
    set.features.push_back(std::move(mel));
  }
  return set;
}

namespace {

eval::EvalReport score_set(const TestSet& set, const tagger::TaggerModel& model,
                           const data::TagVocabulary& vocab) {
  eval::ScoreMatrix scores;
  scores.rows = set.features.size();
  scores.values.resize(scores.rows * scores.cols);
  for (std::size_t i = 0; i < set.features.size(); ++i) {
    const auto probs = model.predict_features(set.features[i]);
    std::copy(probs.begin(), probs.end(),
              scores.values.begin() +
                  static_cast<std::ptrdiff_t>(i * scores.cols));
  }
  return eval::evaluate(scores, set.labels, vocab);
}

void write_run_files(const std::string& run_dir,
                     const tagger::TaggerModel& model, const TrainConfig& cfg,
                     std::uint64_t seed, const std::vector<double>& losses) {
  fs::create_directories(run_dir);
  model.save((fs::path(run_dir) / "checkpoint.bin").string());

  std::ofstream loss_csv(fs::path(run_dir) / "loss.csv",
                         std::ios::binary | std::ios::trunc);
  if (!loss_csv) throw IoError("cannot write loss.csv in " + run_dir);
  loss_csv << "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < losses.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9f\n", e, losses[e]);
    loss_csv << buf;
  }

  std::ofstream config_out(fs::path(run_dir) / "config.toml",
                           std::ios::binary | std::ios::trunc);
  if (!config_out) throw IoError("cannot write config.toml in " + run_dir);
  config_out << "seed = " << seed << "\n\n[train]\n" << cfg.canonical_text()
             << "\n[tagger]\n" << model.config().canonical_text();
}

}  // namespace

RunResult train_run(const data::Manifest& train,
                    const data::TagVocabulary& vocab,
                    const std::vector<dsp::Waveform>& audio,
                    const tagger::TaggerConfig& model_config,
                    const TrainConfig& cfg, std::uint64_t seed,
                    const TestSet* test, const TestSet* val,
                    const std::string& run_dir) {
  cfg.validate();
  if (train.records.empty()) {
    throw InvalidInputError("train_run: empty training manifest");
  }
  if (audio.size() != train.records.size()) {
    throw InvalidInputError("train_run: audio cache does not match manifest");
  }

  RunResult result;
  result.seed = seed;

  tagger::TaggerModel model = tagger::TaggerModel::build(model_config, seed);
  model.set_mode(nn::Mode::kTrain);
  AdamState adam = AdamState::init(model.params());
  Rng dropout_rng(derive_seed(seed, Stream::kDropout));

  const data::LabelMatrix labels = data::binarize(train, vocab);
  const std::size_t n_clips = train.records.size();
  const std::size_t snippet_frames =
      1 + (dsp::kSnippetSamples - dsp::kFftSize) / dsp::kHop;

  result.loss_trace.reserve(cfg.total_epochs);
  for (std::size_t epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);

    std::vector<std::size_t> order(n_clips);
    for (std::size_t i = 0; i < n_clips; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(seed, Stream::kEpochShuffle, epoch));
    for (std::size_t i = n_clips; i > 1; --i) {
      const std::size_t j = shuffle_rng.uniform_int(i);
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n_clips; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n_clips - start);
      if (count < 2) break;  // a singleton batch cannot be normalised

      nn::Tensor batch({count, 1, snippet_frames, dsp::kMelBins});
      nn::Tensor targets({count, model_config.n_classes});
      for (std::size_t bi = 0; bi < count; ++bi) {
        const std::size_t clip = order[start + bi];
        const std::uint64_t snippet_epoch =
            cfg.snippet_policy == SnippetPolicy::kPerEpoch ? epoch : 0;
        Rng snippet_rng(
            derive_seed(seed, Stream::kSnippet, clip, snippet_epoch));
        const dsp::Waveform snip =
            dsp::extract_snippet(audio[clip], dsp::kSnippetSeconds,
                                 snippet_rng);
        const dsp::MelSpectrogram mel = dsp::compute_features(snip);
        if (mel.frames != snippet_frames) {
          throw ShapeError("train_run: unexpected snippet frame count " +
                           std::to_string(mel.frames));
        }
        std::copy(mel.values.begin(), mel.values.end(),
                  batch.data.begin() +
                      static_cast<std::ptrdiff_t>(bi * mel.values.size()));
        for (std::size_t c = 0; c < model_config.n_classes; ++c) {
          targets.at2(bi, c) = labels.at(clip, c);
        }
      }

      nn::Graph g;
      nn::Var probs = model.forward(g, g.input(std::move(batch)), &dropout_rng);
      nn::Var loss = g.bce_loss(probs, targets);
      const double loss_value = g.value(loss).data[0];
      if (!std::isfinite(loss_value)) {
        throw TrainAbortError("non-finite loss at epoch " +
                              std::to_string(epoch) + ", batch starting at " +
                              std::to_string(start));
      }
      model.params().zero_grads();
      g.backward(loss);
      adam_step(model.params(), adam, lr, cfg);
      ++result.optimizer_steps;

      epoch_loss += loss_value * static_cast<double>(count);
      seen += count;
    }
    if (seen == 0) {
      throw TrainAbortError("no trainable batches at epoch " +
                            std::to_string(epoch));
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(seen));
  }

  model.set_mode(nn::Mode::kEval);
  std::optional<eval::EvalReport> test_report;
  if (test != nullptr) {
    test_report = score_set(*test, model, vocab);
    result.test_map = test_report->map;
    result.test_mauc = test_report->mauc;
    result.has_test = true;
  }
  if (val != nullptr) {
    // Holdout splits can be small; classes they leave undefined are skipped
    // rather than refused.
    eval::ScoreMatrix scores;
    scores.rows = val->features.size();
    scores.values.resize(scores.rows * scores.cols);
    for (std::size_t i = 0; i < val->features.size(); ++i) {
      const auto probs = model.predict_features(val->features[i]);
      std::copy(probs.begin(), probs.end(),
                scores.values.begin() +
                    static_cast<std::ptrdiff_t>(i * scores.cols));
    }
    const eval::EvalReport report =
        eval::evaluate_defined(scores, val->labels, vocab);
    result.val_map = report.map;
    result.val_mauc = report.mauc;
    result.has_val = true;
  }

  if (!run_dir.empty()) {
    write_run_files(run_dir, model, cfg, seed, result.loss_trace);
    if (test_report) {
      eval::write_eval_report_csv((fs::path(run_dir) / "eval.csv").string(),
                                  *test_report, vocab);
    }
    result.run_dir = run_dir;
  }
  result.ok = true;
  return result;
}

std::vector<RunResult> run_suite(const data::Manifest& train,
                                 const data::TagVocabulary& vocab,
                                 const tagger::TaggerConfig& model_config,
                                 const TrainConfig& cfg, const TestSet* test,
                                 const TestSet* val,
                                 const std::string& suite_dir,
                                 std::size_t jobs) {
  cfg.validate();
  const std::vector<dsp::Waveform> audio = load_audio(train);

  std::vector<RunResult> results(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.seeds.size()) return;
      const std::uint64_t seed = cfg.seeds[i];
      const std::string run_dir =
          suite_dir.empty()
              ? ""
              : (fs::path(suite_dir) / ("run-" + std::to_string(seed)))
                    .string();
      try {
        results[i] = train_run(train, vocab, audio, model_config, cfg, seed,
                               test, val, run_dir);
      } catch (const Error& e) {
        results[i].seed = seed;
        results[i].ok = false;
        results[i].error = e.what();
      }
    }
  };

  std::size_t n_workers = jobs;
  if (n_workers == 0) {
    n_workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
  if (cfg.strict_deterministic) n_workers = 1;
  n_workers = std::min(n_workers, cfg.seeds.size());

  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

}  // namespace noisetag::trainer
