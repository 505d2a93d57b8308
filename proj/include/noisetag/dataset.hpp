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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "noisetag/rng.hpp"

namespace noisetag::data {

/// The fixed 12-class tag vocabulary. Index order is defined by construction
/// (or by line order of a vocabulary file).
class TagVocabulary {
 public:
  static constexpr std::size_t kNumClasses = 12;

  explicit TagVocabulary(std::vector<std::string> names);

  /// The built-in vocabulary used by the synthetic corpus.
  static const TagVocabulary& default_synthetic();
  static TagVocabulary load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t idx) const;
  std::optional<std::size_t> index_of(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

enum class Source { kCurated, kNoisy };
enum class SplitRole { kTrain, kTest };

std::string source_name(Source s);
Source parse_source(const std::string& s);

struct ClipRecord {
  std::string id;
  std::string audio_ref;           // path, usually relative to the manifest
  std::vector<std::size_t> tags;   // sorted, unique, non-empty, < 12
  Source source = Source::kCurated;
};

struct Manifest {
  std::vector<ClipRecord> records;
  SplitRole split_role = SplitRole::kTrain;
  std::string base_dir;  // directory of the manifest file, for relative refs

  std::size_t size() const { return records.size(); }
  std::string resolve_audio_path(const ClipRecord& rec) const;
};

/// Loads a manifest CSV (header `id,path,tags,source`; tags are
/// `;`-separated vocabulary names). Row order is preserved. Test manifests
/// must contain curated records only.
Manifest load_manifest(const std::string& path, const TagVocabulary& vocab,
                       SplitRole role);
void save_manifest(const std::string& path, const Manifest& m,
                   const TagVocabulary& vocab);

/// n_clips x 12 binary labels, aligned with manifest record order.
struct LabelMatrix {
  std::size_t rows = 0;
  std::size_t cols = TagVocabulary::kNumClasses;
  std::vector<std::uint8_t> values;

  std::uint8_t at(std::size_t i, std::size_t c) const {
    return values[i * cols + c];
  }
};

LabelMatrix binarize(const Manifest& m, const TagVocabulary& vocab);

/// Uniform subsample of n records without replacement, preserving manifest
/// order. Deterministic under a fixed seed.
Manifest subsample(const Manifest& m, std::size_t n, Rng& rng);

/// Mean number of tags per clip.
double tag_stats(const Manifest& m);

// ---------------------------------------------------------------------------
// Synthetic corpus generation. Each class has a distinct timbre recipe
// (harmonic stacks with class-specific partials; two filtered-noise
// singing-like classes). Clips mix one or two class sources; noisy-split
// clips get background noise at 0 dB SNR and, with probability
// noisy_tag_flip_prob, one manifest tag replaced (audio untouched).
// ---------------------------------------------------------------------------

struct CorpusSpec {
  int curated_train_per_class = 20;
  int noisy_train_per_class = 80;
  int test_per_class = 10;
  double two_tag_fraction = 0.2;
  double noisy_tag_flip_prob = 0.5;
  double min_duration_s = 1.0;
  double max_duration_s = 8.0;
};

struct CorpusPaths {
  std::string curated_train;
  std::string noisy_train;
  std::string curated_test;
  std::string vocabulary;
};

/// Writes WAVs plus three manifest CSVs and the vocabulary file under
/// out_dir. Fully determined by seed: re-running produces byte-identical
/// files.
CorpusPaths synth_corpus(const CorpusSpec& spec, std::uint64_t seed,
                         const std::string& out_dir);

}  // namespace noisetag::data
