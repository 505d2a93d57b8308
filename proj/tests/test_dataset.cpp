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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "noisetag/dataset.hpp"
#include "noisetag/dsp.hpp"
#include "noisetag/error.hpp"
#include "noisetag/eval.hpp"
#include "noisetag/wav.hpp"

using namespace noisetag;
namespace fs = std::filesystem;

namespace {

const data::TagVocabulary& vocab() {
  return data::TagVocabulary::default_synthetic();
}

std::string write_temp_manifest(const std::string& name,
                                const std::string& body) {
  const auto path = fs::temp_directory_path() / name;
  std::ofstream out(path, std::ios::trunc);
  out << body;
  return path.string();
}

data::Manifest make_manifest(const std::vector<std::vector<std::size_t>>& tags,
                             data::Source source = data::Source::kCurated) {
  data::Manifest m;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    data::ClipRecord rec;
    rec.id = "c" + std::to_string(i);
    rec.audio_ref = "audio/c" + std::to_string(i) + ".wav";
    rec.tags = tags[i];
    rec.source = source;
    m.records.push_back(rec);
  }
  return m;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("vocabulary invariants") {
  CHECK(vocab().size() == 12);
  CHECK(vocab().index_of("Flute").has_value());
  CHECK(!vocab().index_of("Theremin").has_value());
  CHECK(vocab().name(*vocab().index_of("Cello")) == "Cello");
  CHECK_THROWS_AS(
      data::TagVocabulary(std::vector<std::string>{"a", "b"}),
      InvalidInputError);
  std::vector<std::string> dup(12, "same");
  CHECK_THROWS_AS((data::TagVocabulary{dup}), InvalidInputError);
}

TEST_CASE("manifest parsing") {
  SUBCASE("a plain row parses into tags") {
    const auto path = write_temp_manifest(
        "nt_manifest_ok.csv",
        "id,path,tags,source\n"
        "c1,audio/c1.wav,Flute;Bass_guitar,curated\n");
    const auto m = data::load_manifest(path, vocab(), data::SplitRole::kTrain);
    REQUIRE(m.records.size() == 1);
    CHECK(m.records[0].tags.size() == 2);
    CHECK(m.records[0].id == "c1");
    CHECK(m.records[0].source == data::Source::kCurated);
    fs::remove(path);
  }
  SUBCASE("duplicate ids are rejected with the id named") {
    const auto path = write_temp_manifest(
        "nt_manifest_dup.csv",
        "id,path,tags,source\n"
        "c1,a.wav,Flute,curated\n"
        "c1,b.wav,Cello,curated\n");
    CHECK_THROWS_WITH_AS(
        data::load_manifest(path, vocab(), data::SplitRole::kTrain),
        doctest::Contains("c1"), ParseError);
    fs::remove(path);
  }
  SUBCASE("unknown tags are rejected") {
    const auto path = write_temp_manifest(
        "nt_manifest_tag.csv",
        "id,path,tags,source\n"
        "c1,a.wav,Theremin,curated\n");
    CHECK_THROWS_WITH_AS(
        data::load_manifest(path, vocab(), data::SplitRole::kTrain),
        doctest::Contains("Theremin"), ParseError);
    fs::remove(path);
  }
  SUBCASE("empty tag lists are rejected") {
    const auto path = write_temp_manifest(
        "nt_manifest_empty.csv",
        "id,path,tags,source\n"
        "c1,a.wav,,curated\n");
    CHECK_THROWS_AS(
        data::load_manifest(path, vocab(), data::SplitRole::kTrain),
        ParseError);
    fs::remove(path);
  }
  SUBCASE("test manifests may not contain noisy records") {
    const auto path = write_temp_manifest(
        "nt_manifest_role.csv",
        "id,path,tags,source\n"
        "c1,a.wav,Flute,noisy\n");
    CHECK_THROWS_AS(data::load_manifest(path, vocab(), data::SplitRole::kTest),
                    ParseError);
    CHECK_NOTHROW(
        data::load_manifest(path, vocab(), data::SplitRole::kTrain));
    fs::remove(path);
  }
}

TEST_CASE("manifest save/load round trip preserves rows") {
  const auto m = make_manifest({{3}, {0, 11}, {5, 7}});
  const auto path =
      (fs::temp_directory_path() / "nt_manifest_rt.csv").string();
  data::save_manifest(path, m, vocab());
  const auto back = data::load_manifest(path, vocab(), data::SplitRole::kTrain);
  REQUIRE(back.records.size() == m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(back.records[i].id == m.records[i].id);
    CHECK(back.records[i].tags == m.records[i].tags);
    CHECK(back.records[i].source == m.records[i].source);
  }
  fs::remove(path);
}

TEST_CASE("binarize") {
  SUBCASE("single tag becomes a single 1") {
    const auto lm = binarize(make_manifest({{3}}), vocab());
    CHECK(lm.rows == 1);
    for (std::size_t c = 0; c < 12; ++c) {
      CHECK(lm.at(0, c) == (c == 3 ? 1 : 0));
    }
  }
  SUBCASE("row sums equal tag-set sizes") {
    const auto m = make_manifest({{0, 11}, {4}, {1, 2, 3}});
    const auto lm = binarize(m, vocab());
    for (std::size_t i = 0; i < lm.rows; ++i) {
      std::size_t sum = 0;
      for (std::size_t c = 0; c < 12; ++c) sum += lm.at(i, c);
      CHECK(sum == m.records[i].tags.size());
    }
  }
  SUBCASE("a 1.03 mean-tag manifest reports 1.03") {
    std::vector<std::vector<std::size_t>> tags(100, std::vector<std::size_t>{1});
    tags[0] = {1, 2};
    tags[1] = {3, 4};
    tags[2] = {5, 6};
    const auto m = make_manifest(tags);
    CHECK(data::tag_stats(m) == doctest::Approx(1.03).epsilon(1e-12));
  }
  SUBCASE("round trip back to tag sets") {
    const auto m = make_manifest({{0, 5}, {11}, {2, 3, 7}});
    const auto lm = binarize(m, vocab());
    for (std::size_t i = 0; i < lm.rows; ++i) {
      std::vector<std::size_t> tags;
      for (std::size_t c = 0; c < 12; ++c) {
        if (lm.at(i, c)) tags.push_back(c);
      }
      CHECK(tags == m.records[i].tags);
    }
  }
}

TEST_CASE("tag_stats") {
  CHECK(data::tag_stats(make_manifest({{1}, {2}, {3, 4}})) ==
        doctest::Approx(4.0 / 3.0));
  CHECK(data::tag_stats(make_manifest({{1}, {2}})) == 1.0);
  CHECK(data::tag_stats(make_manifest({{1, 2}, {3}})) >= 1.0);
  data::Manifest empty;
  CHECK_THROWS_AS(data::tag_stats(empty), InvalidInputError);
}

TEST_CASE("subsample") {
  std::vector<std::vector<std::size_t>> tags;
  for (std::size_t i = 0; i < 50; ++i) tags.push_back({i % 12});
  const auto m = make_manifest(tags);

  SUBCASE("draws exactly n records from the input") {
    Rng rng(3);
    const auto sub = data::subsample(m, 20, rng);
    CHECK(sub.records.size() == 20);
    std::set<std::string> ids;
    for (const auto& rec : m.records) ids.insert(rec.id);
    for (const auto& rec : sub.records) {
      CHECK(ids.count(rec.id) == 1);
    }
  }
  SUBCASE("records keep their fields (sub-multiset)") {
    Rng rng(4);
    const auto sub = data::subsample(m, 30, rng);
    for (const auto& rec : sub.records) {
      const auto it =
          std::find_if(m.records.begin(), m.records.end(),
                       [&](const auto& r) { return r.id == rec.id; });
      REQUIRE(it != m.records.end());
      CHECK(it->tags == rec.tags);
      CHECK(it->audio_ref == rec.audio_ref);
    }
  }
  SUBCASE("n equal to size returns the whole manifest as a set") {
    Rng rng(5);
    const auto sub = data::subsample(m, m.records.size(), rng);
    std::set<std::string> in_ids, out_ids;
    for (const auto& rec : m.records) in_ids.insert(rec.id);
    for (const auto& rec : sub.records) out_ids.insert(rec.id);
    CHECK(in_ids == out_ids);
  }
  SUBCASE("deterministic under a fixed seed") {
    Rng a(6), b(6);
    const auto s1 = data::subsample(m, 10, a);
    const auto s2 = data::subsample(m, 10, b);
    REQUIRE(s1.records.size() == s2.records.size());
    for (std::size_t i = 0; i < s1.records.size(); ++i) {
      CHECK(s1.records[i].id == s2.records[i].id);
    }
  }
  SUBCASE("oversampling is rejected") {
    Rng rng(7);
    CHECK_THROWS_AS(data::subsample(m, 51, rng), InvalidInputError);
  }
}

TEST_CASE("synthetic corpus") {
  const auto root = fs::temp_directory_path() / "nt_corpus_test";
  fs::remove_all(root);
  data::CorpusSpec spec;
  spec.curated_train_per_class = 3;
  spec.noisy_train_per_class = 3;
  spec.test_per_class = 2;
  spec.max_duration_s = 4.0;
  const auto paths = data::synth_corpus(spec, 99, root.string());

  const auto curated =
      data::load_manifest(paths.curated_train, vocab(), data::SplitRole::kTrain);
  const auto noisy =
      data::load_manifest(paths.noisy_train, vocab(), data::SplitRole::kTrain);
  const auto test =
      data::load_manifest(paths.curated_test, vocab(), data::SplitRole::kTest);

  SUBCASE("counts and tag coverage") {
    CHECK(curated.records.size() == 36);
    CHECK(noisy.records.size() == 36);
    CHECK(test.records.size() == 24);
    std::vector<std::size_t> tag_counts(12, 0);
    for (const auto& rec : curated.records) {
      for (auto t : rec.tags) tag_counts[t]++;
    }
    for (std::size_t c = 0; c < 12; ++c) CHECK(tag_counts[c] >= 3);
  }
  SUBCASE("ids are disjoint across splits") {
    std::set<std::string> ids;
    for (const auto* m : {&curated, &noisy, &test}) {
      for (const auto& rec : m->records) {
        CHECK(ids.insert(rec.id).second);
      }
    }
  }
  SUBCASE("durations live in the configured range") {
    for (const auto& rec : curated.records) {
      const auto w = dsp::read_wav(curated.resolve_audio_path(rec));
      const double dur =
          static_cast<double>(w.samples.size()) / w.sample_rate;
      CHECK(dur >= spec.min_duration_s - 1e-4);
      CHECK(dur <= spec.max_duration_s + 1e-4);
      CHECK(w.sample_rate == 16000);
    }
  }
  SUBCASE("mean tags per clip is in the weak multi-label range") {
    const double mean = data::tag_stats(curated);
    CHECK(mean >= 1.0);
    CHECK(mean <= 1.4);
  }
  SUBCASE("regeneration with the same seed is byte-identical") {
    const auto root2 = fs::temp_directory_path() / "nt_corpus_test2";
    fs::remove_all(root2);
    const auto paths2 = data::synth_corpus(spec, 99, root2.string());
    CHECK(read_file(paths.curated_train) == read_file(paths2.curated_train));
    const auto rec = curated.records[5];
    CHECK(read_file(curated.resolve_audio_path(rec)) ==
          read_file((root2 / rec.audio_ref).string()));
    fs::remove_all(root2);
  }
  fs::remove_all(root);
}

TEST_CASE("synthetic corpus is separable by a nearest-centroid oracle") {
  const auto root = fs::temp_directory_path() / "nt_corpus_sep";
  fs::remove_all(root);
  data::CorpusSpec spec;
  spec.curated_train_per_class = 8;
  spec.noisy_train_per_class = 0;
  spec.test_per_class = 4;
  spec.max_duration_s = 4.0;
  const auto paths = data::synth_corpus(spec, 11, root.string());

  const auto train =
      data::load_manifest(paths.curated_train, vocab(), data::SplitRole::kTrain);
  const auto test =
      data::load_manifest(paths.curated_test, vocab(), data::SplitRole::kTest);

  // Mean mel vector per clip, mean-centered; centroids are Rocchio-style and
  // scored by cosine similarity.
  const auto mean_mel = [](const data::Manifest& m, const data::ClipRecord& r) {
    const auto w = dsp::read_wav(m.resolve_audio_path(r));
    const auto padded = w.samples.size() < dsp::kSnippetSamples
                            ? dsp::circular_pad(w, dsp::kSnippetSamples)
                            : w;
    const auto mel = dsp::compute_features(padded);
    std::vector<double> out(mel.bins, 0.0);
    for (std::size_t t = 0; t < mel.frames; ++t) {
      for (std::size_t b = 0; b < mel.bins; ++b) out[b] += mel.at(t, b);
    }
    for (auto& v : out) v /= static_cast<double>(mel.frames);
    double mean = 0.0;
    for (double v : out) mean += v;
    mean /= static_cast<double>(out.size());
    for (auto& v : out) v -= mean;
    return out;
  };
  const auto cosine = [](const std::vector<double>& a,
                         const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    return dot / std::sqrt(na * nb + 1e-12);
  };

  std::vector<std::vector<double>> centroid(12,
                                            std::vector<double>(96, 0.0));
  std::vector<double> counts(12, 0.0);
  for (const auto& rec : train.records) {
    const auto f = mean_mel(train, rec);
    for (auto t : rec.tags) {
      for (std::size_t b = 0; b < 96; ++b) centroid[t][b] += f[b];
      counts[t] += 1.0;
    }
  }
  for (std::size_t c = 0; c < 12; ++c) {
    REQUIRE(counts[c] > 0.0);
    for (auto& v : centroid[c]) v /= counts[c];
  }

  const auto labels = binarize(test, vocab());
  std::vector<std::vector<double>> feats;
  feats.reserve(test.records.size());
  for (const auto& rec : test.records) feats.push_back(mean_mel(test, rec));

  std::vector<double> scores(test.records.size());
  std::vector<std::uint8_t> class_labels(test.records.size());
  for (std::size_t c = 0; c < 12; ++c) {
    for (std::size_t i = 0; i < test.records.size(); ++i) {
      scores[i] = cosine(feats[i], centroid[c]);
      class_labels[i] = labels.at(i, c);
    }
    const double auc = eval::roc_auc(scores, class_labels);
    CHECK(auc > 0.8);
  }
  fs::remove_all(root);
}
