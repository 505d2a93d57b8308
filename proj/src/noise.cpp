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

#include "noisetag/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "noisetag/error.hpp"

namespace noisetag::noise {

std::size_t corruption_count(double r, std::size_t n_clips) {
  if (r < 0.0 || r > 100.0) {
    throw InvalidInputError("corruption rate must be in [0, 100], got " +
                            std::to_string(r));
  }
  return static_cast<std::size_t>(
      std::llround(r * static_cast<double>(n_clips) / 100.0));
}

data::Manifest shuffle_labels(const data::Manifest& m, Rng& rng) {
  if (m.records.empty()) {
    throw InvalidInputError("shuffle_labels: manifest is empty");
  }
  std::vector<std::vector<std::size_t>> tag_sets;
  tag_sets.reserve(m.records.size());
  for (const auto& rec : m.records) tag_sets.push_back(rec.tags);

  for (std::size_t i = tag_sets.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_int(i);
    std::swap(tag_sets[i - 1], tag_sets[j]);
  }

  data::Manifest out = m;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    out.records[i].tags = std::move(tag_sets[i]);
  }
  return out;
}

std::pair<data::Manifest, CorruptionPlan> corrupt_labels(
    const data::Manifest& m, double r, Rng& rng) {
  const std::size_t n = m.records.size();
  const std::size_t affected = corruption_count(r, n);

  // Choose affected clips uniformly without replacement, then process in
  // manifest order so the audit file is stable.
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < affected; ++i) {
    const std::size_t j = i + rng.uniform_int(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(affected);
  std::sort(idx.begin(), idx.end());

  data::Manifest out = m;
  CorruptionPlan plan;
  plan.r = r;
  plan.entries.reserve(affected);

  for (std::size_t i : idx) {
    auto& rec = out.records[i];
    if (rec.tags.size() >= data::TagVocabulary::kNumClasses) {
      throw InvalidInputError(
          "corrupt_labels: clip '" + rec.id +
          "' carries every tag; no differing tag can be inserted");
    }
    const std::size_t victim_pos = rng.uniform_int(rec.tags.size());
    const std::size_t removed = rec.tags[victim_pos];

    // Inserted tag is drawn from outside the clip's entire original tag set,
    // so the tag count is conserved and exactly one tag ends up wrong.
    std::vector<std::size_t> complement;
    complement.reserve(data::TagVocabulary::kNumClasses);
    for (std::size_t c = 0; c < data::TagVocabulary::kNumClasses; ++c) {
      if (std::find(rec.tags.begin(), rec.tags.end(), c) == rec.tags.end()) {
        complement.push_back(c);
      }
    }
    const std::size_t inserted = complement[rng.uniform_int(complement.size())];

    rec.tags.erase(rec.tags.begin() + static_cast<std::ptrdiff_t>(victim_pos));
    rec.tags.push_back(inserted);
    std::sort(rec.tags.begin(), rec.tags.end());

    plan.entries.push_back({rec.id, removed, inserted});
  }
  return {std::move(out), std::move(plan)};
}

std::vector<int> sweep_plan(int r_start, int r_end, int step) {
  if (step <= 0) throw InvalidInputError("sweep_plan: step must be > 0");
  if (r_start < 0 || r_end > 100 || r_start > r_end) {
    throw InvalidInputError("sweep_plan: need 0 <= r_start <= r_end <= 100");
  }
  if ((r_end - r_start) % step != 0) {
    throw InvalidInputError("sweep_plan: step must divide r_end - r_start");
  }
  std::vector<int> values;
  for (int r = r_start; r <= r_end; r += step) values.push_back(r);
  return values;
}

void save_plan_csv(const std::string& path, const CorruptionPlan& plan,
                   const data::TagVocabulary& vocab) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write corruption plan: " + path);
  out << "id,removed,inserted\n";
  for (const auto& e : plan.entries) {
    out << e.id << ',' << vocab.name(e.removed) << ',' << vocab.name(e.inserted)
        << '\n';
  }
  if (!out) throw IoError("failed writing corruption plan: " + path);
}

CorruptionPlan load_plan_csv(const std::string& path,
                             const data::TagVocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corruption plan: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      (line != "id,removed,inserted" && line != "id,removed,inserted\r")) {
    throw ParseError("corruption plan header mismatch: " + path);
  }
  CorruptionPlan plan;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, removed, inserted;
    if (!std::getline(ss, id, ',') || !std::getline(ss, removed, ',') ||
        !std::getline(ss, inserted)) {
      throw ParseError(path + " row " + std::to_string(row) + ": bad entry");
    }
    const auto ri = vocab.index_of(removed);
    const auto ii = vocab.index_of(inserted);
    if (!ri || !ii) {
      throw ParseError(path + " row " + std::to_string(row) +
                       ": unknown tag name");
    }
    plan.entries.push_back({id, *ri, *ii});
  }
  return plan;
}

}  // namespace noisetag::noise
