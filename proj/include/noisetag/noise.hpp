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
#include <string>
#include <utility>
#include <vector>

#include "noisetag/dataset.hpp"
#include "noisetag/rng.hpp"

namespace noisetag::noise {

/// Audit record of a corruption pass: which clips were altered and how. Each
/// altered clip loses one tag and gains one tag it did not have, so the tag
/// count is conserved and exactly one tag is wrong.
struct CorruptionPlan {
  struct Entry {
    std::string id;
    std::size_t removed = 0;
    std::size_t inserted = 0;
  };
  double r = 0.0;
  std::vector<Entry> entries;  // in manifest order
};

/// Number of clips affected at rate r over n clips: round half away from
/// zero of r*n/100.
std::size_t corruption_count(double r, std::size_t n_clips);

/// Random baseline: reassigns the tag sets uniformly at random across clips.
/// The multiset of tag sets (and hence the label distribution) is preserved;
/// ids and audio refs are untouched.
data::Manifest shuffle_labels(const data::Manifest& m, Rng& rng);

/// Corrupts round(r/100 * n) clips chosen uniformly without replacement. In
/// each one, a uniformly chosen tag is removed and a tag drawn uniformly from
/// outside the clip's original tag set is inserted. Unaffected clips are
/// untouched.
std::pair<data::Manifest, CorruptionPlan> corrupt_labels(
    const data::Manifest& m, double r, Rng& rng);

/// [r_start, r_start + step, ..., r_end]; step must divide the range.
std::vector<int> sweep_plan(int r_start, int r_end, int step);

/// CSV audit file: header `id,removed,inserted`, tags by name.
void save_plan_csv(const std::string& path, const CorruptionPlan& plan,
                   const data::TagVocabulary& vocab);
CorruptionPlan load_plan_csv(const std::string& path,
                             const data::TagVocabulary& vocab);

}  // namespace noisetag::noise
