// Copyright 2026 The PSAL Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS-IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PSAL_ANN_FIELD_H_
#define PSAL_ANN_FIELD_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "psal/core.h"
#include "psal/similarity.h"

namespace psal {

// Work cap for the exhaustive oracles (exact_nn, full_attention), counted in
// query x key score evaluations.
inline constexpr std::uint64_t kOracleEvaluationCap = std::uint64_t{1} << 26;

struct Candidate {
  std::int32_t key = 0;
  float score = 0.0f;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

// Approximate nearest-neighbour field: for every query pixel, up to k distinct
// key pixels ordered by descending score. Storage is a flat k * n array, so
// the candidate footprint is fixed at construction.
class AnnField {
 public:
  AnnField(int query_width, int query_height, int key_width, int key_height,
           int k);

  int k() const { return k_; }
  int query_width() const { return query_width_; }
  int query_height() const { return query_height_; }
  int key_width() const { return key_width_; }
  int key_height() const { return key_height_; }
  int query_count() const { return query_width_ * query_height_; }
  int key_count() const { return key_width_ * key_height_; }
  std::uint64_t capacity_entries() const { return entries_.size(); }

  int size(int query) const { return sizes_[query]; }
  std::span<const Candidate> candidates(int query) const {
    return {entries_.data() + static_cast<std::size_t>(query) * k_,
            static_cast<std::size_t>(sizes_[query])};
  }
  const Candidate& best(int query) const {
    return entries_[static_cast<std::size_t>(query) * k_];
  }
  bool contains(int query, int key) const;

  // Inserts (key, score) if the list has room, or if the score strictly beats
  // the current minimum, which is then evicted. Keys already present are
  // rejected. Equal scores sort after existing entries, so earlier-found
  // candidates win ties.
  bool offer(int query, int key, float score);

  friend bool operator==(const AnnField&, const AnnField&) = default;

 private:
  int query_width_;
  int query_height_;
  int key_width_;
  int key_height_;
  int k_;
  std::vector<Candidate> entries_;
  std::vector<std::int32_t> sizes_;
};

struct SearchParams {
  // N. Zero runs the random initialisation only.
  int iterations = 5;
  int k = 3;
  std::uint64_t seed = 0;
  // Random-search radius at round 0; 0 selects max(key width, key height).
  int window_max = 0;
  // Radius shrink factor alpha between random-search rounds.
  double window_decay = 0.5;
  int threads = 1;
};

// Throws ConfigError naming the offending field.
void validate(const SearchParams& params);

struct OpCounter {
  std::uint64_t score_evaluations = 0;
  std::uint64_t peak_candidate_entries = 0;

  void merge(const OpCounter& other);
};

enum class SearchStep { kInit, kPropagation, kRandomSearch };

// Called after every step of run() with the field as it stands.
using SearchObserver =
    std::function<void(SearchStep step, int iteration, const AnnField& field)>;

// Each query receives k distinct keys drawn uniformly at random.
template <typename T>
AnnField init_random(const PatchScorer<T>& scorer, const SearchParams& params,
                     OpCounter* counter = nullptr);

// One jump-flood propagation pass: for l in {1, 2, 4, 8} and each of the four
// axis offsets, the candidates of the neighbour p + delta are shifted back by
// delta and offered to p. Updates are in place in raster order. With more
// than one thread, rows are split into bands of at least 8 rows; even bands
// run concurrently, then odd bands, so no list is read while being written.
template <typename T>
void propagate_jumpflood(const PatchScorer<T>& scorer, AnnField& field,
                         int threads = 1, OpCounter* counter = nullptr);

// For every current candidate, sample one key in a window of radius
// window_max * alpha^i (i = 0, 1, ... while >= 1) around it. `iteration`
// selects the random stream so that successive calls draw fresh samples.
template <typename T>
void random_search(const PatchScorer<T>& scorer, AnnField& field,
                   const SearchParams& params, int iteration,
                   OpCounter* counter = nullptr);

// init_random followed by `iterations` rounds of propagation + random search.
template <typename T>
AnnField run(const PatchScorer<T>& scorer, const SearchParams& params,
             const SearchObserver& observer = {}, OpCounter* counter = nullptr);

// Exhaustive top-k. Ties resolve to the smaller key index. Refuses with
// CapacityError above kOracleEvaluationCap evaluations unless `force`.
template <typename T>
AnnField exact_nn(const PatchScorer<T>& scorer, int k, bool force = false);

// Dump of (query, key, score) triples in query order; layouts are described
// in docs/ann_field_format.md.
void write_field_binary(const AnnField& field, std::ostream& out);
AnnField read_field_binary(std::istream& in);
void write_field_text(const AnnField& field, std::ostream& out);
AnnField read_field_text(std::istream& in);

}  // namespace psal

#endif  // PSAL_ANN_FIELD_H_
