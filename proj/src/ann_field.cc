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

#include "psal/ann_field.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "parallel.h"

namespace psal {

namespace {

// SplitMix64: cheap to seed per query, which keeps every query's random
// stream independent of traversal order and thread count.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t state) : state_(state) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

enum class Stream : std::uint64_t { kInit = 1, kRandomSearch = 2 };

SplitMix64 query_rng(std::uint64_t seed, Stream stream, int iteration,
                     int query) {
  SplitMix64 mix(seed);
  std::uint64_t s = mix() ^ (static_cast<std::uint64_t>(stream) << 56);
  s = SplitMix64(s ^ static_cast<std::uint64_t>(iteration))();
  s = SplitMix64(s ^ (static_cast<std::uint64_t>(query) << 1))();
  return SplitMix64(s);
}

int uniform_int(SplitMix64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

template <typename T>
void check_field_matches(const PatchScorer<T>& scorer, const AnnField& field) {
  if (field.query_width() != scorer.queries().width() ||
      field.query_height() != scorer.queries().height() ||
      field.key_width() != scorer.keys().width() ||
      field.key_height() != scorer.keys().height()) {
    throw ContractError("ANN field extent does not match query/key views");
  }
}

template <typename T>
void propagate_rows(const PatchScorer<T>& scorer, AnnField& field,
                    int row_begin, int row_end, OpCounter& counter) {
  static constexpr std::array<int, 4> kJumps = {1, 2, 4, 8};
  const int qw = field.query_width();
  const int qh = field.query_height();
  const int kw = field.key_width();
  const int kh = field.key_height();
  std::vector<std::int32_t> neighbour_keys(field.k());
  for (int y = row_begin; y < row_end; ++y) {
    for (int x = 0; x < qw; ++x) {
      const int query = y * qw + x;
      for (const int l : kJumps) {
        // Up, down, left, right as (dy, dx).
        const std::array<std::array<int, 2>, 4> deltas = {
            {{-l, 0}, {l, 0}, {0, -l}, {0, l}}};
        for (const auto& [dy, dx] : deltas) {
          const int ny = y + dy;
          const int nx = x + dx;
          if (ny < 0 || ny >= qh || nx < 0 || nx >= qw) continue;
          const auto neighbour = field.candidates(ny * qw + nx);
          neighbour_keys.assign(neighbour.size(), 0);
          std::transform(neighbour.begin(), neighbour.end(),
                         neighbour_keys.begin(),
                         [](const Candidate& c) { return c.key; });
          for (const std::int32_t key : neighbour_keys) {
            const int cy = key / kw - dy;
            const int cx = key % kw - dx;
            if (cy < 0 || cy >= kh || cx < 0 || cx >= kw) continue;
            const int cand = cy * kw + cx;
            if (field.contains(query, cand)) continue;
            ++counter.score_evaluations;
            field.offer(query, cand, static_cast<float>(scorer(query, cand)));
          }
        }
      }
    }
  }
}

}  // namespace

AnnField::AnnField(int query_width, int query_height, int key_width,
                   int key_height, int k)
    : query_width_(query_width), query_height_(query_height),
      key_width_(key_width), key_height_(key_height), k_(k) {
  if (query_width < 1 || query_height < 1 || key_width < 1 || key_height < 1) {
    throw ConfigError("ANN field extents must be positive");
  }
  if (k < 1) throw ConfigError("k must be >= 1, got " + std::to_string(k));
  if (k > key_count()) {
    throw ConfigError("k = " + std::to_string(k) + " exceeds the " +
                      std::to_string(key_count()) + " available keys");
  }
  entries_.resize(static_cast<std::size_t>(query_count()) * k);
  sizes_.assign(static_cast<std::size_t>(query_count()), 0);
}

bool AnnField::contains(int query, int key) const {
  const auto list = candidates(query);
  return std::any_of(list.begin(), list.end(),
                     [key](const Candidate& c) { return c.key == key; });
}

bool AnnField::offer(int query, int key, float score) {
  if (contains(query, key)) return false;
  Candidate* list = entries_.data() + static_cast<std::size_t>(query) * k_;
  std::int32_t& n = sizes_[query];
  if (n == k_) {
    if (!(score > list[n - 1].score)) return false;
    --n;
  }
  // First slot whose score is strictly lower than the newcomer.
  int pos = n;
  while (pos > 0 && list[pos - 1].score < score) {
    list[pos] = list[pos - 1];
    --pos;
  }
  list[pos] = Candidate{key, score};
  ++n;
  return true;
}

void validate(const SearchParams& params) {
  if (params.iterations < 0) {
    throw ConfigError("iterations must be >= 0, got " +
                      std::to_string(params.iterations));
  }
  if (params.k < 1) {
    throw ConfigError("k must be >= 1, got " + std::to_string(params.k));
  }
  if (params.window_max < 0) {
    throw ConfigError("window_max must be >= 1 (or 0 for auto), got " +
                      std::to_string(params.window_max));
  }
  if (!(params.window_decay > 0.0 && params.window_decay < 1.0)) {
    throw ConfigError("window decay must lie in (0, 1), got " +
                      std::to_string(params.window_decay));
  }
  if (params.threads < 1) {
    throw ConfigError("threads must be >= 1, got " +
                      std::to_string(params.threads));
  }
}

void OpCounter::merge(const OpCounter& other) {
  score_evaluations += other.score_evaluations;
  peak_candidate_entries =
      std::max(peak_candidate_entries, other.peak_candidate_entries);
}

template <typename T>
AnnField init_random(const PatchScorer<T>& scorer, const SearchParams& params,
                     OpCounter* counter) {
  validate(params);
  AnnField field(scorer.queries().width(), scorer.queries().height(),
                 scorer.keys().width(), scorer.keys().height(), params.k);
  const int n_keys = field.key_count();
  const int k = params.k;
  std::vector<OpCounter> local(params.threads);
  internal::parallel_chunks(
      field.query_count(), params.threads, [&](int begin, int end, int w) {
        std::vector<std::int32_t> pool;
        for (int q = begin; q < end; ++q) {
          SplitMix64 rng = query_rng(params.seed, Stream::kInit, 0, q);
          if (2 * k > n_keys) {
            pool.resize(n_keys);
            std::iota(pool.begin(), pool.end(), 0);
            std::shuffle(pool.begin(), pool.end(), rng);
            pool.resize(k);
          } else {
            pool.clear();
            while (static_cast<int>(pool.size()) < k) {
              const int key = uniform_int(rng, 0, n_keys - 1);
              if (std::find(pool.begin(), pool.end(), key) == pool.end()) {
                pool.push_back(key);
              }
            }
          }
          for (const std::int32_t key : pool) {
            field.offer(q, key, static_cast<float>(scorer(q, key)));
          }
          local[w].score_evaluations += pool.size();
        }
      });
  if (counter != nullptr) {
    for (const auto& c : local) counter->merge(c);
    counter->peak_candidate_entries =
        std::max(counter->peak_candidate_entries, field.capacity_entries());
  }
  return field;
}

template <typename T>
void propagate_jumpflood(const PatchScorer<T>& scorer, AnnField& field,
                         int threads, OpCounter* counter) {
  check_field_matches(scorer, field);
  const int height = field.query_height();
  // Bands must be at least as tall as the largest jump so that a band only
  // ever reads its direct neighbours.
  const int bands = std::min(2 * std::max(threads, 1), height / 8);
  OpCounter total;
  if (threads <= 1 || bands < 2) {
    propagate_rows(scorer, field, 0, height, total);
  } else {
    const auto band_begin = [&](int b) {
      return static_cast<int>(static_cast<long long>(height) * b / bands);
    };
    for (int parity = 0; parity < 2; ++parity) {
      const int count = (bands - parity + 1) / 2;
      std::vector<OpCounter> local(count);
      internal::parallel_chunks(count, threads, [&](int begin, int end, int) {
        for (int j = begin; j < end; ++j) {
          const int b = 2 * j + parity;
          propagate_rows(scorer, field, band_begin(b), band_begin(b + 1),
                         local[j]);
        }
      });
      for (const auto& c : local) total.merge(c);
    }
  }
  if (counter != nullptr) counter->merge(total);
}

template <typename T>
void random_search(const PatchScorer<T>& scorer, AnnField& field,
                   const SearchParams& params, int iteration,
                   OpCounter* counter) {
  validate(params);
  check_field_matches(scorer, field);
  const int kw = field.key_width();
  const int kh = field.key_height();
  const int window_max =
      params.window_max > 0 ? params.window_max : std::max(kw, kh);
  std::vector<int> radii;
  for (double w = window_max; w >= 1.0; w *= params.window_decay) {
    radii.push_back(static_cast<int>(w));
  }
  std::vector<OpCounter> local(params.threads);
  internal::parallel_chunks(
      field.query_count(), params.threads, [&](int begin, int end, int w) {
        std::vector<std::int32_t> centres;
        for (int q = begin; q < end; ++q) {
          SplitMix64 rng =
              query_rng(params.seed, Stream::kRandomSearch, iteration, q);
          const auto list = field.candidates(q);
          centres.resize(list.size());
          std::transform(list.begin(), list.end(), centres.begin(),
                         [](const Candidate& c) { return c.key; });
          for (const std::int32_t centre : centres) {
            const int cx = centre % kw;
            const int cy = centre / kw;
            for (const int r : radii) {
              const int x = uniform_int(rng, std::max(cx - r, 0),
                                        std::min(cx + r, kw - 1));
              const int y = uniform_int(rng, std::max(cy - r, 0),
                                        std::min(cy + r, kh - 1));
              const int cand = y * kw + x;
              if (field.contains(q, cand)) continue;
              ++local[w].score_evaluations;
              field.offer(q, cand, static_cast<float>(scorer(q, cand)));
            }
          }
        }
      });
  if (counter != nullptr) {
    for (const auto& c : local) counter->merge(c);
  }
}

template <typename T>
AnnField run(const PatchScorer<T>& scorer, const SearchParams& params,
             const SearchObserver& observer, OpCounter* counter) {
  AnnField field = init_random(scorer, params, counter);
  if (observer) observer(SearchStep::kInit, 0, field);
  for (int it = 0; it < params.iterations; ++it) {
    propagate_jumpflood(scorer, field, params.threads, counter);
    if (observer) observer(SearchStep::kPropagation, it, field);
    random_search(scorer, field, params, it, counter);
    if (observer) observer(SearchStep::kRandomSearch, it, field);
  }
  return field;
}

template <typename T>
AnnField exact_nn(const PatchScorer<T>& scorer, int k, bool force) {
  const auto& q = scorer.queries();
  const auto& keys = scorer.keys();
  const std::uint64_t work =
      static_cast<std::uint64_t>(q.count()) * static_cast<std::uint64_t>(keys.count());
  if (work > kOracleEvaluationCap && !force) {
    throw CapacityError("exact_nn: " + std::to_string(work) +
                        " score evaluations exceed the oracle cap of 2^26 = " +
                        std::to_string(kOracleEvaluationCap) +
                        " (pass force to override)");
  }
  AnnField field(q.width(), q.height(), keys.width(), keys.height(), k);
  for (int i = 0; i < q.count(); ++i) {
    for (int j = 0; j < keys.count(); ++j) {
      field.offer(i, j, static_cast<float>(scorer(i, j)));
    }
  }
  return field;
}

template AnnField init_random(const PatchScorer<float>&, const SearchParams&,
                              OpCounter*);
template AnnField init_random(const PatchScorer<double>&, const SearchParams&,
                              OpCounter*);
template void propagate_jumpflood(const PatchScorer<float>&, AnnField&, int,
                                  OpCounter*);
template void propagate_jumpflood(const PatchScorer<double>&, AnnField&, int,
                                  OpCounter*);
template void random_search(const PatchScorer<float>&, AnnField&,
                            const SearchParams&, int, OpCounter*);
template void random_search(const PatchScorer<double>&, AnnField&,
                            const SearchParams&, int, OpCounter*);
template AnnField run(const PatchScorer<float>&, const SearchParams&,
                      const SearchObserver&, OpCounter*);
template AnnField run(const PatchScorer<double>&, const SearchParams&,
                      const SearchObserver&, OpCounter*);
template AnnField exact_nn(const PatchScorer<float>&, int, bool);
template AnnField exact_nn(const PatchScorer<double>&, int, bool);

}  // namespace psal
