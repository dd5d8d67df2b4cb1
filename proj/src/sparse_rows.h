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

#ifndef PSAL_SRC_SPARSE_ROWS_H_
#define PSAL_SRC_SPARSE_ROWS_H_

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "parallel.h"
#include "psal/ann_field.h"
#include "psal/attention.h"
#include "psal/similarity.h"

namespace psal::internal {

// Shared forward/backward machinery for the two soft modes. Every row is a
// list of terms (pair, key): `pair` = source_query * k + slot addresses the
// similarity s(Q_source, K_psi(source)[slot]); `key` is the key whose value
// the term reads.
struct RowTerm {
  int pair;
  int key;
};

template <typename Fn>
void for_each_term(const AnnField& field, AttentionMode mode, int patch_size,
                   int query, Fn&& fn) {
  const int k = field.k();
  if (mode != AttentionMode::kAggregation) {
    const auto list = field.candidates(query);
    for (int slot = 0; slot < static_cast<int>(list.size()); ++slot) {
      fn(RowTerm{query * k + slot, list[slot].key});
    }
    return;
  }
  const int qw = field.query_width();
  const int qh = field.query_height();
  const int kw = field.key_width();
  const int kh = field.key_height();
  const int x = query % qw;
  const int y = query / qw;
  const int r = patch_size / 2;
  for (int dy = -r; dy <= r; ++dy) {
    const int sy = y + dy;
    if (sy < 0 || sy >= qh) continue;
    for (int dx = -r; dx <= r; ++dx) {
      const int sx = x + dx;
      if (sx < 0 || sx >= qw) continue;
      const int source = sy * qw + sx;
      const auto list = field.candidates(source);
      for (int slot = 0; slot < static_cast<int>(list.size()); ++slot) {
        // j = j' - (i' - i)
        const int jy = list[slot].key / kw - dy;
        const int jx = list[slot].key % kw - dx;
        if (jy < 0 || jy >= kh || jx < 0 || jx >= kw) continue;
        fn(RowTerm{source * k + slot, jy * kw + jx});
      }
    }
  }
}

// s(Q_i, K_psi(i)[slot]) for every filled slot, recomputed from the maps so
// that the result tracks the current Q and K rather than cached scores.
template <typename T>
std::vector<double> pair_scores(const PatchScorer<T>& scorer,
                                const AnnField& field, int threads) {
  const int k = field.k();
  std::vector<double> scores(static_cast<std::size_t>(field.query_count()) * k,
                             0.0);
  parallel_chunks(field.query_count(), threads, [&](int begin, int end, int) {
    for (int q = begin; q < end; ++q) {
      const auto list = field.candidates(q);
      for (int slot = 0; slot < static_cast<int>(list.size()); ++slot) {
        scores[static_cast<std::size_t>(q) * k + slot] =
            scorer(q, list[slot].key);
      }
    }
  });
  return scores;
}

// Collects the terms of one row and turns their logits into softmax_t
// weights (max-shifted for stability).
class RowSoftmax {
 public:
  template <typename Fn>
  void build(const AnnField& field, AttentionMode mode, int patch_size,
             int query, const std::vector<double>& scores, double temperature,
             Fn&& on_empty) {
    terms_.clear();
    weights_.clear();
    double top = -std::numeric_limits<double>::infinity();
    for_each_term(field, mode, patch_size, query, [&](RowTerm t) {
      terms_.push_back(t);
      const double z = scores[t.pair] / temperature;
      weights_.push_back(z);
      top = std::max(top, z);
    });
    if (terms_.empty()) {
      on_empty();
      return;
    }
    double sum = 0.0;
    for (double& w : weights_) {
      w = std::exp(w - top);
      sum += w;
    }
    for (double& w : weights_) w /= sum;
  }

  const std::vector<RowTerm>& terms() const { return terms_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<RowTerm> terms_;
  std::vector<double> weights_;
};

}  // namespace psal::internal

#endif  // PSAL_SRC_SPARSE_ROWS_H_
