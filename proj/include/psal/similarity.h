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

#ifndef PSAL_SIMILARITY_H_
#define PSAL_SIMILARITY_H_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psal/core.h"

namespace psal {

// Patch similarity. For every kind a higher score means more similar.
//   kDot     <q, k>
//   kNegL2   -|q - k|^2
//   kCosine  <q, k> / (|q| |k|)
enum class Metric { kDot, kNegL2, kCosine };

// Accepts the CLI spellings "dot", "l2" and "cosine".
Metric parse_metric(std::string_view name);
std::string to_string(Metric metric);

// All reductions accumulate in double regardless of T.
template <typename T>
double score(std::span<const T> q, std::span<const T> k, Metric metric);

struct ScoreGrad {
  std::vector<double> dq;
  std::vector<double> dk;
};

template <typename T>
ScoreGrad score_grad(std::span<const T> q, std::span<const T> k,
                     Metric metric);

// Adds scale * ds/dq and scale * ds/dk into the output spans without
// allocating. Used on the backward hot path.
template <typename T>
void accumulate_score_grad(std::span<const T> q, std::span<const T> k,
                           Metric metric, double scale, std::span<double> dq,
                           std::span<double> dk);

// Scores patches of two views by centre index without materialising them.
template <typename T>
class PatchScorer {
 public:
  PatchScorer(const PatchView<T>& queries, const PatchView<T>& keys,
              Metric metric);

  const PatchView<T>& queries() const { return *queries_; }
  const PatchView<T>& keys() const { return *keys_; }
  Metric metric() const { return metric_; }

  double operator()(int query_index, int key_index) const;

 private:
  const PatchView<T>* queries_;
  const PatchView<T>* keys_;
  Metric metric_;
};

}  // namespace psal

#endif  // PSAL_SIMILARITY_H_
