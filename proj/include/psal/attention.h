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

#ifndef PSAL_ATTENTION_H_
#define PSAL_ATTENTION_H_

#include <string>
#include <string_view>
#include <vector>

#include "psal/ann_field.h"
#include "psal/core.h"
#include "psal/similarity.h"

namespace psal {

// How an ANN field turns into attention weights.
//   kHard         one-hot on the single retained candidate (k must be 1)
//   kSoftKnn      softmax_t over the k retained candidates of each query
//   kAggregation  softmax_t over the candidates of every spatial neighbour
//                 i' in the p x p window, shifted by (i - i')
enum class AttentionMode { kHard, kSoftKnn, kAggregation };

AttentionMode parse_attention_mode(std::string_view name);
std::string to_string(AttentionMode mode);

struct AttentionConfig {
  Metric metric = Metric::kNegL2;
  double temperature = 0.1;
  AttentionMode mode = AttentionMode::kSoftKnn;
  int patch_size = 7;
  int k = 3;
};

void validate(const AttentionConfig& config);

// Dense softmax_t attention over every key (or every `key_stride`-th key
// along both axes, starting at the origin). `values` must share the key
// extent. Refuses with CapacityError above kOracleEvaluationCap unless
// `force`.
template <typename T>
FeatureMap<T> full_attention(const PatchScorer<T>& scorer,
                             const FeatureMap<T>& values, double temperature,
                             int key_stride = 1, bool force = false,
                             int threads = 1);

// Row i of the output is values[psi(i)].
template <typename T>
FeatureMap<T> hard_attention(const AnnField& field,
                             const FeatureMap<T>& values);

template <typename T>
FeatureMap<T> soft_knn_attention(const PatchScorer<T>& scorer,
                                 const FeatureMap<T>& values,
                                 const AnnField& field, double temperature,
                                 int threads = 1);

// Candidate weights are s(Q_i', K_j') for the neighbour's own match j';
// pairs that land on the same key stay separate softmax logits.
template <typename T>
FeatureMap<T> aggregation_attention(const PatchScorer<T>& scorer,
                                    const FeatureMap<T>& values,
                                    const AnnField& field, double temperature,
                                    int threads = 1);

template <typename T>
FeatureMap<T> apply_attention(const PatchScorer<T>& scorer,
                              const FeatureMap<T>& values,
                              const AnnField& field, AttentionMode mode,
                              double temperature, int threads = 1);

struct WeightedKey {
  int key = 0;
  double weight = 0.0;
};

// The attention row of one query as (key, weight) terms, in the order the
// forward pass accumulates them. Duplicated keys appear once per logit.
template <typename T>
std::vector<WeightedKey> attention_row(const PatchScorer<T>& scorer,
                                       const AnnField& field,
                                       AttentionMode mode, double temperature,
                                       int query);

}  // namespace psal

#endif  // PSAL_ATTENTION_H_
