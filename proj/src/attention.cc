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

#include "psal/attention.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "parallel.h"
#include "sparse_rows.h"

namespace psal {

namespace {

void check_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw ConfigError("temperature must be a positive finite number, got " +
                      std::to_string(t));
  }
}

template <typename T>
void check_values(const AnnField& field, const FeatureMap<T>& values) {
  if (values.width() != field.key_width() ||
      values.height() != field.key_height()) {
    throw ContractError("value map extent " + std::to_string(values.width()) +
                        "x" + std::to_string(values.height()) +
                        " differs from key extent " +
                        std::to_string(field.key_width()) + "x" +
                        std::to_string(field.key_height()));
  }
}

template <typename T>
void check_scorer(const PatchScorer<T>& scorer, const AnnField& field) {
  if (scorer.queries().width() != field.query_width() ||
      scorer.queries().height() != field.query_height() ||
      scorer.keys().width() != field.key_width() ||
      scorer.keys().height() != field.key_height()) {
    throw ContractError("ANN field extent does not match query/key views");
  }
}

// out[r * n_keys + j] = <q_r, key_j> for four packed queries. Cloned for
// AVX2+FMA with a portable fallback.
__attribute__((target_clones("avx2,fma", "default"))) void dot_block4(
    const double* q, const double* keys, std::size_t n_keys, std::size_t d,
    double* out) {
  const double* q0 = q;
  const double* q1 = q + d;
  const double* q2 = q + 2 * d;
  const double* q3 = q + 3 * d;
  for (std::size_t j = 0; j < n_keys; ++j) {
    const double* kv = keys + j * d;
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
#pragma omp simd reduction(+ : a0, a1, a2, a3)
    for (std::size_t e = 0; e < d; ++e) {
      a0 += q0[e] * kv[e];
      a1 += q1[e] * kv[e];
      a2 += q2[e] * kv[e];
      a3 += q3[e] * kv[e];
    }
    out[j] = a0;
    out[n_keys + j] = a1;
    out[2 * n_keys + j] = a2;
    out[3 * n_keys + j] = a3;
  }
}

double squared_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

template <typename T>
FeatureMap<T> sparse_forward(const PatchScorer<T>& scorer,
                             const FeatureMap<T>& values,
                             const AnnField& field, AttentionMode mode,
                             double temperature, int threads) {
  check_temperature(temperature);
  check_scorer(scorer, field);
  check_values(field, values);
  const int channels = values.channels();
  FeatureMap<T> out(field.query_height(), field.query_width(), channels);
  const std::vector<double> scores =
      internal::pair_scores(scorer, field, threads);
  const int patch = scorer.queries().patch_size();
  internal::parallel_chunks(
      field.query_count(), threads, [&](int begin, int end, int) {
        internal::RowSoftmax row;
        std::vector<double> acc(channels);
        for (int q = begin; q < end; ++q) {
          row.build(field, mode, patch, q, scores, temperature, [q] {
            throw ContractError("empty candidate list for query " +
                                std::to_string(q));
          });
          std::fill(acc.begin(), acc.end(), 0.0);
          const auto& terms = row.terms();
          const auto& weights = row.weights();
          for (std::size_t t = 0; t < terms.size(); ++t) {
            const auto v = values.pixel(terms[t].key);
            for (int c = 0; c < channels; ++c) acc[c] += weights[t] * v[c];
          }
          auto dst = out.pixel(q);
          for (int c = 0; c < channels; ++c) dst[c] = static_cast<T>(acc[c]);
        }
      });
  return out;
}

}  // namespace

AttentionMode parse_attention_mode(std::string_view name) {
  if (name == "hard") return AttentionMode::kHard;
  if (name == "soft_knn" || name == "soft-knn") return AttentionMode::kSoftKnn;
  if (name == "aggregation" || name == "aggreg") {
    return AttentionMode::kAggregation;
  }
  throw ConfigError("unknown attention mode '" + std::string(name) +
                    "' (expected hard, soft_knn or aggregation)");
}

std::string to_string(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::kHard:
      return "hard";
    case AttentionMode::kSoftKnn:
      return "soft_knn";
    case AttentionMode::kAggregation:
      return "aggregation";
  }
  return "unknown";
}

void validate(const AttentionConfig& config) {
  if (config.mode != AttentionMode::kHard) {
    check_temperature(config.temperature);
  }
  if (config.patch_size < 1 || config.patch_size % 2 == 0) {
    throw ConfigError("patch size must be odd and positive, got " +
                      std::to_string(config.patch_size));
  }
  if (config.k < 1) {
    throw ConfigError("k must be >= 1, got " + std::to_string(config.k));
  }
  if (config.mode == AttentionMode::kHard && config.k != 1) {
    throw ConfigError("hard attention requires k = 1, got " +
                      std::to_string(config.k));
  }
}

template <typename T>
FeatureMap<T> full_attention(const PatchScorer<T>& scorer,
                             const FeatureMap<T>& values, double temperature,
                             int key_stride, bool force, int threads) {
  check_temperature(temperature);
  if (key_stride < 1) {
    throw ConfigError("key stride must be >= 1, got " +
                      std::to_string(key_stride));
  }
  const auto& queries = scorer.queries();
  const auto& keys = scorer.keys();
  if (values.width() != keys.width() || values.height() != keys.height()) {
    throw ContractError("value map extent differs from key extent");
  }
  std::vector<int> key_ids;
  for (int y = 0; y < keys.height(); y += key_stride) {
    for (int x = 0; x < keys.width(); x += key_stride) {
      key_ids.push_back(y * keys.width() + x);
    }
  }
  const std::uint64_t work = static_cast<std::uint64_t>(queries.count()) *
                             static_cast<std::uint64_t>(key_ids.size());
  if (work > kOracleEvaluationCap && !force) {
    throw CapacityError("full_attention: " + std::to_string(work) +
                        " score evaluations exceed the oracle cap of 2^26 = " +
                        std::to_string(kOracleEvaluationCap) +
                        " (pass force to override)");
  }
  // Key patches packed contiguously in double. For dot and l2 the logits
  // come from blocked dot products (-|q-k|^2 = 2<q,k> - |q|^2 - |k|^2);
  // cosine goes through the generic scorer.
  const std::size_t d = static_cast<std::size_t>(keys.dim());
  const std::size_t n_keys = key_ids.size();
  std::vector<double> key_patches(n_keys * d);
  std::vector<double> key_norms(n_keys);
  {
    std::vector<T> tmp(d);
    for (std::size_t j = 0; j < n_keys; ++j) {
      keys.extract_into(keys.source().position_of(key_ids[j]), tmp);
      std::copy(tmp.begin(), tmp.end(), key_patches.begin() + j * d);
      key_norms[j] = squared_norm(
          std::span<const double>(key_patches).subspan(j * d, d));
    }
  }
  const Metric metric = scorer.metric();
  const int channels = values.channels();
  constexpr int kBlock = 4;
  FeatureMap<T> out(queries.height(), queries.width(), channels);
  const int blocks = (queries.count() + kBlock - 1) / kBlock;
  internal::parallel_chunks(blocks, threads, [&](int begin, int end, int) {
    std::vector<T> tmp(d);
    std::vector<double> q(kBlock * d, 0.0);
    std::vector<double> logits(kBlock * n_keys);
    std::vector<double> acc(channels);
    for (int b = begin; b < end; ++b) {
      const int first = b * kBlock;
      const int rows = std::min(kBlock, queries.count() - first);
      for (int r = 0; r < rows; ++r) {
        queries.extract_into(queries.source().position_of(first + r), tmp);
        std::copy(tmp.begin(), tmp.end(), q.begin() + r * d);
      }
      if (metric == Metric::kCosine) {
        for (int r = 0; r < rows; ++r) {
          const std::span<const double> qr(q.data() + r * d, d);
          for (std::size_t j = 0; j < n_keys; ++j) {
            logits[r * n_keys + j] = score<double>(
                qr, std::span<const double>(key_patches).subspan(j * d, d),
                metric);
          }
        }
      } else {
        dot_block4(q.data(), key_patches.data(), n_keys, d, logits.data());
      }
      for (int r = 0; r < rows; ++r) {
        double* z = logits.data() + r * n_keys;
        const double qn =
            squared_norm(std::span<const double>(q.data() + r * d, d));
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n_keys; ++j) {
          if (metric == Metric::kNegL2) {
            z[j] = 2.0 * z[j] - qn - key_norms[j];
          }
          z[j] /= temperature;
          top = std::max(top, z[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n_keys; ++j) {
          z[j] = std::exp(z[j] - top);
          sum += z[j];
        }
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j = 0; j < n_keys; ++j) {
          const double w = z[j] / sum;
          const auto v = values.pixel(key_ids[j]);
          for (int c = 0; c < channels; ++c) acc[c] += w * v[c];
        }
        auto dst = out.pixel(first + r);
        for (int c = 0; c < channels; ++c) dst[c] = static_cast<T>(acc[c]);
      }
    }
  });
  return out;
}

template <typename T>
FeatureMap<T> hard_attention(const AnnField& field,
                             const FeatureMap<T>& values) {
  if (field.k() != 1) {
    throw ContractError("hard attention needs a k = 1 field, got k = " +
                        std::to_string(field.k()));
  }
  check_values(field, values);
  FeatureMap<T> out(field.query_height(), field.query_width(),
                    values.channels());
  for (int q = 0; q < field.query_count(); ++q) {
    if (field.size(q) == 0) {
      throw ContractError("empty candidate list for query " +
                          std::to_string(q));
    }
    const auto src = values.pixel(field.best(q).key);
    std::copy(src.begin(), src.end(), out.pixel(q).begin());
  }
  return out;
}

template <typename T>
FeatureMap<T> soft_knn_attention(const PatchScorer<T>& scorer,
                                 const FeatureMap<T>& values,
                                 const AnnField& field, double temperature,
                                 int threads) {
  return sparse_forward(scorer, values, field, AttentionMode::kSoftKnn,
                        temperature, threads);
}

template <typename T>
FeatureMap<T> aggregation_attention(const PatchScorer<T>& scorer,
                                    const FeatureMap<T>& values,
                                    const AnnField& field, double temperature,
                                    int threads) {
  return sparse_forward(scorer, values, field, AttentionMode::kAggregation,
                        temperature, threads);
}

template <typename T>
FeatureMap<T> apply_attention(const PatchScorer<T>& scorer,
                              const FeatureMap<T>& values,
                              const AnnField& field, AttentionMode mode,
                              double temperature, int threads) {
  switch (mode) {
    case AttentionMode::kHard:
      return hard_attention(field, values);
    case AttentionMode::kSoftKnn:
      return soft_knn_attention(scorer, values, field, temperature, threads);
    case AttentionMode::kAggregation:
      return aggregation_attention(scorer, values, field, temperature,
                                   threads);
  }
  throw ConfigError("unknown attention mode");
}

template <typename T>
std::vector<WeightedKey> attention_row(const PatchScorer<T>& scorer,
                                       const AnnField& field,
                                       AttentionMode mode, double temperature,
                                       int query) {
  check_scorer(scorer, field);
  if (mode == AttentionMode::kHard) {
    if (field.k() != 1) {
      throw ContractError("hard attention needs a k = 1 field");
    }
    return {WeightedKey{field.best(query).key, 1.0}};
  }
  check_temperature(temperature);
  // Only the pairs this row can touch need scoring.
  const int k = field.k();
  std::vector<double> scores(static_cast<std::size_t>(field.query_count()) * k,
                             0.0);
  internal::for_each_term(
      field, mode, scorer.queries().patch_size(), query,
      [&](internal::RowTerm t) {
        const int source = t.pair / k;
        scores[t.pair] =
            scorer(source, field.candidates(source)[t.pair % k].key);
      });
  internal::RowSoftmax row;
  row.build(field, mode, scorer.queries().patch_size(), query, scores,
            temperature, [query] {
              throw ContractError("empty candidate list for query " +
                                  std::to_string(query));
            });
  std::vector<WeightedKey> out;
  for (std::size_t t = 0; t < row.terms().size(); ++t) {
    out.push_back({row.terms()[t].key, row.weights()[t]});
  }
  return out;
}

#define PSAL_INSTANTIATE(T)                                                   \
  template FeatureMap<T> full_attention(const PatchScorer<T>&,                \
                                        const FeatureMap<T>&, double, int,    \
                                        bool, int);                           \
  template FeatureMap<T> hard_attention(const AnnField&,                      \
                                        const FeatureMap<T>&);                \
  template FeatureMap<T> soft_knn_attention(                                  \
      const PatchScorer<T>&, const FeatureMap<T>&, const AnnField&, double,   \
      int);                                                                   \
  template FeatureMap<T> aggregation_attention(                               \
      const PatchScorer<T>&, const FeatureMap<T>&, const AnnField&, double,   \
      int);                                                                   \
  template FeatureMap<T> apply_attention(const PatchScorer<T>&,               \
                                         const FeatureMap<T>&,                \
                                         const AnnField&, AttentionMode,      \
                                         double, int);                        \
  template std::vector<WeightedKey> attention_row(                            \
      const PatchScorer<T>&, const AnnField&, AttentionMode, double, int);

PSAL_INSTANTIATE(float)
PSAL_INSTANTIATE(double)

#undef PSAL_INSTANTIATE

}  // namespace psal
