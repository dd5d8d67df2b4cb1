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

#include "psal/similarity.h"

#include <cmath>
#include <cstddef>
#include <string>

namespace psal {

namespace {

struct Moments {
  double qk = 0.0;
  double qq = 0.0;
  double kk = 0.0;
};

// The hot kernels are cloned for AVX2+FMA with a portable fallback picked at
// load time.
#define PSAL_KERNEL __attribute__((target_clones("avx2,fma", "default")))

#define PSAL_DEFINE_KERNELS(T)                                               \
  PSAL_KERNEL double squared_distance(const T* q, const T* k,             \
                                      std::size_t n) {                     \
    double acc = 0.0;                                                      \
    _Pragma("omp simd reduction(+ : acc)") for (std::size_t e = 0; e < n;  \
                                                ++e) {                     \
      const double d = static_cast<double>(q[e]) - static_cast<double>(k[e]); \
      acc += d * d;                                                        \
    }                                                                      \
    return acc;                                                            \
  }                                                                        \
  PSAL_KERNEL double dot(const T* q, const T* k, std::size_t n) {          \
    double acc = 0.0;                                                      \
    _Pragma("omp simd reduction(+ : acc)") for (std::size_t e = 0; e < n;  \
                                                ++e) {                     \
      acc += static_cast<double>(q[e]) * static_cast<double>(k[e]);        \
    }                                                                      \
    return acc;                                                            \
  }                                                                        \
  PSAL_KERNEL void accumulate_moments(const T* q, const T* k,              \
                                      std::size_t n, Moments& m) {         \
    double qk = 0.0, qq = 0.0, kk = 0.0;                                   \
    _Pragma("omp simd reduction(+ : qk, qq, kk)") for (std::size_t e = 0;  \
                                                       e < n; ++e) {       \
      const double a = q[e];                                               \
      const double b = k[e];                                               \
      qk += a * b;                                                         \
      qq += a * a;                                                         \
      kk += b * b;                                                         \
    }                                                                      \
    m.qk += qk;                                                            \
    m.qq += qq;                                                            \
    m.kk += kk;                                                            \
  }

PSAL_DEFINE_KERNELS(float)
PSAL_DEFINE_KERNELS(double)

#undef PSAL_DEFINE_KERNELS
#undef PSAL_KERNEL

double cosine_from(const Moments& m) {
  if (m.qq <= 0.0 || m.kk <= 0.0) {
    throw DegenerateInputError("cosine similarity of a zero-norm patch");
  }
  return m.qk / (std::sqrt(m.qq) * std::sqrt(m.kk));
}

template <typename T>
void check_lengths(std::span<const T> q, std::span<const T> k) {
  if (q.size() != k.size() || q.empty()) {
    throw ContractError("similarity: patch lengths " +
                        std::to_string(q.size()) + " and " +
                        std::to_string(k.size()) + " must match and be >= 1");
  }
}

}  // namespace

Metric parse_metric(std::string_view name) {
  if (name == "dot") return Metric::kDot;
  if (name == "l2") return Metric::kNegL2;
  if (name == "cosine") return Metric::kCosine;
  throw ConfigError("unknown metric '" + std::string(name) +
                    "' (expected dot, l2 or cosine)");
}

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::kDot:
      return "dot";
    case Metric::kNegL2:
      return "l2";
    case Metric::kCosine:
      return "cosine";
  }
  return "unknown";
}

template <typename T>
double score(std::span<const T> q, std::span<const T> k, Metric metric) {
  check_lengths(q, k);
  switch (metric) {
    case Metric::kDot:
      return dot(q.data(), k.data(), q.size());
    case Metric::kNegL2:
      return -squared_distance(q.data(), k.data(), q.size());
    case Metric::kCosine: {
      Moments m;
      accumulate_moments(q.data(), k.data(), q.size(), m);
      return cosine_from(m);
    }
  }
  return 0.0;
}

template <typename T>
void accumulate_score_grad(std::span<const T> q, std::span<const T> k,
                           Metric metric, double scale, std::span<double> dq,
                           std::span<double> dk) {
  const std::size_t n = q.size();
  switch (metric) {
    case Metric::kDot:
      for (std::size_t e = 0; e < n; ++e) {
        dq[e] += scale * k[e];
        dk[e] += scale * q[e];
      }
      return;
    case Metric::kNegL2:
      for (std::size_t e = 0; e < n; ++e) {
        const double g = 2.0 * scale * (static_cast<double>(q[e]) - k[e]);
        dq[e] -= g;
        dk[e] += g;
      }
      return;
    case Metric::kCosine: {
      Moments m;
      accumulate_moments(q.data(), k.data(), n, m);
      const double s = cosine_from(m);
      const double inv = 1.0 / (std::sqrt(m.qq) * std::sqrt(m.kk));
      // d/dq = k / (|q||k|) - s q / |q|^2, symmetric for k.
      for (std::size_t e = 0; e < n; ++e) {
        dq[e] += scale * (k[e] * inv - s * q[e] / m.qq);
        dk[e] += scale * (q[e] * inv - s * k[e] / m.kk);
      }
      return;
    }
  }
}

template <typename T>
ScoreGrad score_grad(std::span<const T> q, std::span<const T> k,
                     Metric metric) {
  check_lengths(q, k);
  ScoreGrad g{std::vector<double>(q.size(), 0.0),
              std::vector<double>(k.size(), 0.0)};
  accumulate_score_grad(q, k, metric, 1.0, std::span<double>(g.dq),
                        std::span<double>(g.dk));
  return g;
}

template <typename T>
PatchScorer<T>::PatchScorer(const PatchView<T>& queries,
                            const PatchView<T>& keys, Metric metric)
    : queries_(&queries), keys_(&keys), metric_(metric) {
  if (queries.patch_size() != keys.patch_size() ||
      queries.channels() != keys.channels()) {
    throw ContractError("PatchScorer: query and key patches differ in shape");
  }
}

template <typename T>
double PatchScorer<T>::operator()(int query_index, int key_index) const {
  const Position qp = queries_->source().position_of(query_index);
  const Position kp = keys_->source().position_of(key_index);
  const int p = queries_->patch_size();
  const std::size_t row_len =
      static_cast<std::size_t>(p) * queries_->channels();
  switch (metric_) {
    case Metric::kNegL2: {
      double acc = 0.0;
      for (int dy = 0; dy < p; ++dy) {
        acc += squared_distance(queries_->row(qp, dy), keys_->row(kp, dy),
                                row_len);
      }
      return -acc;
    }
    case Metric::kDot: {
      double acc = 0.0;
      for (int dy = 0; dy < p; ++dy) {
        acc += dot(queries_->row(qp, dy), keys_->row(kp, dy), row_len);
      }
      return acc;
    }
    case Metric::kCosine: {
      Moments m;
      for (int dy = 0; dy < p; ++dy) {
        accumulate_moments(queries_->row(qp, dy), keys_->row(kp, dy), row_len,
                           m);
      }
      return cosine_from(m);
    }
  }
  return 0.0;
}

template double score(std::span<const float>, std::span<const float>, Metric);
template double score(std::span<const double>, std::span<const double>,
                      Metric);
template ScoreGrad score_grad(std::span<const float>, std::span<const float>,
                              Metric);
template ScoreGrad score_grad(std::span<const double>, std::span<const double>,
                              Metric);
template void accumulate_score_grad(std::span<const float>,
                                    std::span<const float>, Metric, double,
                                    std::span<double>, std::span<double>);
template void accumulate_score_grad(std::span<const double>,
                                    std::span<const double>, Metric, double,
                                    std::span<double>, std::span<double>);
template class PatchScorer<float>;
template class PatchScorer<double>;

}  // namespace psal
