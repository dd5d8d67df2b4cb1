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

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "psal/autodiff.h"

namespace psal {

namespace {

// Denominator floor for relative errors, so that two gradients that are both
// numerically zero compare as equal.
constexpr double kNormFloor = 1e-8;

FeatureMapD random_map(int h, int w, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> data(static_cast<std::size_t>(h) * w * c);
  for (double& v : data) v = u(rng);
  return FeatureMapD(h, w, c, std::move(data));
}

double inner(const FeatureMapD& a, const FeatureMapD& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    acc += a.data()[i] * b.data()[i];
  }
  return acc;
}

// Central differences of `loss` w.r.t. every entry of `param`.
template <typename Fn>
std::vector<double> numeric_gradient(std::span<double> param, double step,
                                     Fn&& loss) {
  std::vector<double> grad(param.size());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + step;
    const double up = loss();
    param[i] = saved - step;
    const double down = loss();
    param[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

std::vector<double> biased(std::span<const double> g, double bias) {
  std::vector<double> out(g.begin(), g.end());
  for (double& v : out) v += bias;
  return out;
}

}  // namespace

double relative_error(std::span<const double> analytic,
                      std::span<const double> numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = analytic[i] - numeric[i];
    diff += d * d;
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), kNormFloor});
  return std::sqrt(diff) / denom;
}

double GradCheckResult::max_rel_error() const {
  return std::max({rel_error_dq, rel_error_dk, rel_error_dv});
}

double ConvCheckResult::max_rel_error() const {
  return std::max({rel_error_input, rel_error_weights, rel_error_bias});
}

GradCheckResult check_attention_gradients(const GradCheckCase& c, double step,
                                          double analytic_bias) {
  std::mt19937_64 rng(c.seed);
  FeatureMapD q = random_map(c.height, c.width, c.channels, rng);
  FeatureMapD k = random_map(c.height, c.width, c.channels, rng);
  FeatureMapD v = random_map(c.height, c.width, c.value_channels, rng);
  FeatureMapD upstream = random_map(c.height, c.width, c.value_channels, rng);
  const int kk = c.mode == AttentionMode::kHard ? 1 : c.k;

  // Field from an exhaustive search on the unperturbed maps, then frozen.
  const AnnField field = [&] {
    const PatchView<double> qv(q, c.patch_size);
    const PatchView<double> kv(k, c.patch_size);
    return exact_nn(PatchScorer<double>(qv, kv, c.metric), kk);
  }();

  const auto loss = [&] {
    const PatchView<double> qv(q, c.patch_size);
    const PatchView<double> kv(k, c.patch_size);
    const PatchScorer<double> scorer(qv, kv, c.metric);
    return inner(apply_attention(scorer, v, field, c.mode, c.temperature),
                 upstream);
  };

  GradBundle<double> analytic = [&] {
    const PatchView<double> qv(q, c.patch_size);
    const PatchView<double> kv(k, c.patch_size);
    const PatchScorer<double> scorer(qv, kv, c.metric);
    return backward_attention(scorer, v, field, c.mode, c.temperature,
                              upstream);
  }();

  GradCheckResult r;
  r.qk_exactly_zero =
      std::all_of(analytic.dq.data().begin(), analytic.dq.data().end(),
                  [](double x) { return x == 0.0; }) &&
      std::all_of(analytic.dk.data().begin(), analytic.dk.data().end(),
                  [](double x) { return x == 0.0; });
  const auto nq = numeric_gradient(q.data(), step, loss);
  const auto nk = numeric_gradient(k.data(), step, loss);
  const auto nv = numeric_gradient(v.data(), step, loss);
  r.rel_error_dq = relative_error(biased(analytic.dq.data(), analytic_bias), nq);
  r.rel_error_dk = relative_error(biased(analytic.dk.data(), analytic_bias), nk);
  r.rel_error_dv = relative_error(biased(analytic.dv.data(), analytic_bias), nv);
  return r;
}

ConvCheckResult check_conv_gradients(int height, int width, int in_channels,
                                     int out_channels, std::uint64_t seed,
                                     double step, double analytic_bias) {
  std::mt19937_64 rng(seed);
  FeatureMapD input = random_map(height, width, in_channels, rng);
  FeatureMapD upstream = random_map(height, width, out_channels, rng);
  Conv3x3 layer = Conv3x3::random(in_channels, out_channels, 0.5, rng);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double& b : layer.bias) b = u(rng);

  const auto loss = [&] {
    return inner(conv3x3_forward(input, layer), upstream);
  };
  const Conv3x3Grads g = conv3x3_backward(input, layer, upstream);
  ConvCheckResult r;
  r.rel_error_input =
      relative_error(biased(g.dinput.data(), analytic_bias),
                     numeric_gradient(input.data(), step, loss));
  r.rel_error_weights =
      relative_error(biased(g.dweights, analytic_bias),
                     numeric_gradient(std::span<double>(layer.weights), step, loss));
  r.rel_error_bias =
      relative_error(biased(g.dbias, analytic_bias),
                     numeric_gradient(std::span<double>(layer.bias), step, loss));
  return r;
}

}  // namespace psal
