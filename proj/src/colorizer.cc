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

#include "psal/colorizer.h"

#include <cmath>
#include <ostream>
#include <random>
#include <string>

namespace psal {

namespace {

struct ForwardResult {
  double loss = 0.0;
  FeatureMapD prediction;
};

ForwardResult forward(Tape& tape, const ColorizerWeights& weights,
                      Conv3x3Grads& feature_grads, Conv3x3Grads& output_grads,
                      const FeatureMapD& target_rgb,
                      const FeatureMapD& reference_rgb,
                      const ColorizerConfig& config, int step) {
  const auto gray_q = tape.constant(to_gray(target_rgb));
  const auto gray_r = tape.constant(to_gray(reference_rgb));
  const auto values = tape.constant(reference_rgb);
  const auto feat_q = tape.conv3x3(gray_q, weights.features, feature_grads);
  const auto feat_r = tape.conv3x3(gray_r, weights.features, feature_grads);

  const AttentionConfig& att = config.attention;
  SearchParams search;
  search.iterations = config.search_iterations;
  search.k = att.mode == AttentionMode::kHard ? 1 : att.k;
  search.seed = config.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(step);
  const PatchView<double> qv(tape.value(feat_q), att.patch_size);
  const PatchView<double> kv(tape.value(feat_r), att.patch_size);
  AnnField field = run(PatchScorer<double>(qv, kv, att.metric), search);

  const auto attended = tape.attention(feat_q, feat_r, values, std::move(field), att);
  const auto color = tape.conv3x3(attended, weights.output, output_grads);
  const auto residual = tape.broadcast_channels(gray_q, 3);
  const auto prediction = tape.add(color, residual);
  ForwardResult r;
  r.loss = tape.mse_loss(prediction, target_rgb);
  r.prediction = tape.value(prediction);
  return r;
}

class ParameterUpdater {
 public:
  ParameterUpdater(const ColorizerConfig& config, std::size_t size)
      : config_(config), m_(size, 0.0), v_(size, 0.0) {}

  void apply(std::span<double> params, std::span<const double> grads) {
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (config_.optimizer == Optimizer::kMomentum) {
        m_[i] = config_.momentum * m_[i] - config_.learning_rate * grads[i];
        params[i] += m_[i];
      } else {
        constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
        m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grads[i];
        v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i] * grads[i];
        const double mhat = m_[i] / (1.0 - std::pow(kBeta1, t_));
        const double vhat = v_[i] / (1.0 - std::pow(kBeta2, t_));
        params[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + kEps);
      }
    }
  }

 private:
  const ColorizerConfig& config_;
  std::vector<double> m_;
  std::vector<double> v_;
  int t_ = 0;
};

double norm(const Conv3x3Grads& g) {
  double acc = 0.0;
  for (double x : g.dweights) acc += x * x;
  for (double x : g.dbias) acc += x * x;
  return std::sqrt(acc);
}

void check_inputs(const FeatureMapD& target_rgb,
                  const FeatureMapD& reference_rgb,
                  const ColorizerConfig& config) {
  if (target_rgb.channels() != 3 || reference_rgb.channels() != 3) {
    throw ContractError("colorizer needs RGB target and reference maps");
  }
  validate(config.attention);
  if (config.feature_channels < 1 || config.steps < 0 ||
      config.search_iterations < 0) {
    throw ConfigError("colorizer: feature_channels >= 1, steps >= 0 and "
                      "search_iterations >= 0 required");
  }
}

}  // namespace

FeatureMapD to_gray(const FeatureMapD& rgb) {
  FeatureMapD gray(rgb.height(), rgb.width(), 1);
  for (int p = 0; p < rgb.pixel_count(); ++p) {
    const auto px = rgb.pixel(p);
    double acc = 0.0;
    for (double v : px) acc += v;
    gray.pixel(p)[0] = acc / static_cast<double>(px.size());
  }
  return gray;
}

ColorizerWeights init_colorizer(const ColorizerConfig& config) {
  std::mt19937_64 rng(config.seed);
  ColorizerWeights w;
  w.features = Conv3x3::random(1, config.feature_channels,
                               std::sqrt(2.0 / 9.0), rng);
  w.output = Conv3x3::random(3, 3, 0.01, rng);
  return w;
}

ColorizerOutput evaluate_colorizer(const ColorizerWeights& weights,
                                   const FeatureMapD& target_rgb,
                                   const FeatureMapD& reference_rgb,
                                   const ColorizerConfig& config) {
  check_inputs(target_rgb, reference_rgb, config);
  Tape tape;
  Conv3x3Grads fg, og;
  ForwardResult r = forward(tape, weights, fg, og, target_rgb, reference_rgb,
                            config, config.steps);
  return {std::move(r.prediction), r.loss};
}

TrainResult train_toy_colorizer(const FeatureMapD& target_rgb,
                                const FeatureMapD& reference_rgb,
                                const ColorizerConfig& config) {
  check_inputs(target_rgb, reference_rgb, config);
  TrainResult result;
  result.weights = init_colorizer(config);
  ColorizerWeights& w = result.weights;
  ParameterUpdater feat_w(config, w.features.weights.size());
  ParameterUpdater feat_b(config, w.features.bias.size());
  ParameterUpdater out_w(config, w.output.weights.size());
  ParameterUpdater out_b(config, w.output.bias.size());

  for (int step = 0; step <= config.steps; ++step) {
    Tape tape;
    Conv3x3Grads fg, og;
    ForwardResult r = forward(tape, w, fg, og, target_rgb, reference_rgb,
                              config, step);
    if (!std::isfinite(r.loss)) {
      throw TrainingError("colorizer diverged at step " + std::to_string(step));
    }
    ColorizerStep entry{step, r.loss, 0.0};
    if (step == config.steps) {
      result.history.push_back(entry);
      result.prediction = std::move(r.prediction);
      break;
    }
    tape.backward();
    entry.feature_grad_norm = norm(fg);
    result.history.push_back(entry);
    feat_w.apply(w.features.weights, fg.dweights);
    feat_b.apply(w.features.bias, fg.dbias);
    out_w.apply(w.output.weights, og.dweights);
    out_b.apply(w.output.bias, og.dbias);
  }
  return result;
}

void write_loss_csv(const TrainResult& result, std::ostream& out) {
  out << "step,loss\n";
  const auto precision = out.precision(10);
  for (const auto& h : result.history) out << h.step << ',' << h.loss << '\n';
  out.precision(precision);
}

}  // namespace psal
