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

#ifndef PSAL_AUTODIFF_H_
#define PSAL_AUTODIFF_H_

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "psal/ann_field.h"
#include "psal/attention.h"
#include "psal/core.h"
#include "psal/similarity.h"

namespace psal {

// Gradients of a scalar loss with respect to the query feature map, the key
// feature map and the value map. Patch extraction is differentiated too, so
// dq and dk have the shape of the maps the patches were cut from.
template <typename T>
struct GradBundle {
  FeatureMap<T> dq;
  FeatureMap<T> dk;
  FeatureMap<T> dv;
};

// The ANN field is a constant here: no gradient flows through the choice of
// candidates, only through the similarities of the chosen pairs and through
// the values.
template <typename T>
GradBundle<T> backward_soft_knn(const PatchScorer<T>& scorer,
                                const FeatureMap<T>& values,
                                const AnnField& field, double temperature,
                                const FeatureMap<T>& upstream);

template <typename T>
GradBundle<T> backward_aggregation(const PatchScorer<T>& scorer,
                                   const FeatureMap<T>& values,
                                   const AnnField& field, double temperature,
                                   const FeatureMap<T>& upstream);

// dq = dk = 0; dv scatters upstream rows onto the selected keys.
template <typename T>
GradBundle<T> backward_hard(const PatchScorer<T>& scorer,
                            const FeatureMap<T>& values, const AnnField& field,
                            const FeatureMap<T>& upstream);

template <typename T>
GradBundle<T> backward_attention(const PatchScorer<T>& scorer,
                                 const FeatureMap<T>& values,
                                 const AnnField& field, AttentionMode mode,
                                 double temperature,
                                 const FeatureMap<T>& upstream);

// 3x3 cross-correlation, stride 1, replicate padding.
// weights are laid out [out][in][ky][kx].
struct Conv3x3 {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  Conv3x3() = default;
  Conv3x3(int in, int out);

  double& w(int o, int i, int ky, int kx) {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * 3 + ky) * 3 + kx];
  }
  double w(int o, int i, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * 3 + ky) * 3 + kx];
  }

  // He-normal weights, zero bias.
  static Conv3x3 random(int in, int out, double stddev, std::mt19937_64& rng);
};

struct Conv3x3Grads {
  FeatureMapD dinput;
  std::vector<double> dweights;
  std::vector<double> dbias;
};

FeatureMapD conv3x3_forward(const FeatureMapD& input, const Conv3x3& layer);
Conv3x3Grads conv3x3_backward(const FeatureMapD& input, const Conv3x3& layer,
                              const FeatureMapD& upstream);

// Records a forward computation over FeatureMapD values and replays it in
// reverse. Gradients of values used more than once add up. One backward per
// tape; parameters collect their gradients in caller-owned Conv3x3Grads.
class Tape {
 public:
  struct Var {
    int id = -1;
  };

  Var constant(FeatureMapD value);
  Var conv3x3(Var input, const Conv3x3& layer, Conv3x3Grads& param_grads);
  Var add(Var a, Var b);
  // Repeats a single-channel map `channels` times.
  Var broadcast_channels(Var input, int channels);
  // Attention with Q and K given as feature maps; the field is captured by
  // value and frozen for the backward pass.
  Var attention(Var queries, Var keys, Var values, AnnField field,
                const AttentionConfig& config);
  // Mean squared error over every element; becomes the tape's output.
  double mse_loss(Var prediction, const FeatureMapD& target);

  const FeatureMapD& value(Var v) const { return nodes_.at(v.id).value; }
  const FeatureMapD& grad(Var v) const { return nodes_.at(v.id).grad; }

  void backward();

 private:
  struct Node {
    FeatureMapD value;
    FeatureMapD grad;
  };

  Var push(FeatureMapD value);
  FeatureMapD& grad_ref(Var v);

  std::vector<Node> nodes_;
  std::vector<std::function<void()>> backward_ops_;
  bool has_loss_ = false;
  bool backward_done_ = false;
};

// Randomised finite-difference comparison for one attention mode. The loss
// is <upstream, output> with a random upstream map; every element of Q, K
// and V is perturbed by +-step with the field frozen.
struct GradCheckCase {
  AttentionMode mode = AttentionMode::kSoftKnn;
  Metric metric = Metric::kNegL2;
  int height = 6;
  int width = 6;
  int channels = 2;
  int value_channels = 3;
  int patch_size = 3;
  int k = 3;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  // ||analytic - numeric|| / max(||analytic||, ||numeric||), 0 when both
  // norms vanish.
  double rel_error_dq = 0.0;
  double rel_error_dk = 0.0;
  double rel_error_dv = 0.0;
  bool qk_exactly_zero = false;

  double max_rel_error() const;
};

// `analytic_bias` is added to every analytic gradient entry; nonzero values
// exist only to exercise the failure path.
GradCheckResult check_attention_gradients(const GradCheckCase& c,
                                          double step = 1e-5,
                                          double analytic_bias = 0.0);

// Same comparison for conv3x3 (input, weights and bias).
struct ConvCheckResult {
  double rel_error_input = 0.0;
  double rel_error_weights = 0.0;
  double rel_error_bias = 0.0;

  double max_rel_error() const;
};

ConvCheckResult check_conv_gradients(int height, int width, int in_channels,
                                     int out_channels, std::uint64_t seed,
                                     double step = 1e-5,
                                     double analytic_bias = 0.0);

double relative_error(std::span<const double> analytic,
                      std::span<const double> numeric);

}  // namespace psal

#endif  // PSAL_AUTODIFF_H_
