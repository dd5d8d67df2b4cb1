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

#include "psal/autodiff.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "sparse_rows.h"

namespace psal {

namespace {

template <typename T>
void check_upstream(const AnnField& field, const FeatureMap<T>& values,
                    const FeatureMap<T>& upstream) {
  if (upstream.width() != field.query_width() ||
      upstream.height() != field.query_height() ||
      upstream.channels() != values.channels()) {
    throw ContractError("upstream gradient shape does not match the output");
  }
  if (values.width() != field.key_width() ||
      values.height() != field.key_height()) {
    throw ContractError("value map extent differs from key extent");
  }
}

template <typename T>
GradBundle<T> zero_bundle(const PatchScorer<T>& scorer,
                          const FeatureMap<T>& values) {
  const auto& q = scorer.queries().source();
  const auto& k = scorer.keys().source();
  return {FeatureMap<T>(q.height(), q.width(), q.channels()),
          FeatureMap<T>(k.height(), k.width(), k.channels()),
          FeatureMap<T>(values.height(), values.width(), values.channels())};
}

template <typename T>
GradBundle<T> sparse_backward(const PatchScorer<T>& scorer,
                              const FeatureMap<T>& values,
                              const AnnField& field, AttentionMode mode,
                              double temperature,
                              const FeatureMap<T>& upstream) {
  if (!(temperature > 0.0)) {
    throw ConfigError("temperature must be positive");
  }
  check_upstream(field, values, upstream);
  GradBundle<T> g = zero_bundle(scorer, values);
  const int channels = values.channels();
  const int k = field.k();
  const int patch = scorer.queries().patch_size();
  const std::vector<double> scores = internal::pair_scores(scorer, field, 1);
  // d loss / d s for every (query, slot) similarity.
  std::vector<double> dscore(scores.size(), 0.0);

  internal::RowSoftmax row;
  std::vector<double> gv;
  for (int q = 0; q < field.query_count(); ++q) {
    row.build(field, mode, patch, q, scores, temperature, [q] {
      throw ContractError("empty candidate list for query " +
                          std::to_string(q));
    });
    const auto& terms = row.terms();
    const auto& w = row.weights();
    const auto up = upstream.pixel(q);
    gv.assign(terms.size(), 0.0);
    double g_dot_out = 0.0;
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const auto v = values.pixel(terms[t].key);
      double dotv = 0.0;
      for (int c = 0; c < channels; ++c) dotv += static_cast<double>(up[c]) * v[c];
      gv[t] = dotv;
      g_dot_out += w[t] * dotv;
      auto dv = g.dv.pixel(terms[t].key);
      for (int c = 0; c < channels; ++c) {
        dv[c] += static_cast<T>(w[t] * up[c]);
      }
    }
    // Softmax Jacobian: dz_t = w_t (g.v_t - g.o); s = z * t.
    for (std::size_t t = 0; t < terms.size(); ++t) {
      dscore[terms[t].pair] += w[t] * (gv[t] - g_dot_out) / temperature;
    }
  }

  const auto& qview = scorer.queries();
  const auto& kview = scorer.keys();
  const std::size_t d = static_cast<std::size_t>(qview.dim());
  std::vector<T> qpatch(d), kpatch(d);
  std::vector<double> dq(d), dk(d);
  for (int q = 0; q < field.query_count(); ++q) {
    const auto list = field.candidates(q);
    for (int slot = 0; slot < static_cast<int>(list.size()); ++slot) {
      const double ds = dscore[static_cast<std::size_t>(q) * k + slot];
      if (ds == 0.0) continue;
      const Position qp = qview.source().position_of(q);
      const Position kp = kview.source().position_of(list[slot].key);
      qview.extract_into(qp, qpatch);
      kview.extract_into(kp, kpatch);
      std::fill(dq.begin(), dq.end(), 0.0);
      std::fill(dk.begin(), dk.end(), 0.0);
      accumulate_score_grad<T>(qpatch, kpatch, scorer.metric(), ds, dq, dk);
      scatter_patch_add(g.dq, qp, patch, std::span<const double>(dq));
      scatter_patch_add(g.dk, kp, patch, std::span<const double>(dk));
    }
  }
  return g;
}

}  // namespace

template <typename T>
GradBundle<T> backward_soft_knn(const PatchScorer<T>& scorer,
                                const FeatureMap<T>& values,
                                const AnnField& field, double temperature,
                                const FeatureMap<T>& upstream) {
  return sparse_backward(scorer, values, field, AttentionMode::kSoftKnn,
                         temperature, upstream);
}

template <typename T>
GradBundle<T> backward_aggregation(const PatchScorer<T>& scorer,
                                   const FeatureMap<T>& values,
                                   const AnnField& field, double temperature,
                                   const FeatureMap<T>& upstream) {
  return sparse_backward(scorer, values, field, AttentionMode::kAggregation,
                         temperature, upstream);
}

template <typename T>
GradBundle<T> backward_hard(const PatchScorer<T>& scorer,
                            const FeatureMap<T>& values, const AnnField& field,
                            const FeatureMap<T>& upstream) {
  if (field.k() != 1) {
    throw ContractError("hard attention needs a k = 1 field, got k = " +
                        std::to_string(field.k()));
  }
  check_upstream(field, values, upstream);
  GradBundle<T> g = zero_bundle(scorer, values);
  for (int q = 0; q < field.query_count(); ++q) {
    const auto up = upstream.pixel(q);
    auto dv = g.dv.pixel(field.best(q).key);
    for (std::size_t c = 0; c < up.size(); ++c) dv[c] += up[c];
  }
  return g;
}

template <typename T>
GradBundle<T> backward_attention(const PatchScorer<T>& scorer,
                                 const FeatureMap<T>& values,
                                 const AnnField& field, AttentionMode mode,
                                 double temperature,
                                 const FeatureMap<T>& upstream) {
  switch (mode) {
    case AttentionMode::kHard:
      return backward_hard(scorer, values, field, upstream);
    case AttentionMode::kSoftKnn:
      return backward_soft_knn(scorer, values, field, temperature, upstream);
    case AttentionMode::kAggregation:
      return backward_aggregation(scorer, values, field, temperature,
                                  upstream);
  }
  throw ConfigError("unknown attention mode");
}

// ---------------------------------------------------------------------------
// Conv3x3

Conv3x3::Conv3x3(int in, int out)
    : in_channels(in), out_channels(out),
      weights(static_cast<std::size_t>(in) * out * 9, 0.0),
      bias(static_cast<std::size_t>(out), 0.0) {
  if (in < 1 || out < 1) throw ConfigError("conv channels must be >= 1");
}

Conv3x3 Conv3x3::random(int in, int out, double stddev, std::mt19937_64& rng) {
  Conv3x3 layer(in, out);
  std::normal_distribution<double> normal(0.0, stddev);
  for (double& w : layer.weights) w = normal(rng);
  return layer;
}

FeatureMapD conv3x3_forward(const FeatureMapD& input, const Conv3x3& layer) {
  if (input.channels() != layer.in_channels) {
    throw ContractError("conv3x3: input has " +
                        std::to_string(input.channels()) +
                        " channels, layer expects " +
                        std::to_string(layer.in_channels));
  }
  const int h = input.height();
  const int wd = input.width();
  FeatureMapD out(h, wd, layer.out_channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wd; ++x) {
      auto dst = out.pixel(y * wd + x);
      for (int o = 0; o < layer.out_channels; ++o) dst[o] = layer.bias[o];
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = std::clamp(y + ky - 1, 0, h - 1);
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = std::clamp(x + kx - 1, 0, wd - 1);
          const auto src = input.pixel(sy * wd + sx);
          for (int o = 0; o < layer.out_channels; ++o) {
            double acc = 0.0;
            for (int i = 0; i < layer.in_channels; ++i) {
              acc += layer.w(o, i, ky, kx) * src[i];
            }
            dst[o] += acc;
          }
        }
      }
    }
  }
  return out;
}

Conv3x3Grads conv3x3_backward(const FeatureMapD& input, const Conv3x3& layer,
                              const FeatureMapD& upstream) {
  if (input.channels() != layer.in_channels ||
      upstream.channels() != layer.out_channels ||
      upstream.width() != input.width() ||
      upstream.height() != input.height()) {
    throw ContractError("conv3x3_backward: shape mismatch");
  }
  const int h = input.height();
  const int wd = input.width();
  Conv3x3Grads g{FeatureMapD(h, wd, layer.in_channels),
                 std::vector<double>(layer.weights.size(), 0.0),
                 std::vector<double>(layer.bias.size(), 0.0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wd; ++x) {
      const auto up = upstream.pixel(y * wd + x);
      for (int o = 0; o < layer.out_channels; ++o) g.dbias[o] += up[o];
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = std::clamp(y + ky - 1, 0, h - 1);
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = std::clamp(x + kx - 1, 0, wd - 1);
          const auto src = input.pixel(sy * wd + sx);
          auto dsrc = g.dinput.pixel(sy * wd + sx);
          for (int o = 0; o < layer.out_channels; ++o) {
            for (int i = 0; i < layer.in_channels; ++i) {
              const std::size_t wi =
                  ((static_cast<std::size_t>(o) * layer.in_channels + i) * 3 + ky) * 3 + kx;
              g.dweights[wi] += up[o] * src[i];
              dsrc[i] += up[o] * layer.weights[wi];
            }
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Var Tape::push(FeatureMapD value) {
  Node node;
  node.grad = FeatureMapD(value.height(), value.width(), value.channels());
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

FeatureMapD& Tape::grad_ref(Var v) { return nodes_.at(v.id).grad; }

Tape::Var Tape::constant(FeatureMapD value) { return push(std::move(value)); }

Tape::Var Tape::conv3x3(Var input, const Conv3x3& layer,
                        Conv3x3Grads& param_grads) {
  Var out = push(conv3x3_forward(value(input), layer));
  if (param_grads.dweights.empty()) {
    param_grads.dweights.assign(layer.weights.size(), 0.0);
    param_grads.dbias.assign(layer.bias.size(), 0.0);
  }
  backward_ops_.push_back([this, input, out, &layer, &param_grads] {
    Conv3x3Grads g = conv3x3_backward(value(input), layer, grad(out));
    for (std::size_t i = 0; i < g.dweights.size(); ++i) {
      param_grads.dweights[i] += g.dweights[i];
    }
    for (std::size_t i = 0; i < g.dbias.size(); ++i) {
      param_grads.dbias[i] += g.dbias[i];
    }
    auto dst = grad_ref(input).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g.dinput.data()[i];
  });
  return out;
}

Tape::Var Tape::add(Var a, Var b) {
  if (!value(a).same_shape(value(b))) {
    throw ContractError("Tape::add: shape mismatch");
  }
  FeatureMapD sum = value(a);
  auto s = sum.data();
  const auto bv = value(b).data();
  for (std::size_t i = 0; i < s.size(); ++i) s[i] += bv[i];
  Var out = push(std::move(sum));
  backward_ops_.push_back([this, a, b, out] {
    const auto g = grad(out).data();
    for (Var v : {a, b}) {
      auto dst = grad_ref(v).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }
  });
  return out;
}

Tape::Var Tape::broadcast_channels(Var input, int channels) {
  const FeatureMapD& in = value(input);
  if (in.channels() != 1) {
    throw ContractError("broadcast_channels expects a single-channel map");
  }
  FeatureMapD out_map(in.height(), in.width(), channels);
  for (int p = 0; p < in.pixel_count(); ++p) {
    auto dst = out_map.pixel(p);
    std::fill(dst.begin(), dst.end(), in.pixel(p)[0]);
  }
  Var out = push(std::move(out_map));
  backward_ops_.push_back([this, input, out, channels] {
    FeatureMapD& dst = grad_ref(input);
    for (int p = 0; p < dst.pixel_count(); ++p) {
      const auto g = grad(out).pixel(p);
      double acc = 0.0;
      for (int c = 0; c < channels; ++c) acc += g[c];
      dst.pixel(p)[0] += acc;
    }
  });
  return out;
}

Tape::Var Tape::attention(Var queries, Var keys, Var values, AnnField field,
                          const AttentionConfig& config) {
  const PatchView<double> qv(value(queries), config.patch_size);
  const PatchView<double> kv(value(keys), config.patch_size);
  const PatchScorer<double> scorer(qv, kv, config.metric);
  Var out = push(apply_attention(scorer, value(values), field, config.mode,
                                 config.temperature));
  backward_ops_.push_back([this, queries, keys, values, out,
                           field = std::move(field), config] {
    const PatchView<double> qv(value(queries), config.patch_size);
    const PatchView<double> kv(value(keys), config.patch_size);
    const PatchScorer<double> scorer(qv, kv, config.metric);
    GradBundle<double> g =
        backward_attention(scorer, value(values), field, config.mode,
                           config.temperature, grad(out));
    const std::pair<Var, const FeatureMapD*> targets[] = {
        {queries, &g.dq}, {keys, &g.dk}, {values, &g.dv}};
    for (const auto& [var, src] : targets) {
      auto dst = grad_ref(var).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src->data()[i];
    }
  });
  return out;
}

double Tape::mse_loss(Var prediction, const FeatureMapD& target) {
  if (has_loss_) throw ContractError("Tape already has a loss");
  const FeatureMapD& pred = value(prediction);
  if (!pred.same_shape(target)) {
    throw ContractError("mse_loss: prediction and target differ in shape");
  }
  const auto pv = pred.data();
  const auto tv = target.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - tv[i];
    sum += d * d;
  }
  const double n = static_cast<double>(pv.size());
  backward_ops_.push_back([this, prediction, target, n] {
    const auto p = value(prediction).data();
    const auto t = target.data();
    auto seed = grad_ref(prediction).data();
    for (std::size_t i = 0; i < seed.size(); ++i) {
      seed[i] += 2.0 * (p[i] - t[i]) / n;
    }
  });
  has_loss_ = true;
  return sum / n;
}

void Tape::backward() {
  if (!has_loss_) throw ContractError("Tape::backward without a loss");
  if (backward_done_) throw ContractError("Tape::backward called twice");
  backward_done_ = true;
  for (auto it = backward_ops_.rbegin(); it != backward_ops_.rend(); ++it) {
    (*it)();
  }
}

#define PSAL_INSTANTIATE(T)                                                   \
  template GradBundle<T> backward_soft_knn(const PatchScorer<T>&,             \
                                           const FeatureMap<T>&,              \
                                           const AnnField&, double,           \
                                           const FeatureMap<T>&);             \
  template GradBundle<T> backward_aggregation(                                \
      const PatchScorer<T>&, const FeatureMap<T>&, const AnnField&, double,   \
      const FeatureMap<T>&);                                                  \
  template GradBundle<T> backward_hard(const PatchScorer<T>&,                 \
                                       const FeatureMap<T>&, const AnnField&, \
                                       const FeatureMap<T>&);                 \
  template GradBundle<T> backward_attention(                                  \
      const PatchScorer<T>&, const FeatureMap<T>&, const AnnField&,           \
      AttentionMode, double, const FeatureMap<T>&);

PSAL_INSTANTIATE(float)
PSAL_INSTANTIATE(double)

#undef PSAL_INSTANTIATE

}  // namespace psal
