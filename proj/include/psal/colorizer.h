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

#ifndef PSAL_COLORIZER_H_
#define PSAL_COLORIZER_H_

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "psal/ann_field.h"
#include "psal/attention.h"
#include "psal/autodiff.h"
#include "psal/core.h"

namespace psal {

// Guided colorization network:
//
//   gray(query) --conv3x3(1->F)--> Q features --+
//                                               +-- attention --> conv3x3(3->3) --(+ gray)--> RGB
//   gray(ref)   --conv3x3(1->F)--> K features --+        ^
//                                                        V = reference RGB
//
// The feature convolution is shared between both branches and reaches the
// loss only through Q and K. The ANN field is re-searched on the current
// features at every step.

enum class Optimizer { kMomentum, kAdam };

struct ColorizerConfig {
  AttentionConfig attention{Metric::kNegL2, 0.1, AttentionMode::kSoftKnn, 3, 3};
  int feature_channels = 16;
  int steps = 500;
  int search_iterations = 5;
  Optimizer optimizer = Optimizer::kAdam;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct ColorizerWeights {
  Conv3x3 features;
  Conv3x3 output;
};

ColorizerWeights init_colorizer(const ColorizerConfig& config);

struct ColorizerStep {
  int step = 0;
  double loss = 0.0;
  // L2 norm of the feature-convolution gradient; that layer sits only on
  // the Q/K path.
  double feature_grad_norm = 0.0;
};

struct TrainResult {
  ColorizerWeights weights;
  // steps + 1 entries: the loss before each update, then the loss of the
  // trained network.
  std::vector<ColorizerStep> history;
  FeatureMapD prediction;

  double initial_loss() const { return history.front().loss; }
  double final_loss() const { return history.back().loss; }
};

// Channel mean of an RGB map, as a single-channel map.
FeatureMapD to_gray(const FeatureMapD& rgb);

struct ColorizerOutput {
  FeatureMapD prediction;
  double loss = 0.0;
};

// Forward pass only. `config.attention` may differ from the mode used in
// training, which swaps the attention layer at test time.
ColorizerOutput evaluate_colorizer(const ColorizerWeights& weights,
                                   const FeatureMapD& target_rgb,
                                   const FeatureMapD& reference_rgb,
                                   const ColorizerConfig& config);

// Throws TrainingError naming the step when the loss becomes non-finite.
TrainResult train_toy_colorizer(const FeatureMapD& target_rgb,
                                const FeatureMapD& reference_rgb,
                                const ColorizerConfig& config);

// "step,loss" header followed by one row per history entry.
void write_loss_csv(const TrainResult& result, std::ostream& out);

}  // namespace psal

#endif  // PSAL_COLORIZER_H_
