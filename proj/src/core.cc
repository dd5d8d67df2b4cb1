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

#include "psal/core.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace psal {

template <typename T>
FeatureMap<T>::FeatureMap(int height, int width, int channels, T fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw ContractError("FeatureMap: negative extent");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

template <typename T>
FeatureMap<T>::FeatureMap(int height, int width, int channels,
                          std::vector<T> data)
    : height_(height), width_(width), channels_(channels),
      data_(std::move(data)) {
  if (height < 0 || width < 0 || channels < 0) {
    throw ContractError("FeatureMap: negative extent");
  }
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ContractError("FeatureMap: data length " +
                        std::to_string(data_.size()) + " != " +
                        std::to_string(height) + "x" + std::to_string(width) +
                        "x" + std::to_string(channels));
  }
  if (!all_finite()) {
    throw ContractError("FeatureMap: non-finite value in data");
  }
}

template <typename T>
bool FeatureMap<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
PatchView<T>::PatchView(const FeatureMap<T>& source, int patch_size)
    : source_(&source), patch_size_(patch_size) {
  if (patch_size < 1 || patch_size % 2 == 0) {
    throw ConfigError("patch size must be odd and positive, got " +
                      std::to_string(patch_size));
  }
  if (source.empty()) {
    throw ContractError("PatchView: empty feature map");
  }
  const int r = radius();
  const int c = source.channels();
  padded_width_ = source.width() + 2 * r;
  const int padded_height = source.height() + 2 * r;
  padded_.resize(static_cast<std::size_t>(padded_width_) * padded_height * c);
  for (int py = 0; py < padded_height; ++py) {
    const int sy = std::clamp(py - r, 0, source.height() - 1);
    for (int px = 0; px < padded_width_; ++px) {
      const int sx = std::clamp(px - r, 0, source.width() - 1);
      const auto src = source.pixel(sy * source.width() + sx);
      std::copy(src.begin(), src.end(),
                padded_.begin() +
                    (static_cast<std::size_t>(py) * padded_width_ + px) * c);
    }
  }
}

template <typename T>
std::vector<T> PatchView<T>::extract(Position pos) const {
  std::vector<T> out(static_cast<std::size_t>(dim()));
  extract_into(pos, out);
  return out;
}

template <typename T>
void PatchView<T>::extract_into(Position pos, std::span<T> out) const {
  if (!source_->contains(pos)) {
    throw PositionError("patch centre (" + std::to_string(pos.x) + ", " +
                        std::to_string(pos.y) + ") outside " +
                        std::to_string(width()) + "x" +
                        std::to_string(height()) + " map");
  }
  if (out.size() != static_cast<std::size_t>(dim())) {
    throw ContractError("extract_into: output length mismatch");
  }
  const std::size_t row_len = static_cast<std::size_t>(patch_size_) * channels();
  for (int dy = 0; dy < patch_size_; ++dy) {
    const T* src = row(pos, dy);
    std::copy(src, src + row_len, out.begin() + dy * row_len);
  }
}

template <typename T>
void scatter_patch_add(FeatureMap<T>& target, Position pos, int patch_size,
                       std::span<const double> patch_grad) {
  const int r = patch_size / 2;
  const int c = target.channels();
  std::size_t e = 0;
  for (int dy = -r; dy <= r; ++dy) {
    const int y = std::clamp(pos.y + dy, 0, target.height() - 1);
    for (int dx = -r; dx <= r; ++dx) {
      const int x = std::clamp(pos.x + dx, 0, target.width() - 1);
      for (int ch = 0; ch < c; ++ch, ++e) {
        target.at(x, y, ch) += static_cast<T>(patch_grad[e]);
      }
    }
  }
}

template class FeatureMap<float>;
template class FeatureMap<double>;
template class PatchView<float>;
template class PatchView<double>;
template void scatter_patch_add(FeatureMap<float>&, Position, int,
                                std::span<const double>);
template void scatter_patch_add(FeatureMap<double>&, Position, int,
                                std::span<const double>);

}  // namespace psal
