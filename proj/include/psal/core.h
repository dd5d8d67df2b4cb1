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

#ifndef PSAL_CORE_H_
#define PSAL_CORE_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace psal {

// Error hierarchy. Every failure raised by the library derives from Error so
// the CLI can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PositionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Thrown when an exhaustive oracle is asked to run above its work cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Raised by the trainer when the loss stops being finite.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Shape or mode mismatch between arguments.
class ContractError : public Error {
 public:
  using Error::Error;
};

struct Position {
  int x = 0;
  int y = 0;

  friend bool operator==(const Position&, const Position&) = default;
};

// H x W x C grid of reals stored row-major by (y, x, c). Linear pixel index is
// i = y * width + x everywhere in the library (fields, shifts, dumps).
template <typename T>
class FeatureMap {
 public:
  using value_type = T;

  FeatureMap() = default;
  FeatureMap(int height, int width, int channels, T fill = T(0));
  // Takes ownership of `data`; throws ContractError on size mismatch or
  // non-finite entries.
  FeatureMap(int height, int width, int channels, std::vector<T> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  int pixel_count() const { return height_ * width_; }
  bool empty() const { return data_.empty(); }

  bool contains(Position p) const {
    return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_;
  }
  int index_of(Position p) const { return p.y * width_ + p.x; }
  Position position_of(int index) const {
    return {index % width_, index / width_};
  }

  T& at(int x, int y, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  T at(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<T> pixel(int index) {
    return {data_.data() + static_cast<std::size_t>(index) * channels_,
            static_cast<std::size_t>(channels_)};
  }
  std::span<const T> pixel(int index) const {
    return {data_.data() + static_cast<std::size_t>(index) * channels_,
            static_cast<std::size_t>(channels_)};
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  bool same_shape(const FeatureMap& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  bool all_finite() const;

  template <typename U>
  FeatureMap<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return FeatureMap<U>(height_, width_, channels_, std::move(out));
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using FeatureMapF = FeatureMap<float>;
using FeatureMapD = FeatureMap<double>;

// Every pixel of a FeatureMap addressed as the centre of a p x p x C patch.
// Samples outside the image are clamped to the nearest edge pixel. The view
// keeps a border-replicated copy of the source so that patch reads never
// branch on bounds; element order inside a patch is (dy, dx, c).
template <typename T>
class PatchView {
 public:
  PatchView(const FeatureMap<T>& source, int patch_size);
  PatchView(FeatureMap<T>&&, int) = delete;

  const FeatureMap<T>& source() const { return *source_; }
  int patch_size() const { return patch_size_; }
  int radius() const { return patch_size_ / 2; }
  int width() const { return source_->width(); }
  int height() const { return source_->height(); }
  int channels() const { return source_->channels(); }
  int count() const { return source_->pixel_count(); }
  int dim() const { return patch_size_ * patch_size_ * channels(); }

  std::vector<T> extract(Position pos) const;
  void extract_into(Position pos, std::span<T> out) const;

  // Pointer to the first sample of patch row `dy` (0 <= dy < p) for the
  // patch centred at `pos`; the row holds p * C contiguous values.
  const T* row(Position pos, int dy) const {
    return padded_.data() +
           (static_cast<std::size_t>(pos.y + dy) * padded_width_ + pos.x) *
               channels();
  }

 private:
  const FeatureMap<T>* source_;
  int patch_size_;
  int padded_width_;
  std::vector<T> padded_;
};

// Adds a patch-shaped gradient (layout as PatchView::extract) back onto the
// pixels it was sampled from; clamped samples accumulate on edge pixels.
template <typename T>
void scatter_patch_add(FeatureMap<T>& target, Position pos, int patch_size,
                       std::span<const double> patch_grad);

// 8-bit RGB or grayscale PNG. Values are scaled to [0, 1].
FeatureMapF load_image(const std::string& path);
// Rounds to nearest after clamping to [0, 1]. Maps with 1 or 3 channels.
void save_image(const FeatureMapF& map, const std::string& path);

}  // namespace psal

#endif  // PSAL_CORE_H_
