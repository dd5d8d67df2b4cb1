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

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "psal/core.h"

namespace psal {

namespace {

// Releases libpng's internal state on every exit path.
struct PngImage {
  png_image image{};
  PngImage() { image.version = PNG_IMAGE_VERSION; }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

}  // namespace

FeatureMapF load_image(const std::string& path) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
    throw IoError(path + ": " + png.image.message);
  }
  if ((png.image.format & PNG_FORMAT_FLAG_LINEAR) != 0) {
    throw IoError(path + ": unsupported bit depth (only 8-bit PNG)");
  }
  const bool color = (png.image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  const int width = static_cast<int>(png.image.width);
  const int height = static_cast<int>(png.image.height);
  std::vector<png_byte> bytes(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, bytes.data(), 0, nullptr)) {
    throw IoError(path + ": " + png.image.message);
  }
  std::vector<float> data(bytes.size());
  std::transform(bytes.begin(), bytes.end(), data.begin(),
                 [](png_byte b) { return static_cast<float>(b) / 255.0f; });
  return FeatureMapF(height, width, channels, std::move(data));
}

void save_image(const FeatureMapF& map, const std::string& path) {
  if (map.channels() != 1 && map.channels() != 3) {
    throw IoError(path + ": cannot write " + std::to_string(map.channels()) +
                  "-channel map as PNG");
  }
  PngImage png;
  png.image.width = static_cast<png_uint_32>(map.width());
  png.image.height = static_cast<png_uint_32>(map.height());
  png.image.format = map.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> bytes(map.data().size());
  std::transform(map.data().begin(), map.data().end(), bytes.begin(),
                 [](float v) {
                   const float clamped = std::clamp(v, 0.0f, 1.0f);
                   return static_cast<png_byte>(std::lround(clamped * 255.0f));
                 });
  if (!png_image_write_to_file(&png.image, path.c_str(), 0, bytes.data(), 0,
                               nullptr)) {
    throw IoError(path + ": " + png.image.message);
  }
}

}  // namespace psal
