// Copyright 2026 The udgs Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <vector>

namespace udgs::splat {

/// Interleaved (y, x, channel) image of doubles.
struct Image {
  Image() = default;
  Image(int width_, int height_, int channels_, double fill = 0.0)
      : width(width_),
        height(height_),
        channels(channels_),
        data(static_cast<std::size_t>(width_) * height_ * channels_, fill) {}

  double& at(int x, int y, int c) { return data[index(x, y, c)]; }
  double at(int x, int y, int c) const { return data[index(x, y, c)]; }
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::size_t size() const { return data.size(); }
  bool same_dims(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;
};

}  // namespace udgs::splat
