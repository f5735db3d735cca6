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

#include <filesystem>

#include "udgs/splat/camera.hpp"
#include "udgs/splat/gaussian.hpp"
#include "udgs/splat/image.hpp"

namespace udgs::splat {

// Scene snapshot text format, one primitive per line after the header:
//
//   # udgs scene v1
//   channels <Z>
//   cx cy cz sx sy sz qw qx qy qz opacity c_0 ... c_{Z-1} face|mouth
//
// Reals are written with 17 significant digits so snapshots round-trip.
void write_scene(const std::filesystem::path& path, const Scene& scene);
Scene read_scene(const std::filesystem::path& path);

// Camera file: "fx fy cx cy width height" then 3 rows of "r0 r1 r2 t".
void write_camera(const std::filesystem::path& path, const Camera& camera);
Camera read_camera(const std::filesystem::path& path);

/// Binary P6, 8-bit. One-channel images are written as gray RGB.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

/// Round every channel to the nearest 1/255 step (the precision PPM keeps).
Image quantize8(const Image& image);

}  // namespace udgs::splat
