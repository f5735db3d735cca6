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

#include "udgs/splat/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "udgs/core/error.hpp"

namespace udgs::splat {
namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw ValidationError("cannot read " + path.string());
  return in;
}

}  // namespace

void write_scene(const std::filesystem::path& path, const Scene& scene) {
  std::ofstream out = open_out(path);
  out << "# udgs scene v1\n";
  out << "# cx cy cz sx sy sz qw qx qy qz opacity color[channels] branch\n";
  out << "channels " << scene.color_channels() << "\n";
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const GaussianPrimitive& p = scene.primitives()[i];
    std::string line;
    for (int k = 0; k < 3; ++k) line += fmt17(p.center[k]) + " ";
    for (int k = 0; k < 3; ++k) line += fmt17(p.scale[k]) + " ";
    for (int k = 0; k < 4; ++k) line += fmt17(p.rotation[k]) + " ";
    line += fmt17(p.opacity) + " ";
    for (double c : p.color) line += fmt17(c) + " ";
    line += branch_name(scene.branches()[i]);
    out << line << "\n";
  }
}

Scene read_scene(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t channels = 0;
  std::vector<GaussianPrimitive> prims;
  std::vector<Branch> branches;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    if (channels == 0) {
      std::string key;
      ss >> key >> channels;
      require(key == "channels" && channels > 0, path.string() + ": missing 'channels' header");
      continue;
    }
    GaussianPrimitive p;
    for (int k = 0; k < 3; ++k) ss >> p.center[k];
    for (int k = 0; k < 3; ++k) ss >> p.scale[k];
    for (int k = 0; k < 4; ++k) ss >> p.rotation[k];
    ss >> p.opacity;
    p.color.resize(channels);
    for (double& c : p.color) ss >> c;
    std::string tag;
    ss >> tag;
    require(static_cast<bool>(ss), path.string() + ":" + std::to_string(line_no) +
                                       ": malformed primitive record");
    prims.push_back(std::move(p));
    branches.push_back(parse_branch(tag));
  }
  Scene scene(std::move(prims), std::move(branches));
  scene.validate();
  return scene;
}

void write_camera(const std::filesystem::path& path, const Camera& camera) {
  std::ofstream out = open_out(path);
  out << fmt17(camera.fx) << " " << fmt17(camera.fy) << " " << fmt17(camera.cx) << " "
      << fmt17(camera.cy) << " " << camera.width << " " << camera.height << "\n";
  for (int r = 0; r < 3; ++r) {
    out << fmt17(camera.rotation(r, 0)) << " " << fmt17(camera.rotation(r, 1)) << " "
        << fmt17(camera.rotation(r, 2)) << " " << fmt17(camera.translation[r]) << "\n";
  }
}

Camera read_camera(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  Camera cam;
  in >> cam.fx >> cam.fy >> cam.cx >> cam.cy >> cam.width >> cam.height;
  for (int r = 0; r < 3; ++r)
    in >> cam.rotation(r, 0) >> cam.rotation(r, 1) >> cam.rotation(r, 2) >> cam.translation[r];
  require(static_cast<bool>(in), path.string() + ": malformed camera file");
  cam.validate();
  return cam;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  require(image.channels == 1 || image.channels == 3, "PPM output needs 1 or 3 channels");
  std::ofstream out = open_out(path, true);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::string bytes;
  bytes.reserve(static_cast<std::size_t>(image.width) * image.height * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = image.at(x, y, image.channels == 1 ? 0 : c);
        const double clamped = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
      }
    }
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, true);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  require(in && magic == "P6" && w > 0 && h > 0 && maxval == 255,
          path.string() + ": not an 8-bit P6 PPM");
  in.get();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<std::size_t>(in.gcount()) == bytes.size(), path.string() + ": truncated PPM");
  Image img(w, h, 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

Image quantize8(const Image& image) {
  Image out = image;
  for (double& v : out.data) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

}  // namespace udgs::splat
