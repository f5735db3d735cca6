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

#include "udgs/train/harness.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "udgs/core/error.hpp"
#include "udgs/core/rng.hpp"
#include "udgs/splat/io.hpp"
#include "udgs/splat/rasterizer.hpp"

namespace udgs::train {

namespace fs = std::filesystem;
using splat::Branch;
using splat::GaussianPrimitive;

namespace {

// Shell and mouth geometry (scene units; the camera sits at z = -3.2).
const Eigen::Vector3d kShellAxes(0.75, 0.95, 0.7);
constexpr double kMouthY = 0.45;
constexpr double kMouthHalfWidth = 0.32;
constexpr double kMouthHalfHeight = 0.14;
constexpr double kMouthDepth = -0.5;
constexpr double kCameraDistance = 3.2;
constexpr double kBackground = 0.1;

bool in_mouth_opening(double x, double y) {
  const double u = x / kMouthHalfWidth, v = (y - kMouthY) / kMouthHalfHeight;
  return u * u + v * v < 1.0;
}

// Rotation taking the local -z axis onto `normal`.
Eigen::Vector4d facing(const Eigen::Vector3d& normal) {
  const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d(0, 0, -1), normal);
  return Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
}

std::vector<double> face_color(const Eigen::Vector3d& p, int channels) {
  static const double base[3] = {0.85, 0.62, 0.5};
  std::vector<double> c(channels);
  for (int k = 0; k < channels; ++k) {
    const double pattern = std::sin(6.0 * p.x() + 4.0 * p.y() + 2.0 * k) * std::cos(5.0 * p.y() - 3.0 * p.x());
    c[k] = std::clamp(base[k % 3] + 0.2 * pattern, 0.0, 1.0);
  }
  return c;
}

std::vector<double> mouth_color(const Eigen::Vector3d& p, int channels) {
  static const double base[3] = {0.55, 0.12, 0.16};
  std::vector<double> c(channels);
  for (int k = 0; k < channels; ++k)
    c[k] = std::clamp(base[k % 3] + 0.1 * std::sin(12.0 * p.x() + 3.0 * k), 0.0, 1.0);
  return c;
}

std::string frame_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu.ppm", i);
  return buf;
}

ad::Tensor table_of(const std::vector<std::vector<double>>& rows) {
  ad::Tensor t = ad::Tensor::matrix(rows.size(), rows.empty() ? 1 : rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.at(r, c) = rows[r][c];
  return t;
}

splat::Image render_subset(const splat::Scene& scene, Branch branch, const SceneSetup& setup) {
  std::vector<GaussianPrimitive> subset;
  for (std::size_t i : scene.indices_of(branch)) subset.push_back(scene.primitives()[i]);
  return splat::quantize8(splat::rasterize(subset, setup.camera, setup.background));
}

}  // namespace

HarnessConfig HarnessConfig::from(const Config& c) {
  HarnessConfig h;
  h.seed = static_cast<std::uint64_t>(c.integer("seed"));
  h.primitives = c.count("primitives");
  h.mouth_primitives = c.count("mouth_primitives");
  h.width = static_cast<int>(c.count("width"));
  h.height = static_cast<int>(c.count("height"));
  h.focal = c.number("focal");
  h.color_channels = static_cast<int>(c.count("color_channels"));
  h.frames = c.count("frames");
  h.period = c.count("period");
  h.fps = c.number("fps");
  h.holdout_every = c.count("holdout_every");
  h.mouth_amplitude = c.number("mouth_amplitude");
  h.face_angle = c.number("face_angle");
  h.sample_rate = static_cast<int>(c.count("sample_rate"));
  h.wav = c.text("wav");
  h.dims.audio = c.count("dim_audio");
  h.dims.exp = c.count("dim_exp");
  h.dims.tone = c.count("dim_tone");
  h.dims.emo_attn = c.count("dim_emo_attn");
  h.validate();
  return h;
}

void HarnessConfig::validate() const {
  require(frames > 0, "frames must be positive");
  require(primitives > mouth_primitives && mouth_primitives > 0,
          "need both face and mouth primitives");
  require(width >= 11 && height >= 11, "images must be at least 11x11");
  require(focal > 0.0 && fps > 0.0, "focal and fps must be positive");
  require(color_channels >= 1, "need at least one color channel");
  require(period > 0, "period must be positive");
  require(holdout_every >= 2, "holdout_every must be at least 2");
  require(dims.audio > 0 && dims.exp > 0 && dims.tone > 0 && dims.emo_attn > 0,
          "view dimensions must be positive");
}

double drive_at(std::size_t frame, std::size_t period) {
  return 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * static_cast<double>(frame) /
                              static_cast<double>(period));
}

bool is_held_out(std::size_t frame, std::size_t holdout_every) {
  return frame % holdout_every == holdout_every - 1;
}

SceneSetup make_scene(const HarnessConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed, "harness.scene");
  const std::size_t n_face = cfg.primitives - cfg.mouth_primitives;
  std::vector<GaussianPrimitive> prims;
  std::vector<Branch> tags;

  // Fibonacci directions on the sphere. Grow the point count until enough
  // front-facing points fall outside the mouth opening, then drop the
  // surplus nearest the rim.
  std::vector<Eigen::Vector3d> shell;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t total = 2 * n_face; shell.size() < n_face; total += n_face / 8 + 1) {
    shell.clear();
    for (std::size_t i = 0; i < total; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / static_cast<double>(total);
      const double r = std::sqrt(1.0 - z * z);
      const Eigen::Vector3d dir(r * std::cos(golden * i), r * std::sin(golden * i), z);
      if (dir.z() > -0.15) continue;
      const Eigen::Vector3d p = dir.cwiseProduct(kShellAxes);
      if (in_mouth_opening(p.x(), p.y())) continue;
      shell.push_back(p);
    }
  }
  std::stable_sort(shell.begin(), shell.end(),
                   [](const Eigen::Vector3d& a, const Eigen::Vector3d& b) { return a.z() < b.z(); });
  shell.resize(n_face);
  for (const Eigen::Vector3d& base : shell) {
    Eigen::Vector3d p = base;
    for (int a = 0; a < 3; ++a) p[a] += rng.uniform(-0.01, 0.01);
    const Eigen::Vector3d normal =
        p.cwiseQuotient(kShellAxes.cwiseProduct(kShellAxes)).normalized();
    GaussianPrimitive g;
    g.center = p;
    g.scale = Eigen::Vector3d(0.09, 0.09, 0.015);
    g.rotation = facing(normal);
    g.opacity = 0.95;
    g.color = face_color(p, cfg.color_channels);
    prims.push_back(std::move(g));
    tags.push_back(Branch::kFace);
  }
  for (std::size_t i = 0; i < cfg.mouth_primitives; ++i) {
    GaussianPrimitive g;
    g.center = Eigen::Vector3d(rng.uniform(-0.28, 0.28), rng.uniform(kMouthY - 0.09, kMouthY + 0.11),
                               kMouthDepth + rng.uniform(-0.03, 0.03));
    g.scale = Eigen::Vector3d(0.05, 0.035, 0.02);
    g.opacity = 0.95;
    g.color = mouth_color(g.center, cfg.color_channels);
    prims.push_back(std::move(g));
    tags.push_back(Branch::kMouth);
  }

  SceneSetup out;
  out.scene = splat::Scene(std::move(prims), std::move(tags));
  out.camera.fx = out.camera.fy = cfg.focal;
  out.camera.cx = 0.5 * (cfg.width - 1);
  out.camera.cy = 0.5 * (cfg.height - 1);
  out.camera.translation = Eigen::Vector3d(0.0, 0.0, kCameraDistance);
  out.camera.width = cfg.width;
  out.camera.height = cfg.height;
  out.background.assign(cfg.color_channels, kBackground);
  return out;
}

splat::Scene scripted_deformation(const splat::Scene& canonical, double drive,
                                  const HarnessConfig& cfg) {
  const double angle = cfg.face_angle * (drive - 0.5);
  const Eigen::AngleAxisd nod(angle, Eigen::Vector3d::UnitX());
  const Eigen::Quaterniond qn(nod);
  std::vector<GaussianPrimitive> prims = canonical.primitives();
  for (std::size_t i = 0; i < prims.size(); ++i) {
    GaussianPrimitive& g = prims[i];
    if (canonical.branches()[i] == Branch::kMouth) {
      g.center.y() += cfg.mouth_amplitude * drive;
      continue;
    }
    g.center = nod * g.center;
    const Eigen::Quaterniond q(g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3]);
    const Eigen::Quaterniond r = (qn * q).normalized();
    g.rotation = Eigen::Vector4d(r.w(), r.x(), r.y(), r.z());
  }
  return splat::Scene(std::move(prims), canonical.branches());
}

std::vector<std::size_t> Dataset::split(bool held_out) const {
  std::vector<std::size_t> out;
  for (const FrameRecord& f : frames)
    if (f.held_out == held_out) out.push_back(f.index);
  return out;
}

Dataset synth_dataset(const HarnessConfig& cfg) {
  cfg.validate();
  Dataset d;
  d.setup = make_scene(cfg);
  d.fps = cfg.fps;
  std::vector<double> drives(cfg.frames);
  if (cfg.wav.empty()) {
    for (std::size_t i = 0; i < cfg.frames; ++i) drives[i] = drive_at(i, cfg.period);
    d.audio = cond::quantize_pcm16(cond::synth_audio(drives, cfg.fps, cfg.sample_rate, cfg.seed));
  } else {
    d.audio = cond::load_wav(cfg.wav);
    drives = cond::envelope_drive(d.audio, cfg.fps, cfg.frames);
  }
  const cond::SyntheticFeatures synth(cfg.seed, cfg.dims);
  std::vector<std::vector<double>> exp, tone, walk, audio_t, emo_t;
  for (std::size_t i = 0; i < cfg.frames; ++i) {
    d.frames.push_back({i, drives[i], is_held_out(i, cfg.holdout_every)});
    const auto f = synth.frame(i, drives[i]);
    exp.push_back(f.f_exp);
    tone.push_back(f.f_tone);
    walk.push_back(f.f_audio);
    audio_t.push_back(synth.audio_target(drives[i]));
    emo_t.push_back(synth.emotion_target(drives[i]));
    const splat::Scene posed = scripted_deformation(d.setup.scene, drives[i], cfg);
    d.gt.push_back(splat::quantize8(
        splat::rasterize(posed.primitives(), d.setup.camera, d.setup.background)));
    d.mask_face.push_back(render_subset(posed, Branch::kFace, d.setup));
    d.mask_mouth.push_back(render_subset(posed, Branch::kMouth, d.setup));
  }
  d.f_exp = table_of(exp);
  d.f_tone = table_of(tone);
  d.f_audio_walk = table_of(walk);
  d.audio_target = table_of(audio_t);
  d.emotion_target = table_of(emo_t);
  return d;
}

void write_dataset(const fs::path& root, const Dataset& d) {
  std::error_code ec;
  for (const char* sub : {"features", "gt", "mask_face", "mask_mouth"}) {
    fs::create_directories(root / sub, ec);
    if (ec) throw ValidationError("cannot create " + (root / sub).string() + ": " + ec.message());
  }
  splat::write_scene(root / "scene.txt", d.setup.scene);
  splat::write_camera(root / "camera.txt", d.setup.camera);
  {
    std::ofstream out(root / "background.txt");
    if (!out) throw ValidationError("cannot write " + (root / "background.txt").string());
    char buf[32];
    for (std::size_t c = 0; c < d.setup.background.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%s%.17g", c ? " " : "", d.setup.background[c]);
      out << buf;
    }
    out << '\n';
  }
  {
    std::ofstream out(root / "frames.txt");
    if (!out) throw ValidationError("cannot write " + (root / "frames.txt").string());
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", d.fps);
    out << "# udgs frames v1\nfps " << buf << '\n';
    for (const FrameRecord& f : d.frames) {
      std::snprintf(buf, sizeof buf, "%zu %.17g %s\n", f.index, f.drive, f.held_out ? "test" : "train");
      out << buf;
    }
  }
  cond::write_wav(root / "audio.wav", d.audio);
  cond::write_feature_table(root / "features/f_exp.txt", "f_exp", d.f_exp);
  cond::write_feature_table(root / "features/f_tone.txt", "f_tone", d.f_tone);
  cond::write_feature_table(root / "features/f_audio_walk.txt", "f_audio_walk", d.f_audio_walk);
  cond::write_feature_table(root / "features/audio_target.txt", "audio_target", d.audio_target);
  cond::write_feature_table(root / "features/emotion_target.txt", "emotion_target", d.emotion_target);
  for (std::size_t i = 0; i < d.frames.size(); ++i) {
    splat::write_ppm(root / "gt" / frame_name(i), d.gt[i]);
    splat::write_ppm(root / "mask_face" / frame_name(i), d.mask_face[i]);
    splat::write_ppm(root / "mask_mouth" / frame_name(i), d.mask_mouth[i]);
  }
}

namespace {
splat::Image read_channels(const fs::path& path, int channels) {
  splat::Image img = splat::read_ppm(path);
  if (channels == img.channels) return img;
  require(channels == 1 && img.channels == 3, path.string() + ": unexpected channel count");
  splat::Image gray(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) gray.at(x, y, 0) = img.at(x, y, 0);
  return gray;
}
}  // namespace

Dataset load_dataset(const fs::path& root) {
  require(fs::is_directory(root), "dataset directory " + root.string() + " does not exist");
  Dataset d;
  d.setup.scene = splat::read_scene(root / "scene.txt");
  d.setup.camera = splat::read_camera(root / "camera.txt");
  {
    std::ifstream in(root / "background.txt");
    if (!in) throw ValidationError("cannot open " + (root / "background.txt").string());
    double v;
    while (in >> v) d.setup.background.push_back(v);
    require(d.setup.background.size() == d.setup.scene.color_channels(),
            "background channel count does not match the scene");
  }
  {
    std::ifstream in(root / "frames.txt");
    if (!in) throw ValidationError("cannot open " + (root / "frames.txt").string());
    std::string line, key;
    std::getline(in, line);
    require(line == "# udgs frames v1", "bad frames.txt header");
    in >> key >> d.fps;
    require(in && key == "fps" && d.fps > 0.0, "frames.txt: missing fps");
    FrameRecord f;
    std::string split;
    while (in >> f.index >> f.drive >> split) {
      require(f.index == d.frames.size(), "frames.txt: frame indices out of order");
      require(split == "train" || split == "test", "frames.txt: bad split '" + split + "'");
      f.held_out = split == "test";
      d.frames.push_back(f);
    }
    require(!d.frames.empty(), "dataset has no frames");
  }
  d.audio = cond::load_wav(root / "audio.wav");
  d.f_exp = cond::read_feature_table(root / "features/f_exp.txt");
  d.f_tone = cond::read_feature_table(root / "features/f_tone.txt");
  d.f_audio_walk = cond::read_feature_table(root / "features/f_audio_walk.txt");
  d.audio_target = cond::read_feature_table(root / "features/audio_target.txt");
  d.emotion_target = cond::read_feature_table(root / "features/emotion_target.txt");
  for (const ad::Tensor* t : {&d.f_exp, &d.f_tone, &d.f_audio_walk, &d.audio_target, &d.emotion_target})
    require(t->rows() == d.frames.size(), "feature table row count != frame count");
  const int channels = static_cast<int>(d.setup.scene.color_channels());
  for (std::size_t i = 0; i < d.frames.size(); ++i) {
    d.gt.push_back(read_channels(root / "gt" / frame_name(i), channels));
    d.mask_face.push_back(read_channels(root / "mask_face" / frame_name(i), channels));
    d.mask_mouth.push_back(read_channels(root / "mask_mouth" / frame_name(i), channels));
    for (const splat::Image* img : {&d.gt.back(), &d.mask_face.back(), &d.mask_mouth.back()})
      require(img->width == d.setup.camera.width && img->height == d.setup.camera.height,
              "frame image size does not match the camera");
  }
  return d;
}

}  // namespace udgs::train
