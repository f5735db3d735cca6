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

#include "udgs/splat/rasterizer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "udgs/core/error.hpp"

namespace udgs::splat {

Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Eigen::Matrix3d covariance_from(const Eigen::Vector3d& scale, const Eigen::Vector4d& rotation) {
  require(std::abs(rotation.norm() - 1.0) <= 1e-6, "covariance_from: quaternion is not unit");
  require((scale.array() > 0.0).all(), "covariance_from: scales must be positive");
  const Eigen::Matrix3d m = rotation_matrix(rotation) * scale.asDiagonal();
  return m * m.transpose();
}

namespace {

struct Splat {
  std::size_t index;
  Eigen::Vector3d cam;  // camera-space center
  Eigen::Vector2d mean;
  double a, b, c;       // 2x2 covariance entries (cov00, cov01, cov11)
  double det;
  double conic_a, conic_b, conic_c;
  int x_min, x_max, y_min, y_max;
};

struct Prepared {
  std::vector<Splat> splats;                   // depth order
  std::vector<std::vector<std::uint32_t>> tiles;  // indices into splats, per tile
  int tiles_x = 0, tiles_y = 0;
};

Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Eigen::Vector3d& p) {
  const double z = p.z(), z2 = z * z;
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx / z, 0.0, -cam.fx * p.x() / z2, 0.0, cam.fy / z, -cam.fy * p.y() / z2;
  return j;
}

Prepared prepare(std::span<const GaussianPrimitive> prims, const Camera& camera) {
  Prepared out;
  for (std::size_t i = 0; i < prims.size(); ++i) {
    const GaussianPrimitive& p = prims[i];
    const Eigen::Vector3d cam = camera.rotation * p.center + camera.translation;
    if (!(cam.z() > kNearPlane)) continue;
    const Eigen::Vector4d q = p.rotation.normalized();
    const Eigen::Matrix3d m = rotation_matrix(q) * p.scale.asDiagonal();
    const Eigen::Matrix<double, 2, 3> t = projection_jacobian(camera, cam) * camera.rotation;
    const Eigen::Matrix2d cov = t * (m * m.transpose()) * t.transpose();
    Splat s;
    s.index = i;
    s.cam = cam;
    s.mean = {camera.fx * cam.x() / cam.z() + camera.cx, camera.fy * cam.y() / cam.z() + camera.cy};
    s.a = cov(0, 0);
    s.b = cov(0, 1);
    s.c = cov(1, 1);
    s.det = s.a * s.c - s.b * s.b;
    if (!(s.det > kMinCovDeterminant) || !s.mean.allFinite()) continue;
    s.conic_a = s.c / s.det;
    s.conic_b = -s.b / s.det;
    s.conic_c = s.a / s.det;
    // Exact bounding box of the 3-sigma ellipse.
    const double rx = 3.0 * std::sqrt(s.a), ry = 3.0 * std::sqrt(s.c);
    s.x_min = static_cast<int>(std::max(0.0, std::ceil(s.mean.x() - rx)));
    s.x_max = static_cast<int>(std::min<double>(camera.width - 1, std::floor(s.mean.x() + rx)));
    s.y_min = static_cast<int>(std::max(0.0, std::ceil(s.mean.y() - ry)));
    s.y_max = static_cast<int>(std::min<double>(camera.height - 1, std::floor(s.mean.y() + ry)));
    if (s.x_min > s.x_max || s.y_min > s.y_max) continue;
    out.splats.push_back(s);
  }
  std::stable_sort(out.splats.begin(), out.splats.end(), [](const Splat& l, const Splat& r) {
    if (l.cam.z() != r.cam.z()) return l.cam.z() < r.cam.z();
    return l.index < r.index;
  });
  out.tiles_x = (camera.width + kTileSize - 1) / kTileSize;
  out.tiles_y = (camera.height + kTileSize - 1) / kTileSize;
  out.tiles.resize(static_cast<std::size_t>(out.tiles_x) * out.tiles_y);
  for (std::size_t k = 0; k < out.splats.size(); ++k) {
    const Splat& s = out.splats[k];
    for (int ty = s.y_min / kTileSize; ty <= s.y_max / kTileSize; ++ty)
      for (int tx = s.x_min / kTileSize; tx <= s.x_max / kTileSize; ++tx)
        out.tiles[static_cast<std::size_t>(ty) * out.tiles_x + tx].push_back(
            static_cast<std::uint32_t>(k));
  }
  return out;
}

struct Contribution {
  std::uint32_t splat;
  double weight;  // G
  double alpha;   // clamped opacity * G
  double dx, dy;
};

// Walks one pixel front to back and records every contributing splat.
void gather(const Prepared& prep, std::span<const GaussianPrimitive> prims,
            const std::vector<std::uint32_t>& list, int px, int py,
            std::vector<Contribution>& out) {
  out.clear();
  for (std::uint32_t k : list) {
    const Splat& s = prep.splats[k];
    if (px < s.x_min || px > s.x_max || py < s.y_min || py > s.y_max) continue;
    const double dx = px - s.mean.x(), dy = py - s.mean.y();
    const double q = s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy;
    if (!(q <= kSupportMahalanobisSq)) continue;
    const double g = std::exp(-0.5 * q);
    const double alpha = std::min(prims[s.index].opacity * g, kMaxAlpha);
    out.push_back({k, g, alpha, dx, dy});
  }
}

void check_inputs(std::span<const GaussianPrimitive> prims, const Camera& camera,
                  std::span<const double> background) {
  camera.validate();
  for (const auto& p : prims) {
    require(p.color.size() == background.size(),
            "rasterize: color channels do not match background");
  }
}

}  // namespace

Projection project(const GaussianPrimitive& primitive, const Camera& camera) {
  Projection out;
  const Eigen::Vector3d cam = camera.rotation * primitive.center + camera.translation;
  out.depth = cam.z();
  if (!(cam.z() > kNearPlane)) return out;
  const Eigen::Matrix3d sigma = covariance_from(primitive.scale, primitive.rotation.normalized());
  const Eigen::Matrix<double, 2, 3> t = projection_jacobian(camera, cam) * camera.rotation;
  out.visible = true;
  out.mean = {camera.fx * cam.x() / cam.z() + camera.cx, camera.fy * cam.y() / cam.z() + camera.cy};
  out.cov = t * sigma * t.transpose();
  return out;
}

std::optional<double> gaussian_weight(const Eigen::Vector2d& pixel, const Eigen::Vector2d& mean,
                                      const Eigen::Matrix2d& cov) {
  const double det = cov.determinant();
  if (!(det > kMinCovDeterminant)) return std::nullopt;
  const Eigen::Vector2d d = pixel - mean;
  return std::exp(-0.5 * d.dot(cov.inverse() * d));
}

Image rasterize(std::span<const GaussianPrimitive> prims, const Camera& camera,
                std::span<const double> background) {
  check_inputs(prims, camera, background);
  const int channels = static_cast<int>(background.size());
  Image image(camera.width, camera.height, channels);
  const Prepared prep = prepare(prims, camera);
  std::vector<Contribution> contribs;
  std::vector<double> color(channels);
  for (int ty = 0; ty < prep.tiles_y; ++ty) {
    for (int tx = 0; tx < prep.tiles_x; ++tx) {
      const auto& list = prep.tiles[static_cast<std::size_t>(ty) * prep.tiles_x + tx];
      const int y_end = std::min(camera.height, (ty + 1) * kTileSize);
      const int x_end = std::min(camera.width, (tx + 1) * kTileSize);
      for (int py = ty * kTileSize; py < y_end; ++py) {
        for (int px = tx * kTileSize; px < x_end; ++px) {
          gather(prep, prims, list, px, py, contribs);
          std::fill(color.begin(), color.end(), 0.0);
          double transmittance = 1.0;
          for (const Contribution& ct : contribs) {
            const auto& c = prims[prep.splats[ct.splat].index].color;
            const double w = ct.alpha * transmittance;
            for (int ch = 0; ch < channels; ++ch) color[ch] += c[ch] * w;
            transmittance *= 1.0 - ct.alpha;
          }
          for (int ch = 0; ch < channels; ++ch)
            image.at(px, py, ch) = color[ch] + transmittance * background[ch];
        }
      }
    }
  }
  return image;
}

std::vector<PrimitiveGrad> rasterize_grad(std::span<const GaussianPrimitive> prims,
                                          const Camera& camera,
                                          std::span<const double> background,
                                          const Image& upstream) {
  check_inputs(prims, camera, background);
  const int channels = static_cast<int>(background.size());
  require(upstream.width == camera.width && upstream.height == camera.height &&
              upstream.channels == channels,
          "rasterize_grad: upstream gradient has the wrong dimensions");

  std::vector<PrimitiveGrad> grads(prims.size());
  for (auto& g : grads) g.color.assign(channels, 0.0);

  const Prepared prep = prepare(prims, camera);
  // Screen-space accumulators per splat: d/d(mean u, v) and d/d(conic a, b, c).
  struct ScreenGrad {
    double u = 0, v = 0, ca = 0, cb = 0, cc = 0;
  };
  std::vector<ScreenGrad> screen(prep.splats.size());

  std::vector<Contribution> contribs;
  std::vector<double> transmit;
  std::vector<double> behind(channels);
  for (int ty = 0; ty < prep.tiles_y; ++ty) {
    for (int tx = 0; tx < prep.tiles_x; ++tx) {
      const auto& list = prep.tiles[static_cast<std::size_t>(ty) * prep.tiles_x + tx];
      const int y_end = std::min(camera.height, (ty + 1) * kTileSize);
      const int x_end = std::min(camera.width, (tx + 1) * kTileSize);
      for (int py = ty * kTileSize; py < y_end; ++py) {
        for (int px = tx * kTileSize; px < x_end; ++px) {
          gather(prep, prims, list, px, py, contribs);
          if (contribs.empty()) continue;
          transmit.resize(contribs.size() + 1);
          transmit[0] = 1.0;
          for (std::size_t i = 0; i < contribs.size(); ++i)
            transmit[i + 1] = transmit[i] * (1.0 - contribs[i].alpha);
          const double* g_pix = &upstream.data[upstream.index(px, py, 0)];
          // behind[ch] = color composited strictly behind the current splat.
          for (int ch = 0; ch < channels; ++ch)
            behind[ch] = transmit[contribs.size()] * background[ch];
          for (std::size_t i = contribs.size(); i-- > 0;) {
            const Contribution& ct = contribs[i];
            const Splat& s = prep.splats[ct.splat];
            const GaussianPrimitive& p = prims[s.index];
            PrimitiveGrad& pg = grads[s.index];
            const double t_i = transmit[i];
            double d_alpha = 0.0;
            for (int ch = 0; ch < channels; ++ch) {
              pg.color[ch] += g_pix[ch] * ct.alpha * t_i;
              d_alpha += g_pix[ch] * (p.color[ch] * t_i - behind[ch] / (1.0 - ct.alpha));
            }
            for (int ch = 0; ch < channels; ++ch) behind[ch] += p.color[ch] * ct.alpha * t_i;
            if (p.opacity * ct.weight >= kMaxAlpha) continue;  // clamped: no gradient
            pg.opacity += d_alpha * ct.weight;
            const double d_q = d_alpha * p.opacity * ct.weight * -0.5;
            ScreenGrad& sg = screen[ct.splat];
            sg.u += d_q * -(2.0 * s.conic_a * ct.dx + 2.0 * s.conic_b * ct.dy);
            sg.v += d_q * -(2.0 * s.conic_b * ct.dx + 2.0 * s.conic_c * ct.dy);
            sg.ca += d_q * ct.dx * ct.dx;
            sg.cb += d_q * 2.0 * ct.dx * ct.dy;
            sg.cc += d_q * ct.dy * ct.dy;
          }
        }
      }
    }
  }

  // Per-splat chain rule back to the 3D parameters.
  for (std::size_t k = 0; k < prep.splats.size(); ++k) {
    const Splat& s = prep.splats[k];
    const ScreenGrad& sg = screen[k];
    const GaussianPrimitive& p = prims[s.index];
    PrimitiveGrad& pg = grads[s.index];

    // conic = inverse(cov) in terms of (a, b, c).
    const double a = s.a, b = s.b, c = s.c, det2 = s.det * s.det;
    const double ga = sg.ca * (-c * c / det2) + sg.cb * (b * c / det2) + sg.cc * (-b * b / det2);
    const double gb = sg.ca * (2.0 * b * c / det2) + sg.cb * (-1.0 / s.det - 2.0 * b * b / det2) +
                      sg.cc * (2.0 * a * b / det2);
    const double gc = sg.ca * (-b * b / det2) + sg.cb * (a * b / det2) + sg.cc * (-a * a / det2);

    const Eigen::Vector4d q_raw = p.rotation;
    const double q_norm = q_raw.norm();
    const Eigen::Vector4d q = q_raw / q_norm;
    const Eigen::Matrix3d rot = rotation_matrix(q);
    const Eigen::Matrix3d m = rot * p.scale.asDiagonal();
    const Eigen::Matrix3d sigma = m * m.transpose();
    const Eigen::Matrix<double, 2, 3> jac = projection_jacobian(camera, s.cam);
    const Eigen::Matrix<double, 2, 3> t = jac * camera.rotation;
    const Eigen::RowVector3d t0 = t.row(0), t1 = t.row(1);

    // d/dSigma treating entries independently.
    const Eigen::Matrix3d g_sigma =
        ga * t0.transpose() * t0 + gb * t0.transpose() * t1 + gc * t1.transpose() * t1;
    Eigen::Matrix<double, 2, 3> g_t;
    g_t.row(0) = 2.0 * ga * (sigma * t0.transpose()).transpose() + gb * (sigma * t1.transpose()).transpose();
    g_t.row(1) = 2.0 * gc * (sigma * t1.transpose()).transpose() + gb * (sigma * t0.transpose()).transpose();
    const Eigen::Matrix<double, 2, 3> g_j = g_t * camera.rotation.transpose();

    const double fx = camera.fx, fy = camera.fy;
    const double x = s.cam.x(), y = s.cam.y(), z = s.cam.z();
    const double z2 = z * z, z3 = z2 * z;
    Eigen::Vector3d g_cam;
    g_cam.x() = sg.u * fx / z + g_j(0, 2) * (-fx / z2);
    g_cam.y() = sg.v * fy / z + g_j(1, 2) * (-fy / z2);
    g_cam.z() = sg.u * (-fx * x / z2) + sg.v * (-fy * y / z2) + g_j(0, 0) * (-fx / z2) +
                g_j(0, 2) * (2.0 * fx * x / z3) + g_j(1, 1) * (-fy / z2) +
                g_j(1, 2) * (2.0 * fy * y / z3);
    pg.center += camera.rotation.transpose() * g_cam;

    const Eigen::Matrix3d g_m = (g_sigma + g_sigma.transpose()) * m;
    for (int j = 0; j < 3; ++j) pg.scale[j] += g_m.col(j).dot(rot.col(j));
    const Eigen::Matrix3d g_r = g_m * p.scale.asDiagonal();

    const double w = q[0], qx = q[1], qy = q[2], qz = q[3];
    Eigen::Matrix3d dw, dx, dy, dz;
    dw << 0, -2 * qz, 2 * qy, 2 * qz, 0, -2 * qx, -2 * qy, 2 * qx, 0;
    dx << 0, 2 * qy, 2 * qz, 2 * qy, -4 * qx, -2 * w, 2 * qz, 2 * w, -4 * qx;
    dy << -4 * qy, 2 * qx, 2 * w, 2 * qx, 0, 2 * qz, -2 * w, 2 * qz, -4 * qy;
    dz << -4 * qz, -2 * w, 2 * qx, 2 * w, -4 * qz, 2 * qy, 2 * qx, 2 * qy, 0;
    const Eigen::Vector4d g_qhat{g_r.cwiseProduct(dw).sum(), g_r.cwiseProduct(dx).sum(),
                                 g_r.cwiseProduct(dy).sum(), g_r.cwiseProduct(dz).sum()};
    pg.rotation += (g_qhat - q * q.dot(g_qhat)) / q_norm;
  }
  return grads;
}

}  // namespace udgs::splat
