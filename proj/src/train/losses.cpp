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

#include "udgs/train/losses.hpp"

#include <algorithm>
#include <cmath>

#include "udgs/core/error.hpp"
#include "udgs/simd/kernels.hpp"

namespace udgs::train {

namespace {

constexpr int kHalo = kSsimWindow - 1;

void check_same(const Image& a, const Image& b, const char* what) {
  require(a.same_dims(b) && a.size() == b.size() && !a.data.empty(),
          std::string(what) + ": images differ in shape or are empty");
}

// Planar filtering helpers over a row-major h x w plane.

std::vector<double> transpose(const std::vector<double>& src, int rows, int cols) {
  std::vector<double> out(src.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
  return out;
}

// Valid correlation of each row: [rows x cols] -> [rows x (cols - kHalo)].
std::vector<double> filter_rows(const std::vector<double>& src, int rows, int cols,
                                const std::vector<double>& taps) {
  const auto& k = simd::kernels();
  const int out_cols = cols - kHalo;
  std::vector<double> out(static_cast<std::size_t>(rows) * out_cols);
  for (int r = 0; r < rows; ++r)
    k.correlate_valid(out_cols, &src[static_cast<std::size_t>(r) * cols], taps.data(), taps.size(),
                      &out[static_cast<std::size_t>(r) * out_cols]);
  return out;
}

// Adjoint of filter_rows: [rows x n] -> [rows x (n + kHalo)] (taps are symmetric).
std::vector<double> unfilter_rows(const std::vector<double>& src, int rows, int cols,
                                  const std::vector<double>& taps) {
  const int padded = cols + 2 * kHalo;
  std::vector<double> pad(static_cast<std::size_t>(rows) * padded, 0.0);
  for (int r = 0; r < rows; ++r)
    std::copy_n(&src[static_cast<std::size_t>(r) * cols], cols,
                &pad[static_cast<std::size_t>(r) * padded + kHalo]);
  return filter_rows(pad, rows, padded, taps);
}

// 2D valid Gaussian filter: [h x w] -> [(h - kHalo) x (w - kHalo)].
std::vector<double> blur_valid(const std::vector<double>& plane, int h, int w,
                               const std::vector<double>& taps) {
  const std::vector<double> horiz = filter_rows(plane, h, w, taps);
  const int w2 = w - kHalo;
  const std::vector<double> vert = filter_rows(transpose(horiz, h, w2), w2, h, taps);
  return transpose(vert, w2, h - kHalo);
}

// Adjoint of blur_valid.
std::vector<double> blur_valid_adjoint(const std::vector<double>& d, int h, int w,
                                       const std::vector<double>& taps) {
  const int h2 = h - kHalo, w2 = w - kHalo;
  const std::vector<double> cols = unfilter_rows(transpose(d, h2, w2), w2, h2, taps);  // w2 x h
  return unfilter_rows(transpose(cols, w2, h), h, w2, taps);                           // h x w
}

std::vector<double> channel_plane(const Image& img, int c) {
  std::vector<double> out(static_cast<std::size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out[static_cast<std::size_t>(y) * img.width + x] = img.at(x, y, c);
  return out;
}

struct SsimPlane {
  double sum = 0.0;                       // sum of the local SSIM map
  std::vector<double> d_mx, d_exx, d_exy;  // dS/d(filtered stats) per window
};

SsimPlane ssim_plane(const std::vector<double>& x, const std::vector<double>& y, int h, int w,
                     const std::vector<double>& taps, bool want_grad) {
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = blur_valid(x, h, w, taps);
  const auto my = blur_valid(y, h, w, taps);
  const auto exx = blur_valid(xx, h, w, taps);
  const auto eyy = blur_valid(yy, h, w, taps);
  const auto exy = blur_valid(xy, h, w, taps);
  SsimPlane out;
  if (want_grad) {
    out.d_mx.resize(mx.size());
    out.d_exx.resize(mx.size());
    out.d_exy.resize(mx.size());
  }
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double a1 = 2.0 * mx[i] * my[i] + kSsimC1;
    const double a2 = 2.0 * (exy[i] - mx[i] * my[i]) + kSsimC2;
    const double b1 = mx[i] * mx[i] + my[i] * my[i] + kSsimC1;
    const double b2 = (exx[i] - mx[i] * mx[i]) + (eyy[i] - my[i] * my[i]) + kSsimC2;
    const double s = (a1 * a2) / (b1 * b2);
    out.sum += s;
    if (want_grad) {
      out.d_mx[i] = s * (2.0 * my[i] / a1 - 2.0 * my[i] / a2 - 2.0 * mx[i] / b1 + 2.0 * mx[i] / b2);
      out.d_exx[i] = -s / b2;
      out.d_exy[i] = 2.0 * s / a2;
    }
  }
  return out;
}

ImageLoss ssim_impl(const Image& a, const Image& b, bool want_grad) {
  check_same(a, b, "ssim");
  require(a.width >= kSsimWindow && a.height >= kSsimWindow,
          "ssim needs images of at least 11x11 pixels");
  const int h = a.height, w = a.width;
  const auto taps = ssim_taps();
  const double windows = static_cast<double>(h - kHalo) * (w - kHalo) * a.channels;
  ImageLoss out;
  if (want_grad) out.grad.assign(a.size(), 0.0);
  for (int c = 0; c < a.channels; ++c) {
    const auto x = channel_plane(a, c);
    const auto y = channel_plane(b, c);
    SsimPlane p = ssim_plane(x, y, h, w, taps, want_grad);
    out.value += p.sum;
    if (!want_grad) continue;
    for (auto* d : {&p.d_mx, &p.d_exx, &p.d_exy})
      for (double& v : *d) v /= windows;
    const auto gm = blur_valid_adjoint(p.d_mx, h, w, taps);
    const auto gxx = blur_valid_adjoint(p.d_exx, h, w, taps);
    const auto gxy = blur_valid_adjoint(p.d_exy, h, w, taps);
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) {
        const std::size_t i = static_cast<std::size_t>(yy) * w + xx;
        out.grad[a.index(xx, yy, c)] = gm[i] + 2.0 * x[i] * gxx[i] + y[i] * gxy[i];
      }
  }
  out.value /= windows;
  return out;
}

}  // namespace

std::vector<double> ssim_taps() {
  std::vector<double> taps(kSsimWindow);
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kHalo / 2;
    taps[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

double l1_loss(const Image& a, const Image& b) {
  check_same(a, b, "l1_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.size());
}

ImageLoss l1_loss_grad(const Image& a, const Image& b) {
  ImageLoss out{l1_loss(a, b), std::vector<double>(a.size())};
  const double inv = 1.0 / static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    out.grad[i] = d > 0.0 ? inv : d < 0.0 ? -inv : 0.0;
  }
  return out;
}

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, false).value; }
ImageLoss ssim_grad(const Image& a, const Image& b) { return ssim_impl(a, b, true); }

ImageLoss loss_branch(const Image& render, const Image& target, double lambda) {
  require(lambda >= 0.0, "lambda must be non-negative");
  ImageLoss out = l1_loss_grad(render, target);
  const ImageLoss s = ssim_grad(render, target);
  out.value += lambda * (1.0 - s.value);
  for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] -= lambda * s.grad[i];
  return out;
}

double PerceptualMetric::distance(const Image&, const Image&) const { return 0.0; }

std::vector<double> PerceptualMetric::gradient(const Image& a, const Image&) const {
  return std::vector<double>(a.size(), 0.0);
}

ImageLoss loss_fuse(const Image& render, const Image& target, double lambda, double gamma,
                    const PerceptualMetric& perceptual) {
  require(gamma >= 0.0, "gamma must be non-negative");
  ImageLoss out = loss_branch(render, target, lambda);
  if (gamma == 0.0) return out;
  out.value += gamma * perceptual.distance(render, target);
  const std::vector<double> g = perceptual.gradient(render, target);
  require(g.size() == out.grad.size(), "perceptual gradient has the wrong size");
  for (std::size_t i = 0; i < g.size(); ++i) out.grad[i] += gamma * g[i];
  return out;
}

double recon_loss(std::span<const double> generated, std::span<const double> target) {
  require(generated.size() == target.size(), "recon_loss: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    const double d = generated[i] - target[i];
    s += d * d;
  }
  return s;
}

ad::Var recon_loss(ad::Graph& g, ad::Var generated, ad::Var target) {
  require(g.value(generated).same_shape(g.value(target)), "recon_loss: dimension mismatch");
  return g.sum(g.pow(g.sub(generated, target), 2.0));
}

namespace {
void check_one_hot(std::span<const double> one_hot, std::size_t classes) {
  require(one_hot.size() == classes, "emotion label length != number of logits");
  int ones = 0;
  for (double v : one_hot) {
    require(v == 0.0 || v == 1.0, "emotion label is not one-hot");
    ones += v == 1.0;
  }
  require(ones == 1, "emotion label is not one-hot");
}
}  // namespace

double emotion_stage2_loss(std::span<const double> logits, std::span<const double> one_hot,
                           std::span<const double> f_emo, std::span<const double> f_gt) {
  require(!logits.empty(), "emotion loss needs logits");
  check_one_hot(one_hot, logits.size());
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0, picked = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    total += std::exp(logits[i] - peak);
    picked += one_hot[i] * logits[i];
  }
  return (std::log(total) + peak - picked) + recon_loss(f_emo, f_gt);
}

ad::Var emotion_stage2_loss(ad::Graph& g, ad::Var logits, std::span<const double> one_hot,
                            ad::Var f_emo, ad::Var f_gt) {
  // Read everything needed from the logits before new nodes can move them.
  const std::size_t rows = g.value(logits).rows(), cols = g.value(logits).cols();
  require(rows == 1, "emotion loss expects a single row of logits");
  check_one_hot(one_hot, cols);
  const auto& lv = g.value(logits).data();
  const double peak = *std::max_element(lv.begin(), lv.end());
  const ad::Var lse = g.add_scalar(g.log(g.sum(g.exp(g.add_scalar(logits, -peak)))), peak);
  const ad::Var label =
      g.constant(ad::Tensor({1, cols}, std::vector<double>(one_hot.begin(), one_hot.end())));
  const ad::Var ce = g.sub(lse, g.sum(g.mul(logits, label)));
  return g.add(ce, recon_loss(g, f_emo, f_gt));
}

double mse(const Image& a, const Image& b) {
  check_same(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double psnr_from_mse(double m) {
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

}  // namespace udgs::train
