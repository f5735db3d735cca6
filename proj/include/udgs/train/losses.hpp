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

#include <span>
#include <vector>

#include "udgs/ad/graph.hpp"
#include "udgs/splat/image.hpp"

namespace udgs::train {

using splat::Image;

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kPsnrCap = 99.0;

/// A scalar image loss and its gradient with respect to the first image.
struct ImageLoss {
  double value = 0.0;
  std::vector<double> grad;
};

double l1_loss(const Image& a, const Image& b);
ImageLoss l1_loss_grad(const Image& a, const Image& b);

/// Mean SSIM over every valid 11x11 window (Gaussian weights, sigma 1.5) and
/// every channel, for unit dynamic range. Throws ValidationError when the
/// images differ in shape or a side is shorter than the window.
double ssim(const Image& a, const Image& b);
ImageLoss ssim_grad(const Image& a, const Image& b);

/// Normalized 1D Gaussian taps of the SSIM window.
std::vector<double> ssim_taps();

/// L1 + lambda * (1 - SSIM).
ImageLoss loss_branch(const Image& render, const Image& target, double lambda);

/// Perceptual distance hook. The default stub returns 0 with zero gradient.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual double distance(const Image& a, const Image& b) const;
  /// Gradient of distance() with respect to `a`.
  virtual std::vector<double> gradient(const Image& a, const Image& b) const;
};

/// L1 + lambda * (1 - SSIM) + gamma * perceptual.
ImageLoss loss_fuse(const Image& render, const Image& target, double lambda, double gamma,
                    const PerceptualMetric& perceptual);

/// Squared L2 distance of equal-length vectors.
double recon_loss(std::span<const double> generated, std::span<const double> target);
ad::Var recon_loss(ad::Graph& graph, ad::Var generated, ad::Var target);

/// -sum y log softmax(logits) + |f_emo - f_gt|^2. Throws ValidationError
/// unless `one_hot` has exactly one 1 and zeros elsewhere.
double emotion_stage2_loss(std::span<const double> logits, std::span<const double> one_hot,
                           std::span<const double> f_emo, std::span<const double> f_gt);
/// logits [1 x C]; one_hot, f_gt are constants.
ad::Var emotion_stage2_loss(ad::Graph& graph, ad::Var logits, std::span<const double> one_hot,
                            ad::Var f_emo, ad::Var f_gt);

double mse(const Image& a, const Image& b);
/// 10 log10(1 / mse), capped at kPsnrCap (also for mse == 0).
double psnr_from_mse(double mse);
double psnr(const Image& a, const Image& b);

}  // namespace udgs::train
