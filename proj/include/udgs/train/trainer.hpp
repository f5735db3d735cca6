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
#include <string>
#include <vector>

#include "udgs/ad/adam.hpp"
#include "udgs/train/config.hpp"
#include "udgs/train/harness.hpp"
#include "udgs/train/losses.hpp"
#include "udgs/train/model.hpp"

namespace udgs::train {

struct TrainConfig {
  std::uint64_t seed = 7;
  std::size_t iterations_pretrain = 300;
  std::size_t iterations_branch = 2000;
  std::size_t iterations_joint = 500;
  double lambda = 0.5;
  double gamma = 0.2;
  double lr = 1e-3;
  double lr_static = 1e-3;
  double lr_planes = 1e-2;
  double lr_pretrain = 3e-3;
  double nll_weight = 0.0;
  fusion::FusionMode mode = fusion::FusionMode::kUncertainty;
  std::optional<fusion::View> corrupt_view;
  double corrupt_sigma = 0.0;

  static TrainConfig from(const Config& config);
  void validate() const;
  Corruption corruption() const { return {corrupt_view, corrupt_sigma, seed}; }
};

struct TraceEntry {
  std::size_t iteration = 0;
  std::string stage;  // pretrain, face, mouth, joint
  double loss = 0.0;
};

/// Per-frame inputs of a trained model. Corrupted views carry one fixed noise
/// draw per frame; training redraws the noise on every visit instead.
std::vector<FrameConditioning> model_conditioning(Model& model, const Dataset& dataset,
                                                  const Corruption& corruption);

/// Drives one model through pretraining, the per-branch stage and the joint stage.
class Trainer {
 public:
  Trainer(Model& model, const Dataset& dataset, const TrainConfig& config,
          const PerceptualMetric& perceptual = PerceptualMetric());

  void pretrain();
  /// One step of stage A on `branch` against its mask; returns the loss.
  double branch_step(splat::Branch branch, std::size_t frame);
  /// One step of stage B on the fused render; returns the loss.
  double joint_step(std::size_t frame);
  /// Runs every stage with the configured budgets.
  void run();

  const std::vector<TraceEntry>& trace() const { return trace_; }
  const std::vector<FrameConditioning>& conditioning() const { return clean_; }

 private:
  struct Groups {
    std::vector<ad::Parameter*> network, fixed, planes;
    ad::AdamState network_state, fixed_state, planes_state;
  };
  FrameConditioning frame_input(std::size_t frame);
  void step(Groups& groups);
  void zero(Groups& groups);
  std::size_t draw_frame();

  Model& model_;
  const Dataset& dataset_;
  TrainConfig config_;
  const PerceptualMetric& perceptual_;
  Conditioner::AudioStreams streams_;
  std::vector<FrameConditioning> clean_;
  std::vector<std::size_t> train_frames_;
  Rng frame_rng_;
  Rng noise_rng_;
  Groups face_, mouth_;
  std::vector<TraceEntry> trace_;
};

void write_trace(const std::filesystem::path& path, const std::vector<TraceEntry>& trace);

/// Joint render of one frame.
splat::Image render_frame(Model& model, const Dataset& dataset, const FrameConditioning& frame);

struct FrameMetrics {
  std::size_t frame = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double l1 = 0.0;
};
struct EvalReport {
  std::vector<FrameMetrics> frames;
  double psnr = 0.0;
  double ssim = 0.0;
  double l1 = 0.0;
};

/// Metrics of the joint render against ground truth on `frames` (non-empty).
EvalReport evaluate(Model& model, const Dataset& dataset,
                    const std::vector<FrameConditioning>& conditioning,
                    const std::vector<std::size_t>& frames);
void write_report(const std::filesystem::path& path, const EvalReport& report);

/// Per-primitive, per-view (mean, variance, EU, AU) of one frame as a plain
/// text table: one line per branch, view, primitive and quantity, followed by
/// D_state values.
std::string uncertainty_table(Model& model, const FrameConditioning& frame);

struct AblationRow {
  fusion::FusionMode mode = fusion::FusionMode::kUncertainty;
  std::vector<double> psnr;  // one per seed
  std::vector<double> ssim;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::string diagnostics;  // uncertainty_table of the first seed, first held-out frame
};
struct AblationReport {
  std::vector<std::uint64_t> seeds;
  AblationRow uncertainty;
  AblationRow uniform;
  double psnr_gain() const { return uncertainty.mean_psnr - uniform.mean_psnr; }
  double ssim_gain() const { return uncertainty.mean_ssim - uniform.mean_ssim; }
};

/// Trains both fusion modes with identical seeds, budgets and corruption and
/// evaluates each on the held-out frames.
AblationReport ablate_fusion(const Dataset& dataset, const ModelConfig& model_config,
                             const TrainConfig& train_config,
                             const std::vector<std::uint64_t>& seeds);
std::string format_ablation(const AblationReport& report);

}  // namespace udgs::train
