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

#include "udgs/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "udgs/core/error.hpp"

namespace udgs::train {

using splat::Branch;

TrainConfig TrainConfig::from(const Config& c) {
  TrainConfig t;
  t.seed = static_cast<std::uint64_t>(c.integer("seed"));
  t.iterations_pretrain = c.count("iterations_pretrain");
  t.iterations_branch = c.count("iterations_branch");
  t.iterations_joint = c.count("iterations_joint");
  t.lambda = c.number("lambda");
  t.gamma = c.number("gamma");
  t.lr = c.number("lr");
  t.lr_static = c.number("lr_static");
  t.lr_planes = c.number("lr_planes");
  t.lr_pretrain = c.number("lr_pretrain");
  t.nll_weight = c.number("nll_weight");
  t.mode = fusion::parse_fusion_mode(c.text("fusion_mode"));
  const std::string& view = c.text("corrupt_view");
  if (view != "none") {
    bool found = false;
    for (fusion::View v : fusion::kAllViews) {
      if (fusion::view_name(v) == view) {
        t.corrupt_view = v;
        found = true;
      }
    }
    require(found, "unknown corrupt_view '" + view + "'");
  }
  t.corrupt_sigma = c.number("corrupt_sigma");
  t.validate();
  return t;
}

void TrainConfig::validate() const {
  require(lambda >= 0.0 && gamma >= 0.0, "lambda and gamma must be >= 0");
  require(lr > 0.0 && lr_static >= 0.0 && lr_planes >= 0.0 && lr_pretrain > 0.0,
          "learning rates must be positive");
  require(nll_weight >= 0.0, "nll_weight must be >= 0");
  require(corrupt_sigma >= 0.0 && std::isfinite(corrupt_sigma), "corrupt_sigma must be >= 0");
  require(corrupt_sigma == 0.0 || corrupt_view.has_value(), "corrupt_sigma needs corrupt_view");
}

std::vector<FrameConditioning> model_conditioning(Model& model, const Dataset& dataset,
                                                  const Corruption& corruption) {
  const auto streams = model.conditioner.streams(dataset);
  return model.conditioner.condition(dataset, streams, corruption);
}

namespace {

ad::Tensor& view_tensor(FrameConditioning& c, fusion::View v) {
  switch (v) {
    case fusion::View::kAudio: return c.f_audio;
    case fusion::View::kExp: return c.f_exp;
    case fusion::View::kTone: return c.f_tone;
    case fusion::View::kEmotion: return c.f_emo_attn;
  }
  return c.f_audio;
}

void check_finite(double loss, const std::string& stage, std::size_t iteration) {
  if (!std::isfinite(loss))
    throw DivergenceError(stage + " loss became non-finite at iteration " +
                              std::to_string(iteration),
                          static_cast<long>(iteration));
}

// The rasterizer culls primitives with non-finite geometry, so a blown-up
// parameter can hide behind a finite loss.
void check_finite(const std::vector<ad::Parameter*>& params, const std::string& stage,
                  std::size_t iteration) {
  for (const ad::Parameter* p : params)
    for (double x : p->value.data())
      if (!std::isfinite(x))
        throw DivergenceError(stage + " parameter " + p->name + " became non-finite at iteration " +
                                  std::to_string(iteration),
                              static_cast<long>(iteration));
}

}  // namespace

Trainer::Trainer(Model& model, const Dataset& dataset, const TrainConfig& config,
                 const PerceptualMetric& perceptual)
    : model_(model),
      dataset_(dataset),
      config_(config),
      perceptual_(perceptual),
      frame_rng_(config.seed, "train.frames"),
      noise_rng_(config.seed, "train.corrupt.visit") {
  config_.validate();
  require(!dataset.frames.empty(), "training needs a non-empty dataset");
  train_frames_ = dataset.split(false);
  require(!train_frames_.empty(), "dataset has no training frames");
  model_.face.set_mode(config_.mode);
  model_.mouth.set_mode(config_.mode);
  streams_ = model_.conditioner.streams(dataset);
  for (auto* groups : {&face_, &mouth_}) {
    BranchModel& b = model_.branch(groups == &face_ ? Branch::kFace : Branch::kMouth);
    groups->network = b.network_parameters();
    groups->fixed = b.static_parameters();
    groups->planes = b.plane_parameters();
    groups->network_state.config.lr = config_.lr;
    groups->fixed_state.config.lr = config_.lr_static;
    groups->planes_state.config.lr = config_.lr_planes;
  }
}

void Trainer::pretrain() {
  const auto losses = model_.conditioner.pretrain(dataset_, streams_, config_.iterations_pretrain,
                                                  config_.lr_pretrain, config_.seed);
  for (std::size_t i = 0; i < losses.size(); ++i) trace_.push_back({i, "pretrain", losses[i]});
  clean_ = model_.conditioner.condition(dataset_, streams_, Corruption{});
}

FrameConditioning Trainer::frame_input(std::size_t frame) {
  require(frame < clean_.size(), "frame conditioning missing; run pretrain() first");
  FrameConditioning c = clean_[frame];
  if (config_.corrupt_view && config_.corrupt_sigma > 0.0)
    for (double& v : view_tensor(c, *config_.corrupt_view).data())
      v += config_.corrupt_sigma * noise_rng_.normal();
  return c;
}

void Trainer::zero(Groups& groups) {
  for (auto* list : {&groups.network, &groups.fixed, &groups.planes})
    for (ad::Parameter* p : *list) p->zero_grad();
}

void Trainer::step(Groups& groups) {
  ad::adam_step(groups.network, groups.network_state);
  if (config_.lr_static > 0.0) ad::adam_step(groups.fixed, groups.fixed_state);
  if (!groups.planes.empty() && config_.lr_planes > 0.0)
    ad::adam_step(groups.planes, groups.planes_state);
}

std::size_t Trainer::draw_frame() { return train_frames_[frame_rng_.below(train_frames_.size())]; }

namespace {

// Adds the weighted NLL seed of one branch; the fused mean is its target.
void add_nll(ad::Graph& g, const BranchModel::Vars& v, double weight,
             std::vector<std::vector<double>>& storage, std::vector<ad::Seed>& seeds) {
  if (weight <= 0.0) return;
  const ad::Var nll = fusion::nll_regularizer(g, v.fusion.per_view, v.fusion.fused.mean);
  storage.push_back({weight});
  seeds.push_back({nll, storage.back()});
}

}  // namespace

double Trainer::branch_step(Branch branch, std::size_t frame) {
  BranchModel& b = model_.branch(branch);
  Groups& groups = branch == Branch::kFace ? face_ : mouth_;
  const splat::Image& target =
      branch == Branch::kFace ? dataset_.mask_face[frame] : dataset_.mask_mouth[frame];
  const auto& setup = dataset_.setup;

  ad::Graph g;
  const BranchModel::Vars v = b.forward(g, frame_input(frame));
  const auto prims = b.primitives(g, v);
  const splat::Image render = splat::rasterize(prims, setup.camera, setup.background);
  const ImageLoss loss = loss_branch(render, target, config_.lambda);
  if (!std::isfinite(loss.value)) return loss.value;

  splat::Image upstream(render.width, render.height, render.channels);
  upstream.data = loss.grad;
  const auto grads = splat::rasterize_grad(prims, setup.camera, setup.background, upstream);
  std::vector<std::vector<double>> storage;
  storage.reserve(8);
  std::vector<ad::Seed> seeds;
  b.seeds(v, grads, storage, seeds);
  add_nll(g, v, config_.nll_weight, storage, seeds);
  zero(groups);
  g.backward(seeds);
  step(groups);
  return loss.value;
}

double Trainer::joint_step(std::size_t frame) {
  const auto& setup = dataset_.setup;
  ad::Graph g;
  const JointVars v = forward_joint(g, model_, frame_input(frame));
  const auto prims = joint_primitives(g, model_, v);
  const splat::Image render = splat::rasterize(prims, setup.camera, setup.background);
  const ImageLoss loss =
      loss_fuse(render, dataset_.gt[frame], config_.lambda, config_.gamma, perceptual_);
  if (!std::isfinite(loss.value)) return loss.value;

  splat::Image upstream(render.width, render.height, render.channels);
  upstream.data = loss.grad;
  const auto grads = splat::rasterize_grad(prims, setup.camera, setup.background, upstream);
  std::vector<splat::PrimitiveGrad> face_grads, mouth_grads;
  for (std::size_t k : model_.face.scene_indices()) face_grads.push_back(grads[k]);
  for (std::size_t k : model_.mouth.scene_indices()) mouth_grads.push_back(grads[k]);
  std::vector<std::vector<double>> storage;
  storage.reserve(16);
  std::vector<ad::Seed> seeds;
  model_.face.seeds(v.face, face_grads, storage, seeds);
  model_.mouth.seeds(v.mouth, mouth_grads, storage, seeds);
  add_nll(g, v.face, config_.nll_weight, storage, seeds);
  add_nll(g, v.mouth, config_.nll_weight, storage, seeds);
  zero(face_);
  zero(mouth_);
  g.backward(seeds);
  step(face_);
  step(mouth_);
  return loss.value;
}

void Trainer::run() {
  pretrain();
  for (std::size_t it = 0; it < config_.iterations_branch; ++it) {
    const std::size_t frame = draw_frame();
    const double face = branch_step(Branch::kFace, frame);
    check_finite(face, "face", it);
    const double mouth = branch_step(Branch::kMouth, frame);
    check_finite(mouth, "mouth", it);
    check_finite(model_.face.parameters(), "face", it);
    check_finite(model_.mouth.parameters(), "mouth", it);
    trace_.push_back({it, "face", face});
    trace_.push_back({it, "mouth", mouth});
  }
  for (std::size_t it = 0; it < config_.iterations_joint; ++it) {
    const double loss = joint_step(draw_frame());
    check_finite(loss, "joint", it);
    check_finite(model_.face.parameters(), "joint", it);
    check_finite(model_.mouth.parameters(), "joint", it);
    trace_.push_back({it, "joint", loss});
  }
}

void write_trace(const std::filesystem::path& path, const std::vector<TraceEntry>& trace) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "iteration,stage,loss\n";
  char buf[64];
  for (const TraceEntry& e : trace) {
    std::snprintf(buf, sizeof buf, "%.17g", e.loss);
    out << e.iteration << ',' << e.stage << ',' << buf << '\n';
  }
}

splat::Image render_frame(Model& model, const Dataset& dataset, const FrameConditioning& frame) {
  ad::Graph g;
  const JointVars v = forward_joint(g, model, frame);
  const auto prims = joint_primitives(g, model, v);
  return splat::rasterize(prims, dataset.setup.camera, dataset.setup.background);
}

EvalReport evaluate(Model& model, const Dataset& dataset,
                    const std::vector<FrameConditioning>& conditioning,
                    const std::vector<std::size_t>& frames) {
  require(!frames.empty(), "evaluation needs at least one frame");
  require(conditioning.size() == dataset.frames.size(), "conditioning/frame count mismatch");
  EvalReport report;
  for (std::size_t f : frames) {
    require(f < dataset.frames.size(), "evaluation frame out of range");
    const splat::Image render = render_frame(model, dataset, conditioning[f]);
    FrameMetrics m;
    m.frame = f;
    m.psnr = psnr(render, dataset.gt[f]);
    m.ssim = ssim(render, dataset.gt[f]);
    m.l1 = l1_loss(render, dataset.gt[f]);
    report.frames.push_back(m);
  }
  for (const FrameMetrics& m : report.frames) {
    report.psnr += m.psnr;
    report.ssim += m.ssim;
    report.l1 += m.l1;
  }
  const double n = static_cast<double>(report.frames.size());
  report.psnr /= n;
  report.ssim /= n;
  report.l1 /= n;
  return report;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  char buf[160];
  out << "frame,psnr,ssim,l1\n";
  for (const FrameMetrics& m : report.frames) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", m.frame, m.psnr, m.ssim, m.l1);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "mean,%.17g,%.17g,%.17g\n", report.psnr, report.ssim, report.l1);
  out << buf;
}

std::string uncertainty_table(Model& model, const FrameConditioning& frame) {
  std::ostringstream out;
  out << "# branch view primitive quantity values...\n";
  char buf[32];
  for (BranchModel* b : {&model.face, &model.mouth}) {
    ad::Graph g;
    const BranchModel::Vars v = b->forward(g, frame);
    const auto& views = b->stack().views();
    for (std::size_t k = 0; k < views.size(); ++k) {
      const fusion::StateVars& sv = v.fusion.per_view[k];
      const std::pair<const char*, ad::Var> columns[] = {
          {"mean", sv.mean}, {"variance", sv.variance}, {"eu", sv.eu}, {"au", sv.au}};
      for (std::size_t p = 0; p < b->size(); ++p)
        for (const auto& [name, var] : columns) {
          const ad::Tensor& t = g.value(var);
          out << splat::branch_name(b->branch()) << ' ' << fusion::view_name(views[k]) << ' '
              << b->scene_indices()[p] << ' ' << name;
          for (std::size_t d = 0; d < t.cols(); ++d) {
            std::snprintf(buf, sizeof buf, " %.9g", t.at(p, d));
            out << buf;
          }
          out << '\n';
        }
    }
  }
  return out.str();
}

AblationReport ablate_fusion(const Dataset& dataset, const ModelConfig& model_config,
                             const TrainConfig& train_config,
                             const std::vector<std::uint64_t>& seeds) {
  require(!seeds.empty(), "ablation needs at least one seed");
  AblationReport report;
  report.seeds = seeds;
  report.uncertainty.mode = fusion::FusionMode::kUncertainty;
  report.uniform.mode = fusion::FusionMode::kUniform;
  const auto held_out = dataset.split(true);
  for (AblationRow* row : {&report.uncertainty, &report.uniform}) {
    for (std::uint64_t seed : seeds) {
      ModelConfig mc = model_config;
      mc.mode = row->mode;
      TrainConfig tc = train_config;
      tc.mode = row->mode;
      tc.seed = seed;
      Model model(dataset.setup.scene, mc, dataset.audio.sample_rate, seed);
      Trainer trainer(model, dataset, tc);
      trainer.run();
      const auto conditioning = model_conditioning(model, dataset, tc.corruption());
      const EvalReport r = evaluate(model, dataset, conditioning, held_out);
      if (row->diagnostics.empty()) row->diagnostics = uncertainty_table(model, conditioning[held_out[0]]);
      row->psnr.push_back(r.psnr);
      row->ssim.push_back(r.ssim);
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      row->mean_psnr += row->psnr[i];
      row->mean_ssim += row->ssim[i];
    }
    row->mean_psnr /= static_cast<double>(seeds.size());
    row->mean_ssim /= static_cast<double>(seeds.size());
  }
  return report;
}

std::string format_ablation(const AblationReport& r) {
  std::ostringstream out;
  char buf[128];
  out << "mode,psnr,ssim\n";
  for (const AblationRow* row : {&r.uncertainty, &r.uniform}) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f\n",
                  std::string(fusion::fusion_mode_name(row->mode)).c_str(), row->mean_psnr,
                  row->mean_ssim);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "difference,%.6f,%.6f\n", r.psnr_gain(), r.ssim_gain());
  out << buf;
  return out.str();
}

}  // namespace udgs::train
