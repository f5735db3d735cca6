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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <algorithm>
#include <numeric>
#include <sstream>

#include "fd.hpp"

#include "udgs/core/error.hpp"
#include "udgs/splat/io.hpp"
#include "udgs/splat/rasterizer.hpp"
#include "udgs/train/config.hpp"
#include "udgs/train/harness.hpp"
#include "udgs/train/model.hpp"
#include "udgs/train/trainer.hpp"

using namespace udgs;
using namespace udgs::train;
using splat::Branch;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "udgs_test_train" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// A scene small enough to train in milliseconds.
Config tiny_config() {
  Config c;
  for (auto [k, v] : std::initializer_list<std::pair<const char*, const char*>>{
           {"primitives", "14"}, {"mouth_primitives", "4"}, {"width", "16"}, {"height", "16"},
           {"focal", "22"}, {"frames", "12"}, {"period", "6"}, {"dim_audio", "4"},
           {"dim_exp", "5"}, {"dim_tone", "3"}, {"dim_emo_attn", "3"}, {"d_code", "2"},
           {"base_resolution", "4"}, {"d_state", "4"}, {"members", "2"}, {"hidden", "6"},
           {"audio_window", "3"}, {"iterations_pretrain", "3"}, {"iterations_branch", "4"},
           {"iterations_joint", "2"}})
    c.set(k, v);
  return c;
}

const Dataset& tiny_dataset() {
  static const Dataset d = synth_dataset(HarnessConfig::from(tiny_config()));
  return d;
}

std::uint64_t hash_of(std::vector<ad::Parameter*> params) { return parameter_hash(params); }

}  // namespace

TEST(Config, DefaultsOverridesAndUnknownKeys) {
  Config c;
  EXPECT_EQ(c.integer("seed"), 7);
  EXPECT_EQ(c.number("lambda"), 0.5);
  EXPECT_EQ(c.number("gamma"), 0.2);
  EXPECT_EQ(c.count("iterations_branch"), 2000u);
  EXPECT_EQ(c.count("iterations_joint"), 500u);
  EXPECT_EQ(c.count("primitives"), 200u);
  EXPECT_EQ(c.count("members"), 10u);
  c.set("seed", "11");
  EXPECT_EQ(c.integer("seed"), 11);
  EXPECT_THROW(c.set("no_such_key", "1"), ValidationError);
  c.set("frames", "abc");
  EXPECT_THROW(c.count("frames"), ValidationError);
  EXPECT_EQ(Config().integer_list("ablation_seeds"), (std::vector<long>{7, 8, 9}));
}

TEST(Config, ResolvedEchoRoundTrips) {
  Config c = tiny_config();
  c.set("fusion_mode", "uniform");
  const fs::path p = temp_dir("config") / "resolved.txt";
  c.write(p);
  Config back;
  back.load_file(p);
  EXPECT_EQ(back.resolved(), c.resolved());
  std::ofstream(p) << "# comment\nseed = 3\nbogus = 1\n";
  Config bad;
  EXPECT_THROW(bad.load_file(p), ValidationError);
}

TEST(Harness, DriveAndSplit) {
  EXPECT_DOUBLE_EQ(drive_at(0, 30), 0.5);
  EXPECT_NEAR(drive_at(15, 60), 1.0, 1e-15);
  EXPECT_TRUE(is_held_out(5, 6));
  EXPECT_FALSE(is_held_out(6, 6));
  Config c;
  c.set("frames", "0");
  EXPECT_THROW(HarnessConfig::from(c), ValidationError);
}

TEST(Harness, DefaultSceneComposition) {
  const SceneSetup s = make_scene(HarnessConfig{});
  EXPECT_EQ(s.scene.size(), 200u);
  EXPECT_EQ(s.scene.indices_of(Branch::kMouth).size(), 40u);
  EXPECT_EQ(s.scene.indices_of(Branch::kFace).size(), 160u);
  EXPECT_NO_THROW(s.scene.validate());
  // default split: i % 6 == 5 leaves 20 of 120 frames for evaluation
  std::size_t held = 0;
  for (std::size_t i = 0; i < 120; ++i) held += is_held_out(i, 6);
  EXPECT_EQ(held, 20u);
}

TEST(Harness, MasksRenderBranchesAlone) {
  const Dataset& d = tiny_dataset();
  const auto& setup = d.setup;
  std::vector<splat::GaussianPrimitive> mouth;
  const splat::Scene deformed = scripted_deformation(setup.scene, d.frames[3].drive,
                                                     HarnessConfig::from(tiny_config()));
  for (std::size_t k : deformed.indices_of(Branch::kMouth)) mouth.push_back(deformed.primitives()[k]);
  const splat::Image expect =
      splat::quantize8(splat::rasterize(mouth, setup.camera, setup.background));
  EXPECT_EQ(expect.data, d.mask_mouth[3].data);
}

TEST(Harness, WriteLoadRoundTripIsByteStable) {
  const Dataset& d = tiny_dataset();
  const fs::path a = temp_dir("ds_a"), b = temp_dir("ds_b");
  write_dataset(a, d);
  const Dataset back = load_dataset(a);
  write_dataset(b, back);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    std::ifstream fa(e.path(), std::ios::binary), fb(b / rel, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}),
        sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_EQ(sa, sb) << rel;
  }
  EXPECT_THROW(load_dataset(temp_dir("empty")), ValidationError);
}

TEST(Harness, LoadedDatasetEqualsSynthesized) {
  const Dataset& d = tiny_dataset();
  const fs::path a = temp_dir("ds_eq");
  write_dataset(a, d);
  const Dataset back = load_dataset(a);
  EXPECT_EQ(back.audio.sample_rate, d.audio.sample_rate);
  EXPECT_EQ(back.audio.samples, d.audio.samples);
  ASSERT_EQ(back.gt.size(), d.gt.size());
  for (std::size_t i = 0; i < d.gt.size(); ++i) {
    EXPECT_EQ(back.gt[i].data, d.gt[i].data) << i;
    EXPECT_EQ(back.mask_face[i].data, d.mask_face[i].data) << i;
    EXPECT_EQ(back.mask_mouth[i].data, d.mask_mouth[i].data) << i;
  }
  const auto same = [](const ad::Tensor& x, const ad::Tensor& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() &&
           std::equal(x.data().begin(), x.data().end(), y.data().begin());
  };
  EXPECT_TRUE(same(back.f_exp, d.f_exp));
  EXPECT_TRUE(same(back.f_tone, d.f_tone));
  EXPECT_TRUE(same(back.f_audio_walk, d.f_audio_walk));
  EXPECT_TRUE(same(back.audio_target, d.audio_target));
  EXPECT_TRUE(same(back.emotion_target, d.emotion_target));
}

TEST(Model, CheckpointRoundTripAndHash) {
  const Dataset& d = tiny_dataset();
  const ModelConfig mc = ModelConfig::from(tiny_config());
  Model a(d.setup.scene, mc, d.audio.sample_rate, 1), b(d.setup.scene, mc, d.audio.sample_rate, 2);
  EXPECT_NE(hash_of(a.parameters()), hash_of(b.parameters()));
  const fs::path p = temp_dir("ckpt") / "m.ckpt";
  save_checkpoint(p, a.parameters());
  load_checkpoint(p, b.parameters());
  EXPECT_EQ(hash_of(a.parameters()), hash_of(b.parameters()));
  std::ofstream(p, std::ios::binary) << "garbage";
  EXPECT_THROW(load_checkpoint(p, b.parameters()), ValidationError);
}

TEST(Model, UntrainedRenderIsCanonical) {
  const Dataset& d = tiny_dataset();
  Model m(d.setup.scene, ModelConfig::from(tiny_config()), d.audio.sample_rate, 3);
  const auto cond = model_conditioning(m, d, Corruption{});
  const splat::Image img = render_frame(m, d, cond[0]);
  const splat::Image canon = splat::rasterize(d.setup.scene.primitives(), d.setup.camera, d.setup.background);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(img.data[i], canon.data[i], 1e-9);
}

TEST(Trainer, ZeroIterationsLeaveParameters) {
  const Dataset& d = tiny_dataset();
  Config c = tiny_config();
  for (const char* k : {"iterations_pretrain", "iterations_branch", "iterations_joint"}) c.set(k, "0");
  Model m(d.setup.scene, ModelConfig::from(c), d.audio.sample_rate, 4);
  const std::uint64_t before = hash_of(m.parameters());
  Trainer t(m, d, TrainConfig::from(c));
  t.run();
  EXPECT_TRUE(t.trace().empty());
  EXPECT_EQ(hash_of(m.parameters()), before);
}

TEST(Trainer, DeterministicPerSeed) {
  const Dataset& d = tiny_dataset();
  const Config c = tiny_config();
  auto run = [&] {
    Model m(d.setup.scene, ModelConfig::from(c), d.audio.sample_rate, 5);
    Trainer t(m, d, TrainConfig::from(c));
    t.run();
    return std::make_pair(t.trace().back().loss, hash_of(m.parameters()));
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Trainer, BranchStepTouchesOnlyItsBranch) {
  const Dataset& d = tiny_dataset();
  const Config c = tiny_config();
  Model m(d.setup.scene, ModelConfig::from(c), d.audio.sample_rate, 6);
  Trainer t(m, d, TrainConfig::from(c));
  t.pretrain();
  const std::uint64_t cond = hash_of(m.conditioner.parameters());
  std::uint64_t face = hash_of(m.face.parameters()), mouth = hash_of(m.mouth.parameters());
  for (int i = 0; i < 3; ++i) t.branch_step(Branch::kMouth, 0);
  EXPECT_EQ(hash_of(m.face.parameters()), face);
  EXPECT_NE(hash_of(m.mouth.parameters()), mouth);
  mouth = hash_of(m.mouth.parameters());
  for (int i = 0; i < 3; ++i) t.branch_step(Branch::kFace, 1);
  EXPECT_EQ(hash_of(m.mouth.parameters()), mouth);
  EXPECT_NE(hash_of(m.face.parameters()), face);
  EXPECT_EQ(hash_of(m.conditioner.parameters()), cond);
}

TEST(Trainer, DivergenceIsReported) {
  const Dataset& d = tiny_dataset();
  Config c = tiny_config();
  Model m(d.setup.scene, ModelConfig::from(c), d.audio.sample_rate, 7);
  m.face.static_parameters()[0]->value[0] = std::nan("");
  Trainer t(m, d, TrainConfig::from(c));
  try {
    t.run();
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.iteration(), 0);
  }
}

TEST(Trainer, RejectsInvalidConfig) {
  Config c = tiny_config();
  c.set("lambda", "-1");
  EXPECT_THROW(TrainConfig::from(c), ValidationError);
  c = tiny_config();
  c.set("corrupt_view", "f_nothing");
  EXPECT_THROW(TrainConfig::from(c), ValidationError);
}

TEST(Evaluate, PureAndOrderIndependent) {
  const Dataset& d = tiny_dataset();
  Model m(d.setup.scene, ModelConfig::from(tiny_config()), d.audio.sample_rate, 8);
  const auto cond = model_conditioning(m, d, Corruption{});
  const auto held = d.split(true);
  const EvalReport a = evaluate(m, d, cond, held);
  const EvalReport b = evaluate(m, d, cond, held);
  std::vector<std::size_t> reversed(held.rbegin(), held.rend());
  const EvalReport r = evaluate(m, d, cond, reversed);
  EXPECT_EQ(a.psnr, b.psnr);
  EXPECT_EQ(a.ssim, b.ssim);
  for (std::size_t i = 0; i < held.size(); ++i) {
    EXPECT_EQ(a.frames[i].psnr, r.frames[held.size() - 1 - i].psnr);
    EXPECT_TRUE(std::isfinite(a.frames[i].psnr));
  }
  EXPECT_NEAR(a.psnr, r.psnr, 1e-12);
  EXPECT_THROW(evaluate(m, d, cond, {}), ValidationError);
}

TEST(Ablation, ZeroIterationsGiveEqualModes) {
  const Dataset& d = tiny_dataset();
  Config c = tiny_config();
  for (const char* k : {"iterations_pretrain", "iterations_branch", "iterations_joint"}) c.set(k, "0");
  const AblationReport r = ablate_fusion(d, ModelConfig::from(c), TrainConfig::from(c), {7});
  EXPECT_EQ(r.uncertainty.mean_psnr, r.uniform.mean_psnr);
  EXPECT_EQ(r.uncertainty.mean_ssim, r.uniform.mean_ssim);
  const std::string table = format_ablation(r);
  EXPECT_EQ(table.rfind("mode,psnr,ssim\nuncertainty,", 0), 0u);
  EXPECT_NE(table.find("\nuniform,"), std::string::npos);
}

TEST(Ablation, DeterministicReport) {
  const Dataset& d = tiny_dataset();
  Config c = tiny_config();
  c.set("corrupt_view", "f_tone");
  c.set("corrupt_sigma", "1");
  const auto a = ablate_fusion(d, ModelConfig::from(c), TrainConfig::from(c), {3});
  const auto b = ablate_fusion(d, ModelConfig::from(c), TrainConfig::from(c), {3});
  EXPECT_EQ(format_ablation(a), format_ablation(b));
  EXPECT_NE(a.uncertainty.mean_psnr, a.uniform.mean_psnr);
}

namespace {

constexpr double kLambda = 0.5, kGamma = 0.2;

double fused_loss(Model& m, const Dataset& d, const FrameConditioning& c) {
  ad::Graph g;
  const JointVars v = forward_joint(g, m, c);
  const auto render = splat::rasterize(joint_primitives(g, m, v), d.setup.camera, d.setup.background);
  return loss_fuse(render, d.gt[0], kLambda, kGamma, PerceptualMetric()).value;
}

}  // namespace

// L_F through both branches: graph, decoders, fusion, emotion planes,
// rasterizer and image loss chained end to end. 16x16 because the SSIM
// window needs 11 pixels.
TEST(EndToEnd, FusedLossGradientMatchesFiniteDifference) {
  Config c = tiny_config();
  c.set("primitives", "4");
  c.set("mouth_primitives", "1");
  const Dataset d = synth_dataset(HarnessConfig::from(c));
  ModelConfig mc = ModelConfig::from(c);
  mc.decoder.zero_heads = false;
  Model m(d.setup.scene, mc, d.audio.sample_rate, 11);
  const auto streams = m.conditioner.streams(d);
  const FrameConditioning cond = m.conditioner.condition(d, streams, Corruption{})[0];

  ad::Graph g;
  const JointVars v = forward_joint(g, m, cond);
  const auto prims = joint_primitives(g, m, v);
  const auto render = splat::rasterize(prims, d.setup.camera, d.setup.background);
  const PerceptualMetric perceptual;
  const ImageLoss loss = loss_fuse(render, d.gt[0], kLambda, kGamma, perceptual);
  splat::Image upstream(render.width, render.height, render.channels);
  upstream.data = loss.grad;
  const auto grads = splat::rasterize_grad(prims, d.setup.camera, d.setup.background, upstream);
  std::vector<splat::PrimitiveGrad> face_grads, mouth_grads;
  for (std::size_t k : m.face.scene_indices()) face_grads.push_back(grads[k]);
  for (std::size_t k : m.mouth.scene_indices()) mouth_grads.push_back(grads[k]);
  std::vector<std::vector<double>> storage;
  storage.reserve(16);
  std::vector<ad::Seed> seeds;
  m.face.seeds(v.face, face_grads, storage, seeds);
  m.mouth.seeds(v.mouth, mouth_grads, storage, seeds);
  for (ad::Parameter* p : m.parameters()) p->zero_grad();
  g.backward(seeds);

  std::vector<ad::Parameter*> probes;
  probes.push_back(m.face.plane_parameters().front());
  probes.push_back(m.face.stack().parameters().front());
  probes.push_back(m.mouth.stack().parameters().front());
  probes.push_back(m.face.decoder().parameters().front());
  probes.push_back(m.mouth.decoder().heads().front());
  for (ad::Parameter* p : probes) {
    // the three entries with the largest analytic gradient
    std::vector<std::size_t> order(p->grad.size());
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + 3, order.end(), [&](auto a, auto b) {
      return std::abs(p->grad[a]) > std::abs(p->grad[b]);
    });
    EXPECT_GT(std::abs(p->grad[order[0]]), 1e-8) << p->name;
    for (int k = 0; k < 3; ++k) {
      const std::size_t i = order[k];
      const double analytic = p->grad[i];
      const double keep = p->value[i], h = 1e-6;
      p->value[i] = keep + h;
      const double plus = fused_loss(m, d, cond);
      p->value[i] = keep - h;
      const double minus = fused_loss(m, d, cond);
      p->value[i] = keep;
      const double numeric = (plus - minus) / (2.0 * h);
      EXPECT_LT(udgs::testing::relative_error(analytic, numeric, 1e-6), 1e-3)
          << p->name << "[" << i << "] analytic " << analytic << " numeric " << numeric;
    }
  }
}

TEST(Diagnostics, UncertaintyTableShape) {
  const Dataset& d = tiny_dataset();
  const ModelConfig mc = ModelConfig::from(tiny_config());
  Model m(d.setup.scene, mc, d.audio.sample_rate, 12);
  const auto cond = model_conditioning(m, d, Corruption{});
  const std::string table = uncertainty_table(m, cond[0]);
  std::istringstream in(table);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line[0], '#');
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string branch, view, quantity;
    std::size_t primitive = 0;
    fields >> branch >> view >> primitive >> quantity;
    std::size_t values = 0;
    double x = 0.0;
    while (fields >> x) ++values;
    EXPECT_EQ(values, mc.d_state) << line;
    ++rows;
  }
  // face: 10 primitives x 4 views, mouth: 4 primitives x 3 views, 4 quantities each
  EXPECT_EQ(rows, (10u * 4 + 4u * 3) * 4);
}
