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

// udgs command-line entry point.
//
//   udgs synth-scene   [--config FILE] [--key value ...]
//   udgs train         ...
//   udgs render        ...
//   udgs eval          ...
//   udgs ablate-fusion ...
//
// Every key of the run configuration may be overridden with --key value.
// Exit codes: 0 success, 1 validation error, 2 numerical divergence.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "udgs/core/error.hpp"
#include "udgs/simd/kernels.hpp"
#include "udgs/splat/io.hpp"
#include "udgs/train/config.hpp"
#include "udgs/train/harness.hpp"
#include "udgs/train/model.hpp"
#include "udgs/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace udgs;
using namespace udgs::train;

namespace {

Config resolve(const std::string& config_file, const std::vector<std::string>& extras) {
  Config cfg;
  if (!config_file.empty()) cfg.load_file(config_file);
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    require(arg.rfind("--", 0) == 0, "unexpected argument '" + arg + "'");
    const std::string body = arg.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      cfg.set(body.substr(0, eq), body.substr(eq + 1));
    } else {
      require(i + 1 < extras.size(), "missing value for " + arg);
      cfg.set(body, extras[++i]);
    }
  }
  simd::set_backend(simd::parse_backend(cfg.text("simd")));
  return cfg;
}

fs::path checkpoint_path(const Config& cfg) {
  const std::string& c = cfg.text("checkpoint");
  return c.empty() ? fs::path(cfg.text("out")) / "model.ckpt" : fs::path(c);
}

void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  require(!ec && fs::is_directory(out), "cannot create output directory " + out.string());
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int cmd_synth_scene(const Config& cfg) {
  const HarnessConfig h = HarnessConfig::from(cfg);
  const Dataset d = synth_dataset(h);
  const fs::path root = cfg.text("dataset");
  write_dataset(root, d);
  cfg.write(root / "config.txt");
  std::printf("synth-scene: %zu frames (%zu held out), %zu primitives, %dx%d -> %s\n",
              d.frames.size(), d.split(true).size(), d.setup.scene.size(), h.width, h.height,
              root.string().c_str());
  return 0;
}

Dataset load(const Config& cfg) {
  const fs::path root = cfg.text("dataset");
  require(fs::is_directory(root), "dataset directory " + root.string() + " does not exist");
  return load_dataset(root);
}

int cmd_train(const Config& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const Dataset d = load(cfg);
  const ModelConfig mc = ModelConfig::from(cfg);
  const TrainConfig tc = TrainConfig::from(cfg);
  const fs::path out = cfg.text("out");
  prepare_out(out);
  Model model(d.setup.scene, mc, d.audio.sample_rate, tc.seed);
  Trainer trainer(model, d, tc);
  trainer.run();
  const auto params = model.parameters();
  save_checkpoint(checkpoint_path(cfg), params);
  write_trace(out / "trace.csv", trainer.trace());
  cfg.write(out / "config.txt");
  const double last = trainer.trace().empty() ? 0.0 : trainer.trace().back().loss;
  std::printf("train: %zu trace rows, final loss %.6f, %.1f s -> %s\n", trainer.trace().size(),
              last, seconds_since(start), checkpoint_path(cfg).string().c_str());
  return 0;
}

// Model restored from the checkpoint, plus its per-frame conditioning.
struct Restored {
  Dataset dataset;
  std::unique_ptr<Model> model;
  std::vector<FrameConditioning> conditioning;
};

Restored restore(const Config& cfg) {
  Restored r{load(cfg), nullptr, {}};
  const TrainConfig tc = TrainConfig::from(cfg);
  r.model = std::make_unique<Model>(r.dataset.setup.scene, ModelConfig::from(cfg),
                                    r.dataset.audio.sample_rate, tc.seed);
  const fs::path ckpt = checkpoint_path(cfg);
  require(fs::is_regular_file(ckpt), "checkpoint " + ckpt.string() + " does not exist");
  const auto params = r.model->parameters();
  load_checkpoint(ckpt, params);
  r.conditioning = model_conditioning(*r.model, r.dataset, tc.corruption());
  return r;
}

int cmd_eval(const Config& cfg) {
  Restored r = restore(cfg);
  const fs::path out = cfg.text("out");
  prepare_out(out);
  const EvalReport report = evaluate(*r.model, r.dataset, r.conditioning, r.dataset.split(true));
  write_report(out / "eval.csv", report);
  {
    std::ofstream f(out / "uncertainty.txt");
    require(static_cast<bool>(f), "cannot write uncertainty table");
    f << uncertainty_table(*r.model, r.conditioning[r.dataset.split(true).front()]);
  }
  cfg.write(out / "eval_config.txt");
  std::printf("eval: %zu held-out frames, PSNR %.4f dB, SSIM %.4f, L1 %.5f\n",
              report.frames.size(), report.psnr, report.ssim, report.l1);
  return 0;
}

int cmd_render(const Config& cfg) {
  Restored r = restore(cfg);
  const fs::path dir = fs::path(cfg.text("out")) / "render";
  prepare_out(dir);
  for (const FrameRecord& f : r.dataset.frames) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.ppm", f.index);
    splat::write_ppm(dir / name, render_frame(*r.model, r.dataset, r.conditioning[f.index]));
  }
  cfg.write(fs::path(cfg.text("out")) / "render_config.txt");
  std::printf("render: %zu frames -> %s\n", r.dataset.frames.size(), dir.string().c_str());
  return 0;
}

int cmd_ablate(const Config& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const Dataset d = load(cfg);
  std::vector<std::uint64_t> seeds;
  for (long s : cfg.integer_list("ablation_seeds")) {
    require(s >= 0, "ablation seeds must be non-negative");
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  const fs::path out = cfg.text("out");
  prepare_out(out);
  const AblationReport report =
      ablate_fusion(d, ModelConfig::from(cfg), TrainConfig::from(cfg), seeds);
  const std::string table = format_ablation(report);
  {
    std::ofstream f(out / "ablation.csv");
    require(static_cast<bool>(f), "cannot write ablation report");
    f << table;
  }
  for (const AblationRow* row : {&report.uncertainty, &report.uniform}) {
    std::ofstream f(out / ("uncertainty_" + std::string(fusion::fusion_mode_name(row->mode)) + ".txt"));
    require(static_cast<bool>(f), "cannot write uncertainty table");
    f << row->diagnostics;
  }
  cfg.write(out / "ablation_config.txt");
  std::fputs(table.c_str(), stdout);
  std::printf("ablate-fusion: %zu seeds, uncertainty - uniform = %+.4f dB PSNR, %+.4f SSIM, %.1f s\n",
              seeds.size(), report.psnr_gain(), report.ssim_gain(), seconds_since(start));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"udgs: uncertainty-fused Gaussian splatting talking-head toolkit"};
  app.require_subcommand(1);
  std::string config_file;
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Config&);
  };
  const Command commands[] = {
      {"synth-scene", "generate the synthetic scene and frame dataset", cmd_synth_scene},
      {"train", "train both branches and fine-tune jointly", cmd_train},
      {"render", "render every frame from a checkpoint", cmd_render},
      {"eval", "held-out PSNR/SSIM/L1 of a checkpoint", cmd_eval},
      {"ablate-fusion", "uncertainty vs uniform fusion comparison", cmd_ablate},
  };
  std::vector<CLI::App*> subs;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_file, "key = value configuration file");
    sub->allow_extras();
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      return commands[i].run(resolve(config_file, subs[i]->remaining()));
    }
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
