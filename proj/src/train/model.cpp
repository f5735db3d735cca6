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

#include "udgs/train/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "udgs/ad/adam.hpp"
#include "udgs/core/error.hpp"
#include "udgs/core/rng.hpp"
#include "udgs/train/losses.hpp"

namespace udgs::train {

using splat::Branch;

namespace {

ad::Var sigmoid(ad::Graph& g, ad::Var x) {
  return g.pow(g.add_scalar(g.exp(g.scale(x, -1.0)), 1.0), -1.0);
}

double logit(double p, double eps) {
  p = std::clamp(p, eps, 1.0 - eps);
  return std::log(p / (1.0 - p));
}

ad::Tensor row_of(const ad::Tensor& table, std::size_t r) {
  return ad::Tensor({1, table.cols()},
                    std::vector<double>(table.data().begin() + r * table.cols(),
                                        table.data().begin() + (r + 1) * table.cols()));
}

ad::Tensor rows_of(const ad::Tensor& table, std::size_t begin, std::size_t count) {
  return ad::Tensor({count, table.cols()},
                    std::vector<double>(table.data().begin() + begin * table.cols(),
                                        table.data().begin() + (begin + count) * table.cols()));
}

void append(std::vector<ad::Parameter*>& out, const std::vector<ad::Parameter*>& more) {
  out.insert(out.end(), more.begin(), more.end());
}

cond::EmotionEncoderConfig emotion_config(const ModelConfig& c, int sample_rate) {
  const cond::SpectralAnalyzer analyzer(sample_rate, c.frame);
  cond::EmotionEncoderConfig e;
  e.spectrogram_bins = analyzer.fft_len() / 2 + 1;
  e.n_mfcc = static_cast<std::size_t>(c.frame.n_mfcc);
  e.frame_len = analyzer.frame_len();
  e.out_dim = c.dims.emo_attn;
  return e;
}

}  // namespace

ModelConfig ModelConfig::from(const Config& c) {
  ModelConfig m;
  m.dims.audio = c.count("dim_audio");
  m.dims.exp = c.count("dim_exp");
  m.dims.tone = c.count("dim_tone");
  m.dims.emo_attn = c.count("dim_emo_attn");
  m.d_state = c.count("d_state");
  m.members = c.count("members");
  m.hidden = c.count("hidden");
  m.d_code = c.count("d_code");
  m.base_resolution = c.count("base_resolution");
  m.decoder.state_dim = m.d_state;
  m.decoder.hidden = m.hidden;
  m.decoder.position_gain = c.number("position_gain");
  m.decoder.rotation_gain = c.number("rotation_gain");
  m.decoder.scale_gain = c.number("scale_gain");
  m.mode = fusion::parse_fusion_mode(c.text("fusion_mode"));
  m.frame.frame_ms = c.number("frame_ms");
  m.frame.hop_ms = c.number("hop_ms");
  m.frame.n_mels = static_cast<int>(c.count("n_mels"));
  m.frame.n_mfcc = static_cast<int>(c.count("n_mfcc"));
  m.audio_window = c.count("audio_window");
  m.emotion_classes = static_cast<int>(c.count("emotion_classes"));
  const std::string& source = c.text("f_audio_source");
  require(source == "audio" || source == "walk", "f_audio_source must be audio or walk");
  m.audio_features = source == "audio";
  require(m.members >= 2, "members must be at least 2");
  require(m.audio_window >= 1, "audio_window must be positive");
  require(m.emotion_classes >= 2, "emotion_classes must be at least 2");
  return m;
}

Conditioner::Conditioner(const ModelConfig& config, int sample_rate, std::uint64_t seed)
    : config_(config), sample_rate_(sample_rate) {
  Rng audio_rng(seed, "cond.audio_encoder");
  audio_ = cond::AudioEncoder(config.audio_window * static_cast<std::size_t>(config.frame.n_mfcc),
                              config.dims.audio, audio_rng);
  Rng emotion_rng(seed, "cond.emotion_encoder");
  emotion_ = cond::EmotionEncoder(emotion_config(config, sample_rate), emotion_rng);
  Rng heads_rng(seed, "cond.emotion_heads");
  heads_ = cond::EmotionHeads(config.dims.emo_attn, static_cast<std::size_t>(config.emotion_classes),
                              heads_rng);
}

Conditioner::AudioStreams Conditioner::streams(const Dataset& d) const {
  require(d.audio.sample_rate == sample_rate_, "dataset audio sample rate differs from the model's");
  const cond::SpectralAnalyzer analyzer(d.audio.sample_rate, config_.frame);
  const cond::FrameFeatures ff = analyzer.extract(d.audio);
  const ad::Tensor spec = cond::normalize_columns(ff.spectrogram);
  const ad::Tensor mfcc = cond::normalize_columns(ff.mfcc);
  const std::size_t w = config_.audio_window;
  AudioStreams out;
  for (const FrameRecord& f : d.frames) {
    const std::size_t start = cond::window_start(f.index, d.fps, ff, d.audio.sample_rate, w);
    ad::Tensor m = rows_of(mfcc, start, w);
    out.mfcc_window.emplace_back(std::vector<std::size_t>{1, m.size()}, m.storage());
    out.mfcc.push_back(std::move(m));
    out.spectrogram.push_back(rows_of(spec, start, w));
    out.raw.push_back(rows_of(ff.raw, start, w));
  }
  return out;
}

std::vector<ad::Parameter*> Conditioner::parameters() {
  std::vector<ad::Parameter*> out = audio_.parameters();
  append(out, emotion_.parameters());
  append(out, heads_.parameters());
  return out;
}

std::vector<double> Conditioner::pretrain(const Dataset& d, const AudioStreams& audio,
                                          std::size_t iterations, double lr, std::uint64_t seed) {
  const std::vector<std::size_t> train_frames = d.split(false);
  require(!train_frames.empty(), "pretraining needs training frames");
  std::vector<ad::Parameter*> params;
  if (config_.audio_features) params = audio_.parameters();
  append(params, emotion_.parameters());
  append(params, heads_.parameters());
  ad::AdamState adam;
  adam.config.lr = lr;
  Rng rng(seed, "train.pretrain");
  const auto classes = static_cast<std::size_t>(config_.emotion_classes);
  std::vector<double> trace;
  for (std::size_t it = 0; it < iterations; ++it) {
    const std::size_t f = train_frames[rng.below(train_frames.size())];
    ad::Graph g;
    ad::Var loss{};
    bool have = false;
    if (config_.audio_features) {
      const ad::Var fa = audio_.forward(g, g.constant(audio.mfcc_window[f]));
      loss = recon_loss(g, fa, g.constant(row_of(d.audio_target, f)));
      have = true;
    }
    const auto enc = emotion_.attn_reweight(g, g.constant(audio.spectrogram[f]),
                                            g.constant(audio.mfcc[f]), g.constant(audio.raw[f]));
    std::vector<double> one_hot(classes, 0.0);
    one_hot[static_cast<std::size_t>(
        cond::SyntheticFeatures::emotion_label(d.frames[f].drive, config_.emotion_classes))] = 1.0;
    const ad::Var emo = emotion_stage2_loss(g, heads_.classifier.forward(g, enc.feature), one_hot,
                                            heads_.expression.forward(g, enc.feature),
                                            g.constant(row_of(d.emotion_target, f)));
    loss = have ? g.add(loss, emo) : emo;
    const double value = g.value(loss)[0];
    if (!std::isfinite(value))
      throw DivergenceError("pretraining loss is not finite", static_cast<long>(it));
    trace.push_back(value);
    for (ad::Parameter* p : params) p->zero_grad();
    g.backward(loss);
    ad::adam_step(params, adam);
  }
  return trace;
}

std::vector<FrameConditioning> Conditioner::condition(const Dataset& d, const AudioStreams& audio,
                                                      const Corruption& corruption) {
  std::vector<FrameConditioning> out;
  Rng noise(corruption.seed, "train.corrupt");
  for (const FrameRecord& f : d.frames) {
    FrameConditioning c;
    ad::Graph g;
    if (config_.audio_features) {
      c.f_audio = g.value(audio_.forward(g, g.constant(audio.mfcc_window[f.index])));
    } else {
      c.f_audio = row_of(d.f_audio_walk, f.index);
    }
    c.f_exp = row_of(d.f_exp, f.index);
    c.f_tone = row_of(d.f_tone, f.index);
    c.f_emo_attn = g.value(emotion_.attn_reweight(g, g.constant(audio.spectrogram[f.index]),
                                                  g.constant(audio.mfcc[f.index]),
                                                  g.constant(audio.raw[f.index]))
                               .feature);
    for (ad::Tensor* t : {&c.f_audio, &c.f_emo_attn}) t->requires_grad = false;
    if (corruption.view && corruption.sigma > 0.0) {
      ad::Tensor* target = nullptr;
      switch (*corruption.view) {
        case fusion::View::kAudio: target = &c.f_audio; break;
        case fusion::View::kExp: target = &c.f_exp; break;
        case fusion::View::kTone: target = &c.f_tone; break;
        case fusion::View::kEmotion: target = &c.f_emo_attn; break;
      }
      for (double& v : target->data()) v += corruption.sigma * noise.normal();
    }
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------

BranchModel::BranchModel(Branch branch, const splat::Scene& canonical, const ModelConfig& config,
                         std::uint64_t seed)
    : branch_(branch), config_(config), indices_(canonical.indices_of(branch)) {
  require(!indices_.empty(), std::string(splat::branch_name(branch)) + " branch has no primitives");
  const std::string name(splat::branch_name(branch));
  const std::size_t n = indices_.size();
  const std::size_t z = canonical.color_channels();

  std::vector<Eigen::Vector3d> all_centers;
  for (const auto& p : canonical.primitives()) all_centers.push_back(p.center);
  const std::vector<Eigen::Vector3d> unit = cond::normalize_to_box(all_centers);

  state_ = ad::Tensor::matrix(n, kPrimitiveStateDim);
  ad::Tensor center = ad::Tensor::matrix(n, 3), rotation = ad::Tensor::matrix(n, 4);
  ad::Tensor log_scale = ad::Tensor::matrix(n, 3), opacity = ad::Tensor::matrix(n, 1);
  ad::Tensor color = ad::Tensor::matrix(n, z);
  std::vector<Eigen::Vector3d> positions;
  for (std::size_t k = 0; k < n; ++k) {
    const splat::GaussianPrimitive& p = canonical.primitives()[indices_[k]];
    const Eigen::Vector4d q = p.rotation.normalized();
    for (int a = 0; a < 3; ++a) {
      state_.at(k, a) = unit[indices_[k]][a];
      center.at(k, a) = p.center[a];
      log_scale.at(k, a) = std::log(p.scale[a]);
    }
    for (int a = 0; a < 4; ++a) {
      state_.at(k, 3 + a) = q[a];
      rotation.at(k, a) = q[a];
    }
    opacity.at(k, 0) = logit(p.opacity, 1e-4);
    for (std::size_t c = 0; c < z; ++c) color.at(k, c) = logit(p.color[c], 1e-3);
    positions.push_back(unit[indices_[k]]);
  }
  center_ = ad::Parameter(name + ".center", std::move(center));
  rotation_ = ad::Parameter(name + ".rotation", std::move(rotation));
  log_scale_ = ad::Parameter(name + ".log_scale", std::move(log_scale));
  opacity_logit_ = ad::Parameter(name + ".opacity_logit", std::move(opacity));
  color_logit_ = ad::Parameter(name + ".color_logit", std::move(color));

  fusion::BlockConfig block;
  block.state_dim = kPrimitiveStateDim;
  block.members = config.members;
  block.hidden = config.hidden;
  block.out_dim = config.d_state;
  const std::array<std::size_t, 4> dims{config.dims.audio, config.dims.exp, config.dims.tone,
                                        3 * config.d_code};
  stack_ = fusion::FusionStack(branch, block, dims, seed);

  deform::DecoderConfig dec = config.decoder;
  dec.state_dim = config.d_state;
  dec.hidden = config.hidden;
  Rng dec_rng(seed, "deform." + name);
  decoder_ = deform::DeformDecoder(branch, dec, dec_rng, name + ".decoder");

  if (branch == Branch::kFace) {
    Rng plane_rng(seed, "cond.planes");
    field_.emplace(config.base_resolution, config.d_code, config.dims.emo_attn, plane_rng);
    taps_ = field_->planes().taps(positions);
  }
}

BranchModel::Vars BranchModel::forward(ad::Graph& g, const FrameConditioning& frame) {
  Vars v;
  const ad::Var state = g.constant(state_);
  std::array<std::optional<ad::Var>, 4> features;
  features[static_cast<std::size_t>(fusion::View::kAudio)] = g.constant(frame.f_audio);
  features[static_cast<std::size_t>(fusion::View::kExp)] = g.constant(frame.f_exp);
  features[static_cast<std::size_t>(fusion::View::kTone)] = g.constant(frame.f_tone);
  if (field_)
    features[static_cast<std::size_t>(fusion::View::kEmotion)] =
        field_->encode(g, taps_, g.constant(frame.f_emo_attn));
  v.fusion = stack_.forward(g, state, features, config_.mode);
  v.delta = decoder_.forward(g, v.fusion.fused.mean);
  const deform::DeformedVars d = deform::apply_delta(g, g.param(center_), g.param(rotation_),
                                                     g.param(log_scale_), v.delta);
  v.center = d.center;
  v.rotation = d.rotation;
  v.scale = d.scale;
  v.rotation_fallbacks = d.rotation_fallbacks;
  v.opacity = sigmoid(g, g.param(opacity_logit_));
  v.color = sigmoid(g, g.param(color_logit_));
  return v;
}

std::vector<splat::GaussianPrimitive> BranchModel::primitives(const ad::Graph& g,
                                                              const Vars& v) const {
  const ad::Tensor &c = g.value(v.center), &r = g.value(v.rotation), &s = g.value(v.scale);
  const ad::Tensor &o = g.value(v.opacity), &col = g.value(v.color);
  std::vector<splat::GaussianPrimitive> out(indices_.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    splat::GaussianPrimitive& p = out[k];
    p.center = Eigen::Vector3d(c.at(k, 0), c.at(k, 1), c.at(k, 2));
    p.scale = Eigen::Vector3d(s.at(k, 0), s.at(k, 1), s.at(k, 2));
    p.rotation = Eigen::Vector4d(r.at(k, 0), r.at(k, 1), r.at(k, 2), r.at(k, 3));
    p.opacity = o.at(k, 0);
    p.color.assign(col.data().begin() + k * col.cols(), col.data().begin() + (k + 1) * col.cols());
  }
  return out;
}

void BranchModel::seeds(const Vars& v, std::span<const splat::PrimitiveGrad> grads,
                        std::vector<std::vector<double>>& storage,
                        std::vector<ad::Seed>& out) const {
  require(grads.size() == indices_.size(), "render gradient count != branch size");
  const std::size_t n = grads.size();
  const std::size_t z = n == 0 ? 0 : grads[0].color.size();
  std::vector<double> center(n * 3), rotation(n * 4), scale(n * 3), opacity(n), color(n * z);
  for (std::size_t k = 0; k < n; ++k) {
    for (int a = 0; a < 3; ++a) {
      center[k * 3 + a] = grads[k].center[a];
      scale[k * 3 + a] = grads[k].scale[a];
    }
    for (int a = 0; a < 4; ++a) rotation[k * 4 + a] = grads[k].rotation[a];
    opacity[k] = grads[k].opacity;
    for (std::size_t c = 0; c < z; ++c) color[k * z + c] = grads[k].color[c];
  }
  // Reserve up front so earlier spans stay valid.
  storage.reserve(storage.size() + 5);
  const ad::Var vars[5] = {v.center, v.rotation, v.scale, v.opacity, v.color};
  std::vector<double>* bufs[5] = {&center, &rotation, &scale, &opacity, &color};
  for (int i = 0; i < 5; ++i) {
    storage.push_back(std::move(*bufs[i]));
    out.push_back({vars[i], storage.back()});
  }
}

std::vector<ad::Parameter*> BranchModel::static_parameters() {
  return {&center_, &rotation_, &log_scale_, &opacity_logit_, &color_logit_};
}

std::vector<ad::Parameter*> BranchModel::network_parameters() {
  std::vector<ad::Parameter*> out = stack_.parameters();
  append(out, decoder_.parameters());
  if (field_)
    for (std::size_t s = 0; s < 3; ++s) out.push_back(&field_->scale_projection(s));
  return out;
}

std::vector<ad::Parameter*> BranchModel::plane_parameters() {
  if (!field_) return {};
  return field_->planes().parameters();
}

std::vector<ad::Parameter*> BranchModel::parameters() {
  std::vector<ad::Parameter*> out = static_parameters();
  append(out, network_parameters());
  append(out, plane_parameters());
  return out;
}

Model::Model(const splat::Scene& canonical, const ModelConfig& cfg, int sample_rate,
             std::uint64_t seed)
    : config(cfg),
      conditioner(cfg, sample_rate, seed),
      face(Branch::kFace, canonical, cfg, seed),
      mouth(Branch::kMouth, canonical, cfg, seed) {}

std::vector<ad::Parameter*> Model::parameters() {
  std::vector<ad::Parameter*> out = conditioner.parameters();
  append(out, face.parameters());
  append(out, mouth.parameters());
  return out;
}

JointVars forward_joint(ad::Graph& g, Model& model, const FrameConditioning& frame) {
  return {model.face.forward(g, frame), model.mouth.forward(g, frame)};
}

std::vector<splat::GaussianPrimitive> joint_primitives(const ad::Graph& g, Model& model,
                                                       const JointVars& v) {
  const auto face = model.face.primitives(g, v.face);
  const auto mouth = model.mouth.primitives(g, v.mouth);
  std::vector<splat::GaussianPrimitive> out(face.size() + mouth.size());
  for (std::size_t k = 0; k < face.size(); ++k) out[model.face.scene_indices()[k]] = face[k];
  for (std::size_t k = 0; k < mouth.size(); ++k) out[model.mouth.scene_indices()[k]] = mouth[k];
  return out;
}

namespace {
constexpr char kCheckpointMagic[8] = {'U', 'D', 'G', 'S', 'C', 'K', 'P', '1'};

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path, std::span<ad::Parameter* const> params) {
  std::set<std::string> names;
  for (const ad::Parameter* p : params)
    require(names.insert(p->name).second, "duplicate parameter name " + p->name);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u64(out, params.size());
  for (const ad::Parameter* p : params) {
    put_u64(out, p->name.size());
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u64(out, p->value.rows());
    put_u64(out, p->value.cols());
    out.write(reinterpret_cast<const char*>(p->value.data().data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw ValidationError("failed writing checkpoint " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, std::span<ad::Parameter* const> params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  require(in && std::memcmp(magic, kCheckpointMagic, sizeof magic) == 0,
          path.string() + " is not a checkpoint");
  const std::uint64_t count = get_u64(in);
  std::map<std::string, std::pair<std::array<std::uint64_t, 2>, std::vector<double>>> stored;
  for (std::uint64_t i = 0; i < count && in; ++i) {
    const std::uint64_t len = get_u64(in);
    require(in && len < 4096, "corrupt checkpoint " + path.string());
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    const std::uint64_t rows = get_u64(in), cols = get_u64(in);
    require(in && rows * cols < (1ULL << 32), "corrupt checkpoint " + path.string());
    std::vector<double> data(rows * cols);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    require(static_cast<bool>(in), "truncated checkpoint " + path.string());
    stored[name] = {{rows, cols}, std::move(data)};
  }
  for (ad::Parameter* p : params) {
    auto it = stored.find(p->name);
    require(it != stored.end(), "checkpoint lacks parameter " + p->name);
    require(it->second.first[0] == p->value.rows() && it->second.first[1] == p->value.cols(),
            "checkpoint shape mismatch for " + p->name);
    std::copy(it->second.second.begin(), it->second.second.end(), p->value.data().begin());
  }
}

std::uint64_t parameter_hash(std::span<ad::Parameter* const> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const ad::Parameter* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data().data());
    for (std::size_t i = 0; i < p->value.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace udgs::train
