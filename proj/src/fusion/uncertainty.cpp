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

#include "udgs/fusion/uncertainty.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "udgs/core/error.hpp"
#include "udgs/core/rng.hpp"

namespace udgs::fusion {

std::string_view view_name(View view) {
  switch (view) {
    case View::kAudio:
      return "f_audio";
    case View::kExp:
      return "f_exp";
    case View::kTone:
      return "f_tone";
    case View::kEmotion:
      return "f_emotion";
  }
  return "?";
}

std::vector<View> branch_views(splat::Branch branch) {
  if (branch == splat::Branch::kMouth) return {View::kAudio, View::kExp, View::kTone};
  return {kAllViews.begin(), kAllViews.end()};
}

std::string_view fusion_mode_name(FusionMode mode) {
  return mode == FusionMode::kUniform ? "uniform" : "uncertainty";
}

FusionMode parse_fusion_mode(std::string_view name) {
  if (name == "uncertainty") return FusionMode::kUncertainty;
  if (name == "uniform") return FusionMode::kUniform;
  throw ValidationError("unknown fusion mode '" + std::string(name) +
                        "' (expected uncertainty or uniform)");
}

std::vector<ad::Parameter*> UncertaintyMember::parameters() {
  std::vector<ad::Parameter*> out = trunk.parameters();
  for (ad::Parameter* p : mu_head.parameters()) out.push_back(p);
  for (ad::Parameter* p : sigma_head.parameters()) out.push_back(p);
  return out;
}

UncertaintyBlock::UncertaintyBlock(View view, const BlockConfig& config, std::uint64_t seed,
                                   const std::string& prefix)
    : view_(view), config_(config) {
  require(config.members >= 2, "uncertainty block needs at least 2 members");
  require(config.feature_dim > 0 && config.hidden > 0 && config.out_dim > 0,
          "uncertainty block widths must be positive");
  using ad::Activation;
  members_.reserve(config.members);
  for (std::size_t t = 0; t < config.members; ++t) {
    const std::string name = prefix + ".member" + std::to_string(t);
    Rng rng(seed, name);
    UncertaintyMember m;
    m.trunk = ad::MlpBlock(name + ".trunk", {config.input_dim(), config.hidden, config.hidden},
                           Activation::kRelu, Activation::kRelu, rng);
    m.mu_head = ad::MlpBlock(name + ".mu", {config.hidden, config.out_dim}, Activation::kIdentity,
                             Activation::kIdentity, rng);
    m.sigma_head = ad::MlpBlock(name + ".sigma", {config.hidden, config.out_dim},
                                Activation::kIdentity, Activation::kSoftplus, rng);
    members_.push_back(std::move(m));
  }
}

std::vector<ad::Parameter*> UncertaintyBlock::parameters() {
  std::vector<ad::Parameter*> out;
  for (UncertaintyMember& m : members_)
    for (ad::Parameter* p : m.parameters()) out.push_back(p);
  return out;
}

MemberVars UncertaintyBlock::member_forward(ad::Graph& g, std::size_t t, ad::Var state,
                                            ad::Var feature) {
  require(t < members_.size(), "member index out of range");
  require(g.value(feature).cols() == config_.feature_dim,
          std::string(view_name(view_)) + ": feature width " +
              std::to_string(g.value(feature).cols()) + " != " +
              std::to_string(config_.feature_dim));
  UncertaintyMember& m = members_[t];
  ad::Var h{};
  if (config_.feature_only) {
    h = m.trunk.forward(g, feature);
  } else {
    require(g.value(state).cols() == config_.state_dim,
            std::string(view_name(view_)) + ": state width mismatch");
    h = m.trunk.forward_split(g, state, feature);
  }
  return {m.mu_head.forward(g, h), m.sigma_head.forward(g, h)};
}

StateVars UncertaintyBlock::forward(ad::Graph& g, ad::Var state, ad::Var feature) {
  std::vector<MemberVars> outs;
  outs.reserve(members_.size());
  for (std::size_t t = 0; t < members_.size(); ++t)
    outs.push_back(member_forward(g, t, state, feature));
  return aggregate(g, outs);
}

StateVars aggregate(ad::Graph& g, std::span<const MemberVars> members) {
  require(members.size() >= 2, "aggregate needs T >= 2 members");
  const double inv_t = 1.0 / static_cast<double>(members.size());
  // Means taken as offsets from the first member, so identical members give
  // exactly that member and an exactly zero spread.
  ad::Var mu_shift{}, sigma_shift{};
  for (std::size_t t = 1; t < members.size(); ++t) {
    const ad::Var dm = g.sub(members[t].mu, members[0].mu);
    const ad::Var ds = g.sub(members[t].sigma, members[0].sigma);
    mu_shift = t == 1 ? dm : g.add(mu_shift, dm);
    sigma_shift = t == 1 ? ds : g.add(sigma_shift, ds);
  }
  StateVars out;
  out.mean = g.add(members[0].mu, g.scale(mu_shift, inv_t));
  ad::Var spread{};
  for (std::size_t t = 0; t < members.size(); ++t) {
    const ad::Var sq = g.pow(g.sub(members[t].mu, out.mean), 2.0);
    spread = t == 0 ? sq : g.add(spread, sq);
  }
  out.eu = g.scale(spread, inv_t);
  out.au = g.add(members[0].sigma, g.scale(sigma_shift, inv_t));
  out.variance = g.add(out.au, out.eu);
  return out;
}

FusedVars fuse(ad::Graph& g, std::span<const StateVars> views, FusionMode mode) {
  require(!views.empty(), "fuse needs at least one view");
  FusedVars out;
  if (mode == FusionMode::kUniform) {
    const double n = static_cast<double>(views.size());
    ad::Var mean_sum = views[0].mean, var_sum = views[0].variance;
    for (std::size_t i = 1; i < views.size(); ++i) {
      mean_sum = g.add(mean_sum, views[i].mean);
      var_sum = g.add(var_sum, views[i].variance);
    }
    out.mean = g.scale(mean_sum, 1.0 / n);
    out.variance = g.scale(var_sum, 1.0 / (n * n));
    return out;
  }
  ad::Var precision{}, weighted{};
  for (std::size_t i = 0; i < views.size(); ++i) {
    const ad::Var p = g.pow(views[i].variance, -1.0);
    const ad::Var pm = g.mul(p, views[i].mean);
    precision = i == 0 ? p : g.add(precision, p);
    weighted = i == 0 ? pm : g.add(weighted, pm);
  }
  out.variance = g.pow(precision, -1.0);
  out.mean = g.mul(out.variance, weighted);
  return out;
}

ad::Var nll_regularizer(ad::Graph& g, std::span<const StateVars> views, ad::Var target) {
  require(!views.empty(), "nll_regularizer needs at least one view");
  const ad::Var fixed = g.constant(g.value(target));
  ad::Var total{};
  for (std::size_t i = 0; i < views.size(); ++i) {
    const ad::Var sq = g.pow(g.sub(views[i].mean, fixed), 2.0);
    const ad::Var term = g.add(g.mul(sq, g.pow(views[i].variance, -1.0)), g.log(views[i].variance));
    const ad::Var m = g.scale(g.mean(term), 0.5);
    total = i == 0 ? m : g.add(total, m);
  }
  return total;
}

void StateDistribution::validate() const {
  const std::size_t d = mean.size();
  require(variance.size() == d && eu.size() == d && au.size() == d,
          "StateDistribution fields differ in length");
  // AU is an average of floored values, so allow one rounding step below the floor.
  const double floor = ad::kVarianceFloor * (1.0 - 1e-12);
  for (std::size_t i = 0; i < d; ++i) {
    require(std::isfinite(mean[i]) && std::isfinite(variance[i]), "non-finite state distribution");
    require(variance[i] >= floor, "state variance below floor");
    require(au[i] >= floor, "aleatoric term below floor");
    require(eu[i] >= 0.0, "negative epistemic term");
  }
}

StateDistribution block_aggregate(std::span<const std::vector<double>> mu,
                                  std::span<const std::vector<double>> sigma) {
  require(mu.size() >= 2, "block_aggregate needs T >= 2 members");
  require(sigma.size() == mu.size(), "block_aggregate: mu/sigma member counts differ");
  const std::size_t d = mu[0].size();
  for (std::size_t t = 0; t < mu.size(); ++t)
    require(mu[t].size() == d && sigma[t].size() == d, "block_aggregate: member width mismatch");
  const double inv_t = 1.0 / static_cast<double>(mu.size());
  StateDistribution out;
  out.mean.assign(d, 0.0);
  out.eu.assign(d, 0.0);
  out.au.assign(d, 0.0);
  out.variance.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double shift = 0.0, sigma_shift = 0.0;
    for (std::size_t t = 1; t < mu.size(); ++t) {
      shift += mu[t][i] - mu[0][i];
      sigma_shift += sigma[t][i] - sigma[0][i];
    }
    out.mean[i] = mu[0][i] + shift * inv_t;
    double spread = 0.0;
    for (std::size_t t = 0; t < mu.size(); ++t) {
      const double dev = mu[t][i] - out.mean[i];
      spread += dev * dev;
    }
    out.eu[i] = spread * inv_t;
    out.au[i] = sigma[0][i] + sigma_shift * inv_t;
    out.variance[i] = out.au[i] + out.eu[i];
  }
  return out;
}

namespace {
std::size_t check_views(std::span<const StateDistribution> views) {
  require(!views.empty(), "fusion needs at least one view");
  const std::size_t d = views[0].mean.size();
  for (const StateDistribution& v : views) {
    v.validate();
    require(v.mean.size() == d, "fusion views disagree on state dimension");
  }
  return d;
}
}  // namespace

FusedState gaussian_fuse(std::span<const StateDistribution> views) {
  const std::size_t d = check_views(views);
  FusedState out{std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t i = 0; i < d; ++i) {
    double precision = 0.0, weighted = 0.0;
    for (const StateDistribution& v : views) {
      const double p = 1.0 / v.variance[i];
      precision += p;
      weighted += p * v.mean[i];
    }
    out.variance[i] = 1.0 / precision;
    out.mean[i] = out.variance[i] * weighted;
  }
  return out;
}

FusedState uniform_fuse(std::span<const StateDistribution> views) {
  const std::size_t d = check_views(views);
  const double n = static_cast<double>(views.size());
  FusedState out{std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t i = 0; i < d; ++i) {
    double ms = 0.0, vs = 0.0;
    for (const StateDistribution& v : views) {
      ms += v.mean[i];
      vs += v.variance[i];
    }
    out.mean[i] = ms * (1.0 / n);
    out.variance[i] = vs * (1.0 / (n * n));
  }
  return out;
}

FusionStack::FusionStack(splat::Branch branch, const BlockConfig& base,
                         const std::array<std::size_t, 4>& feature_dims, std::uint64_t seed)
    : branch_(branch), views_(branch_views(branch)) {
  for (View v : views_) {
    BlockConfig cfg = base;
    cfg.feature_dim = feature_dims[static_cast<std::size_t>(v)];
    cfg.feature_only = v == View::kEmotion;
    blocks_.emplace_back(v, cfg, seed,
                         "fusion." + std::string(splat::branch_name(branch)) + "." +
                             std::string(view_name(v)));
  }
}

UncertaintyBlock& FusionStack::block(View view) {
  for (UncertaintyBlock& b : blocks_)
    if (b.view() == view) return b;
  throw ValidationError(std::string(splat::branch_name(branch_)) + " branch has no " +
                        std::string(view_name(view)) + " block");
}

std::vector<ad::Parameter*> FusionStack::parameters() {
  std::vector<ad::Parameter*> out;
  for (UncertaintyBlock& b : blocks_)
    for (ad::Parameter* p : b.parameters()) out.push_back(p);
  return out;
}

FusionStack::Result FusionStack::forward(ad::Graph& g, ad::Var state,
                                         const std::array<std::optional<ad::Var>, 4>& features,
                                         FusionMode mode) {
  Result out;
  for (UncertaintyBlock& b : blocks_) {
    const auto& f = features[static_cast<std::size_t>(b.view())];
    if (!f) throw ValidationError("missing " + std::string(view_name(b.view())) + " feature for the " +
                                  std::string(splat::branch_name(branch_)) + " branch");
    out.per_view.push_back(b.forward(g, state, *f));
  }
  out.fused = fuse(g, out.per_view, mode);
  return out;
}

void write_uncertainty_table(const std::filesystem::path& path, const ad::Graph& g,
                             std::span<const View> views, std::span<const StateVars> per_view,
                             std::span<const std::size_t> primitive_ids) {
  require(views.size() == per_view.size(), "uncertainty table: view count mismatch");
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "# primitive view mean_mu_hat mean_sigma_hat mean_eu mean_au\n";
  char buf[160];
  for (std::size_t r = 0; r < primitive_ids.size(); ++r) {
    for (std::size_t v = 0; v < views.size(); ++v) {
      const ad::Var fields[4] = {per_view[v].mean, per_view[v].variance, per_view[v].eu,
                                 per_view[v].au};
      double avg[4];
      for (int k = 0; k < 4; ++k) {
        const ad::Tensor& t = g.value(fields[k]);
        require(t.rows() == primitive_ids.size(), "uncertainty table: row count mismatch");
        double s = 0.0;
        for (std::size_t c = 0; c < t.cols(); ++c) s += t.at(r, c);
        avg[k] = s / static_cast<double>(t.cols());
      }
      std::snprintf(buf, sizeof buf, "%zu %s %.9g %.9g %.9g %.9g\n", primitive_ids[r],
                    std::string(view_name(views[v])).c_str(), avg[0], avg[1], avg[2], avg[3]);
      out << buf;
    }
  }
}

}  // namespace udgs::fusion
