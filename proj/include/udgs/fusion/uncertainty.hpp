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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "udgs/ad/graph.hpp"
#include "udgs/ad/mlp.hpp"
#include "udgs/splat/gaussian.hpp"

namespace udgs::fusion {

enum class View : std::uint8_t { kAudio, kExp, kTone, kEmotion };
inline constexpr std::array<View, 4> kAllViews{View::kAudio, View::kExp, View::kTone,
                                               View::kEmotion};
std::string_view view_name(View view);

/// Views consumed by a branch: the mouth branch has no emotion view.
std::vector<View> branch_views(splat::Branch branch);

enum class FusionMode : std::uint8_t { kUncertainty, kUniform };
std::string_view fusion_mode_name(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view name);

struct BlockConfig {
  std::size_t state_dim = 7;     // primitive-state input; ignored when feature_only
  std::size_t feature_dim = 32;  // view feature input
  bool feature_only = false;     // the emotion view sees its feature alone
  std::size_t members = 10;      // T
  std::size_t hidden = 64;
  std::size_t out_dim = 32;      // D_state

  std::size_t input_dim() const { return (feature_only ? 0 : state_dim) + feature_dim; }
};

/// Graph handles of one member's prediction: mu [P x D], sigma [P x D] > 0.
struct MemberVars {
  ad::Var mu;
  ad::Var sigma;
};

/// Graph handles of an aggregated block output (all [P x D]).
struct StateVars {
  ad::Var mean;      // mu_hat
  ad::Var variance;  // sigma_hat = AU + EU
  ad::Var eu;
  ad::Var au;
};

/// One ensemble member: shared relu trunk with a mean head and a softplus
/// variance head.
struct UncertaintyMember {
  ad::MlpBlock trunk;
  ad::MlpBlock mu_head;
  ad::MlpBlock sigma_head;

  std::vector<ad::Parameter*> parameters();
};

/// T independently initialized members serving one view.
class UncertaintyBlock {
 public:
  UncertaintyBlock() = default;
  /// Member t draws its weights from stream "<prefix>.member<t>".
  UncertaintyBlock(View view, const BlockConfig& config, std::uint64_t seed,
                   const std::string& prefix);

  View view() const { return view_; }
  const BlockConfig& config() const { return config_; }
  std::size_t members() const { return members_.size(); }
  UncertaintyMember& member(std::size_t t) { return members_[t]; }
  std::vector<ad::Parameter*> parameters();

  /// state [P x state_dim] (unused for feature-only blocks); feature is
  /// [1 x feature_dim] shared by all primitives, or [P x feature_dim].
  MemberVars member_forward(ad::Graph& graph, std::size_t t, ad::Var state, ad::Var feature);
  StateVars forward(ad::Graph& graph, ad::Var state, ad::Var feature);

 private:
  View view_ = View::kAudio;
  BlockConfig config_;
  std::vector<UncertaintyMember> members_;
};

/// mu_hat = mean mu_t; EU = (1/T) sum (mu_t - mu_hat)^2; AU = mean sigma_t;
/// sigma_hat = AU + EU. Throws ValidationError for T < 2.
StateVars aggregate(ad::Graph& graph, std::span<const MemberVars> members);

struct FusedVars {
  ad::Var mean;
  ad::Var variance;
};

/// Uncertainty mode: Sigma = 1 / sum(1/sigma_hat_i), mu = Sigma * sum(mu_hat_i / sigma_hat_i).
/// Uniform mode: mu = mean of mu_hat_i, Sigma = sum(sigma_hat_i) / N^2.
FusedVars fuse(ad::Graph& graph, std::span<const StateVars> views, FusionMode mode);

/// Mean over entries of 0.5 * ((mu_hat - target)^2 / sigma_hat + log sigma_hat),
/// summed over views; `target` is treated as a constant.
ad::Var nll_regularizer(ad::Graph& graph, std::span<const StateVars> views, ad::Var target);

// Plain-vector forms of the same algebra, used by diagnostics and tests.

struct StateDistribution {
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> eu;
  std::vector<double> au;

  /// Throws ValidationError when shapes differ or a floor is violated.
  void validate() const;
};

struct FusedState {
  std::vector<double> mean;
  std::vector<double> variance;
};

StateDistribution block_aggregate(std::span<const std::vector<double>> mu,
                                  std::span<const std::vector<double>> sigma);
FusedState gaussian_fuse(std::span<const StateDistribution> views);
FusedState uniform_fuse(std::span<const StateDistribution> views);

/// The blocks of one branch plus the fusion rule.
class FusionStack {
 public:
  FusionStack() = default;
  /// `feature_dims` indexed by View.
  FusionStack(splat::Branch branch, const BlockConfig& base,
              const std::array<std::size_t, 4>& feature_dims, std::uint64_t seed);

  splat::Branch branch() const { return branch_; }
  const std::vector<View>& views() const { return views_; }
  UncertaintyBlock& block(View view);
  std::vector<ad::Parameter*> parameters();

  struct Result {
    FusedVars fused;
    std::vector<StateVars> per_view;  // same order as views()
  };
  /// `features` indexed by View; each configured view must be present.
  Result forward(ad::Graph& graph, ad::Var state,
                 const std::array<std::optional<ad::Var>, 4>& features, FusionMode mode);

 private:
  splat::Branch branch_ = splat::Branch::kFace;
  std::vector<View> views_;
  std::vector<UncertaintyBlock> blocks_;
};

/// Text table with one line per (primitive, view): dimension-averaged
/// mu_hat, sigma_hat, EU, AU.
void write_uncertainty_table(const std::filesystem::path& path, const ad::Graph& graph,
                             std::span<const View> views, std::span<const StateVars> per_view,
                             std::span<const std::size_t> primitive_ids);

}  // namespace udgs::fusion
