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

#include "udgs/cond/attention.hpp"

#include <cmath>

#include "udgs/core/error.hpp"

namespace udgs::cond {

EmotionEncoder::EmotionEncoder(const EmotionEncoderConfig& config, Rng& rng) : config_(config) {
  using ad::Activation;
  enc_spec_ = ad::MlpBlock("emotion.enc_spec", {config.spectrogram_bins, config.hidden, config.key_dim},
                           Activation::kRelu, Activation::kIdentity, rng);
  enc_mfcc_ = ad::MlpBlock("emotion.enc_mfcc", {config.n_mfcc, config.hidden, config.key_dim},
                           Activation::kRelu, Activation::kIdentity, rng);
  query_ = ad::Parameter("emotion.query", ad::glorot_uniform(config.key_dim, 1, 1, config.key_dim, rng));
  wav_proj_ = ad::Parameter("emotion.wav_proj",
                            ad::glorot_uniform(config.frame_len, config.wav_dim, config.frame_len,
                                               config.wav_dim, rng));
  out_proj_ = ad::Parameter("emotion.out_proj",
                            ad::glorot_uniform(config.wav_dim, config.out_dim, config.wav_dim,
                                               config.out_dim, rng));
}

EmotionEncoder::Output EmotionEncoder::attn_reweight(ad::Graph& g, ad::Var spec, ad::Var mfcc,
                                                     ad::Var raw) {
  const std::size_t frames = g.value(spec).rows();
  require(frames >= 1, "attn_reweight needs at least one frame");
  require(g.value(mfcc).rows() == frames && g.value(raw).rows() == frames,
          "attn_reweight: streams disagree on frame count");
  require(g.value(raw).cols() == config_.frame_len, "attn_reweight: raw frame length mismatch");
  require(enc_spec_.out_dim() == query_.value.cols() && enc_mfcc_.out_dim() == query_.value.cols(),
          "attn_reweight: encoder key width does not match the query");
  const ad::Var keys = g.add(enc_spec_.forward(g, spec), enc_mfcc_.forward(g, mfcc));
  const ad::Var logits = g.scale(g.sum(g.mul(keys, g.param(query_)), 1),
                                 1.0 / std::sqrt(static_cast<double>(config_.key_dim)));
  const ad::Var weights = g.softmax(logits, 0);
  const ad::Var embed = g.matmul(raw, g.param(wav_proj_));
  const ad::Var pooled = g.sum(g.mul(embed, weights), 0);
  return {g.matmul(pooled, g.param(out_proj_)), weights};
}

std::vector<ad::Parameter*> EmotionEncoder::parameters() {
  std::vector<ad::Parameter*> out = enc_spec_.parameters();
  for (ad::Parameter* p : enc_mfcc_.parameters()) out.push_back(p);
  out.push_back(&query_);
  out.push_back(&wav_proj_);
  out.push_back(&out_proj_);
  return out;
}

EmotionHeads::EmotionHeads(std::size_t in_dim, std::size_t classes, Rng& rng)
    : classifier("emotion.classifier", {in_dim, classes}, ad::Activation::kIdentity,
                 ad::Activation::kIdentity, rng),
      expression("emotion.expression", {in_dim, in_dim}, ad::Activation::kIdentity,
                 ad::Activation::kIdentity, rng) {}

std::vector<ad::Parameter*> EmotionHeads::parameters() {
  std::vector<ad::Parameter*> out = classifier.parameters();
  for (ad::Parameter* p : expression.parameters()) out.push_back(p);
  return out;
}

AudioEncoder::AudioEncoder(std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : weight_("audio.proj.w", ad::glorot_uniform(in_dim, out_dim, in_dim, out_dim, rng)),
      bias_("audio.proj.b", ad::Tensor::matrix(1, out_dim)) {}

ad::Var AudioEncoder::forward(ad::Graph& g, ad::Var window) {
  require(g.value(window).cols() == in_dim(), "AudioEncoder: window width mismatch");
  return g.add(g.matmul(window, g.param(weight_)), g.param(bias_));
}

}  // namespace udgs::cond
