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

#include <vector>

#include "udgs/ad/graph.hpp"
#include "udgs/ad/mlp.hpp"

namespace udgs::cond {

struct EmotionEncoderConfig {
  std::size_t spectrogram_bins = 257;
  std::size_t n_mfcc = 13;
  std::size_t frame_len = 400;
  std::size_t hidden = 32;
  std::size_t key_dim = 16;
  std::size_t wav_dim = 32;  // D_wav
  std::size_t out_dim = 16;  // f_emo_attn
};

/// Spectrogram and MFCC rows act as attention keys that re-weight the
/// per-frame wav embeddings:
///   key_t = enc_spec(spec_t) + enc_mfcc(mfcc_t)
///   w     = softmax_t(key_t . query / sqrt(key_dim))
///   out   = (sum_t w_t * (raw_t W_wav)) W_out
class EmotionEncoder {
 public:
  EmotionEncoder() = default;
  EmotionEncoder(const EmotionEncoderConfig& config, Rng& rng);

  struct Output {
    ad::Var feature;  // [1 x out_dim]
    ad::Var weights;  // [frames x 1]
  };
  /// spec [T x bins], mfcc [T x n_mfcc], raw [T x frame_len].
  Output attn_reweight(ad::Graph& graph, ad::Var spec, ad::Var mfcc, ad::Var raw);

  const EmotionEncoderConfig& config() const { return config_; }
  ad::Parameter& query() { return query_; }
  ad::Parameter& wav_projection() { return wav_proj_; }
  ad::Parameter& out_projection() { return out_proj_; }
  ad::MlpBlock& spectrogram_encoder() { return enc_spec_; }
  ad::MlpBlock& mfcc_encoder() { return enc_mfcc_; }
  std::vector<ad::Parameter*> parameters();

 private:
  EmotionEncoderConfig config_;
  ad::MlpBlock enc_spec_;
  ad::MlpBlock enc_mfcc_;
  ad::Parameter query_;
  ad::Parameter wav_proj_;
  ad::Parameter out_proj_;
};

/// Pretraining heads on top of f_emo_attn: emotion class logits and the
/// expression-feature prediction f_emo.
struct EmotionHeads {
  EmotionHeads() = default;
  EmotionHeads(std::size_t in_dim, std::size_t classes, Rng& rng);
  std::vector<ad::Parameter*> parameters();

  ad::MlpBlock classifier;
  ad::MlpBlock expression;
};

/// Learned linear map from a flattened window of MFCC rows to f_audio.
class AudioEncoder {
 public:
  AudioEncoder() = default;
  AudioEncoder(std::size_t in_dim, std::size_t out_dim, Rng& rng);
  /// window: [1 x in_dim]
  ad::Var forward(ad::Graph& graph, ad::Var window);
  std::vector<ad::Parameter*> parameters() { return {&weight_, &bias_}; }
  std::size_t in_dim() const { return weight_.value.rows(); }

 private:
  ad::Parameter weight_;
  ad::Parameter bias_;
};

}  // namespace udgs::cond
