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

#include "udgs/cond/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "udgs/core/error.hpp"
#include "udgs/core/rng.hpp"

namespace udgs::cond {

namespace {

constexpr double kWalkDecay = 0.9;
constexpr double kWalkStep = 0.3;

ad::Tensor random_basis(std::size_t rows, std::uint64_t seed, const char* stream) {
  Rng rng(seed, stream);
  ad::Tensor b = ad::Tensor::matrix(rows, SyntheticFeatures::kBasisTerms);
  const double norm = 1.0 / std::sqrt(static_cast<double>(SyntheticFeatures::kBasisTerms));
  for (double& v : b.data()) v = rng.normal() * norm;
  return b;
}

std::vector<double> apply_basis(const ad::Tensor& basis, double drive) {
  const auto phi = SyntheticFeatures::drive_basis(drive);
  std::vector<double> out(basis.rows(), 0.0);
  for (std::size_t r = 0; r < basis.rows(); ++r)
    for (std::size_t k = 0; k < phi.size(); ++k) out[r] += basis.at(r, k) * phi[k];
  return out;
}

}  // namespace

SyntheticFeatures::SyntheticFeatures(std::uint64_t seed, ViewDims dims)
    : seed_(seed),
      dims_(dims),
      exp_basis_(random_basis(dims.exp, seed, "cond.synth.exp")),
      audio_basis_(random_basis(dims.audio, seed, "cond.synth.audio")),
      emo_basis_(random_basis(dims.emo_attn, seed, "cond.synth.emotion")),
      tone_(dims.tone) {
  Rng rng(seed, "cond.synth.tone");
  for (double& v : tone_) v = rng.normal();
}

std::array<double, SyntheticFeatures::kBasisTerms> SyntheticFeatures::drive_basis(double d) {
  using std::numbers::pi;
  return {d, d * d, std::sin(pi * d), std::cos(pi * d), std::sin(2 * pi * d), std::cos(2 * pi * d)};
}

SyntheticFeatures::Frame SyntheticFeatures::frame(std::size_t index, double drive) const {
  return {expression(drive), tone_, audio_walk(index)};
}

std::vector<double> SyntheticFeatures::expression(double drive) const {
  return apply_basis(exp_basis_, drive);
}

std::vector<double> SyntheticFeatures::audio_walk(std::size_t index) const {
  Rng rng(seed_, "cond.synth.walk");
  std::vector<double> w(dims_.audio, 0.0);
  for (std::size_t f = 0; f <= index; ++f)
    for (double& v : w) v = kWalkDecay * v + kWalkStep * rng.normal();
  return w;
}

std::vector<double> SyntheticFeatures::audio_target(double drive) const {
  return apply_basis(audio_basis_, drive);
}

std::vector<double> SyntheticFeatures::emotion_target(double drive) const {
  return apply_basis(emo_basis_, drive);
}

int SyntheticFeatures::emotion_label(double drive, int classes) {
  require(classes >= 1, "emotion_label: need at least one class");
  const int bin = static_cast<int>(std::floor(drive * classes));
  return std::clamp(bin, 0, classes - 1);
}

void write_feature_table(const std::filesystem::path& path, const std::string& name,
                         const ad::Tensor& table) {
  require(name.find_first_of(" \t\n") == std::string::npos, "feature table name has whitespace");
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write feature table " + path.string());
  out << "# udgs features v1 " << name << ' ' << table.rows() << ' ' << table.cols() << '\n';
  char buf[32];
  for (std::size_t r = 0; r < table.rows(); ++r) {
    out << r;
    for (std::size_t c = 0; c < table.cols(); ++c) {
      std::snprintf(buf, sizeof buf, " %.17g", table.at(r, c));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw ValidationError("failed writing feature table " + path.string());
}

ad::Tensor read_feature_table(const std::filesystem::path& path, std::string* name) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open feature table " + path.string());
  std::string line;
  std::getline(in, line);
  std::istringstream header(line);
  std::string hash, magic, kind, version, table_name;
  std::size_t rows = 0, cols = 0;
  header >> hash >> magic >> kind >> version >> table_name >> rows >> cols;
  if (!header || hash != "#" || magic != "udgs" || kind != "features" || version != "v1")
    throw ValidationError("bad feature table header in " + path.string());
  if (table_name.empty() || rows == 0 || cols == 0)
    throw ValidationError("empty feature table " + path.string());
  ad::Tensor table = ad::Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw ValidationError("truncated feature table " + path.string());
    std::istringstream row(line);
    std::size_t frame = 0;
    row >> frame;
    if (!row || frame != r)
      throw ValidationError("feature table " + path.string() + ": frame index out of order");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!(row >> table.at(r, c)))
        throw ValidationError("feature table " + path.string() + ": short row " + std::to_string(r));
    }
  }
  if (!table.all_finite()) throw ValidationError("non-finite value in " + path.string());
  if (name != nullptr) *name = table_name;
  return table;
}

}  // namespace udgs::cond
