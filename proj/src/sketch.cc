// Copyright 2026 The FedKRSO Authors.
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

#include "fedkrso/sketch.h"

#include <cmath>
#include <string>

#include <Eigen/QR>

#include "fedkrso/errors.h"

namespace fedkrso {

std::string_view SketchKindName(SketchKind kind) {
  switch (kind) {
    case SketchKind::kGaussian:
      return "gaussian";
    case SketchKind::kRowOrthonormalScaled:
      return "orthonormal";
  }
  return "unknown";
}

SketchKind ParseSketchKind(std::string_view name) {
  if (name == "gaussian") return SketchKind::kGaussian;
  if (name == "orthonormal" || name == "row-orthonormal-scaled") {
    return SketchKind::kRowOrthonormalScaled;
  }
  throw InvalidConfigurationError("unknown sketch kind '" + std::string(name) +
                                  "'");
}

SeedPool MakeSeedPool(Seed master_seed, int round, int num_seeds) {
  if (num_seeds < 1) {
    throw InvalidConfigurationError("seed pool size K must be >= 1");
  }
  if (round < 0) throw InvalidConfigurationError("round must be >= 0");
  SeedPool pool;
  pool.round = round;
  pool.seeds.reserve(num_seeds);
  for (int k = 0; k < num_seeds; ++k) {
    pool.seeds.push_back(DeriveSeed(master_seed, StreamTag::kSeedPool,
                                    static_cast<std::uint64_t>(round),
                                    static_cast<std::uint64_t>(k)));
  }
  return pool;
}

ProjectionMatrix GenerateProjection(Seed seed, std::int64_t rank,
                                    std::int64_t cols, SketchKind kind,
                                    int layer_index) {
  if (rank < 1 || cols < 1) {
    throw InvalidConfigurationError("projection rank and width must be >= 1");
  }
  if (kind == SketchKind::kRowOrthonormalScaled && rank > cols) {
    throw InvalidConfigurationError(
        "row-orthonormal sketch needs r <= d_n (r=" + std::to_string(rank) +
        ", d_n=" + std::to_string(cols) + ")");
  }
  RandomStream rng(DeriveSeed(seed, StreamTag::kProjection,
                              static_cast<std::uint64_t>(layer_index)));
  ProjectionMatrix p;
  p.kind = kind;
  p.seed = seed;
  p.entries.resize(rank, cols);
  // Row-major fill so the bitstream does not depend on Eigen's storage order.
  for (std::int64_t i = 0; i < rank; ++i) {
    for (std::int64_t j = 0; j < cols; ++j) p.entries(i, j) = rng.NextGaussian();
  }

  if (kind == SketchKind::kGaussian) {
    p.entries *= 1.0 / std::sqrt(static_cast<double>(rank));
    return p;
  }

  // Thin QR of the d_n x r transpose. Flipping columns so diag(R) > 0 makes
  // the spanned subspace Haar-distributed.
  Eigen::HouseholderQR<Matrix> qr(p.entries.transpose());
  Matrix q = qr.householderQ() * Matrix::Identity(cols, rank);
  const Matrix& r_factor = qr.matrixQR();
  for (std::int64_t i = 0; i < rank; ++i) {
    if (r_factor(i, i) < 0.0) q.col(i) *= -1.0;
  }
  p.entries = std::sqrt(static_cast<double>(cols) / static_cast<double>(rank)) *
              q.transpose();
  return p;
}

void CheckSketchSpec(const SketchSpec& spec,
                     const std::vector<LayerShape>& shapes) {
  if (spec.rank < 1) throw InvalidConfigurationError("sketch rank r must be >= 1");
  if (spec.kind != SketchKind::kRowOrthonormalScaled) return;
  for (const LayerShape& s : shapes) {
    if (spec.rank > s.cols) {
      throw InvalidConfigurationError(
          "row-orthonormal sketch needs r <= d_n for every layer (r=" +
          std::to_string(spec.rank) + ", d_n=" + std::to_string(s.cols) + ")");
    }
  }
}

std::vector<ProjectionMatrix> GenerateLayerProjections(
    Seed seed, const std::vector<LayerShape>& shapes, const SketchSpec& spec) {
  CheckSketchSpec(spec, shapes);
  std::vector<ProjectionMatrix> out;
  out.reserve(shapes.size());
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    out.push_back(GenerateProjection(seed, spec.rank, shapes[l].cols, spec.kind,
                                     static_cast<int>(l)));
  }
  return out;
}

}  // namespace fedkrso
