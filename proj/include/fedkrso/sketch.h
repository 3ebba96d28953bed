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

// Seeded projection matrices and the per-round seed pool.
//
// The server never ships a projection matrix. It broadcasts K seeds per round,
// and every party regenerates P_k = GenerateProjection(seed_k, ...) on demand.
// Both kinds satisfy E[P^T P] = I:
//
//   kGaussian               entries i.i.d. N(0, 1/r)
//   kRowOrthonormalScaled   sqrt(d_n / r) * (r orthonormal rows spanning a
//                           uniformly random subspace), so P P^T = (d_n/r) I_r

#ifndef FEDKRSO_SKETCH_H_
#define FEDKRSO_SKETCH_H_

#include <cstdint>
#include <string_view>
#include <vector>

#include "fedkrso/random.h"
#include "fedkrso/weights.h"

namespace fedkrso {

enum class SketchKind { kGaussian, kRowOrthonormalScaled };

std::string_view SketchKindName(SketchKind kind);
// Accepts "gaussian" and "orthonormal" / "row-orthonormal-scaled".
SketchKind ParseSketchKind(std::string_view name);

struct SeedPool {
  int round = 0;
  std::vector<Seed> seeds;

  int size() const { return static_cast<int>(seeds.size()); }
};

// Seeds are drawn independently per slot and are not deduplicated.
SeedPool MakeSeedPool(Seed master_seed, int round, int num_seeds);

struct ProjectionMatrix {
  Matrix entries;  // r x d_n
  SketchKind kind = SketchKind::kGaussian;
  Seed seed;

  std::int64_t rank() const { return entries.rows(); }
  std::int64_t cols() const { return entries.cols(); }
};

ProjectionMatrix GenerateProjection(Seed seed, std::int64_t rank,
                                    std::int64_t cols, SketchKind kind,
                                    int layer_index);

struct SketchSpec {
  std::int64_t rank = 4;
  SketchKind kind = SketchKind::kGaussian;
};

// One projection per layer, sized to each layer's column count.
std::vector<ProjectionMatrix> GenerateLayerProjections(
    Seed seed, const std::vector<LayerShape>& shapes, const SketchSpec& spec);

// Validates spec against layer shapes without generating anything.
void CheckSketchSpec(const SketchSpec& spec,
                     const std::vector<LayerShape>& shapes);

}  // namespace fedkrso

#endif  // FEDKRSO_SKETCH_H_
