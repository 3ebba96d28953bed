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

#ifndef FEDKRSO_WEIGHTS_H_
#define FEDKRSO_WEIGHTS_H_

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace fedkrso {

using Matrix = Eigen::MatrixXd;

// Ordered list of trainable weight matrices, one per layer. Layer l has shape
// d_m(l) x d_n(l); the sketch acts on the column (d_n) side.
using WeightSet = std::vector<Matrix>;

struct LayerShape {
  std::int64_t rows = 0;  // d_m
  std::int64_t cols = 0;  // d_n

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

std::vector<LayerShape> ShapesOf(const WeightSet& weights);
WeightSet ZerosLike(const std::vector<LayerShape>& shapes);

double FrobeniusNormSquared(const WeightSet& weights);

// ||a - b||_F / ||b||_F, falling back to the absolute distance when b = 0.
double RelativeFrobeniusDistance(const WeightSet& a, const WeightSet& b);

bool AllFinite(const WeightSet& weights);

// Throws InvalidArgumentError unless both sets have identical layer shapes.
void CheckSameShapes(const WeightSet& a, const WeightSet& b, const char* what);

}  // namespace fedkrso

#endif  // FEDKRSO_WEIGHTS_H_
