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

#include "fedkrso/weights.h"

#include <cmath>
#include <string>

#include "fedkrso/errors.h"

namespace fedkrso {

std::vector<LayerShape> ShapesOf(const WeightSet& weights) {
  std::vector<LayerShape> shapes;
  shapes.reserve(weights.size());
  for (const Matrix& w : weights) shapes.push_back({w.rows(), w.cols()});
  return shapes;
}

WeightSet ZerosLike(const std::vector<LayerShape>& shapes) {
  WeightSet out;
  out.reserve(shapes.size());
  for (const LayerShape& s : shapes) out.push_back(Matrix::Zero(s.rows, s.cols));
  return out;
}

double FrobeniusNormSquared(const WeightSet& weights) {
  double total = 0.0;
  for (const Matrix& w : weights) total += w.squaredNorm();
  return total;
}

double RelativeFrobeniusDistance(const WeightSet& a, const WeightSet& b) {
  CheckSameShapes(a, b, "RelativeFrobeniusDistance");
  double diff = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) diff += (a[l] - b[l]).squaredNorm();
  const double denom = FrobeniusNormSquared(b);
  return denom > 0.0 ? std::sqrt(diff / denom) : std::sqrt(diff);
}

bool AllFinite(const WeightSet& weights) {
  for (const Matrix& w : weights) {
    if (!w.allFinite()) return false;
  }
  return true;
}

void CheckSameShapes(const WeightSet& a, const WeightSet& b, const char* what) {
  if (ShapesOf(a) != ShapesOf(b)) {
    throw InvalidArgumentError(std::string(what) + ": layer shapes differ");
  }
}

}  // namespace fedkrso
