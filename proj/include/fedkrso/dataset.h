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

#ifndef FEDKRSO_DATASET_H_
#define FEDKRSO_DATASET_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedkrso/weights.h"

namespace fedkrso {

// Row-per-example dataset. Classification data carries integer labels and
// one-hot `targets`; regression data leaves `labels` empty.
struct Dataset {
  Matrix features;  // m x d_in
  Matrix targets;   // m x d_out
  std::vector<int> labels;
  int num_classes = 0;

  std::int64_t size() const { return features.rows(); }
  bool labeled() const { return num_classes > 0; }

  Dataset Subset(std::span<const std::size_t> indices) const;
};

struct Batch {
  Matrix inputs;
  Matrix targets;

  std::int64_t size() const { return inputs.rows(); }
};

Batch MakeBatch(const Dataset& data, std::span<const std::size_t> indices);
Batch FullBatch(const Dataset& data);

// Binary layout, little-endian:
//   8 bytes  magic "FKRSODS1"
//   u64      rows, feature_dim, target_dim, num_classes (0 = unlabeled)
//   f64      features, row-major (rows * feature_dim)
//   f64      targets, row-major (rows * target_dim)
//   i64      labels (rows), present only when num_classes > 0
void WriteDataset(const Dataset& data, const std::string& path);
Dataset ReadDataset(const std::string& path);

}  // namespace fedkrso

#endif  // FEDKRSO_DATASET_H_
