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

#ifndef FEDKRSO_PARTITIONER_H_
#define FEDKRSO_PARTITIONER_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedkrso/dataset.h"
#include "fedkrso/random.h"

namespace fedkrso {

enum class PartitionMode { kIid, kDirichlet };

std::string_view PartitionModeName(PartitionMode mode);
PartitionMode ParsePartitionMode(std::string_view name);

struct PartitionSpec {
  PartitionMode mode = PartitionMode::kIid;
  double alpha = 0.5;  // dirichlet only
  int num_clients = 10;
  Seed seed{0};

  void Validate() const;
};

inline constexpr int kMaxPartitionAttempts = 16;

// Example indices per client, each list ascending.
using ShardIndices = std::vector<std::vector<std::size_t>>;

// IID: a shuffled round-robin-sized split, sizes differ by at most one.
// Dirichlet: for each class, proportions over clients ~ Dir(alpha 1_N); the
// class's shuffled examples are cut at the rounded cumulative proportions.
// Redrawn up to kMaxPartitionAttempts times until every shard is non-empty.
ShardIndices Split(const Dataset& data, const PartitionSpec& spec);

std::vector<Dataset> MaterializeShards(const Dataset& data,
                                       const ShardIndices& shards);

struct HeterogeneityReport {
  int num_classes = 0;
  std::vector<std::vector<std::int64_t>> histograms;  // [client][class]
  std::vector<double> global_distribution;
  std::vector<double> tv_distances;  // per client, against the pooled labels
  double mean_tv = 0.0;
};

HeterogeneityReport ComputeHeterogeneity(std::span<const Dataset> shards);

// {"dataset_size": n, "shards": [[i, ...], ...]}
std::string ShardsToJson(const ShardIndices& shards, std::size_t dataset_size);
// Rejects lists that are not a partition of [0, dataset_size).
ShardIndices ShardsFromJson(std::string_view json, std::size_t dataset_size);

std::string HeterogeneityToJson(const HeterogeneityReport& report);

}  // namespace fedkrso

#endif  // FEDKRSO_PARTITIONER_H_
