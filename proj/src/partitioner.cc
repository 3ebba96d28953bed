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

#include "fedkrso/partitioner.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fedkrso/errors.h"

namespace fedkrso {
namespace {

using Json = nlohmann::json;

ShardIndices SplitIid(std::size_t size, const PartitionSpec& spec) {
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  RandomStream rng(DeriveSeed(spec.seed, StreamTag::kPartition));
  rng.Shuffle(std::span<std::size_t>(order));

  const std::size_t n = static_cast<std::size_t>(spec.num_clients);
  ShardIndices shards(n);
  std::size_t begin = 0;
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t count = size / n + (c < size % n ? 1 : 0);
    shards[c].assign(order.begin() + begin, order.begin() + begin + count);
    begin += count;
  }
  return shards;
}

ShardIndices SplitDirichletOnce(const Dataset& data, const PartitionSpec& spec,
                                int attempt) {
  const int n = spec.num_clients;
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    by_class[data.labels[i]].push_back(i);
  }
  RandomStream rng(DeriveSeed(spec.seed, StreamTag::kPartition, 1,
                              static_cast<std::uint64_t>(attempt)));
  ShardIndices shards(n);
  for (std::vector<std::size_t>& members : by_class) {
    rng.Shuffle(std::span<std::size_t>(members));
    const std::vector<double> proportions = rng.NextDirichlet(spec.alpha, n);
    const double count = static_cast<double>(members.size());
    double cumulative = 0.0;
    std::size_t begin = 0;
    for (int c = 0; c < n; ++c) {
      cumulative += proportions[c];
      std::size_t end = c + 1 == n
                            ? members.size()
                            : static_cast<std::size_t>(std::llround(cumulative * count));
      end = std::clamp(end, begin, members.size());
      shards[c].insert(shards[c].end(), members.begin() + begin,
                       members.begin() + end);
      begin = end;
    }
  }
  return shards;
}

}  // namespace

std::string_view PartitionModeName(PartitionMode mode) {
  return mode == PartitionMode::kIid ? "iid" : "dirichlet";
}

PartitionMode ParsePartitionMode(std::string_view name) {
  if (name == "iid") return PartitionMode::kIid;
  if (name == "dirichlet") return PartitionMode::kDirichlet;
  throw InvalidConfigurationError("unknown partition mode '" + std::string(name) +
                                  "'");
}

void PartitionSpec::Validate() const {
  if (num_clients < 1) throw InvalidConfigurationError("N must be >= 1");
  if (mode == PartitionMode::kDirichlet && !(alpha > 0.0 && std::isfinite(alpha))) {
    throw InvalidConfigurationError("dirichlet alpha must be a positive number");
  }
}

ShardIndices Split(const Dataset& data, const PartitionSpec& spec) {
  spec.Validate();
  const std::size_t size = static_cast<std::size_t>(data.size());
  if (size < static_cast<std::size_t>(spec.num_clients)) {
    throw InvalidConfigurationError("dataset has fewer examples than clients");
  }
  ShardIndices shards;
  if (spec.mode == PartitionMode::kIid) {
    shards = SplitIid(size, spec);
  } else {
    if (!data.labeled()) {
      throw InvalidConfigurationError("dirichlet partitioning needs class labels");
    }
    bool ok = false;
    for (int attempt = 0; attempt < kMaxPartitionAttempts && !ok; ++attempt) {
      shards = SplitDirichletOnce(data, spec, attempt);
      ok = std::none_of(shards.begin(), shards.end(),
                        [](const auto& s) { return s.empty(); });
    }
    if (!ok) {
      throw PartitionFailureError(
          "no split with non-empty shards after " +
          std::to_string(kMaxPartitionAttempts) + " attempts (alpha = " +
          std::to_string(spec.alpha) + ", N = " +
          std::to_string(spec.num_clients) + ")");
    }
  }
  for (std::vector<std::size_t>& s : shards) std::sort(s.begin(), s.end());
  return shards;
}

std::vector<Dataset> MaterializeShards(const Dataset& data,
                                       const ShardIndices& shards) {
  std::vector<Dataset> out;
  out.reserve(shards.size());
  for (const std::vector<std::size_t>& s : shards) out.push_back(data.Subset(s));
  return out;
}

HeterogeneityReport ComputeHeterogeneity(std::span<const Dataset> shards) {
  if (shards.empty()) throw InvalidArgumentError("no shards");
  HeterogeneityReport report;
  for (const Dataset& s : shards) {
    if (!s.labeled()) throw InvalidArgumentError("heterogeneity needs labels");
    report.num_classes = std::max(report.num_classes, s.num_classes);
  }
  const int classes = report.num_classes;
  std::vector<std::int64_t> global(classes, 0);
  std::int64_t total = 0;
  for (const Dataset& s : shards) {
    std::vector<std::int64_t> histogram(classes, 0);
    for (int label : s.labels) {
      if (label < 0 || label >= classes) throw InvalidArgumentError("label out of range");
      ++histogram[label];
      ++global[label];
    }
    total += static_cast<std::int64_t>(s.labels.size());
    report.histograms.push_back(std::move(histogram));
  }
  if (total == 0) throw InvalidArgumentError("shards hold no examples");
  for (std::int64_t g : global) {
    report.global_distribution.push_back(static_cast<double>(g) /
                                         static_cast<double>(total));
  }
  for (const std::vector<std::int64_t>& histogram : report.histograms) {
    const std::int64_t count = std::accumulate(histogram.begin(), histogram.end(),
                                               std::int64_t{0});
    double tv = 0.0;
    if (count > 0) {
      for (int c = 0; c < classes; ++c) {
        tv += std::abs(static_cast<double>(histogram[c]) / static_cast<double>(count) -
                       report.global_distribution[c]);
      }
      tv *= 0.5;
    }
    report.tv_distances.push_back(tv);
  }
  report.mean_tv = std::accumulate(report.tv_distances.begin(),
                                   report.tv_distances.end(), 0.0) /
                   static_cast<double>(report.tv_distances.size());
  return report;
}

std::string ShardsToJson(const ShardIndices& shards, std::size_t dataset_size) {
  Json j;
  j["dataset_size"] = dataset_size;
  j["shards"] = shards;
  return j.dump();
}

ShardIndices ShardsFromJson(std::string_view json, std::size_t dataset_size) {
  ShardIndices shards;
  try {
    const Json j = Json::parse(json);
    if (j.at("dataset_size").get<std::size_t>() != dataset_size) {
      throw InvalidArgumentError("shard file is for a dataset of a different size");
    }
    shards = j.at("shards").get<ShardIndices>();
  } catch (const Json::exception& e) {
    throw InvalidArgumentError(std::string("malformed shard file: ") + e.what());
  }
  std::vector<bool> seen(dataset_size, false);
  std::size_t covered = 0;
  for (const std::vector<std::size_t>& s : shards) {
    for (std::size_t i : s) {
      if (i >= dataset_size || seen[i]) {
        throw InvalidArgumentError("shard file is not a partition of the dataset");
      }
      seen[i] = true;
      ++covered;
    }
  }
  if (covered != dataset_size) {
    throw InvalidArgumentError("shard file does not cover the dataset");
  }
  return shards;
}

std::string HeterogeneityToJson(const HeterogeneityReport& report) {
  Json j;
  j["num_classes"] = report.num_classes;
  j["histograms"] = report.histograms;
  j["global_distribution"] = report.global_distribution;
  j["tv_distances"] = report.tv_distances;
  j["mean_tv"] = report.mean_tv;
  return j.dump(2);
}

}  // namespace fedkrso
