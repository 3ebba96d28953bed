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

// Experiment plumbing behind the command-line tool: building a run from its
// config, writing artifacts, and expanding parameter sweeps.
//
// Random sub-streams, all keyed by the master seed:
//   data + planted model   MakeSyntheticTask(task, master)
//   partition              DeriveSeed(master, kPartition)
//   initial weights        InitialWeights(model, master)
//   pools, seed choice,    inside the federation runners
//   batch order
//   sweep replicate i      DeriveSeed(master, kReplicate, i)

#ifndef FEDKRSO_RUNNER_H_
#define FEDKRSO_RUNNER_H_

#include <optional>
#include <string>
#include <vector>

#include "fedkrso/config.h"
#include "fedkrso/federation.h"
#include "fedkrso/partitioner.h"
#include "fedkrso/tasks.h"

namespace fedkrso {

inline constexpr char kVersion[] = "0.1.0";
inline constexpr char kOutputRootEnv[] = "FEDKRSO_OUTPUT_ROOT";

struct PreparedRun {
  SyntheticTask task;
  ShardIndices indices;
  std::vector<Dataset> shards;
  WeightSet initial;
  std::optional<HeterogeneityReport> heterogeneity;  // labeled tasks only
};

PreparedRun PrepareRun(const RunConfig& config);

struct RunResult {
  RunConfig config;
  TrainingTrace trace;
  std::vector<LayerShape> layers;
  ShardIndices indices;
  std::optional<HeterogeneityReport> heterogeneity;
};

// Throws DivergedError when training produces non-finite values.
RunResult ExecuteRun(const RunConfig& config, RoundObserver* observer = nullptr);

// One row per round. The seconds column appears only with output.wall_clock,
// so the default trace is a pure function of the config.
std::string TraceToCsv(const RunResult& result);
std::string ManifestJson(const RunConfig& config);
std::string SummaryJson(const RunResult& result);

// Relative paths are placed under $FEDKRSO_OUTPUT_ROOT when it is set.
std::string ResolveOutputDir(const std::string& dir);

// trace.csv, manifest.json, summary.json and shards.json under `dir`.
void WriteRunArtifacts(const RunResult& result, const std::string& dir);
void WriteTextFile(const std::string& path, const std::string& contents);

struct SweepGrid {
  std::vector<Method> methods;
  std::vector<int> num_seeds;        // K
  std::vector<int> interval_length;  // J; I follows from local.iterations
  std::vector<std::int64_t> ranks;   // r, applied to the sketch and LoRA
  std::vector<std::optional<double>> alphas;  // nullopt = iid
  int replicates = 1;
  int workers = 1;

  std::size_t size() const;  // grid points times replicates
};

// Keys: method, K, J, r, alpha (numbers or "iid"), replicates, workers.
// Lists are comma-separated; absent axes keep the base value.
SweepGrid ParseSweepGrid(const KeyValueConfig& config);
SweepGrid LoadSweepGrid(const std::string& path);

struct SweepPoint {
  std::string id;
  int group = 0;  // grid point, shared by its replicates
  int replicate = 0;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::optional<RunConfig> config;  // empty when the point is invalid
  std::string error;
};

std::vector<SweepPoint> ExpandSweep(const RunConfig& base, const SweepGrid& grid,
                                    const std::string& output_dir);

struct SweepRun {
  SweepPoint point;
  std::optional<RunResult> result;
  std::string error;

  bool ok() const { return result.has_value(); }
};

struct SweepResult {
  std::vector<SweepRun> runs;
  int failures() const;
};

// Runs every point, up to grid.workers at a time. Failed points are recorded
// and the sweep continues. With a non-empty `output_dir` each run's artifacts
// go to <output_dir>/<point id>.
SweepResult RunSweep(const RunConfig& base, const SweepGrid& grid,
                     const std::string& output_dir);

// Long format: one row per successful run per round.
std::string SweepComparisonCsv(const SweepResult& sweep);
// Per-run status plus per-grid-point means of the final metrics.
std::string SweepSummaryJson(const SweepResult& sweep);

}  // namespace fedkrso

#endif  // FEDKRSO_RUNNER_H_
