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

// fedkrso: run, sweep, costs, partition-report.
//
// Exit codes: 0 success, 1 other failure, 2 config error, 3 divergence,
// 4 sweep finished with failed points.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fedkrso/accounting.h"
#include "fedkrso/config.h"
#include "fedkrso/errors.h"
#include "fedkrso/partitioner.h"
#include "fedkrso/runner.h"

namespace {

using namespace fedkrso;

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitPartialSweep = 4;

int CmdRun(const std::string& config_path, const std::string& output_override) {
  RunConfig config = LoadRunConfig(config_path);
  if (!output_override.empty()) config.output_dir = output_override;
  const std::string dir = ResolveOutputDir(config.output_dir);
  const RunResult result = ExecuteRun(config);
  WriteRunArtifacts(result, dir);
  const RoundRecord& last = result.trace.rounds.back();
  std::cout << MethodName(result.trace.method) << ": " << result.trace.rounds.size()
            << " rounds, final loss " << FormatDouble(last.global_loss)
            << ", grad norm^2 " << FormatDouble(last.grad_norm_sq) << "\n"
            << "artifacts in " << dir << "\n";
  return 0;
}

int CmdSweep(const std::string& config_path, const std::string& grid_path,
             const std::string& output_override, int workers) {
  RunConfig base = LoadRunConfig(config_path);
  if (!output_override.empty()) base.output_dir = output_override;
  SweepGrid grid = LoadSweepGrid(grid_path);
  if (workers > 0) grid.workers = workers;
  const std::string dir = ResolveOutputDir(base.output_dir);
  const SweepResult sweep = RunSweep(base, grid, dir);
  WriteTextFile(dir + "/comparison.csv", SweepComparisonCsv(sweep));
  WriteTextFile(dir + "/summary.json", SweepSummaryJson(sweep));
  WriteTextFile(dir + "/base_manifest.json", ManifestJson(base));
  for (const SweepRun& run : sweep.runs) {
    if (!run.ok()) std::cerr << "point " << run.point.id << " failed: " << run.error << "\n";
  }
  std::cout << sweep.runs.size() - sweep.failures() << "/" << sweep.runs.size()
            << " runs succeeded; results in " << dir << "\n";
  return sweep.failures() == 0 ? 0 : kExitPartialSweep;
}

int CmdCosts(const std::string& config_path, const std::string& format,
             int element_bytes) {
  const RunConfig config = LoadRunConfig(config_path);
  const std::vector<LayerShape> layers = MakeTaskModel(config.task).layer_shapes();
  const FederationConfig& fed = config.federation;
  std::vector<CostReport> reports;
  for (Method m : {Method::kFedIt, Method::kFfaLora, Method::kFedFft, Method::kFedKrso}) {
    reports.push_back(RoundCosts(m, layers, fed.sketch.rank, fed.num_seeds,
                                 fed.local.intervals));
  }
  std::cout << FormatCostTable(reports,
                               format == "csv" ? CostTableFormat::kCsv
                                               : CostTableFormat::kText,
                               element_bytes > 0 ? element_bytes : config.element_bytes);
  return 0;
}

int CmdPartitionReport(const std::string& config_path,
                       const std::string& output_override) {
  RunConfig config = LoadRunConfig(config_path);
  if (!output_override.empty()) config.output_dir = output_override;
  const PreparedRun prepared = PrepareRun(config);
  nlohmann::json report;
  report["mode"] = PartitionModeName(config.partition_mode);
  if (config.partition_mode == PartitionMode::kDirichlet) report["alpha"] = config.alpha;
  report["clients"] = config.num_clients;
  std::vector<std::size_t> sizes;
  for (const auto& shard : prepared.indices) sizes.push_back(shard.size());
  report["shard_sizes"] = sizes;
  if (prepared.heterogeneity) {
    report["heterogeneity"] =
        nlohmann::json::parse(HeterogeneityToJson(*prepared.heterogeneity));
  } else {
    report["heterogeneity"] = nullptr;
  }
  const std::string text = report.dump(2) + "\n";
  const std::string dir = ResolveOutputDir(config.output_dir);
  WriteTextFile(dir + "/partition.json", text);
  WriteTextFile(dir + "/shards.json",
                ShardsToJson(prepared.indices,
                             static_cast<std::size_t>(config.task.num_examples)) +
                    "\n");
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated fine-tuning with K-seed random subspace optimization"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::string grid_path;
  std::string output;
  std::string format = "text";
  int element_bytes = 0;
  int workers = 0;

  CLI::App* run = app.add_subcommand("run", "Run one experiment from a config or manifest");
  run->add_option("config", config_path, "Config file or manifest.json")->required();
  run->add_option("--output", output, "Output directory (overrides output.dir)");

  CLI::App* sweep = app.add_subcommand("sweep", "Run the cross product of a grid");
  sweep->add_option("config", config_path, "Base config")->required();
  sweep->add_option("grid", grid_path, "Grid file")->required();
  sweep->add_option("--output", output, "Output directory (overrides output.dir)");
  sweep->add_option("--workers", workers, "Concurrent runs (overrides the grid)");

  CLI::App* costs = app.add_subcommand("costs", "Per-round cost table for all methods");
  costs->add_option("config", config_path, "Config file")->required();
  costs->add_option("--format", format, "text or csv")
      ->check(CLI::IsMember({"text", "csv"}));
  costs->add_option("--element-bytes", element_bytes,
                    "Bytes per value (default output.element_bytes)");

  CLI::App* partition =
      app.add_subcommand("partition-report", "Label heterogeneity of the client split");
  partition->add_option("config", config_path, "Config file")->required();
  partition->add_option("--output", output, "Output directory (overrides output.dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (run->parsed()) return CmdRun(config_path, output);
    if (sweep->parsed()) return CmdSweep(config_path, grid_path, output, workers);
    if (costs->parsed()) return CmdCosts(config_path, format, element_bytes);
    if (partition->parsed()) return CmdPartitionReport(config_path, output);
  } catch (const DivergedError& e) {
    std::cerr << "error: diverged at round " << e.round() << ": " << e.what() << "\n";
    return kExitDiverged;
  } catch (const InvalidConfigurationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
