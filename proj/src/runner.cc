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

#include "fedkrso/runner.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedkrso/accounting.h"
#include "fedkrso/errors.h"
#include "fedkrso/parallel.h"

namespace fedkrso {
namespace {

using Json = nlohmann::json;
namespace fs = std::filesystem;

std::string ReadTextFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidConfigurationError("cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

Json ConfigJson(const RunConfig& config) {
  Json j = Json::object();
  for (const auto& [key, value] : RunConfigToPairs(config)) j[key] = value;
  return j;
}

// Per-client analytic bounds for one round.
CostReport CostsFor(const RunResult& result) {
  const FederationConfig& fed = result.config.federation;
  const std::int64_t rank =
      fed.method == Method::kFedKrso ? fed.sketch.rank : fed.lora_rank;
  return RoundCosts(fed.method, result.layers, rank, fed.num_seeds,
                    fed.local.intervals);
}

std::string AlphaLabel(const RunConfig& config) {
  return config.partition_mode == PartitionMode::kIid ? "iid"
                                                      : FormatDouble(config.alpha);
}

}  // namespace

PreparedRun PrepareRun(const RunConfig& config) {
  PreparedRun prepared{MakeSyntheticTask(config.task, config.master_seed), {}, {}, {},
                       std::nullopt};
  const Dataset& data = prepared.task.data;
  if (config.shards_file.empty()) {
    prepared.indices = Split(data, config.partition_spec());
  } else {
    prepared.indices = ShardsFromJson(ReadTextFile(config.shards_file),
                                      static_cast<std::size_t>(data.size()));
    if (static_cast<int>(prepared.indices.size()) != config.num_clients) {
      throw InvalidConfigurationError("partition.shards_file: holds " +
                                      std::to_string(prepared.indices.size()) +
                                      " shards, partition.clients is " +
                                      std::to_string(config.num_clients));
    }
  }
  prepared.shards = MaterializeShards(data, prepared.indices);
  if (data.labeled()) prepared.heterogeneity = ComputeHeterogeneity(prepared.shards);
  prepared.initial = InitialWeights(prepared.task.model, config.master_seed);
  return prepared;
}

RunResult ExecuteRun(const RunConfig& config, RoundObserver* observer) {
  PreparedRun prepared = PrepareRun(config);
  RunResult result;
  result.config = config;
  result.layers = prepared.task.model.layer_shapes();
  result.trace = RunFederated(prepared.task.model, prepared.shards, prepared.initial,
                              config.federation, observer);
  result.indices = std::move(prepared.indices);
  result.heterogeneity = std::move(prepared.heterogeneity);
  return result;
}

std::string TraceToCsv(const RunResult& result) {
  const CostReport costs = CostsFor(result);
  const std::int64_t clients = result.config.num_clients;
  std::ostringstream out;
  out << "round,method,global_loss,grad_norm_sq,uplink_params,uplink_total,"
         "downlink_params,uplink_bound,downlink_model,comm_bytes";
  if (result.config.wall_clock) out << ",seconds";
  out << '\n';
  for (const RoundRecord& r : result.trace.rounds) {
    out << r.round + 1 << ',' << MethodName(result.trace.method) << ','
        << FormatDouble(r.global_loss) << ',' << FormatDouble(r.grad_norm_sq) << ','
        << r.uplink_params << ',' << r.uplink_total << ',' << r.downlink_params << ','
        << costs.uplink_params << ',' << costs.downlink_params << ','
        << ParamsToBytes(r.uplink_total + clients * r.downlink_params,
                         result.config.element_bytes);
    if (result.config.wall_clock) out << ',' << FormatDouble(r.seconds);
    out << '\n';
  }
  return out.str();
}

std::string ManifestJson(const RunConfig& config) {
  Json j;
  j["tool"] = "fedkrso";
  j["version"] = kVersion;
  j["master_seed"] = config.master_seed.value;
  j["config"] = ConfigJson(config);
  return j.dump(2) + "\n";
}

std::string SummaryJson(const RunResult& result) {
  const TrainingTrace& trace = result.trace;
  const CostReport costs = CostsFor(result);
  Json j;
  j["method"] = MethodName(trace.method);
  j["rounds"] = trace.rounds.size();
  j["initial_loss"] = trace.initial_loss;
  j["initial_grad_norm_sq"] = trace.initial_grad_norm_sq;
  std::int64_t uplink = 0;
  std::int64_t downlink = 0;
  std::int64_t max_uplink = 0;
  for (const RoundRecord& r : trace.rounds) {
    uplink += r.uplink_total;
    downlink += r.downlink_params * result.config.num_clients;
    max_uplink = std::max(max_uplink, r.uplink_params);
  }
  if (!trace.rounds.empty()) {
    j["final_loss"] = trace.rounds.back().global_loss;
    j["final_grad_norm_sq"] = trace.rounds.back().grad_norm_sq;
  }
  j["uplink_params_total"] = uplink;
  j["downlink_params_total"] = downlink;
  j["comm_bytes_total"] = ParamsToBytes(uplink + downlink, result.config.element_bytes);
  j["max_client_uplink_params"] = max_uplink;
  j["cost_model"] = {{"uplink_params", costs.uplink_params},
                     {"downlink_params", costs.downlink_params},
                     {"weights", costs.memory.weights},
                     {"gradients", costs.memory.gradients},
                     {"optimizer_states", costs.memory.optimizer_states}};
  if (result.heterogeneity) j["mean_tv"] = result.heterogeneity->mean_tv;
  if (trace.method == Method::kFedKrso) {
    std::vector<std::int64_t> usage(result.config.federation.num_seeds, 0);
    for (const RoundRecord& r : trace.rounds) {
      for (std::size_t k = 0; k < r.seed_usage.size(); ++k) usage[k] += r.seed_usage[k];
    }
    j["seed_usage"] = usage;
  }
  return j.dump(2) + "\n";
}

std::string ResolveOutputDir(const std::string& dir) {
  const fs::path path(dir);
  const char* root = std::getenv(kOutputRootEnv);
  if (path.is_absolute() || root == nullptr || *root == '\0') return path.string();
  return (fs::path(root) / path).string();
}

void WriteTextFile(const std::string& path, const std::string& contents) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << contents;
  if (!out) throw std::runtime_error("cannot write " + path);
}

void WriteRunArtifacts(const RunResult& result, const std::string& dir) {
  const fs::path base(dir);
  WriteTextFile((base / "trace.csv").string(), TraceToCsv(result));
  WriteTextFile((base / "manifest.json").string(), ManifestJson(result.config));
  WriteTextFile((base / "summary.json").string(), SummaryJson(result));
  WriteTextFile((base / "shards.json").string(),
                ShardsToJson(result.indices,
                             static_cast<std::size_t>(result.config.task.num_examples)) +
                    "\n");
}

std::size_t SweepGrid::size() const {
  auto axis = [](std::size_t n) { return n == 0 ? std::size_t{1} : n; };
  return axis(methods.size()) * axis(num_seeds.size()) *
         axis(interval_length.size()) * axis(ranks.size()) * axis(alphas.size()) *
         static_cast<std::size_t>(replicates);
}

SweepGrid ParseSweepGrid(const KeyValueConfig& config) {
  SweepGrid grid;
  auto ints = [&](const std::string& key) {
    std::vector<std::int64_t> values;
    for (const std::string& item : config.GetList(key).value_or(std::vector<std::string>{})) {
      const auto single = KeyValueConfig::FromPairs({{key, item}}, config.source());
      const std::int64_t v = *single.GetInt(key);
      if (v < 1) config.Fail(key, "values must be >= 1");
      values.push_back(v);
    }
    return values;
  };
  for (const std::string& item :
       config.GetList("method").value_or(std::vector<std::string>{})) {
    try {
      grid.methods.push_back(ParseMethod(item));
    } catch (const InvalidConfigurationError& e) {
      config.Fail("method", e.what());
    }
  }
  for (std::int64_t v : ints("K")) grid.num_seeds.push_back(static_cast<int>(v));
  for (std::int64_t v : ints("J")) grid.interval_length.push_back(static_cast<int>(v));
  grid.ranks = ints("r");
  for (const std::string& item :
       config.GetList("alpha").value_or(std::vector<std::string>{})) {
    if (item == "iid") {
      grid.alphas.push_back(std::nullopt);
      continue;
    }
    const auto single = KeyValueConfig::FromPairs({{"alpha", item}}, config.source());
    const double v = *single.GetDouble("alpha");
    if (!(v > 0.0)) config.Fail("alpha", "values must be > 0 or iid");
    grid.alphas.push_back(v);
  }
  const std::int64_t replicates = config.GetInt("replicates").value_or(1);
  if (replicates < 1 || replicates > 100000) config.Fail("replicates", "must be in [1, 100000]");
  grid.replicates = static_cast<int>(replicates);
  const std::int64_t workers = config.GetInt("workers").value_or(1);
  if (workers < 1 || workers > 1024) config.Fail("workers", "must be in [1, 1024]");
  grid.workers = static_cast<int>(workers);
  config.CheckAllConsumed();
  return grid;
}

SweepGrid LoadSweepGrid(const std::string& path) {
  return ParseSweepGrid(KeyValueConfig::Parse(ReadTextFile(path), path));
}

std::vector<SweepPoint> ExpandSweep(const RunConfig& base, const SweepGrid& grid,
                                    const std::string& output_dir) {
  using Override = std::pair<std::string, std::string>;
  // Each axis is a list of override sets; an absent axis contributes one
  // empty set.
  std::vector<std::vector<std::vector<Override>>> axes;
  auto add_axis = [&](auto values, auto to_overrides) {
    std::vector<std::vector<Override>> axis;
    for (const auto& v : values) axis.push_back(to_overrides(v));
    if (axis.empty()) axis.emplace_back();
    axes.push_back(std::move(axis));
  };
  add_axis(grid.methods, [](Method m) {
    return std::vector<Override>{{"federation.method", std::string(MethodName(m))}};
  });
  add_axis(grid.num_seeds, [](int k) {
    return std::vector<Override>{{"federation.seeds", std::to_string(k)}};
  });
  add_axis(grid.interval_length, [](int j) {
    return std::vector<Override>{{"local.interval_length", std::to_string(j)}};
  });
  add_axis(grid.ranks, [](std::int64_t r) {
    return std::vector<Override>{{"sketch.rank", std::to_string(r)},
                                 {"lora.rank", std::to_string(r)}};
  });
  add_axis(grid.alphas, [](const std::optional<double>& a) {
    if (!a) return std::vector<Override>{{"partition.mode", "iid"}};
    return std::vector<Override>{{"partition.mode", "dirichlet"},
                                 {"partition.alpha", FormatDouble(*a)}};
  });

  std::size_t groups = 1;
  for (const auto& axis : axes) groups *= axis.size();

  const std::vector<Override> base_pairs = RunConfigToPairs(base);
  std::vector<SweepPoint> points;
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<Override> overrides;
    std::size_t rest = g;
    for (auto axis = axes.rbegin(); axis != axes.rend(); ++axis) {
      const auto& chosen = (*axis)[rest % axis->size()];
      overrides.insert(overrides.begin(), chosen.begin(), chosen.end());
      rest /= axis->size();
    }
    for (int rep = 0; rep < grid.replicates; ++rep) {
      SweepPoint point;
      point.group = static_cast<int>(g);
      point.replicate = rep;
      point.overrides = overrides;
      std::ostringstream id;
      id << "g" << g << "_rep" << rep;
      point.id = id.str();

      std::map<std::string, std::string> pairs(base_pairs.begin(), base_pairs.end());
      for (const auto& [key, value] : overrides) {
        pairs[key] = value;
        if (key == "local.interval_length" && base.iteration_budget) {
          pairs.erase("local.intervals");
        }
      }
      pairs["seed"] = std::to_string(
          DeriveSeed(base.master_seed, StreamTag::kReplicate,
                     static_cast<std::uint64_t>(rep))
              .value);
      if (!output_dir.empty()) pairs["output.dir"] = output_dir + "/" + point.id;
      try {
        point.config = ParseRunConfig(KeyValueConfig::FromPairs(
            std::vector<Override>(pairs.begin(), pairs.end()), point.id));
      } catch (const InvalidConfigurationError& e) {
        point.error = e.what();
      }
      points.push_back(std::move(point));
    }
  }
  return points;
}

int SweepResult::failures() const {
  int count = 0;
  for (const SweepRun& run : runs) count += run.ok() ? 0 : 1;
  return count;
}

SweepResult RunSweep(const RunConfig& base, const SweepGrid& grid,
                     const std::string& output_dir) {
  std::vector<SweepPoint> points = ExpandSweep(base, grid, output_dir);
  SweepResult sweep;
  sweep.runs.resize(points.size());
  ParallelFor(static_cast<int>(points.size()), grid.workers, [&](int i) {
    SweepRun& run = sweep.runs[i];
    run.point = std::move(points[i]);
    if (!run.point.config) {
      run.error = run.point.error;
      return;
    }
    try {
      RunResult result = ExecuteRun(*run.point.config);
      if (!output_dir.empty()) {
        WriteRunArtifacts(result, output_dir + "/" + run.point.id);
      }
      result.trace.final_weights.clear();
      run.result = std::move(result);
    } catch (const std::exception& e) {
      run.error = e.what();
    }
  });
  return sweep;
}

std::string SweepComparisonCsv(const SweepResult& sweep) {
  std::ostringstream out;
  out << "point,group,replicate,method,K,I,J,r,alpha,seed,round,global_loss,"
         "grad_norm_sq,uplink_params,downlink_params,mean_tv\n";
  for (const SweepRun& run : sweep.runs) {
    if (!run.ok()) continue;
    const RunConfig& c = run.result->config;
    const FederationConfig& fed = c.federation;
    const std::int64_t rank =
        fed.method == Method::kFedKrso ? fed.sketch.rank : fed.lora_rank;
    const std::string tv = run.result->heterogeneity
                               ? FormatDouble(run.result->heterogeneity->mean_tv)
                               : std::string();
    for (const RoundRecord& r : run.result->trace.rounds) {
      out << run.point.id << ',' << run.point.group << ',' << run.point.replicate << ','
          << MethodName(fed.method) << ',' << fed.num_seeds << ','
          << fed.local.intervals << ',' << fed.local.interval_length << ',' << rank
          << ',' << AlphaLabel(c) << ',' << c.master_seed.value << ',' << r.round + 1
          << ',' << FormatDouble(r.global_loss) << ',' << FormatDouble(r.grad_norm_sq)
          << ',' << r.uplink_params << ',' << r.downlink_params << ',' << tv << '\n';
    }
  }
  return out.str();
}

std::string SweepSummaryJson(const SweepResult& sweep) {
  struct GroupStats {
    Json overrides = Json::object();
    int ok = 0;
    int failed = 0;
    double final_loss = 0.0;
    double final_grad_norm_sq = 0.0;
    double mean_tv = 0.0;
    int tv_count = 0;
  };
  std::map<int, GroupStats> groups;
  Json runs = Json::array();
  for (const SweepRun& run : sweep.runs) {
    GroupStats& g = groups[run.point.group];
    for (const auto& [key, value] : run.point.overrides) g.overrides[key] = value;
    Json entry;
    entry["point"] = run.point.id;
    entry["group"] = run.point.group;
    entry["replicate"] = run.point.replicate;
    entry["status"] = run.ok() ? "ok" : "failed";
    if (!run.ok()) {
      entry["error"] = run.error;
      ++g.failed;
    } else {
      const TrainingTrace& t = run.result->trace;
      entry["seed"] = run.result->config.master_seed.value;
      entry["intervals"] = run.result->config.federation.local.intervals;
      entry["final_loss"] = t.rounds.back().global_loss;
      entry["final_grad_norm_sq"] = t.rounds.back().grad_norm_sq;
      ++g.ok;
      g.final_loss += t.rounds.back().global_loss;
      g.final_grad_norm_sq += t.rounds.back().grad_norm_sq;
      if (run.result->heterogeneity) {
        entry["mean_tv"] = run.result->heterogeneity->mean_tv;
        g.mean_tv += run.result->heterogeneity->mean_tv;
        ++g.tv_count;
      }
    }
    runs.push_back(std::move(entry));
  }
  Json points = Json::array();
  for (const auto& [id, g] : groups) {
    Json p;
    p["group"] = id;
    p["overrides"] = g.overrides;
    p["ok"] = g.ok;
    p["failed"] = g.failed;
    if (g.ok > 0) {
      p["mean_final_loss"] = g.final_loss / g.ok;
      p["mean_final_grad_norm_sq"] = g.final_grad_norm_sq / g.ok;
    }
    if (g.tv_count > 0) p["mean_tv"] = g.mean_tv / g.tv_count;
    points.push_back(std::move(p));
  }
  Json j;
  j["version"] = kVersion;
  j["runs_total"] = sweep.runs.size();
  j["runs_failed"] = sweep.failures();
  j["complete"] = sweep.failures() == 0;
  j["points"] = std::move(points);
  j["runs"] = std::move(runs);
  return j.dump(2) + "\n";
}

}  // namespace fedkrso
