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

// Flat key/value experiment configuration.
//
//   # comment
//   seed = 7
//   [local]              # later keys are read as local.<key>
//   interval_length = 20
//   federation.seeds = 10   # dotted keys work anywhere
//
// Keys are case-sensitive. A key may appear once. Every key must be consumed
// by the reader; leftovers are reported as unknown fields.

#ifndef FEDKRSO_CONFIG_H_
#define FEDKRSO_CONFIG_H_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedkrso/errors.h"
#include "fedkrso/federation.h"
#include "fedkrso/partitioner.h"
#include "fedkrso/tasks.h"

namespace fedkrso {

// "<source>:<line>: <field>: <message>"; the line is omitted when unknown.
class ConfigError : public InvalidConfigurationError {
 public:
  ConfigError(const std::string& source, int line, const std::string& field,
              const std::string& message);

  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

class KeyValueConfig {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static KeyValueConfig Parse(std::string_view text, std::string source);
  static KeyValueConfig FromPairs(
      const std::vector<std::pair<std::string, std::string>>& pairs,
      std::string source);

  bool Has(const std::string& key) const;
  const std::string& source() const { return source_; }

  std::optional<std::string> GetString(const std::string& key) const;
  std::optional<std::int64_t> GetInt(const std::string& key) const;
  std::optional<std::uint64_t> GetUnsigned(const std::string& key) const;
  std::optional<double> GetDouble(const std::string& key) const;
  std::optional<bool> GetBool(const std::string& key) const;
  // Comma-separated values.
  std::optional<std::vector<std::string>> GetList(const std::string& key) const;

  // Throws a ConfigError for the first key never read.
  void CheckAllConsumed() const;
  [[noreturn]] void Fail(const std::string& key, const std::string& message) const;

 private:
  std::string source_;
  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> consumed_;
};

struct RunConfig {
  Seed master_seed{1};
  SyntheticTaskConfig task;

  PartitionMode partition_mode = PartitionMode::kIid;
  double alpha = 0.5;
  int num_clients = 10;
  std::string shards_file;  // optional exact replay of a saved split

  FederationConfig federation;
  std::optional<int> iteration_budget;  // I * J when set
  bool budget_override = false;

  std::string output_dir = "runs/default";
  bool wall_clock = false;
  int element_bytes = 8;

  PartitionSpec partition_spec() const;
};

// Reads and validates every field; errors name the offending key.
RunConfig ParseRunConfig(const KeyValueConfig& config);

// Accepts a key/value config file or a run manifest (JSON).
RunConfig LoadRunConfig(const std::string& path);

// Canonical key/value form; parsing it back yields the same RunConfig.
std::vector<std::pair<std::string, std::string>> RunConfigToPairs(
    const RunConfig& config);
std::string FormatRunConfig(const RunConfig& config);

// Shortest text that round-trips the double exactly.
std::string FormatDouble(double value);

}  // namespace fedkrso

#endif  // FEDKRSO_CONFIG_H_
