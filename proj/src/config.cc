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

#include "fedkrso/config.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fedkrso {
namespace {

std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool ValidKey(std::string_view key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  return std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  });
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, 0, "", "cannot read file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

template <typename Enum>
std::optional<Enum> GetEnum(const KeyValueConfig& config, const std::string& key,
                            Enum (*parse)(std::string_view)) {
  const std::optional<std::string> text = config.GetString(key);
  if (!text) return std::nullopt;
  try {
    return parse(*text);
  } catch (const InvalidConfigurationError& e) {
    config.Fail(key, e.what());
  }
}

}  // namespace

ConfigError::ConfigError(const std::string& source, int line,
                         const std::string& field, const std::string& message)
    : InvalidConfigurationError(
          source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " +
          (field.empty() ? std::string() : field + ": ") + message),
      line_(line),
      field_(field) {}

KeyValueConfig KeyValueConfig::Parse(std::string_view text, std::string source) {
  KeyValueConfig config;
  config.source_ = std::move(source);
  std::string section;
  int line_number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_number;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = Trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(config.source_, line_number, "", "unterminated section header");
      }
      section = std::string(Trim(line.substr(1, line.size() - 2)));
      if (!section.empty() && !ValidKey(section)) {
        throw ConfigError(config.source_, line_number, section, "invalid section name");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(config.source_, line_number, "", "expected 'key = value'");
    }
    const std::string_view raw_key = Trim(line.substr(0, eq));
    const std::string key =
        section.empty() ? std::string(raw_key) : section + "." + std::string(raw_key);
    if (!ValidKey(raw_key)) {
      throw ConfigError(config.source_, line_number, key, "invalid key");
    }
    const std::string value(Trim(line.substr(eq + 1)));
    if (value.empty()) {
      throw ConfigError(config.source_, line_number, key, "missing value");
    }
    if (config.entries_.count(key)) {
      throw ConfigError(config.source_, line_number, key,
                        "duplicate key (first set on line " +
                            std::to_string(config.entries_.at(key).line) + ")");
    }
    config.entries_[key] = Entry{value, line_number};
    if (pos > text.size()) break;
  }
  return config;
}

KeyValueConfig KeyValueConfig::FromPairs(
    const std::vector<std::pair<std::string, std::string>>& pairs,
    std::string source) {
  KeyValueConfig config;
  config.source_ = std::move(source);
  for (const auto& [key, value] : pairs) {
    if (!ValidKey(key)) throw ConfigError(config.source_, 0, key, "invalid key");
    if (!config.entries_.emplace(key, Entry{value, 0}).second) {
      throw ConfigError(config.source_, 0, key, "duplicate key");
    }
  }
  return config;
}

bool KeyValueConfig::Has(const std::string& key) const {
  return entries_.count(key) > 0;
}

void KeyValueConfig::Fail(const std::string& key, const std::string& message) const {
  const auto it = entries_.find(key);
  throw ConfigError(source_, it == entries_.end() ? 0 : it->second.line, key, message);
}

std::optional<std::string> KeyValueConfig::GetString(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  consumed_.insert(key);
  return it->second.value;
}

std::optional<std::int64_t> KeyValueConfig::GetInt(const std::string& key) const {
  const std::optional<std::string> text = GetString(key);
  if (!text) return std::nullopt;
  std::int64_t value = 0;
  const char* last = text->data() + text->size();
  const auto [ptr, ec] = std::from_chars(text->data(), last, value);
  if (ec != std::errc() || ptr != last) Fail(key, "expected an integer, got '" + *text + "'");
  return value;
}

std::optional<std::uint64_t> KeyValueConfig::GetUnsigned(const std::string& key) const {
  const std::optional<std::string> text = GetString(key);
  if (!text) return std::nullopt;
  std::uint64_t value = 0;
  const char* last = text->data() + text->size();
  const auto [ptr, ec] = std::from_chars(text->data(), last, value);
  if (ec != std::errc() || ptr != last) {
    Fail(key, "expected a non-negative integer, got '" + *text + "'");
  }
  return value;
}

std::optional<double> KeyValueConfig::GetDouble(const std::string& key) const {
  const std::optional<std::string> text = GetString(key);
  if (!text) return std::nullopt;
  double value = 0.0;
  const char* last = text->data() + text->size();
  const auto [ptr, ec] = std::from_chars(text->data(), last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    Fail(key, "expected a finite number, got '" + *text + "'");
  }
  return value;
}

std::optional<bool> KeyValueConfig::GetBool(const std::string& key) const {
  const std::optional<std::string> text = GetString(key);
  if (!text) return std::nullopt;
  if (*text == "true" || *text == "on" || *text == "1") return true;
  if (*text == "false" || *text == "off" || *text == "0") return false;
  Fail(key, "expected true or false, got '" + *text + "'");
}

std::optional<std::vector<std::string>> KeyValueConfig::GetList(
    const std::string& key) const {
  const std::optional<std::string> text = GetString(key);
  if (!text) return std::nullopt;
  std::vector<std::string> items;
  std::string_view rest = *text;
  while (true) {
    const auto comma = rest.find(',');
    const std::string_view item = Trim(rest.substr(0, comma));
    if (item.empty()) Fail(key, "empty list item");
    items.emplace_back(item);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return items;
}

void KeyValueConfig::CheckAllConsumed() const {
  for (const auto& [key, entry] : entries_) {
    if (!consumed_.count(key)) {
      throw ConfigError(source_, entry.line, key, "unknown field");
    }
  }
}

PartitionSpec RunConfig::partition_spec() const {
  PartitionSpec spec;
  spec.mode = partition_mode;
  spec.alpha = alpha;
  spec.num_clients = num_clients;
  spec.seed = DeriveSeed(master_seed, StreamTag::kPartition);
  return spec;
}

RunConfig ParseRunConfig(const KeyValueConfig& config) {
  RunConfig run;
  auto require = [&](const std::string& key, bool ok, const std::string& message) {
    if (!ok) config.Fail(key, message);
  };
  auto int_at_least = [&](const std::string& key, std::int64_t current,
                          std::int64_t min) {
    const std::int64_t value = config.GetInt(key).value_or(current);
    require(key, value >= min, "must be >= " + std::to_string(min));
    return value;
  };
  auto narrow = [&](const std::string& key, std::int64_t value) {
    require(key, value <= 1'000'000'000, "value too large");
    return static_cast<int>(value);
  };

  if (const auto seed = config.GetUnsigned("seed")) run.master_seed = Seed{*seed};

  // Task.
  SyntheticTaskConfig& task = run.task;
  task.variant = GetEnum(config, "task.variant", ParseTaskVariant).value_or(task.variant);
  task.input_dim = int_at_least("task.input_dim", task.input_dim, 1);
  task.output_dim = int_at_least("task.output_dim", task.output_dim, 1);
  task.hidden_dim = int_at_least("task.hidden_dim", task.hidden_dim, 1);
  task.num_examples = int_at_least("task.examples", task.num_examples, 1);
  task.planted_rank = int_at_least("task.planted_rank", task.planted_rank, 0);
  task.noise = config.GetDouble("task.noise").value_or(task.noise);
  require("task.noise", task.noise >= 0.0, "must be >= 0");
  task.signal_scale = config.GetDouble("task.signal_scale").value_or(task.signal_scale);
  require("task.signal_scale", task.signal_scale > 0.0, "must be > 0");
  task.mlp_head = GetEnum(config, "task.head", ParseOutputHead).value_or(task.mlp_head);
  if (task.variant != TaskVariant::kMlp) {
    require("task.planted_rank",
            task.planted_rank <= std::min(task.input_dim, task.output_dim),
            "exceeds min(input_dim, output_dim)");
  }
  const bool classification =
      task.variant == TaskVariant::kLogistic ||
      (task.variant == TaskVariant::kMlp && task.mlp_head == OutputHead::kSoftmax);
  if (classification) {
    require("task.output_dim", task.output_dim >= 2,
            "classification needs at least 2 classes");
  }

  // Partition.
  run.partition_mode =
      GetEnum(config, "partition.mode", ParsePartitionMode).value_or(run.partition_mode);
  run.alpha = config.GetDouble("partition.alpha").value_or(run.alpha);
  require("partition.alpha", run.alpha > 0.0, "must be > 0");
  run.num_clients = narrow("partition.clients",
                           int_at_least("partition.clients", run.num_clients, 1));
  run.shards_file = config.GetString("partition.shards_file").value_or("");
  require("partition.mode", run.partition_mode == PartitionMode::kIid || classification,
          "dirichlet mode needs a classification task");
  require("partition.clients", task.num_examples >= run.num_clients,
          "more clients than examples");

  // Federation.
  FederationConfig& fed = run.federation;
  fed.method = GetEnum(config, "federation.method", ParseMethod).value_or(fed.method);
  fed.num_rounds = narrow("federation.rounds",
                          int_at_least("federation.rounds", fed.num_rounds, 1));
  fed.num_seeds = narrow("federation.seeds",
                         int_at_least("federation.seeds", fed.num_seeds, 1));
  fed.num_threads = narrow("federation.threads",
                           int_at_least("federation.threads", fed.num_threads, 1));

  fed.sketch.rank = int_at_least("sketch.rank", fed.sketch.rank, 1);
  fed.sketch.kind = GetEnum(config, "sketch.kind", ParseSketchKind).value_or(fed.sketch.kind);

  // Local optimizer and the I * J budget.
  LocalConfig& local = fed.local;
  const std::optional<std::int64_t> intervals = config.GetInt("local.intervals");
  const std::optional<std::int64_t> length = config.GetInt("local.interval_length");
  const std::optional<std::int64_t> budget = config.GetInt("local.iterations");
  run.budget_override = config.GetBool("local.budget_override").value_or(false);
  if (intervals) require("local.intervals", *intervals >= 1, "must be >= 1");
  if (length) require("local.interval_length", *length >= 1, "must be >= 1");
  if (budget) require("local.iterations", *budget >= 1, "must be >= 1");
  if (budget) {
    run.iteration_budget = narrow("local.iterations", *budget);
    if (intervals && length) {
      require("local.iterations", run.budget_override || *intervals * *length == *budget,
              "intervals x interval_length = " + std::to_string(*intervals * *length) +
                  " differs from the budget " + std::to_string(*budget) +
                  " (set local.budget_override = true to allow)");
      local.intervals = narrow("local.intervals", *intervals);
      local.interval_length = narrow("local.interval_length", *length);
    } else if (length) {
      require("local.interval_length", *budget % *length == 0,
              "does not divide local.iterations = " + std::to_string(*budget));
      local.interval_length = narrow("local.interval_length", *length);
      local.intervals = narrow("local.intervals", *budget / *length);
    } else if (intervals) {
      require("local.intervals", *budget % *intervals == 0,
              "does not divide local.iterations = " + std::to_string(*budget));
      local.intervals = narrow("local.intervals", *intervals);
      local.interval_length = narrow("local.interval_length", *budget / *intervals);
    } else {
      local.intervals = 1;
      local.interval_length = narrow("local.iterations", *budget);
    }
  } else {
    local.intervals = narrow("local.intervals", intervals.value_or(1));
    local.interval_length = narrow("local.interval_length", length.value_or(10));
  }
  local.learning_rate = config.GetDouble("local.learning_rate").value_or(local.learning_rate);
  require("local.learning_rate", local.learning_rate > 0.0, "must be > 0");
  local.schedule = GetEnum(config, "local.schedule", ParseLrSchedule).value_or(local.schedule);
  local.beta1 = config.GetDouble("local.beta1").value_or(local.beta1);
  require("local.beta1", local.beta1 >= 0.0 && local.beta1 < 1.0, "must lie in [0, 1)");
  local.beta2 = config.GetDouble("local.beta2").value_or(local.beta2);
  require("local.beta2", local.beta2 >= 0.0 && local.beta2 < 1.0, "must lie in [0, 1)");
  local.epsilon = config.GetDouble("local.epsilon").value_or(local.epsilon);
  require("local.epsilon", local.epsilon > 0.0, "must be > 0");
  local.momentum_enabled = config.GetBool("local.momentum").value_or(local.momentum_enabled);
  local.bias_correction = GetEnum(config, "local.bias_correction", ParseBiasCorrection)
                              .value_or(local.bias_correction);
  local.batch_size = int_at_least("local.batch_size", local.batch_size, 1);

  fed.lora_rank = int_at_least("lora.rank", fed.lora_rank, 1);
  if (const auto init = config.GetString("lora.init")) {
    if (*init == "gaussian") {
      fed.lora_init = LoraInit::kGaussian;
    } else if (*init == "orthonormal") {
      fed.lora_init = LoraInit::kOrthonormal;
    } else {
      config.Fail("lora.init", "expected gaussian or orthonormal, got '" + *init + "'");
    }
  }

  run.output_dir = config.GetString("output.dir").value_or(run.output_dir);
  run.wall_clock = config.GetBool("output.wall_clock").value_or(run.wall_clock);
  run.element_bytes = narrow("output.element_bytes",
                             int_at_least("output.element_bytes", run.element_bytes, 1));

  config.CheckAllConsumed();

  // Cross-module preconditions.
  fed.master_seed = run.master_seed;
  const std::vector<LayerShape> shapes = MakeTaskModel(task).layer_shapes();
  for (const LayerShape& s : shapes) {
    if (fed.method == Method::kFedKrso) {
      require("sketch.rank",
              fed.sketch.kind != SketchKind::kRowOrthonormalScaled || fed.sketch.rank <= s.cols,
              "orthonormal sketches need rank <= d_n = " + std::to_string(s.cols));
    }
    if (fed.method == Method::kFedIt || fed.method == Method::kFfaLora) {
      require("lora.rank", fed.lora_rank <= std::min(s.rows, s.cols),
              "exceeds min(d_m, d_n) = " + std::to_string(std::min(s.rows, s.cols)));
    }
  }
  try {
    fed.Validate(run.num_clients, shapes);
    run.partition_spec().Validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidConfigurationError& e) {
    throw ConfigError(config.source(), 0, "", e.what());
  }
  return run;
}

RunConfig LoadRunConfig(const std::string& path) {
  const std::string text = ReadFile(path);
  const std::string_view trimmed = Trim(text);
  if (!trimmed.empty() && trimmed.front() == '{') {
    std::vector<std::pair<std::string, std::string>> pairs;
    try {
      const nlohmann::json manifest = nlohmann::json::parse(text);
      for (const auto& [key, value] : manifest.at("config").items()) {
        pairs.emplace_back(key, value.get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path, 0, "", std::string("malformed manifest: ") + e.what());
    }
    return ParseRunConfig(KeyValueConfig::FromPairs(pairs, path));
  }
  return ParseRunConfig(KeyValueConfig::Parse(text, path));
}

std::string FormatDouble(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

std::vector<std::pair<std::string, std::string>> RunConfigToPairs(
    const RunConfig& run) {
  const FederationConfig& fed = run.federation;
  const LocalConfig& local = fed.local;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::vector<std::pair<std::string, std::string>> pairs = {
      {"seed", std::to_string(run.master_seed.value)},
      {"task.variant", std::string(TaskVariantName(run.task.variant))},
      {"task.input_dim", std::to_string(run.task.input_dim)},
      {"task.output_dim", std::to_string(run.task.output_dim)},
      {"task.hidden_dim", std::to_string(run.task.hidden_dim)},
      {"task.examples", std::to_string(run.task.num_examples)},
      {"task.planted_rank", std::to_string(run.task.planted_rank)},
      {"task.noise", FormatDouble(run.task.noise)},
      {"task.signal_scale", FormatDouble(run.task.signal_scale)},
      {"task.head", std::string(OutputHeadName(run.task.mlp_head))},
      {"partition.mode", std::string(PartitionModeName(run.partition_mode))},
      {"partition.alpha", FormatDouble(run.alpha)},
      {"partition.clients", std::to_string(run.num_clients)},
      {"federation.method", std::string(MethodName(fed.method))},
      {"federation.rounds", std::to_string(fed.num_rounds)},
      {"federation.seeds", std::to_string(fed.num_seeds)},
      {"federation.threads", std::to_string(fed.num_threads)},
      {"sketch.rank", std::to_string(fed.sketch.rank)},
      {"sketch.kind", std::string(SketchKindName(fed.sketch.kind))},
      {"local.intervals", std::to_string(local.intervals)},
      {"local.interval_length", std::to_string(local.interval_length)},
      {"local.budget_override", b(run.budget_override)},
      {"local.learning_rate", FormatDouble(local.learning_rate)},
      {"local.schedule", std::string(LrScheduleName(local.schedule))},
      {"local.beta1", FormatDouble(local.beta1)},
      {"local.beta2", FormatDouble(local.beta2)},
      {"local.epsilon", FormatDouble(local.epsilon)},
      {"local.momentum", b(local.momentum_enabled)},
      {"local.bias_correction", std::string(BiasCorrectionName(local.bias_correction))},
      {"local.batch_size", std::to_string(local.batch_size)},
      {"lora.rank", std::to_string(fed.lora_rank)},
      {"lora.init", fed.lora_init == LoraInit::kGaussian ? "gaussian" : "orthonormal"},
      {"output.dir", run.output_dir},
      {"output.wall_clock", b(run.wall_clock)},
      {"output.element_bytes", std::to_string(run.element_bytes)},
  };
  if (run.iteration_budget) {
    pairs.emplace_back("local.iterations", std::to_string(*run.iteration_budget));
  }
  if (!run.shards_file.empty()) {
    pairs.emplace_back("partition.shards_file", run.shards_file);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

std::string FormatRunConfig(const RunConfig& config) {
  std::ostringstream out;
  for (const auto& [key, value] : RunConfigToPairs(config)) {
    out << key << " = " << value << '\n';
  }
  return out.str();
}

}  // namespace fedkrso
