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

#include "fedkrso/accounting.h"

#include <array>
#include <cstdio>
#include <sstream>

#include "fedkrso/errors.h"

namespace fedkrso {
namespace {

struct Symbols {
  std::int64_t p = 0;
  std::int64_t l = 0;
  std::int64_t q = 0;
};

Symbols ComputeSymbols(const std::vector<LayerShape>& layers, std::int64_t rank) {
  if (layers.empty()) throw InvalidConfigurationError("no layers to cost");
  if (rank < 1) throw InvalidConfigurationError("rank r must be >= 1");
  Symbols s;
  for (const LayerShape& layer : layers) {
    if (layer.rows < 1 || layer.cols < 1) {
      throw InvalidConfigurationError("layer dimensions must be positive");
    }
    s.p += layer.rows * layer.cols;
    s.l += (layer.rows + layer.cols) * rank;
    s.q += layer.rows * rank;
  }
  return s;
}

struct RowFormulas {
  const char* weights;
  const char* gradients;
  const char* optimizer_states;
  const char* uplink;
  const char* downlink;
};

RowFormulas FormulasFor(Method method) {
  switch (method) {
    case Method::kFedIt:
      return {"P + L", "L", "2L", "L", "L"};
    case Method::kFfaLora:
      return {"P + L", "Q", "2Q", "Q", "Q"};
    case Method::kFedFft:
      return {"P", "P", "2P", "P", "P"};
    case Method::kFedKrso:
      return {"P + L", "Q", "2Q", "<= IQ", "KQ + K"};
  }
  return {};
}

std::string Cell(const char* formula, std::int64_t value) {
  return std::string(formula) + " = " + std::to_string(value);
}

}  // namespace

std::string_view MethodName(Method method) {
  switch (method) {
    case Method::kFedKrso:
      return "fedkrso";
    case Method::kFedIt:
      return "fedit";
    case Method::kFfaLora:
      return "ffa_lora";
    case Method::kFedFft:
      return "fedfft";
  }
  return "unknown";
}

Method ParseMethod(std::string_view name) {
  if (name == "fedkrso") return Method::kFedKrso;
  if (name == "fedit") return Method::kFedIt;
  if (name == "ffa_lora" || name == "ffa-lora") return Method::kFfaLora;
  if (name == "fedfft") return Method::kFedFft;
  throw InvalidConfigurationError("unknown method '" + std::string(name) + "'");
}

MemoryFootprint MemoryFootprintOf(Method method,
                                  const std::vector<LayerShape>& layers,
                                  std::int64_t rank) {
  const Symbols s = ComputeSymbols(layers, rank);
  switch (method) {
    case Method::kFedKrso:
    case Method::kFfaLora:
      return {s.p + s.l, s.q, 2 * s.q};
    case Method::kFedIt:
      return {s.p + s.l, s.l, 2 * s.l};
    case Method::kFedFft:
      return {s.p, s.p, 2 * s.p};
  }
  throw InvalidConfigurationError("unknown method");
}

CostReport RoundCosts(Method method, const std::vector<LayerShape>& layers,
                      std::int64_t rank, int num_seeds, int intervals) {
  const Symbols s = ComputeSymbols(layers, rank);
  CostReport report;
  report.method = method;
  report.layers = layers;
  report.rank = rank;
  report.num_seeds = num_seeds;
  report.intervals = intervals;
  report.full_params = s.p;
  report.lora_params = s.l;
  report.sketch_params = s.q;
  report.memory = MemoryFootprintOf(method, layers, rank);
  switch (method) {
    case Method::kFedKrso:
      if (num_seeds < 1 || intervals < 1) {
        throw InvalidConfigurationError("fedkrso costs need K >= 1 and I >= 1");
      }
      report.uplink_params = static_cast<std::int64_t>(intervals) * s.q;
      report.downlink_params = static_cast<std::int64_t>(num_seeds) * s.q + num_seeds;
      break;
    case Method::kFedIt:
      report.uplink_params = report.downlink_params = s.l;
      break;
    case Method::kFfaLora:
      report.uplink_params = report.downlink_params = s.q;
      break;
    case Method::kFedFft:
      report.uplink_params = report.downlink_params = s.p;
      break;
  }
  return report;
}

std::int64_t ParamsToBytes(std::int64_t params, int element_bytes) {
  if (element_bytes < 1) throw InvalidConfigurationError("element width must be >= 1");
  return params * element_bytes;
}

std::string FormatCostTable(const std::vector<CostReport>& reports,
                            CostTableFormat format, int element_bytes) {
  std::ostringstream out;
  if (reports.empty()) return "";
  const CostReport& first = reports.front();
  if (format == CostTableFormat::kCsv) {
    out << "method,weights_formula,weights,gradients_formula,gradients,"
           "opt_states_formula,opt_states,uplink_formula,uplink,downlink_formula,"
           "downlink,comm_bytes,memory_bytes\n";
    for (const CostReport& r : reports) {
      const RowFormulas f = FormulasFor(r.method);
      out << MethodName(r.method) << ',' << f.weights << ',' << r.memory.weights
          << ',' << f.gradients << ',' << r.memory.gradients << ','
          << f.optimizer_states << ',' << r.memory.optimizer_states << ','
          << f.uplink << ',' << r.uplink_params << ',' << f.downlink << ','
          << r.downlink_params << ','
          << ParamsToBytes(r.uplink_params + r.downlink_params, element_bytes)
          << ',' << ParamsToBytes(r.memory.total(), element_bytes) << '\n';
    }
    return out.str();
  }

  out << "P = d_m x d_n = " << first.full_params
      << ", L = (d_m + d_n) x r = " << first.lora_params
      << ", Q = d_m x r = " << first.sketch_params << "  (r = " << first.rank
      << ", K = " << first.num_seeds << ", I = " << first.intervals << ")\n";
  char line[512];
  std::snprintf(line, sizeof(line), "%-10s %-18s %-14s %-15s %-15s %-18s %s\n",
                "method", "weights", "gradients", "opt_states", "uplink",
                "downlink", "bytes(comm/mem)");
  out << line;
  for (const CostReport& r : reports) {
    const RowFormulas f = FormulasFor(r.method);
    const std::string bytes =
        std::to_string(ParamsToBytes(r.uplink_params + r.downlink_params,
                                     element_bytes)) +
        "/" + std::to_string(ParamsToBytes(r.memory.total(), element_bytes));
    std::snprintf(line, sizeof(line), "%-10s %-18s %-14s %-15s %-15s %-18s %s\n",
                  std::string(MethodName(r.method)).c_str(),
                  Cell(f.weights, r.memory.weights).c_str(),
                  Cell(f.gradients, r.memory.gradients).c_str(),
                  Cell(f.optimizer_states, r.memory.optimizer_states).c_str(),
                  Cell(f.uplink, r.uplink_params).c_str(),
                  Cell(f.downlink, r.downlink_params).c_str(), bytes.c_str());
    out << line;
  }
  return out.str();
}

}  // namespace fedkrso
