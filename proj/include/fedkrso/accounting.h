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

// Closed-form per-round communication and client memory costs, in parameter
// counts. With P = d_m d_n, L = (d_m + d_n) r and Q = d_m r summed over layers:
//
//              weights  gradients  opt. states  uplink  downlink
//   fedit      P + L    L          2L           L       L
//   ffa_lora   P + L    Q          2Q           Q       Q
//   fedfft     P        P          2P           P       P
//   fedkrso    P + L    Q          2Q           <= IQ   KQ + K
//
// Activation memory is not modelled.

#ifndef FEDKRSO_ACCOUNTING_H_
#define FEDKRSO_ACCOUNTING_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fedkrso/weights.h"

namespace fedkrso {

enum class Method { kFedKrso, kFedIt, kFfaLora, kFedFft };

std::string_view MethodName(Method method);
Method ParseMethod(std::string_view name);

struct MemoryFootprint {
  std::int64_t weights = 0;
  std::int64_t gradients = 0;
  std::int64_t optimizer_states = 0;

  std::int64_t total() const { return weights + gradients + optimizer_states; }
};

struct CostReport {
  Method method = Method::kFedKrso;
  std::vector<LayerShape> layers;
  std::int64_t rank = 0;
  int num_seeds = 0;  // K
  int intervals = 0;  // I

  std::int64_t full_params = 0;    // P
  std::int64_t lora_params = 0;    // L
  std::int64_t sketch_params = 0;  // Q

  // For fedkrso this is the bound I*Q; the measured value depends on how many
  // distinct seeds a client touched.
  std::int64_t uplink_params = 0;
  std::int64_t downlink_params = 0;
  MemoryFootprint memory;
};

CostReport RoundCosts(Method method, const std::vector<LayerShape>& layers,
                      std::int64_t rank, int num_seeds, int intervals);

MemoryFootprint MemoryFootprintOf(Method method,
                                  const std::vector<LayerShape>& layers,
                                  std::int64_t rank);

std::int64_t ParamsToBytes(std::int64_t params, int element_bytes);

enum class CostTableFormat { kText, kCsv };

// One row per report, each cell as "formula = value" (text) or as separate
// formula/value columns (csv). Byte columns use `element_bytes` per value.
std::string FormatCostTable(const std::vector<CostReport>& reports,
                            CostTableFormat format, int element_bytes);

}  // namespace fedkrso

#endif  // FEDKRSO_ACCOUNTING_H_
