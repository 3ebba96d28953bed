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

#include <gtest/gtest.h>

#include "fedkrso/errors.h"

namespace fedkrso {
namespace {

const std::vector<LayerShape> kSquare768 = {{768, 768}};

TEST(RoundCostsTest, SymbolsAtWorkedExample) {
  const CostReport r = RoundCosts(Method::kFedKrso, kSquare768, 4, 10, 10);
  EXPECT_EQ(r.full_params, 589824);
  EXPECT_EQ(r.lora_params, 6144);
  EXPECT_EQ(r.sketch_params, 3072);
  EXPECT_EQ(r.downlink_params, 30730);
  EXPECT_EQ(r.uplink_params, 30720);
}

TEST(RoundCostsTest, BaselineRows) {
  const CostReport fft = RoundCosts(Method::kFedFft, kSquare768, 4, 0, 0);
  EXPECT_EQ(fft.uplink_params, 589824);
  EXPECT_EQ(fft.downlink_params, 589824);
  const CostReport it = RoundCosts(Method::kFedIt, kSquare768, 4, 0, 0);
  EXPECT_EQ(it.uplink_params, 6144);
  EXPECT_EQ(it.downlink_params, 6144);
  const CostReport ffa = RoundCosts(Method::kFfaLora, kSquare768, 4, 0, 0);
  EXPECT_EQ(ffa.uplink_params, 3072);
  EXPECT_EQ(ffa.downlink_params, 3072);
}

TEST(RoundCostsTest, SumsOverLayers) {
  const std::vector<LayerShape> layers = {{10, 20}, {5, 10}};
  const CostReport r = RoundCosts(Method::kFedKrso, layers, 2, 3, 4);
  EXPECT_EQ(r.full_params, 200 + 50);
  EXPECT_EQ(r.lora_params, 60 + 30);
  EXPECT_EQ(r.sketch_params, 20 + 10);
  EXPECT_EQ(r.uplink_params, 4 * 30);
  EXPECT_EQ(r.downlink_params, 3 * 30 + 3);
}

TEST(RoundCostsTest, InvalidInputsRejected) {
  EXPECT_THROW(RoundCosts(Method::kFedKrso, kSquare768, 4, 0, 1), InvalidConfigurationError);
  EXPECT_THROW(RoundCosts(Method::kFedKrso, kSquare768, 4, 1, 0), InvalidConfigurationError);
  EXPECT_THROW(RoundCosts(Method::kFedIt, kSquare768, 0, 1, 1), InvalidConfigurationError);
  EXPECT_THROW(RoundCosts(Method::kFedIt, {{0, 4}}, 1, 1, 1), InvalidConfigurationError);
  EXPECT_THROW(RoundCosts(Method::kFedIt, {}, 1, 1, 1), InvalidConfigurationError);
}

TEST(MemoryFootprintTest, TableRows) {
  const MemoryFootprint krso = MemoryFootprintOf(Method::kFedKrso, kSquare768, 4);
  EXPECT_EQ(krso.weights, 595968);
  EXPECT_EQ(krso.gradients, 3072);
  EXPECT_EQ(krso.optimizer_states, 6144);
  const MemoryFootprint fft = MemoryFootprintOf(Method::kFedFft, kSquare768, 4);
  EXPECT_EQ(fft.weights, 589824);
  EXPECT_EQ(fft.gradients, 589824);
  EXPECT_EQ(fft.optimizer_states, 1179648);
  const MemoryFootprint it = MemoryFootprintOf(Method::kFedIt, kSquare768, 4);
  EXPECT_EQ(it.gradients, 6144);
  EXPECT_EQ(it.optimizer_states, 12288);
  const MemoryFootprint ffa = MemoryFootprintOf(Method::kFfaLora, kSquare768, 4);
  EXPECT_EQ(ffa.weights, 595968);
  EXPECT_EQ(ffa.gradients, 3072);
}

TEST(MemoryFootprintTest, SketchStateBelowFullStateWhenRankBelowCols) {
  for (std::int64_t r = 1; r < 64; ++r) {
    const std::vector<LayerShape> layer = {{32, 64}};
    const MemoryFootprint krso = MemoryFootprintOf(Method::kFedKrso, layer, r);
    const MemoryFootprint fft = MemoryFootprintOf(Method::kFedFft, layer, r);
    EXPECT_LT(krso.gradients + krso.optimizer_states, fft.gradients + fft.optimizer_states);
  }
}

TEST(CostTableTest, TextRowsCarryFormulasAndValues) {
  std::vector<CostReport> reports;
  for (Method m : {Method::kFedIt, Method::kFfaLora, Method::kFedFft, Method::kFedKrso}) {
    reports.push_back(RoundCosts(m, kSquare768, 4, 10, 10));
  }
  const std::string text = FormatCostTable(reports, CostTableFormat::kText, 2);
  EXPECT_NE(text.find("P = d_m x d_n = 589824"), std::string::npos);
  EXPECT_NE(text.find("L = (d_m + d_n) x r = 6144"), std::string::npos);
  EXPECT_NE(text.find("Q = d_m x r = 3072"), std::string::npos);
  EXPECT_NE(text.find("KQ + K = 30730"), std::string::npos);
  EXPECT_NE(text.find("<= IQ = 30720"), std::string::npos);
  EXPECT_NE(text.find("2P = 1179648"), std::string::npos);
  const std::string csv = FormatCostTable(reports, CostTableFormat::kCsv, 2);
  EXPECT_NE(csv.find("fedkrso,P + L,595968,Q,3072,2Q,6144,<= IQ,30720,KQ + K,30730,"),
            std::string::npos);
  EXPECT_NE(csv.find("fedfft,P,589824,P,589824,2P,1179648,P,589824,P,589824,"),
            std::string::npos);
}

TEST(CostTableTest, BytesUseElementWidth) {
  EXPECT_EQ(ParamsToBytes(10, 2), 20);
  EXPECT_EQ(ParamsToBytes(10, 8), 80);
  EXPECT_THROW(ParamsToBytes(10, 0), InvalidConfigurationError);
}

TEST(MethodNameTest, RoundTrip) {
  for (Method m : {Method::kFedKrso, Method::kFedIt, Method::kFfaLora, Method::kFedFft}) {
    EXPECT_EQ(ParseMethod(MethodName(m)), m);
  }
  EXPECT_EQ(ParseMethod("ffa-lora"), Method::kFfaLora);
  EXPECT_THROW(ParseMethod("fedavg"), InvalidConfigurationError);
}

}  // namespace
}  // namespace fedkrso
