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

#include "fedkrso/federation.h"

#include <gtest/gtest.h>

#include "fedkrso/errors.h"
#include "fedkrso/partitioner.h"
#include "test_util.h"

namespace fedkrso {
namespace {

using testing::MaxAbsDiff;
using testing::RandomMatrix;
using testing::RandomWeights;

const std::vector<LayerShape> kBlocks = {{3, 2}, {4, 2}};

LocalAccumulatorSet Upload(int client, int round, std::map<int, double> fills) {
  LocalAccumulatorSet u;
  u.client = client;
  u.round = round;
  u.num_seeds = 4;
  for (const auto& [k, value] : fills) {
    u.blocks[k] = {Matrix::Constant(3, 2, value), Matrix::Constant(4, 2, value)};
  }
  return u;
}

TEST(AggregateTest, SeedwiseMeanWithAbsentBlocksAsZero) {
  const std::vector<LocalAccumulatorSet> uploads = {
      Upload(0, 5, {{0, 3.0}, {2, 6.0}}), Upload(1, 5, {{0, 3.0}}),
      Upload(2, 5, {{3, 9.0}})};
  const GlobalAccumulatorSet g = Aggregate(uploads, 4, 3, kBlocks);
  EXPECT_EQ(g.round, 6);
  ASSERT_EQ(g.num_seeds(), 4);
  const double expected[4] = {2.0, 0.0, 2.0, 3.0};
  for (int k = 0; k < 4; ++k) {
    for (const Matrix& b : g.blocks[k]) {
      EXPECT_TRUE(b.isApprox(Matrix::Constant(b.rows(), b.cols(), expected[k])) ||
                  (expected[k] == 0.0 && b.isZero(0.0)));
    }
  }
  EXPECT_EQ(g.ParameterCount(), 4 * (6 + 8));
}

TEST(AggregateTest, ClientOrderDoesNotMatter) {
  std::vector<LocalAccumulatorSet> uploads = {Upload(0, 1, {{1, 0.1}}),
                                              Upload(1, 1, {{1, 0.7}}),
                                              Upload(2, 1, {{1, 0.3}})};
  const GlobalAccumulatorSet a = Aggregate(uploads, 4, 3, kBlocks);
  std::swap(uploads[0], uploads[2]);
  const GlobalAccumulatorSet b = Aggregate(uploads, 4, 3, kBlocks);
  EXPECT_EQ(MaxAbsDiff(a.blocks[1], b.blocks[1]), 0.0);
}

TEST(AggregateTest, ProtocolViolationsAreRejected) {
  EXPECT_THROW(Aggregate(std::vector{Upload(0, 1, {}), Upload(1, 1, {})}, 4, 3, kBlocks),
               ProtocolError);
  EXPECT_THROW(Aggregate(std::vector{Upload(0, 1, {}), Upload(0, 1, {})}, 4, 2, kBlocks),
               ProtocolError);
  EXPECT_THROW(Aggregate(std::vector{Upload(0, 1, {}), Upload(1, 2, {})}, 4, 2, kBlocks),
               ProtocolError);
  LocalAccumulatorSet bad_shape = Upload(1, 1, {});
  bad_shape.blocks[0] = {Matrix::Zero(3, 3), Matrix::Zero(4, 2)};
  EXPECT_THROW(Aggregate(std::vector{Upload(0, 1, {}), bad_shape}, 4, 2, kBlocks),
               ProtocolError);
  LocalAccumulatorSet bad_seed = Upload(1, 1, {});
  bad_seed.blocks[7] = {Matrix::Zero(3, 2), Matrix::Zero(4, 2)};
  EXPECT_THROW(Aggregate(std::vector{Upload(0, 1, {}), bad_seed}, 4, 2, kBlocks),
               ProtocolError);
}

TEST(ReconstructTest, AddsProjectedAccumulators) {
  const std::vector<LayerShape> layers = {{3, 5}, {4, 3}};
  const SketchSpec sketch{2, SketchKind::kGaussian};
  RandomStream rng(Seed{1});
  const WeightSet prev = RandomWeights(rng, layers);
  const SeedPool pool = MakeSeedPool(Seed{2}, 3, 4);
  GlobalAccumulatorSet acc = ZeroAccumulators(4, AccumulatorShapes(layers, 2));
  acc.round = 4;
  for (WeightSet& block : acc.blocks) {
    for (Matrix& b : block) b = RandomMatrix(rng, b.rows(), b.cols());
  }
  WeightSet expected = prev;
  for (int k = 0; k < 4; ++k) {
    const auto ps = GenerateLayerProjections(pool.seeds[k], layers, sketch);
    for (std::size_t l = 0; l < layers.size(); ++l) expected[l] += acc.blocks[k][l] * ps[l].entries;
  }
  EXPECT_LT(MaxAbsDiff(ReconstructGlobal(prev, acc, pool, sketch), expected), 1e-13);

  EXPECT_THROW(ReconstructGlobal(prev, acc, std::nullopt, sketch), ProtocolError);
  EXPECT_THROW(ReconstructGlobal(prev, acc, MakeSeedPool(Seed{2}, 2, 4), sketch),
               ProtocolError);
  EXPECT_THROW(ReconstructGlobal(prev, acc, MakeSeedPool(Seed{2}, 3, 3), sketch),
               ProtocolError);

  const GlobalAccumulatorSet zero = ZeroAccumulators(4, AccumulatorShapes(layers, 2));
  EXPECT_EQ(MaxAbsDiff(ReconstructGlobal(prev, zero, std::nullopt, sketch), prev), 0.0);
}

TEST(ServerTest, RoundsAdvanceOneAtATime) {
  KrsoServer server(Seed{1}, 4, 2, kBlocks);
  EXPECT_THROW(server.BeginRound(1), ProtocolError);
  const Broadcast b = server.BeginRound(0);
  EXPECT_EQ(b.pool.round, 0);
  EXPECT_EQ(b.accumulators.round, 0);
  // K * sum(d_m r) + K.
  EXPECT_EQ(b.ParameterCount(), 4 * (3 * 2 + 4 * 2) + 4);
  EXPECT_THROW(server.Receive(Upload(0, 1, {})), ProtocolError);
  server.Receive(Upload(0, 0, {{1, 2.0}}));
  server.Receive(Upload(1, 0, {}));
  const GlobalAccumulatorSet& acc = server.FinishRound();
  EXPECT_EQ(acc.round, 1);
  EXPECT_TRUE(acc.blocks[1][0].isApprox(Matrix::Constant(3, 2, 1.0)));
  EXPECT_EQ(server.BeginRound(1).accumulators.round, 1);
}

TEST(ClientTest, SkippedRoundIsAProtocolError) {
  Dataset shard = testing::BalancedLabels(2, 3);
  const std::vector<LayerShape> layers = {{3, 4}};
  KrsoClient client(0, &shard, ZerosLike(layers));
  const SketchSpec sketch{2, SketchKind::kGaussian};
  Broadcast first{MakeSeedPool(Seed{1}, 0, 2), ZeroAccumulators(2, AccumulatorShapes(layers, 2))};
  client.Synchronize(first, sketch);
  ASSERT_TRUE(client.cached_pool().has_value());
  EXPECT_EQ(client.cached_pool()->round, 0);
  Broadcast skipped{MakeSeedPool(Seed{1}, 2, 2),
                    ZeroAccumulators(2, AccumulatorShapes(layers, 2))};
  skipped.accumulators.round = 2;
  EXPECT_THROW(client.Synchronize(skipped, sketch), ProtocolError);
}

struct Fixture {
  SyntheticTask task;
  std::vector<Dataset> shards;
  WeightSet initial;
};

Fixture MakeFixture(TaskVariant variant, int clients) {
  SyntheticTaskConfig tc;
  tc.variant = variant;
  tc.input_dim = 10;
  tc.output_dim = variant == TaskVariant::kQuadratic ? 6 : 4;
  tc.hidden_dim = 8;
  tc.num_examples = 30 * clients;
  SyntheticTask task = MakeSyntheticTask(tc, Seed{50});
  PartitionSpec spec;
  spec.num_clients = clients;
  spec.seed = Seed{51};
  std::vector<Dataset> shards = MaterializeShards(task.data, Split(task.data, spec));
  WeightSet initial = InitialWeights(task.model, Seed{52});
  return {std::move(task), std::move(shards), std::move(initial)};
}

FederationConfig KrsoConfig() {
  FederationConfig c;
  c.num_rounds = 4;
  c.num_seeds = 3;
  c.sketch = {2, SketchKind::kGaussian};
  c.local.intervals = 3;
  c.local.interval_length = 4;
  c.local.learning_rate = 0.01;
  c.local.batch_size = 8;
  c.master_seed = Seed{53};
  return c;
}

class ReconstructionObserver : public RoundObserver {
 public:
  void OnClientSynchronized(int round, int, const WeightSet& weights) override {
    if (round == 0) return;
    max_gap = std::max(max_gap, RelativeFrobeniusDistance(weights, last_global));
    ++checks;
  }
  void OnLocalTrainingDone(int, int, const WeightSet& entry, const WeightSet& returned,
                           const LocalTrainingResult&) override {
    max_reset_gap = std::max(max_reset_gap, RelativeFrobeniusDistance(returned, entry));
  }
  void OnRoundEnd(int, const WeightSet& global, const RoundRecord&) override {
    last_global = global;
  }

  WeightSet last_global;
  double max_gap = 0.0;
  double max_reset_gap = 0.0;
  int checks = 0;
};

TEST(RunFedKrsoTest, ClientsTrackShadowModel) {
  const Fixture f = MakeFixture(TaskVariant::kMlp, 3);
  ReconstructionObserver observer;
  const TrainingTrace trace =
      RunFedKrso(f.task.model, f.shards, f.initial, KrsoConfig(), &observer);
  ASSERT_EQ(trace.rounds.size(), 4u);
  EXPECT_EQ(observer.checks, 3 * 3);
  EXPECT_LT(observer.max_gap, 1e-12);
  EXPECT_LT(observer.max_reset_gap, 1e-12);
  for (const RoundRecord& r : trace.rounds) {
    EXPECT_EQ(r.downlink_params, 3 * (8 * 2 + 4 * 2) + 3);
    EXPECT_LE(r.uplink_params, 3 * (8 * 2 + 4 * 2));
    int draws = 0;
    for (int u : r.seed_usage) draws += u;
    EXPECT_EQ(draws, 3 * 3);
  }
}

TEST(RunFedKrsoTest, ThreadCountDoesNotChangeResults) {
  const Fixture f = MakeFixture(TaskVariant::kLogistic, 4);
  FederationConfig c = KrsoConfig();
  const TrainingTrace serial = RunFedKrso(f.task.model, f.shards, f.initial, c);
  c.num_threads = 3;
  const TrainingTrace parallel = RunFedKrso(f.task.model, f.shards, f.initial, c);
  ASSERT_EQ(serial.rounds.size(), parallel.rounds.size());
  for (std::size_t t = 0; t < serial.rounds.size(); ++t) {
    EXPECT_EQ(serial.rounds[t].global_loss, parallel.rounds[t].global_loss);
  }
  EXPECT_EQ(MaxAbsDiff(serial.final_weights, parallel.final_weights), 0.0);
}

TEST(RunFedKrsoTest, LossDecreasesOnQuadratic) {
  const Fixture f = MakeFixture(TaskVariant::kQuadratic, 3);
  FederationConfig c = KrsoConfig();
  c.num_rounds = 20;
  c.local.momentum_enabled = false;
  c.local.learning_rate = 0.05;
  const TrainingTrace trace = RunFedKrso(f.task.model, f.shards, f.initial, c);
  EXPECT_LT(trace.rounds.back().global_loss, 0.8 * trace.initial_loss);
}

TEST(RunFedKrsoTest, InvalidConfigRejected) {
  const Fixture f = MakeFixture(TaskVariant::kQuadratic, 2);
  FederationConfig c = KrsoConfig();
  c.num_seeds = 0;
  EXPECT_THROW(RunFedKrso(f.task.model, f.shards, f.initial, c), InvalidConfigurationError);
  c = KrsoConfig();
  c.num_rounds = 0;
  EXPECT_THROW(RunFedKrso(f.task.model, f.shards, f.initial, c), InvalidConfigurationError);
}

TEST(RunFedFftTest, SingleFullBatchStepIsGradientDescent) {
  const Fixture f = MakeFixture(TaskVariant::kQuadratic, 1);
  FederationConfig c = KrsoConfig();
  c.method = Method::kFedFft;
  c.num_rounds = 1;
  c.local.intervals = 1;
  c.local.interval_length = 1;
  c.local.momentum_enabled = false;
  c.local.batch_size = f.shards[0].size();
  const TrainingTrace trace = RunFedFft(f.task.model, f.shards, f.initial, c);
  const WeightSet g = f.task.model.Gradient(f.initial, FullBatch(f.shards[0]));
  WeightSet expected = f.initial;
  expected[0] -= c.local.learning_rate * g[0];
  EXPECT_LT(MaxAbsDiff(trace.final_weights, expected), 1e-14);
  EXPECT_EQ(trace.rounds[0].uplink_params, 6 * 10);
}

// With A orthogonal (r = d_n) and frozen, B A moves exactly like full
// fine-tuning under plain SGD.
TEST(RunFedLoraTest, FullRankFrozenOrthogonalAMatchesFedFft) {
  FederationConfig c = KrsoConfig();
  c.local.momentum_enabled = false;
  c.method = Method::kFfaLora;
  c.lora_rank = 6;
  c.lora_init = LoraInit::kOrthonormal;
  SyntheticTaskConfig tc;
  tc.input_dim = 6;
  tc.output_dim = 6;
  tc.num_examples = 90;
  const SyntheticTask task = MakeSyntheticTask(tc, Seed{60});
  PartitionSpec spec;
  spec.num_clients = 3;
  const std::vector<Dataset> shards = MaterializeShards(task.data, Split(task.data, spec));
  const WeightSet init = InitialWeights(task.model, Seed{61});
  const TrainingTrace lora = RunFedLora(task.model, shards, init, c);
  c.method = Method::kFedFft;
  const TrainingTrace fft = RunFedFft(task.model, shards, init, c);
  for (std::size_t t = 0; t < fft.rounds.size(); ++t) {
    EXPECT_NEAR(lora.rounds[t].global_loss, fft.rounds[t].global_loss,
                1e-10 * fft.rounds[t].global_loss);
  }
  EXPECT_EQ(lora.rounds[0].uplink_params, 6 * 6);
}

TEST(RunFedLoraTest, FedItCountsBothFactors) {
  const Fixture f = MakeFixture(TaskVariant::kMlp, 2);
  FederationConfig c = KrsoConfig();
  c.method = Method::kFedIt;
  c.lora_rank = 2;
  const TrainingTrace trace = RunFederated(f.task.model, f.shards, f.initial, c);
  EXPECT_EQ(trace.method, Method::kFedIt);
  // Layers 8 x 10 and 4 x 8.
  EXPECT_EQ(trace.rounds[0].uplink_params, (8 + 10) * 2 + (4 + 8) * 2);
  EXPECT_EQ(trace.rounds[0].downlink_params, (8 + 10) * 2 + (4 + 8) * 2);
  // B starts at zero, so the initial model is untouched.
  EXPECT_NEAR(trace.initial_loss, GlobalLoss(f.task.model, f.initial, f.shards), 1e-14);
  c.lora_rank = 9;
  EXPECT_THROW(RunFederated(f.task.model, f.shards, f.initial, c), InvalidConfigurationError);
}

}  // namespace
}  // namespace fedkrso
