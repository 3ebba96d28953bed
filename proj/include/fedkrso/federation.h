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

// Round orchestration for K-seed subspace training and its baselines.
//
// Round t of the seed/accumulator protocol:
//
//   server   S^t = MakeSeedPool(master, t, K); broadcast (S^t, B^t)
//   client   W^t = W^{t-1} + sum_k B^t_k P_k(S^{t-1})   (cached S^{t-1})
//            B^{t+1}_n = LocalTraining(W^t, S^t); upload touched blocks
//   server   B^{t+1}_k = (1/N) sum_n B^{t+1}_{k,n}
//
// The server side only ever stores seeds and d_m x r accumulators. Loss and
// gradient metrics come from a ShadowEvaluator, an evaluation-only copy of the
// global model advanced by the same update the clients apply.

#ifndef FEDKRSO_FEDERATION_H_
#define FEDKRSO_FEDERATION_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedkrso/accounting.h"
#include "fedkrso/dataset.h"
#include "fedkrso/local_trainer.h"
#include "fedkrso/random.h"
#include "fedkrso/sketch.h"
#include "fedkrso/tasks.h"
#include "fedkrso/weights.h"

namespace fedkrso {

struct GlobalAccumulatorSet {
  // B^t: produced at the end of round t - 1 from pool S^{t-1}.
  int round = 0;
  std::vector<WeightSet> blocks;  // K entries, one d_m x r block per layer

  int num_seeds() const { return static_cast<int>(blocks.size()); }
  std::int64_t ParameterCount() const;
};

GlobalAccumulatorSet ZeroAccumulators(int num_seeds,
                                      const std::vector<LayerShape>& block_shapes);

// Block shapes (d_m x r) for a model with the given layer shapes.
std::vector<LayerShape> AccumulatorShapes(const std::vector<LayerShape>& layers,
                                          std::int64_t rank);

// W_prev + sum_k B_k P_k with P_k regenerated from `prev_pool`. For round-0
// accumulators (all zero) the pool may be absent and W_prev is returned.
WeightSet ReconstructGlobal(const WeightSet& previous,
                            const GlobalAccumulatorSet& accumulators,
                            const std::optional<SeedPool>& previous_pool,
                            const SketchSpec& sketch);

// Seed-by-seed mean over all clients; absent blocks count as zero.
GlobalAccumulatorSet Aggregate(std::span<const LocalAccumulatorSet> uploads,
                               int num_seeds, int expected_clients,
                               const std::vector<LayerShape>& block_shapes);

struct Broadcast {
  SeedPool pool;                      // S^t
  GlobalAccumulatorSet accumulators;  // B^t

  // K d_m r accumulator entries plus K seeds.
  std::int64_t ParameterCount() const;
};

class KrsoServer {
 public:
  KrsoServer(Seed master_seed, int num_seeds, int num_clients,
             std::vector<LayerShape> block_shapes);

  Broadcast BeginRound(int round);
  void Receive(LocalAccumulatorSet upload);
  const GlobalAccumulatorSet& FinishRound();

  const GlobalAccumulatorSet& accumulators() const { return accumulators_; }

 private:
  Seed master_seed_;
  int num_seeds_;
  int num_clients_;
  std::vector<LayerShape> block_shapes_;
  int round_ = -1;
  GlobalAccumulatorSet accumulators_;
  std::vector<LocalAccumulatorSet> inbox_;
};

class KrsoClient {
 public:
  KrsoClient(int id, const Dataset* shard, WeightSet initial);

  // Rebuilds W^t from the broadcast accumulators and the cached previous
  // pool, then caches the new pool for the next round.
  void Synchronize(const Broadcast& message, const SketchSpec& sketch);

  LocalTrainingResult Train(const TaskModel& model, const LocalConfig& config,
                            const SketchSpec& sketch, const LocalContext& context);

  int id() const { return id_; }
  const WeightSet& weights() const { return weights_; }
  const std::optional<SeedPool>& cached_pool() const { return cached_pool_; }

 private:
  int id_;
  const Dataset* shard_;
  WeightSet weights_;
  std::optional<SeedPool> cached_pool_;
};

struct RoundMetrics {
  double global_loss = 0.0;
  double grad_norm_sq = 0.0;
};

class ShadowEvaluator {
 public:
  ShadowEvaluator(const TaskModel& model, std::span<const Dataset> shards,
                  WeightSet initial);

  // W <- W + sum_k B_k P_k(pool).
  void Apply(const GlobalAccumulatorSet& accumulators, const SeedPool& pool,
             const SketchSpec& sketch);
  RoundMetrics Evaluate() const;
  const WeightSet& weights() const { return weights_; }

 private:
  const TaskModel* model_;
  std::span<const Dataset> shards_;
  WeightSet weights_;
};

RoundMetrics EvaluateGlobal(const TaskModel& model, const WeightSet& weights,
                            std::span<const Dataset> shards);

enum class LoraInit { kGaussian, kOrthonormal };

struct FederationConfig {
  Method method = Method::kFedKrso;
  int num_rounds = 30;  // T
  int num_seeds = 10;   // K
  SketchSpec sketch;
  LocalConfig local;
  std::int64_t lora_rank = 4;
  LoraInit lora_init = LoraInit::kGaussian;
  Seed master_seed{1};
  int num_threads = 1;
  // Verification mode: clients keep their pre-reset models.
  bool keep_pre_reset = false;

  void Validate(int num_clients, const std::vector<LayerShape>& layers) const;
};

struct RoundRecord {
  int round = 0;
  double global_loss = 0.0;   // F(W^{t+1})
  double grad_norm_sq = 0.0;  // ||grad F(W^{t+1})||^2
  std::int64_t uplink_params = 0;  // max over clients
  std::int64_t uplink_total = 0;   // sum over clients
  std::int64_t downlink_params = 0;  // per client
  double seconds = 0.0;
  std::vector<int> seed_usage;  // interval draws per pool slot
};

struct TrainingTrace {
  Method method = Method::kFedKrso;
  double initial_loss = 0.0;
  double initial_grad_norm_sq = 0.0;
  std::vector<RoundRecord> rounds;
  WeightSet final_weights;
};

// Hooks for verification. Called on the orchestrating thread, in client
// order, after each parallel section completes.
class RoundObserver {
 public:
  virtual ~RoundObserver() = default;

  virtual void OnBroadcast(int /*round*/, const Broadcast& /*message*/) {}
  // `weights` is the client's model right after reconstruction.
  virtual void OnClientSynchronized(int /*round*/, int /*client*/,
                                    const WeightSet& /*weights*/) {}
  virtual void OnLocalTrainingDone(int /*round*/, int /*client*/,
                                   const WeightSet& /*entry*/,
                                   const WeightSet& /*returned*/,
                                   const LocalTrainingResult& /*result*/) {}
  virtual void OnUpload(int /*round*/, int /*client*/, std::int64_t /*parameter_count*/) {}
  // `global` is the model after aggregation (shadow model for fedkrso).
  virtual void OnRoundEnd(int /*round*/, const WeightSet& /*global*/,
                          const RoundRecord& /*record*/) {}
};

TrainingTrace RunFedKrso(const TaskModel& model, std::span<const Dataset> shards,
                         const WeightSet& initial, const FederationConfig& config,
                         RoundObserver* observer = nullptr);

// FedAvg over full-gradient local steps (SGD, or the same moment scheme on
// full-size buffers).
TrainingTrace RunFedFft(const TaskModel& model, std::span<const Dataset> shards,
                        const WeightSet& initial, const FederationConfig& config,
                        RoundObserver* observer = nullptr);

// LoRA factors B A on top of frozen initial weights. Method kFedIt averages
// both factors; kFfaLora freezes A and averages B only.
TrainingTrace RunFedLora(const TaskModel& model, std::span<const Dataset> shards,
                         const WeightSet& initial, const FederationConfig& config,
                         RoundObserver* observer = nullptr);

TrainingTrace RunFederated(const TaskModel& model,
                           std::span<const Dataset> shards,
                           const WeightSet& initial,
                           const FederationConfig& config,
                           RoundObserver* observer = nullptr);

}  // namespace fedkrso

#endif  // FEDKRSO_FEDERATION_H_
