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

#include <algorithm>
#include <chrono>
#include <string>

#include "fedkrso/errors.h"
#include "fedkrso/parallel.h"

namespace fedkrso {
namespace {

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// weights += sum_k B_k P_k(pool).
void ApplyAccumulators(WeightSet& weights, const GlobalAccumulatorSet& acc,
                       const SeedPool& pool, const SketchSpec& sketch) {
  const std::vector<LayerShape> shapes = ShapesOf(weights);
  for (int k = 0; k < acc.num_seeds(); ++k) {
    const WeightSet& block = acc.blocks[k];
    bool all_zero = true;
    for (const Matrix& b : block) all_zero = all_zero && b.isZero(0.0);
    if (all_zero) continue;
    const std::vector<ProjectionMatrix> projections =
        GenerateLayerProjections(pool.seeds[k], shapes, sketch);
    for (std::size_t l = 0; l < shapes.size(); ++l) {
      weights[l].noalias() += block[l] * projections[l].entries;
    }
  }
}

std::int64_t TotalParams(const std::vector<LayerShape>& shapes) {
  std::int64_t total = 0;
  for (const LayerShape& s : shapes) total += s.rows * s.cols;
  return total;
}

void CheckShards(std::span<const Dataset> shards) {
  for (std::size_t n = 0; n < shards.size(); ++n) {
    if (shards[n].size() == 0) {
      throw InvalidArgumentError("client " + std::to_string(n) +
                                 " has an empty shard");
    }
  }
}

}  // namespace

std::int64_t GlobalAccumulatorSet::ParameterCount() const {
  std::int64_t total = 0;
  for (const WeightSet& block : blocks) {
    for (const Matrix& b : block) total += b.size();
  }
  return total;
}

GlobalAccumulatorSet ZeroAccumulators(int num_seeds,
                                      const std::vector<LayerShape>& block_shapes) {
  if (num_seeds < 1) throw InvalidConfigurationError("K must be >= 1");
  GlobalAccumulatorSet acc;
  acc.round = 0;
  acc.blocks.assign(num_seeds, ZerosLike(block_shapes));
  return acc;
}

std::vector<LayerShape> AccumulatorShapes(const std::vector<LayerShape>& layers,
                                          std::int64_t rank) {
  std::vector<LayerShape> out;
  out.reserve(layers.size());
  for (const LayerShape& s : layers) out.push_back({s.rows, rank});
  return out;
}

WeightSet ReconstructGlobal(const WeightSet& previous,
                            const GlobalAccumulatorSet& accumulators,
                            const std::optional<SeedPool>& previous_pool,
                            const SketchSpec& sketch) {
  for (const WeightSet& block : accumulators.blocks) {
    if (block.size() != previous.size()) {
      throw ProtocolError("accumulator layer count differs from the model");
    }
    for (std::size_t l = 0; l < block.size(); ++l) {
      if (block[l].rows() != previous[l].rows() || block[l].cols() != sketch.rank) {
        throw ProtocolError("accumulator block shape mismatch at layer " +
                            std::to_string(l));
      }
    }
  }
  if (accumulators.round == 0) {
    for (const WeightSet& block : accumulators.blocks) {
      for (const Matrix& b : block) {
        if (!b.isZero(0.0)) {
          throw ProtocolError("round-0 accumulators must be zero");
        }
      }
    }
    return previous;
  }
  if (!previous_pool.has_value()) {
    throw ProtocolError("reconstruction needs the previous round's seed pool");
  }
  if (previous_pool->round != accumulators.round - 1) {
    throw ProtocolError("seed pool from round " +
                        std::to_string(previous_pool->round) +
                        " cannot decode accumulators of round " +
                        std::to_string(accumulators.round));
  }
  if (previous_pool->size() != accumulators.num_seeds()) {
    throw ProtocolError("seed pool size differs from accumulator count");
  }
  WeightSet out = previous;
  ApplyAccumulators(out, accumulators, *previous_pool, sketch);
  return out;
}

GlobalAccumulatorSet Aggregate(std::span<const LocalAccumulatorSet> uploads,
                               int num_seeds, int expected_clients,
                               const std::vector<LayerShape>& block_shapes) {
  if (expected_clients < 1) throw ProtocolError("no clients expected");
  if (static_cast<int>(uploads.size()) != expected_clients) {
    throw ProtocolError("expected " + std::to_string(expected_clients) +
                        " uploads, got " + std::to_string(uploads.size()));
  }
  std::vector<const LocalAccumulatorSet*> by_client(expected_clients, nullptr);
  const int round = uploads.front().round;
  for (const LocalAccumulatorSet& u : uploads) {
    if (u.client < 0 || u.client >= expected_clients || by_client[u.client]) {
      throw ProtocolError("missing or duplicate upload for client " +
                          std::to_string(u.client));
    }
    if (u.round != round) throw ProtocolError("uploads from different rounds");
    if (u.num_seeds != num_seeds) throw ProtocolError("upload pool size mismatch");
    for (const auto& [k, block] : u.blocks) {
      if (k < 0 || k >= num_seeds) throw ProtocolError("seed index out of range");
      if (ShapesOf(block) != block_shapes) {
        throw ProtocolError("accumulator block shape mismatch from client " +
                            std::to_string(u.client));
      }
    }
    by_client[u.client] = &u;
  }

  GlobalAccumulatorSet out = ZeroAccumulators(num_seeds, block_shapes);
  out.round = round + 1;
  for (const LocalAccumulatorSet* u : by_client) {
    for (const auto& [k, block] : u->blocks) {
      for (std::size_t l = 0; l < block.size(); ++l) out.blocks[k][l] += block[l];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(expected_clients);
  for (WeightSet& block : out.blocks) {
    for (Matrix& b : block) b *= inv_n;
  }
  return out;
}

std::int64_t Broadcast::ParameterCount() const {
  return accumulators.ParameterCount() + pool.size();
}

KrsoServer::KrsoServer(Seed master_seed, int num_seeds, int num_clients,
                       std::vector<LayerShape> block_shapes)
    : master_seed_(master_seed),
      num_seeds_(num_seeds),
      num_clients_(num_clients),
      block_shapes_(std::move(block_shapes)),
      accumulators_(ZeroAccumulators(num_seeds, block_shapes_)) {
  if (num_clients < 1) throw InvalidConfigurationError("N must be >= 1");
}

Broadcast KrsoServer::BeginRound(int round) {
  if (round != round_ + 1) {
    throw ProtocolError("rounds must advance one at a time");
  }
  round_ = round;
  inbox_.clear();
  return Broadcast{MakeSeedPool(master_seed_, round, num_seeds_), accumulators_};
}

void KrsoServer::Receive(LocalAccumulatorSet upload) {
  if (upload.round != round_) {
    throw ProtocolError("upload for round " + std::to_string(upload.round) +
                        " during round " + std::to_string(round_));
  }
  inbox_.push_back(std::move(upload));
}

const GlobalAccumulatorSet& KrsoServer::FinishRound() {
  accumulators_ = Aggregate(inbox_, num_seeds_, num_clients_, block_shapes_);
  inbox_.clear();
  return accumulators_;
}

KrsoClient::KrsoClient(int id, const Dataset* shard, WeightSet initial)
    : id_(id), shard_(shard), weights_(std::move(initial)) {}

void KrsoClient::Synchronize(const Broadcast& message, const SketchSpec& sketch) {
  if (message.pool.round != message.accumulators.round) {
    throw ProtocolError("broadcast pool and accumulators disagree on the round");
  }
  // Only S^{t-1} is needed to decode B^t, so one cached pool suffices.
  const bool has_update = message.accumulators.round > 0;
  if (has_update) {
    if (!cached_pool_ || cached_pool_->round != message.accumulators.round - 1) {
      throw ProtocolError("client " + std::to_string(id_) +
                          " has no pool for round " +
                          std::to_string(message.accumulators.round - 1));
    }
    if (cached_pool_->size() != message.accumulators.num_seeds()) {
      throw ProtocolError("seed pool size differs from accumulator count");
    }
    ApplyAccumulators(weights_, message.accumulators, *cached_pool_, sketch);
  }
  cached_pool_ = message.pool;
}

LocalTrainingResult KrsoClient::Train(const TaskModel& model,
                                      const LocalConfig& config,
                                      const SketchSpec& sketch,
                                      const LocalContext& context) {
  if (!cached_pool_) throw ProtocolError("train before synchronize");
  return LocalTraining(model, weights_, *cached_pool_, *shard_, config, sketch,
                       context);
}

RoundMetrics EvaluateGlobal(const TaskModel& model, const WeightSet& weights,
                            std::span<const Dataset> shards) {
  return RoundMetrics{GlobalLoss(model, weights, shards),
                      FrobeniusNormSquared(GlobalGradient(model, weights, shards))};
}

ShadowEvaluator::ShadowEvaluator(const TaskModel& model,
                                 std::span<const Dataset> shards,
                                 WeightSet initial)
    : model_(&model), shards_(shards), weights_(std::move(initial)) {}

void ShadowEvaluator::Apply(const GlobalAccumulatorSet& accumulators,
                            const SeedPool& pool, const SketchSpec& sketch) {
  if (pool.round != accumulators.round - 1) {
    throw ProtocolError("shadow update with a pool from the wrong round");
  }
  ApplyAccumulators(weights_, accumulators, pool, sketch);
}

RoundMetrics ShadowEvaluator::Evaluate() const {
  return EvaluateGlobal(*model_, weights_, shards_);
}

void FederationConfig::Validate(int num_clients,
                                const std::vector<LayerShape>& layers) const {
  if (num_clients < 1) throw InvalidConfigurationError("N must be >= 1");
  if (num_rounds < 1) throw InvalidConfigurationError("T must be >= 1");
  if (num_threads < 1) throw InvalidConfigurationError("threads must be >= 1");
  local.Validate();
  switch (method) {
    case Method::kFedKrso:
      if (num_seeds < 1) throw InvalidConfigurationError("K must be >= 1");
      CheckSketchSpec(sketch, layers);
      break;
    case Method::kFedIt:
    case Method::kFfaLora:
      if (lora_rank < 1) throw InvalidConfigurationError("LoRA rank must be >= 1");
      for (const LayerShape& s : layers) {
        if (lora_rank > std::min(s.rows, s.cols)) {
          throw InvalidConfigurationError("LoRA rank exceeds min(d_m, d_n)");
        }
      }
      break;
    case Method::kFedFft:
      break;
  }
}

TrainingTrace RunFedKrso(const TaskModel& model, std::span<const Dataset> shards,
                         const WeightSet& initial, const FederationConfig& config,
                         RoundObserver* observer) {
  const std::vector<LayerShape> shapes = model.layer_shapes();
  const int num_clients = static_cast<int>(shards.size());
  config.Validate(num_clients, shapes);
  CheckShards(shards);
  if (ShapesOf(initial) != shapes) {
    throw InvalidArgumentError("initial weights do not match the task");
  }

  KrsoServer server(config.master_seed, config.num_seeds, num_clients,
                    AccumulatorShapes(shapes, config.sketch.rank));
  std::vector<KrsoClient> clients;
  clients.reserve(num_clients);
  for (int n = 0; n < num_clients; ++n) clients.emplace_back(n, &shards[n], initial);
  ShadowEvaluator shadow(model, shards, initial);

  TrainingTrace trace;
  trace.method = Method::kFedKrso;
  const RoundMetrics initial_metrics = shadow.Evaluate();
  trace.initial_loss = initial_metrics.global_loss;
  trace.initial_grad_norm_sq = initial_metrics.grad_norm_sq;

  const std::int64_t iterations = config.local.iterations();
  const std::int64_t total_steps = iterations * config.num_rounds;
  std::vector<LocalTrainingResult> results(num_clients);
  std::vector<WeightSet> entries(observer ? num_clients : 0);

  for (int t = 0; t < config.num_rounds; ++t) {
    const Clock::time_point start = Clock::now();
    const Broadcast message = server.BeginRound(t);
    if (observer) observer->OnBroadcast(t, message);

    ParallelFor(num_clients, config.num_threads, [&](int n) {
      clients[n].Synchronize(message, config.sketch);
      if (observer) entries[n] = clients[n].weights();
      LocalContext context;
      context.master_seed = config.master_seed;
      context.round = t;
      context.client = n;
      context.step_offset = t * iterations;
      context.total_steps = total_steps;
      context.keep_pre_reset = config.keep_pre_reset;
      results[n] = clients[n].Train(model, config.local, config.sketch, context);
    });

    RoundRecord record;
    record.round = t;
    record.downlink_params = message.ParameterCount();
    record.seed_usage.assign(config.num_seeds, 0);
    for (int n = 0; n < num_clients; ++n) {
      const std::int64_t up = results[n].accumulators.ParameterCount();
      record.uplink_params = std::max(record.uplink_params, up);
      record.uplink_total += up;
      for (int k : results[n].sampled_seeds) ++record.seed_usage[k];
      if (observer) {
        observer->OnClientSynchronized(t, n, entries[n]);
        observer->OnLocalTrainingDone(t, n, entries[n], clients[n].weights(),
                                      results[n]);
        observer->OnUpload(t, n, up);
      }
      server.Receive(std::move(results[n].accumulators));
    }
    const GlobalAccumulatorSet& aggregated = server.FinishRound();
    shadow.Apply(aggregated, message.pool, config.sketch);
    const RoundMetrics metrics = shadow.Evaluate();
    record.global_loss = metrics.global_loss;
    record.grad_norm_sq = metrics.grad_norm_sq;
    record.seconds = SecondsSince(start);
    if (observer) observer->OnRoundEnd(t, shadow.weights(), record);
    trace.rounds.push_back(std::move(record));
  }
  trace.final_weights = shadow.weights();
  return trace;
}

TrainingTrace RunFedFft(const TaskModel& model, std::span<const Dataset> shards,
                        const WeightSet& initial, const FederationConfig& config,
                        RoundObserver* observer) {
  const std::vector<LayerShape> shapes = model.layer_shapes();
  const int num_clients = static_cast<int>(shards.size());
  config.Validate(num_clients, shapes);
  CheckShards(shards);
  if (ShapesOf(initial) != shapes) {
    throw InvalidArgumentError("initial weights do not match the task");
  }

  TrainingTrace trace;
  trace.method = Method::kFedFft;
  WeightSet global = initial;
  const RoundMetrics initial_metrics = EvaluateGlobal(model, global, shards);
  trace.initial_loss = initial_metrics.global_loss;
  trace.initial_grad_norm_sq = initial_metrics.grad_norm_sq;

  const std::int64_t iterations = config.local.iterations();
  const std::int64_t total_steps = iterations * config.num_rounds;
  const std::int64_t payload = TotalParams(shapes);
  std::vector<WeightSet> local(num_clients);

  for (int t = 0; t < config.num_rounds; ++t) {
    const Clock::time_point start = Clock::now();
    ParallelFor(num_clients, config.num_threads, [&](int n) {
      WeightSet& w = local[n];
      w = global;
      BatchSampler sampler(BatchOrderSeed(config.master_seed, t, n),
                           shards[n].size(), config.local.batch_size);
      // Optimizer state starts fresh every round.
      MomentState moments;
      moments.Reset(shapes);
      for (std::int64_t it = 0; it < iterations; ++it) {
        const Batch batch = MakeBatch(shards[n], sampler.Next());
        const WeightSet gradient = model.Gradient(w, batch);
        if (!AllFinite(gradient)) {
          throw DivergedError(t, n, static_cast<int>(it));
        }
        const WeightSet step = MomentStep(moments, gradient, config.local);
        const double lr =
            ScheduledLearningRate(config.local.learning_rate, config.local.schedule,
                                  t * iterations + it, total_steps);
        for (std::size_t l = 0; l < shapes.size(); ++l) w[l] -= lr * step[l];
      }
    });

    RoundRecord record;
    record.round = t;
    record.uplink_params = payload;
    record.uplink_total = payload * num_clients;
    record.downlink_params = payload;
    WeightSet next = ZerosLike(shapes);
    for (int n = 0; n < num_clients; ++n) {
      if (observer) {
        observer->OnClientSynchronized(t, n, global);
        observer->OnLocalTrainingDone(t, n, global, local[n], LocalTrainingResult{});
        observer->OnUpload(t, n, payload);
      }
      for (std::size_t l = 0; l < shapes.size(); ++l) next[l] += local[n][l];
    }
    for (Matrix& m : next) m /= static_cast<double>(num_clients);
    global = std::move(next);

    const RoundMetrics metrics = EvaluateGlobal(model, global, shards);
    record.global_loss = metrics.global_loss;
    record.grad_norm_sq = metrics.grad_norm_sq;
    record.seconds = SecondsSince(start);
    if (observer) observer->OnRoundEnd(t, global, record);
    trace.rounds.push_back(std::move(record));
  }
  trace.final_weights = std::move(global);
  return trace;
}

TrainingTrace RunFedLora(const TaskModel& model, std::span<const Dataset> shards,
                         const WeightSet& initial, const FederationConfig& config,
                         RoundObserver* observer) {
  if (config.method != Method::kFedIt && config.method != Method::kFfaLora) {
    throw InvalidConfigurationError("RunFedLora needs method fedit or ffa_lora");
  }
  const std::vector<LayerShape> shapes = model.layer_shapes();
  const int num_clients = static_cast<int>(shards.size());
  config.Validate(num_clients, shapes);
  CheckShards(shards);
  if (ShapesOf(initial) != shapes) {
    throw InvalidArgumentError("initial weights do not match the task");
  }
  const bool train_a = config.method == Method::kFedIt;
  const std::size_t num_layers = shapes.size();
  const std::int64_t rank = config.lora_rank;

  // B starts at zero so the adapted model equals the initial one. A is shared
  // by all clients through a common seed.
  WeightSet b_global;
  WeightSet a_global;
  const Seed a_seed = DeriveSeed(config.master_seed, StreamTag::kLoraInit);
  const SketchKind a_kind = config.lora_init == LoraInit::kOrthonormal
                                ? SketchKind::kRowOrthonormalScaled
                                : SketchKind::kGaussian;
  for (std::size_t l = 0; l < num_layers; ++l) {
    b_global.push_back(Matrix::Zero(shapes[l].rows, rank));
    a_global.push_back(GenerateProjection(a_seed, rank, shapes[l].cols, a_kind,
                                          static_cast<int>(l))
                           .entries);
  }
  auto merged = [&](const WeightSet& b, const WeightSet& a) {
    WeightSet w = initial;
    for (std::size_t l = 0; l < num_layers; ++l) w[l].noalias() += b[l] * a[l];
    return w;
  };

  TrainingTrace trace;
  trace.method = config.method;
  WeightSet global = merged(b_global, a_global);
  const RoundMetrics initial_metrics = EvaluateGlobal(model, global, shards);
  trace.initial_loss = initial_metrics.global_loss;
  trace.initial_grad_norm_sq = initial_metrics.grad_norm_sq;

  std::int64_t payload = 0;
  for (const LayerShape& s : shapes) {
    payload += train_a ? (s.rows + s.cols) * rank : s.rows * rank;
  }
  const std::int64_t iterations = config.local.iterations();
  const std::int64_t total_steps = iterations * config.num_rounds;
  std::vector<WeightSet> local_b(num_clients);
  std::vector<WeightSet> local_a(num_clients);

  for (int t = 0; t < config.num_rounds; ++t) {
    const Clock::time_point start = Clock::now();
    ParallelFor(num_clients, config.num_threads, [&](int n) {
      WeightSet& b = local_b[n];
      WeightSet& a = local_a[n];
      b = b_global;
      a = a_global;
      BatchSampler sampler(BatchOrderSeed(config.master_seed, t, n),
                           shards[n].size(), config.local.batch_size);
      // Trainable factors, in order: all B blocks, then all A blocks.
      std::vector<LayerShape> factor_shapes = ShapesOf(b);
      if (train_a) {
        for (const LayerShape& s : ShapesOf(a)) factor_shapes.push_back(s);
      }
      MomentState moments;
      moments.Reset(factor_shapes);
      for (std::int64_t it = 0; it < iterations; ++it) {
        const Batch batch = MakeBatch(shards[n], sampler.Next());
        const WeightSet gradient = model.Gradient(merged(b, a), batch);
        WeightSet factor_grads;
        for (std::size_t l = 0; l < num_layers; ++l) {
          factor_grads.push_back(gradient[l] * a[l].transpose());
        }
        if (train_a) {
          for (std::size_t l = 0; l < num_layers; ++l) {
            factor_grads.push_back(b[l].transpose() * gradient[l]);
          }
        }
        if (!AllFinite(factor_grads)) throw DivergedError(t, n, static_cast<int>(it));
        const WeightSet step = MomentStep(moments, factor_grads, config.local);
        const double lr =
            ScheduledLearningRate(config.local.learning_rate, config.local.schedule,
                                  t * iterations + it, total_steps);
        for (std::size_t l = 0; l < num_layers; ++l) {
          b[l] -= lr * step[l];
          if (train_a) a[l] -= lr * step[num_layers + l];
        }
      }
    });

    RoundRecord record;
    record.round = t;
    record.uplink_params = payload;
    record.uplink_total = payload * num_clients;
    record.downlink_params = payload;
    WeightSet b_sum = ZerosLike(ShapesOf(b_global));
    WeightSet a_sum = ZerosLike(ShapesOf(a_global));
    for (int n = 0; n < num_clients; ++n) {
      if (observer) {
        observer->OnClientSynchronized(t, n, global);
        observer->OnLocalTrainingDone(t, n, global, merged(local_b[n], local_a[n]),
                                      LocalTrainingResult{});
        observer->OnUpload(t, n, payload);
      }
      for (std::size_t l = 0; l < num_layers; ++l) {
        b_sum[l] += local_b[n][l];
        a_sum[l] += local_a[n][l];
      }
    }
    const double inv_n = 1.0 / static_cast<double>(num_clients);
    for (std::size_t l = 0; l < num_layers; ++l) {
      b_global[l] = b_sum[l] * inv_n;
      if (train_a) a_global[l] = a_sum[l] * inv_n;
    }
    global = merged(b_global, a_global);

    const RoundMetrics metrics = EvaluateGlobal(model, global, shards);
    record.global_loss = metrics.global_loss;
    record.grad_norm_sq = metrics.grad_norm_sq;
    record.seconds = SecondsSince(start);
    if (observer) observer->OnRoundEnd(t, global, record);
    trace.rounds.push_back(std::move(record));
  }
  trace.final_weights = std::move(global);
  return trace;
}

TrainingTrace RunFederated(const TaskModel& model,
                           std::span<const Dataset> shards,
                           const WeightSet& initial,
                           const FederationConfig& config,
                           RoundObserver* observer) {
  switch (config.method) {
    case Method::kFedKrso:
      return RunFedKrso(model, shards, initial, config, observer);
    case Method::kFedFft:
      return RunFedFft(model, shards, initial, config, observer);
    case Method::kFedIt:
    case Method::kFfaLora:
      return RunFedLora(model, shards, initial, config, observer);
  }
  throw InvalidConfigurationError("unknown method");
}

}  // namespace fedkrso
