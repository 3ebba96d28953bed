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

#include "fedkrso/local_trainer.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "fedkrso/errors.h"

namespace fedkrso {

std::string_view BiasCorrectionName(BiasCorrection mode) {
  return mode == BiasCorrection::kFixed ? "fixed" : "standard";
}

BiasCorrection ParseBiasCorrection(std::string_view name) {
  if (name == "fixed") return BiasCorrection::kFixed;
  if (name == "standard") return BiasCorrection::kStandard;
  throw InvalidConfigurationError("unknown bias correction '" +
                                  std::string(name) + "'");
}

std::string_view LrScheduleName(LrSchedule schedule) {
  return schedule == LrSchedule::kConstant ? "constant" : "cosine";
}

LrSchedule ParseLrSchedule(std::string_view name) {
  if (name == "constant") return LrSchedule::kConstant;
  if (name == "cosine") return LrSchedule::kCosine;
  throw InvalidConfigurationError("unknown learning-rate schedule '" +
                                  std::string(name) + "'");
}

double ScheduledLearningRate(double base, LrSchedule schedule,
                             std::int64_t step, std::int64_t total_steps) {
  if (schedule == LrSchedule::kConstant || total_steps <= 0) return base;
  const double progress = std::clamp(
      static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void LocalConfig::Validate() const {
  if (intervals < 1) throw InvalidConfigurationError("intervals I must be >= 1");
  if (interval_length < 1) {
    throw InvalidConfigurationError("interval length J must be >= 1");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidConfigurationError("learning rate must be finite and >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0)) {
    throw InvalidConfigurationError("beta1 must lie in [0, 1)");
  }
  if (!(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidConfigurationError("beta2 must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidConfigurationError("epsilon must be > 0");
  if (batch_size < 1) throw InvalidConfigurationError("batch size must be >= 1");
}

void MomentState::Reset(const std::vector<LayerShape>& shapes) {
  first = ZerosLike(shapes);
  second = ZerosLike(shapes);
  steps = 0;
}

WeightSet MomentStep(MomentState& state, const WeightSet& gradient,
                     const LocalConfig& config) {
  if (!config.momentum_enabled) return gradient;
  if (state.first.empty() && state.second.empty()) state.Reset(ShapesOf(gradient));
  if (ShapesOf(state.first) != ShapesOf(gradient) ||
      ShapesOf(state.second) != ShapesOf(gradient)) {
    throw InvalidArgumentError(
        "compressed gradient shape differs from the moment buffers");
  }
  ++state.steps;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  double first_divisor = 1.0 - b1;
  double second_divisor = 1.0 - b2;
  if (config.bias_correction == BiasCorrection::kStandard) {
    first_divisor = 1.0 - std::pow(b1, state.steps);
    second_divisor = 1.0 - std::pow(b2, state.steps);
  }
  WeightSet out(gradient.size());
  for (std::size_t l = 0; l < gradient.size(); ++l) {
    state.first[l] = b1 * state.first[l] + (1.0 - b1) * gradient[l];
    state.second[l] =
        b2 * state.second[l] + (1.0 - b2) * gradient[l].cwiseAbs2();
    out[l] = ((state.first[l].array() / first_divisor) /
              ((state.second[l].array() / second_divisor).sqrt() + config.epsilon))
                 .matrix();
  }
  return out;
}

BatchSampler::BatchSampler(Seed seed, std::int64_t shard_size,
                           std::int64_t batch_size)
    : rng_(seed) {
  if (shard_size < 1) throw InvalidArgumentError("empty shard");
  if (batch_size < 1) throw InvalidArgumentError("batch size must be >= 1");
  order_.resize(static_cast<std::size_t>(shard_size));
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  batch_size_ = static_cast<std::size_t>(std::min(batch_size, shard_size));
  batch_.reserve(batch_size_);
  Reshuffle();
}

void BatchSampler::Reshuffle() {
  rng_.Shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

std::span<const std::size_t> BatchSampler::Next() {
  batch_.clear();
  while (batch_.size() < batch_size_) {
    if (cursor_ == order_.size()) Reshuffle();
    batch_.push_back(order_[cursor_++]);
  }
  return batch_;
}

Seed BatchOrderSeed(Seed master_seed, int round, int client) {
  return DeriveSeed(master_seed, StreamTag::kBatchOrder,
                    static_cast<std::uint64_t>(round),
                    static_cast<std::uint64_t>(client));
}

Seed SeedSelectionSeed(Seed master_seed, int round, int client) {
  return DeriveSeed(master_seed, StreamTag::kSeedSelect,
                    static_cast<std::uint64_t>(round),
                    static_cast<std::uint64_t>(client));
}

std::vector<int> LocalAccumulatorSet::Touched() const {
  std::vector<int> out;
  out.reserve(blocks.size());
  for (const auto& [k, unused] : blocks) out.push_back(k);
  return out;
}

std::int64_t LocalAccumulatorSet::ParameterCount() const {
  std::int64_t total = 0;
  for (const auto& [k, layers] : blocks) {
    for (const Matrix& b : layers) total += b.size();
  }
  return total;
}

LocalTrainingResult LocalTraining(const TaskModel& model, WeightSet& weights,
                                  const SeedPool& pool, const Dataset& shard,
                                  const LocalConfig& config,
                                  const SketchSpec& sketch,
                                  const LocalContext& context) {
  config.Validate();
  if (shard.size() == 0) throw InvalidArgumentError("empty shard");
  if (pool.size() < 1) throw InvalidConfigurationError("empty seed pool");
  const std::vector<LayerShape> shapes = model.layer_shapes();
  if (ShapesOf(weights) != shapes) {
    throw InvalidArgumentError("weights do not match the task");
  }
  CheckSketchSpec(sketch, shapes);

  std::vector<LayerShape> block_shapes;
  for (const LayerShape& s : shapes) block_shapes.push_back({s.rows, sketch.rank});

  LocalTrainingResult result;
  result.accumulators.round = context.round;
  result.accumulators.client = context.client;
  result.accumulators.num_seeds = pool.size();

  RandomStream seed_rng(
      SeedSelectionSeed(context.master_seed, context.round, context.client));
  BatchSampler sampler(
      BatchOrderSeed(context.master_seed, context.round, context.client),
      shard.size(), config.batch_size);
  MomentState moments;

  int iteration = 0;
  for (int interval = 0; interval < config.intervals; ++interval) {
    const int k = static_cast<int>(
        seed_rng.NextBelow(static_cast<std::uint64_t>(pool.size())));
    result.sampled_seeds.push_back(k);
    const std::vector<ProjectionMatrix> projections =
        GenerateLayerProjections(pool.seeds[k], shapes, sketch);
    auto [it, inserted] = result.accumulators.blocks.try_emplace(k);
    WeightSet& accumulator = it->second;
    if (inserted) accumulator = ZerosLike(block_shapes);
    moments.Reset(block_shapes);

    for (int j = 0; j < config.interval_length; ++j, ++iteration) {
      const Batch batch = MakeBatch(shard, sampler.Next());
      const WeightSet compressed =
          model.CompressedGradient(weights, projections, batch);
      if (!AllFinite(compressed)) {
        throw DivergedError(context.round, context.client, iteration);
      }
      const WeightSet step = MomentStep(moments, compressed, config);
      const double lr = ScheduledLearningRate(
          config.learning_rate, config.schedule, context.step_offset + iteration,
          context.total_steps);
      for (std::size_t l = 0; l < shapes.size(); ++l) {
        weights[l].noalias() -= lr * step[l] * projections[l].entries;
        accumulator[l].noalias() -= lr * step[l];
      }
    }
  }

  if (context.keep_pre_reset) result.pre_reset = weights;

  for (const auto& [k, accumulator] : result.accumulators.blocks) {
    const std::vector<ProjectionMatrix> projections =
        GenerateLayerProjections(pool.seeds[k], shapes, sketch);
    for (std::size_t l = 0; l < shapes.size(); ++l) {
      weights[l].noalias() -= accumulator[l] * projections[l].entries;
    }
  }
  if (!AllFinite(weights)) {
    throw DivergedError(context.round, context.client, iteration);
  }
  return result;
}

PeakStateCount PeakStateParameterCount(const std::vector<LayerShape>& shapes,
                                       std::int64_t rank) {
  if (rank < 1) throw InvalidConfigurationError("rank r must be >= 1");
  PeakStateCount count;
  for (const LayerShape& s : shapes) {
    count.weights += s.rows * s.cols + (s.rows + s.cols) * rank;
    count.state += 3 * s.rows * rank;
  }
  return count;
}

}  // namespace fedkrso
