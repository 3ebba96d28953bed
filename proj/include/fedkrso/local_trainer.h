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

// Memory-efficient local training along random subspaces.
//
// A round of local training is I intervals of J iterations. Each interval
// draws one seed uniformly (with replacement) from the round's pool,
// regenerates its projection P_k, zeroes the moment buffers, and then for J
// iterations:
//
//   G   = grad f(W; batch) P_k^T          (d_m x r, never via the full grad)
//   G'  = MomentStep(G)
//   W  -= lr * G' P_k                     (in place)
//   B_k -= lr * G'
//
// On exit W is restored to its entry value by W -= sum_k B_k P_k, and the
// touched accumulators B_k are returned for upload.

#ifndef FEDKRSO_LOCAL_TRAINER_H_
#define FEDKRSO_LOCAL_TRAINER_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedkrso/dataset.h"
#include "fedkrso/random.h"
#include "fedkrso/sketch.h"
#include "fedkrso/tasks.h"
#include "fedkrso/weights.h"

namespace fedkrso {

enum class BiasCorrection {
  // Divide by the constants (1 - beta1) and (1 - beta2) every step.
  kFixed,
  // Divide by (1 - beta^s), s = steps since the last moment reset.
  kStandard,
};

enum class LrSchedule { kConstant, kCosine };

std::string_view BiasCorrectionName(BiasCorrection mode);
BiasCorrection ParseBiasCorrection(std::string_view name);
std::string_view LrScheduleName(LrSchedule schedule);
LrSchedule ParseLrSchedule(std::string_view name);

// Cosine decays from `base` at step 0 to zero at `total_steps`.
double ScheduledLearningRate(double base, LrSchedule schedule,
                             std::int64_t step, std::int64_t total_steps);

struct LocalConfig {
  int intervals = 1;         // I
  int interval_length = 1;   // J
  double learning_rate = 1e-3;
  LrSchedule schedule = LrSchedule::kConstant;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool momentum_enabled = true;
  BiasCorrection bias_correction = BiasCorrection::kFixed;
  std::int64_t batch_size = 16;

  int iterations() const { return intervals * interval_length; }
  // Throws InvalidConfigurationError on the first violated bound.
  void Validate() const;
};

struct MomentState {
  WeightSet first;
  WeightSet second;
  int steps = 0;

  void Reset(const std::vector<LayerShape>& shapes);
};

// Returns the preconditioned gradient and advances `state`. With momentum
// disabled the gradient is returned unchanged and the state is untouched.
WeightSet MomentStep(MomentState& state, const WeightSet& gradient,
                     const LocalConfig& config);

// Mini-batches drawn without replacement within an epoch, reshuffled at every
// epoch boundary.
class BatchSampler {
 public:
  BatchSampler(Seed seed, std::int64_t shard_size, std::int64_t batch_size);

  std::span<const std::size_t> Next();

 private:
  void Reshuffle();

  RandomStream rng_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> batch_;
  std::size_t cursor_ = 0;
  std::size_t batch_size_;
};

// Sub-stream coordinates shared by every local optimizer, so that methods
// run on the same configuration see identical batches.
Seed BatchOrderSeed(Seed master_seed, int round, int client);
Seed SeedSelectionSeed(Seed master_seed, int round, int client);

struct LocalAccumulatorSet {
  int round = 0;
  int client = 0;
  int num_seeds = 0;  // K
  // Seed index -> one d_m x r block per layer. Untouched seeds are absent and
  // implicitly zero.
  std::map<int, WeightSet> blocks;

  std::vector<int> Touched() const;
  std::int64_t ParameterCount() const;
};

struct LocalContext {
  Seed master_seed;
  int round = 0;
  int client = 0;
  // Position of this round's first local step in the global schedule.
  std::int64_t step_offset = 0;
  std::int64_t total_steps = 1;
  // Keep a copy of W just before the weight reset (verification only).
  bool keep_pre_reset = false;
};

struct LocalTrainingResult {
  LocalAccumulatorSet accumulators;
  std::vector<int> sampled_seeds;  // one entry per interval
  std::optional<WeightSet> pre_reset;
};

LocalTrainingResult LocalTraining(const TaskModel& model, WeightSet& weights,
                                  const SeedPool& pool, const Dataset& shard,
                                  const LocalConfig& config,
                                  const SketchSpec& sketch,
                                  const LocalContext& context);

struct PeakStateCount {
  std::int64_t weights = 0;  // d_m d_n + (d_m + d_n) r
  std::int64_t state = 0;    // 3 d_m r: G_B and two moments
  std::int64_t total() const { return weights + state; }
};

PeakStateCount PeakStateParameterCount(const std::vector<LayerShape>& shapes,
                                       std::int64_t rank);

}  // namespace fedkrso

#endif  // FEDKRSO_LOCAL_TRAINER_H_
