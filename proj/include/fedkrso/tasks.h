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

// Synthetic differentiable tasks.
//
// Every variant exposes three oracles on a mini-batch: the loss, the full
// gradient with respect to each weight matrix, and the compressed gradient
// grad(W) * P^T obtained by differentiating loss(W + B P) in B at B = 0.
// The compressed path never forms a d_m x d_n intermediate: it projects the
// layer input (X P^T, m x r) and contracts it with the upstream error.
//
//   kQuadratic  W: d_out x d_in, loss = 1/(2m) sum ||W x - y||^2
//   kLogistic   W: C x d_in, softmax cross-entropy
//   kMlp        W1: h x d_in, W2: d_out x h, y_hat = W2 tanh(W1 x),
//               squared or softmax head

#ifndef FEDKRSO_TASKS_H_
#define FEDKRSO_TASKS_H_

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fedkrso/dataset.h"
#include "fedkrso/random.h"
#include "fedkrso/sketch.h"
#include "fedkrso/weights.h"

namespace fedkrso {

enum class TaskVariant { kQuadratic, kLogistic, kMlp };
enum class OutputHead { kSquared, kSoftmax };

std::string_view TaskVariantName(TaskVariant variant);
TaskVariant ParseTaskVariant(std::string_view name);
std::string_view OutputHeadName(OutputHead head);
OutputHead ParseOutputHead(std::string_view name);

class TaskModel {
 public:
  static TaskModel Quadratic(std::int64_t input_dim, std::int64_t output_dim);
  static TaskModel Logistic(std::int64_t input_dim, std::int64_t num_classes);
  static TaskModel Mlp(std::int64_t input_dim, std::int64_t hidden_dim,
                       std::int64_t output_dim, OutputHead head);

  TaskVariant variant() const { return variant_; }
  OutputHead head() const { return head_; }
  std::int64_t input_dim() const { return input_dim_; }
  std::int64_t output_dim() const { return output_dim_; }
  const std::vector<LayerShape>& layer_shapes() const { return shapes_; }

  double Loss(const WeightSet& weights, const Batch& batch) const;
  WeightSet Gradient(const WeightSet& weights, const Batch& batch) const;
  // One d_m x r block per layer.
  WeightSet CompressedGradient(const WeightSet& weights,
                               std::span<const ProjectionMatrix> projections,
                               const Batch& batch) const;

  // Lipschitz constant of the full-shard gradient. Exact for kQuadratic
  // (lambda_max of the feature second-moment matrix), an upper bound for
  // kLogistic; kMlp has none and throws.
  double SmoothnessConstant(const Dataset& shard) const;

 private:
  TaskModel(TaskVariant variant, OutputHead head, std::int64_t input_dim,
            std::int64_t output_dim, std::vector<LayerShape> shapes);

  void CheckWeights(const WeightSet& weights) const;
  void CheckBatch(const Batch& batch) const;

  TaskVariant variant_;
  OutputHead head_;
  std::int64_t input_dim_;
  std::int64_t output_dim_;
  std::vector<LayerShape> shapes_;
};

// Objective averaged over clients, F(W) = (1/N) sum_n F_n(W).
double GlobalLoss(const TaskModel& model, const WeightSet& weights,
                  std::span<const Dataset> shards);
WeightSet GlobalGradient(const TaskModel& model, const WeightSet& weights,
                         std::span<const Dataset> shards);

struct NoiseHeterogeneityEstimate {
  // max_n of the mean squared deviation of per-example gradients from the
  // shard gradient.
  double sigma_sq_per_example = 0.0;
  // Same quantity for a mini-batch of `batch_size` drawn without replacement.
  double sigma_sq_per_step = 0.0;
  // (1/N) sum_n ||grad F_n||^2 - ||grad F||^2.
  double heterogeneity_sq = 0.0;
};

NoiseHeterogeneityEstimate EstimateNoiseAndHeterogeneity(
    const TaskModel& model, const WeightSet& weights,
    std::span<const Dataset> shards, std::int64_t batch_size);

struct OptimumEstimate {
  WeightSet weights;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
};

// Global minimizer: closed form for kQuadratic, accelerated full-batch
// gradient descent for kLogistic. Not defined for kMlp.
OptimumEstimate SolveGlobalOptimum(const TaskModel& model,
                                   std::span<const Dataset> shards,
                                   int max_iterations = 20000,
                                   double grad_tolerance = 1e-12);

struct SyntheticTaskConfig {
  TaskVariant variant = TaskVariant::kQuadratic;
  std::int64_t input_dim = 16;
  std::int64_t output_dim = 16;  // classes for kLogistic
  std::int64_t hidden_dim = 32;  // kMlp only
  std::int64_t num_examples = 1024;
  std::int64_t planted_rank = 0;  // 0 = full rank
  double noise = 0.1;             // target noise std (squared heads)
  double signal_scale = 1.0;      // typical row norm of the planted map
  OutputHead mlp_head = OutputHead::kSquared;
};

struct SyntheticTask {
  TaskModel model;
  Dataset data;
  WeightSet planted;  // ground truth (teacher weights for kMlp)
};

TaskModel MakeTaskModel(const SyntheticTaskConfig& config);

// Gaussian features; targets from a planted map plus noise, or labels drawn
// from the softmax of planted logits for classification heads.
SyntheticTask MakeSyntheticTask(const SyntheticTaskConfig& config, Seed seed);

// Zeros for the linear variants; scaled Gaussian for the MLP.
WeightSet InitialWeights(const TaskModel& model, Seed seed);

}  // namespace fedkrso

#endif  // FEDKRSO_TASKS_H_
