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

#include "fedkrso/tasks.h"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "fedkrso/errors.h"

namespace fedkrso {
namespace {

// Row-wise log-sum-exp, m x 1.
Eigen::VectorXd LogSumExpRows(const Matrix& logits) {
  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  return row_max.array() +
         (logits.colwise() - row_max).array().exp().rowwise().sum().log();
}

// Loss of the output layer and its derivative with respect to the outputs
// (already divided by the batch size).
double HeadLossAndDelta(OutputHead head, const Matrix& outputs,
                        const Matrix& targets, Matrix* delta) {
  const double m = static_cast<double>(outputs.rows());
  if (head == OutputHead::kSquared) {
    Matrix residual = outputs - targets;
    const double loss = 0.5 * residual.squaredNorm() / m;
    if (delta != nullptr) *delta = residual / m;
    return loss;
  }
  const Eigen::VectorXd lse = LogSumExpRows(outputs);
  // -sum_c y_c log softmax_c = sum_c y_c (lse - z_c) for each row.
  const double loss =
      ((targets.array().colwise() * lse.array()) - targets.array() * outputs.array())
          .sum() /
      m;
  if (delta != nullptr) {
    Matrix probs = (outputs.colwise() - lse).array().exp().matrix();
    *delta = (probs - targets) / m;
  }
  return loss;
}

double MaxEigenvalueOfSecondMoment(const Matrix& features) {
  const Matrix second_moment =
      features.transpose() * features / static_cast<double>(features.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(second_moment,
                                               Eigen::EigenvaluesOnly);
  return solver.eigenvalues().maxCoeff();
}

Matrix RandomOrthonormalColumns(RandomStream& rng, std::int64_t rows,
                                std::int64_t cols) {
  Matrix g(rows, cols);
  for (std::int64_t i = 0; i < rows; ++i) {
    for (std::int64_t j = 0; j < cols; ++j) g(i, j) = rng.NextGaussian();
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(rows, cols);
}

Matrix GaussianMatrix(RandomStream& rng, std::int64_t rows, std::int64_t cols,
                      double scale) {
  Matrix g(rows, cols);
  for (std::int64_t i = 0; i < rows; ++i) {
    for (std::int64_t j = 0; j < cols; ++j) g(i, j) = scale * rng.NextGaussian();
  }
  return g;
}

void SampleSoftmaxLabels(RandomStream& rng, const Matrix& logits,
                         Dataset* data) {
  const std::int64_t m = logits.rows();
  const std::int64_t classes = logits.cols();
  const Eigen::VectorXd lse = LogSumExpRows(logits);
  data->num_classes = static_cast<int>(classes);
  data->labels.resize(m);
  data->targets = Matrix::Zero(m, classes);
  for (std::int64_t i = 0; i < m; ++i) {
    const double u = rng.NextUniform();
    double cumulative = 0.0;
    int label = static_cast<int>(classes) - 1;
    for (std::int64_t c = 0; c < classes; ++c) {
      cumulative += std::exp(logits(i, c) - lse(i));
      if (u < cumulative) {
        label = static_cast<int>(c);
        break;
      }
    }
    data->labels[i] = label;
    data->targets(i, label) = 1.0;
  }
}

}  // namespace

std::string_view TaskVariantName(TaskVariant variant) {
  switch (variant) {
    case TaskVariant::kQuadratic:
      return "quadratic";
    case TaskVariant::kLogistic:
      return "logistic";
    case TaskVariant::kMlp:
      return "mlp";
  }
  return "unknown";
}

TaskVariant ParseTaskVariant(std::string_view name) {
  if (name == "quadratic") return TaskVariant::kQuadratic;
  if (name == "logistic") return TaskVariant::kLogistic;
  if (name == "mlp") return TaskVariant::kMlp;
  throw InvalidConfigurationError("unknown task variant '" + std::string(name) +
                                  "'");
}

std::string_view OutputHeadName(OutputHead head) {
  return head == OutputHead::kSquared ? "squared" : "softmax";
}

OutputHead ParseOutputHead(std::string_view name) {
  if (name == "squared") return OutputHead::kSquared;
  if (name == "softmax") return OutputHead::kSoftmax;
  throw InvalidConfigurationError("unknown output head '" + std::string(name) +
                                  "'");
}

TaskModel::TaskModel(TaskVariant variant, OutputHead head,
                     std::int64_t input_dim, std::int64_t output_dim,
                     std::vector<LayerShape> shapes)
    : variant_(variant),
      head_(head),
      input_dim_(input_dim),
      output_dim_(output_dim),
      shapes_(std::move(shapes)) {
  if (input_dim < 1 || output_dim < 1) {
    throw InvalidConfigurationError("task dimensions must be >= 1");
  }
}

TaskModel TaskModel::Quadratic(std::int64_t input_dim, std::int64_t output_dim) {
  return TaskModel(TaskVariant::kQuadratic, OutputHead::kSquared, input_dim,
                   output_dim, {{output_dim, input_dim}});
}

TaskModel TaskModel::Logistic(std::int64_t input_dim, std::int64_t num_classes) {
  if (num_classes < 2) {
    throw InvalidConfigurationError("logistic task needs >= 2 classes");
  }
  return TaskModel(TaskVariant::kLogistic, OutputHead::kSoftmax, input_dim,
                   num_classes, {{num_classes, input_dim}});
}

TaskModel TaskModel::Mlp(std::int64_t input_dim, std::int64_t hidden_dim,
                         std::int64_t output_dim, OutputHead head) {
  if (hidden_dim < 1) throw InvalidConfigurationError("hidden_dim must be >= 1");
  return TaskModel(TaskVariant::kMlp, head, input_dim, output_dim,
                   {{hidden_dim, input_dim}, {output_dim, hidden_dim}});
}

void TaskModel::CheckWeights(const WeightSet& weights) const {
  if (ShapesOf(weights) != shapes_) {
    throw InvalidArgumentError("weight shapes do not match the task");
  }
}

void TaskModel::CheckBatch(const Batch& batch) const {
  if (batch.size() < 1) throw InvalidArgumentError("empty batch");
  if (batch.inputs.cols() != input_dim_ || batch.targets.cols() != output_dim_ ||
      batch.targets.rows() != batch.inputs.rows()) {
    throw InvalidArgumentError("batch dimensions do not match the task");
  }
}

double TaskModel::Loss(const WeightSet& weights, const Batch& batch) const {
  CheckWeights(weights);
  CheckBatch(batch);
  if (variant_ != TaskVariant::kMlp) {
    const Matrix outputs = batch.inputs * weights[0].transpose();
    return HeadLossAndDelta(head_, outputs, batch.targets, nullptr);
  }
  const Matrix hidden = (batch.inputs * weights[0].transpose()).array().tanh().matrix();
  const Matrix outputs = hidden * weights[1].transpose();
  return HeadLossAndDelta(head_, outputs, batch.targets, nullptr);
}

WeightSet TaskModel::Gradient(const WeightSet& weights, const Batch& batch) const {
  CheckWeights(weights);
  CheckBatch(batch);
  Matrix delta;
  if (variant_ != TaskVariant::kMlp) {
    const Matrix outputs = batch.inputs * weights[0].transpose();
    HeadLossAndDelta(head_, outputs, batch.targets, &delta);
    return {delta.transpose() * batch.inputs};
  }
  const Matrix hidden = (batch.inputs * weights[0].transpose()).array().tanh().matrix();
  const Matrix outputs = hidden * weights[1].transpose();
  HeadLossAndDelta(head_, outputs, batch.targets, &delta);
  const Matrix hidden_delta =
      ((delta * weights[1]).array() * (1.0 - hidden.array().square())).matrix();
  return {hidden_delta.transpose() * batch.inputs, delta.transpose() * hidden};
}

WeightSet TaskModel::CompressedGradient(
    const WeightSet& weights, std::span<const ProjectionMatrix> projections,
    const Batch& batch) const {
  CheckWeights(weights);
  CheckBatch(batch);
  if (projections.size() != shapes_.size()) {
    throw InvalidArgumentError("need one projection per layer");
  }
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    if (projections[l].cols() != shapes_[l].cols) {
      throw InvalidArgumentError("projection width does not match layer " +
                                 std::to_string(l));
    }
  }
  Matrix delta;
  if (variant_ != TaskVariant::kMlp) {
    const Matrix outputs = batch.inputs * weights[0].transpose();
    HeadLossAndDelta(head_, outputs, batch.targets, &delta);
    const Matrix projected_inputs = batch.inputs * projections[0].entries.transpose();
    return {delta.transpose() * projected_inputs};
  }
  const Matrix hidden = (batch.inputs * weights[0].transpose()).array().tanh().matrix();
  const Matrix outputs = hidden * weights[1].transpose();
  HeadLossAndDelta(head_, outputs, batch.targets, &delta);
  const Matrix hidden_delta =
      ((delta * weights[1]).array() * (1.0 - hidden.array().square())).matrix();
  const Matrix projected_inputs = batch.inputs * projections[0].entries.transpose();
  const Matrix projected_hidden = hidden * projections[1].entries.transpose();
  return {hidden_delta.transpose() * projected_inputs,
          delta.transpose() * projected_hidden};
}

double TaskModel::SmoothnessConstant(const Dataset& shard) const {
  if (shard.size() == 0) throw InvalidArgumentError("empty shard");
  switch (variant_) {
    case TaskVariant::kQuadratic:
      return MaxEigenvalueOfSecondMoment(shard.features);
    case TaskVariant::kLogistic:
      // The softmax cross-entropy Hessian in the logits is bounded by 1/2.
      return 0.5 * MaxEigenvalueOfSecondMoment(shard.features);
    case TaskVariant::kMlp:
      break;
  }
  throw InvalidArgumentError("no smoothness constant for the MLP task");
}

double GlobalLoss(const TaskModel& model, const WeightSet& weights,
                  std::span<const Dataset> shards) {
  if (shards.empty()) throw InvalidArgumentError("no shards");
  double total = 0.0;
  for (const Dataset& shard : shards) total += model.Loss(weights, FullBatch(shard));
  return total / static_cast<double>(shards.size());
}

WeightSet GlobalGradient(const TaskModel& model, const WeightSet& weights,
                         std::span<const Dataset> shards) {
  if (shards.empty()) throw InvalidArgumentError("no shards");
  WeightSet total = ZerosLike(model.layer_shapes());
  for (const Dataset& shard : shards) {
    const WeightSet g = model.Gradient(weights, FullBatch(shard));
    for (std::size_t l = 0; l < g.size(); ++l) total[l] += g[l];
  }
  for (Matrix& m : total) m /= static_cast<double>(shards.size());
  return total;
}

NoiseHeterogeneityEstimate EstimateNoiseAndHeterogeneity(
    const TaskModel& model, const WeightSet& weights,
    std::span<const Dataset> shards, std::int64_t batch_size) {
  if (shards.empty()) throw InvalidArgumentError("no shards");
  if (batch_size < 1) throw InvalidArgumentError("batch_size must be >= 1");
  NoiseHeterogeneityEstimate est;
  WeightSet mean_gradient = ZerosLike(model.layer_shapes());
  double mean_local_norm_sq = 0.0;
  for (const Dataset& shard : shards) {
    if (shard.size() == 0) throw InvalidArgumentError("empty shard");
    const WeightSet shard_gradient = model.Gradient(weights, FullBatch(shard));
    mean_local_norm_sq += FrobeniusNormSquared(shard_gradient);
    for (std::size_t l = 0; l < shard_gradient.size(); ++l) {
      mean_gradient[l] += shard_gradient[l];
    }

    double deviation = 0.0;
    for (std::int64_t i = 0; i < shard.size(); ++i) {
      const std::size_t index = static_cast<std::size_t>(i);
      const WeightSet g = model.Gradient(weights, MakeBatch(shard, {&index, 1}));
      for (std::size_t l = 0; l < g.size(); ++l) {
        deviation += (g[l] - shard_gradient[l]).squaredNorm();
      }
    }
    const double m = static_cast<double>(shard.size());
    const double per_example = deviation / m;
    const double b = static_cast<double>(std::min(batch_size, shard.size()));
    // Variance of a without-replacement sample mean.
    const double per_step =
        shard.size() > 1 ? per_example / b * (m - b) / (m - 1.0) : 0.0;
    est.sigma_sq_per_example = std::max(est.sigma_sq_per_example, per_example);
    est.sigma_sq_per_step = std::max(est.sigma_sq_per_step, per_step);
  }
  const double n = static_cast<double>(shards.size());
  for (Matrix& m : mean_gradient) m /= n;
  est.heterogeneity_sq =
      std::max(0.0, mean_local_norm_sq / n - FrobeniusNormSquared(mean_gradient));
  return est;
}

OptimumEstimate SolveGlobalOptimum(const TaskModel& model,
                                   std::span<const Dataset> shards,
                                   int max_iterations, double grad_tolerance) {
  if (shards.empty()) throw InvalidArgumentError("no shards");
  OptimumEstimate out;
  if (model.variant() == TaskVariant::kQuadratic) {
    // Normal equations of (1/N) sum_n 1/(2 m_n) ||X_n W^T - Y_n||^2.
    const std::int64_t d = model.input_dim();
    Matrix gram = Matrix::Zero(d, d);
    Matrix cross = Matrix::Zero(d, model.output_dim());
    for (const Dataset& shard : shards) {
      const double m = static_cast<double>(shard.size());
      gram += shard.features.transpose() * shard.features / m;
      cross += shard.features.transpose() * shard.targets / m;
    }
    out.weights = {gram.ldlt().solve(cross).transpose()};
  } else if (model.variant() == TaskVariant::kLogistic) {
    double smoothness = 0.0;
    for (const Dataset& shard : shards) {
      smoothness = std::max(smoothness, model.SmoothnessConstant(shard));
    }
    const double step = 1.0 / smoothness;
    WeightSet x = ZerosLike(model.layer_shapes());
    WeightSet y = x;
    double momentum_count = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
      const WeightSet g = GlobalGradient(model, y, shards);
      if (FrobeniusNormSquared(g) < grad_tolerance) {
        x = y;
        break;
      }
      WeightSet x_next = y;
      for (std::size_t l = 0; l < g.size(); ++l) x_next[l] -= step * g[l];
      // Gradient-based restart keeps the iteration monotone in practice.
      double restart_test = 0.0;
      for (std::size_t l = 0; l < g.size(); ++l) {
        restart_test += g[l].cwiseProduct(x_next[l] - x[l]).sum();
      }
      momentum_count = restart_test > 0.0 ? 0.0 : momentum_count + 1.0;
      const double beta = momentum_count / (momentum_count + 3.0);
      for (std::size_t l = 0; l < g.size(); ++l) {
        y[l] = x_next[l] + beta * (x_next[l] - x[l]);
      }
      x = std::move(x_next);
    }
    out.weights = std::move(x);
  } else {
    throw InvalidArgumentError("no global optimum solver for the MLP task");
  }
  out.loss = GlobalLoss(model, out.weights, shards);
  out.grad_norm_sq = FrobeniusNormSquared(GlobalGradient(model, out.weights, shards));
  return out;
}

TaskModel MakeTaskModel(const SyntheticTaskConfig& config) {
  switch (config.variant) {
    case TaskVariant::kQuadratic:
      return TaskModel::Quadratic(config.input_dim, config.output_dim);
    case TaskVariant::kLogistic:
      return TaskModel::Logistic(config.input_dim, config.output_dim);
    case TaskVariant::kMlp:
      return TaskModel::Mlp(config.input_dim, config.hidden_dim, config.output_dim,
                            config.mlp_head);
  }
  throw InvalidConfigurationError("unknown task variant");
}

SyntheticTask MakeSyntheticTask(const SyntheticTaskConfig& config, Seed seed) {
  if (config.num_examples < 1) {
    throw InvalidConfigurationError("task.examples must be >= 1");
  }
  if (config.planted_rank < 0) {
    throw InvalidConfigurationError("task.planted_rank must be >= 0");
  }
  if (config.noise < 0.0) throw InvalidConfigurationError("task.noise must be >= 0");
  RandomStream planted_rng(DeriveSeed(seed, StreamTag::kPlantedModel));
  RandomStream data_rng(DeriveSeed(seed, StreamTag::kDataGeneration));
  const std::int64_t d_in = config.input_dim;
  const std::int64_t d_out = config.output_dim;

  const TaskModel model = MakeTaskModel(config);
  WeightSet planted;
  if (config.variant == TaskVariant::kMlp) {
    const double h = static_cast<double>(config.hidden_dim);
    planted = {GaussianMatrix(planted_rng, config.hidden_dim, d_in,
                              1.0 / std::sqrt(static_cast<double>(d_in))),
               GaussianMatrix(planted_rng, d_out, config.hidden_dim,
                              config.signal_scale / std::sqrt(h))};
  } else {
    const std::int64_t max_rank = std::min(d_in, d_out);
    if (config.planted_rank > max_rank) {
      throw InvalidConfigurationError("task.planted_rank exceeds min(d_in, d_out)");
    }
    if (config.planted_rank == 0) {
      planted = {GaussianMatrix(planted_rng, d_out, d_in,
                                config.signal_scale /
                                    std::sqrt(static_cast<double>(d_in)))};
    } else {
      // Equal singular values; rows have norm ~ signal_scale on average.
      const std::int64_t k = config.planted_rank;
      const Matrix u = RandomOrthonormalColumns(planted_rng, d_out, k);
      const Matrix v = RandomOrthonormalColumns(planted_rng, d_in, k);
      const double scale = config.signal_scale *
                           std::sqrt(static_cast<double>(d_out) /
                                     static_cast<double>(k));
      planted = {scale * u * v.transpose()};
    }
  }

  Dataset data;
  data.features = GaussianMatrix(data_rng, config.num_examples, d_in, 1.0);
  Matrix outputs;
  if (config.variant == TaskVariant::kMlp) {
    const Matrix hidden =
        (data.features * planted[0].transpose()).array().tanh().matrix();
    outputs = hidden * planted[1].transpose();
  } else {
    outputs = data.features * planted[0].transpose();
  }
  if (model.head() == OutputHead::kSoftmax) {
    SampleSoftmaxLabels(data_rng, outputs, &data);
  } else {
    data.targets = outputs + GaussianMatrix(data_rng, config.num_examples, d_out,
                                            config.noise);
  }
  return SyntheticTask{model, std::move(data), std::move(planted)};
}

WeightSet InitialWeights(const TaskModel& model, Seed seed) {
  WeightSet w = ZerosLike(model.layer_shapes());
  if (model.variant() != TaskVariant::kMlp) return w;
  RandomStream rng(DeriveSeed(seed, StreamTag::kWeightInit));
  for (Matrix& layer : w) {
    layer = GaussianMatrix(rng, layer.rows(), layer.cols(),
                           1.0 / std::sqrt(static_cast<double>(layer.cols())));
  }
  return w;
}

}  // namespace fedkrso
