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

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "fedkrso/errors.h"
#include "test_util.h"

namespace fedkrso {
namespace {

using testing::RandomMatrix;
using testing::RandomWeights;

struct TaskCase {
  std::string name;
  SyntheticTaskConfig config;
};

SyntheticTaskConfig Config(TaskVariant variant, OutputHead head = OutputHead::kSquared) {
  SyntheticTaskConfig c;
  c.variant = variant;
  c.input_dim = 7;
  c.output_dim = variant == TaskVariant::kQuadratic ? 5 : 4;
  c.hidden_dim = 6;
  c.num_examples = 12;
  c.mlp_head = head;
  return c;
}

std::vector<TaskCase> AllCases() {
  return {{"quadratic", Config(TaskVariant::kQuadratic)},
          {"logistic", Config(TaskVariant::kLogistic)},
          {"mlp_squared", Config(TaskVariant::kMlp)},
          {"mlp_softmax", Config(TaskVariant::kMlp, OutputHead::kSoftmax)}};
}

void PrintTo(const TaskCase& c, std::ostream* os) { *os << c.name; }

class TaskOracleTest : public ::testing::TestWithParam<TaskCase> {};

// Central differences on every weight entry.
TEST_P(TaskOracleTest, GradientMatchesFiniteDifferences) {
  const SyntheticTask task = MakeSyntheticTask(GetParam().config, Seed{21});
  RandomStream rng(Seed{22});
  WeightSet w = RandomWeights(rng, task.model.layer_shapes(), 0.3);
  const Batch batch = FullBatch(task.data);
  const WeightSet g = task.model.Gradient(w, batch);
  const double h = 1e-6;
  for (std::size_t l = 0; l < w.size(); ++l) {
    for (Eigen::Index i = 0; i < w[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < w[l].cols(); ++j) {
        const double saved = w[l](i, j);
        w[l](i, j) = saved + h;
        const double up = task.model.Loss(w, batch);
        w[l](i, j) = saved - h;
        const double down = task.model.Loss(w, batch);
        w[l](i, j) = saved;
        EXPECT_NEAR(g[l](i, j), (up - down) / (2 * h), 1e-7)
            << "layer " << l << " entry " << i << "," << j;
      }
    }
  }
}

// d/dB loss(W + B P) at B = 0, by finite differences in B.
TEST_P(TaskOracleTest, CompressedGradientMatchesDirectionalDerivative) {
  const SyntheticTask task = MakeSyntheticTask(GetParam().config, Seed{23});
  RandomStream rng(Seed{24});
  const WeightSet w = RandomWeights(rng, task.model.layer_shapes(), 0.3);
  const Batch batch = FullBatch(task.data);
  const std::vector<ProjectionMatrix> ps = GenerateLayerProjections(
      Seed{25}, task.model.layer_shapes(), {3, SketchKind::kGaussian});
  const WeightSet gb = task.model.CompressedGradient(w, ps, batch);
  const double h = 1e-6;
  for (std::size_t l = 0; l < w.size(); ++l) {
    ASSERT_EQ(gb[l].rows(), w[l].rows());
    ASSERT_EQ(gb[l].cols(), 3);
    for (Eigen::Index i = 0; i < gb[l].rows(); ++i) {
      for (Eigen::Index k = 0; k < 3; ++k) {
        WeightSet up = w;
        WeightSet down = w;
        up[l].row(i) += h * ps[l].entries.row(k);
        down[l].row(i) -= h * ps[l].entries.row(k);
        const double fd =
            (task.model.Loss(up, batch) - task.model.Loss(down, batch)) / (2 * h);
        EXPECT_NEAR(gb[l](i, k), fd, 1e-7);
      }
    }
  }
  // Same quantity through the full gradient.
  const WeightSet g = task.model.Gradient(w, batch);
  for (std::size_t l = 0; l < w.size(); ++l) {
    EXPECT_LT((gb[l] - g[l] * ps[l].entries.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST_P(TaskOracleTest, SyntheticTaskIsDeterministic) {
  const SyntheticTask a = MakeSyntheticTask(GetParam().config, Seed{1});
  const SyntheticTask b = MakeSyntheticTask(GetParam().config, Seed{1});
  const SyntheticTask c = MakeSyntheticTask(GetParam().config, Seed{2});
  EXPECT_EQ(a.data.features, b.data.features);
  EXPECT_EQ(a.data.targets, b.data.targets);
  EXPECT_EQ(a.data.labels, b.data.labels);
  EXPECT_NE(a.data.features, c.data.features);
}

INSTANTIATE_TEST_SUITE_P(Variants, TaskOracleTest, ::testing::ValuesIn(AllCases()),
                         [](const auto& info) { return info.param.name; });

TEST(QuadraticTest, LossMatchesExplicitSum) {
  const SyntheticTask task = MakeSyntheticTask(Config(TaskVariant::kQuadratic), Seed{3});
  RandomStream rng(Seed{4});
  const WeightSet w = RandomWeights(rng, task.model.layer_shapes());
  double total = 0.0;
  for (Eigen::Index i = 0; i < task.data.size(); ++i) {
    const Eigen::VectorXd r =
        w[0] * task.data.features.row(i).transpose() - task.data.targets.row(i).transpose();
    total += r.squaredNorm();
  }
  EXPECT_NEAR(task.model.Loss(w, FullBatch(task.data)),
              total / (2.0 * task.data.size()), 1e-12);
}

TEST(QuadraticTest, SmoothnessIsTopEigenvalueOfSecondMoment) {
  SyntheticTaskConfig c = Config(TaskVariant::kQuadratic);
  c.num_examples = 40;
  const SyntheticTask task = MakeSyntheticTask(c, Seed{5});
  const Matrix& x = task.data.features;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(x.transpose() * x / x.rows());
  EXPECT_NEAR(task.model.SmoothnessConstant(task.data), eig.eigenvalues().maxCoeff(),
              1e-9);
}

TEST(LogisticTest, ZeroWeightsGiveLogC) {
  SyntheticTaskConfig c = Config(TaskVariant::kLogistic);
  c.output_dim = 6;
  const SyntheticTask task = MakeSyntheticTask(c, Seed{6});
  EXPECT_NEAR(task.model.Loss(ZerosLike(task.model.layer_shapes()), FullBatch(task.data)),
              std::log(6.0), 1e-12);
  for (int label : task.data.labels) {
    EXPECT_GE(label, 0);
    EXPECT_LT(label, 6);
  }
}

// Random pairs never violate ||grad(a) - grad(b)|| <= L ||a - b||.
TEST(LogisticTest, SmoothnessBoundHoldsOnRandomPairs) {
  SyntheticTaskConfig c = Config(TaskVariant::kLogistic);
  c.num_examples = 50;
  const SyntheticTask task = MakeSyntheticTask(c, Seed{7});
  const Batch batch = FullBatch(task.data);
  const double lip = task.model.SmoothnessConstant(task.data);
  RandomStream rng(Seed{8});
  for (int trial = 0; trial < 50; ++trial) {
    const WeightSet a = RandomWeights(rng, task.model.layer_shapes(), 1.0);
    const WeightSet b = RandomWeights(rng, task.model.layer_shapes(), 1.0);
    const Matrix dg = task.model.Gradient(a, batch)[0] - task.model.Gradient(b, batch)[0];
    EXPECT_LE(dg.norm(), lip * (a[0] - b[0]).norm() * (1 + 1e-12));
  }
}

TEST(MlpTest, HasNoSmoothnessConstant) {
  const SyntheticTask task = MakeSyntheticTask(Config(TaskVariant::kMlp), Seed{9});
  EXPECT_THROW(task.model.SmoothnessConstant(task.data), InvalidArgumentError);
  const WeightSet w = InitialWeights(task.model, Seed{9});
  ASSERT_EQ(w.size(), 2u);
  EXPECT_GT(w[0].norm(), 0.0);
}

TEST(SyntheticTaskTest, PlantedMapHasRequestedRank) {
  SyntheticTaskConfig c = Config(TaskVariant::kQuadratic);
  c.input_dim = 12;
  c.output_dim = 10;
  c.planted_rank = 3;
  const SyntheticTask task = MakeSyntheticTask(c, Seed{10});
  const Eigen::JacobiSVD<Matrix> svd(task.planted[0]);
  const Eigen::VectorXd s = svd.singularValues();
  EXPECT_GT(s(2), 1e-6);
  EXPECT_LT(s(3), 1e-10);
  c.planted_rank = 11;
  EXPECT_THROW(MakeSyntheticTask(c, Seed{10}), InvalidConfigurationError);
}

std::vector<Dataset> SplitEvenly(const Dataset& data, int n) {
  std::vector<Dataset> shards;
  const std::size_t per = static_cast<std::size_t>(data.size()) / n;
  for (int c = 0; c < n; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = c * per; i < (c + 1) * per; ++i) idx.push_back(i);
    shards.push_back(data.Subset(idx));
  }
  return shards;
}

TEST(GlobalObjectiveTest, QuadraticOptimumHasZeroGradient) {
  SyntheticTaskConfig c = Config(TaskVariant::kQuadratic);
  c.num_examples = 90;
  const SyntheticTask task = MakeSyntheticTask(c, Seed{11});
  // Unequal shard sizes exercise the 1/m_n weighting.
  const std::vector<Dataset> shards = {
      task.data.Subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}),
      SplitEvenly(task.data, 1)[0]};
  const OptimumEstimate opt = SolveGlobalOptimum(task.model, shards);
  EXPECT_LT(opt.grad_norm_sq, 1e-20);
  RandomStream rng(Seed{12});
  for (int t = 0; t < 5; ++t) {
    WeightSet w = opt.weights;
    w[0] += RandomMatrix(rng, w[0].rows(), w[0].cols(), 0.01);
    EXPECT_GT(GlobalLoss(task.model, w, shards), opt.loss);
  }
}

TEST(GlobalObjectiveTest, LogisticOptimumIsStationary) {
  SyntheticTaskConfig c = Config(TaskVariant::kLogistic);
  c.num_examples = 200;
  c.signal_scale = 2.0;
  const SyntheticTask task = MakeSyntheticTask(c, Seed{13});
  const std::vector<Dataset> shards = SplitEvenly(task.data, 4);
  const OptimumEstimate opt = SolveGlobalOptimum(task.model, shards);
  EXPECT_LT(opt.grad_norm_sq, 1e-10);
  EXPECT_LT(opt.loss, std::log(4.0));
}

TEST(GlobalObjectiveTest, GlobalGradientIsMeanOfShardGradients) {
  const SyntheticTask task = MakeSyntheticTask(Config(TaskVariant::kLogistic), Seed{14});
  const std::vector<Dataset> shards = SplitEvenly(task.data, 3);
  RandomStream rng(Seed{15});
  const WeightSet w = RandomWeights(rng, task.model.layer_shapes());
  Matrix expected = Matrix::Zero(w[0].rows(), w[0].cols());
  for (const Dataset& s : shards) expected += task.model.Gradient(w, FullBatch(s))[0] / 3.0;
  EXPECT_LT((GlobalGradient(task.model, w, shards)[0] - expected).cwiseAbs().maxCoeff(),
            1e-14);
}

TEST(NoiseEstimateTest, IdenticalShardsHaveNoHeterogeneity) {
  const SyntheticTask task = MakeSyntheticTask(Config(TaskVariant::kQuadratic), Seed{16});
  const std::vector<Dataset> shards = {task.data, task.data, task.data};
  RandomStream rng(Seed{17});
  const WeightSet w = RandomWeights(rng, task.model.layer_shapes());
  const NoiseHeterogeneityEstimate est =
      EstimateNoiseAndHeterogeneity(task.model, w, shards, 4);
  EXPECT_NEAR(est.heterogeneity_sq, 0.0, 1e-10);
  // Brute-force per-example variance for the single distinct shard.
  const Matrix full = task.model.Gradient(w, FullBatch(task.data))[0];
  double dev = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(task.data.size()); ++i) {
    dev += (task.model.Gradient(w, MakeBatch(task.data, {&i, 1}))[0] - full).squaredNorm();
  }
  const double m = static_cast<double>(task.data.size());
  EXPECT_NEAR(est.sigma_sq_per_example, dev / m, 1e-9);
  EXPECT_NEAR(est.sigma_sq_per_step, dev / m / 4.0 * (m - 4.0) / (m - 1.0), 1e-9);
}

TEST(TaskModelTest, RejectsMismatchedShapes) {
  const SyntheticTask task = MakeSyntheticTask(Config(TaskVariant::kQuadratic), Seed{18});
  const WeightSet wrong = {Matrix::Zero(2, 2)};
  EXPECT_THROW(task.model.Loss(wrong, FullBatch(task.data)), InvalidArgumentError);
}

TEST(TaskModelTest, NamesRoundTrip) {
  for (TaskVariant v : {TaskVariant::kQuadratic, TaskVariant::kLogistic, TaskVariant::kMlp}) {
    EXPECT_EQ(ParseTaskVariant(TaskVariantName(v)), v);
  }
  EXPECT_EQ(ParseOutputHead(OutputHeadName(OutputHead::kSoftmax)), OutputHead::kSoftmax);
  EXPECT_THROW(ParseTaskVariant("cnn"), InvalidConfigurationError);
}

}  // namespace
}  // namespace fedkrso
