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

#include "fedkrso/sketch.h"

#include <gtest/gtest.h>

#include "fedkrso/errors.h"

namespace fedkrso {
namespace {

TEST(SeedPoolTest, DeterministicAndNestedAcrossK) {
  const SeedPool a = MakeSeedPool(Seed{3}, 5, 10);
  const SeedPool b = MakeSeedPool(Seed{3}, 5, 10);
  const SeedPool small = MakeSeedPool(Seed{3}, 5, 4);
  ASSERT_EQ(a.size(), 10);
  EXPECT_EQ(a.round, 5);
  EXPECT_EQ(a.seeds, b.seeds);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(small.seeds[k], a.seeds[k]);
  EXPECT_NE(MakeSeedPool(Seed{3}, 6, 10).seeds, a.seeds);
}

TEST(SeedPoolTest, RejectsBadArguments) {
  EXPECT_THROW(MakeSeedPool(Seed{1}, 0, 0), InvalidConfigurationError);
  EXPECT_THROW(MakeSeedPool(Seed{1}, -1, 3), InvalidConfigurationError);
}

TEST(ProjectionTest, SameSeedSameMatrix) {
  const ProjectionMatrix p = GenerateProjection(Seed{9}, 4, 32, SketchKind::kGaussian, 0);
  const ProjectionMatrix q = GenerateProjection(Seed{9}, 4, 32, SketchKind::kGaussian, 0);
  const ProjectionMatrix other_layer =
      GenerateProjection(Seed{9}, 4, 32, SketchKind::kGaussian, 1);
  EXPECT_EQ(p.entries, q.entries);
  EXPECT_NE(p.entries, other_layer.entries);
  EXPECT_EQ(p.rank(), 4);
  EXPECT_EQ(p.cols(), 32);
}

TEST(ProjectionTest, GaussianEntryVarianceIsOneOverR) {
  const int r = 4;
  double sum = 0.0;
  double sum_sq = 0.0;
  int count = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Matrix p = GenerateProjection(Seed{s}, r, 64, SketchKind::kGaussian, 0).entries;
    sum += p.sum();
    sum_sq += p.squaredNorm();
    count += static_cast<int>(p.size());
  }
  EXPECT_NEAR(sum / count, 0.0, 0.01);
  EXPECT_NEAR(sum_sq / count, 1.0 / r, 0.01);
}

TEST(ProjectionTest, OrthonormalRowsScaled) {
  const int r = 5;
  const int d = 40;
  const Matrix p =
      GenerateProjection(Seed{4}, r, d, SketchKind::kRowOrthonormalScaled, 0).entries;
  const Matrix gram = p * p.transpose();
  EXPECT_LT((gram - (static_cast<double>(d) / r) * Matrix::Identity(r, r))
                .cwiseAbs()
                .maxCoeff(),
            1e-10);
}

TEST(ProjectionTest, FullRankOrthonormalIsIdentityOnProduct) {
  const int d = 16;
  const Matrix p =
      GenerateProjection(Seed{4}, d, d, SketchKind::kRowOrthonormalScaled, 0).entries;
  EXPECT_LT((p.transpose() * p - Matrix::Identity(d, d)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ProjectionTest, OrthonormalRankAboveColsRejected) {
  EXPECT_THROW(GenerateProjection(Seed{1}, 9, 8, SketchKind::kRowOrthonormalScaled, 0),
               InvalidConfigurationError);
  EXPECT_THROW(GenerateProjection(Seed{1}, 0, 8, SketchKind::kGaussian, 0),
               InvalidConfigurationError);
}

}  // namespace

void PrintTo(SketchKind kind, std::ostream* os) { *os << SketchKindName(kind); }

namespace {

class UnbiasednessTest : public ::testing::TestWithParam<SketchKind> {};

// Monte-Carlo estimate of E[P^T P] against I.
TEST_P(UnbiasednessTest, ExpectedGramIsIdentity) {
  const int r = 3;
  const int d = 12;
  const int samples = 20000;
  Matrix mean = Matrix::Zero(d, d);
  for (int s = 0; s < samples; ++s) {
    const Matrix p =
        GenerateProjection(Seed{static_cast<std::uint64_t>(s)}, r, d, GetParam(), 0)
            .entries;
    mean += p.transpose() * p / samples;
  }
  EXPECT_LT((mean - Matrix::Identity(d, d)).cwiseAbs().maxCoeff(), 0.06);
}

INSTANTIATE_TEST_SUITE_P(Kinds, UnbiasednessTest,
                         ::testing::Values(SketchKind::kGaussian,
                                           SketchKind::kRowOrthonormalScaled),
                         [](const auto& info) { return std::string(SketchKindName(info.param)); });

TEST(SketchSpecTest, LayerProjectionsFollowShapes) {
  const std::vector<LayerShape> shapes = {{8, 20}, {3, 8}};
  const SketchSpec spec{4, SketchKind::kGaussian};
  const std::vector<ProjectionMatrix> ps = GenerateLayerProjections(Seed{2}, shapes, spec);
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_EQ(ps[0].cols(), 20);
  EXPECT_EQ(ps[1].cols(), 8);
  EXPECT_EQ(ps[0].rank(), 4);
  EXPECT_NO_THROW(CheckSketchSpec(spec, shapes));
  EXPECT_THROW(CheckSketchSpec({9, SketchKind::kRowOrthonormalScaled}, shapes),
               InvalidConfigurationError);
}

TEST(SketchSpecTest, KindNamesRoundTrip) {
  for (SketchKind k : {SketchKind::kGaussian, SketchKind::kRowOrthonormalScaled}) {
    EXPECT_EQ(ParseSketchKind(SketchKindName(k)), k);
  }
  EXPECT_THROW(ParseSketchKind("hadamard"), InvalidConfigurationError);
}

}  // namespace
}  // namespace fedkrso
