// Copyright 2026 The mgrpo Authors. All Rights Reserved.
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

#include <gtest/gtest.h>

#include <cmath>

#include "mgrpo/policy.hpp"
#include "test_util.hpp"

namespace mgrpo {
namespace {

using testing::normal;

std::vector<double> random_state(int dim, Rng& rng) {
  std::vector<double> x(static_cast<std::size_t>(dim));
  for (double& v : x) v = normal(rng);
  return x;
}

TEST(ActionLogprobsTest, ZeroWeightsAreUniform) {
  const auto p = SoftmaxLinearPolicy::zeros(Role::kMain, 3, 5);
  for (double lp : action_logprobs(p, std::vector<double>{1.0, -2.0, 0.5})) EXPECT_NEAR(lp, -std::log(5.0), 1e-15);
}

TEST(ActionLogprobsTest, NormalizedAndMatchesLonghandSoftmax) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto p = testing::random_policy(Role::kSub, 4, 6, 3.0, rng);
    const auto x = random_state(4, rng);
    const auto lp = action_logprobs(p, x);
    const auto oracle = testing::oracle_probs(p, x);
    double s = 0.0;
    for (std::size_t a = 0; a < lp.size(); ++a) {
      s += std::exp(lp[a]);
      EXPECT_NEAR(std::exp(lp[a]), oracle[a], 1e-12);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(ActionLogprobsTest, ShiftInvariantPerColumnOffset) {
  Rng rng(2);
  auto p = testing::random_policy(Role::kMain, 3, 4, 1.0, rng);
  // A constant added to every logit: feature 0 is fixed to 1 in these states.
  auto q = p;
  for (int a = 0; a < 4; ++a) q.params.theta[a] += 2.5;
  for (int i = 0; i < 20; ++i) {
    auto x = random_state(3, rng);
    x[0] = 1.0;
    const auto lp = action_logprobs(p, x), lq = action_logprobs(q, x);
    for (std::size_t a = 0; a < 4; ++a) EXPECT_NEAR(lp[a], lq[a], 1e-12);
  }
}

TEST(ActionLogprobsTest, StateShapeChecked) {
  const auto p = SoftmaxLinearPolicy::zeros(Role::kMain, 3, 5);
  EXPECT_THROW(action_logprobs(p, std::vector<double>{1.0}), ContractViolation);
}

TEST(SampleActionTest, NearDeltaPolicy) {
  auto p = SoftmaxLinearPolicy::zeros(Role::kMain, 1, 4);
  p.params.theta[2] = 20.0;
  Rng rng(3);
  const auto [a, lp] = sample_action(p, std::vector<double>{1.0}, rng);
  EXPECT_EQ(a, 2);
  EXPECT_NEAR(lp, 0.0, 1e-7);
}

TEST(SampleActionTest, UniformFrequencies) {
  const auto p = SoftmaxLinearPolicy::zeros(Role::kMain, 1, 4);
  Rng rng(4);
  std::vector<int> n(4, 0);
  for (int i = 0; i < 100000; ++i) ++n[sample_action(p, std::vector<double>{1.0}, rng).first];
  for (int c : n) EXPECT_NEAR(c / 100000.0, 0.25, 0.01);
}

TEST(SampleActionTest, SameSeedSameAction) {
  Rng r1(5), r2(5);
  const auto p = testing::random_policy(Role::kMain, 2, 6, 1.0, r1);
  Rng a(9), b(9);
  const std::vector<double> x{0.3, -0.7};
  EXPECT_EQ(sample_action(p, x, a), sample_action(p, x, b));
}

TEST(SequenceLogprobTest, EmptyAndUniform) {
  const auto p = SoftmaxLinearPolicy::zeros(Role::kMain, 1, 4);
  Trajectory t;
  EXPECT_EQ(sequence_logprob(p, t), 0.0);
  t.steps.push_back({{1.0}, 1, 0.0, 0.0});
  t.steps.push_back({{1.0}, 3, 0.0, 0.0});
  EXPECT_NEAR(sequence_logprob(p, t), -2.0 * std::log(4.0), 1e-15);
}

TEST(SequenceLogprobTest, MatchesManualAccumulation) {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const auto p = testing::random_policy(Role::kSub, 3, 5, 1.5, rng);
    const auto t = testing::sampled_trajectory(p, 1 + static_cast<int>(rng.uniform_int(8)), rng);
    EXPECT_NEAR(sequence_logprob(p, t), testing::oracle_seq_logprob(p, t), 1e-11);
  }
}

TEST(SequenceLogprobTest, RoleAndActionChecked) {
  const auto p = SoftmaxLinearPolicy::zeros(Role::kMain, 1, 4);
  Trajectory t;
  t.role = Role::kSub;
  EXPECT_THROW(sequence_logprob(p, t), ContractViolation);
  t.role = Role::kMain;
  t.steps.push_back({{1.0}, 4, 0.0, 0.0});
  EXPECT_THROW(sequence_logprob(p, t), ContractViolation);
}

TEST(GradLogprobTest, ZeroStepsGivesZeroVector) {
  const auto p = SoftmaxLinearPolicy::zeros(Role::kMain, 2, 3);
  for (double g : grad_sequence_logprob(p, Trajectory{})) EXPECT_EQ(g, 0.0);
}

TEST(GradLogprobTest, UniformSingleStepAnalytic) {
  const auto p = SoftmaxLinearPolicy::zeros(Role::kMain, 2, 2);
  Trajectory t;
  t.steps.push_back({{2.0, -1.0}, 1, 0.0, 0.0});
  const auto g = grad_sequence_logprob(p, t);
  // state (x) (onehot - [0.5, 0.5])
  EXPECT_EQ(g, (std::vector<double>{-1.0, 1.0, 0.5, -0.5}));
}

TEST(GradLogprobTest, FiniteDifferenceAgreement) {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const auto p = testing::random_policy(Role::kMain, 3, 4, 1.0, rng);
    const auto t = testing::sampled_trajectory(p, 1 + static_cast<int>(rng.uniform_int(5)), rng);
    const auto g = grad_sequence_logprob(p, t);
    const auto fd = testing::finite_difference(p, [&](const SoftmaxLinearPolicy& q) { return sequence_logprob(q, t); });
    EXPECT_LT(testing::relative_error(g, fd), 1e-4);
  }
}

TEST(GradLogprobTest, ScoreIdentityByEnumeration) {
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const auto p = testing::random_policy(Role::kSub, 3, 5, 1.0, rng);
    const auto x = random_state(3, rng);
    const auto lp = action_logprobs(p, x);
    std::vector<double> expect(p.params.theta.size(), 0.0);
    for (int a = 0; a < 5; ++a) {
      Trajectory t;
      t.role = Role::kSub;
      t.steps.push_back({x, a, lp[a], 0.0});
      const auto g = grad_sequence_logprob(p, t);
      for (std::size_t j = 0; j < g.size(); ++j) expect[j] += std::exp(lp[a]) * g[j];
    }
    for (double v : expect) EXPECT_NEAR(v, 0.0, 1e-12);
  }
}

}  // namespace
}  // namespace mgrpo
