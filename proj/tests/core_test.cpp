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

#include "mgrpo/env.hpp"
#include "mgrpo/random.hpp"
#include "mgrpo/rewards.hpp"
#include "mgrpo/serialize.hpp"
#include "test_util.hpp"

namespace mgrpo {
namespace {

Trajectory three_step_main() {
  Trajectory t;
  t.role = Role::kMain;
  t.terminated = true;
  t.output = {32, 5};
  for (int i = 0; i < 3; ++i) t.steps.push_back({{0.5 * i, -1.0, 0.0}, i, -0.25 * (i + 1), 0.7});
  return t;
}

TEST(SerializeTest, EmptyTrajectoryRoundTrips) {
  Trajectory t;
  t.role = Role::kSub;
  EXPECT_EQ(deserialize_trajectory(serialize_trajectory(t)), t);
}

TEST(SerializeTest, ThreeStepMainRoundTrips) {
  const Trajectory t = three_step_main();
  EXPECT_EQ(deserialize_trajectory(serialize_trajectory(t)), t);
}

TEST(SerializeTest, RandomTrajectoriesRoundTripBitExactly) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto p = testing::random_policy(i % 2 ? Role::kSub : Role::kMain, 4, 6, 1.0, rng);
    Trajectory t = testing::sampled_trajectory(p, 1 + static_cast<int>(rng.uniform_int(6)), rng);
    t.output.assign(rng.uniform_int(5), static_cast<Token>(rng.uniform_int(40)));
    EXPECT_EQ(deserialize_trajectory(serialize_trajectory(t)), t);
  }
}

TEST(SerializeTest, NanRewardRejectedBeforeWriting) {
  Trajectory t = three_step_main();
  for (auto& s : t.steps) s.reward = std::nan("");
  EXPECT_THROW(serialize_trajectory(t), ContractViolation);
}

TEST(SerializeTest, TruncatedAndTrailingBytesRejected) {
  const Bytes b = serialize_trajectory(three_step_main());
  EXPECT_THROW(deserialize_trajectory(std::span(b).first(b.size() - 1)), DataIntegrityError);
  Bytes longer = b;
  longer.push_back(0);
  EXPECT_THROW(deserialize_trajectory(longer), DataIntegrityError);
}

TEST(SerializeTest, PolicyRoundTripAndCorruptHeader) {
  Rng rng(1);
  auto p = testing::random_policy(Role::kSub, 5, 7, 1.0, rng);
  p.params.version = 42;
  EXPECT_EQ(deserialize_policy(serialize_policy(p)), p);
  Bytes b = serialize_policy(p);
  b[0] = 9;  // role tag
  EXPECT_THROW(deserialize_policy(b), DataIntegrityError);
  Bytes huge = serialize_policy(p);
  huge[9] = 0xff;  // feature_dim far beyond the payload
  EXPECT_THROW(deserialize_policy(huge), DataIntegrityError);
}

TEST(ValidateRolloutTest, ZeroInvocationsIsLegal) {
  Rollout r;
  r.main = three_step_main();
  EXPECT_TRUE(validate_rollout(r).empty());
}

TEST(ValidateRolloutTest, SubWithMainRoleIsReported) {
  Rollout r;
  r.main = three_step_main();
  r.subs.push_back(three_step_main());
  const auto v = validate_rollout(r);
  ASSERT_FALSE(v.empty());
  EXPECT_NE(v.front().find("role mismatch"), std::string::npos);
}

TEST(ValidateRolloutTest, EnvironmentRolloutsAreValid) {
  const EnvConfig cfg;
  Rng rng(5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Task task = generate_query(Stage::kStage2, seed, cfg);
    const Rollout r = run_rollout(task.query, task.spec, OracleMainActor(cfg), OracleSubActor(cfg), rng, cfg);
    EXPECT_EQ(r.invocations(), static_cast<std::size_t>(task.spec.hop_count));
    EXPECT_TRUE(validate_rollout(r, vocab_sizes(cfg)).empty());
  }
}

TEST(BroadcastTest, EveryStepCarriesTheTotal) {
  const Trajectory t = broadcast(three_step_main(), 0.25);
  for (const auto& s : t.steps) EXPECT_EQ(s.reward, 0.25);
  EXPECT_EQ(broadcast(t, 0.25), t);
  for (const auto& s : broadcast(t, 0.0).steps) EXPECT_EQ(s.reward, 0.0);
  Trajectory open = t;
  open.terminated = false;
  EXPECT_THROW(broadcast(open, 1.0), ContractViolation);
}

TEST(RandomTest, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(RandomTest, UniformIntIsInRangeAndCoversIt) {
  Rng rng(4);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) ++seen[rng.uniform_int(7)];
  for (int c : seen) EXPECT_NEAR(c, 1000, 150);
}

}  // namespace
}  // namespace mgrpo
