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

#ifndef MGRPO_CORE_HPP_
#define MGRPO_CORE_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgrpo {

// Errors. Contract violations are caller bugs; the runtime errors below are
// conditions a correct caller can still hit.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DataIntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

enum class Role : std::uint8_t { kMain = 0, kSub = 1 };
enum class Stage : std::uint8_t { kStage1 = 1, kStage2 = 2 };

inline const char* to_string(Role r) { return r == Role::kMain ? "main" : "sub"; }
inline const char* to_string(Stage s) {
  return s == Stage::kStage1 ? "stage1" : "stage2";
}

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

struct Query {
  std::string id;
  std::vector<double> features;
  TokenSeq ground_truth;
  Stage stage = Stage::kStage1;

  bool operator==(const Query&) const = default;
};

struct Step {
  std::vector<double> state;
  int action = 0;
  double behavior_logprob = 0.0;
  double reward = 0.0;

  bool operator==(const Step&) const = default;
};

struct Trajectory {
  Role role = Role::kMain;
  std::vector<Step> steps;
  TokenSeq output;
  bool terminated = false;

  bool operator==(const Trajectory&) const = default;
};

// One answering attempt: the main trajectory plus one sub-trajectory per
// delegation, in call order. subtask_keys[i] is the lookup key the main agent
// handed to subs[i].
struct Rollout {
  Trajectory main;
  std::vector<Trajectory> subs;
  std::vector<int> subtask_keys;
  std::string query_id;

  std::size_t invocations() const { return subs.size(); }
  bool operator==(const Rollout&) const = default;
};

struct RolloutGroup {
  Query query;
  std::vector<Rollout> rollouts;
};

// Where an aligned sub entry came from.
enum class Provenance : std::uint8_t { kOriginal, kDuplicate, kPlaceholder };

struct AlignedSub {
  std::size_t rollout = 0;
  // Index into the rollout's original subs. For duplicates this is the copied
  // source j; for placeholders it is meaningless.
  std::size_t source = 0;
  Provenance provenance = Provenance::kOriginal;
  Trajectory trajectory;
};

struct AlignedBatch {
  std::vector<Trajectory> mains;
  std::vector<AlignedSub> subs;  // rollout-major, exactly d per rollout
  std::size_t d = 1;
};

struct RewardWeights {
  double alpha1 = 0.1;
  double alpha2 = 0.9;
  double beta1 = 0.1;
  double beta2 = 0.4;
  double beta3 = 0.5;

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    auto check = [&](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) out.push_back(std::string(name) + ": must lie in [0,1]");
    };
    check(alpha1, "alpha1");
    check(alpha2, "alpha2");
    check(beta1, "beta1");
    check(beta2, "beta2");
    check(beta3, "beta3");
    return out;
  }
};

struct PolicyParams {
  Role role = Role::kMain;
  std::vector<double> theta;
  std::uint64_t version = 0;

  bool operator==(const PolicyParams&) const = default;
};

// Action-space sizes a rollout is validated against.
struct VocabSizes {
  int main = 0;
  int sub = 0;
};

namespace detail {

inline void validate_trajectory(const Trajectory& t, Role expected, int vocab,
                                const std::string& where,
                                std::vector<std::string>& out) {
  if (t.role != expected) out.push_back(where + ": role mismatch");
  if (t.terminated && t.steps.empty())
    out.push_back(where + ": terminated trajectory has no steps");
  for (std::size_t s = 0; s < t.steps.size(); ++s) {
    const Step& st = t.steps[s];
    const std::string at = where + " step " + std::to_string(s);
    if (st.action < 0 || (vocab > 0 && st.action >= vocab))
      out.push_back(at + ": action index out of vocabulary");
    if (!(st.behavior_logprob <= 0.0))
      out.push_back(at + ": behavior_logprob must be <= 0");
    if (!std::isfinite(st.reward)) out.push_back(at + ": non-finite reward");
    for (double x : st.state) {
      if (!std::isfinite(x)) {
        out.push_back(at + ": non-finite state feature");
        break;
      }
    }
    if (st.reward != t.steps.front().reward)
      out.push_back(at + ": reward not broadcast");
  }
}

}  // namespace detail

// Every violated invariant; empty iff valid. A vocabulary size of 0 skips the
// action-range check for that role.
inline std::vector<std::string> validate_trajectory(const Trajectory& t, Role expected,
                                                    int vocab = 0) {
  std::vector<std::string> out;
  detail::validate_trajectory(t, expected, vocab, to_string(expected), out);
  return out;
}

inline std::vector<std::string> validate_rollout(const Rollout& r, VocabSizes vocab = {}) {
  std::vector<std::string> out;
  detail::validate_trajectory(r.main, Role::kMain, vocab.main, "main", out);
  for (std::size_t i = 0; i < r.subs.size(); ++i)
    detail::validate_trajectory(r.subs[i], Role::kSub, vocab.sub,
                                "sub " + std::to_string(i), out);
  if (!r.subtask_keys.empty() && r.subtask_keys.size() != r.subs.size())
    out.push_back("subtask key count differs from invocation count");
  return out;
}

}  // namespace mgrpo

#endif  // MGRPO_CORE_HPP_
