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

#ifndef MGRPO_REWARDS_HPP_
#define MGRPO_REWARDS_HPP_

#include <algorithm>
#include <ostream>
#include <string>

#include "mgrpo/core.hpp"
#include "mgrpo/env.hpp"

namespace mgrpo {

struct RewardBreakdown {
  bool format_ok = false;
  double correct = 0.0;
  double expert = 0.0;
  double total = 0.0;

  bool operator==(const RewardBreakdown&) const = default;
};

inline bool validate_format(const TokenSeq& output, int vocab_size) {
  return TokenSpace{vocab_size}.well_formed(output);
}

// Exact, order-sensitive match of the payload against the ground truth.
inline double correctness(const TokenSeq& output, const TokenSeq& ground_truth, int vocab_size) {
  require(validate_format(output, vocab_size), "correctness() needs a well-formed output");
  const bool match = output.size() == ground_truth.size() + 2 &&
                     std::equal(ground_truth.begin(), ground_truth.end(), output.begin() + 1);
  return match ? 1.0 : 0.0;
}

// Main-agent reward; anything that fails the format check scores 0.
inline RewardBreakdown main_reward(const TokenSeq& output, const TokenSeq& ground_truth,
                                   const RewardWeights& w, int vocab_size) {
  RewardBreakdown r;
  r.format_ok = validate_format(output, vocab_size);
  if (!r.format_ok) return r;
  r.correct = correctness(output, ground_truth, vocab_size);
  r.total = w.alpha1 * 1.0 + w.alpha2 * r.correct;
  return r;
}

// Deterministic stand-in for an expert judge: half credit for using a tool at
// all, half for reporting the true fact of the assigned key.
inline double expert_score(const Trajectory& sub, const TaskSpec& spec, int assigned_key,
                           const EnvConfig& cfg) {
  if (sub.role != Role::kSub) throw ContractViolation("expert_score: role mismatch");
  const ActionVocab vocab = ActionVocab::sub(cfg);
  const bool used_tool = std::any_of(sub.steps.begin(), sub.steps.end(), [&](const Step& s) {
    const ActionKind k = vocab.decode(s.action).kind;
    return k == ActionKind::kSearch || k == ActionKind::kVisit;
  });
  bool has_fact = false;
  if (const auto truth = spec.fact(assigned_key); truth && validate_format(sub.output, cfg.vocab_size))
    has_fact = std::find(sub.output.begin() + 1, sub.output.end() - 1, *truth) != sub.output.end() - 1;
  return 0.5 * (used_tool ? 1.0 : 0.0) + 0.5 * (has_fact ? 1.0 : 0.0);
}

inline RewardBreakdown sub_reward(const TokenSeq& sub_output, double main_correct, double expert,
                                  const RewardWeights& w, int vocab_size) {
  require(main_correct == 0.0 || main_correct == 1.0, "sub_reward: main_correct must be 0 or 1");
  require(expert >= 0.0 && expert <= 1.0, "sub_reward: expert must lie in [0,1]");
  RewardBreakdown r;
  r.format_ok = validate_format(sub_output, vocab_size);
  r.correct = main_correct;
  r.expert = expert;
  if (!r.format_ok) return r;
  r.total = w.beta1 * 1.0 + w.beta2 * main_correct + w.beta3 * expert;
  return r;
}

// Replicates the terminal reward onto every step.
inline Trajectory broadcast(Trajectory t, double total) {
  if (!t.terminated) throw ContractViolation("broadcast: trajectory is not terminated");
  for (Step& s : t.steps) s.reward = total;
  return t;
}

inline void broadcast_in_place(Trajectory& t, double total) {
  if (!t.terminated) throw ContractViolation("broadcast: trajectory is not terminated");
  for (Step& s : t.steps) s.reward = total;
}

// Reward log row: query id, rollout k, role, i, format_ok, correct, expert, total.
inline void write_reward_row(std::ostream& out, const std::string& query_id, std::size_t k,
                             Role role, std::size_t i, const RewardBreakdown& r) {
  out << query_id << '\t' << k << '\t' << to_string(role) << '\t' << i << '\t'
      << (r.format_ok ? 1 : 0) << '\t' << r.correct << '\t' << r.expert << '\t' << r.total << '\n';
}

}  // namespace mgrpo

#endif  // MGRPO_REWARDS_HPP_
