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

// Per-step training computations shared by the single-process reference
// trainer and the decoupled main/sub workers. Both paths call exactly these
// functions in the same order, which is what makes their results bit-equal.

#ifndef MGRPO_TRAINER_HPP_
#define MGRPO_TRAINER_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mgrpo/alignment.hpp"
#include "mgrpo/core.hpp"
#include "mgrpo/env.hpp"
#include "mgrpo/objective.hpp"
#include "mgrpo/policy.hpp"
#include "mgrpo/prior.hpp"
#include "mgrpo/random.hpp"
#include "mgrpo/rewards.hpp"

namespace mgrpo {

enum class Mode { kCoTrain, kMainOnly, kSingleAgent, kNoSync };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::kCoTrain:
      return "cotrain";
    case Mode::kMainOnly:
      return "main-only";
    case Mode::kSingleAgent:
      return "single-agent";
    case Mode::kNoSync:
      return "no-sync";
  }
  return "?";
}

inline bool parse_mode(const std::string& s, Mode& out) {
  for (Mode m : {Mode::kCoTrain, Mode::kMainOnly, Mode::kSingleAgent, Mode::kNoSync}) {
    if (s == to_string(m)) {
      out = m;
      return true;
    }
  }
  return false;
}

struct CurriculumConfig {
  int stage1_steps = 300;
  int stage2_steps = 200;
  int K = 8;
  int d = 8;
  int batch_queries = 8;
  RewardWeights weights;
  double epsilon_main = 0.2;
  double epsilon_sub = 0.2;
  double lr_main = 3.0;
  double lr_sub = 3.0;
  double prior_strength = 3.0;
  EnvConfig env;

  int total_steps() const { return stage1_steps + stage2_steps; }
  Stage stage_of(int step) const { return step < stage1_steps ? Stage::kStage1 : Stage::kStage2; }

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (stage1_steps < 0) out.push_back("stage1_steps: must be >= 0");
    if (stage2_steps < 0) out.push_back("stage2_steps: must be >= 0");
    if (K < 2) out.push_back("K: need at least 2 rollouts per query");
    if (d < 1) out.push_back("d: must be >= 1");
    if (batch_queries < 0) out.push_back("batch_queries: must be >= 0");
    if (!(lr_main > 0.0)) out.push_back("lr_main: must be > 0");
    if (!(lr_sub > 0.0)) out.push_back("lr_sub: must be > 0");
    if (!(prior_strength >= 0.0)) out.push_back("prior_strength: must be >= 0");
    for (const auto& v : ClipConfig{epsilon_main}.violations()) out.push_back("epsilon_main: " + v);
    for (const auto& v : ClipConfig{epsilon_sub}.violations()) out.push_back("epsilon_sub: " + v);
    for (auto& v : weights.violations()) out.push_back(std::move(v));
    for (auto& v : env.violations()) out.push_back(std::move(v));
    return out;
  }
};

// Mode-specific behaviour inside one step.
inline bool trains_sub(Mode mode, Stage stage) {
  if (mode == Mode::kSingleAgent) return false;
  return !(mode == Mode::kMainOnly && stage == Stage::kStage2);
}
inline bool aligns_subs(Mode mode, Stage stage) {
  return !(mode == Mode::kNoSync && stage == Stage::kStage2);
}

inline SoftmaxLinearPolicy initial_main_policy(const EnvConfig& env, Mode mode, double prior = 0.0) {
  if (mode == Mode::kSingleAgent) {
    auto p = SoftmaxLinearPolicy::zeros(Role::kMain, SingleLayout(env).dim,
                                        ActionVocab::single(env).size());
    apply_single_prior(p, env, prior);
    return p;
  }
  auto p = SoftmaxLinearPolicy::zeros(Role::kMain, MainLayout(env).dim, ActionVocab::main(env).size());
  apply_main_prior(p, env, prior);
  return p;
}

inline SoftmaxLinearPolicy initial_sub_policy(const EnvConfig& env, double prior = 0.0) {
  auto p = SoftmaxLinearPolicy::zeros(Role::kSub, SubLayout(env).dim, ActionVocab::sub(env).size());
  apply_sub_prior(p, env, prior);
  return p;
}

// The training queries of one step; a pure function of (seed, step).
inline std::vector<Task> step_tasks(std::uint64_t seed, int step, const CurriculumConfig& cfg) {
  std::vector<Task> tasks;
  const Stage stage = cfg.stage_of(step);
  for (int j = 0; j < cfg.batch_queries; ++j) {
    const std::uint64_t qseed =
        derive_seed(seed, {kTagQuery, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(j)}) %
        1000000007ULL;
    tasks.push_back(generate_query(stage, qseed, cfg.env));
  }
  return tasks;
}

inline std::uint64_t rollout_seed(std::uint64_t seed, int step, std::size_t query, std::size_t k) {
  return derive_seed(seed, {kTagRollout, static_cast<std::uint64_t>(step), query, k});
}

inline std::uint64_t align_seed(std::uint64_t seed, int step, std::size_t query) {
  return derive_seed(seed, {kTagAlign, static_cast<std::uint64_t>(step), query});
}

// K sampled rollouts for one query.
inline std::vector<Rollout> generate_group(const Task& task, const SoftmaxLinearPolicy& pi_main,
                                           const SoftmaxLinearPolicy* pi_sub, Mode mode,
                                           std::uint64_t seed, int step, std::size_t query,
                                           const CurriculumConfig& cfg) {
  std::vector<Rollout> group;
  for (int k = 0; k < cfg.K; ++k) {
    Rng rng(rollout_seed(seed, step, query, static_cast<std::size_t>(k)));
    if (mode == Mode::kSingleAgent) {
      group.push_back(run_single_rollout(task.query, task.spec, PolicyActor(pi_main), rng, cfg.env));
    } else {
      require(pi_sub != nullptr, "multi-agent rollouts need a sub policy");
      group.push_back(run_rollout(task.query, task.spec, PolicyActor(pi_main), PolicyActor(*pi_sub),
                                  rng, cfg.env));
    }
  }
  return group;
}

// What the main side publishes about each rollout.
struct MainRewardRecord {
  double r_correct_main = 0.0;
  bool main_format_ok = false;
  double main_total = 0.0;
  TokenSeq main_output;

  bool operator==(const MainRewardRecord&) const = default;
};

inline MainRewardRecord score_main(Rollout& r, const Task& task, const CurriculumConfig& cfg) {
  const RewardBreakdown b = main_reward(r.main.output, task.query.ground_truth, cfg.weights,
                                        cfg.env.vocab_size);
  broadcast_in_place(r.main, b.total);
  return {b.correct, b.format_ok, b.total, r.main.output};
}

struct RoleStepStats {
  double mean_reward = std::numeric_limits<double>::quiet_NaN();
  double mu = 0.0;      // mean over queries of the group mean
  double sigma = 0.0;   // mean over queries of the group std
  double objective = 0.0;
  double grad_norm = 0.0;
  std::size_t samples = 0;
};

struct MainStepResult {
  std::vector<double> grad;
  RoleStepStats stats;
};

// Averages the per-query surrogate gradients in query order.
inline MainStepResult compute_main_update(std::span<const std::vector<Rollout>> groups,
                                          std::span<const std::vector<MainRewardRecord>> records,
                                          const SoftmaxLinearPolicy& pi_main,
                                          const CurriculumConfig& cfg) {
  MainStepResult out;
  out.grad.assign(pi_main.params.theta.size(), 0.0);
  if (groups.empty()) return out;
  const double inv_q = 1.0 / static_cast<double>(groups.size());
  double reward_sum = 0.0;
  for (std::size_t q = 0; q < groups.size(); ++q) {
    std::vector<double> rewards;
    std::vector<Trajectory> mains;
    for (std::size_t k = 0; k < groups[q].size(); ++k) {
      rewards.push_back(records[q][k].main_total);
      mains.push_back(groups[q][k].main);
      reward_sum += records[q][k].main_total;
      ++out.stats.samples;
    }
    const auto [st, adv] = main_advantages(rewards);
    const auto terms = main_terms(mains, adv);
    const SurrogateResult s =
        clipped_surrogate(terms, pi_main, pi_main, ClipConfig{cfg.epsilon_main}, true);
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += inv_q * s.grad[i];
    out.stats.mu += inv_q * st.mean;
    out.stats.sigma += inv_q * st.std;
    out.stats.objective += inv_q * s.value;
  }
  out.stats.mean_reward = reward_sum / static_cast<double>(out.stats.samples);
  out.stats.grad_norm = l2_norm(out.grad);
  return out;
}

// Sub-side view of one query's rollouts: the delegated trajectories, their
// keys, and the main agent's correctness for each rollout.
struct SubGroupInput {
  Task task;
  std::vector<Rollout> rollouts;  // only subs / subtask_keys are read
  std::vector<double> main_correct;
};

struct SubStepResult {
  std::vector<double> grad;
  RoleStepStats stats;
  std::size_t aligned_entries = 0;
};

// Sub rewards (format gate, replicated main correctness, rubric score),
// broadcast onto every sub step in place.
inline std::vector<std::vector<RewardBreakdown>> score_subs(SubGroupInput& in,
                                                            const CurriculumConfig& cfg) {
  std::vector<std::vector<RewardBreakdown>> out(in.rollouts.size());
  for (std::size_t k = 0; k < in.rollouts.size(); ++k) {
    Rollout& r = in.rollouts[k];
    for (std::size_t i = 0; i < r.subs.size(); ++i) {
      const double expert = expert_score(r.subs[i], in.task.spec, r.subtask_keys[i], cfg.env);
      const RewardBreakdown b =
          sub_reward(r.subs[i].output, in.main_correct[k], expert, cfg.weights, cfg.env.vocab_size);
      broadcast_in_place(r.subs[i], b.total);
      out[k].push_back(b);
    }
  }
  return out;
}

// aligned == true: align every rollout to d entries and normalize over the
// pooled K x d table. aligned == false (no-sync ablation): keep the ragged
// batch, normalize within each rollout, weight every entry by 1 / sum_k d_k.
inline SubStepResult compute_sub_update(std::span<SubGroupInput> groups,
                                        const SoftmaxLinearPolicy& pi_sub, bool aligned,
                                        std::uint64_t seed, int step, const CurriculumConfig& cfg) {
  SubStepResult out;
  out.grad.assign(pi_sub.params.theta.size(), 0.0);
  if (groups.empty()) return out;
  const double inv_q = 1.0 / static_cast<double>(groups.size());
  const ClipConfig clip{cfg.epsilon_sub};
  double reward_sum = 0.0;
  for (std::size_t q = 0; q < groups.size(); ++q) {
    SubGroupInput& in = groups[q];
    const auto breakdowns = score_subs(in, cfg);
    for (const auto& row : breakdowns)
      for (const RewardBreakdown& b : row) {
        reward_sum += b.total;
        ++out.stats.samples;
      }

    if (aligned) {
      const AlignedBatch batch = build_aligned_batch(in.rollouts, static_cast<std::size_t>(cfg.d),
                                                     align_seed(seed, step, q));
      std::vector<double> rewards;
      std::vector<std::uint8_t> active;
      for (const AlignedSub& e : batch.subs) {
        const bool real = e.provenance != Provenance::kPlaceholder;
        rewards.push_back(real ? breakdowns[e.rollout][e.source].total : 0.0);
        active.push_back(real ? 1 : 0);
      }
      out.aligned_entries += batch.subs.size();
      const auto [st, adv] = sub_advantages(rewards, in.rollouts.size(), batch.d, active);
      const auto terms = sub_terms(batch.subs, adv);
      const SurrogateResult s = clipped_surrogate(terms, pi_sub, pi_sub, clip, true);
      for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += inv_q * s.grad[i];
      out.stats.mu += inv_q * st.mean;
      out.stats.sigma += inv_q * st.std;
      out.stats.objective += inv_q * s.value;
    } else {
      std::size_t total = 0;
      for (const Rollout& r : in.rollouts) total += r.subs.size();
      if (total == 0) continue;
      const double w = 1.0 / static_cast<double>(total);
      std::vector<SurrogateTerm> terms;
      double raw_sum = 0.0;
      for (std::size_t k = 0; k < in.rollouts.size(); ++k) {
        std::vector<double> rewards;
        for (const RewardBreakdown& b : breakdowns[k]) rewards.push_back(b.total);
        const auto [st, adv] = normalize_group(rewards);
        raw_sum += st.mean * static_cast<double>(st.count);
        out.stats.sigma += inv_q * st.std / static_cast<double>(in.rollouts.size());
        for (std::size_t i = 0; i < adv.size(); ++i)
          terms.push_back({&in.rollouts[k].subs[i], adv[i], w});
      }
      out.stats.mu += inv_q * raw_sum / static_cast<double>(total);
      out.aligned_entries += total;
      const SurrogateResult s = clipped_surrogate(terms, pi_sub, pi_sub, clip, true);
      for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += inv_q * s.grad[i];
      out.stats.objective += inv_q * s.value;
    }
  }
  if (out.stats.samples > 0) out.stats.mean_reward = reward_sum / static_cast<double>(out.stats.samples);
  out.stats.grad_norm = l2_norm(out.grad);
  return out;
}

inline SoftmaxLinearPolicy apply_update(const SoftmaxLinearPolicy& p, std::span<const double> grad,
                                        double lr) {
  SoftmaxLinearPolicy next = p;
  next.params = update(p.params, grad, lr);
  return next;
}

// ---------------------------------------------------------------------------
// Evaluation: greedy decoding on a fixed corpus, success = well-formed and
// exactly correct.

struct EvalReport {
  std::size_t episodes = 0;
  std::size_t successes = 0;
  std::vector<RewardBreakdown> per_episode;

  // NaN when there were no episodes.
  double success_rate() const {
    return episodes == 0 ? std::numeric_limits<double>::quiet_NaN()
                         : static_cast<double>(successes) / static_cast<double>(episodes);
  }
};

template <class RolloutFn>
EvalReport evaluate_with(std::span<const Task> tasks, std::uint64_t seed, const CurriculumConfig& cfg,
                         RolloutFn&& fn) {
  EvalReport rep;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    Rng rng(derive_seed(seed, {kTagEvalEpisode, i}));
    const Rollout r = fn(tasks[i], rng);
    const RewardBreakdown b =
        main_reward(r.main.output, tasks[i].query.ground_truth, cfg.weights, cfg.env.vocab_size);
    ++rep.episodes;
    if (b.format_ok && b.correct == 1.0) ++rep.successes;
    rep.per_episode.push_back(b);
  }
  return rep;
}

inline EvalReport evaluate(std::span<const Task> tasks, const SoftmaxLinearPolicy& pi_main,
                           const SoftmaxLinearPolicy* pi_sub, Mode mode, std::uint64_t seed,
                           const CurriculumConfig& cfg) {
  return evaluate_with(tasks, seed, cfg, [&](const Task& t, Rng& rng) {
    if (mode == Mode::kSingleAgent)
      return run_single_rollout(t.query, t.spec, PolicyActor(pi_main, Decoding::kGreedy), rng, cfg.env);
    return run_rollout(t.query, t.spec, PolicyActor(pi_main, Decoding::kGreedy),
                       PolicyActor(*pi_sub, Decoding::kGreedy), rng, cfg.env);
  });
}

inline std::vector<Task> eval_tasks(std::uint64_t seed, Stage stage, int count, const EnvConfig& env) {
  std::vector<Task> tasks;
  for (int i = 0; i < count; ++i)
    tasks.push_back(generate_query(
        stage, derive_seed(seed, {kTagEval, static_cast<std::uint64_t>(i)}) % 1000000007ULL, env));
  return tasks;
}

// ---------------------------------------------------------------------------
// Single-process reference trainer.

struct StepMetrics {
  int step = 0;
  Stage stage = Stage::kStage1;
  Mode mode = Mode::kCoTrain;
  double mean_main_reward = std::numeric_limits<double>::quiet_NaN();
  double mean_sub_reward = std::numeric_limits<double>::quiet_NaN();
  double eval_success = std::numeric_limits<double>::quiet_NaN();
  double grad_norm_main = 0.0;
  double grad_norm_sub = 0.0;
  RoleStepStats main_stats;
  RoleStepStats sub_stats;
};

struct PolicyPair {
  SoftmaxLinearPolicy main;
  SoftmaxLinearPolicy sub;  // unused in single-agent mode
};

inline PolicyPair initial_policies(const CurriculumConfig& cfg, Mode mode) {
  return {initial_main_policy(cfg.env, mode, cfg.prior_strength),
          initial_sub_policy(cfg.env, cfg.prior_strength)};
}

// One full training step in-process: rollouts with the current pair, then
// both updates from the same rollouts.
inline PolicyPair reference_trainer_step(int step, std::span<const Task> tasks,
                                         const PolicyPair& policies, Mode mode, std::uint64_t seed,
                                         const CurriculumConfig& cfg, StepMetrics* metrics = nullptr) {
  const Stage stage = cfg.stage_of(step);
  std::vector<std::vector<Rollout>> groups;
  std::vector<std::vector<MainRewardRecord>> records;
  for (std::size_t q = 0; q < tasks.size(); ++q) {
    groups.push_back(generate_group(tasks[q], policies.main, &policies.sub, mode, seed, step, q, cfg));
    std::vector<MainRewardRecord> rec;
    for (Rollout& r : groups.back()) rec.push_back(score_main(r, tasks[q], cfg));
    records.push_back(std::move(rec));
  }
  PolicyPair next = policies;
  if (metrics) {
    *metrics = StepMetrics{};
    metrics->step = step;
    metrics->stage = stage;
    metrics->mode = mode;
  }
  if (tasks.empty()) return next;

  const MainStepResult mres = compute_main_update(groups, records, policies.main, cfg);
  next.main = apply_update(policies.main, mres.grad, cfg.lr_main);

  SubStepResult sres;
  if (mode != Mode::kSingleAgent) {
    std::vector<SubGroupInput> sub_in;
    for (std::size_t q = 0; q < tasks.size(); ++q) {
      SubGroupInput in;
      in.task = tasks[q];
      in.rollouts = groups[q];
      for (const MainRewardRecord& rec : records[q]) in.main_correct.push_back(rec.r_correct_main);
      sub_in.push_back(std::move(in));
    }
    sres = compute_sub_update(sub_in, policies.sub, aligns_subs(mode, stage), seed, step, cfg);
    if (trains_sub(mode, stage))
      next.sub = apply_update(policies.sub, sres.grad, cfg.lr_sub);
    else
      sres.stats.grad_norm = 0.0;
  }

  if (metrics) {
    metrics->mean_main_reward = mres.stats.mean_reward;
    metrics->grad_norm_main = mres.stats.grad_norm;
    metrics->main_stats = mres.stats;
    metrics->mean_sub_reward = sres.stats.mean_reward;
    metrics->grad_norm_sub = sres.stats.grad_norm;
    metrics->sub_stats = sres.stats;
  }
  return next;
}

}  // namespace mgrpo

#endif  // MGRPO_TRAINER_HPP_
