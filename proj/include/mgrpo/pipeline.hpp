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

// Decoupled two-worker training.
//
// Step t, main worker:  wait SubCheckpoint(t) -> K rollouts per query ->
//   MainReward + SubTrajectoryRef records -> main update -> Barrier(t).
// Step t, sub worker:   wait Barrier(t) and the step's records -> recheck main
//   rewards -> sub rewards, alignment, sub update -> SubCheckpoint(t+1).
// The workers share nothing but the store, and the store never carries a
// gradient. Given the same seed the result equals reference_trainer_step.

#ifndef MGRPO_PIPELINE_HPP_
#define MGRPO_PIPELINE_HPP_

#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mgrpo/serialize.hpp"
#include "mgrpo/store.hpp"
#include "mgrpo/trainer.hpp"

namespace mgrpo {

struct RunContext {
  Store* store = nullptr;
  std::string run_id = "run";
  std::uint64_t seed = 1;
  Mode mode = Mode::kCoTrain;
  CurriculumConfig cfg;
  std::chrono::milliseconds timeout{60000};
};

// ---------------------------------------------------------------------------
// Keys and payload codecs.

inline StoreKey record_key(const RunContext& c, int step, const std::string& query_id, std::size_t k,
                           StoreKind kind) {
  return {c.run_id, step, query_id, static_cast<std::int64_t>(k), kind};
}
inline StoreKey barrier_key(const RunContext& c, int step) {
  return {c.run_id, step, "", 0, StoreKind::kBarrier};
}
inline StoreKey checkpoint_key(const RunContext& c, int step) {
  return {c.run_id, step, "", 0, StoreKind::kSubCheckpoint};
}

inline Bytes encode_main_reward(const MainRewardRecord& r) {
  ByteWriter w;
  w.f64(r.r_correct_main);
  w.u8(r.main_format_ok ? 1 : 0);
  w.f64(r.main_total);
  w.u32(static_cast<std::uint32_t>(r.main_output.size()));
  for (Token t : r.main_output) w.u32(static_cast<std::uint32_t>(t));
  return w.take();
}

inline MainRewardRecord decode_main_reward(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  MainRewardRecord rec;
  rec.r_correct_main = r.f64();
  rec.main_format_ok = r.u8() != 0;
  rec.main_total = r.f64();
  rec.main_output.resize(r.u32());
  for (Token& t : rec.main_output) t = static_cast<Token>(r.u32());
  if (!r.done()) throw DataIntegrityError("trailing bytes after MainReward record");
  return rec;
}

// The delegated trajectories of one rollout and the key each was given.
inline Bytes encode_sub_ref(const Rollout& r) {
  require(r.subs.size() == r.subtask_keys.size(), "sub-trajectory payload: one key per sub");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(r.subs.size()));
  for (std::size_t i = 0; i < r.subs.size(); ++i) {
    w.u32(static_cast<std::uint32_t>(r.subtask_keys[i]));
    w.bytes(serialize_trajectory(r.subs[i]));
  }
  return w.take();
}

inline void decode_sub_ref(std::span<const std::uint8_t> data, Rollout& into) {
  ByteReader r(data);
  const std::uint32_t n = r.u32();
  into.subs.clear();
  into.subtask_keys.clear();
  for (std::uint32_t i = 0; i < n; ++i) {
    into.subtask_keys.push_back(static_cast<int>(r.u32()));
    into.subs.push_back(deserialize_trajectory(r.bytes()));
  }
  if (!r.done()) throw DataIntegrityError("trailing bytes after SubTrajectoryRef record");
}

inline Bytes encode_barrier(int step, std::size_t queries) {
  ByteWriter w;
  w.u64(static_cast<std::uint64_t>(step));
  w.u32(static_cast<std::uint32_t>(queries));
  return w.take();
}

// Sub policy snapshot plus the summary statistics of the step that produced it.
inline Bytes encode_sub_checkpoint(const SoftmaxLinearPolicy& p, const RoleStepStats& s) {
  ByteWriter w;
  w.bytes(serialize_policy(p));
  w.f64(s.mean_reward);
  w.f64(s.mu);
  w.f64(s.sigma);
  w.f64(s.objective);
  w.f64(s.grad_norm);
  w.u64(s.samples);
  return w.take();
}

inline std::pair<SoftmaxLinearPolicy, RoleStepStats> decode_sub_checkpoint(
    std::span<const std::uint8_t> data) {
  ByteReader r(data);
  SoftmaxLinearPolicy p = deserialize_policy(r.bytes());
  RoleStepStats s;
  s.mean_reward = r.f64();
  s.mu = r.f64();
  s.sigma = r.f64();
  s.objective = r.f64();
  s.grad_norm = r.f64();
  s.samples = r.u64();
  if (!r.done()) throw DataIntegrityError("trailing bytes after SubCheckpoint record");
  return {std::move(p), s};
}

inline void require_distinct_queries(std::span<const Task> tasks) {
  std::set<std::string> ids;
  for (const Task& t : tasks)
    require(ids.insert(t.query.id).second, "duplicate query id in one step: " + t.query.id);
}

// ---------------------------------------------------------------------------
// Workers.

class MainWorker {
 public:
  MainWorker(RunContext ctx, SoftmaxLinearPolicy pi_main)
      : ctx_(std::move(ctx)), pi_(std::move(pi_main)) {
    require(ctx_.store != nullptr, "MainWorker needs a store");
  }

  const SoftmaxLinearPolicy& policy() const { return pi_; }
  const std::optional<SoftmaxLinearPolicy>& sub_snapshot() const { return snapshot_; }

  // Loads SubCheckpoint(step) and returns the statistics it carries.
  RoleStepStats sync_sub_snapshot(int step) {
    auto [p, stats] = decode_sub_checkpoint(ctx_.store->wait_one(checkpoint_key(ctx_, step), ctx_.timeout));
    snapshot_ = std::move(p);
    return stats;
  }

  // One step. An empty batch writes nothing and leaves the policy alone.
  RoleStepStats step(int step, std::span<const Task> tasks) {
    if (tasks.empty()) return {};
    require_distinct_queries(tasks);
    const bool single = ctx_.mode == Mode::kSingleAgent;
    require(single || snapshot_.has_value(), "main worker has no sub policy snapshot");
    const SoftmaxLinearPolicy* sub = single ? nullptr : &*snapshot_;

    std::vector<std::vector<Rollout>> groups;
    std::vector<std::vector<MainRewardRecord>> records;
    for (std::size_t q = 0; q < tasks.size(); ++q) {
      groups.push_back(generate_group(tasks[q], pi_, sub, ctx_.mode, ctx_.seed, step, q, ctx_.cfg));
      std::vector<MainRewardRecord> rec;
      for (std::size_t k = 0; k < groups.back().size(); ++k) {
        Rollout& r = groups.back()[k];
        rec.push_back(score_main(r, tasks[q], ctx_.cfg));
        const std::string& id = tasks[q].query.id;
        ctx_.store->put(record_key(ctx_, step, id, k, StoreKind::kMainReward),
                        encode_main_reward(rec.back()));
        if (!single)
          ctx_.store->put(record_key(ctx_, step, id, k, StoreKind::kSubTrajectoryRef), encode_sub_ref(r));
      }
      records.push_back(std::move(rec));
    }
    const MainStepResult res = compute_main_update(groups, records, pi_, ctx_.cfg);
    pi_ = apply_update(pi_, res.grad, ctx_.cfg.lr_main);
    ctx_.store->put(barrier_key(ctx_, step), encode_barrier(step, tasks.size()));
    return res.stats;
  }

 private:
  RunContext ctx_;
  SoftmaxLinearPolicy pi_;
  std::optional<SoftmaxLinearPolicy> snapshot_;
};

class SubWorker {
 public:
  SubWorker(RunContext ctx, SoftmaxLinearPolicy pi_sub) : ctx_(std::move(ctx)), pi_(std::move(pi_sub)) {
    require(ctx_.store != nullptr, "SubWorker needs a store");
  }

  const SoftmaxLinearPolicy& policy() const { return pi_; }

  // Publishes the current policy as SubCheckpoint(step).
  void publish(int step, const RoleStepStats& last = {}) {
    ctx_.store->put(checkpoint_key(ctx_, step), encode_sub_checkpoint(pi_, last));
  }

  // Consumes the records of `step` and updates the policy (unless frozen).
  // Returns the step statistics; grad_norm is 0 when no update was applied.
  RoleStepStats step(int step, std::span<const Task> tasks) {
    if (tasks.empty()) return {};
    require_distinct_queries(tasks);
    std::vector<StoreKey> wanted{barrier_key(ctx_, step)};
    for (const Task& t : tasks)
      for (int k = 0; k < ctx_.cfg.K; ++k) {
        wanted.push_back(record_key(ctx_, step, t.query.id, k, StoreKind::kMainReward));
        wanted.push_back(record_key(ctx_, step, t.query.id, k, StoreKind::kSubTrajectoryRef));
      }
    const auto payloads = ctx_.store->wait(wanted, ctx_.timeout);

    std::vector<SubGroupInput> groups;
    for (const Task& t : tasks) {
      SubGroupInput in;
      in.task = t;
      for (int k = 0; k < ctx_.cfg.K; ++k) {
        const MainRewardRecord rec = decode_main_reward(
            payloads.at(record_key(ctx_, step, t.query.id, k, StoreKind::kMainReward)));
        verify_main_reward(rec, t, k);
        Rollout r;
        r.query_id = t.query.id;
        decode_sub_ref(payloads.at(record_key(ctx_, step, t.query.id, k, StoreKind::kSubTrajectoryRef)), r);
        in.rollouts.push_back(std::move(r));
        in.main_correct.push_back(rec.r_correct_main);
      }
      groups.push_back(std::move(in));
    }
    const Stage stage = ctx_.cfg.stage_of(step);
    SubStepResult res = compute_sub_update(groups, pi_, aligns_subs(ctx_.mode, stage), ctx_.seed, step, ctx_.cfg);
    if (trains_sub(ctx_.mode, stage))
      pi_ = apply_update(pi_, res.grad, ctx_.cfg.lr_sub);
    else
      res.stats.grad_norm = 0.0;
    return res.stats;
  }

 private:
  // The sub side recomputes the main reward from the published output.
  void verify_main_reward(const MainRewardRecord& rec, const Task& t, int k) const {
    const RewardBreakdown b =
        main_reward(rec.main_output, t.query.ground_truth, ctx_.cfg.weights, ctx_.cfg.env.vocab_size);
    if (b.correct != rec.r_correct_main || b.format_ok != rec.main_format_ok || b.total != rec.main_total)
      throw DataIntegrityError("MainReward record for " + t.query.id + " rollout " + std::to_string(k) +
                               " disagrees with recomputation");
  }

  RunContext ctx_;
  SoftmaxLinearPolicy pi_;
};

// ---------------------------------------------------------------------------
// Curriculum driver.

// Evaluation points: every `every` steps counted from the start of stage 2,
// plus the final step.
inline bool is_eval_step(int step, const CurriculumConfig& cfg, int every) {
  if (step == cfg.total_steps() - 1) return true;
  if (cfg.stage_of(step) != Stage::kStage2) return false;
  return (step - cfg.stage1_steps + 1) % every == 0;
}

enum class Engine { kReference, kPipeline };

struct CurriculumOptions {
  Engine engine = Engine::kPipeline;
  Store* store = nullptr;  // pipeline engine; a MemoryStore is used when null
  std::string run_id = "run";
  std::chrono::milliseconds timeout{60000};
  int eval_every = 25;
  int eval_episodes = 100;
  std::function<void(const StepMetrics&)> on_step;  // called in step order
};

struct CurriculumResult {
  std::vector<StepMetrics> metrics;
  PolicyPair final_policies;
};

namespace detail {

inline void finish_row(StepMetrics& m, const PolicyPair& after, Mode mode, std::uint64_t seed,
                       const CurriculumConfig& cfg, const CurriculumOptions& opt,
                       const std::vector<Task>& eval_set) {
  if (is_eval_step(m.step, cfg, opt.eval_every))
    m.eval_success = evaluate(eval_set, after.main, &after.sub, mode, seed, cfg).success_rate();
  if (opt.on_step) opt.on_step(m);
}

inline StepMetrics main_row(int step, Mode mode, const CurriculumConfig& cfg, const RoleStepStats& ms) {
  StepMetrics m;
  m.step = step;
  m.stage = cfg.stage_of(step);
  m.mode = mode;
  m.mean_main_reward = ms.mean_reward;
  m.grad_norm_main = ms.grad_norm;
  m.main_stats = ms;
  return m;
}

inline void add_sub_stats(StepMetrics& m, const RoleStepStats& ss) {
  m.mean_sub_reward = ss.mean_reward;
  m.grad_norm_sub = ss.grad_norm;
  m.sub_stats = ss;
}

}  // namespace detail

inline std::vector<Task> curriculum_eval_set(std::uint64_t seed, const CurriculumConfig& cfg,
                                             const CurriculumOptions& opt) {
  return eval_tasks(seed, Stage::kStage2, opt.eval_episodes, cfg.env);
}

// Main-side loop of the decoupled run. It owns the metrics: the statistics of
// sub step t arrive with SubCheckpoint(t+1).
inline CurriculumResult run_main_loop(const RunContext& ctx, SoftmaxLinearPolicy pi_main,
                                      const CurriculumOptions& opt) {
  const CurriculumConfig& cfg = ctx.cfg;
  const bool single = ctx.mode == Mode::kSingleAgent;
  const std::vector<Task> eval_set = curriculum_eval_set(ctx.seed, cfg, opt);
  MainWorker worker(ctx, std::move(pi_main));
  CurriculumResult out;
  std::optional<StepMetrics> pending;
  auto complete = [&](int next_step) {
    PolicyPair now{worker.policy(), {}};
    if (!single) {
      const RoleStepStats ss = worker.sync_sub_snapshot(next_step);
      now.sub = *worker.sub_snapshot();
      if (pending) detail::add_sub_stats(*pending, ss);
    }
    if (pending) {
      detail::finish_row(*pending, now, ctx.mode, ctx.seed, cfg, opt, eval_set);
      out.metrics.push_back(*pending);
      pending.reset();
      if (single) ctx.store->mark_step_complete(ctx.run_id, next_step - 1);
    }
    out.final_policies = now;
  };
  for (int t = 0; t < cfg.total_steps(); ++t) {
    complete(t);
    const std::vector<Task> tasks = step_tasks(ctx.seed, t, cfg);
    pending = detail::main_row(t, ctx.mode, cfg, worker.step(t, tasks));
  }
  complete(cfg.total_steps());
  return out;
}

inline SoftmaxLinearPolicy run_sub_loop(const RunContext& ctx, SoftmaxLinearPolicy pi_sub) {
  SubWorker worker(ctx, std::move(pi_sub));
  worker.publish(0);
  for (int t = 0; t < ctx.cfg.total_steps(); ++t) {
    const RoleStepStats stats = worker.step(t, step_tasks(ctx.seed, t, ctx.cfg));
    worker.publish(t + 1, stats);
    ctx.store->mark_step_complete(ctx.run_id, t);
  }
  return worker.policy();
}

inline CurriculumResult run_reference_curriculum(const CurriculumConfig& cfg, Mode mode,
                                                 std::uint64_t seed, const CurriculumOptions& opt) {
  const std::vector<Task> eval_set = curriculum_eval_set(seed, cfg, opt);
  PolicyPair p = initial_policies(cfg, mode);
  CurriculumResult out;
  for (int t = 0; t < cfg.total_steps(); ++t) {
    StepMetrics m;
    p = reference_trainer_step(t, step_tasks(seed, t, cfg), p, mode, seed, cfg, &m);
    if (mode == Mode::kSingleAgent) {
      m.mean_sub_reward = std::numeric_limits<double>::quiet_NaN();
      m.sub_stats = {};
    }
    detail::finish_row(m, p, mode, seed, cfg, opt, eval_set);
    out.metrics.push_back(m);
  }
  out.final_policies = p;
  return out;
}

// Both workers on their own threads over one store.
inline CurriculumResult run_pipeline_curriculum(const CurriculumConfig& cfg, Mode mode,
                                                std::uint64_t seed, const CurriculumOptions& opt) {
  std::unique_ptr<MemoryStore> owned;
  Store* store = opt.store;
  if (store == nullptr) {
    owned = std::make_unique<MemoryStore>();
    store = owned.get();
  }
  RunContext ctx{store, opt.run_id, seed, mode, cfg, opt.timeout};
  PolicyPair init = initial_policies(cfg, mode);

  std::exception_ptr sub_error;
  SoftmaxLinearPolicy sub_final = init.sub;
  std::thread sub_thread;
  if (mode != Mode::kSingleAgent) {
    sub_thread = std::thread([&] {
      try {
        sub_final = run_sub_loop(ctx, init.sub);
      } catch (...) {
        sub_error = std::current_exception();
        store->cancel();
      }
    });
  }
  std::exception_ptr main_error;
  CurriculumResult out;
  try {
    out = run_main_loop(ctx, init.main, opt);
  } catch (...) {
    main_error = std::current_exception();
    store->cancel();
  }
  if (sub_thread.joinable()) sub_thread.join();
  // Report the root cause, not the cancellation it triggered on the other side.
  auto is_cancel = [](const std::exception_ptr& e) {
    try {
      std::rethrow_exception(e);
    } catch (const StoreCancelled&) {
      return true;
    } catch (...) {
      return false;
    }
  };
  if (main_error && !is_cancel(main_error)) std::rethrow_exception(main_error);
  if (sub_error) std::rethrow_exception(sub_error);
  if (main_error) std::rethrow_exception(main_error);
  if (mode != Mode::kSingleAgent) out.final_policies.sub = sub_final;
  return out;
}

inline CurriculumResult run_curriculum(const CurriculumConfig& cfg, Mode mode, std::uint64_t seed,
                                       const CurriculumOptions& opt = {}) {
  const auto problems = cfg.violations();
  if (!problems.empty()) throw ContractViolation("invalid CurriculumConfig: " + problems.front());
  require(opt.eval_every >= 1, "eval_every must be >= 1");
  require(opt.eval_episodes >= 0, "eval_episodes must be >= 0");
  return opt.engine == Engine::kReference ? run_reference_curriculum(cfg, mode, seed, opt)
                                          : run_pipeline_curriculum(cfg, mode, seed, opt);
}

}  // namespace mgrpo

#endif  // MGRPO_PIPELINE_HPP_
