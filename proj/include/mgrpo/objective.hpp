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

// Group-relative advantages and the clipped sequence-level surrogate for both
// agent roles.
//
// Main agent, one query with K rollouts:
//   A_k = (R_k - mean(R)) / std(R)           population std, A = 0 if std = 0
//   J_M = 1/K  sum_k min(rho_k A_k, clip(rho_k, 1-eps, 1+eps) A_k)
// Sub agent, after alignment to K x d entries:
//   one pooled mean/std over all K*d rewards (duplicates at face value)
//   J_S = 1/(dK) sum_k sum_i min(rho_ki A_ki, clip(rho_ki) A_ki)
// with rho = exp(log pi_new(o|q) - log pi_old(o|q)), one ratio per trajectory.

#ifndef MGRPO_OBJECTIVE_HPP_
#define MGRPO_OBJECTIVE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mgrpo/core.hpp"
#include "mgrpo/policy.hpp"

namespace mgrpo {

struct GroupStats {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

struct ClipConfig {
  double epsilon = 0.2;

  std::vector<std::string> violations() const {
    if (epsilon > 0.0 && epsilon < 1.0) return {};
    return {"epsilon: ClipConfig requires 0 < epsilon < 1"};
  }
};

// Normalizes the entries selected by mask (all entries when mask is empty);
// unselected entries get advantage 0. All-equal selections have std exactly 0.
inline std::pair<GroupStats, std::vector<double>> normalize_group(
    std::span<const double> rewards, std::span<const std::uint8_t> mask = {}) {
  require(mask.empty() || mask.size() == rewards.size(), "normalize_group: mask length mismatch");
  auto selected = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };
  GroupStats st;
  double sum = 0.0;
  bool all_equal = true;
  double first = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    if (!selected(i)) continue;
    if (!std::isfinite(rewards[i])) throw NumericError("non-finite reward in group");
    if (st.count == 0)
      first = rewards[i];
    else if (rewards[i] != first)
      all_equal = false;
    sum += rewards[i];
    ++st.count;
  }
  std::vector<double> adv(rewards.size(), 0.0);
  if (st.count == 0) return {st, adv};
  st.mean = all_equal ? first : sum / static_cast<double>(st.count);
  if (all_equal || st.count < 2) return {st, adv};
  double ss = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    if (!selected(i)) continue;
    const double dev = rewards[i] - st.mean;
    ss += dev * dev;
  }
  st.std = std::sqrt(ss / static_cast<double>(st.count));
  if (st.std == 0.0) return {st, adv};
  for (std::size_t i = 0; i < rewards.size(); ++i)
    if (selected(i)) adv[i] = (rewards[i] - st.mean) / st.std;
  return {st, adv};
}

inline std::pair<GroupStats, std::vector<double>> main_advantages(std::span<const double> rewards) {
  require(rewards.size() >= 2, "main_advantages: need K >= 2 rollouts");
  return normalize_group(rewards);
}

// rewards is rollout-major K x d. Entries with active[i] == 0 (placeholders
// for rollouts that never delegated) are excluded from the pooled statistics
// and receive advantage 0.
inline std::pair<GroupStats, std::vector<double>> sub_advantages(
    std::span<const double> rewards, std::size_t K, std::size_t d,
    std::span<const std::uint8_t> active = {}) {
  require(K >= 2, "sub_advantages: need K >= 2 rollouts");
  require(d >= 1, "sub_advantages: need d >= 1");
  require(rewards.size() == K * d, "sub_advantages: expected K*d rewards");
  return normalize_group(rewards, active);
}

// One term of the clipped objective: min(rho A, clip(rho) A).
inline double clipped_term(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

// True where the unclipped branch is selected, i.e. the term depends on theta.
inline bool clip_inactive(double ratio, double advantage, double epsilon) {
  if (advantage > 0.0) return ratio <= 1.0 + epsilon;
  if (advantage < 0.0) return ratio >= 1.0 - epsilon;
  return false;
}

struct SurrogateTerm {
  const Trajectory* trajectory = nullptr;
  double advantage = 0.0;
  double weight = 0.0;
};

struct SurrogateResult {
  double value = 0.0;
  std::vector<double> grad;  // empty unless requested
  std::size_t clipped = 0;   // terms on a constant branch
};

// Behavior log-probs recorded at sampling time must match pi_old.
inline void check_behavior(const SoftmaxLinearPolicy& pi_old, const Trajectory& t,
                           double tol = 1e-9) {
  for (std::size_t s = 0; s < t.steps.size(); ++s) {
    const Step& st = t.steps[s];
    const double lp = action_logprobs(pi_old, st.state)[st.action];
    if (std::abs(lp - st.behavior_logprob) > tol)
      throw DataIntegrityError("behavior_logprob at step " + std::to_string(s) +
                               " does not match the old policy (" +
                               std::to_string(st.behavior_logprob) + " vs " +
                               std::to_string(lp) + ")");
  }
}

// sum_i w_i min(rho_i A_i, clip(rho_i) A_i) and, optionally, its gradient in
// pi_new's parameters. Terms are reduced in the order given.
inline SurrogateResult clipped_surrogate(std::span<const SurrogateTerm> terms,
                                         const SoftmaxLinearPolicy& pi_new,
                                         const SoftmaxLinearPolicy& pi_old, const ClipConfig& cfg,
                                         bool want_grad) {
  require(cfg.violations().empty(), "ClipConfig requires 0 < epsilon < 1");
  require(pi_new.role() == pi_old.role() && pi_new.feature_dim == pi_old.feature_dim &&
              pi_new.vocab_size == pi_old.vocab_size,
          "pi_new and pi_old must share role and shape");
  SurrogateResult out;
  if (want_grad) out.grad.assign(pi_new.params.theta.size(), 0.0);
  for (const SurrogateTerm& term : terms) {
    const Trajectory& t = *term.trajectory;
    check_behavior(pi_old, t);
    const double ratio = std::exp(sequence_logprob(pi_new, t) - sequence_logprob(pi_old, t));
    out.value += term.weight * clipped_term(ratio, term.advantage, cfg.epsilon);
    if (!clip_inactive(ratio, term.advantage, cfg.epsilon)) {
      if (term.advantage != 0.0) ++out.clipped;
      continue;
    }
    // d/dtheta (rho A) = rho A grad log pi_new
    if (want_grad)
      accumulate_grad_sequence_logprob(pi_new, t, term.weight * ratio * term.advantage, out.grad);
  }
  return out;
}

inline std::vector<SurrogateTerm> main_terms(std::span<const Trajectory> mains,
                                             std::span<const double> adv) {
  require(mains.size() == adv.size(), "surrogate_main: one advantage per rollout");
  require(!mains.empty(), "surrogate_main: empty group");
  std::vector<SurrogateTerm> terms;
  const double w = 1.0 / static_cast<double>(mains.size());
  for (std::size_t k = 0; k < mains.size(); ++k) terms.push_back({&mains[k], adv[k], w});
  return terms;
}

// Placeholders are skipped but still count in the 1/(dK) normalization.
inline std::vector<SurrogateTerm> sub_terms(std::span<const AlignedSub> subs,
                                            std::span<const double> adv) {
  require(subs.size() == adv.size(), "surrogate_sub: one advantage per aligned entry");
  require(!subs.empty(), "surrogate_sub: empty batch");
  std::vector<SurrogateTerm> terms;
  const double w = 1.0 / static_cast<double>(subs.size());
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i].provenance == Provenance::kPlaceholder) continue;
    terms.push_back({&subs[i].trajectory, adv[i], w});
  }
  return terms;
}

inline double surrogate_main(std::span<const Trajectory> mains, const SoftmaxLinearPolicy& pi_new,
                             const SoftmaxLinearPolicy& pi_old, std::span<const double> adv,
                             const ClipConfig& cfg) {
  const auto terms = main_terms(mains, adv);
  return clipped_surrogate(terms, pi_new, pi_old, cfg, false).value;
}

inline double surrogate_sub(const AlignedBatch& batch, const SoftmaxLinearPolicy& pi_new,
                            const SoftmaxLinearPolicy& pi_old, std::span<const double> adv,
                            const ClipConfig& cfg) {
  require(batch.subs.size() == batch.mains.size() * batch.d,
          "surrogate_sub: batch is not aligned to K x d");
  const auto terms = sub_terms(batch.subs, adv);
  return clipped_surrogate(terms, pi_new, pi_old, cfg, false).value;
}

inline std::vector<double> surrogate_grad(Role role, const AlignedBatch& batch,
                                          const SoftmaxLinearPolicy& pi_new,
                                          const SoftmaxLinearPolicy& pi_old,
                                          std::span<const double> adv, const ClipConfig& cfg) {
  const auto terms = role == Role::kMain ? main_terms(batch.mains, adv) : sub_terms(batch.subs, adv);
  return clipped_surrogate(terms, pi_new, pi_old, cfg, true).grad;
}

// Plain gradient ascent: theta' = theta + lr * grad.
inline PolicyParams update(const PolicyParams& params, std::span<const double> grad, double lr) {
  require(lr > 0.0, "update: learning rate must be positive");
  require(grad.size() == params.theta.size(), "update: gradient dimension mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw NumericError("update: non-finite gradient entry");
  PolicyParams next = params;
  for (std::size_t i = 0; i < grad.size(); ++i) next.theta[i] += lr * grad[i];
  ++next.version;
  return next;
}

inline double l2_norm(std::span<const double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  return std::sqrt(ss);
}

}  // namespace mgrpo

#endif  // MGRPO_OBJECTIVE_HPP_
