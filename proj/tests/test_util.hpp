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

// Shared fixtures and independent oracles for the tests and the acceptance
// binary. Oracles here deliberately avoid the library's own helpers.

#ifndef MGRPO_TESTS_TEST_UTIL_HPP_
#define MGRPO_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "mgrpo/alignment.hpp"
#include "mgrpo/objective.hpp"
#include "mgrpo/policy.hpp"
#include "mgrpo/random.hpp"

namespace mgrpo::testing {

inline double normal(Rng& rng) {
  // Box-Muller; both uniforms strictly inside (0,1).
  const double u1 = (static_cast<double>(rng.next() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = (static_cast<double>(rng.next() >> 11) + 0.5) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline SoftmaxLinearPolicy random_policy(Role role, int dim, int vocab, double scale, Rng& rng) {
  auto p = SoftmaxLinearPolicy::zeros(role, dim, vocab);
  for (double& w : p.params.theta) w = scale * normal(rng);
  return p;
}

// Scalar softmax of state^T W, written out longhand.
inline std::vector<double> oracle_probs(const SoftmaxLinearPolicy& p, const std::vector<double>& x) {
  std::vector<long double> z(static_cast<std::size_t>(p.vocab_size), 0.0L);
  for (int a = 0; a < p.vocab_size; ++a)
    for (int f = 0; f < p.feature_dim; ++f) z[a] += static_cast<long double>(x[f]) * p.weight(f, a);
  const long double m = *std::max_element(z.begin(), z.end());
  long double s = 0.0L;
  for (auto& v : z) s += (v = std::exp(v - m));
  std::vector<double> out;
  for (auto v : z) out.push_back(static_cast<double>(v / s));
  return out;
}

inline double oracle_seq_logprob(const SoftmaxLinearPolicy& p, const Trajectory& t) {
  double lp = 0.0;
  for (const Step& s : t.steps) lp += std::log(oracle_probs(p, s.state)[s.action]);
  return lp;
}

// Trajectory of `steps` random dense states with actions sampled from p and
// behaviour log-probs recorded from p.
inline Trajectory sampled_trajectory(const SoftmaxLinearPolicy& p, int steps, Rng& rng) {
  Trajectory t;
  t.role = p.role();
  for (int i = 0; i < steps; ++i) {
    Step s;
    s.state.resize(static_cast<std::size_t>(p.feature_dim));
    for (double& x : s.state) x = normal(rng);
    const auto [a, lp] = sample_action(p, s.state, rng);
    s.action = a;
    s.behavior_logprob = lp;
    t.steps.push_back(std::move(s));
  }
  t.terminated = true;
  return t;
}

// K rollouts whose sub counts follow `profile`.
inline std::vector<Rollout> synthetic_rollouts(const SoftmaxLinearPolicy& pm, const SoftmaxLinearPolicy& ps,
                                               const std::vector<std::size_t>& profile, Rng& rng) {
  std::vector<Rollout> out;
  for (std::size_t k = 0; k < profile.size(); ++k) {
    Rollout r;
    r.main = sampled_trajectory(pm, 1 + static_cast<int>(rng.uniform_int(3)), rng);
    for (std::size_t i = 0; i < profile[k]; ++i) {
      r.subs.push_back(sampled_trajectory(ps, 1 + static_cast<int>(rng.uniform_int(3)), rng));
      r.subtask_keys.push_back(static_cast<int>(i));
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<double> random_rewards(std::size_t n, Rng& rng, bool discrete) {
  std::vector<double> r(n);
  for (double& v : r) v = discrete ? static_cast<double>(rng.uniform_int(3)) * 0.5 : normal(rng);
  return r;
}

// REINFORCE with baseline: sum_i w_i A_i grad log pi(o_i), from the longhand
// softmax gradient x_f (1[a = a_t] - p_a).
inline std::vector<double> oracle_reinforce(const SoftmaxLinearPolicy& p,
                                            const std::vector<const Trajectory*>& trajs,
                                            const std::vector<double>& adv, double weight) {
  std::vector<double> g(p.params.theta.size(), 0.0);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    for (const Step& s : trajs[i]->steps) {
      const auto pr = oracle_probs(p, s.state);
      for (int f = 0; f < p.feature_dim; ++f)
        for (int a = 0; a < p.vocab_size; ++a)
          g[static_cast<std::size_t>(f) * p.vocab_size + a] +=
              weight * adv[i] * s.state[f] * ((a == s.action ? 1.0 : 0.0) - pr[a]);
    }
  }
  return g;
}

// Central differences of f at theta, step h.
template <class F>
std::vector<double> finite_difference(SoftmaxLinearPolicy p, F&& f, double h = 1e-5) {
  std::vector<double> g(p.params.theta.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double orig = p.params.theta[j];
    p.params.theta[j] = orig + h;
    const double up = f(p);
    p.params.theta[j] = orig - h;
    const double down = f(p);
    p.params.theta[j] = orig;
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
  return std::sqrt(diff) / scale;
}

inline double pop_mean(const std::vector<double>& v) {
  long double s = 0.0L;
  for (double x : v) s += x;
  return static_cast<double>(s / static_cast<long double>(v.size()));
}

inline double pop_std(const std::vector<double>& v) {
  const long double m = pop_mean(v);
  long double s = 0.0L;
  for (double x : v) s += (x - m) * (x - m);
  return static_cast<double>(std::sqrt(s / static_cast<long double>(v.size())));
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() /
                 ("mgrpo_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace mgrpo::testing

#endif  // MGRPO_TESTS_TEST_UTIL_HPP_
