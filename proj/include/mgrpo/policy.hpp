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

#ifndef MGRPO_POLICY_HPP_
#define MGRPO_POLICY_HPP_

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mgrpo/core.hpp"
#include "mgrpo/random.hpp"
#include "mgrpo/serialize.hpp"

namespace mgrpo {

// Linear-softmax categorical policy: logits = state^T W with W stored
// feature-major, theta[f * vocab_size + a]. Text tokens and control actions
// share one categorical space.
struct SoftmaxLinearPolicy {
  PolicyParams params;
  int feature_dim = 0;
  int vocab_size = 0;

  static SoftmaxLinearPolicy zeros(Role role, int feature_dim, int vocab_size) {
    require(feature_dim > 0 && vocab_size > 1, "policy needs feature_dim > 0 and vocab_size > 1");
    SoftmaxLinearPolicy p;
    p.params.role = role;
    p.params.theta.assign(static_cast<std::size_t>(feature_dim) * vocab_size, 0.0);
    p.feature_dim = feature_dim;
    p.vocab_size = vocab_size;
    return p;
  }

  Role role() const { return params.role; }
  double weight(int f, int a) const {
    return params.theta[static_cast<std::size_t>(f) * vocab_size + a];
  }

  bool operator==(const SoftmaxLinearPolicy&) const = default;
};

namespace detail {

inline void check_state(const SoftmaxLinearPolicy& p, std::span<const double> state) {
  if (static_cast<int>(state.size()) != p.feature_dim)
    throw ContractViolation("state dimension " + std::to_string(state.size()) +
                            " does not match policy feature_dim " +
                            std::to_string(p.feature_dim));
}

inline std::vector<double> logits(const SoftmaxLinearPolicy& p, std::span<const double> state) {
  std::vector<double> z(static_cast<std::size_t>(p.vocab_size), 0.0);
  for (int f = 0; f < p.feature_dim; ++f) {
    const double s = state[f];
    if (s == 0.0) continue;
    const double* row = p.params.theta.data() + static_cast<std::size_t>(f) * p.vocab_size;
    for (int a = 0; a < p.vocab_size; ++a) z[a] += s * row[a];
  }
  return z;
}

inline void check_step_action(const SoftmaxLinearPolicy& p, int action) {
  if (action < 0 || action >= p.vocab_size)
    throw ContractViolation("action index outside policy vocabulary");
}

inline void check_role(const SoftmaxLinearPolicy& p, const Trajectory& t) {
  if (t.role != p.role())
    throw ContractViolation(std::string("trajectory role ") + to_string(t.role) +
                            " does not match policy role " + to_string(p.role()));
}

}  // namespace detail

inline std::vector<double> action_logprobs(const SoftmaxLinearPolicy& p,
                                           std::span<const double> state) {
  detail::check_state(p, state);
  std::vector<double> z = detail::logits(p, state);
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  const double lse = zmax + std::log(sum);
  for (double& v : z) v -= lse;
  return z;
}

inline std::pair<int, double> sample_action(const SoftmaxLinearPolicy& p,
                                            std::span<const double> state, Rng& rng) {
  const std::vector<double> lp = action_logprobs(p, state);
  const double u = rng.uniform01();
  double cum = 0.0;
  for (int a = 0; a < p.vocab_size; ++a) {
    cum += std::exp(lp[a]);
    if (u < cum) return {a, lp[a]};
  }
  // Rounding left cum slightly below 1; take the last action with mass.
  for (int a = p.vocab_size - 1; a >= 0; --a) {
    if (lp[a] > -std::numeric_limits<double>::infinity()) return {a, lp[a]};
  }
  return {p.vocab_size - 1, lp.back()};
}

// Argmax action; ties resolve to the lowest index.
inline std::pair<int, double> greedy_action(const SoftmaxLinearPolicy& p,
                                            std::span<const double> state) {
  const std::vector<double> lp = action_logprobs(p, state);
  const auto it = std::max_element(lp.begin(), lp.end());
  return {static_cast<int>(it - lp.begin()), *it};
}

// log pi(o|q) as a sum over steps; the product is never formed.
inline double sequence_logprob(const SoftmaxLinearPolicy& p, const Trajectory& t) {
  detail::check_role(p, t);
  double total = 0.0;
  for (const Step& s : t.steps) {
    detail::check_step_action(p, s.action);
    total += action_logprobs(p, s.state)[s.action];
  }
  return total;
}

// acc += scale * d/dtheta log pi(o|q). Per step: state (x) (onehot(a) - softmax).
inline void accumulate_grad_sequence_logprob(const SoftmaxLinearPolicy& p, const Trajectory& t,
                                             double scale, std::vector<double>& acc) {
  detail::check_role(p, t);
  require(acc.size() == p.params.theta.size(), "gradient accumulator has wrong length");
  std::vector<double> coef(static_cast<std::size_t>(p.vocab_size));
  for (const Step& s : t.steps) {
    detail::check_step_action(p, s.action);
    const std::vector<double> lp = action_logprobs(p, s.state);
    for (int a = 0; a < p.vocab_size; ++a) coef[a] = -std::exp(lp[a]);
    coef[s.action] += 1.0;
    for (int f = 0; f < p.feature_dim; ++f) {
      const double x = s.state[f];
      if (x == 0.0) continue;
      double* row = acc.data() + static_cast<std::size_t>(f) * p.vocab_size;
      const double sx = scale * x;
      for (int a = 0; a < p.vocab_size; ++a) row[a] += sx * coef[a];
    }
  }
}

inline std::vector<double> grad_sequence_logprob(const SoftmaxLinearPolicy& p,
                                                 const Trajectory& t) {
  std::vector<double> g(p.params.theta.size(), 0.0);
  accumulate_grad_sequence_logprob(p, t, 1.0, g);
  return g;
}

// Checkpoint: role u8, version u64, feature_dim u32, vocab_size u32, then
// theta as little-endian f64.
inline Bytes serialize_policy(const SoftmaxLinearPolicy& p) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(p.role()));
  w.u64(p.params.version);
  w.u32(static_cast<std::uint32_t>(p.feature_dim));
  w.u32(static_cast<std::uint32_t>(p.vocab_size));
  w.f64s(p.params.theta);
  return w.take();
}

inline SoftmaxLinearPolicy deserialize_policy(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  SoftmaxLinearPolicy p;
  const std::uint8_t role = r.u8();
  if (role > 1) throw DataIntegrityError("bad role tag in policy checkpoint");
  p.params.role = static_cast<Role>(role);
  p.params.version = r.u64();
  p.feature_dim = static_cast<int>(r.u32());
  p.vocab_size = static_cast<int>(r.u32());
  const std::size_t n = static_cast<std::size_t>(p.feature_dim) * static_cast<std::size_t>(p.vocab_size);
  if (p.feature_dim <= 0 || p.vocab_size <= 0 || n > r.remaining() / 8)
    throw DataIntegrityError("policy checkpoint dimensions do not match its size");
  p.params.theta.resize(n);
  for (double& x : p.params.theta) x = r.f64();
  if (!r.done()) throw DataIntegrityError("trailing bytes after policy checkpoint");
  return p;
}

inline void save_policy(const SoftmaxLinearPolicy& p, const std::string& path) {
  const Bytes b = serialize_policy(p);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

inline SoftmaxLinearPolicy load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  Bytes b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_policy(b);
}

}  // namespace mgrpo

#endif  // MGRPO_POLICY_HPP_
