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

// Weak initial bias standing in for a pretrained model: each agent starts
// slightly inclined towards generic competent behaviour (answer format, copying
// tool output into the answer, looking up the assigned key, re-reading a page
// whose search result is flagged unreliable). strength 0 gives the uniform
// policy.

#ifndef MGRPO_PRIOR_HPP_
#define MGRPO_PRIOR_HPP_

#include "mgrpo/env.hpp"
#include "mgrpo/policy.hpp"

namespace mgrpo {

namespace detail {

inline void bias(SoftmaxLinearPolicy& p, int feature, int action, double s) {
  p.params.theta[static_cast<std::size_t>(feature) * p.vocab_size + action] += s;
}

}  // namespace detail

inline void apply_main_prior(SoftmaxLinearPolicy& p, const EnvConfig& c, double s) {
  if (s == 0.0) return;
  const MainLayout l(c);
  const ActionVocab v = ActionVocab::main(c);
  for (int j = 0; j < c.max_hops; ++j)
    detail::bias(p, l.next_slot + j, v.encode({ActionKind::kDelegate, j}), s);
  detail::bias(p, l.all_resolved, v.encode({ActionKind::kBegin}), s);
  for (int t = 0; t < c.vocab_size; ++t)
    detail::bias(p, l.token + t, v.encode({ActionKind::kEmit, t}), s);
  detail::bias(p, l.complete, v.encode({ActionKind::kEnd}), s);
}

// Relative strength of the inclination to visit after an unreliable result.
inline constexpr double kVisitPrior = 2.5;

inline void apply_sub_prior(SoftmaxLinearPolicy& p, const EnvConfig& c, double s) {
  if (s == 0.0) return;
  const SubLayout l(c);
  const ActionVocab v = ActionVocab::sub(c);
  for (int k = 0; k < c.num_keys; ++k) {
    detail::bias(p, l.key + k, v.encode({ActionKind::kSearch, k}), s);
    detail::bias(p, l.has_result, v.encode({ActionKind::kSearch, k}), -s);
    detail::bias(p, l.unreliable_key + k, v.encode({ActionKind::kVisit, k}), kVisitPrior * s);
  }
  detail::bias(p, l.has_result, v.encode({ActionKind::kBegin}), s);
  for (int t = 0; t < c.vocab_size; ++t)
    detail::bias(p, l.token + t, v.encode({ActionKind::kEmit, t}), s);
  detail::bias(p, l.answer_started, v.encode({ActionKind::kEnd}), s);
}

inline void apply_single_prior(SoftmaxLinearPolicy& p, const EnvConfig& c, double s) {
  if (s == 0.0) return;
  const SingleLayout l(c);
  const ActionVocab v = ActionVocab::single(c);
  for (int k = 0; k < c.num_keys; ++k) {
    detail::bias(p, l.next_key + k, v.encode({ActionKind::kSearch, k}), s);
    detail::bias(p, l.unreliable_key + k, v.encode({ActionKind::kVisit, k}), kVisitPrior * s);
  }
  detail::bias(p, l.all_resolved, v.encode({ActionKind::kBegin}), s);
  for (int t = 0; t < c.vocab_size; ++t)
    detail::bias(p, l.token + t, v.encode({ActionKind::kEmit, t}), s);
  detail::bias(p, l.complete, v.encode({ActionKind::kEnd}), s);
}

}  // namespace mgrpo

#endif  // MGRPO_PRIOR_HPP_
