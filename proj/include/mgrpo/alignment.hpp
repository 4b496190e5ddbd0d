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

// Trajectory alignment: every rollout contributes exactly d sub entries.
//
//   d_k == d  identity
//   d_k <  d  all originals once, then d - d_k copies of uniformly chosen
//             originals (with replacement)
//   d_k >  d  a uniformly random d-subset of the originals, original order kept
//   d_k == 0  d inert placeholders (zero advantage, no gradient)

#ifndef MGRPO_ALIGNMENT_HPP_
#define MGRPO_ALIGNMENT_HPP_

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "mgrpo/core.hpp"
#include "mgrpo/random.hpp"

namespace mgrpo {

// Smallest d >= 1 whose empirical CDF value P(count <= d) reaches quantile.
inline std::size_t estimate_d(std::span<const std::size_t> invocation_counts,
                              double quantile = 0.99) {
  require(!invocation_counts.empty(), "estimate_d: no invocation counts");
  require(quantile > 0.0 && quantile < 1.0, "estimate_d: quantile must lie in (0,1)");
  std::vector<std::size_t> sorted(invocation_counts.begin(), invocation_counts.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  for (std::size_t d = 0;; ++d) {
    const auto at_most = std::upper_bound(sorted.begin(), sorted.end(), d) - sorted.begin();
    if (static_cast<double>(at_most) / n >= quantile) return std::max<std::size_t>(d, 1);
  }
}

struct AlignedIndex {
  std::size_t source = 0;
  Provenance provenance = Provenance::kOriginal;

  bool operator==(const AlignedIndex&) const = default;
};

inline std::vector<AlignedIndex> align_indices(std::size_t d_k, std::size_t d, Rng& rng) {
  require(d >= 1, "align: d must be >= 1");
  std::vector<AlignedIndex> out;
  out.reserve(d);
  if (d_k == 0) {
    out.assign(d, AlignedIndex{0, Provenance::kPlaceholder});
  } else if (d_k <= d) {
    for (std::size_t i = 0; i < d_k; ++i) out.push_back({i, Provenance::kOriginal});
    for (std::size_t i = d_k; i < d; ++i)
      out.push_back({static_cast<std::size_t>(rng.uniform_int(d_k)), Provenance::kDuplicate});
  } else {
    std::vector<std::size_t> idx(d_k);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(d_k - i));
      std::swap(idx[i], idx[j]);
    }
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(d));
    for (std::size_t i = 0; i < d; ++i) out.push_back({idx[i], Provenance::kOriginal});
  }
  return out;
}

inline std::vector<AlignedSub> align(const Rollout& r, std::size_t rollout_index, std::size_t d,
                                     Rng& rng) {
  std::vector<AlignedSub> out;
  for (const AlignedIndex& ix : align_indices(r.subs.size(), d, rng)) {
    AlignedSub e;
    e.rollout = rollout_index;
    e.source = ix.source;
    e.provenance = ix.provenance;
    if (ix.provenance == Provenance::kPlaceholder)
      e.trajectory.role = Role::kSub;
    else
      e.trajectory = r.subs[ix.source];
    out.push_back(std::move(e));
  }
  return out;
}

// Rollout k aligns with its own stream derived from (align_seed, k).
inline AlignedBatch build_aligned_batch(std::span<const Rollout> rollouts, std::size_t d,
                                        std::uint64_t align_seed) {
  AlignedBatch batch;
  batch.d = d;
  for (std::size_t k = 0; k < rollouts.size(); ++k) {
    batch.mains.push_back(rollouts[k].main);
    Rng rng(derive_seed(align_seed, {kTagAlign, k}));
    for (AlignedSub& e : align(rollouts[k], k, d, rng)) batch.subs.push_back(std::move(e));
  }
  return batch;
}

}  // namespace mgrpo

#endif  // MGRPO_ALIGNMENT_HPP_
