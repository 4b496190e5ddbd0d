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

// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "mgrpo/config.hpp"
#include "mgrpo/metrics.hpp"
#include "mgrpo/pipeline.hpp"
#include "test_util.hpp"

namespace mgrpo {
namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

// Checks mean 0 / population std 1 over the selected entries, or all zeros.
bool normalized_ok(const std::vector<double>& adv, const GroupStats& st, const std::vector<std::uint8_t>& mask,
                   double* worst) {
  std::vector<double> sel;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    if (mask.empty() || mask[i]) {
      sel.push_back(adv[i]);
    } else if (adv[i] != 0.0) {
      return false;
    }
  }
  if (st.std == 0.0) return std::all_of(adv.begin(), adv.end(), [](double a) { return a == 0.0; });
  const double m = testing::pop_mean(sel), s = testing::pop_std(sel);
  *worst = std::max({*worst, std::abs(m), std::abs(s - 1.0)});
  return std::abs(m) <= 1e-12 && std::abs(s - 1.0) <= 1e-12;
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  Rng rng(101);
  Outcome o;
  double worst = 0.0;
  int degenerate = 0;
  for (int g = 0; g < 1000; ++g) {
    const std::size_t K = 2 + rng.uniform_int(15);
    const std::size_t d = 1 + rng.uniform_int(8);
    const bool constant = g % 10 == 0;
    auto draw = [&](std::size_t n) {
      std::vector<double> r = testing::random_rewards(n, rng, g % 3 == 0);
      if (constant) std::fill(r.begin(), r.end(), r[0]);
      return r;
    };
    const auto rm = draw(K);
    const auto [sm, am] = main_advantages(rm);
    o.pass &= normalized_ok(am, sm, {}, &worst);
    const auto rs = draw(K * d);
    std::vector<std::uint8_t> active(K * d, 1);
    // Whole rollouts without delegations become placeholders.
    for (std::size_t k = 0; k + 1 < K; ++k)
      if (rng.uniform_int(4) == 0) std::fill_n(active.begin() + static_cast<std::ptrdiff_t>(k * d), d, 0);
    const auto [ss, as] = sub_advantages(rs, K, d, active);
    o.pass &= normalized_ok(as, ss, active, &worst);
    degenerate += (sm.std == 0.0) + (ss.std == 0.0);
  }
  const double secs = seconds_since(t0);
  o.pass &= secs < 1.0;
  o.detail = fmt("1000 groups, worst |mean|/|std-1| %.2e, %d zero-sigma groups exactly 0, %.3f s", worst,
                 degenerate, secs);
  return o;
}

// ---------------------------------------------------------------------------

bool alignment_laws(std::size_t d_k, std::size_t d, const std::vector<AlignedIndex>& out) {
  if (out.size() != d) return false;
  if (d_k == 0)
    return std::all_of(out.begin(), out.end(), [](const auto& e) { return e.provenance == Provenance::kPlaceholder; });
  if (d_k <= d) {
    for (std::size_t i = 0; i < d_k; ++i)
      if (out[i].source != i || out[i].provenance != Provenance::kOriginal) return false;
    for (std::size_t i = d_k; i < d; ++i)
      if (out[i].provenance != Provenance::kDuplicate || out[i].source >= d_k) return false;
    return true;
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (out[i].provenance != Provenance::kOriginal || out[i].source >= d_k) return false;
    if (i > 0 && out[i].source <= out[i - 1].source) return false;  // strictly increasing: a sub-multiset
  }
  return true;
}

Outcome criterion2() {
  const auto t0 = Clock::now();
  Outcome o;
  Rng rng(202);
  std::size_t cases = 0;
  for (std::size_t d_k = 0; d_k <= 20; ++d_k)
    for (std::size_t d = 1; d <= 12; ++d)
      for (int rep = 0; rep < 200; ++rep) {
        o.pass &= alignment_laws(d_k, d, align_indices(d_k, d, rng));
        ++cases;
      }
  const bool laws = o.pass;

  // Retention frequency of every original index when dropping.
  const int trials = 100000;
  double worst_z = 0.0;
  for (const auto [d_k, d] : {std::pair<std::size_t, std::size_t>{20, 8}, {13, 12}, {9, 1}}) {
    std::vector<int> kept(d_k, 0);
    for (int t = 0; t < trials; ++t)
      for (const auto& e : align_indices(d_k, d, rng)) ++kept[e.source];
    const double p = static_cast<double>(d) / static_cast<double>(d_k);
    const double sigma = std::sqrt(trials * p * (1 - p));
    for (int c : kept) worst_z = std::max(worst_z, std::abs(c - trials * p) / sigma);
  }
  // Duplicate sources are uniform over the originals.
  {
    const std::size_t d_k = 3, d = 8;
    std::vector<int> dup(d_k, 0);
    int total = 0;
    for (int t = 0; t < trials; ++t)
      for (const auto& e : align_indices(d_k, d, rng))
        if (e.provenance == Provenance::kDuplicate) ++dup[e.source], ++total;
    const double p = 1.0 / d_k;
    const double sigma = std::sqrt(total * p * (1 - p));
    for (int c : dup) worst_z = std::max(worst_z, std::abs(c - total * p) / sigma);
  }
  const double secs = seconds_since(t0);
  o.pass = laws && worst_z <= 3.0 && secs < 30.0;
  o.detail = fmt("%zu alignments obey the laws: %s; worst frequency deviation %.2f sigma over 100k trials; %.2f s",
                 cases, laws ? "yes" : "no", worst_z, secs);
  return o;
}

// ---------------------------------------------------------------------------

bool near_kink(const std::vector<const Trajectory*>& ts, const SoftmaxLinearPolicy& pnew,
               const SoftmaxLinearPolicy& pold, double eps) {
  for (const Trajectory* t : ts) {
    const double rho = std::exp(sequence_logprob(pnew, *t) - sequence_logprob(pold, *t));
    if (std::abs(rho - (1 - eps)) < 1e-3 || std::abs(rho - (1 + eps)) < 1e-3) return true;
  }
  return false;
}

Outcome criterion3() {
  const auto t0 = Clock::now();
  Outcome o;
  Rng rng(303);
  const ClipConfig clip{0.2};
  double worst = 0.0;
  int skipped = 0;
  for (Role role : {Role::kMain, Role::kSub}) {
    for (int checked = 0; checked < 100;) {
      const std::size_t K = 2 + rng.uniform_int(5);
      const auto pm = testing::random_policy(Role::kMain, 3, 4, 0.5, rng);
      const auto ps = testing::random_policy(Role::kSub, 3, 5, 0.5, rng);
      std::vector<std::size_t> profile(K);
      for (auto& n : profile) n = rng.uniform_int(5);
      const auto rollouts = testing::synthetic_rollouts(pm, ps, profile, rng);
      const AlignedBatch b = build_aligned_batch(rollouts, 1 + rng.uniform_int(4), rng.next());
      const SoftmaxLinearPolicy& pold = role == Role::kMain ? pm : ps;
      auto pnew = pold;
      for (double& w : pnew.params.theta) w += 0.15 * testing::normal(rng);
      std::vector<const Trajectory*> ts;
      if (role == Role::kMain) {
        for (const auto& t : b.mains) ts.push_back(&t);
      } else {
        for (const auto& e : b.subs)
          if (e.provenance != Provenance::kPlaceholder) ts.push_back(&e.trajectory);
      }
      if (ts.empty()) continue;
      if (near_kink(ts, pnew, pold, clip.epsilon)) {
        ++skipped;
        continue;
      }
      const auto adv = testing::random_rewards(role == Role::kMain ? b.mains.size() : b.subs.size(), rng, false);
      const auto g = surrogate_grad(role, b, pnew, pold, adv, clip);
      const auto fd = testing::finite_difference(pnew, [&](const SoftmaxLinearPolicy& p) {
        return role == Role::kMain ? surrogate_main(b.mains, p, pold, adv, clip) : surrogate_sub(b, p, pold, adv, clip);
      });
      const double err = testing::relative_error(g, fd);
      worst = std::max(worst, err);
      o.pass &= err <= 1e-4;
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  o.pass &= secs < 60.0;
  o.detail = fmt("100 main + 100 sub instances, worst relative error %.2e (%d kink draws skipped), %.2f s", worst,
                 skipped, secs);
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion4() {
  Outcome o;
  Rng rng(404);
  const std::size_t K = 8, d = 8;
  double worst = 0.0;
  int exact = 0, instances = 0;
  for (int rep = 0; rep < 50; ++rep, ++instances) {
    const auto pm = testing::random_policy(Role::kMain, 3, 4, 0.7, rng);
    const auto ps = testing::random_policy(Role::kSub, 3, 5, 0.7, rng);
    std::vector<std::size_t> profile(K);
    for (auto& n : profile) n = 1 + rng.uniform_int(12);
    const auto rollouts = testing::synthetic_rollouts(pm, ps, profile, rng);
    const AlignedBatch b = build_aligned_batch(rollouts, d, rng.next());
    const auto [stm, am] = main_advantages(testing::random_rewards(K, rng, false));
    const auto [sts, as] = sub_advantages(testing::random_rewards(K * d, rng, false), K, d);
    const double jm = surrogate_main(b.mains, pm, pm, am, {});
    const double js = surrogate_sub(b, ps, ps, as, {});
    const bool same = jm == std::accumulate(am.begin(), am.end(), 0.0) / K &&
                      js == std::accumulate(as.begin(), as.end(), 0.0) / (K * d);
    exact += same;
    o.pass &= same;

    std::vector<const Trajectory*> mt, st;
    for (const auto& t : b.mains) mt.push_back(&t);
    for (const auto& e : b.subs) st.push_back(&e.trajectory);
    const auto gm = surrogate_grad(Role::kMain, b, pm, pm, am, {});
    const auto gs = surrogate_grad(Role::kSub, b, ps, ps, as, {});
    const auto rm = testing::oracle_reinforce(pm, mt, am, 1.0 / K);
    const auto rs = testing::oracle_reinforce(ps, st, as, 1.0 / (K * d));
    for (std::size_t i = 0; i < gm.size(); ++i) worst = std::max(worst, std::abs(gm[i] - rm[i]));
    for (std::size_t i = 0; i < gs.size(); ++i) worst = std::max(worst, std::abs(gs[i] - rs[i]));
  }
  o.pass &= worst <= 1e-10;
  o.detail = fmt("K=8 d=8: value equals advantage mean exactly in %d/%d instances; worst |grad - REINFORCE| %.2e",
                 exact, instances, worst);
  return o;
}

// ---------------------------------------------------------------------------

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0 || (std::isnan(a) && std::isnan(b)); }

Outcome criterion5() {
  const auto t0 = Clock::now();
  Outcome o;
  CurriculumConfig cfg;
  cfg.stage1_steps = 10;
  cfg.stage2_steps = 10;
  std::string modes;
  for (Mode mode : {Mode::kCoTrain, Mode::kMainOnly, Mode::kSingleAgent, Mode::kNoSync}) {
    CurriculumOptions opt;
    opt.eval_every = 5;
    opt.eval_episodes = 20;
    opt.engine = Engine::kReference;
    const auto ref = run_curriculum(cfg, mode, 7, opt);
    opt.engine = Engine::kPipeline;
    const auto pipe = run_curriculum(cfg, mode, 7, opt);
    bool same = ref.final_policies.main == pipe.final_policies.main && ref.metrics.size() == pipe.metrics.size();
    if (mode != Mode::kSingleAgent) same &= ref.final_policies.sub == pipe.final_policies.sub;
    for (std::size_t i = 0; same && i < ref.metrics.size(); ++i) {
      const StepMetrics &a = ref.metrics[i], &b = pipe.metrics[i];
      same &= same_bits(a.mean_main_reward, b.mean_main_reward) && same_bits(a.mean_sub_reward, b.mean_sub_reward) &&
              same_bits(a.eval_success, b.eval_success) && same_bits(a.grad_norm_main, b.grad_norm_main) &&
              same_bits(a.grad_norm_sub, b.grad_norm_sub);
    }
    o.pass &= same;
    modes += std::string(modes.empty() ? "" : ", ") + to_string(mode) + (same ? " identical" : " DIFFERS");
  }
  const double secs = seconds_since(t0);
  o.pass &= secs < 120.0;
  o.detail = fmt("20 steps, seed 7, two workers vs reference: %s; %.1f s", modes.c_str(), secs);
  return o;
}

// ---------------------------------------------------------------------------
// Criteria 6-8 share one set of full curricula.

struct Runs {
  std::map<std::pair<Mode, int>, CurriculumResult> by;
  double seconds = 0.0;
  const CurriculumConfig cfg{};
};

Runs run_all() {
  Runs r;
  const auto t0 = Clock::now();
  std::map<std::pair<Mode, int>, std::future<CurriculumResult>> jobs;
  for (Mode mode : {Mode::kCoTrain, Mode::kMainOnly, Mode::kSingleAgent, Mode::kNoSync})
    for (int seed : {1, 2, 3})
      jobs[{mode, seed}] = std::async(std::launch::async, [&r, mode, seed] {
        return run_curriculum(r.cfg, mode, static_cast<std::uint64_t>(seed));
      });
  for (auto& [k, f] : jobs) r.by[k] = f.get();
  r.seconds = seconds_since(t0);
  return r;
}

std::vector<double> column(const CurriculumResult& res, Stage stage, double StepMetrics::*field) {
  std::vector<double> out;
  for (const StepMetrics& m : res.metrics)
    if (m.stage == stage) out.push_back(m.*field);
  return out;
}

Outcome criterion6(const Runs& runs) {
  Outcome o;
  std::string per_seed;
  for (int seed : {1, 2, 3}) {
    const auto x = column(runs.by.at({Mode::kCoTrain, seed}), Stage::kStage1, &StepMetrics::mean_main_reward);
    const auto y = ema(x, 0.1);
    const auto hit = std::find_if(y.begin(), y.end(), [](double v) { return v >= 0.9; });
    const bool ok = x.front() < 0.1 && hit != y.end();
    o.pass &= ok;
    per_seed += fmt("%sseed %d start %.3f, EMA >= 0.9 at step %s", per_seed.empty() ? "" : "; ", seed, x.front(),
                    hit == y.end() ? "never" : std::to_string(hit - y.begin()).c_str());
  }
  o.detail = per_seed + " (of 300 stage-1 steps)";
  return o;
}

Outcome criterion7(const Runs& runs) {
  Outcome o;
  std::map<Mode, double> curve, final;
  for (Mode mode : {Mode::kCoTrain, Mode::kMainOnly, Mode::kSingleAgent}) {
    for (int seed : {1, 2, 3}) {
      std::vector<double> ev;
      for (double v : column(runs.by.at({mode, seed}), Stage::kStage2, &StepMetrics::eval_success))
        if (!std::isnan(v)) ev.push_back(v);
      curve[mode] += testing::pop_mean(ev) / 3.0;
      final[mode] += ev.back() / 3.0;
    }
  }
  const double co = curve[Mode::kCoTrain], mo = curve[Mode::kMainOnly], sa = curve[Mode::kSingleAgent];
  const double gap = final[Mode::kCoTrain] - final[Mode::kMainOnly];
  o.pass = co > mo && mo > sa && gap >= 0.05;
  o.detail = fmt("mean stage-2 eval success cotrain %.3f, main-only %.3f, single-agent %.3f; final checkpoint "
                 "cotrain %.3f vs main-only %.3f (gap %.1f pp); %.0f s for all 12 runs",
                 co, mo, sa, final[Mode::kCoTrain], final[Mode::kMainOnly], 100 * gap, runs.seconds);
  return o;
}

Outcome criterion8(const Runs& runs) {
  Outcome o;
  double co = 0.0, ns = 0.0;
  for (int seed : {1, 2, 3}) {
    co += ema(column(runs.by.at({Mode::kCoTrain, seed}), Stage::kStage2, &StepMetrics::mean_main_reward), 0.1).back() / 3;
    ns += ema(column(runs.by.at({Mode::kNoSync, seed}), Stage::kStage2, &StepMetrics::mean_main_reward), 0.1).back() / 3;
  }
  o.pass = co >= ns;
  o.detail = fmt("final EMA(0.1) stage-2 main reward, seed mean: cotrain %.4f, no-sync %.4f", co, ns);
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion9() {
  Outcome o;
  // Five payload tokens plus begin, end and not-found: eight symbols.
  const int vocab = 5;
  const RewardWeights w;
  std::size_t invalid = 0, valid = 0, nonzero = 0;
  std::vector<TokenSeq> frontier{{}};
  std::vector<TokenSeq> all{{}};
  for (int len = 1; len <= 4; ++len) {
    std::vector<TokenSeq> next;
    for (const TokenSeq& s : frontier)
      for (Token t = 0; t < 8; ++t) {
        TokenSeq e = s;
        e.push_back(t);
        next.push_back(e);
      }
    all.insert(all.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  const std::vector<TokenSeq> truths{{0}, {3}, {1, 4}};
  for (const TokenSeq& out : all) {
    if (validate_format(out, vocab)) {
      ++valid;
      continue;
    }
    ++invalid;
    for (const TokenSeq& gt : truths) nonzero += main_reward(out, gt, w, vocab).total != 0.0;
    for (double mc : {0.0, 1.0})
      for (double ex : {0.0, 0.5, 1.0}) nonzero += sub_reward(out, mc, ex, w, vocab).total != 0.0;
  }
  o.pass = nonzero == 0 && all.size() == 4681;
  o.detail = fmt("%zu outputs (8 symbols, length <= 4): %zu format-invalid, %zu nonzero rewards among them; %zu valid",
                 all.size(), invalid, nonzero, valid);
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion10(const std::string& golden_path) {
  Outcome o;
  std::ifstream in(golden_path);
  std::stringstream ss;
  ss << in.rdbuf();
  const bool matches = ss.str() == default_config_text();
  const RunConfig c;
  const CurriculumConfig& cc = c.curriculum;
  const bool values = cc.K == 8 && cc.d == 8 && cc.weights.alpha1 == 0.1 && cc.weights.alpha2 == 0.9 &&
                      cc.weights.beta1 == 0.1 && cc.weights.beta2 == 0.4 && cc.weights.beta3 == 0.5 &&
                      c.eval_every == 25;
  o.pass = matches && values;
  o.detail = fmt("default config %s the golden snapshot; K=8 d=8 alpha=(0.1,0.9) beta=(0.1,0.4,0.5) eval 25: %s",
                 matches ? "matches" : "DIFFERS from", values ? "yes" : "no");
  return o;
}

}  // namespace
}  // namespace mgrpo

int main(int argc, char** argv) {
  using namespace mgrpo;
  const std::string golden = argc > 1 ? argv[1] : MGRPO_SOURCE_DIR "/tests/golden/default_config.json";
  int failed = 0;
  auto report = [&](int n, const Outcome& o) {
    std::printf("criterion %d: %s: %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  };
  auto guarded = [&](int n, auto&& fn) {
    try {
      report(n, fn());
    } catch (const std::exception& e) {
      report(n, Outcome{false, std::string("exception: ") + e.what()});
    }
  };
  guarded(1, criterion1);
  guarded(2, criterion2);
  guarded(3, criterion3);
  guarded(4, criterion4);
  guarded(5, criterion5);
  try {
    const Runs runs = run_all();
    guarded(6, [&] { return criterion6(runs); });
    guarded(7, [&] { return criterion7(runs); });
    guarded(8, [&] { return criterion8(runs); });
  } catch (const std::exception& e) {
    for (int n : {6, 7, 8}) report(n, Outcome{false, std::string("exception: ") + e.what()});
  }
  guarded(9, criterion9);
  guarded(10, [&] { return criterion10(golden); });
  std::printf("%d of 10 criteria passed\n", 10 - failed);
  return failed == 0 ? 0 : 1;
}
