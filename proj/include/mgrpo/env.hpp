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

// Synthetic vertical-delegation environment.
//
// A query asks for the concatenation of hop_count facts. Each fact lives under
// a lookup key. The main agent delegates one lookup per hop to the sub-agent,
// which uses search/visit tools and reports back a marker-delimited answer.
// Search is noisy in stage 2, and results from a noisy index are flagged
// unreliable in the observation; visit reads the source page directly and only
// works for a key that was searched earlier in the same trajectory. A tool
// result costs tool_cost budget units in the agent that called the tool.
//
// Observations are sparse 0/1 feature vectors whose layouts are described by
// MainLayout, SubLayout and SingleLayout below.

#ifndef MGRPO_ENV_HPP_
#define MGRPO_ENV_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mgrpo/core.hpp"
#include "mgrpo/policy.hpp"
#include "mgrpo/random.hpp"

namespace mgrpo {

struct EnvConfig {
  int vocab_size = 32;
  int max_hops = 6;
  int num_keys = 8;
  int main_budget = 16;
  int sub_budget = 8;
  int tool_cost = 2;  // budget units a search/visit result occupies
  double stage2_noise_min = 0.05;
  double stage2_noise_max = 0.15;

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (vocab_size < 2) out.push_back("vocab_size: must be >= 2");
    if (max_hops < 2) out.push_back("max_hops: must be >= 2");
    if (num_keys < max_hops) out.push_back("num_keys: must be >= max_hops");
    if (main_budget < 1) out.push_back("main_budget: must be >= 1");
    if (sub_budget < 1) out.push_back("sub_budget: must be >= 1");
    if (tool_cost < 1) out.push_back("tool_cost: must be >= 1");
    if (!(stage2_noise_min >= 0.0 && stage2_noise_min <= stage2_noise_max &&
          stage2_noise_max <= 1.0))
      out.push_back("stage2_noise_min/max: need 0 <= min <= max <= 1");
    return out;
  }
};

// Output token space: payload tokens [0, vocab), then the two answer markers.
// not_found() is a tool result only and never a legal output token.
struct TokenSpace {
  int vocab = 32;

  Token begin() const { return vocab; }
  Token end() const { return vocab + 1; }
  Token not_found() const { return vocab + 2; }
  bool is_payload(Token t) const { return t >= 0 && t < vocab; }

  // Exactly begin . payload(>=1) . end with nothing else.
  bool well_formed(const TokenSeq& out) const {
    if (out.size() < 3 || out.front() != begin() || out.back() != end()) return false;
    return std::all_of(out.begin() + 1, out.end() - 1, [&](Token t) { return is_payload(t); });
  }
};

enum class ActionKind : std::uint8_t {
  kDelegate,
  kReason,
  kSearch,
  kVisit,
  kEmit,
  kBegin,
  kEnd,
  kStop,
};

struct Action {
  ActionKind kind = ActionKind::kStop;
  int arg = 0;

  bool operator==(const Action&) const = default;
};

// Dense indexing of a role's actions. Parameterized kinds occupy a contiguous
// range; the others take one slot each.
class ActionVocab {
 public:
  static ActionVocab main(const EnvConfig& c) {
    return ActionVocab({{ActionKind::kDelegate, c.max_hops},
                        {ActionKind::kReason, 1},
                        {ActionKind::kEmit, c.vocab_size},
                        {ActionKind::kBegin, 1},
                        {ActionKind::kEnd, 1},
                        {ActionKind::kStop, 1}});
  }
  static ActionVocab sub(const EnvConfig& c) {
    return ActionVocab({{ActionKind::kSearch, c.num_keys},
                        {ActionKind::kVisit, c.num_keys},
                        {ActionKind::kEmit, c.vocab_size},
                        {ActionKind::kBegin, 1},
                        {ActionKind::kEnd, 1},
                        {ActionKind::kStop, 1}});
  }
  // Planner with direct access to the sub-agent's tools and no delegation.
  static ActionVocab single(const EnvConfig& c) {
    return ActionVocab({{ActionKind::kSearch, c.num_keys},
                        {ActionKind::kVisit, c.num_keys},
                        {ActionKind::kReason, 1},
                        {ActionKind::kEmit, c.vocab_size},
                        {ActionKind::kBegin, 1},
                        {ActionKind::kEnd, 1},
                        {ActionKind::kStop, 1}});
  }

  int size() const { return size_; }

  bool contains(ActionKind k) const {
    return std::any_of(segs_.begin(), segs_.end(), [&](const Segment& s) { return s.kind == k; });
  }

  Action decode(int index) const {
    require(index >= 0 && index < size_, "action index outside vocabulary");
    for (const Segment& s : segs_) {
      if (index < s.offset + s.count) return {s.kind, index - s.offset};
    }
    return {};
  }

  int encode(Action a) const {
    for (const Segment& s : segs_) {
      if (s.kind == a.kind) {
        require(a.arg >= 0 && a.arg < s.count, "action argument out of range");
        return s.offset + a.arg;
      }
    }
    throw ContractViolation("action kind not in this vocabulary");
  }

 private:
  struct Segment {
    ActionKind kind;
    int count;
    int offset = 0;
  };

  explicit ActionVocab(std::vector<Segment> segs) : segs_(std::move(segs)) {
    for (Segment& s : segs_) {
      s.offset = size_;
      size_ += s.count;
    }
  }

  std::vector<Segment> segs_;
  int size_ = 0;
};

// Feature layouts. Each field is the offset of a block in the observation.
struct MainLayout {
  int hops, next_slot, all_resolved, need_token, token, complete, reasoned, dim;

  explicit MainLayout(const EnvConfig& c) {
    int o = 0;
    hops = o, o += c.max_hops;
    next_slot = o, o += c.max_hops;
    all_resolved = o++;
    need_token = o++;
    token = o, o += c.vocab_size + 1;
    complete = o++;
    reasoned = o++;
    dim = o;
  }
};

struct SubLayout {
  int key, no_result, has_result, answer_empty, answer_started, visited, unreliable_key, token, dim;

  explicit SubLayout(const EnvConfig& c) {
    int o = 0;
    key = o, o += c.num_keys;
    no_result = o++;
    has_result = o++;
    answer_empty = o++;
    answer_started = o++;
    visited = o++;
    unreliable_key = o, o += c.num_keys;
    token = o, o += c.vocab_size + 1;
    dim = o;
  }
};

struct SingleLayout {
  int hops, next_key, unreliable_key, all_resolved, need_token, token, complete, reasoned, dim;

  explicit SingleLayout(const EnvConfig& c) {
    int o = 0;
    hops = o, o += c.max_hops;
    next_key = o, o += c.num_keys;
    unreliable_key = o, o += c.num_keys;
    all_resolved = o++;
    need_token = o++;
    token = o, o += c.vocab_size + 1;
    complete = o++;
    reasoned = o++;
    dim = o;
  }
};

struct TaskSpec {
  Stage stage = Stage::kStage1;
  int hop_count = 1;
  std::vector<int> hop_keys;         // key of hop j
  std::map<int, Token> fact_table;   // key -> fact token
  double noise_rate = 0.0;

  std::optional<Token> fact(int key) const {
    const auto it = fact_table.find(key);
    if (it == fact_table.end()) return std::nullopt;
    return it->second;
  }
  Token hop_fact(int hop) const { return fact_table.at(hop_keys.at(hop)); }

  bool operator==(const TaskSpec&) const = default;
};

struct Task {
  Query query;
  TaskSpec spec;
};

inline std::string query_id(Stage stage, std::uint64_t seed) {
  return "q" + std::to_string(static_cast<int>(stage)) + "-" + std::to_string(seed);
}

// Deterministic in (stage, seed, config).
inline Task generate_query(Stage stage, std::uint64_t seed, const EnvConfig& cfg = {}) {
  Rng rng(derive_seed(seed, {kTagQuery, static_cast<std::uint64_t>(stage)}));
  Task task;
  TaskSpec& spec = task.spec;
  spec.stage = stage;
  if (stage == Stage::kStage1) {
    spec.hop_count = 1;
    spec.noise_rate = 0.0;
  } else {
    const int hi = std::min(6, cfg.max_hops);
    spec.hop_count = 2 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(hi - 1)));
    spec.noise_rate = cfg.stage2_noise_min +
                      (cfg.stage2_noise_max - cfg.stage2_noise_min) * rng.uniform01();
  }
  std::vector<int> keys(static_cast<std::size_t>(cfg.num_keys));
  for (int k = 0; k < cfg.num_keys; ++k) keys[k] = k;
  for (int j = 0; j < spec.hop_count; ++j) {
    const auto pick = j + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.num_keys - j)));
    std::swap(keys[j], keys[pick]);
    const int key = keys[j];
    const auto tok = static_cast<Token>(rng.uniform_int(static_cast<std::uint64_t>(cfg.vocab_size)));
    spec.hop_keys.push_back(key);
    spec.fact_table[key] = tok;
    task.query.ground_truth.push_back(tok);
  }
  task.query.id = query_id(stage, seed);
  task.query.stage = stage;
  task.query.features.assign(static_cast<std::size_t>(cfg.max_hops), 0.0);
  task.query.features[spec.hop_count - 1] = 1.0;
  return task;
}

struct SubInvocation {
  int slot = 0;
  int key = 0;
};

namespace detail {

inline Token token_feature(const TokenSpace& ts, Token t) {
  return ts.is_payload(t) ? t : ts.vocab;  // anything else reads as NOT_FOUND
}

// Shared answer-emission bookkeeping for every agent.
struct Answer {
  TokenSeq output;
  bool answering = false;
  bool terminated = false;

  // Payload tokens written since the begin marker.
  int emitted() const { return answering ? static_cast<int>(output.size()) - 1 : 0; }

  // Applies emit/begin/end/stop. Returns false for non-answer actions.
  bool apply(const Action& a, const TokenSpace& ts) {
    switch (a.kind) {
      case ActionKind::kEmit:
        output.push_back(a.arg);
        return true;
      case ActionKind::kBegin:
        if (output.empty()) answering = true;
        output.push_back(ts.begin());
        return true;
      case ActionKind::kEnd:
        output.push_back(ts.end());
        terminated = true;
        return true;
      case ActionKind::kStop:
        terminated = true;
        return true;
      default:
        return false;
    }
  }
};

inline Token noisy_lookup(Token truth, double noise_rate, int vocab, Rng& rng) {
  if (noise_rate > 0.0 && rng.bernoulli(noise_rate)) {
    auto t = static_cast<Token>(rng.uniform_int(static_cast<std::uint64_t>(vocab - 1)));
    return t >= truth ? t + 1 : t;
  }
  return truth;
}

}  // namespace detail

// Main agent side. Delegation emits a SubInvocation that the rollout driver
// must answer with deliver() before the next step.
class MainEnv {
 public:
  MainEnv(const EnvConfig& cfg, const TaskSpec& spec)
      : cfg_(cfg), spec_(spec), layout_(cfg), tokens_{cfg.vocab_size},
        vocab_(ActionVocab::main(cfg)), budget_(cfg.main_budget),
        results_(static_cast<std::size_t>(spec.hop_count), kUnresolved) {}

  const ActionVocab& vocab() const { return vocab_; }
  int budget_remaining() const { return budget_; }
  bool terminated() const { return answer_.terminated; }
  const TokenSeq& output() const { return answer_.output; }
  const std::vector<Token>& results() const { return results_; }

  std::vector<double> observe() const {
    std::vector<double> x(static_cast<std::size_t>(layout_.dim), 0.0);
    x[layout_.hops + spec_.hop_count - 1] = 1.0;
    if (!answer_.answering) {
      const int slot = next_unresolved();
      if (slot >= 0)
        x[layout_.next_slot + slot] = 1.0;
      else
        x[layout_.all_resolved] = 1.0;
    } else if (answer_.emitted() < spec_.hop_count) {
      x[layout_.need_token] = 1.0;
      x[layout_.token + detail::token_feature(tokens_, results_[answer_.emitted()])] = 1.0;
    } else {
      x[layout_.complete] = 1.0;
    }
    if (reasoned_) x[layout_.reasoned] = 1.0;
    return x;
  }

  std::optional<SubInvocation> step(int action_index) {
    if (answer_.terminated) throw ContractViolation("main agent acted after termination");
    if (budget_ <= 0) throw ContractViolation("main agent acted with no budget remaining");
    require(!pending_, "previous delegation has not been answered");
    const Action a = vocab_.decode(action_index);
    std::optional<SubInvocation> event;
    if (a.kind == ActionKind::kDelegate) {
      // Delegating a slot the query does not have is a wasted step.
      if (a.arg < spec_.hop_count) {
        event = SubInvocation{a.arg, spec_.hop_keys[a.arg]};
        pending_ = true;
      }
    } else if (a.kind == ActionKind::kReason) {
      reasoned_ = true;
    } else {
      answer_.apply(a, tokens_);
    }
    if (--budget_ == 0) answer_.terminated = true;
    return event;
  }

  // Parses the sub-agent's report; malformed reports read as NOT_FOUND.
  void deliver(const SubInvocation& inv, const TokenSeq& sub_output) {
    require(pending_, "no delegation awaiting a result");
    pending_ = false;
    results_[inv.slot] = tokens_.well_formed(sub_output) ? sub_output[1] : tokens_.not_found();
  }

 private:
  static constexpr Token kUnresolved = -1;

  int next_unresolved() const {
    for (int j = 0; j < spec_.hop_count; ++j)
      if (results_[j] == kUnresolved) return j;
    return -1;
  }

  EnvConfig cfg_;
  TaskSpec spec_;
  MainLayout layout_;
  TokenSpace tokens_;
  ActionVocab vocab_;
  int budget_;
  std::vector<Token> results_;
  detail::Answer answer_;
  bool reasoned_ = false;
  bool pending_ = false;
};

// Sub-agent side for one delegated lookup.
class SubEnv {
 public:
  SubEnv(const EnvConfig& cfg, const TaskSpec& spec, int key)
      : cfg_(cfg), spec_(spec), layout_(cfg), tokens_{cfg.vocab_size},
        vocab_(ActionVocab::sub(cfg)), key_(key), budget_(cfg.sub_budget) {}

  const ActionVocab& vocab() const { return vocab_; }
  int budget_remaining() const { return budget_; }
  bool terminated() const { return answer_.terminated; }
  const TokenSeq& output() const { return answer_.output; }
  bool used_tool() const { return used_tool_; }

  std::vector<double> observe() const {
    std::vector<double> x(static_cast<std::size_t>(layout_.dim), 0.0);
    if (!answer_.answering) {
      if (key_ >= 0 && key_ < cfg_.num_keys) x[layout_.key + key_] = 1.0;
      x[last_result_ ? layout_.has_result : layout_.no_result] = 1.0;
      if (last_result_ && last_from_visit_) x[layout_.visited] = 1.0;
      if (last_result_ && !last_from_visit_ && spec_.noise_rate > 0.0 && key_ >= 0 &&
          key_ < cfg_.num_keys)
        x[layout_.unreliable_key + key_] = 1.0;
    } else if (answer_.emitted() == 0) {
      x[layout_.answer_empty] = 1.0;
      x[layout_.token + detail::token_feature(tokens_, last_result_.value_or(tokens_.not_found()))] = 1.0;
    } else {
      x[layout_.answer_started] = 1.0;
    }
    return x;
  }

  // Returns the tool result for search/visit actions.
  std::optional<Token> step(int action_index, Rng& rng) {
    if (answer_.terminated) throw ContractViolation("sub agent acted after termination");
    if (budget_ <= 0) throw ContractViolation("sub agent acted with no budget remaining");
    const Action a = vocab_.decode(action_index);
    std::optional<Token> result;
    if (a.kind == ActionKind::kSearch) {
      result = search(a.arg, rng);
      last_from_visit_ = false;
    } else if (a.kind == ActionKind::kVisit) {
      result = visit(a.arg);
      last_from_visit_ = true;
    } else {
      answer_.apply(a, tokens_);
    }
    if (result) {
      used_tool_ = true;
      last_result_ = result;
    }
    budget_ = std::max(0, budget_ - (result ? cfg_.tool_cost : 1));
    if (budget_ == 0) answer_.terminated = true;
    return result;
  }

 private:
  Token search(int key, Rng& rng) {
    searched_.insert(key);
    const auto truth = spec_.fact(key);
    if (!truth) return tokens_.not_found();
    return detail::noisy_lookup(*truth, spec_.noise_rate, cfg_.vocab_size, rng);
  }

  Token visit(int key) const {
    const auto truth = spec_.fact(key);
    if (!truth || !searched_.contains(key)) return tokens_.not_found();
    return *truth;
  }

  EnvConfig cfg_;
  TaskSpec spec_;
  SubLayout layout_;
  TokenSpace tokens_;
  ActionVocab vocab_;
  int key_;
  int budget_;
  std::set<int> searched_;
  std::optional<Token> last_result_;
  bool last_from_visit_ = false;
  bool used_tool_ = false;
  detail::Answer answer_;
};

// Single-agent baseline: one policy plans, calls the tools itself and answers,
// all within the main agent's step budget.
class SingleEnv {
 public:
  SingleEnv(const EnvConfig& cfg, const TaskSpec& spec)
      : cfg_(cfg), spec_(spec), layout_(cfg), tokens_{cfg.vocab_size},
        vocab_(ActionVocab::single(cfg)), budget_(cfg.main_budget),
        results_(static_cast<std::size_t>(spec.hop_count), kUnresolved) {}

  const ActionVocab& vocab() const { return vocab_; }
  int budget_remaining() const { return budget_; }
  bool terminated() const { return answer_.terminated; }
  const TokenSeq& output() const { return answer_.output; }

  std::vector<double> observe() const {
    std::vector<double> x(static_cast<std::size_t>(layout_.dim), 0.0);
    x[layout_.hops + spec_.hop_count - 1] = 1.0;
    if (!answer_.answering) {
      const int hop = next_unresolved();
      if (hop >= 0)
        x[layout_.next_key + spec_.hop_keys[hop]] = 1.0;
      else
        x[layout_.all_resolved] = 1.0;
      if (unverified_hop_ >= 0 && spec_.noise_rate > 0.0)
        x[layout_.unreliable_key + spec_.hop_keys[unverified_hop_]] = 1.0;
    } else if (answer_.emitted() < spec_.hop_count) {
      x[layout_.need_token] = 1.0;
      x[layout_.token + detail::token_feature(tokens_, results_[answer_.emitted()])] = 1.0;
    } else {
      x[layout_.complete] = 1.0;
    }
    if (reasoned_) x[layout_.reasoned] = 1.0;
    return x;
  }

  std::optional<Token> step(int action_index, Rng& rng) {
    if (answer_.terminated) throw ContractViolation("agent acted after termination");
    if (budget_ <= 0) throw ContractViolation("agent acted with no budget remaining");
    const Action a = vocab_.decode(action_index);
    std::optional<Token> result;
    if (a.kind == ActionKind::kSearch) {
      searched_.insert(a.arg);
      const int hop = hop_of(a.arg);
      if (hop >= 0) {
        results_[hop] = detail::noisy_lookup(spec_.hop_fact(hop), spec_.noise_rate,
                                             cfg_.vocab_size, rng);
        unverified_hop_ = hop;
        result = results_[hop];
      } else {
        unverified_hop_ = -1;
        result = tokens_.not_found();
      }
    } else if (a.kind == ActionKind::kVisit) {
      const int hop = hop_of(a.arg);
      if (hop >= 0 && searched_.contains(a.arg)) {
        results_[hop] = spec_.hop_fact(hop);
        result = results_[hop];
      } else {
        result = tokens_.not_found();
      }
      unverified_hop_ = -1;
    } else if (a.kind == ActionKind::kReason) {
      reasoned_ = true;
    } else {
      answer_.apply(a, tokens_);
    }
    budget_ = std::max(0, budget_ - (result ? cfg_.tool_cost : 1));
    if (budget_ == 0) answer_.terminated = true;
    return result;
  }

 private:
  static constexpr Token kUnresolved = -1;

  int next_unresolved() const {
    for (int j = 0; j < spec_.hop_count; ++j)
      if (results_[j] == kUnresolved) return j;
    return -1;
  }
  int hop_of(int key) const {
    for (int j = 0; j < spec_.hop_count; ++j)
      if (spec_.hop_keys[j] == key) return j;
    return -1;
  }

  EnvConfig cfg_;
  TaskSpec spec_;
  SingleLayout layout_;
  TokenSpace tokens_;
  ActionVocab vocab_;
  int budget_;
  std::vector<Token> results_;
  std::set<int> searched_;
  int unverified_hop_ = -1;
  detail::Answer answer_;
  bool reasoned_ = false;
};

// ---------------------------------------------------------------------------
// Actors: anything with
//   std::pair<int, double> act(const std::vector<double>& obs, Rng&)
//   void expect_shape(int feature_dim, int vocab_size) const

enum class Decoding { kSample, kGreedy };

class PolicyActor {
 public:
  PolicyActor(const SoftmaxLinearPolicy& policy, Decoding decoding = Decoding::kSample)
      : policy_(&policy), decoding_(decoding) {}

  std::pair<int, double> act(const std::vector<double>& obs, Rng& rng) const {
    return decoding_ == Decoding::kSample ? sample_action(*policy_, obs, rng)
                                          : greedy_action(*policy_, obs);
  }

  void expect_shape(int feature_dim, int vocab_size) const {
    if (policy_->feature_dim != feature_dim || policy_->vocab_size != vocab_size)
      throw ContractViolation("policy shape (" + std::to_string(policy_->feature_dim) + "x" +
                              std::to_string(policy_->vocab_size) +
                              ") does not match environment (" + std::to_string(feature_dim) +
                              "x" + std::to_string(vocab_size) + ")");
  }

 private:
  const SoftmaxLinearPolicy* policy_;
  Decoding decoding_;
};

namespace detail {

inline int argmax_block(const std::vector<double>& x, int offset, int n) {
  for (int i = 0; i < n; ++i)
    if (x[offset + i] != 0.0) return i;
  return -1;
}

}  // namespace detail

// Hand-written optimal policies; they read only the observation, which makes
// them the solvability witness for generated tasks.
class OracleMainActor {
 public:
  explicit OracleMainActor(const EnvConfig& cfg) : cfg_(cfg), layout_(cfg), vocab_(ActionVocab::main(cfg)) {}

  std::pair<int, double> act(const std::vector<double>& x, Rng&) const {
    if (int slot = detail::argmax_block(x, layout_.next_slot, cfg_.max_hops); slot >= 0)
      return {vocab_.encode({ActionKind::kDelegate, slot}), 0.0};
    if (x[layout_.all_resolved] != 0.0) return {vocab_.encode({ActionKind::kBegin}), 0.0};
    if (x[layout_.need_token] != 0.0) {
      const int tok = detail::argmax_block(x, layout_.token, cfg_.vocab_size);
      return {vocab_.encode({ActionKind::kEmit, std::max(tok, 0)}), 0.0};
    }
    return {vocab_.encode({ActionKind::kEnd}), 0.0};
  }
  void expect_shape(int, int) const {}

 private:
  EnvConfig cfg_;
  MainLayout layout_;
  ActionVocab vocab_;
};

class OracleSubActor {
 public:
  // With verify set the actor confirms every search with a visit.
  explicit OracleSubActor(const EnvConfig& cfg, bool verify = true)
      : cfg_(cfg), layout_(cfg), vocab_(ActionVocab::sub(cfg)), verify_(verify) {}

  std::pair<int, double> act(const std::vector<double>& x, Rng&) const {
    const int key = std::max(detail::argmax_block(x, layout_.key, cfg_.num_keys), 0);
    if (x[layout_.no_result] != 0.0) return {vocab_.encode({ActionKind::kSearch, key}), 0.0};
    if (x[layout_.has_result] != 0.0) {
      if (verify_ && x[layout_.visited] == 0.0) return {vocab_.encode({ActionKind::kVisit, key}), 0.0};
      return {vocab_.encode({ActionKind::kBegin}), 0.0};
    }
    if (x[layout_.answer_empty] != 0.0) {
      const int tok = detail::argmax_block(x, layout_.token, cfg_.vocab_size);
      return {vocab_.encode({ActionKind::kEmit, std::max(tok, 0)}), 0.0};
    }
    return {vocab_.encode({ActionKind::kEnd}), 0.0};
  }
  void expect_shape(int, int) const {}

 private:
  EnvConfig cfg_;
  SubLayout layout_;
  ActionVocab vocab_;
  bool verify_;
};

class OracleSingleActor {
 public:
  explicit OracleSingleActor(const EnvConfig& cfg)
      : cfg_(cfg), layout_(cfg), vocab_(ActionVocab::single(cfg)) {}

  std::pair<int, double> act(const std::vector<double>& x, Rng&) const {
    const int hops = detail::argmax_block(x, layout_.hops, cfg_.max_hops) + 1;
    // search + visit + emit per hop, plus the two markers
    const bool verify = (2 * cfg_.tool_cost + 1) * hops + 2 <= cfg_.main_budget;
    if (int k = detail::argmax_block(x, layout_.unreliable_key, cfg_.num_keys); verify && k >= 0)
      return {vocab_.encode({ActionKind::kVisit, k}), 0.0};
    if (int k = detail::argmax_block(x, layout_.next_key, cfg_.num_keys); k >= 0)
      return {vocab_.encode({ActionKind::kSearch, k}), 0.0};
    if (x[layout_.all_resolved] != 0.0) return {vocab_.encode({ActionKind::kBegin}), 0.0};
    if (x[layout_.need_token] != 0.0) {
      const int tok = detail::argmax_block(x, layout_.token, cfg_.vocab_size);
      return {vocab_.encode({ActionKind::kEmit, std::max(tok, 0)}), 0.0};
    }
    return {vocab_.encode({ActionKind::kEnd}), 0.0};
  }
  void expect_shape(int, int) const {}

 private:
  EnvConfig cfg_;
  SingleLayout layout_;
  ActionVocab vocab_;
};

// ---------------------------------------------------------------------------
// Rollout drivers. Sub-trajectories run to completion before the main agent
// resumes; every random draw of one rollout comes from the single rng passed in.

template <class SubActor>
Trajectory run_sub_trajectory(const EnvConfig& cfg, const TaskSpec& spec, int key,
                              const SubActor& actor, Rng& rng) {
  SubEnv env(cfg, spec, key);
  Trajectory t;
  t.role = Role::kSub;
  while (!env.terminated()) {
    std::vector<double> obs = env.observe();
    const auto [a, lp] = actor.act(obs, rng);
    t.steps.push_back({std::move(obs), a, lp, 0.0});
    env.step(a, rng);
  }
  t.output = env.output();
  t.terminated = true;
  return t;
}

template <class MainActor, class SubActor>
Rollout run_rollout(const Query& query, const TaskSpec& spec, const MainActor& main_actor,
                    const SubActor& sub_actor, Rng& rng, const EnvConfig& cfg = {}) {
  main_actor.expect_shape(MainLayout(cfg).dim, ActionVocab::main(cfg).size());
  sub_actor.expect_shape(SubLayout(cfg).dim, ActionVocab::sub(cfg).size());
  MainEnv env(cfg, spec);
  Rollout r;
  r.query_id = query.id;
  r.main.role = Role::kMain;
  while (!env.terminated()) {
    std::vector<double> obs = env.observe();
    const auto [a, lp] = main_actor.act(obs, rng);
    r.main.steps.push_back({std::move(obs), a, lp, 0.0});
    if (const auto inv = env.step(a)) {
      Trajectory sub = run_sub_trajectory(cfg, spec, inv->key, sub_actor, rng);
      env.deliver(*inv, sub.output);
      r.subs.push_back(std::move(sub));
      r.subtask_keys.push_back(inv->key);
    }
  }
  r.main.output = env.output();
  r.main.terminated = true;
  return r;
}

// Single-agent rollouts carry their trajectory in Rollout::main with no subs.
template <class Actor>
Rollout run_single_rollout(const Query& query, const TaskSpec& spec, const Actor& actor, Rng& rng,
                           const EnvConfig& cfg = {}) {
  actor.expect_shape(SingleLayout(cfg).dim, ActionVocab::single(cfg).size());
  SingleEnv env(cfg, spec);
  Rollout r;
  r.query_id = query.id;
  r.main.role = Role::kMain;
  while (!env.terminated()) {
    std::vector<double> obs = env.observe();
    const auto [a, lp] = actor.act(obs, rng);
    r.main.steps.push_back({std::move(obs), a, lp, 0.0});
    env.step(a, rng);
  }
  r.main.output = env.output();
  r.main.terminated = true;
  return r;
}

inline VocabSizes vocab_sizes(const EnvConfig& cfg) {
  return {ActionVocab::main(cfg).size(), ActionVocab::sub(cfg).size()};
}

}  // namespace mgrpo

#endif  // MGRPO_ENV_HPP_
