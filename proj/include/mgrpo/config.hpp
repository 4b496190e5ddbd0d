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

// Run configuration (a flat JSON object) and task corpora (JSON lines).

#ifndef MGRPO_CONFIG_HPP_
#define MGRPO_CONFIG_HPP_

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <span>
#include <stdexcept>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mgrpo/trainer.hpp"

namespace mgrpo {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s;
    for (const auto& x : p) s += (s.empty() ? "" : "; ") + x;
    return s;
  }
  std::vector<std::string> problems_;
};

enum class StoreBackend { kMemory, kDirectory };

inline const char* to_string(StoreBackend b) { return b == StoreBackend::kMemory ? "memory" : "directory"; }

struct RunConfig {
  CurriculumConfig curriculum;
  std::uint64_t seed = 1;
  Mode mode = Mode::kCoTrain;
  StoreBackend store = StoreBackend::kMemory;
  std::string store_dir = "store";  // relative paths resolve against output_dir
  std::string output_dir = "run";
  std::string run_id = "run";
  int eval_every = 25;
  int eval_episodes = 100;
  int store_timeout_ms = 60000;

  std::vector<std::string> violations() const {
    std::vector<std::string> out = curriculum.violations();
    if (eval_every < 1) out.push_back("eval_every: must be >= 1");
    if (eval_episodes < 0) out.push_back("eval_episodes: must be >= 0");
    if (store_timeout_ms < 1) out.push_back("store_timeout_ms: must be >= 1");
    if (run_id.empty()) out.push_back("run_id: must not be empty");
    if (output_dir.empty()) out.push_back("output_dir: must not be empty");
    if (store == StoreBackend::kDirectory && store_dir.empty())
      out.push_back("store_dir: required for the directory store");
    return out;
  }
};

namespace detail {

struct ModeField {
  Mode* target;
};
struct BackendField {
  StoreBackend* target;
};
using FieldTarget = std::variant<int*, double*, std::uint64_t*, std::string*, ModeField, BackendField>;

struct Field {
  const char* name;
  FieldTarget target;
};

// Order here is the order of print-default-config.
inline std::vector<Field> run_config_fields(RunConfig& c) {
  CurriculumConfig& k = c.curriculum;
  return {
      {"seed", &c.seed},
      {"mode", ModeField{&c.mode}},
      {"stage1_steps", &k.stage1_steps},
      {"stage2_steps", &k.stage2_steps},
      {"K", &k.K},
      {"d", &k.d},
      {"batch_queries", &k.batch_queries},
      {"alpha1", &k.weights.alpha1},
      {"alpha2", &k.weights.alpha2},
      {"beta1", &k.weights.beta1},
      {"beta2", &k.weights.beta2},
      {"beta3", &k.weights.beta3},
      {"epsilon_main", &k.epsilon_main},
      {"epsilon_sub", &k.epsilon_sub},
      {"lr_main", &k.lr_main},
      {"lr_sub", &k.lr_sub},
      {"prior_strength", &k.prior_strength},
      {"vocab_size", &k.env.vocab_size},
      {"max_hops", &k.env.max_hops},
      {"num_keys", &k.env.num_keys},
      {"main_budget", &k.env.main_budget},
      {"sub_budget", &k.env.sub_budget},
      {"tool_cost", &k.env.tool_cost},
      {"stage2_noise_min", &k.env.stage2_noise_min},
      {"stage2_noise_max", &k.env.stage2_noise_max},
      {"eval_every", &c.eval_every},
      {"eval_episodes", &c.eval_episodes},
      {"store", BackendField{&c.store}},
      {"store_dir", &c.store_dir},
      {"output_dir", &c.output_dir},
      {"run_id", &c.run_id},
      {"store_timeout_ms", &c.store_timeout_ms},
  };
}

// Returns an error message, or empty on success.
inline std::string assign_field(const Field& f, const nlohmann::json& v) {
  const std::string name = f.name;
  return std::visit(
      [&](auto target) -> std::string {
        using T = decltype(target);
        if constexpr (std::is_same_v<T, int*>) {
          if (!v.is_number_integer()) return name + ": expected an integer";
          const auto x = v.get<std::int64_t>();
          if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
            return name + ": out of range";
          *target = static_cast<int>(x);
        } else if constexpr (std::is_same_v<T, double*>) {
          if (!v.is_number()) return name + ": expected a number";
          *target = v.get<double>();
        } else if constexpr (std::is_same_v<T, std::uint64_t*>) {
          if (!v.is_number_unsigned()) return name + ": expected a non-negative integer";
          *target = v.get<std::uint64_t>();
        } else if constexpr (std::is_same_v<T, std::string*>) {
          if (!v.is_string()) return name + ": expected a string";
          *target = v.get<std::string>();
        } else if constexpr (std::is_same_v<T, ModeField>) {
          if (!v.is_string() || !parse_mode(v.get<std::string>(), *target.target))
            return name + ": expected one of cotrain, main-only, single-agent, no-sync";
        } else {
          if (!v.is_string()) return name + ": expected \"memory\" or \"directory\"";
          const auto s = v.get<std::string>();
          if (s == "memory") {
            *target.target = StoreBackend::kMemory;
          } else if (s == "directory") {
            *target.target = StoreBackend::kDirectory;
          } else {
            return name + ": expected \"memory\" or \"directory\"";
          }
        }
        return {};
      },
      f.target);
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const RunConfig& cfg) {
  RunConfig c = cfg;
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& f : detail::run_config_fields(c)) {
    std::visit(
        [&](auto target) {
          using T = decltype(target);
          if constexpr (std::is_same_v<T, detail::ModeField>) {
            j[f.name] = to_string(*target.target);
          } else if constexpr (std::is_same_v<T, detail::BackendField>) {
            j[f.name] = to_string(*target.target);
          } else {
            j[f.name] = *target;
          }
        },
        f.target);
  }
  return j;
}

inline std::string config_text(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

inline std::string default_config_text() { return config_text(RunConfig{}); }

// Fields absent from the object keep their defaults. Throws ConfigError with
// one message per offending field.
inline RunConfig parse_run_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
  }
  if (!j.is_object()) throw ConfigError({"config must be a JSON object"});
  RunConfig cfg;
  const auto fields = detail::run_config_fields(cfg);
  std::vector<std::string> problems;
  for (const auto& [key, value] : j.items()) {
    const auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return key == f.name; });
    if (it == fields.end()) {
      problems.push_back(key + ": unknown field");
      continue;
    }
    if (auto err = detail::assign_field(*it, value); !err.empty()) problems.push_back(std::move(err));
  }
  if (problems.empty()) problems = cfg.violations();
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file " + path});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Identifies the run: hash of the canonical config text (which includes the
// seed) plus the seed itself.
inline std::string reproducibility_stamp(const RunConfig& cfg) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(config_text(cfg))));
  std::string s = "config_fnv1a64\t" + std::string(hash) + "\nseed\t" + std::to_string(cfg.seed) + "\nmode\t" +
                  to_string(cfg.mode) + "\n";
  if (cfg.mode == Mode::kNoSync)
    s += "note\tno-sync: alignment skipped in stage 2; sub rewards normalized within each rollout\n";
  return s;
}

// ---------------------------------------------------------------------------
// Task corpus: one JSON object per line.

inline nlohmann::ordered_json task_to_json(const Task& t, const EnvConfig& env) {
  nlohmann::ordered_json j;
  j["id"] = t.query.id;
  j["stage"] = static_cast<int>(t.spec.stage);
  j["vocab_size"] = env.vocab_size;
  j["hop_keys"] = t.spec.hop_keys;
  j["ground_truth"] = t.query.ground_truth;
  j["noise_rate"] = t.spec.noise_rate;
  return j;
}

inline Task task_from_json(const nlohmann::json& j, const EnvConfig& env) {
  Task t;
  const int stage = j.at("stage").get<int>();
  require(stage == 1 || stage == 2, "corpus: stage must be 1 or 2");
  if (j.at("vocab_size").get<int>() != env.vocab_size)
    throw DataIntegrityError("corpus vocabulary size " + std::to_string(j.at("vocab_size").get<int>()) +
                             " does not match the configured " + std::to_string(env.vocab_size));
  t.spec.stage = static_cast<Stage>(stage);
  t.spec.hop_keys = j.at("hop_keys").get<std::vector<int>>();
  t.query.ground_truth = j.at("ground_truth").get<TokenSeq>();
  t.spec.noise_rate = j.at("noise_rate").get<double>();
  t.spec.hop_count = static_cast<int>(t.spec.hop_keys.size());
  require(t.spec.hop_count >= 1 && t.spec.hop_count <= env.max_hops, "corpus: hop count out of range");
  require(t.query.ground_truth.size() == t.spec.hop_keys.size(), "corpus: one ground-truth token per hop");
  for (std::size_t i = 0; i < t.spec.hop_keys.size(); ++i) {
    const int key = t.spec.hop_keys[i];
    const Token tok = t.query.ground_truth[i];
    require(key >= 0 && key < env.num_keys, "corpus: key out of range");
    if (tok < 0 || tok >= env.vocab_size) throw DataIntegrityError("corpus: token outside the vocabulary");
    require(t.spec.fact_table.emplace(key, tok).second, "corpus: repeated key");
  }
  t.query.id = j.at("id").get<std::string>();
  t.query.stage = t.spec.stage;
  t.query.features.assign(static_cast<std::size_t>(env.max_hops), 0.0);
  t.query.features[static_cast<std::size_t>(t.spec.hop_count - 1)] = 1.0;
  return t;
}

inline void write_corpus(std::ostream& out, std::span<const Task> tasks, const EnvConfig& env) {
  for (const Task& t : tasks) out << task_to_json(t, env).dump() << '\n';
}

inline std::vector<Task> read_corpus(std::istream& in, const EnvConfig& env) {
  std::vector<Task> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(task_from_json(nlohmann::json::parse(line), env));
    } catch (const nlohmann::json::exception& e) {
      throw DataIntegrityError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mgrpo

#endif  // MGRPO_CONFIG_HPP_
