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

// mgrpo command line: train, eval, smooth, print-default-config,
// inspect-store, make-corpus.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mgrpo/config.hpp"
#include "mgrpo/metrics.hpp"
#include "mgrpo/pipeline.hpp"
#include "mgrpo/store.hpp"

namespace fs = std::filesystem;
using namespace mgrpo;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// --<field> overrides applied on top of the config file. Values are read as
// JSON when they parse as JSON and as plain strings otherwise.
struct Overrides {
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    RunConfig scratch;
    for (const auto& f : detail::run_config_fields(scratch)) {
      const std::string name = f.name;
      app->add_option_function<std::string>(
          "--" + name, [this, name](const std::string& v) { values[name] = v; }, "override " + name);
    }
  }

  std::string apply(const std::string& text) const {
    nlohmann::ordered_json j = text.empty() ? nlohmann::ordered_json::object()
                                            : nlohmann::ordered_json::parse(text, nullptr, false);
    if (j.is_discarded()) return text;  // let the config parser report it
    for (const auto& [k, v] : values) {
      auto parsed = nlohmann::ordered_json::parse(v, nullptr, false);
      j[k] = parsed.is_discarded() ? nlohmann::ordered_json(v) : parsed;
    }
    return j.dump();
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read " + path});
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig resolve_config(const std::string& path, const Overrides& ov) {
  return parse_run_config(ov.apply(path.empty() ? std::string() : read_file(path)));
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

fs::path store_path(const RunConfig& cfg) {
  const fs::path p(cfg.store_dir);
  return p.is_absolute() ? p : fs::path(cfg.output_dir) / p;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string role = "both";
  Overrides overrides;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = resolve_config(a.config, a.overrides);
  if (a.role != "both" && cfg.store != StoreBackend::kDirectory)
    throw ConfigError({"store: --role " + a.role + " needs the directory store shared by both processes"});
  if (a.role == "sub" && cfg.mode == Mode::kSingleAgent)
    throw ConfigError({"mode: single-agent runs have no sub worker"});

  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);
  write_text(out_dir / "config.json", config_text(cfg));
  write_text(out_dir / "stamp.txt", reproducibility_stamp(cfg));

  std::unique_ptr<Store> store;
  if (cfg.store == StoreBackend::kDirectory)
    store = std::make_unique<DirectoryStore>(store_path(cfg));
  else
    store = std::make_unique<MemoryStore>();

  CurriculumOptions opt;
  opt.engine = Engine::kPipeline;
  opt.store = store.get();
  opt.run_id = cfg.run_id;
  opt.timeout = std::chrono::milliseconds(cfg.store_timeout_ms);
  opt.eval_every = cfg.eval_every;
  opt.eval_episodes = cfg.eval_episodes;
  const RunContext ctx{store.get(), cfg.run_id, cfg.seed, cfg.mode, cfg.curriculum, opt.timeout};

  if (a.role == "sub") {
    const SoftmaxLinearPolicy sub = run_sub_loop(ctx, initial_policies(cfg.curriculum, cfg.mode).sub);
    save_policy(sub, (out_dir / "sub.ckpt").string());
    std::cout << "sub worker finished " << cfg.curriculum.total_steps() << " steps\n";
    return 0;
  }

  std::ofstream metrics(out_dir / "metrics.tsv", std::ios::trunc);
  std::ofstream objectives(out_dir / "objectives.tsv", std::ios::trunc);
  if (!metrics || !objectives) throw std::runtime_error("cannot write metrics under " + out_dir.string());
  write_metrics_header(metrics);
  objectives << kObjectivesHeader << '\n';
  opt.on_step = [&](const StepMetrics& m) {
    write_metrics_row(metrics, m);
    write_objective_rows(objectives, m);
    metrics.flush();
    objectives.flush();
  };

  CurriculumResult res;
  if (a.role == "main")
    res = run_main_loop(ctx, initial_policies(cfg.curriculum, cfg.mode).main, opt);
  else
    res = run_curriculum(cfg.curriculum, cfg.mode, cfg.seed, opt);

  save_policy(res.final_policies.main, (out_dir / "main.ckpt").string());
  if (a.role == "both" && cfg.mode != Mode::kSingleAgent)
    save_policy(res.final_policies.sub, (out_dir / "sub.ckpt").string());
  const StepMetrics* last = res.metrics.empty() ? nullptr : &res.metrics.back();
  std::cout << "trained " << res.metrics.size() << " steps, mode " << to_string(cfg.mode);
  if (last) std::cout << ", final eval_success " << format_real(last->eval_success);
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string config;
  std::string main_ckpt;
  std::string sub_ckpt;
  std::string corpus;
  std::string log;
  int episodes = -1;  // -1: the whole corpus, or eval_episodes generated tasks
  bool oracle = false;
  bool uniform = false;
  Overrides overrides;
};

int cmd_eval(const EvalArgs& a) {
  const RunConfig cfg = resolve_config(a.config, a.overrides);
  const CurriculumConfig& cc = cfg.curriculum;
  const bool single = cfg.mode == Mode::kSingleAgent;

  std::vector<Task> tasks;
  if (!a.corpus.empty()) {
    std::ifstream in(a.corpus);
    if (!in) throw std::runtime_error("cannot read corpus " + a.corpus);
    tasks = read_corpus(in, cc.env);
  } else {
    tasks = eval_tasks(cfg.seed, Stage::kStage2, a.episodes < 0 ? cfg.eval_episodes : a.episodes, cc.env);
  }
  if (a.episodes >= 0 && static_cast<std::size_t>(a.episodes) < tasks.size())
    tasks.resize(static_cast<std::size_t>(a.episodes));

  EvalReport rep;
  if (a.oracle) {
    rep = evaluate_with(tasks, cfg.seed, cc, [&](const Task& t, Rng& rng) {
      if (single) return run_single_rollout(t.query, t.spec, OracleSingleActor(cc.env), rng, cc.env);
      return run_rollout(t.query, t.spec, OracleMainActor(cc.env), OracleSubActor(cc.env), rng, cc.env);
    });
  } else {
    PolicyPair p;
    if (a.uniform) {
      p = initial_policies([&] {
        CurriculumConfig c = cc;
        c.prior_strength = 0.0;
        return c;
      }(), cfg.mode);
    } else {
      if (a.main_ckpt.empty()) throw ConfigError({"--main: checkpoint required (or --oracle / --uniform)"});
      p.main = load_policy(a.main_ckpt);
      if (p.main.role() != Role::kMain) throw DataIntegrityError(a.main_ckpt + " is not a main checkpoint");
      if (!single) {
        if (a.sub_ckpt.empty()) throw ConfigError({"--sub: checkpoint required for mode " + std::string(to_string(cfg.mode))});
        p.sub = load_policy(a.sub_ckpt);
        if (p.sub.role() != Role::kSub) throw DataIntegrityError(a.sub_ckpt + " is not a sub checkpoint");
      }
    }
    rep = evaluate(tasks, p.main, single ? nullptr : &p.sub, cfg.mode, cfg.seed, cc);
  }

  std::ostream* log = &std::cout;
  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log, std::ios::trunc);
    if (!log_file) throw std::runtime_error("cannot write " + a.log);
    log = &log_file;
  }
  *log << "episode\tquery_id\tformat_ok\tcorrect\tsuccess\n";
  for (std::size_t i = 0; i < rep.per_episode.size(); ++i) {
    const RewardBreakdown& b = rep.per_episode[i];
    *log << i << '\t' << tasks[i].query.id << '\t' << (b.format_ok ? 1 : 0) << '\t' << format_real(b.correct)
         << '\t' << ((b.format_ok && b.correct == 1.0) ? 1 : 0) << '\n';
  }
  if (rep.episodes == 0)
    std::cout << "episodes 0, success_rate undefined\n";
  else
    std::cout << "episodes " << rep.episodes << ", successes " << rep.successes << ", success_rate "
              << format_real(rep.success_rate()) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_smooth(const std::string& input, const std::string& output, const std::string& column, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError({"alpha: must lie in (0,1]"});
  std::ifstream in(input);
  if (!in) throw std::runtime_error("cannot read " + input);
  std::stringstream ss;
  ss << in.rdbuf();
  std::istringstream steps_in(ss.str()), values_in(ss.str());
  std::vector<double> steps;
  const bool has_step = ss.str().rfind("step\t", 0) == 0 || ss.str().rfind("step\n", 0) == 0;
  if (has_step) steps = read_column(steps_in, "step");
  const std::vector<double> raw = read_column(values_in, column);
  // Rows where the column was not measured are skipped.
  std::vector<double> x, at;
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (!std::isnan(raw[i])) {
      x.push_back(raw[i]);
      at.push_back(has_step ? steps[i] : static_cast<double>(i));
    }
  if (x.empty()) throw DataIntegrityError("column '" + column + "' has no values to smooth");
  const std::vector<double> y = ema(x, alpha);

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!output.empty()) {
    file.open(output, std::ios::trunc);
    if (!file) throw std::runtime_error("cannot write " + output);
    out = &file;
  }
  *out << "step\t" << column << "\t" << column << "_ema\n";
  for (std::size_t i = 0; i < y.size(); ++i)
    *out << format_real(at[i]) << '\t' << format_real(x[i]) << '\t' << format_real(y[i]) << '\n';
  return 0;
}

int cmd_inspect_store(const std::string& dir, const std::string& run_id, std::optional<std::int64_t> step) {
  if (!fs::is_directory(dir)) throw std::runtime_error(dir + " is not a store directory");
  DirectoryStore store(dir);
  std::size_t shown = 0;
  for (const StoreKey& k : store.keys()) {
    if (!run_id.empty() && k.run_id != run_id) continue;
    if (step && k.step != *step) continue;
    const auto payload = store.try_get(k);
    std::cout << to_string(k) << '\t' << (payload ? payload->size() : 0) << " bytes\n";
    ++shown;
  }
  std::cout << shown << " keys\n";
  std::size_t done = 0;
  for (const auto& [id, s] : store.completed_steps())
    if (run_id.empty() || id == run_id) ++done;
  std::cout << done << " completed steps\n";
  return 0;
}

int cmd_make_corpus(const std::string& config, const Overrides& ov, int stage, int count,
                    const std::string& output) {
  const RunConfig cfg = resolve_config(config, ov);
  if (stage != 1 && stage != 2) throw ConfigError({"stage: must be 1 or 2"});
  if (count < 0) throw ConfigError({"count: must be >= 0"});
  const auto tasks = eval_tasks(cfg.seed, static_cast<Stage>(stage), count, cfg.curriculum.env);
  std::ofstream out(output, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + output);
  write_corpus(out, tasks, cfg.curriculum.env);
  std::cout << "wrote " << tasks.size() << " tasks to " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mgrpo: hierarchical group-relative policy optimization"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "run the two-stage curriculum");
  train_cmd->add_option("config", train.config, "JSON config file (defaults when omitted)");
  train_cmd->add_option("--role", train.role, "both, or one worker of a two-process run")
      ->check(CLI::IsMember({"both", "main", "sub"}));
  train.overrides.attach(train_cmd);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "greedy evaluation of checkpoints on a task corpus");
  eval_cmd->add_option("config", ev.config, "JSON config file (environment and mode)");
  eval_cmd->add_option("--main", ev.main_ckpt, "main (or single-agent) checkpoint");
  eval_cmd->add_option("--sub", ev.sub_ckpt, "sub checkpoint");
  eval_cmd->add_option("--corpus", ev.corpus, "JSON-lines task corpus; generated from the seed when omitted");
  eval_cmd->add_option("--episodes", ev.episodes, "number of episodes");
  eval_cmd->add_option("--log", ev.log, "per-episode log file (stdout when omitted)");
  eval_cmd->add_flag("--oracle", ev.oracle, "use the scripted optimal actors");
  eval_cmd->add_flag("--uniform", ev.uniform, "use untrained all-zero policies");
  ev.overrides.attach(eval_cmd);

  std::string smooth_in, smooth_out, column = "mean_main_reward";
  double alpha = 0.1;
  auto* smooth_cmd = app.add_subcommand("smooth", "EMA-smooth one metrics column");
  smooth_cmd->add_option("metrics", smooth_in, "metrics file")->required();
  smooth_cmd->add_option("--alpha", alpha, "EMA weight of the newest value");
  smooth_cmd->add_option("--column", column, "column to smooth");
  smooth_cmd->add_option("--output", smooth_out, "output file (stdout when omitted)");

  auto* print_cmd = app.add_subcommand("print-default-config", "print the default configuration");

  std::string store_dir, run_id;
  std::optional<std::int64_t> step;
  auto* inspect_cmd = app.add_subcommand("inspect-store", "list the keys of a directory store");
  inspect_cmd->add_option("dir", store_dir, "store directory")->required();
  inspect_cmd->add_option("--run-id", run_id, "only keys of this run");
  inspect_cmd->add_option("--step", step, "only keys of this step");

  std::string corpus_config, corpus_out;
  Overrides corpus_ov;
  int corpus_stage = 2, corpus_count = 100;
  auto* corpus_cmd = app.add_subcommand("make-corpus", "write a JSON-lines task corpus");
  corpus_cmd->add_option("config", corpus_config, "JSON config file (environment and seed)");
  corpus_cmd->add_option("--stage", corpus_stage, "1 or 2");
  corpus_cmd->add_option("--count", corpus_count, "number of tasks");
  corpus_cmd->add_option("--output", corpus_out, "output file")->required();
  corpus_ov.attach(corpus_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(ev);
    if (*smooth_cmd) return cmd_smooth(smooth_in, smooth_out, column, alpha);
    if (*print_cmd) {
      std::cout << default_config_text();
      return 0;
    }
    if (*inspect_cmd) return cmd_inspect_store(store_dir, run_id, step);
    if (*corpus_cmd) return cmd_make_corpus(corpus_config, corpus_ov, corpus_stage, corpus_count, corpus_out);
  } catch (const ConfigError& e) {
    for (const auto& p : e.problems()) std::cerr << "config error: " << p << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
