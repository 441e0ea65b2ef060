#ifndef PLANAGENT_CLI_HPP_
#define PLANAGENT_CLI_HPP_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "planagent/agent.hpp"
#include "planagent/grpo.hpp"
#include "planagent/judge.hpp"
#include "planagent/memory.hpp"
#include "planagent/model_client.hpp"
#include "planagent/pipeline.hpp"
#include "planagent/scaling.hpp"
#include "planagent/scripted.hpp"
#include "planagent/serde.hpp"

#ifndef PLANAGENT_PROMPTS_DIR
#define PLANAGENT_PROMPTS_DIR "prompts"
#endif

namespace planagent::cli {

namespace detail {

struct CommonOptions {
  std::uint64_t seed = 0;
  int jobs = 1;
  bool fixed_clock = false;
  std::string prompts_dir = PLANAGENT_PROMPTS_DIR;
};

struct RemoteOptions {
  std::string endpoint = "http://127.0.0.1:8000";
  std::string model = "default";
  std::string token_env = "PLANAGENT_API_TOKEN";
  int max_retries = 3;
  int backoff_ms = 250;
  int timeout_ms = 30000;
};

inline ClientConfig to_client_config(const RemoteOptions& r) {
  ClientConfig c;
  c.endpoint_url = r.endpoint;
  c.model_name = r.model;
  c.auth_token_env = r.token_env;
  c.max_retries = r.max_retries;
  c.backoff_base_ms = r.backoff_ms;
  c.timeout_ms = r.timeout_ms;
  return c;
}

inline void add_remote_flags(CLI::App* cmd, RemoteOptions& r) {
  cmd->add_option("--endpoint", r.endpoint, "Chat-completion endpoint URL");
  cmd->add_option("--model", r.model, "Remote model name");
  cmd->add_option("--token-env", r.token_env,
                  "Environment variable holding the bearer token");
  cmd->add_option("--max-retries", r.max_retries, "Request retries after the first attempt");
  cmd->add_option("--backoff-ms", r.backoff_ms, "Retry backoff base in milliseconds");
  cmd->add_option("--timeout-ms", r.timeout_ms, "Request timeout in milliseconds");
}

// Lazily loaded prompt registry shared by the remote ports of one command.
class Registry {
 public:
  explicit Registry(std::string dir) : dir_(std::move(dir)) {}
  const TemplateRegistry& get() {
    if (!reg_) reg_ = TemplateRegistry::load_dir(dir_);
    return *reg_;
  }

 private:
  std::string dir_;
  std::optional<TemplateRegistry> reg_;
};

using PlannerFactory = std::function<std::unique_ptr<PlannerPort>(std::uint64_t seed)>;

struct AgentStack {
  PlannerFactory make_planner;
  std::unique_ptr<ActorPort> actor;
  std::unique_ptr<GatePort> gate;
  std::optional<PolicyParams> policy;  // owns the weights behind policy planners
};

struct StackOptions {
  std::string planner = "scripted";
  std::string actor = "scripted";
  std::string gate = "scripted";
  std::string policy_path;
  double planner_temperature = 0.5;
};

inline AgentStack build_stack(const StackOptions& opts, const RemoteOptions& remote,
                              Registry& registry) {
  AgentStack stack;
  if (opts.planner == "scripted") {
    stack.make_planner = [](std::uint64_t) { return std::make_unique<ScriptedPlanner>(); };
  } else if (opts.planner == "remote") {
    const ClientConfig config = to_client_config(remote);
    const TemplateRegistry& reg = registry.get();
    const double temperature = opts.planner_temperature;
    stack.make_planner = [config, &reg, temperature](std::uint64_t) {
      return std::make_unique<RemotePlanner>(config, reg, temperature);
    };
  } else if (opts.planner == "policy") {
    if (opts.policy_path.empty())
      throw ValidationError("planner=policy requires --policy <checkpoint>");
    std::ifstream in(opts.policy_path);
    if (!in) throw IoError("cannot open policy checkpoint '" + opts.policy_path + "'");
    stack.policy = policy_from_json(json::parse(in));
    const PolicyParams* policy = &*stack.policy;
    stack.make_planner = [policy](std::uint64_t seed) {
      return std::make_unique<TemplatePolicyPlanner>(*policy, Rng(seed));
    };
  } else {
    throw ValidationError("unknown planner '" + opts.planner + "'");
  }

  if (opts.actor == "scripted")
    stack.actor = std::make_unique<ScriptedActor>();
  else if (opts.actor == "remote")
    stack.actor = std::make_unique<RemoteActor>(to_client_config(remote), registry.get());
  else
    throw ValidationError("unknown actor '" + opts.actor + "'");

  if (opts.gate == "scripted")
    stack.gate = std::make_unique<ScriptedGate>();
  else if (opts.gate == "remote")
    stack.gate = std::make_unique<RemoteGate>(to_client_config(remote), registry.get());
  else
    throw ValidationError("unknown gate '" + opts.gate + "'");
  return stack;
}

}  // namespace detail

// Entry point behind the binary; also called directly by tests.
// Exit codes: 0 success, 1 domain error, 2 usage error.
inline int dispatch(std::vector<std::string> args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Planner-centric multi-agent framework: simulated episodes, "
               "judged rewards, planner-only GRPO training, scaling fits"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may appear after the subcommand
  app.set_config("--config", "", "Config file with default option values (INI format)");

  detail::CommonOptions common;
  app.add_option("--seed", common.seed, "Master seed; all randomness derives from it");
  app.add_option("--jobs", common.jobs, "Concurrency budget for rollouts and judging");
  app.add_flag("--fixed-clock", common.fixed_clock,
               "Record zero wall-clock timings (byte-stable outputs)");
  app.add_option("--prompts-dir", common.prompts_dir, "Directory with prompt template files");

  // --- run -------------------------------------------------------------
  auto* run_cmd = app.add_subcommand("run", "Run episodes on a simulated world");
  std::string run_world, run_task, run_out = "trajectories.jsonl", run_bank;
  detail::StackOptions run_stack;
  detail::RemoteOptions run_remote;
  EpisodeLimits run_limits;
  MemoryConfig run_memory;
  run_cmd->add_option("--world", run_world, "World spec file")
      ->required()
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--task", run_task, "Task id (default: every task in the world)");
  run_cmd->add_option("--planner", run_stack.planner, "Planner port: scripted|remote|policy");
  run_cmd->add_option("--actor", run_stack.actor, "Actor port: scripted|remote");
  run_cmd->add_option("--gate", run_stack.gate, "Memory gate port: scripted|remote");
  run_cmd->add_option("--policy", run_stack.policy_path, "Policy checkpoint for planner=policy");
  run_cmd->add_option("--max-steps", run_limits.max_steps, "Step limit per episode");
  run_cmd->add_option("--parse-retries", run_limits.parse_retries,
                      "Parse attempts before fallback");
  run_cmd->add_option("--history-window", run_limits.history_window,
                      "(observation, action) pairs shown to the planner");
  run_cmd->add_option("--k", run_memory.k, "Memory entries retrieved per query");
  run_cmd->add_option("--gate-every", run_memory.gate_every, "Gate cadence in steps");
  run_cmd->add_option("--bank", run_bank, "Memory bank directory")->check(CLI::ExistingDirectory);
  run_cmd->add_option("--out", run_out, "Trajectory output file (JSONL)");
  run_cmd->add_option("--temperature", run_stack.planner_temperature,
                      "Remote planner sampling temperature");
  detail::add_remote_flags(run_cmd, run_remote);

  // --- train -----------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Planner-only GRPO training");
  std::string train_world, train_tasks, train_templates, train_policy_in, train_policy_out;
  std::string train_out = "report.jsonl", train_bank, train_judge = "scripted";
  detail::RemoteOptions train_remote;
  std::string train_actor = "scripted";
  TrainConfig train_config;
  train_cmd->add_option("--world", train_world, "World spec file")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--tasks", train_tasks, "Task file (JSONL; default: world tasks)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--templates", train_templates, "Plan template file (JSON array)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--policy-in", train_policy_in, "Resume from a policy checkpoint")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--group-size", train_config.group_size, "Rollouts per task (G)");
  train_cmd->add_option("--batch", train_config.batch_tasks, "Tasks per iteration");
  train_cmd->add_option("--kl", train_config.kl_coeff, "KL coefficient (beta)");
  train_cmd->add_option("--lr", train_config.learning_rate, "Learning rate (logit ascent)");
  train_cmd->add_option("--temperature", train_config.temperature, "Planner temperature");
  train_cmd->add_option("--iters", train_config.iterations, "Training iterations")->required();
  train_cmd->add_option("--ref-refresh", train_config.ref_refresh_every,
                        "Refresh the KL reference every N iterations (0: fixed)");
  train_cmd->add_option("--judge-votes", train_config.judge_votes, "Votes per trajectory (K)");
  train_cmd->add_flag("--per-traj-mean", train_config.per_trajectory_mean,
                      "Average per trajectory instead of per step");
  train_cmd->add_option("--clip", train_config.clip_epsilon,
                        "Optional ratio clip epsilon (0: unclipped, the default objective)");
  train_cmd->add_option("--max-steps", train_config.limits.max_steps, "Step limit per episode");
  train_cmd->add_option("--k", train_config.memory.k, "Memory entries retrieved per query");
  train_cmd->add_option("--actor", train_actor, "Frozen actor port: scripted|remote");
  train_cmd->add_option("--judge", train_judge, "Judge port: scripted|remote");
  train_cmd->add_option("--bank", train_bank, "Frozen memory bank directory")
      ->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", train_out, "Per-iteration report file (JSONL)");
  train_cmd->add_option("--policy-out", train_policy_out, "Where to write the trained policy");
  detail::add_remote_flags(train_cmd, train_remote);

  // --- judge -----------------------------------------------------------
  auto* judge_cmd = app.add_subcommand("judge", "Score trajectories with K-vote aggregation");
  std::string judge_in, judge_out = "rewards.jsonl", judge_port = "scripted";
  int judge_k = kDefaultJudgeVotes;
  detail::RemoteOptions judge_remote;
  judge_cmd->add_option("--trajectories", judge_in, "Trajectory file (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  judge_cmd->add_option("--k", judge_k, "Votes per trajectory (K)");
  judge_cmd->add_option("--judge", judge_port, "Judge port: scripted|remote");
  judge_cmd->add_option("--out", judge_out, "Reward-annotated output file (JSONL)");
  detail::add_remote_flags(judge_cmd, judge_remote);

  // --- agree -----------------------------------------------------------
  auto* agree_cmd = app.add_subcommand("agree", "Judge-human agreement statistics");
  std::string agree_judge, agree_human;
  agree_cmd->add_option("--judge", agree_judge, "Judge scores (CSV, one per line)")
      ->required()
      ->check(CLI::ExistingFile);
  agree_cmd->add_option("--human", agree_human, "Human scores (CSV, one per line)")
      ->required()
      ->check(CLI::ExistingFile);

  // --- fitscale ---------------------------------------------------------
  auto* fit_cmd = app.add_subcommand("fitscale", "Log-linear success-vs-size fits");
  std::string fit_points, fit_out = "fit.csv";
  bool fit_report = false;
  double fit_log_base = 10.0;
  fit_cmd->add_option("--points", fit_points, "Input points CSV")
      ->required()
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--out", fit_out, "Output coefficients CSV");
  fit_cmd->add_flag("--report", fit_report, "Print the per-component coefficient table");
  fit_cmd->add_option("--log-base", fit_log_base, "Logarithm base for the size axis");

  // --- filter-tasks ------------------------------------------------------
  auto* filter_cmd = app.add_subcommand("filter-tasks", "Executability filter over candidates");
  std::string filter_world, filter_candidates, filter_out = "kept_tasks.jsonl";
  std::string filter_report_out = "filter_report.jsonl", filter_allow, filter_deny;
  int filter_n = 6;
  detail::StackOptions filter_stack;
  detail::RemoteOptions filter_remote;
  EpisodeLimits filter_limits;
  filter_cmd->add_option("--world", filter_world, "World spec file")
      ->required()
      ->check(CLI::ExistingFile);
  filter_cmd->add_option("--candidates", filter_candidates, "Candidate tasks (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  filter_cmd->add_option("--n", filter_n, "Rollouts per candidate (N)");
  filter_cmd->add_option("--planner", filter_stack.planner,
                         "Planner port: scripted|remote|policy");
  filter_cmd->add_option("--actor", filter_stack.actor, "Actor port: scripted|remote");
  filter_cmd->add_option("--policy", filter_stack.policy_path,
                         "Policy checkpoint for planner=policy");
  filter_cmd->add_option("--max-steps", filter_limits.max_steps, "Step limit per rollout");
  filter_cmd->add_option("--allow", filter_allow, "Keep only task ids listed in this file")
      ->check(CLI::ExistingFile);
  filter_cmd->add_option("--deny", filter_deny, "Drop task ids listed in this file")
      ->check(CLI::ExistingFile);
  filter_cmd->add_option("--out", filter_out, "Kept tasks output (JSONL)");
  filter_cmd->add_option("--report-out", filter_report_out, "Per-candidate report (JSONL)");
  detail::add_remote_flags(filter_cmd, filter_remote);

  // --- memory-build -------------------------------------------------------
  auto* bank_cmd = app.add_subcommand("memory-build", "Build a memory bank from trajectories");
  std::string bank_from, bank_out = "bank";
  int bank_dim = kDefaultMemoryDim;
  bank_cmd->add_option("--from", bank_from, "Trajectory file (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  bank_cmd->add_option("--out", bank_out, "Bank output directory");
  bank_cmd->add_option("--dim", bank_dim, "Feature dimension d");

  app.set_help_all_flag("--help-all", "Print help for every subcommand");

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  const StepClock clock = common.fixed_clock ? fixed_clock() : steady_ms_clock();
  detail::Registry registry(common.prompts_dir);

  try {
    if (*run_cmd) {
      World proto = load_world(run_world, common.seed);
      std::vector<Task> tasks;
      if (run_task.empty()) {
        tasks = proto.spec().tasks;
      } else {
        const Task* t = proto.spec().find_task(run_task);
        if (!t) throw ValidationError("world has no task '" + run_task + "'");
        tasks.push_back(*t);
      }
      if (tasks.empty()) throw ValidationError("no tasks to run");

      MemoryBank bank = run_bank.empty() ? MemoryBank() : load_bank(run_bank);
      detail::AgentStack stack = detail::build_stack(run_stack, run_remote, registry);

      std::vector<Trajectory> trajectories(tasks.size());
      parallel_for(tasks.size(), common.jobs, [&](std::size_t i) {
        World world = proto;
        auto planner = stack.make_planner(mix_seed(common.seed, i));
        MemoryManager memory(bank, *stack.gate, run_memory);
        trajectories[i] =
            run_episode(world, tasks[i], *planner, *stack.actor, memory, run_limits, clock);
      });
      save_trajectories(trajectories, run_out);
      int successes = 0;
      for (const auto& t : trajectories) {
        out << t.task.task_id << ": success=" << (t.success ? 1 : 0)
            << " steps=" << t.steps.size() << " termination=" << to_string(t.termination)
            << "\n";
        if (t.success) ++successes;
      }
      out << "wrote " << trajectories.size() << " trajectories to " << run_out << " ("
          << successes << " successful)\n";
      return 0;
    }

    if (*train_cmd) {
      World proto = load_world(train_world, common.seed);
      std::vector<Task> tasks =
          train_tasks.empty() ? proto.spec().tasks : load_tasks(train_tasks);

      PolicyParams policy = [&]() {
        if (!train_policy_in.empty()) {
          std::ifstream in(train_policy_in);
          return policy_from_json(json::parse(in));
        }
        if (train_templates.empty())
          throw ValidationError("train requires --templates or --policy-in");
        std::ifstream in(train_templates);
        return PolicyParams(json::parse(in).get<std::vector<PlanTemplate>>(),
                            train_config.temperature);
      }();

      MemoryBank bank = train_bank.empty() ? MemoryBank() : load_bank(train_bank);
      ScriptedGate gate;
      std::unique_ptr<ActorPort> actor;
      if (train_actor == "scripted")
        actor = std::make_unique<ScriptedActor>();
      else if (train_actor == "remote")
        actor = std::make_unique<RemoteActor>(detail::to_client_config(train_remote),
                                              registry.get());
      else
        throw ValidationError("unknown actor '" + train_actor + "'");
      std::unique_ptr<JudgePort> judge;
      if (train_judge == "scripted")
        judge = std::make_unique<ScriptedJudge>();
      else if (train_judge == "remote")
        judge = std::make_unique<RemoteJudge>(detail::to_client_config(train_remote),
                                              registry.get());
      else
        throw ValidationError("unknown judge '" + train_judge + "'");

      train_config.seed = common.seed;
      train_config.jobs = common.jobs;
      const TrainReport report = train_planner(proto, tasks, policy,
                                               TrainerPorts{*actor, gate, bank, *judge},
                                               train_config);
      save_report(report, train_out);
      if (!train_policy_out.empty()) {
        std::ofstream pout(train_policy_out, std::ios::binary);
        if (!pout) throw IoError("cannot write policy to '" + train_policy_out + "'");
        pout << policy_to_json(policy).dump(2) << "\n";
      }
      if (!report.iterations.empty()) {
        const auto& last = report.iterations.back();
        out << "iterations=" << report.iterations.size()
            << " final_success_rate=" << last.success_rate
            << " final_mean_reward=" << last.mean_reward << "\n";
      } else {
        out << "iterations=0 (policy unchanged)\n";
      }
      out << "wrote report to " << train_out << "\n";
      return 0;
    }

    if (*judge_cmd) {
      const auto trajectories = load_trajectories(judge_in);
      std::unique_ptr<JudgePort> judge;
      if (judge_port == "scripted")
        judge = std::make_unique<ScriptedJudge>();
      else if (judge_port == "remote")
        judge = std::make_unique<RemoteJudge>(detail::to_client_config(judge_remote),
                                              registry.get());
      else
        throw ValidationError("unknown judge '" + judge_port + "'");

      std::vector<RewardRecord> records(trajectories.size());
      parallel_for(trajectories.size(), common.jobs, [&](std::size_t i) {
        records[i] = judge_trajectory(trajectories[i], *judge, judge_k);
      });

      std::ofstream fout(judge_out, std::ios::binary);
      if (!fout) throw IoError("cannot write '" + judge_out + "'");
      double total = 0;
      for (std::size_t i = 0; i < trajectories.size(); ++i) {
        json line = trajectories[i];
        line["reward_record"] = records[i];
        fout << line.dump() << "\n";
        total += records[i].reward;
      }
      out << "judged " << trajectories.size() << " trajectories, mean reward "
          << (trajectories.empty() ? 0.0 : total / trajectories.size()) << "\n";
      return 0;
    }

    if (*agree_cmd) {
      auto load_scores = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open '" + path + "'");
        std::vector<int> scores;
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
          ++line_no;
          const std::string t = planagent::detail::trim(line);
          if (t.empty() || (line_no == 1 && t == "score")) continue;
          try {
            scores.push_back(std::stoi(t));
          } catch (const std::exception&) {
            throw ParseError(path + ": bad score line", line_no);
          }
        }
        return scores;
      };
      const auto [exact, within] = agreement_stats(load_scores(agree_judge),
                                                   load_scores(agree_human));
      out << "exact_agreement_pct=" << exact << "\n";
      out << "within_one_level_pct=" << within << "\n";
      return 0;
    }

    if (*fit_cmd) {
      const auto points = load_points_csv(fit_points);
      if (points.empty()) throw ValidationError("no points in '" + fit_points + "'");
      const auto fits = fit_by_component(points, fit_log_base);
      save_fits_csv(fits, fit_out);
      if (fit_report) out << render_fit_table(fits);
      out << "wrote " << fits.size() << " fits to " << fit_out << "\n";
      return 0;
    }

    if (*filter_cmd) {
      World proto = load_world(filter_world, common.seed);
      std::vector<TaskCandidate> candidates;
      for (auto& t : load_tasks(filter_candidates)) candidates.push_back({std::move(t), 0, 0});

      detail::AgentStack stack = detail::build_stack(filter_stack, filter_remote, registry);
      MemoryBank bank;
      const RolloutFn rollout = [&](const Task& task, std::uint64_t seed) {
        World world = proto;
        auto planner = stack.make_planner(seed);
        MemoryManager memory(bank, *stack.gate, MemoryConfig{});
        return run_episode(world, task, *planner, *stack.actor, memory, filter_limits, clock);
      };
      auto [kept, report] = filter_tasks(std::move(candidates), rollout, filter_n, common.seed,
                                         common.jobs);
      if (!filter_allow.empty()) kept = apply_review_list(std::move(kept), filter_allow, false);
      if (!filter_deny.empty()) kept = apply_review_list(std::move(kept), filter_deny, true);
      save_tasks(kept, filter_out);
      save_filter_report(report, filter_report_out);
      out << "kept " << kept.size() << " of " << report.proposed << " candidates\n";
      return 0;
    }

    if (*bank_cmd) {
      const auto trajectories = load_trajectories(bank_from);
      MemoryBank bank(bank_dim);
      ScriptedSummarizer summarizer;
      int ingested = 0;
      for (const auto& t : trajectories) {
        if (!t.success) continue;
        ingest(bank, t, summarizer);
        ++ingested;
      }
      save_bank(bank, bank_out);
      out << "ingested " << ingested << " of " << trajectories.size() << " trajectories into "
          << bank_out << "\n";
      return 0;
    }
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << "usage error: no subcommand selected\n";
  return 2;
}

}  // namespace planagent::cli

#endif  // PLANAGENT_CLI_HPP_
