// Command-line surface: dataset generation, training, evaluation, ablations,
// offline policy evaluation, theory verification and manifest reports.
//
// Exit codes: 0 success, 2 invalid arguments or configuration, 3 I/O failure,
// 4 numeric abort (partial outputs are retained).

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "cdc/agent.hpp"
#include "cdc/config.hpp"
#include "cdc/fqe.hpp"
#include "cdc/manifest.hpp"
#include "cdc/trainer.hpp"
#include "cdc/verify_suite.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

json config_to_json(const cdc::CdcConfig& c) {
  return json{{"eta", c.eta},
              {"lambda", c.lambda},
              {"nu", c.nu},
              {"n_candidates", c.n_candidates},
              {"ensemble_size", c.ensemble_size},
              {"gamma", c.gamma},
              {"tau", c.tau},
              {"batch_size", c.batch_size},
              {"actor_lr", c.actor_lr},
              {"critic_lr", c.critic_lr},
              {"total_steps", c.total_steps},
              {"seed", c.seed},
              {"hidden", c.hidden},
              {"log_interval", c.log_interval},
              {"eval_interval", c.eval_interval},
              {"eval_episodes", c.eval_episodes},
              {"grad_clip", c.grad_clip}};
}

constexpr const char* kCurveHeader =
    "step,td_loss,delta_penalty,policy_obj,mean_q,max_q,mean_logpi,eval_return";

void write_curve_row(std::ofstream& out, const cdc::TrainRecord& r) {
  out << r.step << ',' << fmt_double(r.td_loss) << ',' << fmt_double(r.delta_penalty) << ','
      << fmt_double(r.policy_obj) << ',' << fmt_double(r.mean_q) << ',' << fmt_double(r.max_q)
      << ',' << fmt_double(r.mean_logpi) << ',' << fmt_double(r.eval_return) << '\n';
}

// Runs one training job into out_dir (checkpoint.ckpt, curve.csv, manifest).
// Returns the trained agent. Used by cmd_train, cmd_ablate and --gen-policies.
cdc::TrainResult run_training(const cdc::CdcConfig& cfg, const std::string& dataset_path,
                              const cdc::TransitionDataset& data, const std::string& out_dir,
                              const std::string& command_line) {
  fs::create_directories(out_dir);
  const std::string curve_path = out_dir + "/curve.csv";
  const std::string ckpt_path = out_dir + "/checkpoint.ckpt";
  const std::string manifest_path = out_dir + "/train.manifest.json";

  std::optional<cdc::PointMassEnv> eval_env;
  try {
    eval_env = cdc::make_env(data.env_name);
  } catch (const cdc::ConfigError&) {
    std::cerr << "note: no built-in environment named '" << data.env_name
              << "', training without periodic evaluation\n";
  }

  Timer timer;
  cdc::RunManifest manifest;
  manifest.command = command_line;
  manifest.config = config_to_json(cfg);
  manifest.seeds = {{"seed", cfg.seed}};
  manifest.add_input(dataset_path);

  std::ofstream curve(curve_path);
  if (!curve) throw cdc::IoError("cannot write " + curve_path);
  curve << kCurveHeader << '\n';
  try {
    cdc::TrainResult result = cdc::train(cfg, data, eval_env ? &*eval_env : nullptr,
                                         [&](const cdc::TrainRecord& r) {
                                           write_curve_row(curve, r);
                                           curve.flush();
                                         });
    curve.close();
    cdc::save_agent(result.agent, ckpt_path);
    manifest.add_output(curve_path);
    manifest.add_output(ckpt_path);
    manifest.duration_seconds = timer.seconds();
    manifest.save(manifest_path);
    return result;
  } catch (const cdc::NumericError&) {
    curve.close();  // keep the partial curve
    manifest.add_output(curve_path);
    manifest.duration_seconds = timer.seconds();
    manifest.save(manifest_path);
    throw;
  }
}

int cmd_gen_data(const std::string& env_name, const std::string& tier_name, long n,
                 std::uint64_t seed, const std::string& out_path, const std::string& csv_path,
                 int csv_ds, int csv_da, const std::string& command_line) {
  Timer timer;
  cdc::TransitionDataset data;
  cdc::RunManifest manifest;
  manifest.command = command_line;
  if (!csv_path.empty()) {
    if (csv_ds < 1 || csv_da < 1) {
      std::cerr << "error: --from-csv requires --ds and --da\n";
      return kExitUsage;
    }
    data = cdc::import_csv(csv_path, env_name, csv_ds, csv_da);
    manifest.add_input(csv_path);
    manifest.config = {{"env", env_name}, {"from_csv", csv_path}, {"ds", csv_ds}, {"da", csv_da}};
  } else {
    cdc::PointMassEnv env = cdc::make_env(env_name);
    cdc::BehaviorPolicy behavior(cdc::tier_from_name(tier_name), env);
    data = cdc::generate_dataset(env, behavior, n, seed);
    manifest.config = {{"env", env_name}, {"tier", tier_name}, {"n", n}};
  }
  manifest.seeds = {{"seed", seed}};
  cdc::save_dataset(data, out_path);
  manifest.add_output(out_path);
  manifest.duration_seconds = timer.seconds();
  manifest.save(out_path + ".manifest.json");
  json out = {{"path", out_path}, {"n", data.size()}, {"ds", data.ds}, {"da", data.da},
              {"env", data.env_name}};
  std::cout << out.dump() << '\n';
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& dataset_path,
              const std::string& out_dir, const std::string& command_line) {
  const cdc::CdcConfig cfg = cdc::load_train_config(config_path);
  const cdc::TransitionDataset data = cdc::load_dataset(dataset_path);
  const cdc::TrainResult result = run_training(cfg, dataset_path, data, out_dir, command_line);
  json out = {{"checkpoint", out_dir + "/checkpoint.ckpt"},
              {"curve", out_dir + "/curve.csv"},
              {"records", result.records.size()}};
  if (!result.records.empty()) out["final_eval_return"] = result.records.back().eval_return;
  std::cout << out.dump() << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& env_name, int episodes,
             std::uint64_t seed, int n_candidates, const std::string& out_dir,
             const std::string& command_line) {
  Timer timer;
  const cdc::Agent agent = cdc::load_agent(ckpt_path);
  cdc::PointMassEnv env = cdc::make_env(env_name);
  if (agent.state_dim != env.state_dim() || agent.action_dim != env.action_dim()) {
    std::cerr << "error: checkpoint dims (" << agent.state_dim << "," << agent.action_dim
              << ") do not match environment '" << env_name << "' (" << env.state_dim() << ","
              << env.action_dim() << ")\n";
    return kExitUsage;
  }
  std::vector<double> returns;
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    cdc::Rng rng = cdc::substream(seed, "eval", std::uint64_t(e));
    const double ret = cdc::rollout(
                           env,
                           [&](const Eigen::VectorXd& s, cdc::Rng& r) {
                             return agent.select(s, n_candidates, r);
                           },
                           env.horizon(), rng)
                           .undiscounted;
    returns.push_back(ret);
    total += ret;
  }
  const double raw = total / episodes;
  const cdc::ReferenceScores refs = cdc::reference_scores(env);
  const double normalized = cdc::normalized_score(raw, refs.random_score, refs.expert_score);
  json out = {{"raw_return", raw},
              {"normalized_score", normalized},
              {"episodes", episodes},
              {"returns", returns},
              {"random_score", refs.random_score},
              {"expert_score", refs.expert_score}};
  std::cout << out.dump() << '\n';

  fs::create_directories(out_dir);
  const std::string result_path = out_dir + "/eval.json";
  cdc::write_file(result_path, out.dump(2) + "\n");
  cdc::RunManifest manifest;
  manifest.command = command_line;
  manifest.config = {{"env", env_name}, {"episodes", episodes}, {"n_candidates", n_candidates}};
  manifest.seeds = {{"seed", seed}};
  manifest.add_input(ckpt_path);
  manifest.add_output(result_path);
  manifest.duration_seconds = timer.seconds();
  manifest.save(out_dir + "/eval.manifest.json");
  return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& dataset_path,
               const std::string& out_dir, const std::string& command_line) {
  const cdc::CdcConfig base = cdc::load_train_config(config_path);
  const cdc::TransitionDataset data = cdc::load_dataset(dataset_path);
  fs::create_directories(out_dir);

  struct Variant {
    const char* name;
    double eta, lambda;
  };
  const Variant variants[4] = {{"eta0_lambda0", 0.0, 0.0},
                               {"eta0", 0.0, base.lambda},
                               {"lambda0", base.eta, 0.0},
                               {"full", base.eta, base.lambda}};
  json report = json::array();
  std::ofstream csv(out_dir + "/ablation.csv");
  csv << "variant,eta,lambda,final_eval_return,final_max_q,peak_max_q,final_td_loss\n";
  for (const auto& v : variants) {
    cdc::CdcConfig cfg = base;
    cfg.eta = v.eta;
    cfg.lambda = v.lambda;
    const std::string run_dir = out_dir + "/" + v.name;
    const cdc::TrainResult run =
        run_training(cfg, dataset_path, data, run_dir, command_line + " [" + v.name + "]");
    double final_eval = 0, final_max_q = 0, peak_max_q = 0, final_td = 0;
    if (!run.records.empty()) {
      final_eval = run.records.back().eval_return;
      final_max_q = run.records.back().max_q;
      final_td = run.records.back().td_loss;
      for (const auto& r : run.records) peak_max_q = std::max(peak_max_q, r.max_q);
    }
    report.push_back({{"variant", v.name},
                      {"eta", v.eta},
                      {"lambda", v.lambda},
                      {"final_eval_return", final_eval},
                      {"final_max_q", final_max_q},
                      {"peak_max_q", peak_max_q},
                      {"final_td_loss", final_td}});
    csv << v.name << ',' << fmt_double(v.eta) << ',' << fmt_double(v.lambda) << ','
        << fmt_double(final_eval) << ',' << fmt_double(final_max_q) << ','
        << fmt_double(peak_max_q) << ',' << fmt_double(final_td) << '\n';
  }
  csv.close();
  cdc::write_file(out_dir + "/ablation.json", report.dump(2) + "\n");
  std::cout << report.dump() << '\n';
  return kExitOk;
}

int cmd_ope(const std::string& dataset_path, const std::string& checkpoints_dir,
            int gen_policies, long policy_steps, const cdc::OpeConfig& base_cfg,
            const cdc::CdcConfig& policy_base, const std::string& out_dir,
            const std::string& command_line) {
  Timer timer;
  const cdc::TransitionDataset data = cdc::load_dataset(dataset_path);
  cdc::PointMassEnv env = cdc::make_env(data.env_name);
  fs::create_directories(out_dir);

  cdc::RunManifest manifest;
  manifest.command = command_line;
  manifest.seeds = {{"seed", base_cfg.seed}};
  manifest.add_input(dataset_path);

  std::vector<cdc::Agent> policies;
  if (gen_policies > 0) {
    const double etas[4] = {0.0, 0.5, 1.0, 5.0};
    const double lambdas[4] = {0.0, 0.1, 0.5, 2.0};
    for (int i = 0; i < gen_policies; ++i) {
      cdc::CdcConfig cfg = policy_base;
      cfg.eta = etas[i % 4];
      cfg.lambda = lambdas[(i / 2) % 4];
      cfg.seed = policy_base.seed + std::uint64_t(i);
      cfg.total_steps = std::max<long>(50, policy_steps * (i + 1) / gen_policies);
      const std::string run_dir = out_dir + "/policy_" + std::to_string(i);
      policies.push_back(
          run_training(cfg, dataset_path, data, run_dir, command_line + " [gen-policy]").agent);
    }
  } else {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(checkpoints_dir))
      if (entry.path().extension() == ".ckpt") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      policies.push_back(cdc::load_agent(f.string()));
      manifest.add_input(f.string());
    }
  }
  if (policies.size() < 2) {
    std::cerr << "error: OPE benchmark needs at least two policies (got " << policies.size()
              << ")\n";
    return kExitUsage;
  }
  if (policies.size() < 10)
    std::cerr << "note: fewer than 10 policies; correlations will be noisy\n";

  const auto [plain, penalized] = cdc::ope_benchmark(data, env, policies, base_cfg);
  auto report_json = [](const cdc::OpeReport& r) {
    return json{{"eta", r.eta},
                {"seed", r.seed},
                {"estimates", r.estimates},
                {"actuals", r.actuals},
                {"pearson", r.pearson_r}};
  };
  json out = {{"plain_fqe", report_json(plain)}, {"penalized_fqe", report_json(penalized)}};
  std::cout << out.dump() << '\n';
  cdc::write_file(out_dir + "/ope_report.json", out.dump(2) + "\n");
  std::ofstream csv(out_dir + "/ope_report.csv");
  csv << "policy,actual_return,estimate_eta0,estimate_eta" << fmt_double(penalized.eta) << "\n";
  for (std::size_t p = 0; p < plain.estimates.size(); ++p)
    csv << p << ',' << fmt_double(plain.actuals[p]) << ',' << fmt_double(plain.estimates[p])
        << ',' << fmt_double(penalized.estimates[p]) << '\n';
  csv << "pearson,," << fmt_double(plain.pearson_r) << ',' << fmt_double(penalized.pearson_r)
      << '\n';
  csv.close();
  manifest.add_output(out_dir + "/ope_report.json");
  manifest.add_output(out_dir + "/ope_report.csv");
  manifest.config = {{"fqe_steps", base_cfg.steps},
                     {"eta", base_cfg.eta},
                     {"policies", policies.size()},
                     {"gen_policies", gen_policies}};
  manifest.duration_seconds = timer.seconds();
  manifest.save(out_dir + "/ope.manifest.json");
  return kExitOk;
}

int cmd_verify(const std::string& preset, std::uint64_t seed, const std::string& out_path) {
  cdc::VerifyOptions opt;
  opt.seed = seed;
  if (preset == "quick") {
    opt.mdp_count = 10;
    opt.pairs_per_mdp = 5;
    opt.mc_trials = 100000;
    opt.ordering_draws = 25;
    opt.ordering_trials = 20000;
    opt.lemma1_instances = 5;
  } else if (preset != "full") {
    std::cerr << "error: unknown preset '" << preset << "' (valid: full, quick)\n";
    return kExitUsage;
  }
  const auto checks = cdc::run_verify_suite(opt);
  bool all_pass = true;
  json arr = json::array();
  for (const auto& c : checks) {
    all_pass = all_pass && c.pass;
    arr.push_back({{"name", c.name}, {"pass", c.pass}, {"stats", c.stats}});
    std::cerr << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << '\n';
  }
  json out = {{"suite", "verify"}, {"preset", preset}, {"seed", seed},
              {"all_pass", all_pass}, {"checks", arr}};
  std::cout << out.dump() << '\n';
  if (!out_path.empty()) cdc::write_file(out_path, out.dump(2) + "\n");
  return all_pass ? kExitOk : 1;
}

int cmd_report(const std::string& dir) {
  std::vector<fs::path> files;
  if (fs::exists(dir))
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (name.size() > 14 && name.substr(name.size() - 14) == ".manifest.json")
        files.push_back(entry.path());
    }
  std::sort(files.begin(), files.end());
  json rows = json::array();
  for (const auto& f : files) {
    const json m = cdc::load_manifest(f.string());
    rows.push_back({{"manifest", f.string()},
                    {"command", m.value("command", "")},
                    {"duration_seconds", m.value("duration_seconds", 0.0)},
                    {"inputs", m.contains("inputs") ? m["inputs"].size() : 0},
                    {"outputs", m.contains("outputs") ? m["outputs"].size() : 0}});
  }
  json out = {{"manifests", rows.size()}, {"rows", rows}};
  std::cout << out.dump() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"offline actor-critic batch RL engine"};
  app.require_subcommand(1);

  std::string command_line;
  for (int i = 0; i < argc; ++i) {
    if (i) command_line += ' ';
    command_line += argv[i];
  }

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate an offline dataset");
  std::string gen_env = "pointmass1d", gen_tier = "medium", gen_out = "dataset.bin";
  std::string gen_csv;
  long gen_n = 1000;
  std::uint64_t gen_seed = 0;
  int gen_ds = 0, gen_da = 0;
  gen->add_option("--env", gen_env, "environment name");
  gen->add_option("--tier", gen_tier, "behavior tier (random|medium|expert)");
  gen->add_option("--n", gen_n, "number of transitions");
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--out", gen_out, "output dataset path");
  gen->add_option("--from-csv", gen_csv, "import transitions from a CSV file instead");
  gen->add_option("--ds", gen_ds, "state dimension (CSV import)");
  gen->add_option("--da", gen_da, "action dimension (CSV import)");

  // train
  auto* train = app.add_subcommand("train", "train an agent on a dataset");
  std::string train_cfg, train_data, train_out = "run";
  train->add_option("--config", train_cfg, "key=value config file")->required();
  train->add_option("--dataset", train_data, "dataset path")->required();
  train->add_option("--out", train_out, "output directory");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint in an environment");
  std::string eval_ckpt, eval_env, eval_out = ".";
  int eval_episodes = 10, eval_candidates = 15;
  std::uint64_t eval_seed = 0;
  eval->add_option("--checkpoint", eval_ckpt, "agent checkpoint")->required();
  eval->add_option("--env", eval_env, "environment name")->required();
  eval->add_option("--episodes", eval_episodes, "evaluation episodes");
  eval->add_option("--seed", eval_seed, "master seed");
  eval->add_option("--candidates", eval_candidates, "sampled actions per step");
  eval->add_option("--out", eval_out, "directory for eval.json and manifest");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "run the four-variant penalty ablation");
  std::string abl_cfg, abl_data, abl_out = "ablation";
  ablate->add_option("--config", abl_cfg, "base config file")->required();
  ablate->add_option("--dataset", abl_data, "dataset path")->required();
  ablate->add_option("--out", abl_out, "output directory");

  // ope
  auto* ope = app.add_subcommand("ope", "offline policy evaluation benchmark");
  std::string ope_data, ope_ckpts, ope_out = "ope";
  int ope_gen = 0;
  long ope_policy_steps = 1500;
  cdc::OpeConfig ope_cfg;
  cdc::CdcConfig ope_policy_base;
  long ope_hidden_layers = 2, ope_hidden_units = 32;
  ope->add_option("--dataset", ope_data, "dataset path")->required();
  ope->add_option("--checkpoints", ope_ckpts, "directory of .ckpt policies to score");
  ope->add_option("--gen-policies", ope_gen, "train this many policies first");
  ope->add_option("--policy-steps", ope_policy_steps, "max training steps per generated policy");
  ope->add_option("--fqe-steps", ope_cfg.steps, "FQE iterations per policy");
  ope->add_option("--fqe-batch", ope_cfg.batch_size, "FQE batch size");
  ope->add_option("--eta", ope_cfg.eta, "penalty coefficient for the penalized variant");
  ope->add_option("--seed", ope_cfg.seed, "master seed");
  ope->add_option("--hidden-layers", ope_hidden_layers, "hidden layers for FQE/policy nets");
  ope->add_option("--hidden-units", ope_hidden_units, "hidden units per layer");

  ope->add_option("--out", ope_out, "output directory");

  // verify
  auto* verify = app.add_subcommand("verify", "run the theory verification suite");
  std::string verify_preset = "full", verify_out;
  std::uint64_t verify_seed = cdc::VerifyOptions{}.seed;
  verify->add_option("--preset", verify_preset, "full or quick");
  verify->add_option("--seed", verify_seed, "suite seed");
  verify->add_option("--out", verify_out, "also write the JSON report here");

  // report
  auto* report = app.add_subcommand("report", "summarize run manifests in a directory");
  std::string report_dir = ".";
  report->add_option("--dir", report_dir, "directory to scan");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      if (gen_csv.empty()) {
        try {
          cdc::make_env(gen_env);
          cdc::tier_from_name(gen_tier);
        } catch (const cdc::ConfigError& e) {
          std::cerr << "error: " << e.what() << "\n";
          std::cerr << "valid environments:";
          for (const auto& n : cdc::env_names()) std::cerr << ' ' << n;
          std::cerr << "\nvalid tiers:";
          for (const auto& n : cdc::tier_names()) std::cerr << ' ' << n;
          std::cerr << '\n';
          return kExitUsage;
        }
      }
      return cmd_gen_data(gen_env, gen_tier, gen_n, gen_seed, gen_out, gen_csv, gen_ds, gen_da,
                          command_line);
    }
    if (train->parsed()) return cmd_train(train_cfg, train_data, train_out, command_line);
    if (eval->parsed())
      return cmd_eval(eval_ckpt, eval_env, eval_episodes, eval_seed, eval_candidates, eval_out,
                      command_line);
    if (ablate->parsed()) return cmd_ablate(abl_cfg, abl_data, abl_out, command_line);
    if (ope->parsed()) {
      if (ope_gen <= 0 && ope_ckpts.empty()) {
        std::cerr << "error: give --checkpoints or --gen-policies\n";
        return kExitUsage;
      }
      ope_cfg.hidden.assign(std::size_t(ope_hidden_layers), int(ope_hidden_units));
      ope_policy_base.hidden = ope_cfg.hidden;
      ope_policy_base.seed = ope_cfg.seed;
      ope_policy_base.eval_interval = 1000000000L;  // no periodic eval for generated policies
      return cmd_ope(ope_data, ope_ckpts, ope_gen, ope_policy_steps, ope_cfg, ope_policy_base,
                     ope_out, command_line);
    }
    if (verify->parsed()) return cmd_verify(verify_preset, verify_seed, verify_out);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const cdc::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const cdc::ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const cdc::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const cdc::DegenerateReferenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const cdc::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const cdc::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}
