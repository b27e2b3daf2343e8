#include "cli/commands.hpp"

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "chasedpo/cofs_trainer.hpp"
#include "chasedpo/datagen.hpp"
#include "chasedpo/evalkit.hpp"
#include "chasedpo/ofs_trainer.hpp"
#include "cli/config.hpp"
#include "cli/io.hpp"
#include "cli/manifest.hpp"

namespace chasedpo::cli {

namespace {

using Clock = std::chrono::steady_clock;

// Bookkeeping shared by every command: what was read, what was written.
class Invocation {
 public:
  Invocation(std::string command, std::vector<std::string> args)
      : command_(std::move(command)), args_(std::move(args)), start_(Clock::now()) {}

  void input(const fs::path& p) { inputs_.push_back(p); }
  void output(const fs::path& p, const std::string& content) {
    write_file(p, content);
    outputs_.push_back(p);
  }

  void finish(const RunConfig& cfg, const fs::path& manifest) const {
    RunManifest m;
    m.command = command_;
    m.args = args_;
    m.cwd = fs::current_path().string();
    m.config = cfg.entries();
    m.seed = cfg.train.seed;
    for (const auto& p : inputs_) m.inputs.emplace_back(p.string(), sha256_file(p));
    for (const auto& p : outputs_) m.outputs.emplace_back(p.string(), sha256_file(p));
    m.duration_s = std::chrono::duration<double>(Clock::now() - start_).count();
    write_file(manifest, manifest_to_json(m));
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  Clock::time_point start_;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> outputs_;
};

RunConfig load_config(Invocation& inv, const std::optional<std::string>& path,
                      const std::optional<std::uint64_t>& seed) {
  if (path) inv.input(*path);
  return resolve_config(path, seed);
}

std::vector<PreferenceTriple> load_data(Invocation& inv, const ReferenceModel& model,
                                        const fs::path& path) {
  inv.input(path);
  auto triples = load_triples(path);
  check_triples(model, triples, path);
  return triples;
}

Checkpoint load_ckpt(Invocation& inv, const fs::path& path) {
  inv.input(path);
  return load_checkpoint(path);
}

DomainSpec domain_for(int id, const RunConfig& cfg, std::uint64_t seed) {
  auto d = make_domain(id, cfg.policy.vocab_size, seed);
  d.prompt_len = cfg.prompt_len;
  d.response_len = cfg.response_len;
  return d;
}

// Mean DPO loss of the step-0 fast module on the first online batch.
double first_step_loss(const ReferenceModel& model, std::span<const TrailPoint> trail,
                       std::span<const PreferenceTriple> data, const TrainConfig& cfg) {
  if (trail.empty()) throw CliError(kDataFormat, "empty parameter trail");
  if (data.empty()) throw CliError(kDataFormat, "empty dataset");
  const auto& p0 = trail.front();
  const auto& fast = (p0.fast_is_a || !p0.module_b) ? p0.module_a : *p0.module_b;
  const auto batch = cache_triples(model, data.first(std::min(cfg.batch_size, data.size())));
  return mean_dpo_loss(batch, fast, cfg.beta_dpo);
}

Json bound_json(const BoundReport& b, double rhs_plain, double rhs_fs) {
  Json j = Json::object();
  j["G"] = b.G;
  j["d"] = b.d;
  j["mode_fs"] = b.mode_fs;
  j["rhs"] = b.rhs;
  j["rhs_mode_fs_0"] = rhs_plain;
  j["rhs_mode_fs_1"] = rhs_fs;
  j["holds"] = b.holds;
  return j;
}

// ---- commands -----------------------------------------------------------------

struct GenDataArgs {
  int domain = 1;
  std::size_t n = 0;
  std::optional<std::size_t> vocab;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a, Invocation inv) {
  auto cfg = load_config(inv, a.config, a.seed);
  if (a.vocab) cfg.policy.vocab_size = *a.vocab;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw CliError(kUsage, std::string("invalid config: ") + e.what());
  }
  const ReferenceModel model(cfg.policy);
  const auto d = domain_for(a.domain, cfg, cfg.train.seed);
  const auto triples = gen_stream(model, {d, a.n, cfg.train.seed});
  inv.output(a.out, triples_to_jsonl(triples));
  inv.finish(cfg, manifest_path_for(a.out));
  return kOk;
}

struct TrainArgs {
  std::string mode;
  std::string data;
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string metrics;
};

int cmd_train(const TrainArgs& a, Invocation inv) {
  const auto cfg = load_config(inv, a.config, a.seed);
  const ReferenceModel model(cfg.policy);
  const auto data = load_data(inv, model, a.data);
  AdapterParams final_adapter;
  std::vector<StepLog> logs;
  std::vector<TrailPoint> trail;
  if (a.mode == "dpo") {
    auto res = run_dpo(model, data, cfg.train);
    final_adapter = std::move(res.final_adapter);
    logs = std::move(res.logs);
    trail = std::move(res.trail);
  } else {
    auto res = run_ofs(model, data, cfg.train);
    final_adapter = std::move(res.final_fast);
    logs = std::move(res.logs);
    trail = std::move(res.trail);
  }
  inv.output(a.out, checkpoint_to_json(cfg.policy, final_adapter));
  inv.output(a.metrics, metrics_to_csv(logs));
  inv.output(trail_path_for(a.out), trail_to_jsonl(trail));
  inv.finish(cfg, manifest_path_for(a.out));
  return kOk;
}

struct CofsArgs {
  std::string task1;
  std::string task2;
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> mem_cap;
  std::optional<double> grid_step;
  std::optional<std::string> combine_mode;
  std::string out_dir;
};

int cmd_cofs(const CofsArgs& a, Invocation inv) {
  auto cfg = load_config(inv, a.config, a.seed);
  if (a.mem_cap) cfg.combine.memory_capacity = *a.mem_cap;
  if (a.grid_step) cfg.combine.grid_step = *a.grid_step;
  if (a.combine_mode) {
    cfg.combine.mode = *a.combine_mode == "constrained" ? CombineMode::constrained
                                                        : CombineMode::independent;
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw CliError(kUsage, std::string("invalid config: ") + e.what());
  }
  const ReferenceModel model(cfg.policy);
  const auto data1 = load_data(inv, model, a.task1);
  const auto data2 = load_data(inv, model, a.task2);
  if (data1.empty() || data2.empty()) throw CliError(kDataFormat, "task data must be nonempty");

  const auto res = run_cofs(model, data1, data2, cfg.train, cfg.combine);
  const fs::path dir(a.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError(kIoError, "cannot create " + dir.string() + ": " + ec.message());

  Json betas = Json::object();
  betas["beta1"] = res.beta1;
  betas["beta2"] = res.beta2;
  inv.output(dir / "ckpt_task1.json", checkpoint_to_json(cfg.policy, res.task1));
  inv.output(dir / "ckpt_task2.json", checkpoint_to_json(cfg.policy, res.task2));
  inv.output(dir / "ckpt_combined.json", checkpoint_to_json(cfg.policy, res.combined));
  inv.output(dir / "betas.json", dump(betas) + "\n");
  inv.output(dir / "surface.csv", surface_to_csv(res.surface));
  inv.output(dir / "mem1.jsonl", triples_to_jsonl(res.mem1.items()));
  inv.output(dir / "mem2.jsonl", triples_to_jsonl(res.mem2.items()));
  inv.output(dir / "metrics_task1.csv", metrics_to_csv(res.run1.logs));
  inv.output(dir / "metrics_task2.csv", metrics_to_csv(res.run2.logs));
  inv.output(trail_path_for(dir / "ckpt_task1.json"), trail_to_jsonl(res.run1.trail));
  inv.output(trail_path_for(dir / "ckpt_task2.json"), trail_to_jsonl(res.run2.trail));
  inv.finish(cfg, dir / "manifest.json");
  return kOk;
}

struct EvalArgs {
  std::string ckpt;
  int domain = 1;
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> baseline;
  std::optional<std::string> config;
  std::string report;
};

int cmd_eval(const EvalArgs& a, Invocation inv) {
  auto cfg = load_config(inv, a.config, a.seed);
  const auto ck = load_ckpt(inv, a.ckpt);
  std::optional<Checkpoint> base;
  if (a.baseline && *a.baseline != "none") base = load_ckpt(inv, *a.baseline);
  cfg.policy.vocab_size = ck.spec.vocab_size;
  cfg.policy.feature_dim = ck.spec.feature_dim;
  cfg.policy.base_seed = ck.spec.base_seed;

  const std::uint64_t seed = cfg.train.seed;
  const ReferenceModel model(ck.spec);
  const auto d = domain_for(a.domain, cfg, seed);
  const auto test = gen_stream(model, {d, a.n, derive_seed(seed, 1)});

  Json report = Json::object();
  const double score = domain_score(model, &ck.adapter, d, a.n, Rng{seed});
  report["domain_score"] = score;
  report["win_rate"] = win_rate(model, &ck.adapter, d, test, Rng{derive_seed(seed, 2)});
  report["rouge1"] = mean_rouge1(model, &ck.adapter, test, Rng{derive_seed(seed, 3)});
  if (base) {
    const ReferenceModel base_model(base->spec);
    const auto base_d = domain_for(a.domain, cfg, seed);
    const double base_score = domain_score(base_model, &base->adapter, base_d, a.n, Rng{seed});
    report["sfr"] = sfr(base_score, score);
  }
  inv.output(a.report, dump(report) + "\n");
  inv.finish(cfg, manifest_path_for(a.report));
  return kOk;
}

struct RegretArgs {
  std::string metrics;
  std::string ckpt;
  std::string data;
  std::optional<std::string> trail;
  std::optional<std::string> metrics2;
  std::optional<std::string> ckpt2;
  std::optional<std::string> data2;
  std::optional<std::string> trail2;
  double delta0 = 0.05;
  int mode_fs = 1;
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::string report;
};

int cmd_regret(const RegretArgs& a, Invocation inv) {
  const bool dual = a.metrics2 || a.ckpt2 || a.data2;
  if (dual && !(a.metrics2 && a.ckpt2 && a.data2)) {
    throw CliError(kUsage, "--metrics2, --ckpt2 and --data2 must be given together");
  }
  const auto cfg = load_config(inv, a.config, a.seed);
  const auto ck = load_ckpt(inv, a.ckpt);
  const ReferenceModel model(ck.spec);
  const auto data = load_data(inv, model, a.data);
  if (data.empty()) throw CliError(kDataFormat, a.data + ": empty dataset");
  inv.input(a.metrics);
  const auto logs = load_metrics(a.metrics);
  if (logs.empty()) throw CliError(kDataFormat, a.metrics + ": no metric rows");
  const fs::path trail_path = a.trail ? fs::path(*a.trail) : trail_path_for(a.ckpt);
  inv.input(trail_path);
  const auto trail = load_trail(trail_path);

  // The optimum starts from the same draw as a single-module run at this rank.
  PolicySpec init_spec = ck.spec;
  init_spec.rank = trail.front().module_a.rank();
  const auto init = init_single(init_spec, cfg.train);
  const bool mode_fs = a.mode_fs != 0;

  Json report = Json::object();
  if (!dual) {
    const auto cached = cache_triples(model, data);
    const auto star = offline_optimum(cached, init, cfg.train, cfg.optimum);
    auto r = empirical_regret(cached, ck.adapter, star.adapter, cfg.train.beta_dpo, logs);
    r.loss_first_step = first_step_loss(model, trail, data, cfg.train);
    const double G = estimate_G(logs);
    const double d = estimate_d(trail);
    const auto b = theorem1_rhs(r, G, d, a.delta0, mode_fs, r.T);
    const auto b0 = theorem1_rhs(r, G, d, a.delta0, false, r.T);
    const auto b1 = theorem1_rhs(r, G, d, a.delta0, true, r.T);
    report["T"] = r.T;
    report["mean_loss_final"] = r.mean_loss_final;
    report["mean_loss_star"] = r.mean_loss_star;
    report["regret"] = r.regret;
    report["loss_first_step"] = *r.loss_first_step;
    report["star_best_epoch"] = star.best_epoch;
    report["delta0"] = a.delta0;
    report["delta"] = *b.delta;
    report["bound"] = bound_json(b, b0.rhs, b1.rhs);
  } else {
    const auto ck2 = load_ckpt(inv, *a.ckpt2);
    if (!(ck2.spec.vocab_size == ck.spec.vocab_size && ck2.spec.feature_dim == ck.spec.feature_dim &&
          ck2.spec.base_seed == ck.spec.base_seed)) {
      throw CliError(kDataFormat, "checkpoints belong to different base models");
    }
    const auto data2 = load_data(inv, model, *a.data2);
    if (data2.empty()) throw CliError(kDataFormat, *a.data2 + ": empty dataset");
    inv.input(*a.metrics2);
    const auto logs2 = load_metrics(*a.metrics2);
    if (logs2.empty()) throw CliError(kDataFormat, *a.metrics2 + ": no metric rows");
    const fs::path trail2_path = a.trail2 ? fs::path(*a.trail2) : trail_path_for(*a.ckpt2);
    inv.input(trail2_path);
    const auto trail2 = load_trail(trail2_path);

    const auto c1 = cache_triples(model, data);
    const auto c2 = cache_triples(model, data2);
    std::vector<CachedTriple> both(c1);
    both.insert(both.end(), c2.begin(), c2.end());
    const auto star = offline_optimum(both, init, cfg.train, cfg.optimum);
    const auto r = dual_task_regret(c1, c2, ck.adapter, ck2.adapter, star.adapter,
                                    cfg.train.beta_dpo);
    const double l1 = first_step_loss(model, trail, data, cfg.train) +
                      first_step_loss(model, trail2, data2, cfg.train);
    const double G = std::max(estimate_G(logs), estimate_G(logs2));
    const double d = std::max(estimate_d(trail), estimate_d(trail2));
    const auto rhs = [&](bool fs_mode) {
      return theorem2_rhs(l1, r.mean_loss_star, a.delta0, a.delta0, G, d, fs_mode, logs.size(),
                          logs2.size(), r.regret);
    };
    const auto b = rhs(mode_fs);
    report["T1"] = logs.size();
    report["T2"] = logs2.size();
    report["mean_loss_final"] = r.mean_loss_final;
    report["mean_loss_star"] = r.mean_loss_star;
    report["regret"] = r.regret;
    report["l1"] = l1;
    report["B"] = *b.B;
    report["c"] = *b.c;
    report["star_best_epoch"] = star.best_epoch;
    report["delta1"] = a.delta0;
    report["delta2"] = a.delta0;
    report["bound"] = bound_json(b, rhs(false).rhs, rhs(true).rhs);
  }
  inv.output(a.report, dump(report) + "\n");
  inv.finish(cfg, manifest_path_for(a.report));
  return kOk;
}

struct GradcheckArgs {
  std::optional<std::uint64_t> seed;
  std::size_t n = 32;
  std::optional<std::string> report;
};

Json gradcheck_json(const GradCheckReport& r) {
  Json j = Json::object();
  j["n"] = r.n_instances;
  j["seed"] = r.seed;
  j["fd_step"] = r.fd_step;
  j["tolerance"] = r.tolerance;
  j["max_rel_error"] = r.max_rel_error;
  j["pass"] = r.pass();
  Json paths = Json::object();
  for (const auto& p : r.paths) paths[p.path] = p.max_rel_error;
  j["paths"] = paths;
  if (!r.pass()) {
    Json w = Json::object();
    w["index"] = r.worst.index;
    w["path"] = r.worst.path;
    w["rel_error"] = r.worst.rel_error;
    w["vocab"] = r.worst.spec.vocab_size;
    w["hdim"] = r.worst.spec.feature_dim;
    w["rank"] = r.worst.spec.rank;
    w["base_seed"] = r.worst.spec.base_seed;
    w["fast_a"] = matrix_to_json(r.worst.fast.a);
    w["fast_b"] = matrix_to_json(r.worst.fast.b);
    w["slow_a"] = matrix_to_json(r.worst.slow.a);
    w["slow_b"] = matrix_to_json(r.worst.slow.b);
    Json batch = Json::array();
    for (const auto& t : r.worst.batch) batch.push_back(triple_to_json(t));
    w["batch"] = batch;
    j["worst"] = w;
  }
  return j;
}

int cmd_gradcheck(const GradcheckArgs& a, Invocation inv) {
  const auto cfg = resolve_config(std::nullopt, a.seed);
  const auto r = grad_check(a.n, cfg.train.seed, cfg.train.beta_dpo);
  const auto text = dump(gradcheck_json(r)) + "\n";
  if (a.report) {
    inv.output(*a.report, text);
    inv.finish(cfg, manifest_path_for(*a.report));
  } else {
    std::cout << text;
  }
  if (!r.pass()) {
    std::cerr << "gradcheck: max relative error " << format_double(r.max_rel_error) << " on path "
              << r.worst.path << " exceeds " << format_double(r.tolerance) << "\n";
    return kCheckFailed;
  }
  return kOk;
}

// Re-runs a recorded command with the recorded seed and compares output digests.
int cmd_replay(const std::string& manifest_path) {
  const auto m = load_manifest(manifest_path);
  const auto saved_cwd = fs::current_path();
  std::error_code ec;
  fs::current_path(m.cwd, ec);
  if (ec) throw CliError(kMissingFile, "cannot enter " + m.cwd + ": " + ec.message());
  struct Restore {
    fs::path dir;
    std::optional<std::string> env;
    ~Restore() {
      std::error_code ignored;
      fs::current_path(dir, ignored);
      if (env) {
        ::setenv(kSeedEnvVar, env->c_str(), 1);
      } else {
        ::unsetenv(kSeedEnvVar);
      }
    }
  } restore{saved_cwd, std::getenv(kSeedEnvVar) ? std::optional<std::string>(std::getenv(kSeedEnvVar))
                                                 : std::nullopt};

  for (const auto& [path, digest] : m.inputs) {
    if (sha256_file(path) != digest) {
      std::cerr << "replay: input changed since the recorded run: " << path << "\n";
      return kCheckFailed;
    }
  }
  ::setenv(kSeedEnvVar, std::to_string(m.seed).c_str(), 1);
  std::vector<std::string> args{m.command};
  args.insert(args.end(), m.args.begin(), m.args.end());
  const int code = run(args);
  if (code != kOk) return code;

  int mismatches = 0;
  for (const auto& [path, digest] : m.outputs) {
    if (sha256_file(path) != digest) {
      std::cerr << "replay: output differs: " << path << "\n";
      ++mismatches;
    }
  }
  if (mismatches > 0) return kCheckFailed;
  std::cout << "replay: " << m.outputs.size() << " outputs identical\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Fast/slow online DPO on a toy low-rank policy", "chasedpo"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a preference dataset (JSONL)");
  gen_cmd->add_option("--domain", gen.domain, "Domain id")->required()->check(CLI::IsMember({1, 2}));
  gen_cmd->add_option("--n", gen.n, "Number of triples")->required();
  gen_cmd->add_option("--vocab", gen.vocab, "Vocabulary size");
  gen_cmd->add_option("--seed", gen.seed, "Stream seed");
  gen_cmd->add_option("--config", gen.config, "Config file");
  gen_cmd->add_option("--out", gen.out, "Output JSONL")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Online DPO or fast/slow training");
  train_cmd->add_option("--mode", train.mode, "dpo or ofs")->required()->check(
      CLI::IsMember({"dpo", "ofs"}));
  train_cmd->add_option("--data", train.data, "Dataset JSONL")->required();
  train_cmd->add_option("--config", train.config, "Config file");
  train_cmd->add_option("--seed", train.seed, "Initialization seed");
  train_cmd->add_option("--out", train.out, "Checkpoint JSON")->required();
  train_cmd->add_option("--metrics", train.metrics, "Metrics CSV")->required();

  CofsArgs cofs;
  auto* cofs_cmd = app.add_subcommand("cofs", "Two-task training with combined adapters");
  cofs_cmd->add_option("--task1", cofs.task1, "Task-1 dataset")->required();
  cofs_cmd->add_option("--task2", cofs.task2, "Task-2 dataset")->required();
  cofs_cmd->add_option("--config", cofs.config, "Config file");
  cofs_cmd->add_option("--seed", cofs.seed, "Initialization seed");
  cofs_cmd->add_option("--mem-cap", cofs.mem_cap, "Per-task memory capacity");
  cofs_cmd->add_option("--grid-step", cofs.grid_step, "Combination grid step");
  cofs_cmd->add_option("--combine-mode", cofs.combine_mode, "independent or constrained")
      ->check(CLI::IsMember({"independent", "constrained"}));
  cofs_cmd->add_option("--out-dir", cofs.out_dir, "Output directory")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a domain");
  eval_cmd->add_option("--ckpt", eval.ckpt, "Checkpoint JSON")->required();
  eval_cmd->add_option("--domain", eval.domain, "Domain id")->required()->check(CLI::IsMember({1, 2}));
  eval_cmd->add_option("--n", eval.n, "Number of prompts")->required()->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", eval.seed, "Evaluation seed");
  eval_cmd->add_option("--baseline-ckpt", eval.baseline, "Baseline checkpoint or 'none'");
  eval_cmd->add_option("--config", eval.config, "Config file");
  eval_cmd->add_option("--report", eval.report, "Report JSON")->required();

  RegretArgs regret;
  auto* regret_cmd = app.add_subcommand("regret", "Empirical regret and its lower bound");
  regret_cmd->add_option("--metrics", regret.metrics, "Metrics CSV")->required();
  regret_cmd->add_option("--ckpt", regret.ckpt, "Final checkpoint")->required();
  regret_cmd->add_option("--data", regret.data, "Dataset the run consumed")->required();
  regret_cmd->add_option("--trail", regret.trail, "Parameter trail (default <ckpt>.trail.jsonl)");
  regret_cmd->add_option("--metrics2", regret.metrics2, "Task-2 metrics CSV");
  regret_cmd->add_option("--ckpt2", regret.ckpt2, "Task-2 final checkpoint");
  regret_cmd->add_option("--data2", regret.data2, "Task-2 dataset");
  regret_cmd->add_option("--trail2", regret.trail2, "Task-2 parameter trail");
  regret_cmd->add_option("--delta0", regret.delta0, "Failure probability per concentration step")
      ->check(CLI::Range(0.0, 1.0));
  regret_cmd->add_option("--mode-fs", regret.mode_fs, "1 for the fast/slow bound")
      ->check(CLI::IsMember({0, 1}));
  regret_cmd->add_option("--config", regret.config, "Config file");
  regret_cmd->add_option("--seed", regret.seed, "Seed of the optimum's starting point");
  regret_cmd->add_option("--report", regret.report, "Report JSON")->required();

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  grad_cmd->add_option("--seed", grad.seed, "Instance seed");
  grad_cmd->add_option("--n", grad.n, "Number of random instances")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--report", grad.report, "Report JSON (stdout when absent)");

  std::string manifest;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run a command from its manifest");
  replay_cmd->add_option("--manifest", manifest, "Manifest JSON")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  const auto sub = app.get_subcommands().front();
  Invocation inv(sub->get_name(), std::vector<std::string>(args.begin() + 1, args.end()));
  try {
    if (sub == gen_cmd) return cmd_gen_data(gen, std::move(inv));
    if (sub == train_cmd) return cmd_train(train, std::move(inv));
    if (sub == cofs_cmd) return cmd_cofs(cofs, std::move(inv));
    if (sub == eval_cmd) return cmd_eval(eval, std::move(inv));
    if (sub == regret_cmd) return cmd_regret(regret, std::move(inv));
    if (sub == grad_cmd) return cmd_gradcheck(grad, std::move(inv));
    return cmd_replay(manifest);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code();
  } catch (const NumericError& e) {
    std::cerr << "error: training diverged (" << e.what() << ")\n";
    return kDiverged;
  } catch (const DegenerateDomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
}

}  // namespace chasedpo::cli
