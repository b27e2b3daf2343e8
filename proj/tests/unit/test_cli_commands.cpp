#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "harness.hpp"
#include "cli/io.hpp"

using namespace chasedpo;
using namespace chasedpo::cli;
using harness::TempDir;

namespace {

harness::RunResult run_cli(const std::vector<std::string>& args, const std::vector<std::string>& env = {}) {
  return harness::run(CHASEDPO_BIN, args, env);
}

Json read_json(const std::string& path) { return Json::parse(harness::slurp(path)); }

// Small config so each training command finishes in well under a second.
const char* kFastConfig =
    "optimum_epochs = 40\n"
    "swap_period = 5\n";

}  // namespace

TEST(CliUsage, UnknownFlagsAndMissingArguments) {
  EXPECT_EQ(run_cli({}).code, kUsage);
  EXPECT_EQ(run_cli({"frobnicate"}).code, kUsage);
  EXPECT_EQ(run_cli({"gen-data", "--domain", "3", "--n", "5", "--out", "x"}).code, kUsage);
  EXPECT_EQ(run_cli({"gen-data", "--domain", "1", "--n", "5", "--bogus", "1", "--out", "x"}).code, kUsage);
  EXPECT_EQ(run_cli({"train", "--mode", "sgd", "--data", "d", "--out", "o", "--metrics", "m"}).code, kUsage);
  EXPECT_EQ(run_cli({"--help"}).code, kOk);
}

TEST(CliUsage, BadConfigKeyIsUsageError) {
  TempDir dir("badcfg");
  harness::spit(dir / "c.cfg", "alpah = 0.3\n");
  const auto r = run_cli({"gen-data", "--domain", "1", "--n", "3", "--config", dir / "c.cfg", "--out", dir / "d.jsonl"});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("c.cfg:1"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({"gen-data", "--domain", "1", "--n", "3", "--config", dir / "none.cfg", "--out", dir / "d.jsonl"}).code,
            kMissingFile);
}

TEST(GenData, DeterministicAndEmptyAllowed) {
  TempDir dir("gen");
  ASSERT_EQ(run_cli({"gen-data", "--domain", "1", "--n", "20", "--seed", "4", "--out", dir / "a.jsonl"}).code, kOk);
  ASSERT_EQ(run_cli({"gen-data", "--domain", "1", "--n", "20", "--seed", "4", "--out", dir / "b.jsonl"}).code, kOk);
  EXPECT_EQ(harness::slurp(dir / "a.jsonl"), harness::slurp(dir / "b.jsonl"));
  const auto triples = load_triples(dir / "a.jsonl");
  ASSERT_EQ(triples.size(), 20u);
  for (const auto& t : triples) EXPECT_EQ(t.domain, 1);
  EXPECT_TRUE(harness::fs::exists(dir / "a.jsonl.manifest.json"));

  ASSERT_EQ(run_cli({"gen-data", "--domain", "2", "--n", "0", "--out", dir / "e.jsonl"}).code, kOk);
  EXPECT_EQ(harness::slurp(dir / "e.jsonl"), "");

  // The environment seed applies when no flag is given; the flag wins over it.
  ASSERT_EQ(run_cli({"gen-data", "--domain", "1", "--n", "20", "--out", dir / "c.jsonl"}, {"CHASE_DPO_SEED=4"}).code, kOk);
  EXPECT_EQ(harness::slurp(dir / "c.jsonl"), harness::slurp(dir / "a.jsonl"));
  ASSERT_EQ(run_cli({"gen-data", "--domain", "1", "--n", "20", "--seed", "5", "--out", dir / "d.jsonl"},
                {"CHASE_DPO_SEED=4"}).code, kOk);
  EXPECT_NE(harness::slurp(dir / "d.jsonl"), harness::slurp(dir / "a.jsonl"));
}

TEST(Train, DataErrorsMapToExitCodes) {
  TempDir dir("trainerr");
  const std::string good = R"({"prompt":[1],"chosen":[2],"rejected":[3],"domain":1})";
  harness::spit(dir / "bad.jsonl", good + "\n" + good + "\n{\"prompt\":[1]}\n");
  const auto r = run_cli({"train", "--mode", "dpo", "--data", dir / "bad.jsonl", "--out", dir / "c.json", "--metrics", dir / "m.csv"});
  EXPECT_EQ(r.code, kDataFormat);
  EXPECT_NE(r.err.find("bad.jsonl:3"), std::string::npos) << r.err;
  harness::spit(dir / "range.jsonl", R"({"prompt":[1],"chosen":[99],"rejected":[3],"domain":1})" "\n");
  EXPECT_EQ(run_cli({"train", "--mode", "dpo", "--data", dir / "range.jsonl", "--out", dir / "c.json", "--metrics", dir / "m.csv"}).code,
            kDataFormat);
  EXPECT_EQ(run_cli({"train", "--mode", "dpo", "--data", dir / "missing.jsonl", "--out", dir / "c.json", "--metrics", dir / "m.csv"}).code,
            kMissingFile);
}

TEST(Train, DivergenceExitsWith70) {
  TempDir dir("diverge");
  ASSERT_EQ(run_cli({"gen-data", "--domain", "1", "--n", "40", "--out", dir / "d.jsonl"}).code, kOk);
  harness::spit(dir / "c.cfg", "lr_scale = 1e300\n");
  const auto r = run_cli({"train", "--mode", "ofs", "--data", dir / "d.jsonl", "--config", dir / "c.cfg",
                      "--out", dir / "c.json", "--metrics", dir / "m.csv"});
  EXPECT_EQ(r.code, kDiverged) << r.err;
  EXPECT_NE(r.err.find("diverged"), std::string::npos) << r.err;
}

TEST(Train, MetricsRowsCheckpointAndSwapGating) {
  TempDir dir("train");
  ASSERT_EQ(run_cli({"gen-data", "--domain", "1", "--n", "42", "--seed", "2", "--out", dir / "d.jsonl"}).code, kOk);
  harness::spit(dir / "c.cfg", kFastConfig);
  ASSERT_EQ(run_cli({"train", "--mode", "dpo", "--data", dir / "d.jsonl", "--config", dir / "c.cfg",
                 "--out", dir / "dpo.json", "--metrics", dir / "dpo.csv"}).code, kOk);
  const auto dpo_logs = load_metrics(dir / "dpo.csv");
  ASSERT_EQ(dpo_logs.size(), 11u);
  for (const auto& l : dpo_logs) {
    EXPECT_FALSE(l.swapped);
    EXPECT_FALSE(l.loss_dpo_slow.has_value());
  }

  ASSERT_EQ(run_cli({"train", "--mode", "ofs", "--data", dir / "d.jsonl", "--config", dir / "c.cfg",
                 "--out", dir / "ofs.json", "--metrics", dir / "ofs.csv"}).code, kOk);
  const auto logs = load_metrics(dir / "ofs.csv");
  ASSERT_EQ(logs.size(), 11u);
  for (const auto& l : logs) {
    if (l.step % 5 != 0) EXPECT_FALSE(l.swapped) << l.step;
    EXPECT_TRUE(l.loss_fs.has_value());
  }
  EXPECT_TRUE(harness::fs::exists(trail_path_for(dir / "ofs.json")));

  // The last row's fast loss is the saved checkpoint's loss on the last batch.
  const auto ck = load_checkpoint(dir / "ofs.json");
  const ReferenceModel model(ck.spec);
  const auto data = load_triples(dir / "d.jsonl");
  const std::vector<PreferenceTriple> last(data.end() - 2, data.end());
  const auto cached = cache_triples(model, last);
  EXPECT_NEAR(mean_dpo_loss(cached, ck.adapter, 0.1), logs.back().loss_dpo_fast, 1e-9);
}

TEST(Cofs, OutputsAndSinglePointGrid) {
  TempDir dir("cofs");
  ASSERT_EQ(run_cli({"gen-data", "--domain", "1", "--n", "40", "--out", dir / "t1.jsonl"}).code, kOk);
  ASSERT_EQ(run_cli({"gen-data", "--domain", "2", "--n", "40", "--out", dir / "t2.jsonl"}).code, kOk);
  ASSERT_EQ(run_cli({"cofs", "--task1", dir / "t1.jsonl", "--task2", dir / "t2.jsonl", "--mem-cap", "10",
                 "--grid-step", "0.5", "--combine-mode", "constrained", "--out-dir", dir / "out"}).code, kOk);
  const auto betas = read_json(dir / "out/betas.json");
  EXPECT_EQ(betas["beta1"].get<double>(), 0.5);
  EXPECT_EQ(betas["beta2"].get<double>(), 0.5);
  const auto surface = harness::slurp(dir / "out/surface.csv");
  EXPECT_EQ(surface.substr(0, surface.find('\n')), "beta1,beta2,loss");
  EXPECT_EQ(std::count(surface.begin(), surface.end(), '\n'), 2);
  for (const char* f : {"ckpt_task1.json", "ckpt_task2.json", "ckpt_combined.json", "mem1.jsonl",
                        "mem2.jsonl", "metrics_task1.csv", "metrics_task2.csv", "manifest.json"}) {
    EXPECT_TRUE(harness::fs::exists(dir / (std::string("out/") + f))) << f;
  }
  EXPECT_EQ(load_triples(dir / "out/mem1.jsonl").size(), 10u);
  EXPECT_EQ(load_checkpoint(dir / "out/ckpt_combined.json").adapter.rank(), 8u);

  ASSERT_EQ(run_cli({"cofs", "--task1", dir / "t1.jsonl", "--task2", dir / "t2.jsonl", "--mem-cap", "10",
                 "--grid-step", "0.25", "--out-dir", dir / "grid"}).code, kOk);
  const auto b2 = read_json(dir / "grid/betas.json");
  for (const char* k : {"beta1", "beta2"}) {
    EXPECT_GT(b2[k].get<double>(), 0.0);
    EXPECT_LT(b2[k].get<double>(), 1.0);
  }
  EXPECT_EQ(run_cli({"cofs", "--task1", dir / "t1.jsonl", "--task2", dir / "t2.jsonl", "--grid-step", "1.5",
                 "--out-dir", dir / "x"}).code, kUsage);
}

TEST(Eval, SelfBaselineAndReferenceScore) {
  TempDir dir("eval");
  const PolicySpec spec;
  write_file(dir / "ref.json", checkpoint_to_json(spec, init_adapter(spec, 1)));
  const auto r = run_cli({"eval", "--ckpt", dir / "ref.json", "--domain", "1", "--n", "2000", "--seed", "9",
                      "--baseline-ckpt", dir / "ref.json", "--report", dir / "r.json"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto rep = read_json(dir / "r.json");
  EXPECT_EQ(rep["sfr"].get<double>(), 0.0);
  EXPECT_NEAR(rep["domain_score"].get<double>(), 0.25, 0.02);
  EXPECT_LT(rep["win_rate"].get<double>(), 0.5);
  const std::string keys = harness::slurp(dir / "r.json");
  EXPECT_LT(keys.find("domain_score"), keys.find("win_rate"));

  ASSERT_EQ(run_cli({"eval", "--ckpt", dir / "ref.json", "--domain", "1", "--n", "50", "--baseline-ckpt", "none",
                 "--report", dir / "n.json"}).code, kOk);
  EXPECT_FALSE(read_json(dir / "n.json").contains("sfr"));
  EXPECT_EQ(run_cli({"eval", "--ckpt", dir / "ref.json", "--domain", "1", "--n", "0", "--report", dir / "z.json"}).code, kUsage);
  EXPECT_EQ(run_cli({"eval", "--ckpt", dir / "none.json", "--domain", "1", "--n", "5", "--report", dir / "z.json"}).code,
            kMissingFile);
}

TEST(Regret, ReportConsistency) {
  TempDir dir("regret");
  ASSERT_EQ(run_cli({"gen-data", "--domain", "1", "--n", "80", "--out", dir / "d.jsonl"}).code, kOk);
  harness::spit(dir / "c.cfg", kFastConfig);
  ASSERT_EQ(run_cli({"train", "--mode", "ofs", "--data", dir / "d.jsonl", "--config", dir / "c.cfg",
                 "--out", dir / "c.json", "--metrics", dir / "m.csv"}).code, kOk);
  const auto r = run_cli({"regret", "--metrics", dir / "m.csv", "--ckpt", dir / "c.json", "--data", dir / "d.jsonl",
                      "--config", dir / "c.cfg", "--report", dir / "r.json"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto rep = read_json(dir / "r.json");
  EXPECT_EQ(rep["T"].get<int>(), 20);
  EXPECT_NEAR(rep["regret"].get<double>(),
              rep["mean_loss_final"].get<double>() - rep["mean_loss_star"].get<double>(), 1e-12);
  const auto& b = rep["bound"];
  EXPECT_EQ(b["holds"].get<bool>(), rep["regret"].get<double>() >= b["rhs"].get<double>());
  EXPECT_EQ(b["rhs"].get<double>(), b["rhs_mode_fs_1"].get<double>());
  const double diff = b["rhs_mode_fs_0"].get<double>() - b["rhs_mode_fs_1"].get<double>();
  EXPECT_NEAR(diff, (1.0 - 1.0 / 20.0) * b["G"].get<double>() * b["d"].get<double>(), 1e-12);

  EXPECT_EQ(run_cli({"regret", "--metrics", dir / "m.csv", "--ckpt", dir / "c.json", "--data", dir / "d.jsonl",
                 "--delta0", "1.5", "--report", dir / "x.json"}).code, kUsage);
  EXPECT_EQ(run_cli({"regret", "--metrics", dir / "m.csv", "--ckpt", dir / "c.json", "--data", dir / "d.jsonl",
                 "--ckpt2", dir / "c.json", "--report", dir / "x.json"}).code, kUsage);
}

TEST(Gradcheck, PassesAndPrintsReport) {
  const auto r = run_cli({"gradcheck", "--seed", "3", "--n", "8"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto rep = Json::parse(r.out);
  EXPECT_TRUE(rep["pass"].get<bool>());
  EXPECT_LT(rep["max_rel_error"].get<double>(), 1e-4);
}

TEST(Replay, ReproducesOutputsAndDetectsChangedInputs) {
  TempDir dir("replay");
  ASSERT_EQ(run_cli({"gen-data", "--domain", "1", "--n", "24", "--out", dir / "d.jsonl"}, {"CHASE_DPO_SEED=8"}).code, kOk);
  ASSERT_EQ(run_cli({"train", "--mode", "ofs", "--data", dir / "d.jsonl", "--out", dir / "c.json",
                 "--metrics", dir / "m.csv"}, {"CHASE_DPO_SEED=8"}).code, kOk);
  const auto before = harness::slurp(dir / "c.json");
  harness::fs::remove(dir / "c.json");
  const auto r = run_cli({"replay", "--manifest", dir / "c.json.manifest.json"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("3 outputs identical"), std::string::npos) << r.out;
  EXPECT_EQ(harness::slurp(dir / "c.json"), before);

  harness::spit(dir / "d.jsonl", harness::slurp(dir / "d.jsonl") + "\n");
  EXPECT_EQ(run_cli({"replay", "--manifest", dir / "c.json.manifest.json"}).code, kCheckFailed);
  EXPECT_EQ(run_cli({"replay", "--manifest", dir / "absent.json"}).code, kMissingFile);
}
