// Configuration files, run manifests, checkpoint summaries, and end-to-end
// exercises of the command-line binary (exit codes, JSON outputs, artifact
// round-trips on a reduced-scale dataset).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dfa/config.hpp"
#include "dfa/data/container.hpp"
#include "dfa/errors.hpp"
#include "dfa/experiments.hpp"
#include "dfa/manifest.hpp"
#include "dfa/train/trainer.hpp"

using nlohmann::json;
using namespace dfa;

namespace {

std::string data_root() {
  const char* env = std::getenv("DFA_DATA_DIR");
  return env ? env : "/root/data";
}

std::string cli_path() { return DFA_CLI_PATH; }

struct Scratch {
  std::filesystem::path dir;
  Scratch() {
    dir = std::filesystem::temp_directory_path() /
          ("dfa_cli_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
  }
  ~Scratch() { std::filesystem::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunResult {
  int exit_code = -1;
  std::string out, err;
};

// Runs the CLI with the given arguments, capturing exit code and streams.
RunResult run_cli(const Scratch& s, const std::string& args) {
  static int counter = 0;
  const std::string out = s.path("stdout_" + std::to_string(counter));
  const std::string err = s.path("stderr_" + std::to_string(counter));
  ++counter;
  const std::string cmd = "OPENBLAS_NUM_THREADS=1 " + cli_path() + " " + args +
                          " > " + out + " 2> " + err;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

int line_count(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

// Reduced-scale dataset shared by the end-to-end cases.
const std::string& tiny_dataset(const Scratch& s) {
  static std::string path;
  if (path.empty()) {
    path = s.path("tiny.bin");
    auto r = run_cli(s, "synth --base colored_mnist --ratio 0.05"
                        " --subset-per-class 20 --allow-any-ratio"
                        " --dataset-seed 3 --data-root " + data_root() +
                        " --out " + path);
    REQUIRE(r.exit_code == 0);
  }
  return path;
}

Scratch& scratch() {
  static Scratch s;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration file parsing and application.

TEST_CASE("config text parses sections, comments and values") {
  const std::string text =
      "# leading comment\n"
      "[dataset]\n"
      "base = corrupted_cifar10\n"
      "ratio = 0.02   # trailing comment\n"
      "\n"
      "[train]\n"
      "lambda_swap = 0.5\n"
      "iterations = 1234\n"
      "augment = true\n"
      "[run]\n"
      "trials = 3\n";
  auto pc = config::parse_config_text(text);
  REQUIRE(pc.sections.count("dataset") == 1);
  CHECK(pc.sections["dataset"].at("base") == "corrupted_cifar10");
  CHECK(pc.sections["train"].at("iterations") == "1234");

  data::BiasedDatasetSpec ds;
  train::TrainConfig tc;
  config::RunOptions run;
  config::apply_config(pc, ds, tc, run);
  CHECK(ds.base == data::BaseDataset::corrupted_cifar10);
  CHECK(ds.conflict_ratio == doctest::Approx(0.02));
  CHECK(tc.weights.lambda_swap == doctest::Approx(0.5));
  CHECK(tc.iterations == 1234);
  CHECK(tc.augment);
  CHECK(run.trials == 3);
  // Untouched fields keep their defaults.
  CHECK(tc.batch_size == 256);
  CHECK(ds.seed == 1);
}

TEST_CASE("config errors carry the offending location") {
  CHECK_THROWS_AS(config::parse_config_text("key = 1\n"), ConfigError);
  CHECK_THROWS_AS(config::parse_config_text("[train]\nlr = 0.1\nlr = 0.2\n"),
                  ConfigError);

  auto check_message = [](const std::string& text, const std::string& needle) {
    data::BiasedDatasetSpec ds;
    train::TrainConfig tc;
    config::RunOptions run;
    try {
      config::apply_config(config::parse_config_text(text), ds, tc, run);
      FAIL("expected ConfigError for: " << text);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  check_message("[train]\nbanana = 3\n", "unknown configuration key 'train.banana'");
  check_message("[orchard]\nx = 1\n", "orchard");
  check_message("[train]\nbatch_size = pear\n", "batch_size");
  check_message("[dataset]\nbase = fashion\n", "fashion");
}

TEST_CASE("resolved config text round-trips") {
  data::BiasedDatasetSpec ds;
  ds.base = data::BaseDataset::corrupted_cifar10;
  ds.conflict_ratio = 0.005;
  ds.seed = 99;
  ds.subset_per_class = 7;
  ds.allow_any_ratio = true;
  train::TrainConfig tc = train::preset_cifar_small();
  tc.weights.lambda_swap = 0.125;
  tc.w_ema = 0.7;
  tc.seed = 42;
  config::RunOptions run;
  run.trials = 5;
  run.quota = 2;

  const std::string text = config::resolved_config_text(ds, tc, run);
  data::BiasedDatasetSpec ds2;
  train::TrainConfig tc2;
  config::RunOptions run2;
  config::apply_config(config::parse_config_text(text), ds2, tc2, run2);
  CHECK(config::resolved_config_text(ds2, tc2, run2) == text);
  CHECK(tc2.canonical_text("dual") == tc.canonical_text("dual"));
  CHECK(ds2.base == ds.base);
  CHECK(ds2.conflict_ratio == ds.conflict_ratio);
  CHECK(ds2.subset_per_class == 7);
  CHECK(run2.quota == 2);
  CHECK(run2.trials == 5);
}

TEST_CASE("name <-> enum helpers reject unknown names") {
  CHECK(config::base_dataset_from("colored_mnist") == data::BaseDataset::colored_mnist);
  CHECK(config::encoder_kind_from("conv_small") == EncoderKind::conv_small);
  CHECK(config::encoder_kind_name(EncoderKind::mlp) == "mlp");
  CHECK_THROWS_AS(config::base_dataset_from("imagenet"), ConfigError);
  CHECK_THROWS_AS(config::encoder_kind_from("transformer"), ConfigError);
}

// ---------------------------------------------------------------------------
// Run manifests.

TEST_CASE("manifest records command, config and outcome") {
  Scratch s;
  const std::string path = s.path("m.json");
  manifest::RunManifest m;
  m.command = "train";
  m.resolved_config = "[train]\nlr = 0.01\n";
  m.dataset_digest = "00ff00ff00ff00ff";
  m.seed = 17;
  m.outputs = {s.path("report.json"), path};
  m.env = {{"DFA_DATA_DIR", "(unset)"}};
  {
    manifest::ManifestWriter w(path, std::move(m));
    auto started = json::parse(slurp(path));
    CHECK(started.at("status") == "running");
    CHECK(started.at("command") == "train");
    CHECK_FALSE(started.contains("finished_at"));
    w.finish();
  }
  auto finished = json::parse(slurp(path));
  CHECK(finished.at("status") == "complete");
  CHECK(finished.at("seed") == 17);
  CHECK(finished.at("dataset_digest") == "00ff00ff00ff00ff");
  CHECK(finished.at("environment").at("DFA_DATA_DIR") == "(unset)");
  CHECK(finished.at("outputs").size() == 2);
  CHECK(finished.at("wall_seconds").get<double>() >= 0.0);
  CHECK(finished.at("started_at") == json::parse(slurp(path)).at("started_at"));
  CHECK(manifest::path_for("x/report.json") == "x/report.json.manifest.json");
}

// ---------------------------------------------------------------------------
// Checkpoint summaries.

TEST_CASE("checkpoint summary restores the stored configuration") {
  Scratch s;
  data::BiasedDatasetSpec spec;
  spec.conflict_ratio = 0.05;
  spec.seed = 3;
  spec.subset_per_class = 20;
  spec.allow_any_ratio = true;
  const auto ds = data::build_dataset(data_root(), spec);

  train::TrainConfig cfg;
  cfg.hidden = 8;
  cfg.latent_dim = 4;
  cfg.batch_size = 16;
  cfg.iterations = 4;
  cfg.t_swap = 2;
  cfg.eval_every = 0;
  cfg.log_every = 0;
  cfg.seed = 11;

  exp::RunPaths paths;
  paths.checkpoint = s.path("sum.ckpt");
  exp::single_report(ds, cfg, /*dual=*/true, /*quota=*/-1, paths);

  const auto sum = train::summarize_checkpoint(paths.checkpoint);
  CHECK(sum.dual);
  CHECK(sum.quota == -1);
  CHECK(sum.t == 4);
  train::TrainConfig expect = cfg;
  expect.seed = exp::trial_seed(cfg.seed, 0);
  CHECK(sum.config.canonical_text("dual") == expect.canonical_text("dual"));
  CHECK(sum.config_digest == expect.digest("dual", ds.content_digest()));

  exp::RunPaths vp;
  vp.checkpoint = s.path("van.ckpt");
  exp::single_report(ds, cfg, /*dual=*/false, /*quota=*/2, vp);
  const auto vs = train::summarize_checkpoint(vp.checkpoint);
  CHECK_FALSE(vs.dual);
  CHECK(vs.quota == 2);

  std::ofstream(s.path("junk.ckpt"), std::ios::binary) << "not a checkpoint";
  CHECK_THROWS_AS(train::summarize_checkpoint(s.path("junk.ckpt")), DataError);
}

// ---------------------------------------------------------------------------
// Command-line binary end to end.

TEST_CASE("cli usage and configuration errors exit 1") {
  auto& s = scratch();
  CHECK(run_cli(s, "").exit_code == 1);
  CHECK(run_cli(s, "no-such-command").exit_code == 1);
  CHECK(run_cli(s, "train").exit_code == 1);  // missing required --data

  auto r = run_cli(s, "train --data " + tiny_dataset(s) + " --batch-size 0");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("batch_size") != std::string::npos);

  std::ofstream(s.path("bad.cfg")) << "[train]\nbanana = 3\n";
  r = run_cli(s, "train --data " + tiny_dataset(s) + " --config " + s.path("bad.cfg"));
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("train.banana") != std::string::npos);

  r = run_cli(s, "train --data " + tiny_dataset(s) + " --preset mystery");
  CHECK(r.exit_code == 1);

  r = run_cli(s, "train --data " + tiny_dataset(s) +
                     " --trials 2 --save-checkpoint " + s.path("x.ckpt"));
  CHECK(r.exit_code == 1);
}

TEST_CASE("cli data errors exit 2") {
  auto& s = scratch();
  auto r = run_cli(s, "train --data " + s.path("missing.bin") + " --iterations 1");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("error:") != std::string::npos);
  CHECK(run_cli(s, "eval --data " + tiny_dataset(s) +
                       " --checkpoint " + s.path("missing.ckpt")).exit_code == 2);
}

TEST_CASE("cli synth writes container, summary and manifest") {
  auto& s = scratch();
  const std::string& ds_path = tiny_dataset(s);
  const auto ds = data::load_dataset(ds_path);
  CHECK(ds.train.n == 200);
  CHECK(ds.spec.subset_per_class == 20);

  const auto manifest = json::parse(slurp(ds_path + ".manifest.json"));
  CHECK(manifest.at("status") == "complete");
  CHECK(manifest.at("command") == "synth");
  const std::string cfg_text = manifest.at("resolved_config");
  CHECK(cfg_text.find("subset_per_class = 20") != std::string::npos);
}

TEST_CASE("cli train/eval/resume/probe/dump round-trip") {
  auto& s = scratch();
  const std::string& ds_path = tiny_dataset(s);
  const std::string common =
      "--data " + ds_path +
      " --hidden 8 --latent-dim 4 --batch-size 16 --iterations 6 --t-swap 2"
      " --lr-decay-step 4 --eval-every 0 --log-every 2";

  auto t1 = run_cli(s, "train " + common + " --run-log " + s.path("r1.jsonl") +
                           " --save-checkpoint " + s.path("t1.ckpt") +
                           " --out " + s.path("t1.json"));
  REQUIRE(t1.exit_code == 0);
  const auto rep1 = json::parse(slurp(s.path("t1.json")));
  CHECK(rep1.at("mode") == "dual");
  CHECK(rep1.at("iterations") == 6);
  CHECK(rep1.at("trials").size() == 1);
  CHECK(line_count(slurp(s.path("r1.jsonl"))) == 3);  // t = 2, 4, 6

  // Identical config, fresh artifact paths: metrics digest must match.
  auto t2 = run_cli(s, "train " + common + " --run-log " + s.path("r2.jsonl") +
                           " --save-checkpoint " + s.path("t2.ckpt") +
                           " --out " + s.path("t2.json"));
  REQUIRE(t2.exit_code == 0);
  const auto rep2 = json::parse(slurp(s.path("t2.json")));
  CHECK(rep1.at("digest") == rep2.at("digest"));

  auto ev = run_cli(s, "eval --data " + ds_path + " --checkpoint " + s.path("t1.ckpt"));
  REQUIRE(ev.exit_code == 0);
  const auto ej = json::parse(ev.out);
  CHECK(ej.at("accuracy").get<double>() >= 0.0);
  CHECK(ej.at("accuracy").get<double>() <= 100.0);
  CHECK(ej.at("accuracy") == rep1.at("trials")[0].at("accuracy"));
  CHECK(ej.at("counts").at("n") == 10000);
  CHECK(run_cli(s, "eval --data " + ds_path + " --checkpoint " + s.path("t1.ckpt") +
                       " --split nope").exit_code == 1);

  // Extending the run changes the stored identity: refuse without --force.
  auto rs = run_cli(s, "resume --data " + ds_path + " --checkpoint " +
                           s.path("t1.ckpt") + " --iterations 10");
  CHECK(rs.exit_code == 2);
  rs = run_cli(s, "resume --data " + ds_path + " --checkpoint " + s.path("t1.ckpt") +
                      " --iterations 10 --force --out " + s.path("rs.json"));
  REQUIRE(rs.exit_code == 0);
  const auto rj = json::parse(slurp(s.path("rs.json")));
  CHECK(rj.at("iterations") == 10);
  CHECK(rj.at("resumed_from") == 6);
  // Already-complete checkpoints are a usage error, not a silent no-op.
  rs = run_cli(s, "resume --data " + ds_path + " --checkpoint " + s.path("t1.ckpt"));
  CHECK(rs.exit_code == 1);

  auto pr = run_cli(s, "probe-swap --data " + ds_path + " --checkpoint " +
                           s.path("t1.ckpt") + " --perms 2");
  REQUIRE(pr.exit_code == 0);
  const auto pj = json::parse(pr.out);
  CHECK(pj.at("permutations") == 2);
  CHECK(pj.at("intrinsic_swapped").get<double>() >= 0.0);

  auto de = run_cli(s, "dump-embeddings --data " + ds_path + " --checkpoint " +
                           s.path("t1.ckpt") + " --split train --out " +
                           s.path("emb.csv"));
  REQUIRE(de.exit_code == 0);
  const std::string csv = slurp(s.path("emb.csv"));
  CHECK(line_count(csv) == 201);  // header + one row per training sample
  const std::string header = csv.substr(0, csv.find('\n'));
  CHECK(std::count(header.begin(), header.end(), ',') == 10);  // 3 + 2*4 columns
}

TEST_CASE("cli vanilla training records quota mode") {
  auto& s = scratch();
  auto r = run_cli(s, "train-vanilla --data " + tiny_dataset(s) +
                          " --hidden 8 --latent-dim 4 --batch-size 16"
                          " --iterations 4 --eval-every 0 --log-every 0"
                          " --quota 4 --out " + s.path("v.json"));
  REQUIRE(r.exit_code == 0);
  CHECK(json::parse(slurp(s.path("v.json"))).at("mode") == "vanilla,quota=4");
}

TEST_CASE("cli cached experiments reuse finished trials") {
  auto& s = scratch();
  const std::string cache = s.path("cache");
  const std::string common =
      "train --data " + tiny_dataset(s) +
      " --hidden 8 --latent-dim 4 --batch-size 16 --iterations 4 --t-swap 1"
      " --eval-every 0 --log-every 0 --trials 2 --cache " + cache;
  auto r1 = run_cli(s, common + " --out " + s.path("c1.json"));
  REQUIRE(r1.exit_code == 0);
  auto r2 = run_cli(s, common + " --out " + s.path("c2.json"));
  REQUIRE(r2.exit_code == 0);
  CHECK(json::parse(slurp(s.path("c1.json"))).at("digest") ==
        json::parse(slurp(s.path("c2.json"))).at("digest"));
  int outcomes = 0;
  for (auto& e : std::filesystem::directory_iterator(cache)) {
    outcomes += e.path().filename().string().rfind("run_", 0) == 0 &&
                e.path().extension() == ".json";
  }
  CHECK(outcomes == 2);
}

TEST_CASE("cli gradcheck reports a passing comparison") {
  auto& s = scratch();
  auto r = run_cli(s, "gradcheck --instances 1 --batch-size 3 --coords 2");
  REQUIRE(r.exit_code == 0);
  const auto j = json::parse(r.out);
  CHECK(j.at("pass") == true);
  CHECK(j.at("max_rel_err").get<double>() < 1e-4);
}
