#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfa/data/dataset.hpp"
#include "dfa/errors.hpp"
#include "dfa/eval.hpp"
#include "dfa/experiments.hpp"
#include "dfa/report.hpp"
#include "dfa/rng.hpp"
#include "dfa/train/trainer.hpp"

using namespace dfa;
using nlohmann::json;

namespace {

data::BiasedDataset make_toy(uint64_t seed, int n_train = 64, int n_test = 32,
                             int h = 8, int w = 8, int c = 3) {
  data::BiasedDataset ds;
  ds.spec.base = data::BaseDataset::colored_mnist;
  ds.spec.conflict_ratio = 0.25;
  ds.spec.seed = seed;
  ds.spec.allow_any_ratio = true;
  ds.h = h;
  ds.w = w;
  ds.c = c;
  const int64_t px = static_cast<int64_t>(h) * w * c;
  auto fill = [&](data::Split& sp, int n, uint64_t tag) {
    Rng rng = Rng::stream(seed, tag);
    sp.n = n;
    sp.targets.resize(static_cast<size_t>(n));
    sp.bias.resize(static_cast<size_t>(n));
    sp.aligned.resize(static_cast<size_t>(n));
    sp.images_u8.assign(static_cast<size_t>(n) * px, 0);
    for (int i = 0; i < n; ++i) {
      const int y = static_cast<int>(rng.below(10));
      bool conflict = i == 1 ? true : (i == 0 ? false : rng.uniform() < 0.25);
      const int b = conflict ? data::draw_other_attribute(rng, y) : y;
      sp.targets[static_cast<size_t>(i)] = static_cast<uint8_t>(y);
      sp.bias[static_cast<size_t>(i)] = static_cast<uint8_t>(b);
      sp.aligned[static_cast<size_t>(i)] = static_cast<uint8_t>(y == b);
      for (int64_t p = 0; p < px; ++p) {
        const double v = y * 20.0 + rng.uniform() * 30.0;
        sp.images_u8[static_cast<size_t>(i) * px + static_cast<size_t>(p)] =
            static_cast<uint8_t>(std::lround(std::min(v, 255.0)));
      }
    }
  };
  fill(ds.train, n_train, 0xA1);
  fill(ds.test, n_test, 0xB2);
  return ds;
}

train::TrainConfig toy_config(uint64_t seed = 7) {
  train::TrainConfig cfg;
  cfg.encoder = EncoderKind::mlp;
  cfg.hidden = 16;
  cfg.latent_dim = 4;
  cfg.lr = 1e-3;
  cfg.iterations = 30;
  cfg.t_swap = 5;
  cfg.batch_size = 16;
  cfg.seed = seed;
  cfg.log_every = 10;
  cfg.eval_every = 20;
  return cfg;
}

}  // namespace

TEST_CASE("evaluation tallies exact per-group counts") {
  auto ds = make_toy(50, 40, 40);
  const auto& split = ds.test;

  // A constant predictor's accuracy is the label histogram at that class.
  for (int guess : {0, 3, 7}) {
    auto bd = eval::evaluate_with(
        ds, split, train::BatchPrep{},
        [&](const ad::Tensor<float>& x) {
          return std::vector<int>(static_cast<size_t>(x.dim(0)), guess);
        },
        /*window=*/7);  // deliberately uneven window
    int64_t want = 0, want_a = 0, want_c = 0, n_a = 0;
    for (int64_t i = 0; i < split.n; ++i) {
      const bool aligned = split.aligned[static_cast<size_t>(i)] != 0;
      n_a += aligned;
      if (split.targets[static_cast<size_t>(i)] == guess) {
        ++want;
        (aligned ? want_a : want_c) += 1;
      }
    }
    CHECK(bd.n == split.n);
    CHECK(bd.n_aligned == n_a);
    CHECK(bd.n_conflicting == split.n - n_a);
    CHECK(bd.correct == want);
    CHECK(bd.correct_aligned == want_a);
    CHECK(bd.correct_conflicting == want_c);
    // Sample-weighted decomposition is exact by construction.
    CHECK(bd.correct == bd.correct_aligned + bd.correct_conflicting);
  }

  // An oracle that answers the true labels scores 100 in every bucket.
  int64_t cursor = 0;
  auto bd = eval::evaluate_with(
      ds, split, train::BatchPrep{},
      [&](const ad::Tensor<float>& x) {
        std::vector<int> out(static_cast<size_t>(x.dim(0)));
        for (auto& v : out) v = split.targets[static_cast<size_t>(cursor++)];
        return out;
      },
      11);
  CHECK(bd.overall() == 100.0);
  CHECK(bd.aligned_pct() == 100.0);
  CHECK(bd.conflicting_pct() == 100.0);

  data::Split empty;
  CHECK_THROWS_AS(
      eval::evaluate_with(ds, empty, train::BatchPrep{},
                          [&](const ad::Tensor<float>&) { return std::vector<int>{}; }),
      DataError);
}

TEST_CASE("model evaluation agrees across window sizes") {
  auto ds = make_toy(51);
  train::TrainConfig cfg = toy_config(8);
  train::DualTrainer tr(ds, cfg);
  for (int k = 0; k < 10; ++k) tr.step();
  const auto a = eval::evaluate(tr.model(), ds, ds.test, tr.prep(), 512);
  const auto b = eval::evaluate(tr.model(), ds, ds.test, tr.prep(), 5);
  CHECK(a.correct == b.correct);
  CHECK(a.correct_aligned == b.correct_aligned);
  CHECK(a.n == ds.test.n);
}

TEST_CASE("swap probe: identity permutations reproduce original accuracies") {
  auto ds = make_toy(52);
  train::TrainConfig cfg = toy_config(9);
  train::DualTrainer tr(ds, cfg);
  for (int k = 0; k < 15; ++k) tr.step();

  std::vector<int> ident(static_cast<size_t>(ds.test.n));
  for (size_t i = 0; i < ident.size(); ++i) ident[i] = static_cast<int>(i);
  const auto probe = eval::swap_probe_with_perms(tr.model(), ds, ds.test, tr.prep(),
                                                 {ident, ident, ident});
  CHECK(probe.permutations == 3);
  CHECK(probe.intrinsic_swapped == probe.intrinsic_original);
  CHECK(probe.bias_swapped == probe.bias_original);
  CHECK(probe.intrinsic_original >= 0.0);
  CHECK(probe.intrinsic_original <= 100.0);

  // The un-swapped intrinsic accuracy is the model's inference accuracy.
  const auto bd = eval::evaluate(tr.model(), ds, ds.test, tr.prep());
  CHECK(probe.intrinsic_original == doctest::Approx(bd.overall()).epsilon(1e-12));
}

TEST_CASE("swap probe is deterministic in its seed") {
  auto ds = make_toy(53);
  train::TrainConfig cfg = toy_config(10);
  train::DualTrainer tr(ds, cfg);
  for (int k = 0; k < 10; ++k) tr.step();

  const auto p1 = eval::swap_probe(tr.model(), ds, ds.test, tr.prep(), 99, 5);
  const auto p2 = eval::swap_probe(tr.model(), ds, ds.test, tr.prep(), 99, 5);
  CHECK(p1.permutations == 5);
  CHECK(p1.intrinsic_swapped == p2.intrinsic_swapped);
  CHECK(p1.bias_swapped == p2.bias_swapped);

  data::Split no_bias = ds.test;
  no_bias.bias.clear();
  CHECK_THROWS_AS(eval::swap_probe(tr.model(), ds, no_bias, tr.prep(), 99, 2),
                  DataError);
}

TEST_CASE("embedding dump is a stable CSV mirror of the encoders") {
  auto ds = make_toy(54);
  train::TrainConfig cfg = toy_config(11);
  train::DualTrainer tr(ds, cfg);
  for (int k = 0; k < 5; ++k) tr.step();

  const std::string path = "/tmp/dfa_eval_test_embed.csv";
  eval::dump_embeddings(tr.model(), ds, ds.test, tr.prep(), path);

  std::ifstream is(path);
  REQUIRE(is.good());
  std::vector<std::string> lines;
  for (std::string line; std::getline(is, line);) lines.push_back(line);
  REQUIRE(lines.size() == static_cast<size_t>(ds.test.n) + 1);

  // Header: 3 id columns + both latent halves.
  const int d = cfg.latent_dim;
  std::istringstream hs(lines[0]);
  std::vector<std::string> cols;
  for (std::string cell; std::getline(hs, cell, ',');) cols.push_back(cell);
  REQUIRE(static_cast<int>(cols.size()) == 3 + 2 * d);
  CHECK(cols[0] == "sample_id");
  CHECK(cols[3] == "z_i_0");
  CHECK(cols[static_cast<size_t>(3 + d)] == "z_b_0");

  // Spot-check row 0 against a direct encode of the same full window (GEMM
  // accumulation depends on the batch extent, so the oracle must use the
  // same shape); the %.9g rendering round-trips binary32 exactly.
  std::vector<int64_t> idx(static_cast<size_t>(ds.test.n));
  std::iota(idx.begin(), idx.end(), 0);
  train::BatchPrep prep = tr.prep();
  prep.augment = false;
  const auto x = train::assemble_batch(ds, ds.test, idx, prep, 0);
  const auto z = tr.model().encode(nullptr, x);
  std::istringstream rs(lines[1]);
  std::vector<std::string> row;
  for (std::string cell; std::getline(rs, cell, ',');) row.push_back(cell);
  REQUIRE(static_cast<int>(row.size()) == 3 + 2 * d);
  CHECK(row[0] == "0");
  CHECK(row[1] == std::to_string(static_cast<int>(ds.test.targets[0])));
  CHECK(row[2] == std::to_string(static_cast<int>(ds.test.bias[0])));
  for (int j = 0; j < d; ++j) {
    CHECK(std::strtof(row[static_cast<size_t>(3 + j)].c_str(), nullptr) ==
          z.z_i.vals()[static_cast<size_t>(j)]);
    CHECK(std::strtof(row[static_cast<size_t>(3 + d + j)].c_str(), nullptr) ==
          z.z_b.vals()[static_cast<size_t>(j)]);
  }

  // Re-dumping a frozen model is byte-identical.
  const std::string again = "/tmp/dfa_eval_test_embed2.csv";
  eval::dump_embeddings(tr.model(), ds, ds.test, tr.prep(), again);
  std::ifstream f1(path, std::ios::binary), f2(again, std::ios::binary);
  std::ostringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
  std::remove(path.c_str());
  std::remove(again.c_str());
}

TEST_CASE("metrics digests ignore volatile fields only") {
  json a = {{"mean_accuracy", 81.5},
            {"trials", {{{"seed", 1}, {"accuracy", 80.0}, {"wall_seconds", 5.0}}}},
            {"wall_seconds_total", 11.0}};
  json b = a;
  b["wall_seconds_total"] = 99.0;
  b["trials"][0]["wall_seconds"] = 1.25;
  b["digest"] = "stale";
  b["trials"][0]["checkpoint"] = "/elsewhere/ck.ckpt";
  CHECK(report::metrics_digest(a) == report::metrics_digest(b));

  json c = a;
  c["mean_accuracy"] = 81.6;
  CHECK(report::metrics_digest(a) != report::metrics_digest(c));

  report::finalize(a);
  REQUIRE(a.contains("digest"));
  CHECK(a["digest"].get<std::string>() == report::hex64(report::metrics_digest(a)));
}

TEST_CASE("hex64 is fixed-width lowercase") {
  CHECK(report::hex64(0) == "0000000000000000");
  CHECK(report::hex64(0xABCDEF0123456789ULL) == "abcdef0123456789");
}

TEST_CASE("training report aggregates trials with population statistics") {
  auto ds = make_toy(55);
  train::TrainConfig cfg = toy_config(12);
  exp::Cache no_cache;
  const json r = exp::train_report(no_cache, ds, cfg, /*dual=*/true, -1, 3);

  REQUIRE(r.at("trials").size() == 3);
  CHECK(r.at("command") == "train");
  CHECK(r.at("mode") == "dual");
  std::vector<double> acc;
  for (const auto& t : r.at("trials")) acc.push_back(t.at("accuracy").get<double>());
  const double mean = (acc[0] + acc[1] + acc[2]) / 3.0;
  CHECK(r.at("mean_accuracy").get<double>() == doctest::Approx(mean).epsilon(1e-12));
  double ss = 0.0;
  for (double x : acc) ss += (x - mean) * (x - mean);
  CHECK(r.at("std_accuracy").get<double>() ==
        doctest::Approx(std::sqrt(ss / 3.0)).epsilon(1e-9));

  // Breakdown recombines exactly (same test set in every trial).
  const auto& bd = r.at("breakdown");
  const double n_a = static_cast<double>(ds.test.n -
                                         std::count(ds.test.aligned.begin(),
                                                    ds.test.aligned.end(), uint8_t{0}));
  const double n_c = static_cast<double>(ds.test.n) - n_a;
  const double recombined = (n_a * bd.at("aligned").get<double>() +
                             n_c * bd.at("conflicting").get<double>()) /
                            static_cast<double>(ds.test.n);
  CHECK(bd.at("overall").get<double>() == doctest::Approx(recombined).epsilon(1e-9));

  // Trials share the config except for their derived seeds.
  CHECK(r.at("trials")[0].at("seed").get<uint64_t>() == exp::trial_seed(cfg.seed, 0));
  CHECK(r.at("trials")[1].at("seed").get<uint64_t>() == exp::trial_seed(cfg.seed, 1));
  CHECK(exp::trial_seed(cfg.seed, 0) != exp::trial_seed(cfg.seed, 1));
}

TEST_CASE("reports are reproducible and seed-sensitive") {
  auto ds = make_toy(56);
  train::TrainConfig cfg = toy_config(13);
  exp::Cache no_cache;
  const json r1 = exp::train_report(no_cache, ds, cfg, false, -1, 2);
  const json r2 = exp::train_report(no_cache, ds, cfg, false, -1, 2);
  CHECK(r1.at("digest") == r2.at("digest"));
  // Everything except wall-clock timing matches exactly.
  json s1 = r1, s2 = r2;
  for (json* s : {&s1, &s2}) {
    for (auto& t : (*s)["trials"]) t.erase("wall_seconds");
  }
  CHECK(s1 == s2);

  train::TrainConfig other = cfg;
  other.seed = cfg.seed + 1;
  const json r3 = exp::train_report(no_cache, ds, other, false, -1, 2);
  CHECK(r1.at("digest") != r3.at("digest"));
}

TEST_CASE("run cache reloads finished trials and verifies their digest") {
  auto ds = make_toy(57);
  train::TrainConfig cfg = toy_config(14);
  const std::string dir = "/tmp/dfa_eval_test_cache";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  exp::Cache cache{dir};

  const auto first = exp::cached_run(cache, ds, cfg, true, -1, true);
  CHECK(first.wall_seconds > 0.0);
  REQUIRE_FALSE(first.checkpoint.empty());
  CHECK(std::filesystem::exists(first.checkpoint));

  const auto again = exp::cached_run(cache, ds, cfg, true, -1, true);
  CHECK(again.param_digest == first.param_digest);
  CHECK(again.config_digest == first.config_digest);
  CHECK(again.test.correct == first.test.correct);
  CHECK(again.seed == first.seed);

  // A fresh (uncached) run of the same config reaches the same parameters.
  exp::Cache no_cache;
  const auto fresh = exp::cached_run(no_cache, ds, cfg, true, -1, false);
  CHECK(fresh.param_digest == first.param_digest);

  // Tampered cache entries are rejected rather than silently trusted.
  const std::string meta =
      dir + "/run_" + report::hex64(first.config_digest) + ".json";
  json j = report::read_json(meta);
  j["config_digest"] = report::hex64(first.config_digest ^ 1);
  report::write_json(meta, j);
  CHECK_THROWS_AS(exp::cached_run(cache, ds, cfg, true, -1, true), DataError);

  CHECK_THROWS_AS(exp::cached_run(no_cache, ds, cfg, true, -1, true), ContractError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("ablation report carries four labeled rows over shared seeds") {
  auto ds = make_toy(58);
  train::TrainConfig cfg = toy_config(15);
  cfg.iterations = 12;
  cfg.t_swap = 4;
  exp::Cache no_cache;
  const json r = exp::ablation_report(no_cache, ds, cfg, 2);

  REQUIRE(r.at("rows").size() == 4);
  const auto& rows = r.at("rows");
  CHECK(rows[0].at("row") == "vanilla");
  CHECK(rows[0].at("mode") == "vanilla");
  CHECK(rows[1].at("row") == "disentangle_only");
  CHECK(rows[1].at("lambda_swap").get<double>() == 0.0);
  CHECK(rows[2].at("row") == "swap_from_start");
  CHECK(rows[2].at("t_swap").get<int64_t>() == 0);
  CHECK(rows[3].at("row") == "swap_scheduled");
  CHECK(rows[3].at("t_swap").get<int64_t>() == 4);
  for (const auto& row : rows) {
    REQUIRE(row.at("trials").size() == 2);
    CHECK(row.at("trials")[0].at("seed") == rows[0].at("trials")[0].at("seed"));
  }
  const json r2 = exp::ablation_report(no_cache, ds, cfg, 2);
  CHECK(r.at("digest") == r2.at("digest"));

  const std::string csv = report::ablation_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 rows
  CHECK(csv.rfind("row,mean_accuracy,std_accuracy,trial_0,trial_1", 0) == 0);
}

TEST_CASE("diversity report spans the 2x2 grid with exact quotas") {
  auto ds1 = make_toy(59);
  ds1.spec.conflict_ratio = 0.01;
  auto ds5 = make_toy(60);
  ds5.spec.conflict_ratio = 0.05;

  train::TrainConfig cfg = toy_config(16);
  cfg.iterations = 10;
  cfg.batch_size = 64;
  exp::Cache no_cache;
  const json r = exp::diversity_report(no_cache, ds1, ds5, cfg, 2);

  REQUIRE(r.at("cells").size() == 4);
  const auto& cells = r.at("cells");
  CHECK(cells[0].at("diversity_ratio").get<double>() == 0.01);
  CHECK(cells[0].at("sampling_ratio").get<double>() == 0.01);
  CHECK(cells[0].at("quota").get<int>() == 1);  // lround(0.01 * 64)
  CHECK(cells[1].at("sampling_ratio").get<double>() == 0.5);
  CHECK(cells[1].at("quota").get<int>() == 32);
  CHECK(cells[2].at("diversity_ratio").get<double>() == 0.05);
  CHECK(cells[3].at("quota").get<int>() == 32);

  const std::string csv = report::diversity_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  // Wrong-ratio datasets are refused.
  CHECK_THROWS_AS(exp::diversity_report(no_cache, ds5, ds5, cfg, 1), ConfigError);
}

TEST_CASE("trials CSV lists one row per trial") {
  auto ds = make_toy(61);
  train::TrainConfig cfg = toy_config(23);
  cfg.iterations = 8;
  exp::Cache no_cache;
  const json r = exp::train_report(no_cache, ds, cfg, false, 2, 3);
  const std::string csv = report::trials_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 trials
  CHECK(csv.rfind("trial,seed,accuracy", 0) == 0);
}

TEST_CASE("run logs follow the configured cadences") {
  auto ds = make_toy(62);
  train::TrainConfig cfg = toy_config(24);
  cfg.iterations = 40;
  cfg.t_swap = 20;
  cfg.log_every = 10;
  cfg.eval_every = 20;
  const std::string path = "/tmp/dfa_eval_test_runlog.jsonl";
  exp::RunPaths paths;
  paths.run_log = path;
  exp::run_dual(ds, cfg, paths);

  std::ifstream is(path);
  REQUIRE(is.good());
  std::vector<json> recs;
  for (std::string line; std::getline(is, line);) {
    recs.push_back(json::parse(line));
  }
  REQUIRE(recs.size() == 4);  // t = 10, 20, 30, 40
  CHECK(recs[0].at("t") == 10);
  CHECK_FALSE(recs[0].contains("test_acc"));
  CHECK_FALSE(recs[0].contains("l_swap"));  // gate closed at t <= 20
  CHECK(recs[1].at("t") == 20);
  CHECK(recs[1].contains("test_acc"));
  CHECK(recs[2].at("t") == 30);
  CHECK(recs[2].contains("l_swap"));  // swap active past t_swap
  CHECK(recs[3].at("t") == 40);
  CHECK(recs[3].contains("test_acc"));  // final step always evaluates
  for (const auto& rec : recs) {
    CHECK(rec.contains("l_dis"));
    CHECK(rec.contains("lr"));
  }
}

TEST_CASE("probe report reads a cached checkpoint") {
  auto ds = make_toy(63);
  train::TrainConfig cfg = toy_config(25);
  cfg.iterations = 12;
  cfg.t_swap = 4;
  const std::string dir = "/tmp/dfa_eval_test_probe_cache";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  exp::Cache cache{dir};

  const auto out = exp::cached_run(cache, ds, cfg, true, -1, true);
  const json pr = exp::probe_report(ds, cfg, out.checkpoint, 1234, 4);
  CHECK(pr.at("permutations").get<int>() == 4);
  for (const char* key : {"intrinsic_original", "intrinsic_swapped",
                          "bias_original", "bias_swapped"}) {
    const double v = pr.at(key).get<double>();
    CHECK(v >= 0.0);
    CHECK(v <= 100.0);
  }
  const json pr2 = exp::probe_report(ds, cfg, out.checkpoint, 1234, 4);
  CHECK(pr.at("digest") == pr2.at("digest"));
  std::filesystem::remove_all(dir);
}
