// Command-line entry point: dataset synthesis, training, evaluation,
// experiment grids and diagnostics, with file-based configs and
// machine-readable outputs.
//
// Exit codes: 0 success; 1 usage or configuration error; 2 data error
// (missing/corrupt files, impossible counts); 3 numeric failure (non-finite
// loss, failed gradient self-check, violated internal contract).
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dfa/config.hpp"
#include "dfa/data/cifar_bin.hpp"
#include "dfa/data/container.hpp"
#include "dfa/data/dataset.hpp"
#include "dfa/data/idx.hpp"
#include "dfa/diagnostics.hpp"
#include "dfa/errors.hpp"
#include "dfa/eval.hpp"
#include "dfa/experiments.hpp"
#include "dfa/manifest.hpp"
#include "dfa/report.hpp"
#include "dfa/train/trainer.hpp"

namespace {

using nlohmann::json;
using namespace dfa;

int g_exit = 0;  // set by subcommands that finish with a non-zero verdict

// ---------------------------------------------------------------------------
// Flag groups. Each group binds optional command-line flags to the matching
// configuration struct; only flags the user actually passed are applied, so
// precedence is defaults < preset < config file < flags.

struct DatasetFlags {
  std::string base;
  double ratio = 0.0;
  uint64_t seed = 0;
  int severity = 0;
  bool lossless = false;
  bool excludes = false;
  int subset = 0;
  bool any_ratio = false;
  CLI::Option *o_base = nullptr, *o_ratio = nullptr, *o_seed = nullptr,
              *o_severity = nullptr, *o_lossless = nullptr, *o_excludes = nullptr,
              *o_subset = nullptr, *o_any = nullptr;

  void add(CLI::App& a) {
    o_base = a.add_option("--base", base,
                          "base dataset: colored_mnist or corrupted_cifar10");
    o_ratio = a.add_option("--ratio", ratio, "conflicting-sample ratio, e.g. 0.01");
    o_seed = a.add_option("--dataset-seed", seed, "dataset construction seed");
    o_severity = a.add_option("--severity", severity, "corruption severity 0..5");
    o_lossless = a.add_flag("--lossless-float", lossless,
                            "store float pixels instead of 8-bit");
    o_excludes = a.add_flag("--test-excludes-designated", excludes,
                            "draw test bias from the nine other attributes");
    o_subset = a.add_option("--subset-per-class", subset,
                            "reduced-scale build: keep N source images per class");
    o_any = a.add_flag("--allow-any-ratio", any_ratio,
                       "permit ratios outside the reference tables");
  }

  void apply(data::BiasedDatasetSpec& s) const {
    if (o_base && o_base->count()) s.base = config::base_dataset_from(base);
    if (o_ratio && o_ratio->count()) s.conflict_ratio = ratio;
    if (o_seed && o_seed->count()) s.seed = seed;
    if (o_severity && o_severity->count()) s.severity = severity;
    if (o_lossless && o_lossless->count()) s.lossless_float = lossless;
    if (o_excludes && o_excludes->count()) s.test_excludes_designated = excludes;
    if (o_subset && o_subset->count()) s.subset_per_class = subset;
    if (o_any && o_any->count()) s.allow_any_ratio = any_ratio;
  }
};

struct TrainFlags {
  std::string encoder;
  int hidden = 0, latent = 0, batch = 0;
  double lambda_dis = 0, lambda_swap_b = 0, lambda_swap = 0, q = 0, lr = 0,
         gamma = 0, w_ema = 0;
  int64_t decay_step = 0, iterations = 0, t_swap = 0, eval_every = 0, log_every = 0;
  uint64_t seed = 0;
  bool augment = false, normalize = false;
  CLI::Option *o_encoder = nullptr, *o_hidden = nullptr, *o_latent = nullptr,
              *o_batch = nullptr, *o_ldis = nullptr, *o_lsb = nullptr,
              *o_ls = nullptr, *o_q = nullptr, *o_lr = nullptr, *o_gamma = nullptr,
              *o_wema = nullptr, *o_step = nullptr, *o_iters = nullptr,
              *o_tswap = nullptr, *o_eval = nullptr, *o_log = nullptr,
              *o_seed = nullptr, *o_augment = nullptr, *o_normalize = nullptr;

  void add(CLI::App& a) {
    o_encoder = a.add_option("--encoder", encoder, "encoder: mlp or conv_small");
    o_hidden = a.add_option("--hidden", hidden, "mlp hidden width");
    o_latent = a.add_option("--latent-dim", latent, "per-encoder latent size");
    o_ldis = a.add_option("--lambda-dis", lambda_dis,
                          "weight on the bias head's amplified loss");
    o_lsb = a.add_option("--lambda-swap-b", lambda_swap_b,
                         "same weight inside the swap term");
    o_ls = a.add_option("--lambda-swap", lambda_swap, "weight of the swap term");
    o_q = a.add_option("--q", q, "generalized cross-entropy exponent");
    o_lr = a.add_option("--lr", lr, "learning rate");
    o_step = a.add_option("--lr-decay-step", decay_step,
                          "iterations between learning-rate halvings");
    o_gamma = a.add_option("--lr-decay-gamma", gamma, "learning-rate decay factor");
    o_iters = a.add_option("--iterations", iterations, "total training iterations");
    o_tswap = a.add_option("--t-swap", t_swap,
                           "iteration after which feature swapping starts");
    o_batch = a.add_option("--batch-size", batch, "mini-batch size");
    o_seed = a.add_option("--seed", seed, "base training seed");
    o_augment = a.add_flag("--augment,!--no-augment", augment,
                           "random crop shifts and horizontal flips");
    o_normalize = a.add_flag("--normalize,!--no-normalize", normalize,
                             "per-channel mean/std normalization");
    o_wema = a.add_option("--w-ema", w_ema,
                          "smoothing for per-sample difficulty (0 = live)");
    o_eval = a.add_option("--eval-every", eval_every,
                          "test-set evaluation cadence in run logs (0 = off)");
    o_log = a.add_option("--log-every", log_every,
                         "run-log record cadence (0 = off)");
  }

  void apply(train::TrainConfig& t) const {
    if (o_encoder && o_encoder->count()) t.encoder = config::encoder_kind_from(encoder);
    if (o_hidden && o_hidden->count()) t.hidden = hidden;
    if (o_latent && o_latent->count()) t.latent_dim = latent;
    if (o_ldis && o_ldis->count()) t.weights.lambda_dis = lambda_dis;
    if (o_lsb && o_lsb->count()) t.weights.lambda_swap_b = lambda_swap_b;
    if (o_ls && o_ls->count()) t.weights.lambda_swap = lambda_swap;
    if (o_q && o_q->count()) t.weights.q = q;
    if (o_lr && o_lr->count()) t.lr = lr;
    if (o_step && o_step->count()) t.lr_decay_step = decay_step;
    if (o_gamma && o_gamma->count()) t.lr_decay_gamma = gamma;
    if (o_iters && o_iters->count()) t.iterations = iterations;
    if (o_tswap && o_tswap->count()) t.t_swap = t_swap;
    if (o_batch && o_batch->count()) t.batch_size = batch;
    if (o_seed && o_seed->count()) t.seed = seed;
    if (o_augment && o_augment->count()) t.augment = augment;
    if (o_normalize && o_normalize->count()) t.normalize = normalize;
    if (o_wema && o_wema->count()) t.w_ema = w_ema;
    if (o_eval && o_eval->count()) t.eval_every = eval_every;
    if (o_log && o_log->count()) t.log_every = log_every;
  }
};

struct RunFlags {
  int trials = 0, quota = 0, perms = 0;
  uint64_t probe_seed = 0;
  CLI::Option *o_trials = nullptr, *o_quota = nullptr, *o_perms = nullptr,
              *o_probe_seed = nullptr;

  void add_trials(CLI::App& a) {
    o_trials = a.add_option("--trials", trials,
                            "number of runs with derived per-trial seeds");
  }
  void add_quota(CLI::App& a) {
    o_quota = a.add_option(
        "--quota", quota,
        "conflicting samples drawn per batch (-1 = plain epoch sampling)");
  }
  void add_probe(CLI::App& a) {
    o_perms = a.add_option("--perms", perms, "number of probe permutations");
    o_probe_seed =
        a.add_option("--probe-seed", probe_seed, "seed for probe permutations");
  }

  void apply(config::RunOptions& r) const {
    if (o_trials && o_trials->count()) r.trials = trials;
    if (o_quota && o_quota->count()) r.quota = quota;
    if (o_perms && o_perms->count()) r.perms = perms;
    if (o_probe_seed && o_probe_seed->count()) r.probe_seed = probe_seed;
  }
};

struct CommonState {
  data::BiasedDatasetSpec dspec;
  train::TrainConfig tc;
  config::RunOptions run;
  std::vector<std::pair<std::string, std::string>> env_reads;
};

// Ordered resolution of configuration sources for one subcommand.
struct ConfigLayer {
  std::string config_path, preset;
  CLI::Option *o_config = nullptr, *o_preset = nullptr;
  DatasetFlags dflags;
  TrainFlags tflags;
  RunFlags rflags;

  void add_sources(CLI::App& a, bool with_preset = true) {
    o_config = a.add_option("--config", config_path,
                            "configuration file ([section] key = value lines)");
    if (with_preset) {
      o_preset = a.add_option(
          "--preset", preset,
          "hyperparameter bundle: cmnist or cifar-small (applied before the "
          "config file and flags)");
    }
  }

  CommonState resolve() const {
    CommonState st;
    if (o_preset && o_preset->count()) {
      if (preset == "cmnist") {
        st.tc = train::preset_cmnist();
      } else if (preset == "cifar-small") {
        st.tc = train::preset_cifar_small();
      } else {
        throw ConfigError("unknown preset '" + preset +
                          "' (expected cmnist or cifar-small)");
      }
    }
    if (o_config && o_config->count()) {
      config::apply_config(config::read_config_file(config_path), st.dspec, st.tc,
                           st.run);
    }
    dflags.apply(st.dspec);
    tflags.apply(st.tc);
    rflags.apply(st.run);
    return st;
  }
};

// ---------------------------------------------------------------------------
// Small shared helpers.

void deliver(const json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::fputs(report::render(j).c_str(), stdout);
  } else {
    report::write_json(out_path, j);
  }
}

std::string resolve_data_root(const std::string& flag_value, bool flag_given,
                              CommonState& st) {
  if (flag_given) return flag_value;
  const char* env = std::getenv("DFA_DATA_DIR");
  st.env_reads.emplace_back("DFA_DATA_DIR", env ? env : "(unset)");
  return env ? std::string(env) : std::string("data");
}

// Starts a manifest covering the listed outputs. Commands that write nothing
// (stdout only) carry no manifest unless one is requested explicitly.
std::optional<manifest::ManifestWriter> start_manifest(
    const std::string& explicit_path, const std::string& command,
    const CommonState& st, uint64_t seed, const std::string& dataset_digest,
    std::vector<std::string> outputs) {
  std::vector<std::string> outs;
  for (auto& o : outputs) {
    if (!o.empty()) outs.push_back(o);
  }
  std::string path = explicit_path;
  if (path.empty()) {
    if (outs.empty()) return std::nullopt;
    path = manifest::path_for(outs.front());
  }
  outs.push_back(path);
  manifest::RunManifest m;
  m.command = command;
  m.resolved_config = config::resolved_config_text(st.dspec, st.tc, st.run);
  m.dataset_digest = dataset_digest;
  m.seed = seed;
  m.outputs = std::move(outs);
  m.env = st.env_reads;
  return manifest::ManifestWriter(path, std::move(m));
}

json breakdown_json(const eval::Breakdown& b) {
  return json{{"accuracy", b.overall()},
              {"accuracy_aligned", b.aligned_pct()},
              {"accuracy_conflicting", b.conflicting_pct()},
              {"counts",
               {{"n", b.n},
                {"aligned", b.n_aligned},
                {"conflicting", b.n_conflicting},
                {"correct", b.correct},
                {"correct_aligned", b.correct_aligned},
                {"correct_conflicting", b.correct_conflicting}}}};
}

exp::Cache make_cache(const std::string& dir) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
  return exp::Cache{dir};
}

const data::Split& pick_split(const data::BiasedDataset& ds, const std::string& name) {
  if (name == "train") return ds.train;
  if (name == "test") return ds.test;
  throw ConfigError("unknown split '" + name + "' (expected train or test)");
}

// ---------------------------------------------------------------------------
// Subcommands.

void setup_ingest(CLI::App& app) {
  struct State {
    ConfigLayer layer;
    std::string root, base = "all", out, manifest_path;
    CLI::Option* o_root = nullptr;
  };
  auto st = std::make_shared<State>();
  auto* sub = app.add_subcommand(
      "ingest", "Verify the raw source archives and report their shapes");
  st->o_root = sub->add_option("--data-root", st->root,
                               "directory holding mnist/ and cifar10/ "
                               "(default: $DFA_DATA_DIR, then ./data)");
  sub->add_option("--base", st->base,
                  "which corpus to verify: colored_mnist, corrupted_cifar10 or all");
  sub->add_option("--out", st->out, "write the verification report here");
  sub->add_option("--manifest", st->manifest_path, "manifest path override");
  sub->callback([st]() {
    CommonState cs;
    const std::string root =
        resolve_data_root(st->root, st->o_root->count() > 0, cs);
    const bool want_mnist = st->base == "all" || st->base == "colored_mnist";
    const bool want_cifar = st->base == "all" || st->base == "corrupted_cifar10";
    if (!want_mnist && !want_cifar) {
      throw ConfigError("unknown base '" + st->base +
                        "' (expected colored_mnist, corrupted_cifar10 or all)");
    }
    auto mw = start_manifest(st->manifest_path, "ingest", cs, 0, "", {st->out});
    json archives = json::object();
    const auto expect = [](const char* what, int got, int want) {
      if (got != want) {
        throw DataError(std::string(what) + ": expected " + std::to_string(want) +
                        " records, found " + std::to_string(got));
      }
    };
    if (want_mnist) {
      const auto tr = data::load_mnist(root + "/mnist", "train");
      const auto te = data::load_mnist(root + "/mnist", "t10k");
      expect("mnist train split", tr.n, 60000);
      expect("mnist test split", te.n, 10000);
      archives["mnist_train"] = {{"n", tr.n}, {"h", tr.h}, {"w", tr.w}};
      archives["mnist_test"] = {{"n", te.n}, {"h", te.h}, {"w", te.w}};
    }
    if (want_cifar) {
      const auto tr = data::load_cifar10_train(root + "/cifar10");
      const auto te = data::load_cifar10_test(root + "/cifar10");
      expect("cifar10 train batches", tr.n, 50000);
      expect("cifar10 test batch", te.n, 10000);
      archives["cifar10_train"] = {{"n", tr.n}, {"h", tr.h}, {"w", tr.w}};
      archives["cifar10_test"] = {{"n", te.n}, {"h", te.h}, {"w", te.w}};
    }
    json j;
    j["command"] = "ingest";
    j["data_root"] = root;
    j["archives"] = archives;
    report::finalize(j);
    deliver(j, st->out);
    if (mw) mw->finish();
  });
}

void setup_synth(CLI::App& app) {
  struct State {
    ConfigLayer layer;
    std::string root, out, manifest_path;
    CLI::Option* o_root = nullptr;
  };
  auto st = std::make_shared<State>();
  auto* sub =
      app.add_subcommand("synth", "Build a biased dataset container from raw data");
  st->layer.add_sources(*sub, /*with_preset=*/false);
  st->layer.dflags.add(*sub);
  st->o_root = sub->add_option("--data-root", st->root,
                               "directory holding mnist/ and cifar10/ "
                               "(default: $DFA_DATA_DIR, then ./data)");
  sub->add_option("--out", st->out, "dataset container output path")->required();
  sub->add_option("--manifest", st->manifest_path, "manifest path override");
  sub->callback([st]() {
    CommonState cs = st->layer.resolve();
    const std::string root =
        resolve_data_root(st->root, st->o_root->count() > 0, cs);
    const data::BiasedDataset ds = data::build_dataset(root, cs.dspec);
    auto mw = start_manifest(st->manifest_path, "synth", cs, cs.dspec.seed,
                             report::hex64(ds.content_digest()), {st->out});
    data::save_dataset(ds, st->out);
    const auto tr = ds.train.counts();
    const auto te = ds.test.counts();
    json j;
    j["command"] = "synth";
    j["output"] = st->out;
    j["base"] = data::base_dataset_name(ds.spec.base);
    j["ratio"] = ds.spec.conflict_ratio;
    j["dataset_digest"] = report::hex64(ds.content_digest());
    j["shape"] = {{"h", ds.h}, {"w", ds.w}, {"c", ds.c}};
    j["train"] = {{"n", ds.train.n},
                  {"aligned", tr.aligned},
                  {"conflicting", tr.conflicting}};
    j["test"] = {{"n", ds.test.n},
                 {"aligned", te.aligned},
                 {"conflicting", te.conflicting}};
    report::finalize(j);
    std::fputs(report::render(j).c_str(), stdout);
    if (mw) mw->finish();
  });
}

void add_train_like(CLI::App& app, bool dual) {
  struct State {
    ConfigLayer layer;
    std::string data, out, csv, cache, run_log, save_ckpt, manifest_path;
  };
  auto st = std::make_shared<State>();
  auto* sub = app.add_subcommand(
      dual ? "train" : "train-vanilla",
      dual ? "Train the dual-encoder model with scheduled feature swapping"
           : "Train the plain single-encoder baseline");
  st->layer.add_sources(*sub);
  st->layer.tflags.add(*sub);
  st->layer.rflags.add_trials(*sub);
  if (!dual) st->layer.rflags.add_quota(*sub);
  sub->add_option("--data", st->data, "dataset container")->required();
  sub->add_option("--out", st->out, "metrics report path (default: stdout)");
  sub->add_option("--csv", st->csv, "also write the per-trial table as CSV");
  sub->add_option("--cache", st->cache,
                  "artifact cache directory: finished trials are reused, run "
                  "logs and checkpoints land here");
  sub->add_option("--run-log", st->run_log,
                  "write a JSONL step log (single trial, no cache)");
  sub->add_option("--save-checkpoint", st->save_ckpt,
                  "write the final training state (single trial, no cache)");
  sub->add_option("--manifest", st->manifest_path, "manifest path override");
  sub->callback([st, dual]() {
    CommonState cs = st->layer.resolve();
    cs.tc.validate(dual);
    if (cs.run.trials < 1) throw ConfigError("trials must be >= 1");
    const bool explicit_paths = !st->run_log.empty() || !st->save_ckpt.empty();
    if (explicit_paths && !st->cache.empty()) {
      throw ConfigError(
          "--run-log/--save-checkpoint conflict with --cache; cached runs keep "
          "their logs and checkpoints inside the cache directory");
    }
    if (explicit_paths && cs.run.trials != 1) {
      throw ConfigError(
          "--run-log/--save-checkpoint apply to a single trial; use --cache "
          "for multi-trial artifacts");
    }
    const data::BiasedDataset ds = data::load_dataset(st->data);
    const int quota = dual ? -1 : cs.run.quota;
    auto mw = start_manifest(
        st->manifest_path, dual ? "train" : "train-vanilla", cs, cs.tc.seed,
        report::hex64(ds.content_digest()),
        {st->out, st->csv, st->run_log, st->save_ckpt});
    json j;
    if (explicit_paths) {
      exp::RunPaths paths;
      paths.run_log = st->run_log;
      paths.checkpoint = st->save_ckpt;
      j = exp::single_report(ds, cs.tc, dual, quota, paths);
    } else {
      j = exp::train_report(make_cache(st->cache), ds, cs.tc, dual, quota,
                            cs.run.trials);
    }
    deliver(j, st->out);
    if (!st->csv.empty()) report::write_text(st->csv, report::trials_csv(j));
    if (mw) mw->finish();
  });
}

void setup_resume(CLI::App& app) {
  struct State {
    std::string data, ckpt, out, csv, run_log, save_ckpt, manifest_path;
    int64_t iterations = 0, eval_every = -1, log_every = -1;
    bool force = false;
  };
  auto st = std::make_shared<State>();
  auto* sub = app.add_subcommand(
      "resume", "Continue a checkpointed run to its target iteration count");
  sub->add_option("--data", st->data, "dataset container")->required();
  sub->add_option("--checkpoint", st->ckpt, "checkpoint to resume")->required();
  sub->add_option("--iterations", st->iterations,
                  "override the stored iteration target (a config change; "
                  "needs --force)");
  sub->add_option("--eval-every", st->eval_every,
                  "test-set evaluation cadence in the run log (0 = off)");
  sub->add_option("--log-every", st->log_every, "run-log record cadence (0 = off)");
  sub->add_flag("--force", st->force,
                "resume even when the configuration digest no longer matches");
  sub->add_option("--out", st->out, "metrics report path (default: stdout)");
  sub->add_option("--csv", st->csv, "also write the trial table as CSV");
  sub->add_option("--run-log", st->run_log, "write a JSONL step log");
  sub->add_option("--save-checkpoint", st->save_ckpt, "write the final state");
  sub->add_option("--manifest", st->manifest_path, "manifest path override");
  sub->callback([st]() {
    const data::BiasedDataset ds = data::load_dataset(st->data);
    const auto sum = train::summarize_checkpoint(st->ckpt);
    CommonState cs;
    cs.tc = sum.config;
    auto mw = start_manifest(st->manifest_path, "resume", cs, sum.config.seed,
                             report::hex64(ds.content_digest()),
                             {st->out, st->csv, st->run_log, st->save_ckpt});
    exp::ResumeOptions opt;
    opt.force = st->force;
    opt.iterations = st->iterations;
    opt.eval_every = st->eval_every;
    opt.log_every = st->log_every;
    exp::RunPaths paths;
    paths.run_log = st->run_log;
    paths.checkpoint = st->save_ckpt;
    const json j = exp::resume_report(ds, st->ckpt, opt, paths);
    deliver(j, st->out);
    if (!st->csv.empty()) report::write_text(st->csv, report::trials_csv(j));
    if (mw) mw->finish();
  });
}

void setup_eval(CLI::App& app) {
  struct State {
    std::string data, ckpt, split = "test", out, manifest_path;
    bool force = false;
  };
  auto st = std::make_shared<State>();
  auto* sub = app.add_subcommand(
      "eval", "Evaluate a checkpoint with the aligned/conflicting breakdown");
  sub->add_option("--data", st->data, "dataset container")->required();
  sub->add_option("--checkpoint", st->ckpt, "trained checkpoint")->required();
  sub->add_option("--split", st->split, "split to score: test (default) or train");
  sub->add_flag("--force", st->force,
                "evaluate even when the configuration digest no longer "
                "matches (e.g. a different dataset build)");
  sub->add_option("--out", st->out, "report path (default: stdout)");
  sub->add_option("--manifest", st->manifest_path, "manifest path override");
  sub->callback([st]() {
    const data::BiasedDataset ds = data::load_dataset(st->data);
    const auto sum = train::summarize_checkpoint(st->ckpt);
    CommonState cs;
    cs.tc = sum.config;
    auto mw = start_manifest(st->manifest_path, "eval", cs, sum.config.seed,
                             report::hex64(ds.content_digest()), {st->out});
    const data::Split& split = pick_split(ds, st->split);
    eval::Breakdown br;
    if (sum.dual) {
      const auto tr = train::DualTrainer::resume(st->ckpt, ds, sum.config, st->force);
      br = eval::evaluate(tr.model(), ds, split, tr.prep());
    } else {
      const auto tr =
          train::VanillaTrainer::resume(st->ckpt, ds, sum.config, st->force);
      br = eval::evaluate(tr.model(), ds, split, tr.prep());
    }
    json j = breakdown_json(br);
    j["command"] = "eval";
    j["split"] = st->split;
    j["mode"] = train::run_mode(sum.dual, sum.quota);
    j["iterations"] = sum.t;
    j["dataset_digest"] = report::hex64(ds.content_digest());
    j["config_digest"] = report::hex64(sum.config_digest);
    report::finalize(j);
    deliver(j, st->out);
    if (mw) mw->finish();
  });
}

void setup_diversity(CLI::App& app) {
  struct State {
    ConfigLayer layer;
    std::string data1, data5, out, csv, cache, manifest_path;
  };
  auto st = std::make_shared<State>();
  auto* sub = app.add_subcommand(
      "diversity",
      "Grid over conflicting-sample diversity (dataset ratio) and per-batch "
      "sampling ratio, trained on the plain baseline");
  st->layer.add_sources(*sub);
  st->layer.tflags.add(*sub);
  st->layer.rflags.add_trials(*sub);
  sub->add_option("--data", st->data1, "dataset container built at ratio 0.01")
      ->required();
  sub->add_option("--data5", st->data5, "dataset container built at ratio 0.05")
      ->required();
  sub->add_option("--out", st->out, "grid report path (default: stdout)");
  sub->add_option("--csv", st->csv, "also write the 4-cell grid as CSV");
  sub->add_option("--cache", st->cache, "artifact cache directory");
  sub->add_option("--manifest", st->manifest_path, "manifest path override");
  sub->callback([st]() {
    CommonState cs = st->layer.resolve();
    cs.tc.validate(/*dual=*/false);
    const data::BiasedDataset ds1 = data::load_dataset(st->data1);
    const data::BiasedDataset ds5 = data::load_dataset(st->data5);
    auto mw = start_manifest(st->manifest_path, "diversity", cs, cs.tc.seed,
                             report::hex64(ds1.content_digest()),
                             {st->out, st->csv});
    const json j = exp::diversity_report(make_cache(st->cache), ds1, ds5, cs.tc,
                                         cs.run.trials);
    deliver(j, st->out);
    if (!st->csv.empty()) report::write_text(st->csv, report::diversity_csv(j));
    if (mw) mw->finish();
  });
}

void setup_ablate(CLI::App& app) {
  struct State {
    ConfigLayer layer;
    std::string data, out, csv, cache, manifest_path;
  };
  auto st = std::make_shared<State>();
  auto* sub = app.add_subcommand(
      "ablate",
      "Train the four-row ladder: vanilla, disentangle-only, swapping from "
      "the start, and scheduled swapping");
  st->layer.add_sources(*sub);
  st->layer.tflags.add(*sub);
  st->layer.rflags.add_trials(*sub);
  sub->add_option("--data", st->data, "dataset container")->required();
  sub->add_option("--out", st->out, "ladder report path (default: stdout)");
  sub->add_option("--csv", st->csv, "also write the ladder as CSV");
  sub->add_option("--cache", st->cache, "artifact cache directory");
  sub->add_option("--manifest", st->manifest_path, "manifest path override");
  sub->callback([st]() {
    CommonState cs = st->layer.resolve();
    cs.tc.validate(/*dual=*/true);
    const data::BiasedDataset ds = data::load_dataset(st->data);
    auto mw = start_manifest(st->manifest_path, "ablate", cs, cs.tc.seed,
                             report::hex64(ds.content_digest()),
                             {st->out, st->csv});
    const json j =
        exp::ablation_report(make_cache(st->cache), ds, cs.tc, cs.run.trials);
    deliver(j, st->out);
    if (!st->csv.empty()) report::write_text(st->csv, report::ablation_csv(j));
    if (mw) mw->finish();
  });
}

void setup_probe_swap(CLI::App& app) {
  struct State {
    ConfigLayer layer;
    std::string data, ckpt, out, manifest_path;
  };
  auto st = std::make_shared<State>();
  auto* sub = app.add_subcommand(
      "probe-swap",
      "Score a trained dual model before and after whole-split bias-feature "
      "swapping");
  st->layer.add_sources(*sub, /*with_preset=*/false);
  st->layer.rflags.add_probe(*sub);
  sub->add_option("--data", st->data, "dataset container")->required();
  sub->add_option("--checkpoint", st->ckpt, "trained dual checkpoint")->required();
  sub->add_option("--out", st->out, "probe report path (default: stdout)");
  sub->add_option("--manifest", st->manifest_path, "manifest path override");
  sub->callback([st]() {
    CommonState cs = st->layer.resolve();
    const data::BiasedDataset ds = data::load_dataset(st->data);
    const auto sum = train::summarize_checkpoint(st->ckpt);
    cs.tc = sum.config;
    auto mw = start_manifest(st->manifest_path, "probe-swap", cs, cs.run.probe_seed,
                             report::hex64(ds.content_digest()), {st->out});
    const json j =
        exp::probe_report(ds, sum.config, st->ckpt, cs.run.probe_seed, cs.run.perms);
    deliver(j, st->out);
    if (mw) mw->finish();
  });
}

void setup_dump_embeddings(CLI::App& app) {
  struct State {
    std::string data, ckpt, split = "test", out, manifest_path;
  };
  auto st = std::make_shared<State>();
  auto* sub = app.add_subcommand(
      "dump-embeddings",
      "Write both latent halves of every sample in a split as CSV");
  sub->add_option("--data", st->data, "dataset container")->required();
  sub->add_option("--checkpoint", st->ckpt, "trained dual checkpoint")->required();
  sub->add_option("--split", st->split, "split to encode: test (default) or train");
  sub->add_option("--out", st->out, "CSV output path")->required();
  sub->add_option("--manifest", st->manifest_path, "manifest path override");
  sub->callback([st]() {
    const data::BiasedDataset ds = data::load_dataset(st->data);
    const auto sum = train::summarize_checkpoint(st->ckpt);
    CommonState cs;
    cs.tc = sum.config;
    auto mw = start_manifest(st->manifest_path, "dump-embeddings", cs,
                             sum.config.seed, report::hex64(ds.content_digest()),
                             {st->out});
    const data::Split& split = pick_split(ds, st->split);
    const auto tr = train::DualTrainer::resume(st->ckpt, ds, sum.config);
    eval::dump_embeddings(tr.model(), ds, split, tr.prep(), st->out);
    json j;
    j["command"] = "dump-embeddings";
    j["output"] = st->out;
    j["split"] = st->split;
    j["rows"] = split.n;
    j["columns"] = 3 + 2 * sum.config.latent_dim;
    report::finalize(j);
    std::fputs(report::render(j).c_str(), stdout);
    if (mw) mw->finish();
  });
}

void setup_gradcheck(CLI::App& app) {
  struct State {
    diag::GradCheckSpec spec;
    std::string out, manifest_path;
  };
  auto st = std::make_shared<State>();
  auto* sub = app.add_subcommand(
      "gradcheck",
      "Compare reverse-mode gradients of the full composite objective against "
      "64-bit central finite differences on seeded random models");
  sub->add_option("--instances", st->spec.instances, "number of random instances");
  sub->add_option("--seed", st->spec.seed, "instance seed");
  sub->add_option("--batch-size", st->spec.batch, "rows per random batch");
  sub->add_option("--step", st->spec.h, "central-difference step");
  sub->add_option("--tolerance", st->spec.tolerance,
                  "pass threshold on the max relative error");
  sub->add_option("--coords", st->spec.coords_per_tensor,
                  "sampled coordinates per parameter tensor");
  sub->add_option("--out", st->out, "report path (default: stdout)");
  sub->add_option("--manifest", st->manifest_path, "manifest path override");
  sub->callback([st]() {
    CommonState cs;
    auto mw = start_manifest(st->manifest_path, "gradcheck", cs, st->spec.seed, "",
                             {st->out});
    const auto r = diag::gradcheck_dual(st->spec);
    json j;
    j["command"] = "gradcheck";
    j["instances"] = r.instances;
    j["coords_checked"] = r.coords_checked;
    j["kink_skips"] = r.kink_skips;
    j["max_rel_err"] = r.max_rel_err;
    j["tolerance"] = r.tolerance;
    j["pass"] = r.pass;
    j["worst"] = {{"param", r.worst_param},
                  {"coord", r.worst_coord},
                  {"analytic", r.worst_analytic},
                  {"numeric", r.worst_numeric}};
    report::finalize(j);
    deliver(j, st->out);
    if (mw) mw->finish();
    if (!r.pass) {
      std::cerr << "gradcheck failed: max relative error " << r.max_rel_err
                << " exceeds tolerance " << r.tolerance << "\n";
      g_exit = 3;
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Debiasing lab: biased dataset synthesis, dual-encoder training with "
      "scheduled feature swapping, and the matching evaluation suite"};
  app.require_subcommand(1);
  setup_ingest(app);
  setup_synth(app);
  add_train_like(app, /*dual=*/true);
  add_train_like(app, /*dual=*/false);
  setup_resume(app);
  setup_eval(app);
  setup_diversity(app);
  setup_ablate(app);
  setup_probe_swap(app);
  setup_dump_embeddings(app);
  setup_gradcheck(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ContractError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return g_exit;
}
