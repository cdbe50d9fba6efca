#include "dfa/train/trainer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dfa/ad/ops.hpp"
#include "dfa/train/checkpoint.hpp"

namespace dfa::train {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const char* encoder_name(EncoderKind k) {
  return k == EncoderKind::mlp ? "mlp" : "conv_small";
}

ModelGeometry geometry_for(const data::BiasedDataset& ds, const TrainConfig& cfg) {
  ModelGeometry geo;
  geo.kind = cfg.encoder;
  geo.in_h = ds.h;
  geo.in_w = ds.w;
  geo.in_c = ds.c;
  geo.hidden = cfg.hidden;
  geo.latent_dim = cfg.latent_dim;
  geo.num_classes = 10;
  return geo;
}

ad::AdamConfig adam_config(double lr) {
  ad::AdamConfig ac;
  ac.lr = lr;
  return ac;  // beta1 0.9, beta2 0.999, eps 1e-8, weight_decay 0
}

// Difficulty inputs for the current batch: live per-batch losses, or the
// per-sample running average when an EMA factor is configured.
std::pair<std::vector<float>, std::vector<float>> difficulty_inputs(
    TrainerCore& core, const std::vector<int64_t>& idx, const std::vector<float>& ce_i,
    const std::vector<float>& ce_b) {
  if (core.cfg.w_ema <= 0.0) return {ce_i, ce_b};
  const double a = core.cfg.w_ema;
  std::vector<float> out_i(idx.size()), out_b(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) {
    const auto s = static_cast<size_t>(idx[k]);
    if (!core.ema_touched[s]) {
      core.ema_i[s] = ce_i[k];
      core.ema_b[s] = ce_b[k];
      core.ema_touched[s] = 1;
    } else {
      core.ema_i[s] = a * core.ema_i[s] + (1.0 - a) * ce_i[k];
      core.ema_b[s] = a * core.ema_b[s] + (1.0 - a) * ce_b[k];
    }
    out_i[k] = static_cast<float>(core.ema_i[s]);
    out_b[k] = static_cast<float>(core.ema_b[s]);
  }
  return {out_i, out_b};
}

void fill_w_stats(StepStats& st, const std::vector<float>& w,
                  const data::Split& split, const std::vector<int64_t>& idx) {
  double sum_a = 0.0, sum_c = 0.0;
  int64_t n_a = 0, n_c = 0;
  for (size_t k = 0; k < idx.size(); ++k) {
    if (split.aligned[static_cast<size_t>(idx[k])]) {
      sum_a += w[k];
      ++n_a;
    } else {
      sum_c += w[k];
      ++n_c;
    }
  }
  if (n_a > 0) st.w_mean_aligned = sum_a / static_cast<double>(n_a);
  if (n_c > 0) st.w_mean_conflicting = sum_c / static_cast<double>(n_c);
}

void check_finite(double total, const StepStats& st) {
  if (std::isfinite(total)) return;
  std::ostringstream os;
  os << "non-finite training loss at iteration " << st.t << " (lr " << st.lr
     << ", l_dis " << st.l_dis;
  if (st.l_swap) os << ", l_swap " << *st.l_swap;
  os << ")";
  throw NumericError(os.str());
}

detail::RawCheckpoint capture(const TrainerCore& core, uint8_t kind, int32_t quota,
                              uint64_t config_digest, const std::string& config_text,
                              const std::vector<ad::Parameter<float>*>& params) {
  detail::RawCheckpoint ck;
  ck.kind = kind;
  ck.quota = quota;
  ck.config_digest = config_digest;
  ck.config_text = config_text;
  ck.t = core.t;
  std::ostringstream sb(std::ios::binary);
  core.sampler->save(sb);
  ck.sampler_blob = sb.str();
  ck.swap_rng_state = core.swap_rng.save();
  ck.has_ema = core.cfg.w_ema > 0.0;
  if (ck.has_ema) {
    ck.ema_i = core.ema_i;
    ck.ema_b = core.ema_b;
    ck.ema_touched = core.ema_touched;
  }
  for (const auto* p : params) {
    detail::RawCheckpoint::Param cp;
    cp.name = p->name;
    cp.steps = p->steps;
    cp.value = p->value.vals();
    cp.m = p->m;
    cp.v = p->v;
    ck.params.push_back(std::move(cp));
  }
  return ck;
}

void apply(const detail::RawCheckpoint& ck, TrainerCore& core, uint8_t kind,
           int32_t quota, uint64_t config_digest, bool force,
           const std::vector<ad::Parameter<float>*>& params, const std::string& path) {
  if (ck.kind != kind) {
    throw DataError(path + " holds a different model family than this run");
  }
  if (ck.quota != quota) {
    throw DataError(path + " was written with a different batch composition");
  }
  if (ck.config_digest != config_digest && !force) {
    throw DataError(path +
                    " was written under a different training configuration; "
                    "pass force to restore parameters anyway");
  }
  if (ck.params.size() != params.size()) {
    throw DataError(path + " holds " + std::to_string(ck.params.size()) +
                    " parameters, model has " + std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    auto& dst = *params[i];
    const auto& src = ck.params[i];
    if (src.name != dst.name || src.value.size() != dst.value.vals().size()) {
      throw DataError(path + ": parameter " + std::to_string(i) + " is " + src.name +
                      "[" + std::to_string(src.value.size()) + "], model expects " +
                      dst.name + "[" + std::to_string(dst.value.vals().size()) + "]");
    }
  }
  core.t = ck.t;
  std::istringstream sb(ck.sampler_blob, std::ios::binary);
  core.sampler->load(sb);
  core.swap_rng.restore(ck.swap_rng_state);
  if (core.cfg.w_ema > 0.0) {
    if (!ck.has_ema || ck.ema_i.size() != core.ema_i.size()) {
      throw DataError(path + " lacks the per-sample difficulty state this config needs");
    }
    core.ema_i = ck.ema_i;
    core.ema_b = ck.ema_b;
    core.ema_touched = ck.ema_touched;
  }
  for (size_t i = 0; i < params.size(); ++i) {
    auto& dst = *params[i];
    const auto& src = ck.params[i];
    dst.value.vals() = src.value;
    dst.m = src.m;
    dst.v = src.v;
    dst.steps = src.steps;
    dst.value.zero_grad();
  }
}

}  // namespace

void TrainConfig::validate(bool dual) const {
  weights.validate();
  if (hidden < 1 || latent_dim < 1) throw ConfigError("model widths must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (lr_decay_step < 1) throw ConfigError("lr_decay_step must be >= 1");
  if (!(lr_decay_gamma > 0.0 && lr_decay_gamma <= 1.0)) {
    throw ConfigError("lr_decay_gamma must lie in (0,1]");
  }
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (t_swap < 0) throw ConfigError("t_swap must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const bool swapping = dual && weights.lambda_swap > 0.0 && t_swap < iterations;
  if (swapping && batch_size < 2) {
    throw ConfigError("batch_size must be >= 2 when feature swapping is enabled");
  }
  if (w_ema < 0.0 || w_ema >= 1.0) throw ConfigError("w_ema must lie in [0,1)");
  if (eval_every < 0 || log_every < 0) throw ConfigError("log cadences must be >= 0");
}

std::string TrainConfig::canonical_text(const std::string& mode) const {
  // Logging cadences are deliberately absent: they cannot change the
  // trajectory, so checkpoints stay valid across them.
  std::ostringstream os;
  os << "mode = " << mode << "\n";
  os << "encoder = " << encoder_name(encoder) << "\n";
  os << "hidden = " << hidden << "\n";
  os << "latent_dim = " << latent_dim << "\n";
  os << "lambda_dis = " << fmt_double(weights.lambda_dis) << "\n";
  os << "lambda_swap_b = " << fmt_double(weights.lambda_swap_b) << "\n";
  os << "lambda_swap = " << fmt_double(weights.lambda_swap) << "\n";
  os << "q = " << fmt_double(weights.q) << "\n";
  os << "lr = " << fmt_double(lr) << "\n";
  os << "lr_decay_step = " << lr_decay_step << "\n";
  os << "lr_decay_gamma = " << fmt_double(lr_decay_gamma) << "\n";
  os << "iterations = " << iterations << "\n";
  os << "t_swap = " << t_swap << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "seed = " << seed << "\n";
  os << "augment = " << (augment ? 1 : 0) << "\n";
  os << "normalize = " << (normalize ? 1 : 0) << "\n";
  os << "w_ema = " << fmt_double(w_ema) << "\n";
  return os.str();
}

uint64_t TrainConfig::digest(const std::string& mode, uint64_t dataset_digest) const {
  const std::string text = canonical_text(mode);
  uint64_t d = fnv1a(text.data(), text.size());
  d = fnv1a(&dataset_digest, sizeof(dataset_digest), d);
  return d;
}

TrainConfig preset_cmnist() {
  TrainConfig cfg;
  cfg.encoder = EncoderKind::mlp;
  cfg.weights.lambda_dis = 10.0;
  cfg.weights.lambda_swap_b = 10.0;
  cfg.weights.lambda_swap = 1.0;
  cfg.lr = 0.01;
  cfg.iterations = 50000;
  cfg.t_swap = 10000;
  cfg.batch_size = 256;
  return cfg;
}

TrainConfig preset_cifar_small() {
  TrainConfig cfg;
  cfg.encoder = EncoderKind::conv_small;
  cfg.weights.lambda_dis = 5.0;
  cfg.weights.lambda_swap_b = 5.0;
  cfg.weights.lambda_swap = 1.0;
  cfg.lr = 0.001;
  cfg.iterations = 30000;
  cfg.t_swap = 10000;
  cfg.batch_size = 256;
  cfg.augment = true;
  cfg.normalize = true;
  return cfg;
}

double apply_lr_schedule(int64_t t, const TrainConfig& cfg) {
  if (t <= cfg.t_swap) return cfg.lr;
  const int64_t decays = (t - cfg.t_swap) / cfg.lr_decay_step;
  return cfg.lr * std::pow(cfg.lr_decay_gamma, static_cast<double>(decays));
}

void TrainerCore::init(const data::BiasedDataset& dataset, const TrainConfig& config,
                       bool dual) {
  config.validate(dual);
  ds = &dataset;
  cfg = config;
  prep.flatten = cfg.encoder == EncoderKind::mlp;
  prep.normalize = cfg.normalize;
  prep.augment = cfg.augment;
  prep.augment_seed = mix_seed(cfg.seed, rng_tag::augment);
  sampler = std::make_unique<EpochSampler>(dataset.train.n,
                                           Rng::stream(cfg.seed, rng_tag::batch));
  swap_rng = Rng::stream(cfg.seed, rng_tag::swap);
  t = 0;
  if (cfg.w_ema > 0.0) {
    const auto n = static_cast<size_t>(dataset.train.n);
    ema_i.assign(n, 0.0);
    ema_b.assign(n, 0.0);
    ema_touched.assign(n, 0);
  }
}

DualTrainer::DualTrainer(const data::BiasedDataset& ds, const TrainConfig& cfg) {
  core_.init(ds, cfg, /*dual=*/true);
  Rng init_rng = Rng::stream(cfg.seed, rng_tag::init);
  model_ = DualEncoderModel<float>::make(geometry_for(ds, core_.cfg), init_rng);
}

StepStats DualTrainer::step() {
  const TrainConfig& cfg = core_.cfg;
  const data::Split& split = core_.ds->train;
  StepStats st;
  st.t = core_.t + 1;
  st.lr = apply_lr_schedule(st.t, cfg);

  const auto idx = core_.sampler->next(cfg.batch_size);
  const auto x = assemble_batch(*core_.ds, split, idx, core_.prep, st.t);
  const auto y = batch_labels(split, idx);

  core_.tape.reset();
  const auto z = model_.encode(&core_.tape, x);
  const auto [logits_i, logits_b] = model_.classify(&core_.tape, z);

  const auto ce_i = ce_values(logits_i, y);
  const auto ce_b = ce_values(logits_b, y);
  const auto [diff_i, diff_b] = difficulty_inputs(core_, idx, ce_i, ce_b);
  const auto w = relative_difficulty(diff_i, diff_b);
  fill_w_stats(st, w.vals(), split, idx);

  auto l_dis = disentangle_loss(&core_.tape, w, logits_i, logits_b, y, cfg.weights);
  st.l_dis = l_dis.item();

  ad::Tensor<float> total = l_dis;
  const bool gate = st.t > cfg.t_swap && cfg.weights.lambda_swap > 0.0;
  if (gate) {
    const auto sw = model_.swap(&core_.tape, z, y, core_.swap_rng);
    const auto [si, sb] = model_.classify_swapped(&core_.tape, z, sw);
    auto l_swap = swap_loss(&core_.tape, w, si, sb, y, sw.donor_labels, cfg.weights);
    st.l_swap = l_swap.item();
    total = total_loss(&core_.tape, l_dis, &l_swap, st.t, cfg.t_swap, cfg.weights);
  }
  check_finite(total.item(), st);

  core_.tape.backward(total);
  auto params = model_.parameters();
  ad::adam_step(std::span<ad::Parameter<float>*>(params), adam_config(st.lr));

  core_.t = st.t;
  return st;
}

uint64_t DualTrainer::param_digest() const {
  auto params = const_cast<DualTrainer*>(this)->model_.parameters();
  return parameter_digest(params);
}

void DualTrainer::save_checkpoint(const std::string& path,
                                  uint64_t dataset_digest) const {
  auto params = const_cast<DualTrainer*>(this)->model_.parameters();
  const uint64_t digest = core_.cfg.digest("dual", dataset_digest);
  detail::write_checkpoint(
      path, capture(core_, 1, -1, digest, core_.cfg.canonical_text("dual"), params));
}

DualTrainer DualTrainer::resume(const std::string& path, const data::BiasedDataset& ds,
                                const TrainConfig& cfg, bool force) {
  const auto ck = detail::read_checkpoint(path);
  DualTrainer tr(ds, cfg);
  auto params = tr.model_.parameters();
  apply(ck, tr.core_, 1, -1, cfg.digest("dual", ds.content_digest()), force, params,
        path);
  return tr;
}

VanillaTrainer::VanillaTrainer(const data::BiasedDataset& ds, const TrainConfig& cfg) {
  core_.init(ds, cfg, /*dual=*/false);
  Rng init_rng = Rng::stream(cfg.seed, rng_tag::init);
  model_ = VanillaModel<float>::make(geometry_for(ds, core_.cfg), init_rng);
}

void VanillaTrainer::use_quota_sampler(int conflicting_per_batch) {
  if (core_.t != 0) {
    throw ContractError("batch composition must be chosen before training starts");
  }
  std::vector<int64_t> aligned, conflicting;
  const auto& split = core_.ds->train;
  for (int64_t i = 0; i < split.n; ++i) {
    (split.aligned[static_cast<size_t>(i)] ? aligned : conflicting).push_back(i);
  }
  core_.sampler = std::make_unique<QuotaSampler>(
      std::move(aligned), std::move(conflicting), conflicting_per_batch,
      Rng::stream(core_.cfg.seed, rng_tag::batch));
  quota_ = conflicting_per_batch;
}

StepStats VanillaTrainer::step() {
  const TrainConfig& cfg = core_.cfg;
  const data::Split& split = core_.ds->train;
  StepStats st;
  st.t = core_.t + 1;
  st.lr = apply_lr_schedule(st.t, cfg);

  const auto idx = core_.sampler->next(cfg.batch_size);
  const auto x = assemble_batch(*core_.ds, split, idx, core_.prep, st.t);
  const auto y = batch_labels(split, idx);

  core_.tape.reset();
  auto logits = model_.logits(&core_.tape, x);
  auto ce = ad::softmax_ce(&core_.tape, logits, y);
  auto loss = ad::mean_all(&core_.tape, ce);
  st.l_dis = loss.item();
  check_finite(st.l_dis, st);

  core_.tape.backward(loss);
  auto params = model_.parameters();
  ad::adam_step(std::span<ad::Parameter<float>*>(params), adam_config(st.lr));

  core_.t = st.t;
  return st;
}

uint64_t VanillaTrainer::param_digest() const {
  auto params = const_cast<VanillaTrainer*>(this)->model_.parameters();
  return parameter_digest(params);
}

std::string run_mode(bool dual, int quota) {
  if (dual) return "dual";
  return quota < 0 ? "vanilla" : "vanilla,quota=" + std::to_string(quota);
}

void VanillaTrainer::save_checkpoint(const std::string& path,
                                     uint64_t dataset_digest) const {
  auto params = const_cast<VanillaTrainer*>(this)->model_.parameters();
  const std::string mode = run_mode(false, quota_);
  const uint64_t digest = core_.cfg.digest(mode, dataset_digest);
  detail::write_checkpoint(
      path, capture(core_, 2, quota_, digest, core_.cfg.canonical_text(mode), params));
}

VanillaTrainer VanillaTrainer::resume(const std::string& path,
                                      const data::BiasedDataset& ds,
                                      const TrainConfig& cfg, bool force) {
  const auto ck = detail::read_checkpoint(path);
  VanillaTrainer tr(ds, cfg);
  if (ck.quota >= 0) tr.use_quota_sampler(ck.quota);
  auto params = tr.model_.parameters();
  apply(ck, tr.core_, 2, ck.quota, cfg.digest(run_mode(false, ck.quota), ds.content_digest()),
        force, params, path);
  return tr;
}

uint64_t parameter_digest(const std::vector<ad::Parameter<float>*>& params) {
  uint64_t d = kFnvOffset;
  for (const auto* p : params) {
    d = fnv1a(p->name.data(), p->name.size(), d);
    const auto& vals = p->value.vals();
    d = fnv1a(vals.data(), vals.size() * sizeof(float), d);
  }
  return d;
}

CheckpointSummary summarize_checkpoint(const std::string& path) {
  const detail::RawCheckpoint ck = detail::read_checkpoint(path);
  CheckpointSummary sum;
  sum.dual = ck.kind == 1;
  sum.quota = ck.quota;
  sum.t = ck.t;
  sum.config_digest = ck.config_digest;

  const auto bad = [&](const std::string& why) -> DataError {
    return DataError("checkpoint " + path + ": stored configuration " + why);
  };
  const auto to_i64 = [&](const std::string& key, const std::string& v) {
    int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
      throw bad("holds a malformed integer for '" + key + "'");
    }
    return out;
  };
  const auto to_u64 = [&](const std::string& key, const std::string& v) {
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
      throw bad("holds a malformed unsigned integer for '" + key + "'");
    }
    return out;
  };
  const auto to_f64 = [&](const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
      throw bad("holds a malformed number for '" + key + "'");
    }
    return out;
  };

  TrainConfig& cfg = sum.config;
  std::istringstream is(ck.config_text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find(" = ");
    if (eq == std::string::npos) throw bad("has a malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "mode") {
      // kind and quota are carried by dedicated fields; the text is advisory.
    } else if (key == "encoder") {
      if (value == "mlp") {
        cfg.encoder = EncoderKind::mlp;
      } else if (value == "conv_small") {
        cfg.encoder = EncoderKind::conv_small;
      } else {
        throw bad("names an unknown encoder '" + value + "'");
      }
    } else if (key == "hidden") {
      cfg.hidden = static_cast<int>(to_i64(key, value));
    } else if (key == "latent_dim") {
      cfg.latent_dim = static_cast<int>(to_i64(key, value));
    } else if (key == "lambda_dis") {
      cfg.weights.lambda_dis = to_f64(key, value);
    } else if (key == "lambda_swap_b") {
      cfg.weights.lambda_swap_b = to_f64(key, value);
    } else if (key == "lambda_swap") {
      cfg.weights.lambda_swap = to_f64(key, value);
    } else if (key == "q") {
      cfg.weights.q = to_f64(key, value);
    } else if (key == "lr") {
      cfg.lr = to_f64(key, value);
    } else if (key == "lr_decay_step") {
      cfg.lr_decay_step = to_i64(key, value);
    } else if (key == "lr_decay_gamma") {
      cfg.lr_decay_gamma = to_f64(key, value);
    } else if (key == "iterations") {
      cfg.iterations = to_i64(key, value);
    } else if (key == "t_swap") {
      cfg.t_swap = to_i64(key, value);
    } else if (key == "batch_size") {
      cfg.batch_size = static_cast<int>(to_i64(key, value));
    } else if (key == "seed") {
      cfg.seed = to_u64(key, value);
    } else if (key == "augment") {
      cfg.augment = to_i64(key, value) != 0;
    } else if (key == "normalize") {
      cfg.normalize = to_i64(key, value) != 0;
    } else if (key == "w_ema") {
      cfg.w_ema = to_f64(key, value);
    } else {
      throw bad("contains an unknown key '" + key + "'");
    }
  }
  return sum;
}

}  // namespace dfa::train
