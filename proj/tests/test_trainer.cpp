#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dfa/data/dataset.hpp"
#include "dfa/errors.hpp"
#include "dfa/rng.hpp"
#include "dfa/train/batch.hpp"
#include "dfa/train/checkpoint.hpp"
#include "dfa/train/sampler.hpp"
#include "dfa/train/trainer.hpp"

using namespace dfa;
using namespace dfa::train;

namespace {

// Small in-memory dataset with both aligned and conflicting samples. Pixel
// intensities carry the class signal (y*20 + noise), so the losses actually
// shrink when the optimizer works.
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
      // Guarantee at least one sample of each group.
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

TrainConfig toy_config(uint64_t seed = 7) {
  TrainConfig cfg;
  cfg.encoder = EncoderKind::mlp;
  cfg.hidden = 16;
  cfg.latent_dim = 4;
  cfg.lr = 1e-3;
  cfg.iterations = 50;
  cfg.t_swap = 2;
  cfg.batch_size = 16;
  cfg.seed = seed;
  return cfg;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/dfa_trainer_test_") + name;
}

}  // namespace

TEST_CASE("epoch sampler covers each epoch without repeats") {
  EpochSampler s(10, Rng::stream(3, 0x77));
  auto b1 = s.next(4);
  auto b2 = s.next(4);
  // Third batch would straddle the epoch, so the leftovers are dropped and a
  // fresh permutation starts.
  auto b3 = s.next(4);
  for (const auto& b : {b1, b2, b3}) {
    CHECK(b.size() == 4);
    for (auto i : b) {
      CHECK(i >= 0);
      CHECK(i < 10);
    }
  }
  std::set<int64_t> first_epoch(b1.begin(), b1.end());
  first_epoch.insert(b2.begin(), b2.end());
  CHECK(first_epoch.size() == 8);  // no repeats within one epoch

  // batch == n yields a full permutation every call.
  EpochSampler full(6, Rng::stream(4, 0x77));
  for (int k = 0; k < 3; ++k) {
    auto b = full.next(6);
    std::set<int64_t> u(b.begin(), b.end());
    CHECK(u.size() == 6);
  }
}

TEST_CASE("epoch sampler is deterministic in its seed") {
  EpochSampler a(50, Rng::stream(9, 0x77));
  EpochSampler b(50, Rng::stream(9, 0x77));
  EpochSampler c(50, Rng::stream(10, 0x77));
  bool all_equal = true;
  bool any_diff_c = false;
  for (int k = 0; k < 20; ++k) {
    auto ba = a.next(16), bb = b.next(16), bc = c.next(16);
    if (ba != bb) all_equal = false;
    if (ba != bc) any_diff_c = true;
  }
  CHECK(all_equal);
  CHECK(any_diff_c);
}

TEST_CASE("epoch sampler rejects bad batch sizes") {
  EpochSampler s(8, Rng::stream(1, 0x77));
  CHECK_THROWS_AS(s.next(0), ContractError);
  CHECK_THROWS_AS(s.next(-3), ContractError);
  CHECK_THROWS_AS(s.next(9), DataError);
  CHECK_THROWS_AS(EpochSampler(0, Rng::stream(1, 0x77)), ContractError);
}

TEST_CASE("epoch sampler serialization resumes the exact index stream") {
  EpochSampler a(37, Rng::stream(5, 0x77));
  for (int k = 0; k < 3; ++k) a.next(10);  // leave a mid-epoch cursor
  std::ostringstream os(std::ios::binary);
  a.save(os);

  EpochSampler b(37, Rng::stream(999, 0x77));  // wrong seed, then restored
  std::istringstream is(os.str(), std::ios::binary);
  b.load(is);
  for (int k = 0; k < 10; ++k) CHECK(a.next(10) == b.next(10));
}

TEST_CASE("quota sampler fills the quota then pads with aligned samples") {
  std::vector<int64_t> aligned{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<int64_t> conflicting{10, 11, 12};
  QuotaSampler s(aligned, conflicting, 2, Rng::stream(2, 0x77));
  CHECK(s.quota() == 2);

  std::vector<int64_t> conflict_draws, aligned_draws;
  for (int k = 0; k < 6; ++k) {
    auto b = s.next(5);
    REQUIRE(b.size() == 5);
    for (int i = 0; i < 2; ++i) {
      CHECK(b[static_cast<size_t>(i)] >= 10);
      conflict_draws.push_back(b[static_cast<size_t>(i)]);
    }
    for (int i = 2; i < 5; ++i) {
      CHECK(b[static_cast<size_t>(i)] < 10);
      aligned_draws.push_back(b[static_cast<size_t>(i)]);
    }
  }
  // Pools cycle without replacement: 12 draws from a 3-element conflicting
  // pool must hit every element exactly four times.
  for (int64_t v : {10, 11, 12}) {
    CHECK(std::count(conflict_draws.begin(), conflict_draws.end(), v) == 4);
  }
  // First 10 aligned draws form a permutation of the pool.
  std::set<int64_t> first10(aligned_draws.begin(), aligned_draws.begin() + 10);
  CHECK(first10.size() == 10);
}

TEST_CASE("quota sampler input validation") {
  std::vector<int64_t> aligned{0, 1, 2};
  std::vector<int64_t> conflicting{3};
  CHECK_THROWS_AS(QuotaSampler(aligned, {}, 1, Rng::stream(1, 0x77)), DataError);
  CHECK_THROWS_AS(QuotaSampler({}, conflicting, 0, Rng::stream(1, 0x77)), DataError);
  CHECK_THROWS_AS(QuotaSampler(aligned, conflicting, -1, Rng::stream(1, 0x77)),
                  ContractError);
  QuotaSampler ok(aligned, {}, 0, Rng::stream(1, 0x77));  // zero quota, no pool
  auto b = ok.next(2);
  CHECK(b.size() == 2);
  QuotaSampler tight(aligned, conflicting, 2, Rng::stream(1, 0x77));
  CHECK_THROWS_AS(tight.next(1), DataError);  // quota exceeds batch
}

TEST_CASE("quota sampler serialization resumes the exact stream") {
  std::vector<int64_t> aligned{0, 1, 2, 3, 4, 5, 6};
  std::vector<int64_t> conflicting{7, 8, 9};
  QuotaSampler a(aligned, conflicting, 1, Rng::stream(11, 0x77));
  for (int k = 0; k < 4; ++k) a.next(4);
  std::ostringstream os(std::ios::binary);
  a.save(os);

  QuotaSampler b(aligned, conflicting, 1, Rng::stream(123, 0x77));
  std::istringstream is(os.str(), std::ios::binary);
  b.load(is);
  for (int k = 0; k < 12; ++k) CHECK(a.next(4) == b.next(4));
}

TEST_CASE("batch assembly dequantizes bytes and flattens") {
  auto ds = make_toy(21);
  const int64_t px = ds.pixels_per_image();
  std::vector<int64_t> idx{5, 0, 17};
  BatchPrep prep;  // flatten, no augment, no normalize
  auto x = assemble_batch(ds, ds.train, idx, prep, /*iteration=*/1);
  REQUIRE(x.shape() == ad::Shape{3, static_cast<int>(px)});
  for (size_t s = 0; s < idx.size(); ++s) {
    for (int64_t p = 0; p < px; ++p) {
      const float expect =
          static_cast<float>(
              ds.train.images_u8[static_cast<size_t>(idx[s] * px + p)]) /
          255.0f;
      REQUIRE(x.vals()[s * static_cast<size_t>(px) + static_cast<size_t>(p)] ==
              expect);
    }
  }

  prep.flatten = false;
  auto nhwc = assemble_batch(ds, ds.train, idx, prep, 1);
  CHECK(nhwc.shape() == ad::Shape{3, ds.h, ds.w, ds.c});
  CHECK(nhwc.vals() == x.vals());  // same memory order, different shape

  CHECK(batch_labels(ds.train, idx) ==
        std::vector<int>{ds.train.targets[5], ds.train.targets[0],
                         ds.train.targets[17]});

  std::vector<int64_t> bad{static_cast<int64_t>(ds.train.n)};
  CHECK_THROWS_AS(assemble_batch(ds, ds.train, bad, prep, 1), ContractError);
}

TEST_CASE("batch normalization applies per-channel statistics") {
  auto ds = make_toy(22);
  std::vector<int64_t> idx{3};
  BatchPrep prep;
  prep.normalize = true;
  auto x = assemble_batch(ds, ds.train, idx, prep, 1);
  const int64_t px = ds.pixels_per_image();
  for (int64_t p = 0; p < px; ++p) {
    const int ch = static_cast<int>(p % 3);
    const float raw =
        static_cast<float>(ds.train.images_u8[static_cast<size_t>(3 * px + p)]) /
        255.0f;
    const float expect = (raw - kChannelMean[ch]) / kChannelStd[ch];
    REQUIRE(x.vals()[static_cast<size_t>(p)] == expect);
  }

  auto gray = make_toy(23, 8, 4, 8, 8, /*c=*/1);
  CHECK_THROWS_AS(assemble_batch(gray, gray.train, idx, prep, 1), ContractError);
}

TEST_CASE("augmentation is a deterministic pad-crop-flip with zero borders") {
  auto ds = make_toy(24);
  const int h = ds.h, w = ds.w, c = ds.c;
  const int64_t px = ds.pixels_per_image();
  BatchPrep prep;
  prep.augment = true;
  prep.augment_seed = 0xFEED;

  std::vector<int64_t> idx{2, 7};
  auto a = assemble_batch(ds, ds.train, idx, prep, 5);
  auto b = assemble_batch(ds, ds.train, idx, prep, 5);
  CHECK(a.vals() == b.vals());  // same iteration, same draws

  bool differs = false;
  for (int64_t it = 6; it < 12 && !differs; ++it) {
    auto cdiff = assemble_batch(ds, ds.train, idx, prep, it);
    differs = cdiff.vals() != a.vals();
  }
  CHECK(differs);

  // Replicate the documented per-slot stream to predict each output pixel.
  for (size_t s = 0; s < idx.size(); ++s) {
    Rng aug = Rng::stream(prep.augment_seed, 5 * idx.size() + s);
    const int dy = aug.below_int(9) - 4;
    const int dx = aug.below_int(9) - 4;
    const bool flip = aug.below(2) == 1;
    for (int y = 0; y < h; ++y) {
      for (int xc = 0; xc < w; ++xc) {
        for (int ch = 0; ch < c; ++ch) {
          const int sy = y + dy;
          const int sx = (flip ? w - 1 - xc : xc) + dx;
          float expect = 0.0f;
          if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
            expect = ds.pixel(ds.train, idx[s],
                              (static_cast<int64_t>(sy) * w + sx) * c + ch);
          }
          const size_t at = s * static_cast<size_t>(px) +
                            (static_cast<size_t>(y) * w + xc) * c +
                            static_cast<size_t>(ch);
          REQUIRE(a.vals()[at] == expect);
        }
      }
    }
  }
}

TEST_CASE("learning rate schedule decays from the swap point") {
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.t_swap = 10000;
  cfg.lr_decay_step = 10000;
  cfg.lr_decay_gamma = 0.5;
  CHECK(apply_lr_schedule(1, cfg) == 0.01);
  CHECK(apply_lr_schedule(10000, cfg) == 0.01);
  CHECK(apply_lr_schedule(10001, cfg) == 0.01);     // 1/10000 full steps
  CHECK(apply_lr_schedule(19999, cfg) == 0.01);
  CHECK(apply_lr_schedule(20000, cfg) == 0.005);    // first full step
  CHECK(apply_lr_schedule(29999, cfg) == 0.005);
  CHECK(apply_lr_schedule(30000, cfg) == 0.0025);
  CHECK(apply_lr_schedule(40000, cfg) == 0.00125);
  CHECK(apply_lr_schedule(50000, cfg) == 0.000625);

  cfg.t_swap = 0;
  CHECK(apply_lr_schedule(1, cfg) == 0.01);
  CHECK(apply_lr_schedule(10000, cfg) == 0.005);

  cfg.lr_decay_gamma = 1.0;
  CHECK(apply_lr_schedule(1000000, cfg) == 0.01);
}

TEST_CASE("training config validation") {
  TrainConfig cfg = toy_config();
  CHECK_NOTHROW(cfg.validate(true));

  auto expect_reject = [&](auto mutate) {
    TrainConfig c = toy_config();
    mutate(c);
    CHECK_THROWS_AS(c.validate(true), ConfigError);
  };
  expect_reject([](TrainConfig& c) { c.lr = 0.0; });
  expect_reject([](TrainConfig& c) { c.lr = -1.0; });
  expect_reject([](TrainConfig& c) { c.lr_decay_step = 0; });
  expect_reject([](TrainConfig& c) { c.lr_decay_gamma = 0.0; });
  expect_reject([](TrainConfig& c) { c.lr_decay_gamma = 1.5; });
  expect_reject([](TrainConfig& c) { c.iterations = -1; });
  expect_reject([](TrainConfig& c) { c.t_swap = -1; });
  expect_reject([](TrainConfig& c) { c.batch_size = 0; });
  expect_reject([](TrainConfig& c) { c.hidden = 0; });
  expect_reject([](TrainConfig& c) { c.latent_dim = 0; });
  expect_reject([](TrainConfig& c) { c.w_ema = 1.0; });
  expect_reject([](TrainConfig& c) { c.w_ema = -0.1; });
  expect_reject([](TrainConfig& c) { c.weights.q = 0.0; });
  expect_reject([](TrainConfig& c) { c.weights.lambda_dis = -1.0; });

  // A single-sample batch only conflicts with an active swap schedule.
  TrainConfig tiny = toy_config();
  tiny.batch_size = 1;
  CHECK_THROWS_AS(tiny.validate(true), ConfigError);
  CHECK_NOTHROW(tiny.validate(false));  // vanilla never swaps
  tiny.weights.lambda_swap = 0.0;
  CHECK_NOTHROW(tiny.validate(true));
  tiny.weights.lambda_swap = 1.0;
  tiny.t_swap = tiny.iterations;  // schedule never fires
  CHECK_NOTHROW(tiny.validate(true));
}

TEST_CASE("config digest tracks trajectory-relevant fields only") {
  auto ds_digest = make_toy(30).content_digest();
  TrainConfig a = toy_config();
  TrainConfig b = a;
  b.eval_every = 1;  // cadence fields must not invalidate checkpoints
  b.log_every = 77;
  CHECK(a.digest("dual", ds_digest) == b.digest("dual", ds_digest));

  b = a;
  b.seed = a.seed + 1;
  CHECK(a.digest("dual", ds_digest) != b.digest("dual", ds_digest));
  b = a;
  b.lr = 0.02;
  CHECK(a.digest("dual", ds_digest) != b.digest("dual", ds_digest));
  CHECK(a.digest("dual", ds_digest) != a.digest("vanilla", ds_digest));
  CHECK(a.digest("dual", ds_digest) != a.digest("dual", ds_digest + 1));
}

TEST_CASE("dual trainer opens the swap path only after the scheduled point") {
  auto ds = make_toy(31);
  TrainConfig cfg = toy_config();
  cfg.t_swap = 2;
  DualTrainer tr(ds, cfg);

  for (int64_t t = 1; t <= 5; ++t) {
    auto st = tr.step();
    CHECK(st.t == t);
    CHECK(st.lr == cfg.lr);
    CHECK(std::isfinite(st.l_dis));
    if (t <= cfg.t_swap) {
      CHECK_FALSE(st.l_swap.has_value());
      CHECK_FALSE(tr.last_tape().contains_op("gather_rows"));
    } else {
      REQUIRE(st.l_swap.has_value());
      CHECK(std::isfinite(*st.l_swap));
      CHECK(tr.last_tape().contains_op("gather_rows"));
    }
  }
  CHECK(tr.completed() == 5);
}

TEST_CASE("difficulty statistics cover both sample groups on a full batch") {
  auto ds = make_toy(32);
  TrainConfig cfg = toy_config();
  cfg.batch_size = static_cast<int>(ds.train.n);  // whole set, both groups
  DualTrainer tr(ds, cfg);
  auto st = tr.step();
  REQUIRE(st.w_mean_aligned.has_value());
  REQUIRE(st.w_mean_conflicting.has_value());
  CHECK(*st.w_mean_aligned >= 0.0);
  CHECK(*st.w_mean_aligned <= 1.0);
  CHECK(*st.w_mean_conflicting >= 0.0);
  CHECK(*st.w_mean_conflicting <= 1.0);
}

TEST_CASE("disabling the swap weight matches a never-firing schedule bitwise") {
  auto ds = make_toy(33);
  TrainConfig a = toy_config();
  a.weights.lambda_swap = 0.0;
  a.t_swap = 0;  // would fire immediately if the weight allowed it
  TrainConfig b = toy_config();
  b.weights.lambda_swap = 1.0;
  b.t_swap = 1000000;  // beyond every step taken here

  DualTrainer ta(ds, a), tb(ds, b);
  for (int k = 0; k < 20; ++k) {
    auto sa = ta.step(), sb = tb.step();
    REQUIRE(sa.l_dis == sb.l_dis);
    CHECK_FALSE(sa.l_swap.has_value());
    CHECK_FALSE(sb.l_swap.has_value());
  }
  CHECK(ta.param_digest() == tb.param_digest());
}

TEST_CASE("identical runs produce identical parameters and stats") {
  auto ds = make_toy(34);
  TrainConfig cfg = toy_config(41);
  DualTrainer a(ds, cfg), b(ds, cfg);
  for (int k = 0; k < 8; ++k) {
    auto sa = a.step(), sb = b.step();
    REQUIRE(sa.l_dis == sb.l_dis);
    REQUIRE(sa.l_swap.has_value() == sb.l_swap.has_value());
    if (sa.l_swap) REQUIRE(*sa.l_swap == *sb.l_swap);
  }
  CHECK(a.param_digest() == b.param_digest());

  TrainConfig other = toy_config(42);
  DualTrainer c(ds, other);
  for (int k = 0; k < 8; ++k) c.step();
  CHECK(a.param_digest() != c.param_digest());
}

TEST_CASE("vanilla trainer learns the toy signal and respects quotas") {
  auto ds = make_toy(35);
  TrainConfig cfg = toy_config();
  cfg.lr = 1e-2;
  VanillaTrainer tr(ds, cfg);
  tr.use_quota_sampler(4);
  CHECK(tr.quota() == 4);

  double first = 0.0, last = 0.0;
  for (int k = 0; k < 60; ++k) {
    auto st = tr.step();
    if (k < 10) first += st.l_dis;
    if (k >= 50) last += st.l_dis;
    CHECK_FALSE(st.l_swap.has_value());
  }
  CHECK(last < first);  // averages over 10 steps each

  CHECK_THROWS_AS(tr.use_quota_sampler(2), ContractError);  // mid-run switch
}

TEST_CASE("quota sampler wiring composes batches from the dataset groups") {
  auto ds = make_toy(36);
  TrainConfig cfg = toy_config();
  cfg.batch_size = 8;
  VanillaTrainer tr(ds, cfg);
  tr.use_quota_sampler(3);
  // Steal the sampler stream through a fresh trainer with the same seed: the
  // index composition is observable through per-step losses only, so instead
  // verify the underlying pools directly.
  std::vector<int64_t> aligned, conflicting;
  for (int64_t i = 0; i < ds.train.n; ++i) {
    (ds.train.aligned[static_cast<size_t>(i)] ? aligned : conflicting).push_back(i);
  }
  QuotaSampler s(aligned, conflicting, 3, Rng::stream(cfg.seed, rng_tag::batch));
  for (int k = 0; k < 6; ++k) {
    auto idx = s.next(8);
    for (int i = 0; i < 3; ++i) {
      CHECK_FALSE(ds.train.aligned[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
    }
    for (int i = 3; i < 8; ++i) {
      CHECK(ds.train.aligned[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
    }
  }
}

TEST_CASE("conv trainer runs end to end on image-shaped input") {
  auto ds = make_toy(37, 32, 16);
  TrainConfig cfg = toy_config();
  cfg.encoder = EncoderKind::conv_small;
  cfg.hidden = 8;
  cfg.latent_dim = 4;
  cfg.batch_size = 8;
  cfg.t_swap = 1;
  cfg.augment = true;
  cfg.normalize = true;
  DualTrainer tr(ds, cfg);
  CHECK_FALSE(tr.prep().flatten);
  CHECK(tr.prep().augment);
  CHECK(tr.prep().normalize);
  for (int k = 0; k < 3; ++k) {
    auto st = tr.step();
    CHECK(std::isfinite(st.l_dis));
  }
  CHECK(tr.last_tape().contains_op("gather_rows"));
}

TEST_CASE("non-finite losses abort with a diagnostic") {
  auto ds = make_toy(38);
  TrainConfig cfg = toy_config();
  cfg.lr = 1e12;  // Adam pushes weights to ~1e12, overflowing float forward
  VanillaTrainer tr(ds, cfg);
  bool threw = false;
  for (int k = 0; k < 5 && !threw; ++k) {
    try {
      tr.step();
    } catch (const NumericError& e) {
      threw = true;
      const std::string msg = e.what();
      CHECK(msg.find("non-finite") != std::string::npos);
      CHECK(msg.find("iteration") != std::string::npos);
    }
  }
  CHECK(threw);
}

TEST_CASE("checkpoint resume continues bitwise identically") {
  auto ds = make_toy(39);
  TrainConfig cfg = toy_config(17);
  cfg.t_swap = 3;
  const std::string path = temp_path("dual.ckpt");

  DualTrainer a(ds, cfg);
  for (int k = 0; k < 5; ++k) a.step();
  a.save_checkpoint(path, ds.content_digest());

  std::vector<StepStats> tail_a;
  for (int k = 0; k < 5; ++k) tail_a.push_back(a.step());

  DualTrainer b = DualTrainer::resume(path, ds, cfg);
  CHECK(b.completed() == 5);
  for (int k = 0; k < 5; ++k) {
    auto st = b.step();
    REQUIRE(st.t == tail_a[static_cast<size_t>(k)].t);
    REQUIRE(st.l_dis == tail_a[static_cast<size_t>(k)].l_dis);
    REQUIRE(st.l_swap.has_value() == tail_a[static_cast<size_t>(k)].l_swap.has_value());
    if (st.l_swap) REQUIRE(*st.l_swap == *tail_a[static_cast<size_t>(k)].l_swap);
  }
  CHECK(a.param_digest() == b.param_digest());
  std::remove(path.c_str());
}

TEST_CASE("checkpoint resume restores per-sample difficulty averages") {
  auto ds = make_toy(40);
  TrainConfig cfg = toy_config(18);
  cfg.w_ema = 0.7;
  cfg.t_swap = 2;
  const std::string path = temp_path("ema.ckpt");

  DualTrainer a(ds, cfg);
  for (int k = 0; k < 4; ++k) a.step();
  a.save_checkpoint(path, ds.content_digest());
  std::vector<double> tail_a;
  for (int k = 0; k < 4; ++k) tail_a.push_back(a.step().l_dis);

  DualTrainer b = DualTrainer::resume(path, ds, cfg);
  for (int k = 0; k < 4; ++k) REQUIRE(b.step().l_dis == tail_a[static_cast<size_t>(k)]);
  CHECK(a.param_digest() == b.param_digest());

  // A checkpoint written without the averages cannot serve a config that
  // needs them, even under force.
  TrainConfig off = cfg;
  off.w_ema = 0.0;
  DualTrainer c(ds, off);
  c.step();
  c.save_checkpoint(path, ds.content_digest());
  CHECK_THROWS_AS(DualTrainer::resume(path, ds, cfg, /*force=*/true), DataError);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint refuses a changed configuration unless forced") {
  auto ds = make_toy(41);
  TrainConfig cfg = toy_config(19);
  const std::string path = temp_path("guard.ckpt");

  DualTrainer a(ds, cfg);
  for (int k = 0; k < 3; ++k) a.step();
  a.save_checkpoint(path, ds.content_digest());

  TrainConfig changed = cfg;
  changed.weights.lambda_dis = 99.0;
  CHECK_THROWS_AS(DualTrainer::resume(path, ds, changed), DataError);
  DualTrainer forced = DualTrainer::resume(path, ds, changed, /*force=*/true);
  CHECK(forced.completed() == 3);

  // Cadence-only changes resume without force.
  TrainConfig cadence = cfg;
  cadence.log_every = 1;
  DualTrainer ok = DualTrainer::resume(path, ds, cadence);
  CHECK(ok.completed() == 3);

  // A different dataset is a different digest.
  auto other = make_toy(42);
  CHECK_THROWS_AS(DualTrainer::resume(path, other, cfg), DataError);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects corruption, truncation and family mixups") {
  auto ds = make_toy(43);
  TrainConfig cfg = toy_config(20);
  const std::string path = temp_path("corrupt.ckpt");

  VanillaTrainer v(ds, cfg);
  v.use_quota_sampler(2);
  for (int k = 0; k < 3; ++k) v.step();
  v.save_checkpoint(path, ds.content_digest());

  // Wrong model family.
  CHECK_THROWS_AS(DualTrainer::resume(path, ds, cfg), DataError);

  auto bytes = [&] {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  }();
  REQUIRE(bytes.size() > 200);

  auto rewrite = [&](const std::string& data) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(data.data(), static_cast<std::streamsize>(data.size()));
  };

  rewrite(bytes.substr(0, bytes.size() - 5));  // truncated
  CHECK_THROWS_AS(dfa::train::detail::read_checkpoint(path), DataError);

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;  // bit rot
  rewrite(flipped);
  CHECK_THROWS_AS(dfa::train::detail::read_checkpoint(path), DataError);

  rewrite("tiny");  // not even a header
  CHECK_THROWS_AS(dfa::train::detail::read_checkpoint(path), DataError);

  rewrite(bytes);  // intact file round-trips again
  VanillaTrainer r = VanillaTrainer::resume(path, ds, cfg);
  CHECK(r.completed() == 3);
  CHECK(r.quota() == 2);
  std::remove(path.c_str());
}

TEST_CASE("vanilla quota checkpoint resumes the composed stream") {
  auto ds = make_toy(44);
  TrainConfig cfg = toy_config(21);
  const std::string path = temp_path("vanilla.ckpt");

  VanillaTrainer a(ds, cfg);
  a.use_quota_sampler(5);
  for (int k = 0; k < 4; ++k) a.step();
  a.save_checkpoint(path, ds.content_digest());
  std::vector<double> tail;
  for (int k = 0; k < 4; ++k) tail.push_back(a.step().l_dis);

  VanillaTrainer b = VanillaTrainer::resume(path, ds, cfg);
  CHECK(b.quota() == 5);
  for (int k = 0; k < 4; ++k) REQUIRE(b.step().l_dis == tail[static_cast<size_t>(k)]);
  CHECK(a.param_digest() == b.param_digest());
  std::remove(path.c_str());
}

TEST_CASE("parameter digest reflects every parameter value") {
  auto ds = make_toy(45);
  TrainConfig cfg = toy_config(22);
  DualTrainer tr(ds, cfg);
  const uint64_t before = tr.param_digest();
  auto params = tr.model().parameters();
  REQUIRE_FALSE(params.empty());
  params.back()->value.vals().back() += 1e-3f;
  CHECK(tr.param_digest() != before);
}
