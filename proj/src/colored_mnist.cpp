#include <cmath>

#include "dfa/data/dataset.hpp"
#include "dfa/errors.hpp"
#include "dfa/rng.hpp"

namespace dfa::data {

namespace {

// gray in [0,255] modulated by the palette color, emitted as bytes or floats.
void colorize_into(const uint8_t* gray, int pixels, int color, bool as_float,
                   std::vector<uint8_t>& out_u8, std::vector<float>& out_f32) {
  const ColorEntry& pal = kColorPalette[static_cast<size_t>(color)];
  if (as_float) {
    for (int p = 0; p < pixels; ++p) {
      const float g = static_cast<float>(gray[p]) / 255.0f;
      for (int ch = 0; ch < 3; ++ch) {
        out_f32.push_back(g * static_cast<float>(pal.rgb[ch]) / 255.0f);
      }
    }
  } else {
    for (int p = 0; p < pixels; ++p) {
      for (int ch = 0; ch < 3; ++ch) {
        const double v = static_cast<double>(gray[p]) * pal.rgb[ch] / 255.0;
        out_u8.push_back(static_cast<uint8_t>(std::lround(v)));
      }
    }
  }
}

}  // namespace

BiasedDataset build_colored_mnist(const MnistRaw& train, const MnistRaw& test,
                                  const BiasedDatasetSpec& spec) {
  spec.validate();
  if (spec.base != BaseDataset::colored_mnist) {
    throw ConfigError("build_colored_mnist called with a non-mnist spec");
  }
  if (train.h != test.h || train.w != test.w) {
    throw DataError("train/test image extents differ");
  }

  const SplitCounts counts = resolve_counts(spec, train.n);
  std::vector<int64_t> avail(10, 0);
  for (uint8_t y : train.labels) avail[y] += 1;

  Rng assign_rng = Rng::stream(spec.seed, rng_tag::assign);
  const AssignmentPlan plan = plan_assignment(avail, counts, assign_rng);
  const auto selected = select_biased_samples(train.labels, plan, assign_rng);

  BiasedDataset ds;
  ds.spec = spec;
  ds.h = train.h;
  ds.w = train.w;
  ds.c = 3;
  const int pixels = train.h * train.w;

  Rng color_rng = Rng::stream(spec.seed, rng_tag::colorize);
  ds.train.n = static_cast<int64_t>(selected.size());
  ds.train.targets.reserve(selected.size());
  for (const auto& sel : selected) {
    const int cls = sel.target;
    const int color = sel.conflicting ? draw_other_attribute(color_rng, cls) : cls;
    ds.train.targets.push_back(static_cast<uint8_t>(cls));
    ds.train.bias.push_back(static_cast<uint8_t>(color));
    ds.train.aligned.push_back(color == cls ? 1 : 0);
    colorize_into(train.images.data() + sel.orig_index * pixels, pixels, color,
                  spec.lossless_float, ds.train.images_u8, ds.train.images_f32);
  }

  Rng test_rng = Rng::stream(spec.seed, rng_tag::test_bias);
  ds.test.n = test.n;
  for (int64_t i = 0; i < test.n; ++i) {
    const int cls = test.labels[static_cast<size_t>(i)];
    const int color = spec.test_excludes_designated
                          ? draw_other_attribute(test_rng, cls)
                          : static_cast<int>(test_rng.below(10));
    ds.test.targets.push_back(static_cast<uint8_t>(cls));
    ds.test.bias.push_back(static_cast<uint8_t>(color));
    ds.test.aligned.push_back(color == cls ? 1 : 0);
    colorize_into(test.images.data() + i * pixels, pixels, color,
                  spec.lossless_float, ds.test.images_u8, ds.test.images_f32);
  }

  const SplitCounts got = ds.train.counts();
  if (got != counts) {
    throw DataError("construction produced " + std::to_string(got.aligned) + "/" +
                    std::to_string(got.conflicting) + " but wanted " +
                    std::to_string(counts.aligned) + "/" +
                    std::to_string(counts.conflicting));
  }
  return ds;
}

}  // namespace dfa::data
