#include <cmath>

#include "dfa/data/corruptions.hpp"
#include "dfa/data/dataset.hpp"
#include "dfa/errors.hpp"
#include "dfa/rng.hpp"

namespace dfa::data {

namespace {

constexpr uint64_t kTestStreamBit = 1ULL << 63;

void corrupt_into(const uint8_t* src, int h, int w, int kind, int severity,
                  Rng& sub_rng, bool as_float, std::vector<uint8_t>& out_u8,
                  std::vector<float>& out_f32) {
  const int count = h * w * 3;
  if (severity == 0 && !as_float) {
    // Identity severity preserves the source bytes exactly.
    out_u8.insert(out_u8.end(), src, src + count);
    return;
  }
  std::vector<float> in(static_cast<size_t>(count));
  std::vector<float> out(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) in[static_cast<size_t>(i)] = static_cast<float>(src[i]) / 255.0f;
  apply_corruption(static_cast<Corruption>(kind), severity, h, w, in.data(),
                   out.data(), sub_rng);
  if (as_float) {
    out_f32.insert(out_f32.end(), out.begin(), out.end());
  } else {
    for (int i = 0; i < count; ++i) {
      out_u8.push_back(static_cast<uint8_t>(std::lround(out[static_cast<size_t>(i)] * 255.0f)));
    }
  }
}

}  // namespace

BiasedDataset build_corrupted_cifar(const CifarRaw& train, const CifarRaw& test,
                                    const BiasedDatasetSpec& spec) {
  spec.validate();
  if (spec.base != BaseDataset::corrupted_cifar10) {
    throw ConfigError("build_corrupted_cifar called with a non-cifar spec");
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
  const int64_t img_bytes = static_cast<int64_t>(train.h) * train.w * 3;
  const uint64_t noise_seed = mix_seed(spec.seed, rng_tag::corrupt);

  Rng kind_rng = Rng::stream(spec.seed, rng_tag::colorize);
  ds.train.n = static_cast<int64_t>(selected.size());
  for (const auto& sel : selected) {
    const int cls = sel.target;
    const int kind = sel.conflicting ? draw_other_attribute(kind_rng, cls) : cls;
    ds.train.targets.push_back(static_cast<uint8_t>(cls));
    ds.train.bias.push_back(static_cast<uint8_t>(kind));
    ds.train.aligned.push_back(kind == cls ? 1 : 0);
    Rng sub = Rng::stream(noise_seed, static_cast<uint64_t>(sel.orig_index));
    corrupt_into(train.images.data() + sel.orig_index * img_bytes, train.h, train.w,
                 kind, spec.severity, sub, spec.lossless_float, ds.train.images_u8,
                 ds.train.images_f32);
  }

  Rng test_rng = Rng::stream(spec.seed, rng_tag::test_bias);
  ds.test.n = test.n;
  for (int64_t i = 0; i < test.n; ++i) {
    const int cls = test.labels[static_cast<size_t>(i)];
    const int kind = spec.test_excludes_designated
                         ? draw_other_attribute(test_rng, cls)
                         : static_cast<int>(test_rng.below(10));
    ds.test.targets.push_back(static_cast<uint8_t>(cls));
    ds.test.bias.push_back(static_cast<uint8_t>(kind));
    ds.test.aligned.push_back(kind == cls ? 1 : 0);
    Rng sub = Rng::stream(noise_seed, kTestStreamBit | static_cast<uint64_t>(i));
    corrupt_into(test.images.data() + i * img_bytes, test.h, test.w, kind,
                 spec.severity, sub, spec.lossless_float, ds.test.images_u8,
                 ds.test.images_f32);
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
