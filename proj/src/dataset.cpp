#include "dfa/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dfa/errors.hpp"
#include "dfa/fnv.hpp"
#include "dfa/rng.hpp"

namespace dfa::data {

const char* base_dataset_name(BaseDataset b) {
  switch (b) {
    case BaseDataset::colored_mnist: return "colored_mnist";
    case BaseDataset::corrupted_cifar10: return "corrupted_cifar10";
  }
  throw ContractError("unknown base dataset id");
}

BaseDataset base_dataset_from_name(const std::string& name) {
  if (name == "colored_mnist" || name == "cmnist") return BaseDataset::colored_mnist;
  if (name == "corrupted_cifar10" || name == "cifar") return BaseDataset::corrupted_cifar10;
  throw ConfigError("unknown dataset name: " + name);
}

std::optional<SplitCounts> colored_mnist_counts(int permille) {
  switch (permille) {
    case 5: return SplitCounts{54751, 249};
    case 10: return SplitCounts{54509, 491};
    case 20: return SplitCounts{54014, 986};
    case 50: return SplitCounts{52551, 2449};
    default: return std::nullopt;
  }
}

std::optional<SplitCounts> corrupted_cifar_counts(int permille) {
  switch (permille) {
    case 5: return SplitCounts{44832, 228};
    case 10: return SplitCounts{44527, 442};
    case 20: return SplitCounts{44145, 887};
    case 50: return SplitCounts{42820, 2242};
    default: return std::nullopt;
  }
}

int BiasedDatasetSpec::ratio_permille() const {
  return static_cast<int>(std::llround(conflict_ratio * 1000.0));
}

void BiasedDatasetSpec::validate() const {
  if (!(conflict_ratio > 0.0 && conflict_ratio < 1.0)) {
    throw ConfigError("conflict_ratio must lie in (0,1), got " +
                      std::to_string(conflict_ratio));
  }
  if (severity < 0 || severity > 5) {
    throw ConfigError("severity must lie in [0,5], got " + std::to_string(severity));
  }
  if (subset_per_class < 0) {
    throw ConfigError("subset_per_class must be >= 0");
  }
  if (subset_per_class == 0 && !allow_any_ratio) {
    const int pm = ratio_permille();
    const bool known = base == BaseDataset::colored_mnist
                           ? colored_mnist_counts(pm).has_value()
                           : corrupted_cifar_counts(pm).has_value();
    if (!known) {
      throw ConfigError(
          "conflict_ratio " + std::to_string(conflict_ratio) +
          " has no tabulated split sizes; pass allow_any_ratio to derive them");
    }
  }
}

SplitCounts Split::counts() const {
  SplitCounts c;
  for (uint8_t a : aligned) {
    if (a) {
      ++c.aligned;
    } else {
      ++c.conflicting;
    }
  }
  return c;
}

uint64_t BiasedDataset::content_digest() const {
  uint64_t d = kFnvOffset;
  auto mix_i32 = [&](int32_t v) { d = fnv1a(&v, sizeof(v), d); };
  mix_i32(static_cast<int32_t>(spec.base));
  mix_i32(h);
  mix_i32(w);
  mix_i32(c);
  auto mix_split = [&](const Split& s) {
    mix_i32(static_cast<int32_t>(s.n));
    d = fnv1a(s.targets.data(), s.targets.size(), d);
    d = fnv1a(s.bias.data(), s.bias.size(), d);
    d = fnv1a(s.aligned.data(), s.aligned.size(), d);
    if (spec.lossless_float) {
      d = fnv1a(s.images_f32.data(), s.images_f32.size() * sizeof(float), d);
    } else {
      d = fnv1a(s.images_u8.data(), s.images_u8.size(), d);
    }
  };
  mix_split(train);
  mix_split(test);
  return d;
}

AssignmentPlan plan_assignment(const std::vector<int64_t>& avail,
                               const SplitCounts& counts, Rng& rng) {
  const int k = static_cast<int>(avail.size());
  const int64_t pool = std::accumulate(avail.begin(), avail.end(), int64_t{0});
  const int64_t want = counts.total();
  if (want > pool) {
    throw DataError("requested " + std::to_string(want) + " training samples but only " +
                    std::to_string(pool) + " are available");
  }

  // Largest-remainder apportionment of the total, proportional to class
  // availability; fraction ties break toward the lower class index.
  AssignmentPlan plan;
  plan.totals.assign(static_cast<size_t>(k), 0);
  std::vector<double> frac(static_cast<size_t>(k));
  int64_t assigned = 0;
  for (int c = 0; c < k; ++c) {
    const double quota = static_cast<double>(avail[static_cast<size_t>(c)]) * want / pool;
    plan.totals[static_cast<size_t>(c)] = static_cast<int64_t>(quota);
    frac[static_cast<size_t>(c)] = quota - std::floor(quota);
    assigned += plan.totals[static_cast<size_t>(c)];
  }
  std::vector<int> order(static_cast<size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return frac[static_cast<size_t>(a)] > frac[static_cast<size_t>(b)];
  });
  for (int64_t r = 0; r < want - assigned; ++r) {
    plan.totals[static_cast<size_t>(order[static_cast<size_t>(r)])] += 1;
  }

  // Conflicting quota: even split, remainder classes drawn without
  // replacement.
  plan.conflicting.assign(static_cast<size_t>(k), counts.conflicting / k);
  const int extra = static_cast<int>(counts.conflicting % k);
  auto lucky = rng.permutation(k);
  for (int i = 0; i < extra; ++i) {
    plan.conflicting[static_cast<size_t>(lucky[static_cast<size_t>(i)])] += 1;
  }

  for (int c = 0; c < k; ++c) {
    if (plan.totals[static_cast<size_t>(c)] > avail[static_cast<size_t>(c)]) {
      throw DataError("class " + std::to_string(c) + " needs " +
                      std::to_string(plan.totals[static_cast<size_t>(c)]) +
                      " samples but only " +
                      std::to_string(avail[static_cast<size_t>(c)]) + " exist");
    }
    if (plan.conflicting[static_cast<size_t>(c)] > plan.totals[static_cast<size_t>(c)]) {
      throw DataError("class " + std::to_string(c) +
                      " conflicting quota exceeds its total");
    }
  }
  return plan;
}

std::vector<SelectedSample> select_biased_samples(const std::vector<uint8_t>& labels,
                                                  const AssignmentPlan& plan,
                                                  Rng& rng) {
  const int k = static_cast<int>(plan.totals.size());
  std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(k));
  for (size_t i = 0; i < labels.size(); ++i) {
    by_class[labels[i]].push_back(static_cast<int64_t>(i));
  }
  std::vector<SelectedSample> out;
  for (int c = 0; c < k; ++c) {
    auto idxs = by_class[static_cast<size_t>(c)];
    rng.shuffle(idxs);
    for (int64_t j = 0; j < plan.totals[static_cast<size_t>(c)]; ++j) {
      out.push_back(SelectedSample{idxs[static_cast<size_t>(j)],
                                   static_cast<uint8_t>(c),
                                   j < plan.conflicting[static_cast<size_t>(c)]});
    }
  }
  std::sort(out.begin(), out.end(), [](const SelectedSample& a, const SelectedSample& b) {
    return a.orig_index < b.orig_index;
  });
  return out;
}

int draw_other_attribute(Rng& rng, int designated) {
  const int r = static_cast<int>(rng.below(9));
  return r >= designated ? r + 1 : r;
}

SplitCounts resolve_counts(const BiasedDatasetSpec& spec, int64_t train_avail) {
  if (spec.subset_per_class > 0) {
    const int64_t total = static_cast<int64_t>(spec.subset_per_class) * 10;
    const int64_t conflicting = std::llround(static_cast<double>(total) * spec.conflict_ratio);
    return SplitCounts{total - conflicting, conflicting};
  }
  const int pm = spec.ratio_permille();
  auto table = spec.base == BaseDataset::colored_mnist ? colored_mnist_counts(pm)
                                                       : corrupted_cifar_counts(pm);
  if (table) return *table;
  if (!spec.allow_any_ratio) {
    throw ConfigError("no tabulated counts for ratio " + std::to_string(spec.conflict_ratio));
  }
  const int64_t total = spec.base == BaseDataset::colored_mnist ? 55000 : 45000;
  if (total > train_avail) throw DataError("derived total exceeds available pool");
  const int64_t conflicting = std::llround(static_cast<double>(total) * spec.conflict_ratio);
  return SplitCounts{total - conflicting, conflicting};
}

BiasedDataset build_dataset(const std::string& data_root, const BiasedDatasetSpec& spec) {
  spec.validate();
  if (spec.base == BaseDataset::colored_mnist) {
    auto train = load_mnist(data_root + "/mnist", "train");
    auto test = load_mnist(data_root + "/mnist", "t10k");
    return build_colored_mnist(train, test, spec);
  }
  auto train = load_cifar10_train(data_root + "/cifar10");
  auto test = load_cifar10_test(data_root + "/cifar10");
  return build_corrupted_cifar(train, test, spec);
}

}  // namespace dfa::data
