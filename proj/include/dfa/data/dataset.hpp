#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dfa/data/cifar_bin.hpp"
#include "dfa/data/idx.hpp"
#include "dfa/rng.hpp"

namespace dfa::data {

enum class BaseDataset : uint8_t { colored_mnist = 1, corrupted_cifar10 = 2 };

const char* base_dataset_name(BaseDataset b);
BaseDataset base_dataset_from_name(const std::string& name);

struct ColorEntry {
  uint8_t rgb[3];
  const char* name;
};

// One designated color per digit class, in class order.
constexpr std::array<ColorEntry, 10> kColorPalette = {{
    {{255, 0, 0}, "red"},
    {{255, 128, 0}, "orange"},
    {{255, 255, 0}, "yellow"},
    {{0, 255, 0}, "green"},
    {{0, 255, 255}, "cyan"},
    {{0, 0, 255}, "blue"},
    {{128, 0, 255}, "purple"},
    {{255, 0, 255}, "magenta"},
    {{150, 75, 0}, "brown"},
    {{255, 255, 255}, "white"},
}};

struct SplitCounts {
  int64_t aligned = 0;
  int64_t conflicting = 0;
  int64_t total() const { return aligned + conflicting; }
  bool operator==(const SplitCounts&) const = default;
};

// Exact aligned/conflicting sizes for the supported full-scale builds, keyed
// by round(ratio*1000).
std::optional<SplitCounts> colored_mnist_counts(int permille);
std::optional<SplitCounts> corrupted_cifar_counts(int permille);

struct BiasedDatasetSpec {
  BaseDataset base = BaseDataset::colored_mnist;
  double conflict_ratio = 0.01;
  uint64_t seed = 1;
  int severity = 5;                      // corruption strength, 0..5
  bool lossless_float = false;           // keep float pixels instead of u8
  bool test_excludes_designated = false; // test bias drawn from the other 9
  int subset_per_class = 0;              // >0: reduced-scale build
  bool allow_any_ratio = false;          // permit ratios missing from the tables

  int ratio_permille() const;
  void validate() const;
};

struct Split {
  int64_t n = 0;
  std::vector<uint8_t> targets;
  std::vector<uint8_t> bias;     // realized bias attribute (color / corruption)
  std::vector<uint8_t> aligned;  // 1 when bias == designated(class)
  std::vector<uint8_t> images_u8;
  std::vector<float> images_f32;  // filled only in lossless_float mode

  SplitCounts counts() const;
};

struct BiasedDataset {
  BiasedDatasetSpec spec;
  int h = 0, w = 0, c = 0;
  Split train, test;

  int64_t pixels_per_image() const { return static_cast<int64_t>(h) * w * c; }
  uint64_t content_digest() const;

  // Dequantized pixel in [0,1].
  float pixel(const Split& s, int64_t sample, int64_t offset) const {
    const size_t idx = static_cast<size_t>(sample * pixels_per_image() + offset);
    return spec.lossless_float ? s.images_f32[idx]
                               : static_cast<float>(s.images_u8[idx]) / 255.0f;
  }
};

// Proportional per-class totals (largest remainder, ties to the lower class)
// plus a seeded spread of the conflicting quota.
struct AssignmentPlan {
  std::vector<int64_t> totals;       // per class
  std::vector<int64_t> conflicting;  // per class
};
AssignmentPlan plan_assignment(const std::vector<int64_t>& avail,
                               const SplitCounts& counts, Rng& rng);

struct SelectedSample {
  int64_t orig_index;
  uint8_t target;
  bool conflicting;
};

// Seeded per-class selection realizing an assignment plan. The result is
// ordered by original index so downstream attribute draws are reproducible.
std::vector<SelectedSample> select_biased_samples(const std::vector<uint8_t>& labels,
                                                  const AssignmentPlan& plan,
                                                  Rng& rng);

// Uniform draw over the 9 non-designated attribute values.
int draw_other_attribute(Rng& rng, int designated);

// Target counts for a build: table lookup for full-scale specs, derived
// otherwise. Also reports per-class availability bounds errors.
SplitCounts resolve_counts(const BiasedDatasetSpec& spec, int64_t train_avail);

BiasedDataset build_colored_mnist(const MnistRaw& train, const MnistRaw& test,
                                  const BiasedDatasetSpec& spec);
BiasedDataset build_corrupted_cifar(const CifarRaw& train, const CifarRaw& test,
                                    const BiasedDatasetSpec& spec);

// Loads the raw inputs from `data_root` (mnist/ or cifar10/ subdirectory) and
// dispatches on spec.base.
BiasedDataset build_dataset(const std::string& data_root, const BiasedDatasetSpec& spec);

}  // namespace dfa::data
