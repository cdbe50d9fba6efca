#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dfa/ad/tensor.hpp"
#include "dfa/data/dataset.hpp"
#include "dfa/errors.hpp"
#include "dfa/rng.hpp"

namespace dfa::train {

// CIFAR-10 channel statistics used when `normalize` is on.
constexpr float kChannelMean[3] = {0.4914f, 0.4822f, 0.4465f};
constexpr float kChannelStd[3] = {0.2023f, 0.1994f, 0.2010f};

// How raw split pixels become model inputs. `flatten` yields [n, h*w*c] rows
// for the mlp encoder; otherwise the tensor keeps its NHWC shape for the conv
// encoder. Augmentation (pad-4 random crop + horizontal flip) applies only on
// the training path and draws from stateless per-(seed, iteration, slot)
// streams so batch assembly order never shifts downstream randomness.
struct BatchPrep {
  bool flatten = true;
  bool normalize = false;
  bool augment = false;
  uint64_t augment_seed = 0;
};

inline ad::Tensor<float> assemble_batch(const data::BiasedDataset& ds,
                                        const data::Split& split,
                                        std::span<const int64_t> idx,
                                        const BatchPrep& prep, int64_t iteration) {
  const int n = static_cast<int>(idx.size());
  const int h = ds.h, w = ds.w, c = ds.c;
  const int64_t px = ds.pixels_per_image();
  ad::Tensor<float> x(prep.flatten ? ad::Shape{n, static_cast<int>(px)}
                                   : ad::Shape{n, h, w, c});
  float* out = x.vals().data();

  std::vector<float> img(static_cast<size_t>(px));
  std::vector<float> shifted(static_cast<size_t>(px));
  for (int s = 0; s < n; ++s) {
    const int64_t sample = idx[static_cast<size_t>(s)];
    if (sample < 0 || sample >= split.n) {
      throw ContractError("batch index " + std::to_string(sample) + " out of range");
    }
    for (int64_t p = 0; p < px; ++p) {
      img[static_cast<size_t>(p)] = ds.pixel(split, sample, p);
    }
    const float* src = img.data();
    if (prep.augment) {
      Rng aug = Rng::stream(prep.augment_seed,
                            static_cast<uint64_t>(iteration) * static_cast<uint64_t>(n) +
                                static_cast<uint64_t>(s));
      const int dy = aug.below_int(9) - 4;  // crop offset within the 4-pixel pad
      const int dx = aug.below_int(9) - 4;
      const bool flip = aug.below(2) == 1;
      for (int y = 0; y < h; ++y) {
        for (int xcol = 0; xcol < w; ++xcol) {
          const int sy = y + dy;
          const int sx = (flip ? w - 1 - xcol : xcol) + dx;
          float* dst = shifted.data() + (static_cast<size_t>(y) * w + xcol) * c;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
            for (int ch = 0; ch < c; ++ch) dst[ch] = 0.0f;
          } else {
            const float* from = img.data() + (static_cast<size_t>(sy) * w + sx) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] = from[ch];
          }
        }
      }
      src = shifted.data();
    }
    float* dst = out + static_cast<size_t>(s) * px;
    if (prep.normalize) {
      if (c != 3) throw ContractError("channel normalization expects 3 channels");
      for (int64_t p = 0; p < px; ++p) {
        const int ch = static_cast<int>(p % 3);
        dst[p] = (src[p] - kChannelMean[ch]) / kChannelStd[ch];
      }
    } else {
      for (int64_t p = 0; p < px; ++p) dst[p] = src[p];
    }
  }
  return x;
}

inline std::vector<int> batch_labels(const data::Split& split,
                                     std::span<const int64_t> idx) {
  std::vector<int> y(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    y[i] = split.targets[static_cast<size_t>(idx[i])];
  }
  return y;
}

}  // namespace dfa::train
