#pragma once

#include <cstdint>
#include <string>

#include "dfa/rng.hpp"

namespace dfa::data {

// Procedural texture corruptions, one per class, in class order. All operate
// on interleaved RGB float images in [0,1] and write clipped results.
//
// Severity scales each effect linearly from 0 (identity, bit exact) to 5.
// Strength at severity 5:
//   brightness      +0.45 additive shift
//   contrast        scale toward the image mean by 0.12
//   gaussian_noise  sigma 0.40 iid per element
//   frost           value-noise overlay: x*0.65 + layer*0.50
//   elastic         smoothed displacement field, amplitude 3.5 px
//   gaussian_blur   separable kernel, sigma 1.8
//   defocus_blur    disk kernel, radius 3 px
//   impulse_noise   27% of elements replaced by 0 or 1
//   saturate        per-pixel chroma scaled 3x around the channel mean
//   pixelate        averaged 6x6 blocks
enum class Corruption : uint8_t {
  brightness = 0,
  contrast,
  gaussian_noise,
  frost,
  elastic,
  gaussian_blur,
  defocus_blur,
  impulse_noise,
  saturate,
  pixelate,
};

constexpr int kNumCorruptions = 10;

const char* corruption_name(Corruption kind);
Corruption corruption_from_name(const std::string& name);

// `rng` must be the per-image substream; only the stochastic corruptions
// consume draws from it.
void apply_corruption(Corruption kind, int severity, int h, int w,
                      const float* in, float* out, Rng& rng);

}  // namespace dfa::data
