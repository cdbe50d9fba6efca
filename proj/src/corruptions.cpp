#include "dfa/data/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "dfa/errors.hpp"

namespace dfa::data {

namespace {

constexpr int kChannels = 3;

float clip01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

// Bilinear lookup into a coarse grid stretched over the image.
float grid_sample(const std::vector<float>& grid, int gn, float fy, float fx) {
  const float gy = fy * (gn - 1), gx = fx * (gn - 1);
  const int y0 = std::min(static_cast<int>(gy), gn - 2);
  const int x0 = std::min(static_cast<int>(gx), gn - 2);
  const float ty = gy - y0, tx = gx - x0;
  const float a = grid[static_cast<size_t>(y0 * gn + x0)];
  const float b = grid[static_cast<size_t>(y0 * gn + x0 + 1)];
  const float c = grid[static_cast<size_t>((y0 + 1) * gn + x0)];
  const float d = grid[static_cast<size_t>((y0 + 1) * gn + x0 + 1)];
  return a * (1 - ty) * (1 - tx) + b * (1 - ty) * tx + c * ty * (1 - tx) + d * ty * tx;
}

float sample_clamped(const float* in, int h, int w, float sy, float sx, int ch) {
  sy = std::clamp(sy, 0.0f, static_cast<float>(h - 1));
  sx = std::clamp(sx, 0.0f, static_cast<float>(w - 1));
  const int y0 = std::min(static_cast<int>(sy), h - 2 >= 0 ? h - 2 : 0);
  const int x0 = std::min(static_cast<int>(sx), w - 2 >= 0 ? w - 2 : 0);
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const float ty = sy - y0, tx = sx - x0;
  auto px = [&](int y, int x) {
    return in[(static_cast<size_t>(y) * w + x) * kChannels + ch];
  };
  return px(y0, x0) * (1 - ty) * (1 - tx) + px(y0, x1) * (1 - ty) * tx +
         px(y1, x0) * ty * (1 - tx) + px(y1, x1) * ty * tx;
}

void separable_blur(int h, int w, const std::vector<float>& taps, const float* in,
                    float* out) {
  const int r = static_cast<int>(taps.size()) / 2;
  std::vector<float> tmp(static_cast<size_t>(h) * w * kChannels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < kChannels; ++ch) {
        float acc = 0;
        for (int k = -r; k <= r; ++k) {
          const int xx = std::clamp(x + k, 0, w - 1);
          acc += taps[static_cast<size_t>(k + r)] *
                 in[(static_cast<size_t>(y) * w + xx) * kChannels + ch];
        }
        tmp[(static_cast<size_t>(y) * w + x) * kChannels + ch] = acc;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < kChannels; ++ch) {
        float acc = 0;
        for (int k = -r; k <= r; ++k) {
          const int yy = std::clamp(y + k, 0, h - 1);
          acc += taps[static_cast<size_t>(k + r)] *
                 tmp[(static_cast<size_t>(yy) * w + x) * kChannels + ch];
        }
        out[(static_cast<size_t>(y) * w + x) * kChannels + ch] = clip01(acc);
      }
    }
  }
}

}  // namespace

const char* corruption_name(Corruption kind) {
  switch (kind) {
    case Corruption::brightness: return "brightness";
    case Corruption::contrast: return "contrast";
    case Corruption::gaussian_noise: return "gaussian_noise";
    case Corruption::frost: return "frost";
    case Corruption::elastic: return "elastic";
    case Corruption::gaussian_blur: return "gaussian_blur";
    case Corruption::defocus_blur: return "defocus_blur";
    case Corruption::impulse_noise: return "impulse_noise";
    case Corruption::saturate: return "saturate";
    case Corruption::pixelate: return "pixelate";
  }
  throw ContractError("unknown corruption id");
}

Corruption corruption_from_name(const std::string& name) {
  for (int k = 0; k < kNumCorruptions; ++k) {
    if (name == corruption_name(static_cast<Corruption>(k))) {
      return static_cast<Corruption>(k);
    }
  }
  throw ConfigError("unknown corruption name: " + name);
}

void apply_corruption(Corruption kind, int severity, int h, int w,
                      const float* in, float* out, Rng& rng) {
  if (severity < 0 || severity > 5) {
    throw ConfigError("corruption severity must lie in [0,5]");
  }
  const size_t count = static_cast<size_t>(h) * w * kChannels;
  if (severity == 0) {
    std::memcpy(out, in, count * sizeof(float));
    return;
  }
  const float s = static_cast<float>(severity) / 5.0f;

  switch (kind) {
    case Corruption::brightness: {
      const float shift = 0.45f * s;
      for (size_t i = 0; i < count; ++i) out[i] = clip01(in[i] + shift);
      return;
    }
    case Corruption::contrast: {
      float mean = 0;
      for (size_t i = 0; i < count; ++i) mean += in[i];
      mean /= static_cast<float>(count);
      const float f = 1.0f - 0.88f * s;
      for (size_t i = 0; i < count; ++i) out[i] = clip01((in[i] - mean) * f + mean);
      return;
    }
    case Corruption::gaussian_noise: {
      const float sigma = 0.40f * s;
      for (size_t i = 0; i < count; ++i) {
        out[i] = clip01(in[i] + sigma * static_cast<float>(rng.normal()));
      }
      return;
    }
    case Corruption::frost: {
      constexpr int gn = 9;
      std::vector<float> grid(gn * gn);
      for (auto& g : grid) g = static_cast<float>(rng.uniform());
      const float keep = 1.0f - 0.35f * s, overlay = 0.50f * s;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const float t = grid_sample(grid, gn, static_cast<float>(y) / (h - 1),
                                      static_cast<float>(x) / (w - 1));
          const float layer = 0.55f + 0.45f * t;
          for (int ch = 0; ch < kChannels; ++ch) {
            const size_t i = (static_cast<size_t>(y) * w + x) * kChannels + ch;
            out[i] = clip01(in[i] * keep + layer * overlay);
          }
        }
      }
      return;
    }
    case Corruption::elastic: {
      constexpr int gn = 5;
      std::vector<float> dx(gn * gn), dy(gn * gn);
      for (auto& v : dx) v = static_cast<float>(rng.uniform(-1.0, 1.0));
      for (auto& v : dy) v = static_cast<float>(rng.uniform(-1.0, 1.0));
      const float amp = 3.5f * s;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const float fy = static_cast<float>(y) / (h - 1);
          const float fx = static_cast<float>(x) / (w - 1);
          const float sy = y + amp * grid_sample(dy, gn, fy, fx);
          const float sx = x + amp * grid_sample(dx, gn, fy, fx);
          for (int ch = 0; ch < kChannels; ++ch) {
            out[(static_cast<size_t>(y) * w + x) * kChannels + ch] =
                clip01(sample_clamped(in, h, w, sy, sx, ch));
          }
        }
      }
      return;
    }
    case Corruption::gaussian_blur: {
      const float sigma = 1.8f * s;
      const int r = std::max(1, static_cast<int>(std::ceil(2.5f * sigma)));
      std::vector<float> taps(static_cast<size_t>(2 * r + 1));
      float norm = 0;
      for (int k = -r; k <= r; ++k) {
        taps[static_cast<size_t>(k + r)] =
            std::exp(-0.5f * static_cast<float>(k) * k / (sigma * sigma));
        norm += taps[static_cast<size_t>(k + r)];
      }
      for (auto& t : taps) t /= norm;
      separable_blur(h, w, taps, in, out);
      return;
    }
    case Corruption::defocus_blur: {
      const float radius = 0.6f * severity;
      const int r = std::max(1, static_cast<int>(std::ceil(radius)));
      std::vector<float> kernel(static_cast<size_t>(2 * r + 1) * (2 * r + 1), 0.0f);
      float norm = 0;
      for (int ky = -r; ky <= r; ++ky) {
        for (int kx = -r; kx <= r; ++kx) {
          if (static_cast<float>(ky) * ky + static_cast<float>(kx) * kx <=
              radius * radius + 0.25f) {
            kernel[static_cast<size_t>((ky + r) * (2 * r + 1) + kx + r)] = 1.0f;
            norm += 1.0f;
          }
        }
      }
      for (auto& k : kernel) k /= norm;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          for (int ch = 0; ch < kChannels; ++ch) {
            float acc = 0;
            for (int ky = -r; ky <= r; ++ky) {
              for (int kx = -r; kx <= r; ++kx) {
                const float kv = kernel[static_cast<size_t>((ky + r) * (2 * r + 1) + kx + r)];
                if (kv == 0.0f) continue;
                const int yy = std::clamp(y + ky, 0, h - 1);
                const int xx = std::clamp(x + kx, 0, w - 1);
                acc += kv * in[(static_cast<size_t>(yy) * w + xx) * kChannels + ch];
              }
            }
            out[(static_cast<size_t>(y) * w + x) * kChannels + ch] = clip01(acc);
          }
        }
      }
      return;
    }
    case Corruption::impulse_noise: {
      const double rho = 0.27 * s;
      for (size_t i = 0; i < count; ++i) {
        if (rng.uniform() < rho) {
          out[i] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
        } else {
          out[i] = in[i];
        }
      }
      return;
    }
    case Corruption::saturate: {
      const float factor = 1.0f + 0.4f * severity;
      for (int p = 0; p < h * w; ++p) {
        const float* px = in + static_cast<size_t>(p) * kChannels;
        const float m = (px[0] + px[1] + px[2]) / 3.0f;
        for (int ch = 0; ch < kChannels; ++ch) {
          out[static_cast<size_t>(p) * kChannels + ch] =
              clip01(m + (px[ch] - m) * factor);
        }
      }
      return;
    }
    case Corruption::pixelate: {
      const int block = 1 + severity;
      for (int by = 0; by < h; by += block) {
        for (int bx = 0; bx < w; bx += block) {
          const int ye = std::min(by + block, h), xe = std::min(bx + block, w);
          const float inv = 1.0f / static_cast<float>((ye - by) * (xe - bx));
          for (int ch = 0; ch < kChannels; ++ch) {
            float acc = 0;
            for (int y = by; y < ye; ++y) {
              for (int x = bx; x < xe; ++x) {
                acc += in[(static_cast<size_t>(y) * w + x) * kChannels + ch];
              }
            }
            const float v = acc * inv;
            for (int y = by; y < ye; ++y) {
              for (int x = bx; x < xe; ++x) {
                out[(static_cast<size_t>(y) * w + x) * kChannels + ch] = v;
              }
            }
          }
        }
      }
      return;
    }
  }
  throw ContractError("unknown corruption id");
}

}  // namespace dfa::data
