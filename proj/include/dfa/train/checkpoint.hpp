#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dfa::train::detail {

// On-disk training snapshot. The trailer digest covers every preceding byte,
// so truncation or bit rot is detected before any state is applied.
struct RawCheckpoint {
  uint8_t kind = 0;  // 1 = dual-encoder, 2 = vanilla
  int32_t quota = -1;
  uint64_t config_digest = 0;
  std::string config_text;
  int64_t t = 0;
  std::string sampler_blob;
  std::string swap_rng_state;
  bool has_ema = false;
  std::vector<double> ema_i, ema_b;
  std::vector<uint8_t> ema_touched;
  struct Param {
    std::string name;
    int64_t steps = 0;
    std::vector<float> value, m, v;
  };
  std::vector<Param> params;
};

void write_checkpoint(const std::string& path, const RawCheckpoint& ck);
RawCheckpoint read_checkpoint(const std::string& path);

}  // namespace dfa::train::detail
