#include "dfa/train/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dfa/binio.hpp"
#include "dfa/errors.hpp"
#include "dfa/fnv.hpp"

namespace dfa::train::detail {

namespace {
constexpr char kMagic[8] = {'D', 'F', 'A', 'C', 'K', 'P', '0', '1'};
}

void write_checkpoint(const std::string& path, const RawCheckpoint& ck) {
  std::ostringstream body(std::ios::binary);
  body.write(kMagic, sizeof(kMagic));
  binio::write_pod<uint8_t>(body, ck.kind);
  binio::write_pod<int32_t>(body, ck.quota);
  binio::write_pod<uint64_t>(body, ck.config_digest);
  binio::write_string(body, ck.config_text);
  binio::write_pod<int64_t>(body, ck.t);
  binio::write_string(body, ck.sampler_blob);
  binio::write_string(body, ck.swap_rng_state);
  binio::write_pod<uint8_t>(body, ck.has_ema ? 1 : 0);
  if (ck.has_ema) {
    binio::write_vec(body, ck.ema_i);
    binio::write_vec(body, ck.ema_b);
    binio::write_vec(body, ck.ema_touched);
  }
  binio::write_pod<uint32_t>(body, static_cast<uint32_t>(ck.params.size()));
  for (const auto& p : ck.params) {
    binio::write_string(body, p.name);
    binio::write_pod<int64_t>(body, p.steps);
    binio::write_vec(body, p.value);
    binio::write_vec(body, p.m);
    binio::write_vec(body, p.v);
  }

  const std::string payload = body.str();
  const uint64_t digest = fnv1a(payload.data(), payload.size());

  // Write to a sibling temp file first so an interrupted save never clobbers
  // an existing good checkpoint.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open " + tmp + " for writing");
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    binio::write_pod<uint64_t>(os, digest);
    os.flush();
    if (!os) throw DataError("failed while writing " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot move checkpoint into place at " + path);
  }
}

RawCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw DataError("cannot open checkpoint " + path);
  const std::streamsize size = is.tellg();
  if (size < static_cast<std::streamsize>(sizeof(kMagic) + 8)) {
    throw DataError(path + " is too small to be a checkpoint");
  }
  std::string buf(static_cast<size_t>(size), '\0');
  is.seekg(0);
  is.read(buf.data(), size);
  if (!is) throw DataError("failed reading " + path);

  const size_t payload_len = buf.size() - 8;
  uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + payload_len, 8);
  if (fnv1a(buf.data(), payload_len) != stored) {
    throw DataError(path + " failed its integrity digest (truncated or corrupt)");
  }

  std::istringstream body(buf.substr(0, payload_len), std::ios::binary);
  char magic[8];
  body.read(magic, sizeof(magic));
  if (!body || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path + " is not a checkpoint file (bad magic)");
  }
  RawCheckpoint ck;
  ck.kind = binio::read_pod<uint8_t>(body);
  ck.quota = binio::read_pod<int32_t>(body);
  ck.config_digest = binio::read_pod<uint64_t>(body);
  ck.config_text = binio::read_string(body);
  ck.t = binio::read_pod<int64_t>(body);
  ck.sampler_blob = binio::read_string(body);
  ck.swap_rng_state = binio::read_string(body);
  ck.has_ema = binio::read_pod<uint8_t>(body) != 0;
  if (ck.has_ema) {
    ck.ema_i = binio::read_vec<double>(body);
    ck.ema_b = binio::read_vec<double>(body);
    ck.ema_touched = binio::read_vec<uint8_t>(body);
  }
  const uint32_t n = binio::read_pod<uint32_t>(body);
  ck.params.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    auto& p = ck.params[i];
    p.name = binio::read_string(body);
    p.steps = binio::read_pod<int64_t>(body);
    p.value = binio::read_vec<float>(body);
    p.m = binio::read_vec<float>(body);
    p.v = binio::read_vec<float>(body);
  }
  return ck;
}

}  // namespace dfa::train::detail
