#include "dfa/data/idx.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "dfa/errors.hpp"

namespace dfa::data {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  return buf;
}

std::vector<uint8_t> gunzip(const std::vector<uint8_t>& buf, const std::string& origin) {
  z_stream zs;
  std::memset(&zs, 0, sizeof(zs));
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
    throw DataError("zlib init failed for " + origin);
  }
  std::vector<uint8_t> out;
  out.reserve(buf.size() * 4);
  std::vector<uint8_t> chunk(1 << 16);
  zs.next_in = const_cast<Bytef*>(buf.data());
  zs.avail_in = static_cast<uInt>(buf.size());
  int ret = Z_OK;
  do {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DataError("gzip stream corrupt in " + origin);
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
  } while (ret != Z_STREAM_END && (zs.avail_in > 0 || zs.avail_out == 0));
  inflateEnd(&zs);
  if (ret != Z_STREAM_END) throw DataError("gzip stream truncated in " + origin);
  return out;
}

IdxData parse_idx_bytes(const std::vector<uint8_t>& raw, const std::string& origin) {
  const std::vector<uint8_t>* body = &raw;
  std::vector<uint8_t> inflated;
  if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) {
    inflated = gunzip(raw, origin);
    body = &inflated;
  }
  const auto& b = *body;
  if (b.size() < 4) throw DataError("idx header truncated in " + origin);
  if (b[0] != 0 || b[1] != 0) {
    throw DataError("bad idx magic prefix in " + origin);
  }
  const uint8_t dtype = b[2];
  const int ndim = b[3];
  if (dtype != 0x08) {
    throw DataError("idx element type " + std::to_string(dtype) +
                    " unsupported (want unsigned byte) in " + origin);
  }
  if (ndim < 1 || ndim > 4) throw DataError("idx rank out of range in " + origin);
  if (b.size() < 4 + 4 * static_cast<size_t>(ndim)) {
    throw DataError("idx dimension list truncated in " + origin);
  }
  IdxData out;
  size_t total = 1;
  for (int d = 0; d < ndim; ++d) {
    const size_t off = 4 + 4 * static_cast<size_t>(d);
    const uint32_t v = (static_cast<uint32_t>(b[off]) << 24) |
                       (static_cast<uint32_t>(b[off + 1]) << 16) |
                       (static_cast<uint32_t>(b[off + 2]) << 8) |
                       static_cast<uint32_t>(b[off + 3]);
    out.dims.push_back(static_cast<int>(v));
    total *= v;
  }
  const size_t header = 4 + 4 * static_cast<size_t>(ndim);
  if (b.size() - header != total) {
    throw DataError("idx payload size mismatch in " + origin + ": header says " +
                    std::to_string(total) + " bytes, file has " +
                    std::to_string(b.size() - header));
  }
  out.bytes.assign(b.begin() + static_cast<long>(header), b.end());
  return out;
}

IdxData parse_idx_file(const std::string& path) {
  return parse_idx_bytes(read_file_bytes(path), path);
}

namespace {

std::string pick_existing(const std::string& dir, const std::string& stem) {
  for (const char* suffix : {".gz", ""}) {
    const std::string p = dir + "/" + stem + suffix;
    std::ifstream probe(p, std::ios::binary);
    if (probe) return p;
  }
  throw DataError("missing " + dir + "/" + stem + "[.gz]");
}

}  // namespace

MnistRaw load_mnist(const std::string& dir, const std::string& split) {
  if (split != "train" && split != "t10k") {
    throw ConfigError("mnist split must be train or t10k, got " + split);
  }
  const std::string img_path = pick_existing(dir, split + "-images-idx3-ubyte");
  const std::string lbl_path = pick_existing(dir, split + "-labels-idx1-ubyte");

  IdxData img = parse_idx_file(img_path);
  if (img.dims.size() != 3) {
    if (img.dims.size() == 1) {
      throw DataError("labels magic in image slot: " + img_path);
    }
    throw DataError("expected rank-3 image idx in " + img_path);
  }
  IdxData lbl = parse_idx_file(lbl_path);
  if (lbl.dims.size() != 1) {
    if (lbl.dims.size() == 3) {
      throw DataError("images magic in label slot (0x00000803): " + lbl_path);
    }
    throw DataError("expected rank-1 label idx in " + lbl_path);
  }
  if (img.dims[0] != lbl.dims[0]) {
    throw DataError("image/label count mismatch: " + std::to_string(img.dims[0]) +
                    " vs " + std::to_string(lbl.dims[0]));
  }
  for (uint8_t y : lbl.bytes) {
    if (y > 9) throw DataError("mnist label out of range in " + lbl_path);
  }
  MnistRaw out;
  out.n = img.dims[0];
  out.h = img.dims[1];
  out.w = img.dims[2];
  out.images = std::move(img.bytes);
  out.labels = std::move(lbl.bytes);
  return out;
}

}  // namespace dfa::data
