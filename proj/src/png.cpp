#include "dfa/data/png.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

#include "dfa/errors.hpp"

namespace dfa::data {

namespace {

void put_u32be(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

void chunk(std::vector<uint8_t>& out, const char type[4], const uint8_t* data,
           size_t n) {
  put_u32be(out, static_cast<uint32_t>(n));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  if (n) out.insert(out.end(), data, data + n);
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, out.data() + start, static_cast<uInt>(4 + n)));
  put_u32be(out, crc);
}

}  // namespace

void write_png(const std::string& path, int h, int w, int c,
               const uint8_t* pixels) {
  if (h <= 0 || w <= 0 || (c != 1 && c != 3)) {
    throw ContractError("write_png supports positive dims with 1 or 3 channels");
  }
  // Filter byte 0 (None) before each scanline.
  std::vector<uint8_t> scan;
  scan.reserve(static_cast<size_t>(h) * (static_cast<size_t>(w) * c + 1));
  for (int y = 0; y < h; ++y) {
    scan.push_back(0);
    const uint8_t* row = pixels + static_cast<size_t>(y) * w * c;
    scan.insert(scan.end(), row, row + static_cast<size_t>(w) * c);
  }
  uLongf comp_cap = compressBound(static_cast<uLong>(scan.size()));
  std::vector<uint8_t> comp(comp_cap);
  if (compress2(comp.data(), &comp_cap, scan.data(),
                static_cast<uLong>(scan.size()), 6) != Z_OK) {
    throw DataError("png deflate failed for " + path);
  }
  comp.resize(comp_cap);

  std::vector<uint8_t> file;
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  file.insert(file.end(), sig, sig + 8);
  uint8_t ihdr[13];
  ihdr[0] = static_cast<uint8_t>(static_cast<uint32_t>(w) >> 24);
  ihdr[1] = static_cast<uint8_t>(static_cast<uint32_t>(w) >> 16);
  ihdr[2] = static_cast<uint8_t>(static_cast<uint32_t>(w) >> 8);
  ihdr[3] = static_cast<uint8_t>(w);
  ihdr[4] = static_cast<uint8_t>(static_cast<uint32_t>(h) >> 24);
  ihdr[5] = static_cast<uint8_t>(static_cast<uint32_t>(h) >> 16);
  ihdr[6] = static_cast<uint8_t>(static_cast<uint32_t>(h) >> 8);
  ihdr[7] = static_cast<uint8_t>(h);
  ihdr[8] = 8;                                  // bit depth
  ihdr[9] = (c == 3) ? 2 : 0;                   // color type: RGB or gray
  ihdr[10] = ihdr[11] = ihdr[12] = 0;           // deflate, filter 0, no interlace
  chunk(file, "IHDR", ihdr, sizeof(ihdr));
  chunk(file, "IDAT", comp.data(), comp.size());
  chunk(file, "IEND", nullptr, 0);

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(file.data()),
           static_cast<std::streamsize>(file.size()));
  if (!os) throw DataError("failed while writing " + path);
}

}  // namespace dfa::data
