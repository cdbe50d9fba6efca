#pragma once

#include <cstdint>
#include <string>

namespace dfa::data {

// Writes an 8-bit RGB (c==3) or grayscale (c==1) PNG.  `pixels` is row-major
// interleaved, h*w*c bytes.  Intended for spot-check dumps of synthesized
// samples, not for bulk storage.
void write_png(const std::string& path, int h, int w, int c, const uint8_t* pixels);

}  // namespace dfa::data
