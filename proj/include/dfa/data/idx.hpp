#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dfa::data {

// Parsed IDX payload (the MNIST container format). Only the unsigned byte
// element type (0x08) is supported.
struct IdxData {
  std::vector<int> dims;
  std::vector<uint8_t> bytes;
};

// Reads an IDX file, transparently inflating gzip members.
IdxData parse_idx_file(const std::string& path);
IdxData parse_idx_bytes(const std::vector<uint8_t>& buf, const std::string& origin);

std::vector<uint8_t> read_file_bytes(const std::string& path);
std::vector<uint8_t> gunzip(const std::vector<uint8_t>& buf, const std::string& origin);

struct MnistRaw {
  int n = 0, h = 28, w = 28;
  std::vector<uint8_t> images;  // n*h*w grayscale
  std::vector<uint8_t> labels;  // n
};

// split is "train" or "t10k".
MnistRaw load_mnist(const std::string& dir, const std::string& split);

}  // namespace dfa::data
