#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dfa::data {

struct CifarRaw {
  int n = 0, h = 32, w = 32;
  std::vector<uint8_t> images;  // n*h*w*3, interleaved HWC
  std::vector<uint8_t> labels;  // n
};

// Reads the classic 3073-byte-record batch format (label byte + planar RGB)
// and converts each image to interleaved HWC.
CifarRaw load_cifar10_batches(const std::vector<std::string>& paths);
CifarRaw load_cifar10_train(const std::string& dir);  // data_batch_1..5.bin
CifarRaw load_cifar10_test(const std::string& dir);   // test_batch.bin

}  // namespace dfa::data
