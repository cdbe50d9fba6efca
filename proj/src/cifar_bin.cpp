#include "dfa/data/cifar_bin.hpp"

#include "dfa/data/idx.hpp"
#include "dfa/errors.hpp"

namespace dfa::data {

namespace {
constexpr size_t kRecord = 3073;  // label + 3*1024 planar pixels
constexpr int kSide = 32;
}  // namespace

CifarRaw load_cifar10_batches(const std::vector<std::string>& paths) {
  CifarRaw out;
  for (const auto& path : paths) {
    auto buf = read_file_bytes(path);
    if (buf.size() % kRecord != 0) {
      throw DataError("cifar batch " + path + " size " + std::to_string(buf.size()) +
                      " is not a multiple of " + std::to_string(kRecord));
    }
    const size_t n = buf.size() / kRecord;
    for (size_t r = 0; r < n; ++r) {
      const uint8_t* rec = buf.data() + r * kRecord;
      const uint8_t label = rec[0];
      if (label > 9) throw DataError("cifar label out of range in " + path);
      out.labels.push_back(label);
      const uint8_t* planes = rec + 1;
      const size_t base = out.images.size();
      out.images.resize(base + kSide * kSide * 3);
      uint8_t* dst = out.images.data() + base;
      for (int p = 0; p < kSide * kSide; ++p) {
        dst[p * 3 + 0] = planes[p];
        dst[p * 3 + 1] = planes[1024 + p];
        dst[p * 3 + 2] = planes[2048 + p];
      }
    }
  }
  out.n = static_cast<int>(out.labels.size());
  return out;
}

CifarRaw load_cifar10_train(const std::string& dir) {
  std::vector<std::string> paths;
  for (int b = 1; b <= 5; ++b) {
    paths.push_back(dir + "/data_batch_" + std::to_string(b) + ".bin");
  }
  auto raw = load_cifar10_batches(paths);
  if (raw.n != 50000) {
    throw DataError("cifar train split has " + std::to_string(raw.n) +
                    " records, expected 50000");
  }
  return raw;
}

CifarRaw load_cifar10_test(const std::string& dir) {
  auto raw = load_cifar10_batches({dir + "/test_batch.bin"});
  if (raw.n != 10000) {
    throw DataError("cifar test split has " + std::to_string(raw.n) +
                    " records, expected 10000");
  }
  return raw;
}

}  // namespace dfa::data
