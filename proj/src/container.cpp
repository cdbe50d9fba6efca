#include "dfa/data/container.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "dfa/errors.hpp"

namespace dfa::data {

namespace {

constexpr char kMagic[8] = {'D', 'F', 'A', 'D', 'S', 'B', '0', '1'};
constexpr uint8_t kFlagLossless = 1u << 0;
constexpr uint8_t kFlagTestExcludes = 1u << 1;

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void bytes(const void* p, size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof(T));
  }
  template <typename T>
  void vec(const std::vector<T>& v) {
    pod<uint64_t>(v.size());
    if (!v.empty()) bytes(v.data(), v.size() * sizeof(T));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(const uint8_t* p, size_t n) : p_(p), n_(n) {}
  void bytes(void* dst, size_t n) {
    if (pos_ + n > n_) throw DataError("dataset container is truncated");
    std::memcpy(dst, p_ + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  template <typename T>
  std::vector<T> vec() {
    const uint64_t count = pod<uint64_t>();
    if (count > (n_ - pos_) / sizeof(T)) {
      throw DataError("dataset container declares more elements than the file holds");
    }
    std::vector<T> v(count);
    if (count) bytes(v.data(), count * sizeof(T));
    return v;
  }
  bool exhausted() const { return pos_ == n_; }

 private:
  const uint8_t* p_;
  size_t n_;
  size_t pos_ = 0;
};

void write_split(Writer& w, const Split& s) {
  w.pod<uint64_t>(static_cast<uint64_t>(s.n));
  w.vec(s.targets);
  w.vec(s.bias);
  w.vec(s.aligned);
  w.vec(s.images_u8);
  w.vec(s.images_f32);
}

Split read_split(Reader& r) {
  Split s;
  s.n = static_cast<int64_t>(r.pod<uint64_t>());
  s.targets = r.vec<uint8_t>();
  s.bias = r.vec<uint8_t>();
  s.aligned = r.vec<uint8_t>();
  s.images_u8 = r.vec<uint8_t>();
  s.images_f32 = r.vec<float>();
  if (static_cast<int64_t>(s.targets.size()) != s.n ||
      static_cast<int64_t>(s.bias.size()) != s.n ||
      static_cast<int64_t>(s.aligned.size()) != s.n) {
    throw DataError("dataset container split metadata lengths disagree with sample count");
  }
  return s;
}

}  // namespace

void save_dataset(const BiasedDataset& ds, const std::string& path) {
  std::ostringstream body;
  Writer w(body);
  w.bytes(kMagic, sizeof(kMagic));
  const auto& sp = ds.spec;
  w.pod<uint8_t>(static_cast<uint8_t>(sp.base));
  w.pod<uint8_t>(static_cast<uint8_t>(sp.severity));
  uint8_t flags = 0;
  if (sp.lossless_float) flags |= kFlagLossless;
  if (sp.test_excludes_designated) flags |= kFlagTestExcludes;
  w.pod<uint8_t>(flags);
  w.pod<uint8_t>(0);  // reserved
  w.pod<double>(sp.conflict_ratio);
  w.pod<uint64_t>(sp.seed);
  w.pod<int32_t>(static_cast<int32_t>(sp.subset_per_class));
  w.pod<uint16_t>(static_cast<uint16_t>(ds.h));
  w.pod<uint16_t>(static_cast<uint16_t>(ds.w));
  w.pod<uint16_t>(static_cast<uint16_t>(ds.c));
  w.pod<uint64_t>(ds.content_digest());
  write_split(w, ds.train);
  write_split(w, ds.test);

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path + " for writing");
  const std::string buf = body.str();
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  os.flush();
  if (!os) throw DataError("failed while writing " + path);
}

BiasedDataset load_dataset(const std::string& path) {
  const std::vector<uint8_t> raw = read_file_bytes(path);
  Reader r(raw.data(), raw.size());
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path + " is not a dataset container (bad magic)");
  }
  BiasedDataset ds;
  auto& sp = ds.spec;
  const uint8_t base = r.pod<uint8_t>();
  if (base != static_cast<uint8_t>(BaseDataset::colored_mnist) &&
      base != static_cast<uint8_t>(BaseDataset::corrupted_cifar10)) {
    throw DataError(path + " declares an unknown base dataset id " + std::to_string(base));
  }
  sp.base = static_cast<BaseDataset>(base);
  sp.severity = r.pod<uint8_t>();
  const uint8_t flags = r.pod<uint8_t>();
  sp.lossless_float = (flags & kFlagLossless) != 0;
  sp.test_excludes_designated = (flags & kFlagTestExcludes) != 0;
  r.pod<uint8_t>();  // reserved
  sp.conflict_ratio = r.pod<double>();
  sp.seed = r.pod<uint64_t>();
  sp.subset_per_class = r.pod<int32_t>();
  sp.allow_any_ratio = true;  // the file records what was built, not the CLI gate
  ds.h = r.pod<uint16_t>();
  ds.w = r.pod<uint16_t>();
  ds.c = r.pod<uint16_t>();
  const uint64_t stored_digest = r.pod<uint64_t>();
  ds.train = read_split(r);
  ds.test = read_split(r);
  if (!r.exhausted()) throw DataError(path + " has trailing bytes after the test split");

  const int64_t px = static_cast<int64_t>(ds.h) * ds.w * ds.c;
  const auto check_split = [&](const Split& s, const char* name) {
    const auto want_u8 = sp.lossless_float ? 0 : s.n * px;
    const auto want_f32 = sp.lossless_float ? s.n * px : 0;
    if (static_cast<int64_t>(s.images_u8.size()) != want_u8 ||
        static_cast<int64_t>(s.images_f32.size()) != want_f32) {
      throw DataError(std::string(path) + ": " + name + " pixel payload size disagrees with header");
    }
  };
  check_split(ds.train, "train split");
  check_split(ds.test, "test split");

  const uint64_t digest = ds.content_digest();
  if (digest != stored_digest) {
    throw DataError(path + " failed its content digest check (file corrupt or hand-edited)");
  }
  return ds;
}

std::string default_container_name(const BiasedDatasetSpec& spec) {
  std::ostringstream os;
  os << base_dataset_name(spec.base) << "_" << spec.ratio_permille() << "permille_s"
     << spec.seed;
  if (spec.subset_per_class > 0) os << "_sub" << spec.subset_per_class;
  os << ".dsb";
  return os.str();
}

}  // namespace dfa::data
