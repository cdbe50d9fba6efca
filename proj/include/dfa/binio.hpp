#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "dfa/errors.hpp"

namespace dfa::binio {

// Little binary stream helpers shared by the checkpoint and sampler
// serializers. All integers are written in host byte order; the files are
// consumed by the same build that wrote them.

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("binary stream ended mid-record");
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_pod<uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, uint64_t max_len = 1ull << 32) {
  const uint64_t n = read_pod<uint64_t>(is);
  if (n > max_len) throw DataError("binary stream declares an oversized string");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw DataError("binary stream ended mid-string");
  return s;
}

template <typename T>
void write_vec(std::ostream& os, const std::vector<T>& v) {
  write_pod<uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
std::vector<T> read_vec(std::istream& is, uint64_t max_elems = 1ull << 32) {
  const uint64_t n = read_pod<uint64_t>(is);
  if (n > max_elems) throw DataError("binary stream declares an oversized array");
  std::vector<T> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw DataError("binary stream ended mid-array");
  return v;
}

}  // namespace dfa::binio
