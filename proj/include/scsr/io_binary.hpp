#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace scsr {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Little-endian on-disk layout (native on x86); fixed-width helpers so every
// file format in the toolkit shares one code path.

class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw FormatError("cannot open for write: " + path);
  }
  void magic(const char m[4]) { out_.write(m, 4); }
  void u8(uint8_t v) { raw(&v, 1); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void i64(int64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void bytes(const void* p, size_t n) { raw(p, n); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  template <typename T>
  void values(const std::vector<T>& v) {
    raw(v.data(), v.size() * sizeof(T));
  }
  void close() {
    out_.close();
    if (!out_) throw FormatError("write failed on close");
  }

 private:
  void raw(const void* p, size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw FormatError("write failed");
  }
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw FormatError("cannot open for read: " + path);
  }
  void expect_magic(const char m[4]) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, m, 4) != 0) throw FormatError("bad magic in " + path_);
  }
  uint8_t u8() { uint8_t v; raw(&v, 1); return v; }
  uint32_t u32() { uint32_t v; raw(&v, 4); return v; }
  uint64_t u64() { uint64_t v; raw(&v, 8); return v; }
  int64_t i64() { int64_t v; raw(&v, 8); return v; }
  double f64() { double v; raw(&v, 8); return v; }
  void bytes(void* p, size_t n) { raw(p, n); }
  std::string str() {
    uint32_t n = u32();
    if (n > (1u << 24)) throw FormatError("absurd string length in " + path_);
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  template <typename T>
  void values(std::vector<T>& v, size_t count) {
    v.resize(count);
    raw(v.data(), count * sizeof(T));
  }

 private:
  void raw(void* p, size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n) throw FormatError("truncated file: " + path_);
  }
  std::ifstream in_;
  std::string path_;
};

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const uint8_t*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot hash missing file: " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
    if (in.eof()) break;
  }
  return h;
}

using Hash16 = std::array<uint8_t, 16>;

inline std::string hex(const Hash16& h) {
  static const char* d = "0123456789abcdef";
  std::string s;
  for (uint8_t b : h) {
    s.push_back(d[b >> 4]);
    s.push_back(d[b & 15]);
  }
  return s;
}

}  // namespace scsr
