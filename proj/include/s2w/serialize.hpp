#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "s2w/errors.hpp"

namespace s2w {

// Little-endian binary container helpers used by the corpus file, feature
// cache, retrieval index and model checkpoints.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path)
      : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw IoError("cannot open file for writing: " + path);
  }

  void magic(const char tag[4], std::uint32_t version) {
    out_.write(tag, 4);
    u32(version);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v),
                         static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16),
                         static_cast<std::uint8_t>(v >> 24)};
    raw(b, 4);
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) {
    std::uint32_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    __builtin_memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    __builtin_memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void f32_vec(const std::vector<float>& v) {
    u64(v.size());
    for (float x : v) f32(x);
  }
  void f64_vec(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void i32_vec(const std::vector<int>& v) {
    u64(v.size());
    for (int x : v) i32(x);
  }
  void raw(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed: " + path_);
  }
  void close() {
    out_.close();
    if (out_.fail()) throw IoError("close failed: " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path)
      : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open file: " + path);
  }

  // Checks the 4-byte tag and returns the version.
  std::uint32_t magic(const char tag[4]) {
    char got[4];
    raw(got, 4);
    if (std::string(got, 4) != std::string(tag, 4)) {
      throw SchemaError("bad magic in " + path_ + ": expected '" +
                        std::string(tag, 4) + "', got '" + std::string(got, 4) +
                        "'");
    }
    return u32();
  }
  std::uint8_t u8() {
    std::uint8_t v;
    raw(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    raw(b, 4);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    __builtin_memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    __builtin_memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::vector<float> f32_vec() {
    std::vector<float> v(u64());
    for (auto& x : v) x = f32();
    return v;
  }
  std::vector<double> f64_vec() {
    std::vector<double> v(u64());
    for (auto& x : v) x = f64();
    return v;
  }
  std::vector<int> i32_vec() {
    std::vector<int> v(u64());
    for (auto& x : v) x = i32();
    return v;
  }
  void raw(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw SchemaError("unexpected end of file: " + path_);
    }
  }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace s2w
