#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "prefdiff/io/checkpoint.hpp"

namespace prefdiff::io {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_bytes(std::string_view bytes) { out_.append(bytes); }
  void put_floats(const float* data, std::size_t n) { out_.append(reinterpret_cast<const char*>(data), n * sizeof(float)); }

  std::string& str() { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in, std::string what) : in_(in), what_(std::move(what)) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }
  std::string_view take(std::size_t n) {
    if (in_.size() - pos_ < n) throw FormatError(what_ + ": truncated file");
    const std::string_view out = in_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  void get_floats(float* data, std::size_t n) { std::memcpy(data, take(n * sizeof(float)).data(), n * sizeof(float)); }

  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace prefdiff::io
