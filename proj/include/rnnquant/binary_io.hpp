// Copyright 2026 The rnnquant Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RNNQUANT_BINARY_IO_HPP
#define RNNQUANT_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rnnquant/error.hpp"
#include "rnnquant/numerics.hpp"

namespace rnnquant::binio {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

/// Little-endian byte sink.
class Writer {
 public:
  template <typename T>
  void put(T v) {
    v = to_little(v);
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }

  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  void pad_to(std::size_t alignment) {
    while (bytes_.size() % alignment != 0) bytes_.push_back(0);
  }

  void put_f64_array(std::span<const double> v) {
    put<std::uint64_t>(v.size());
    for (double x : v) put_f64(x);
  }

  std::size_t size() const { return bytes_.size(); }
  const std::vector<unsigned char>& bytes() const { return bytes_; }

  /// Appends the FNV-1a checksum of everything written so far.
  void seal() { put<std::uint64_t>(fnv1a64(bytes_)); }

 private:
  std::vector<unsigned char> bytes_;
};

/// Bounds-checked little-endian reader. Running past the end raises a
/// corruption error.
class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }

  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void skip_to_alignment(std::size_t alignment) {
    while (pos_ % alignment != 0) {
      need(1);
      ++pos_;
    }
  }

  std::vector<double> get_f64_array(std::size_t max_count) {
    const auto n = get<std::uint64_t>();
    if (n > max_count || n > remaining() / 8) throw CorruptionError("array length " + std::to_string(n) + " exceeds payload");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = get_f64();
    return v;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) throw CorruptionError("unexpected end of data at byte " + std::to_string(pos_));
  }

  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

/// Verifies the trailing checksum and returns the sealed payload.
inline std::span<const unsigned char> verify_sealed(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8) throw CorruptionError("file too short for checksum");
  const auto body = bytes.first(bytes.size() - 8);
  Reader tail(bytes.last(8));
  if (tail.get<std::uint64_t>() != fnv1a64(body)) throw CorruptionError("checksum mismatch");
  return body;
}

}  // namespace rnnquant::binio

#endif  // RNNQUANT_BINARY_IO_HPP
