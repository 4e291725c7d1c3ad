#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "sudo/error.hpp"

namespace sudo {

/// Little-endian encoder for the binary dataset and checkpoint formats.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void put_u32(std::uint32_t v) { put_le(v); }
  void put_u64(std::uint64_t v) { put_le(v); }
  void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void put_bytes(std::string_view bytes) { buf_.append(bytes); }

  std::size_t size() const noexcept { return buf_.size(); }
  const std::string& bytes() const noexcept { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  template <typename U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
  }

  std::string buf_;
};

/// Bounds-checked little-endian decoder; every failure reports its offset.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t get_u8() { return static_cast<std::uint8_t>(get_le<std::uint8_t>("u8")); }
  std::uint32_t get_u32() { return get_le<std::uint32_t>("u32"); }
  std::uint64_t get_u64() { return get_le<std::uint64_t>("u64"); }
  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>("f64")); }

  std::string_view get_bytes(std::size_t n) {
    require(n, "byte block");
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(what, pos_); }

 private:
  void require(std::size_t n, const char* what) const {
    if (remaining() < n) fail(std::string("truncated payload reading ") + what);
  }

  template <typename U>
  U get_le(const char* what) {
    require(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view contents);

}  // namespace sudo
