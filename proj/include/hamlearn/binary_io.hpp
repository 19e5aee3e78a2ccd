#pragma once

// Little-endian byte buffers shared by the dataset, checkpoint and predictor
// container formats. Every container ends with a CRC-32 (zlib polynomial)
// over all preceding bytes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hamlearn/errors.hpp"

namespace hamlearn::io {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

class ByteWriter {
public:
  void bytes(std::string_view s) { buf_.append(s.data(), s.size()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void i64(std::int64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void f64s(std::span<const double> v) { raw(v.data(), v.size_bytes()); }
  /// u64 length prefix followed by the bytes.
  void blob(std::string_view s) {
    u64(s.size());
    bytes(s);
  }

  const std::string& data() const noexcept { return buf_; }
  std::string take() { return std::move(buf_); }

private:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string buf_;
};

class ByteReader {
public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  std::int64_t i64() { return pod<std::int64_t>(); }
  double f64() { return pod<double>(); }
  void f64s(std::span<double> out) {
    auto s = bytes(out.size_bytes());
    std::memcpy(out.data(), s.data(), s.size());
  }
  std::string_view blob() { return bytes(checked_size(u64())); }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
  template <class T> T pod() {
    T v;
    auto s = bytes(sizeof v);
    std::memcpy(&v, s.data(), sizeof v);
    return v;
  }
  std::size_t checked_size(std::uint64_t n) const {
    if (n > remaining()) throw FormatError("container truncated");
    return static_cast<std::size_t>(n);
  }
  void need(std::size_t n) const {
    if (n > remaining()) throw FormatError("container truncated");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32(std::string_view data);

/// Append the CRC trailer to `body`.
std::string seal(std::string body);

/// Verify and strip the CRC trailer. Throws FormatError on mismatch.
std::string_view unseal(std::string_view sealed);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

/// 16 lowercase hex digits of a 64-bit FNV-1a hash; identifies file contents.
std::string digest_hex(std::string_view data);

} // namespace hamlearn::io
