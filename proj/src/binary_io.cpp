#include "hamlearn/binary_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <zlib.h>

namespace hamlearn::io {

std::uint32_t crc32(std::string_view data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < data.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, data.size() - off);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(data.data() + off), static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

std::string seal(std::string body) {
  const std::uint32_t crc = crc32(body);
  body.append(reinterpret_cast<const char*>(&crc), sizeof crc);
  return body;
}

std::string_view unseal(std::string_view sealed) {
  if (sealed.size() < sizeof(std::uint32_t)) throw FormatError("container truncated");
  const std::string_view body = sealed.substr(0, sealed.size() - sizeof(std::uint32_t));
  std::uint32_t stored;
  std::memcpy(&stored, sealed.data() + body.size(), sizeof stored);
  if (stored != crc32(body)) throw FormatError("checksum mismatch");
  return body;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string digest_hex(std::string_view data) {
  // 64-bit FNV-1a. A CRC over a sealed container would always equal the
  // CRC residue, so the digest uses an unrelated hash.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace hamlearn::io
