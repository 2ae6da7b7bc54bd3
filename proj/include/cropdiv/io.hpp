#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cropdiv/types.hpp"

namespace cropdiv::io {

/// Little-endian byte buffer builder.
class Writer {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void u8(std::uint8_t v);
  void bytes(const void* data, std::size_t n);

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::size_t size() const { return buf_.size(); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Little-endian reader over a byte buffer; errors carry the byte offset.
class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}

  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::uint8_t u8();
  void bytes(void* out, std::size_t n);

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n);

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

/// CRC-32 (IEEE 802.3 polynomial, reflected).
std::uint32_t crc32(const std::uint8_t* data, std::size_t n);

/// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path,
                       const std::vector<std::uint8_t>& data);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace cropdiv::io
