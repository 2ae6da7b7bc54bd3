#include "cropdiv/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace cropdiv::io {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

void Writer::u32(std::uint32_t v) { bytes(&v, sizeof v); }
void Writer::u64(std::uint64_t v) { bytes(&v, sizeof v); }
void Writer::f64(double v) { bytes(&v, sizeof v); }
void Writer::u8(std::uint8_t v) { buf_.push_back(v); }

void Writer::bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  buf_.insert(buf_.end(), p, p + n);
}

void Reader::need(std::size_t n) {
  if (pos_ + n > buf_.size()) {
    throw DataError("truncated input: need " + std::to_string(n) +
                    " bytes at offset " + std::to_string(pos_) + ", have " +
                    std::to_string(buf_.size() - pos_));
  }
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, buf_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

double Reader::f64() {
  need(8);
  double v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::uint8_t Reader::u8() {
  need(1);
  return buf_[pos_++];
}

void Reader::bytes(void* out, std::size_t n) {
  need(n);
  std::memcpy(out, buf_.data() + pos_, n);
  pos_ += n;
}

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) {
      c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
    }
    table[i] = c;
  }
  return table;
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
  static const auto table = make_crc_table();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) {
    c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  }
  return c ^ 0xFFFFFFFFu;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::vector<std::uint8_t>& data) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DataError("cannot open for writing: " + tmp.string());
    }
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out) {
      throw DataError("write failed: " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  std::vector<std::uint8_t> data(text.begin(), text.end());
  write_file_atomic(path, data);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) {
    throw DataError("cannot open: " + path.string());
  }
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(data.data()), size);
  if (!in) {
    throw DataError("read failed: " + path.string());
  }
  return data;
}

}  // namespace cropdiv::io
