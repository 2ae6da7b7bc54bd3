#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "cropdiv/io.hpp"
#include "cropdiv/types.hpp"

using namespace cropdiv;
using namespace cropdiv::io;

TEST_CASE("writer and reader round-trip every primitive") {
  Writer w;
  w.u32(0xDEADBEEFu);
  w.u64(0x0123456789ABCDEFull);
  w.f64(-1.5);
  w.f64(3.141592653589793);
  w.u8(7);
  const char text[] = "crop";
  w.bytes(text, 4);

  Reader r(w.buffer());
  CHECK(r.u32() == 0xDEADBEEFu);
  CHECK(r.u64() == 0x0123456789ABCDEFull);
  CHECK(r.f64() == -1.5);
  CHECK(r.f64() == 3.141592653589793);
  CHECK(r.u8() == 7);
  char back[5] = {};
  r.bytes(back, 4);
  CHECK(std::string(back) == "crop");
  CHECK(r.at_end());
}

TEST_CASE("encoding is little endian") {
  Writer w;
  w.u32(0x04030201u);
  const auto& b = w.buffer();
  REQUIRE(b.size() == 4);
  CHECK(b[0] == 1);
  CHECK(b[1] == 2);
  CHECK(b[2] == 3);
  CHECK(b[3] == 4);
}

TEST_CASE("f64 bytes survive bit-exactly") {
  const double values[] = {0.0, -0.0, 1e-308, -1.7976931348623157e308,
                           5.0 / 3.0};
  Writer w;
  for (double v : values) w.f64(v);
  Reader r(w.buffer());
  for (double v : values) {
    const double got = r.f64();
    std::uint64_t a = 0, b = 0;
    std::memcpy(&a, &got, 8);
    std::memcpy(&b, &v, 8);
    CHECK(a == b);
  }
}

TEST_CASE("crc32 matches the reference check value") {
  const char* digits = "123456789";
  CHECK(crc32(reinterpret_cast<const std::uint8_t*>(digits), 9) == 0xCBF43926u);
  CHECK(crc32(nullptr, 0) == 0u);
}

TEST_CASE("truncated reads raise DataError with the byte offset") {
  Reader r(std::vector<std::uint8_t>{1, 2});
  CHECK(r.u8() == 1);
  CHECK_THROWS_AS(r.u32(), DataError);
  try {
    Reader r2(std::vector<std::uint8_t>{1, 2});
    r2.u8();
    r2.u32();
  } catch (const DataError& e) {
    // the offset of the failed read should be named
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
}

TEST_CASE("atomic file write round-trips and leaves no temp files") {
  const auto dir = std::filesystem::temp_directory_path() / "cropdiv_io_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "blob.bin";

  std::vector<std::uint8_t> payload(1000);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    payload[i] = static_cast<std::uint8_t>(i * 31);
  }
  write_file_atomic(path, payload);
  CHECK(read_file(path) == payload);

  // overwrite with text via the string overload
  write_file_atomic(path, std::string("hello"));
  const auto back = read_file(path);
  CHECK(std::string(back.begin(), back.end()) == "hello");

  std::size_t entries = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    (void)entry;
    ++entries;
  }
  CHECK(entries == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("reading a missing file raises DataError") {
  CHECK_THROWS_AS(read_file("/nonexistent/cropdiv/nope.bin"), DataError);
}
