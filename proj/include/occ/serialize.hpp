#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occ/tensor.hpp"

namespace occ {

// Little-endian byte buffer used by all binary file formats. Every format is
// magic + u16 version + payload + CRC32 trailer over everything before the
// trailer, so artifacts are bit-exact and corruption is detected on load.
class ByteWriter {
 public:
  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void bytes(const void* p, std::size_t n);
  void str(const std::string& s);  // u32 length prefix + raw bytes
  void tensor(const Tensor& t);    // u8 rank, u32 dims, f64 data

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  void append_crc32();

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> buf) : buf_(std::move(buf)) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  Tensor tensor();
  void magic(const char expect[4], const std::string& what);

  // validates the trailing CRC32 over all preceding bytes; call first
  void check_crc32(const std::string& what);
  std::size_t remaining() const { return buf_.size() - pos_ - trailer_; }

 private:
  void need(std::size_t n);
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::size_t trailer_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n);

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

// Binary tensor file: magic "OCT1", u16 version, u8 rank, u32 dims,
// little-endian 64-bit floats, CRC32 trailer.
void save_tensor(const Tensor& t, const std::string& path);
Tensor load_tensor(const std::string& path);

}  // namespace occ
