#include "occ/serialize.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace occ {

namespace {
constexpr std::uint16_t kTensorVersion = 1;
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

void ByteWriter::u8(std::uint8_t v) { buf_.push_back(v); }

void ByteWriter::u16(std::uint16_t v) {
  buf_.push_back(static_cast<std::uint8_t>(v & 0xff));
  buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void ByteWriter::f64(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  u64(bits);
}

void ByteWriter::bytes(const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  buf_.insert(buf_.end(), b, b + n);
}

void ByteWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void ByteWriter::tensor(const Tensor& t) {
  u8(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) u32(static_cast<std::uint32_t>(d));
  for (std::size_t i = 0; i < t.size(); ++i) f64(t[i]);
}

void ByteWriter::append_crc32() { u32(crc32_of(buf_.data(), buf_.size())); }

void ByteReader::need(std::size_t n) {
  if (pos_ + n + trailer_ > buf_.size())
    throw std::runtime_error("truncated file: wanted " + std::to_string(n) +
                             " more bytes at offset " + std::to_string(pos_));
}

std::uint8_t ByteReader::u8() {
  need(1);
  return buf_[pos_++];
}

std::uint16_t ByteReader::u16() {
  need(2);
  std::uint16_t v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::f64() {
  std::uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string ByteReader::str() {
  std::uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
  pos_ += n;
  return s;
}

Tensor ByteReader::tensor() {
  std::uint8_t rank = u8();
  std::vector<std::size_t> shape(rank);
  std::size_t total = 1;
  for (std::uint8_t i = 0; i < rank; ++i) {
    shape[i] = u32();
    if (shape[i] == 0) throw std::runtime_error("tensor with zero dimension in file");
    total *= shape[i];
  }
  std::vector<double> data(total);
  for (std::size_t i = 0; i < total; ++i) data[i] = f64();
  return Tensor(std::move(shape), std::move(data));
}

void ByteReader::magic(const char expect[4], const std::string& what) {
  need(4);
  if (std::memcmp(buf_.data() + pos_, expect, 4) != 0)
    throw std::runtime_error(what + ": bad magic bytes (not a " + what + " file)");
  pos_ += 4;
}

void ByteReader::check_crc32(const std::string& what) {
  if (buf_.size() < 8) throw std::runtime_error(what + ": file too short");
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<std::uint32_t>(buf_[buf_.size() - 4 + i]) << (8 * i);
  std::uint32_t actual = crc32_of(buf_.data(), buf_.size() - 4);
  if (stored != actual) throw std::runtime_error(what + ": checksum mismatch");
  trailer_ = 4;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  f.seekg(0, std::ios::end);
  std::streampos n = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
  f.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!f) throw std::runtime_error("read failed: " + path);
  return bytes;
}

void save_tensor(const Tensor& t, const std::string& path) {
  ByteWriter w;
  w.bytes("OCT1", 4);
  w.u16(kTensorVersion);
  w.tensor(t);
  w.append_crc32();
  write_file(path, w.buffer());
}

Tensor load_tensor(const std::string& path) {
  ByteReader r(read_file(path));
  r.check_crc32("tensor file " + path);
  r.magic("OCT1", "tensor file " + path);
  std::uint16_t version = r.u16();
  if (version > kTensorVersion)
    throw std::runtime_error("tensor file " + path + ": format version " +
                             std::to_string(version) + " is newer than supported " +
                             std::to_string(kTensorVersion));
  Tensor t = r.tensor();
  if (r.remaining() != 0) throw std::runtime_error("tensor file " + path + ": trailing bytes");
  return t;
}

}  // namespace occ
