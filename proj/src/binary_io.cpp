#include "dbgn/binary_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "dbgn/errors.hpp"

namespace dbgn::io {
namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
    return v;
  }
}

}  // namespace

BinaryWriter::BinaryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
  if (!out_) throw IoError("cannot open for writing: " + path);
}

void BinaryWriter::raw(const void* data, std::size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out_) throw IoError("write failed: " + path_);
}

void BinaryWriter::magic(std::string_view tag) {
  char buf[8] = {};
  std::memcpy(buf, tag.data(), std::min<std::size_t>(8, tag.size()));
  raw(buf, 8);
}

void BinaryWriter::u32(std::uint32_t v) {
  v = to_little(v);
  raw(&v, sizeof v);
}

void BinaryWriter::u64(std::uint64_t v) {
  v = to_little(v);
  raw(&v, sizeof v);
}

void BinaryWriter::f64(double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  u64(bits);
}

void BinaryWriter::f64s(std::span<const double> vs) {
  if constexpr (std::endian::native == std::endian::little) {
    raw(vs.data(), vs.size_bytes());
  } else {
    for (double v : vs) f64(v);
  }
}

void BinaryWriter::str(const std::string& s) {
  u64(s.size());
  raw(s.data(), s.size());
}

void BinaryWriter::close() {
  out_.flush();
  if (!out_) throw IoError("flush failed: " + path_);
  out_.close();
}

BinaryReader::BinaryReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw IoError("cannot open for reading: " + path);
}

void BinaryReader::raw(void* data, std::size_t n) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw IoError("truncated file: " + path_);
  }
}

void BinaryReader::expect_magic(std::string_view tag) {
  char buf[8];
  raw(buf, 8);
  char want[8] = {};
  std::memcpy(want, tag.data(), std::min<std::size_t>(8, tag.size()));
  if (std::memcmp(buf, want, 8) != 0) {
    throw IoError("bad magic header in " + path_ + " (expected " + std::string(tag) + ")");
  }
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  raw(&v, sizeof v);
  return to_little(v);
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  raw(&v, sizeof v);
  return to_little(v);
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::vector<double> BinaryReader::f64s(std::size_t n) {
  std::vector<double> out(n);
  if constexpr (std::endian::native == std::endian::little) {
    raw(out.data(), n * sizeof(double));
  } else {
    for (auto& v : out) v = f64();
  }
  return out;
}

std::string BinaryReader::str() {
  const auto n = u64();
  if (n > (1ULL << 32)) throw IoError("implausible string length in " + path_);
  std::string s(n, '\0');
  raw(s.data(), n);
  return s;
}

void BinaryReader::expect_version(std::uint32_t expected) {
  const auto v = u32();
  if (v != expected) {
    throw IoError("version mismatch in " + path_ + ": file v" + std::to_string(v) + ", expected v" +
                  std::to_string(expected));
  }
}

bool BinaryReader::at_end() { return in_.peek() == std::char_traits<char>::eof(); }

}  // namespace dbgn::io
