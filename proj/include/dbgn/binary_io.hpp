#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dbgn::io {

// Little-endian binary writer/reader used by every on-disk format.
// All reads throw IoError on truncation.

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path);

  void magic(std::string_view tag);  // exactly 8 bytes
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> vs);
  void str(const std::string& s);
  void close();

 private:
  void raw(const void* data, std::size_t n);
  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path);

  /// Throws IoError if the next 8 bytes differ from `tag`.
  void expect_magic(std::string_view tag);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::vector<double> f64s(std::size_t n);
  std::string str();
  /// Version check helper: throws IoError on mismatch.
  void expect_version(std::uint32_t expected);
  bool at_end();

 private:
  void raw(void* data, std::size_t n);
  std::string path_;
  std::ifstream in_;
};

}  // namespace dbgn::io
