#pragma once

// Little-endian primitives shared by the checkpoint and dataset containers.
// Values are assembled byte by byte, so output is identical on any host.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "stgcrl/numcore/errors.hpp"

namespace stgcrl::io {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void str(const std::string& s) { bytes(s.data(), s.size()); }

  const std::vector<char>& buffer() const noexcept { return buf_; }
  std::size_t size() const noexcept { return buf_.size(); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::vector<char> buf_;
};

/// Bounds-checked reader over an in-memory buffer. Reads past the end raise
/// DataError with the supplied context string.
class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size) : data_(data), size_(size) {}
  explicit ByteReader(const std::vector<char>& v) : ByteReader(v.data(), v.size()) {}

  std::uint8_t u8(const std::string& ctx) { return static_cast<std::uint8_t>(get(1, ctx)); }
  std::uint16_t u16(const std::string& ctx) { return static_cast<std::uint16_t>(get(2, ctx)); }
  std::uint32_t u32(const std::string& ctx) { return static_cast<std::uint32_t>(get(4, ctx)); }
  std::uint64_t u64(const std::string& ctx) { return get(8, ctx); }
  double f64(const std::string& ctx) { return std::bit_cast<double>(get(8, ctx)); }
  std::string str(std::size_t n, const std::string& ctx) {
    need(n, ctx);
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const noexcept { return pos_; }
  void seek(std::size_t p) { pos_ = p; }
  bool at_end() const noexcept { return pos_ >= size_; }
  std::size_t remaining() const noexcept { return pos_ < size_ ? size_ - pos_ : 0; }

 private:
  void need(std::size_t n, const std::string& ctx) const {
    if (pos_ + n > size_) throw DataError("truncated data while reading " + ctx);
  }
  std::uint64_t get(int n, const std::string& ctx) {
    need(static_cast<std::size_t>(n), ctx);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::vector<char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::vector<char>(text.begin(), text.end()));
}

}  // namespace stgcrl::io
