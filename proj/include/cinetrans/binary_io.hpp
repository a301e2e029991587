#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cinetrans/error.hpp"

// Little-endian byte buffers and whole-file I/O shared by the CTF, MSK, ATN
// and EMB formats. Multi-byte values are always encoded LSB first, whatever
// the host byte order.
namespace cinetrans::binary {

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
 public:
  void magic(std::string_view m) { buf_.insert(buf_.end(), m.begin(), m.end()); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  void u8(std::uint8_t v) { buf_.push_back(v); }

  void raw(std::span<const std::uint8_t> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }

  void reserve(std::size_t n) { buf_.reserve(n); }

  const Bytes& bytes() const& noexcept { return buf_; }
  Bytes bytes() && noexcept { return std::move(buf_); }

 private:
  Bytes buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string_view what) : data_(data), what_(what) {}

  // Throws FormatError unless the stream starts with `m`.
  void expect_magic(std::string_view m) {
    if (data_.size() < m.size() ||
        std::memcmp(data_.data(), m.data(), m.size()) != 0) {
      throw FormatError(what_ + ": bad magic, expected \"" + std::string(m) + "\"");
    }
    pos_ = m.size();
  }

  std::uint32_t u32() {
    need(4, "header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::uint8_t u8() {
    need(1, "payload");
    return data_[pos_++];
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n, "payload");
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  // Payloads must be consumed exactly; trailing bytes mean the header lies.
  void expect_end() const {
    if (remaining() != 0) {
      throw SizeMismatchError(what_ + ": " + std::to_string(remaining()) +
                              " trailing bytes after declared payload");
    }
  }

  // Checks that exactly `n` payload bytes remain before reading them.
  void expect_payload(std::uint64_t n) const {
    if (remaining() != n) {
      throw SizeMismatchError(what_ + ": header declares " + std::to_string(n) +
                              " payload bytes, file holds " + std::to_string(remaining()));
    }
  }

 private:
  void need(std::size_t n, const char* part) const {
    if (remaining() < n) {
      throw SizeMismatchError(what_ + ": truncated " + part);
    }
  }

  std::span<const std::uint8_t> data_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return data;
}

// Writes to a sibling temporary and renames it over `path`, so readers never
// observe a half-written artifact.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed: " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move temporary onto " + path.string());
  }
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace cinetrans::binary
