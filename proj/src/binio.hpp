#pragma once

// Little-endian binary readers/writers shared by the TFA1, TFAM and TFAC
// containers. The reader tracks its byte offset so format errors can point at
// the failing field.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tfa/error.hpp"

namespace tfa::detail {

static_assert(std::endian::native == std::endian::little,
              "binary containers assume a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&value);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void put_magic(const char (&magic)[5]) { put_bytes(magic, 4); }
  void put_string16(const std::string& s) {
    put(static_cast<std::uint16_t>(s.size()));
    put_bytes(s.data(), s.size());
  }

  const std::vector<char>& bytes() const { return buf_; }

  void write_file(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw FormatError(FormatError::Kind::kIo, 0, "cannot open " + path.string() + " for writing");
    }
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) {
      throw FormatError(FormatError::Kind::kIo, buf_.size(), "write failed for " + path.string());
    }
  }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

  static ByteReader from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      throw FormatError(FormatError::Kind::kIo, 0, "cannot open " + path.string());
    }
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(data));
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void require(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(FormatError::Kind::kTruncated, pos_,
                        std::string("truncated ") + what + ": need " + std::to_string(n) +
                            " bytes, have " + std::to_string(remaining()));
    }
  }

  template <typename T>
  T get(const char* what) {
    require(sizeof(T), what);
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  void get_bytes(void* dst, std::size_t n, const char* what) {
    require(n, what);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }

  std::string get_string16(const char* what) {
    auto n = get<std::uint16_t>(what);
    std::string s(n, '\0');
    get_bytes(s.data(), n, what);
    return s;
  }

  void expect_magic(const char (&magic)[5]) {
    if (remaining() < 4 || std::memcmp(data_.data() + pos_, magic, 4) != 0) {
      throw FormatError(FormatError::Kind::kBadMagic, pos_,
                        std::string("bad magic, expected \"") + magic + "\"");
    }
    pos_ += 4;
  }

  void expect_version(std::uint16_t want) {
    std::size_t at = pos_;
    auto v = get<std::uint16_t>("version");
    if (v != want) {
      throw FormatError(FormatError::Kind::kVersionMismatch, at,
                        "unsupported version " + std::to_string(v) + " (expected " +
                            std::to_string(want) + ")");
    }
  }

 private:
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

}  // namespace tfa::detail
