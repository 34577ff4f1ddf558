#pragma once

// Little-endian byte buffer helpers shared by every on-disk format.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "evpr/error.hpp"

namespace evpr::io {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are written by memcpy of little-endian values");

class ByteWriter {
 public:
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto* p = reinterpret_cast<const uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  void put_bytes(std::span<const uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  void put_magic(std::string_view magic) {
    bytes_.insert(bytes_.end(), magic.begin(), magic.end());
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  void put_array(std::span<const T> values) {
    const auto* p = reinterpret_cast<const uint8_t*>(values.data());
    bytes_.insert(bytes_.end(), p, p + values.size_bytes());
  }

  /// Overwrites a previously written value at `offset`.
  template <class T>
    requires std::is_arithmetic_v<T>
  void patch(size_t offset, T value) {
    std::memcpy(bytes_.data() + offset, &value, sizeof(T));
  }

  size_t size() const noexcept { return bytes_.size(); }
  const std::vector<uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<uint8_t> release() noexcept { return std::move(bytes_); }

 private:
  std::vector<uint8_t> bytes_;
};

/// Bounds-checked cursor. Reading past the end throws `underflow_code`.
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data, ErrorCode underflow_code = ErrorCode::TruncatedRecord)
      : data_(data), underflow_(underflow_code) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    require(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  void get_array(std::span<T> out) {
    require(out.size_bytes());
    std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }

  std::span<const uint8_t> get_bytes(size_t n) {
    require(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool magic_matches(std::string_view magic) const noexcept {
    return data_.size() - pos_ >= magic.size() &&
           std::memcmp(data_.data() + pos_, magic.data(), magic.size()) == 0;
  }

  void seek(size_t pos) {
    if (pos > data_.size()) throw Error(underflow_, "seek past end of buffer");
    pos_ = pos;
  }
  void skip(size_t n) { require(n); pos_ += n; }
  size_t position() const noexcept { return pos_; }
  size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void require(size_t n) const {
    if (data_.size() - pos_ < n) throw Error(underflow_, "unexpected end of data");
  }

  std::span<const uint8_t> data_;
  size_t pos_ = 0;
  ErrorCode underflow_;
};

std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace evpr::io
