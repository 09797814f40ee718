#pragma once

// Little-endian primitive encoding shared by the EVT1 / VOX1 / CKP1 / FRM1 codecs.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "e2v/common.hpp"

namespace e2v::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class ByteWriter {
 public:
  void bytes(const void* src, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(src);
    buf_.insert(buf_.end(), p, p + n);
  }

  template <typename T>
  void put(T value) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
    }
    bytes(raw, sizeof(T));
  }

  void magic(std::string_view m) { bytes(m.data(), m.size()); bytes("", 1); }

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& data, std::string context)
      : data_(data), context_(std::move(context)) {}

  void bytes(void* dst, std::size_t n) {
    if (remaining() < n) {
      throw Error(Errc::BadFormat, context_ + ": truncated at byte " + std::to_string(pos_));
    }
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }

  template <typename T>
  T get() {
    std::uint8_t raw[sizeof(T)];
    bytes(raw, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
    }
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  void expect_magic(std::string_view m) {
    std::string got(m.size() + 1, '\0');
    if (remaining() < got.size()) throw Error(Errc::BadFormat, context_ + ": bad magic");
    bytes(got.data(), got.size());
    if (got.compare(0, m.size(), m) != 0 || got.back() != '\0') {
      throw Error(Errc::BadFormat, context_ + ": bad magic");
    }
  }

  void expect_end() const {
    if (remaining() != 0) {
      throw Error(Errc::BadFormat,
                  context_ + ": " + std::to_string(remaining()) + " trailing bytes");
    }
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& context() const { return context_; }

 private:
  const std::vector<std::uint8_t>& data_;
  std::size_t pos_ = 0;
  std::string context_;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& data);

}  // namespace e2v::detail
