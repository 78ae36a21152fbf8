#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>

#include "compat/error.hpp"

namespace compat::bin {

// Little-endian encoding independent of host byte order.
template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_arithmetic_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

inline void put_string16(std::string& out, std::string_view s) {
  if (s.size() > 0xffff) throw FormatError("string longer than 65535 bytes: '" +
                                           std::string(s.substr(0, 32)) + "...'");
  put<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  out.append(s);
}

// Bounds-checked sequential reader over an in-memory file image.
class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename T>
  T get(const char* what) {
    static_assert(std::is_arithmetic_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    need(sizeof(T), what);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string string16(const char* what) {
    const auto len = get<std::uint16_t>(what);
    return std::string(bytes(len, what));
  }

  std::size_t position() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == data_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n)
      throw FormatError(std::string("truncated file while reading ") + what + " at byte " +
                        std::to_string(pos_));
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace compat::bin
