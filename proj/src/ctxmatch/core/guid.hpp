#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace ctxmatch {

__extension__ using UInt128 = unsigned __int128;

/// 128-bit identifier rendered as 32 lowercase hex digits. Used both for
/// content-derived item keys and for node identifiers.
class Guid {
 public:
  static constexpr std::size_t kBytes = 16;
  static constexpr std::size_t kDigits = 32;
  static constexpr unsigned kRadix = 16;

  constexpr Guid() = default;
  explicit Guid(const std::array<std::uint8_t, kBytes>& bytes) : bytes_(bytes) {}

  static std::optional<Guid> from_hex(std::string_view hex);
  /// Throws InvalidArgument unless `hex` is exactly 32 hex digits.
  static Guid parse(std::string_view hex);
  static Guid from_value(UInt128 v);

  std::string hex() const;
  /// Hex digit `i` counting from the most significant end.
  unsigned digit(std::size_t i) const {
    const std::uint8_t b = bytes_[i / 2];
    return (i % 2 == 0) ? (b >> 4) : (b & 0x0f);
  }
  UInt128 value() const;
  const std::array<std::uint8_t, kBytes>& bytes() const { return bytes_; }

  auto operator<=>(const Guid&) const = default;

 private:
  std::array<std::uint8_t, kBytes> bytes_{};
};

using NodeId = Guid;

/// First 128 bits of SHA-256(content).
Guid guid_of(std::span<const std::uint8_t> content);
Guid guid_of(std::string_view content);

/// Number of leading hex digits shared by `a` and `b` (0..32).
std::size_t shared_prefix(const Guid& a, const Guid& b);

UInt128 numeric_distance(const Guid& a, const Guid& b);

}  // namespace ctxmatch

template <>
struct std::hash<ctxmatch::Guid> {
  std::size_t operator()(const ctxmatch::Guid& g) const noexcept {
    std::size_t h = 0;
    for (std::size_t i = 0; i < sizeof(std::size_t); ++i) h = (h << 8) | g.bytes()[i];
    return h;
  }
};
