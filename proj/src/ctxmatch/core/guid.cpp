#include "ctxmatch/core/guid.hpp"

#include <openssl/evp.h>

#include <memory>

#include "ctxmatch/core/error.hpp"

namespace ctxmatch {

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::optional<Guid> Guid::from_hex(std::string_view hex) {
  if (hex.size() != kDigits) return std::nullopt;
  std::array<std::uint8_t, kBytes> bytes{};
  for (std::size_t i = 0; i < kBytes; ++i) {
    const int hi = hex_value(hex[2 * i]);
    const int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    bytes[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return Guid(bytes);
}

Guid Guid::parse(std::string_view hex) {
  auto g = from_hex(hex);
  if (!g) throw InvalidArgument("not a 32-digit hex identifier: '" + std::string(hex) + "'");
  return *g;
}

Guid Guid::from_value(UInt128 v) {
  std::array<std::uint8_t, kBytes> bytes{};
  for (std::size_t i = kBytes; i-- > 0;) {
    bytes[i] = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
  }
  return Guid(bytes);
}

std::string Guid::hex() const {
  static constexpr char kDigitChars[] = "0123456789abcdef";
  std::string out(kDigits, '0');
  for (std::size_t i = 0; i < kBytes; ++i) {
    out[2 * i] = kDigitChars[bytes_[i] >> 4];
    out[2 * i + 1] = kDigitChars[bytes_[i] & 0x0f];
  }
  return out;
}

UInt128 Guid::value() const {
  UInt128 v = 0;
  for (auto b : bytes_) v = (v << 8) | b;
  return v;
}

Guid guid_of(std::span<const std::uint8_t> content) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1 || len < Guid::kBytes) {
    throw Error("SHA-256 digest failed");
  }
  std::array<std::uint8_t, Guid::kBytes> bytes{};
  std::copy_n(digest, Guid::kBytes, bytes.begin());
  return Guid(bytes);
}

Guid guid_of(std::string_view content) {
  return guid_of(std::span(reinterpret_cast<const std::uint8_t*>(content.data()), content.size()));
}

std::size_t shared_prefix(const Guid& a, const Guid& b) {
  for (std::size_t i = 0; i < Guid::kDigits; ++i) {
    if (a.digit(i) != b.digit(i)) return i;
  }
  return Guid::kDigits;
}

UInt128 numeric_distance(const Guid& a, const Guid& b) {
  const UInt128 x = a.value();
  const UInt128 y = b.value();
  return x > y ? x - y : y - x;
}

}  // namespace ctxmatch
