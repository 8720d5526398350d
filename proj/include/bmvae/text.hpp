#ifndef BMVAE_TEXT_HPP_
#define BMVAE_TEXT_HPP_

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>

#include "bmvae/errors.hpp"

namespace bmvae
{

// Shortest decimal string that parses back to the identical double.
inline std::string format_double(double value)
{
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

inline double parse_double(std::string_view text)
{
  double value = 0.0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc() || result.ptr != text.data() + text.size())
    throw format_error("not a decimal number: '" + std::string(text) + "'");
  return value;
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes)
{
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes)
  {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

inline std::string to_hex(std::uint64_t value)
{
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i)
  {
    out[i] = digits[value & 0xF];
    value >>= 4;
  }
  return out;
}

} // namespace bmvae

#endif
