#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dft {

/// FNV-1a 64-bit. Used for content addressing (dataset split assignment,
/// report provenance), not security.
class Hasher {
 public:
  Hasher& update(const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  Hasher& update(std::span<const int> ids) {
    for (int id : ids) {
      std::uint32_t v = static_cast<std::uint32_t>(id);
      unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
      update(b, 4);
    }
    return *this;
  }

  Hasher& update(const std::string& s) { return update(s.data(), s.size()); }

  Hasher& update_u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    return update(b, 8);
  }

  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t v);

/// Hash of a whole file's bytes. Throws Error(Io) when unreadable.
std::uint64_t hash_file(const std::string& path);

/// Hash of doubles by bit pattern (exact, not value-rounded).
std::uint64_t hash_doubles(std::span<const double> xs);

}  // namespace dft
