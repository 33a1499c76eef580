#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace ipath {

// 64-bit FNV-1a, used for content hashes in manifests.
class Fnv1a {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hash_hex(std::string_view bytes);
std::string hash_file(const std::filesystem::path& path);

}  // namespace ipath
