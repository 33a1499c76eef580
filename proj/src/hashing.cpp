#include "ipath/hashing.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "ipath/errors.hpp"

namespace ipath {

std::string Fnv1a::hex() const {
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(state_));
  return std::string(buf.data());
}

std::string hash_hex(std::string_view bytes) {
  Fnv1a h;
  h.update(bytes);
  return h.hex();
}

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open " + path.string() + " for hashing");
  Fnv1a h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return h.hex();
}

}  // namespace ipath
