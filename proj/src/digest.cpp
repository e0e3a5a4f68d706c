#include "mia/digest.hpp"

#include <openssl/evp.h>

#include <stdexcept>

namespace mia {

Sha256 sha256(std::string_view data) {
  Sha256 out{};
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &length, EVP_sha256(), nullptr) != 1 ||
      length != out.size()) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  return out;
}

std::string to_hex(const Sha256& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto byte : digest) {
    out.push_back(kHex[byte >> 4]);
    out.push_back(kHex[byte & 0xF]);
  }
  return out;
}

std::string sha256_hex(std::string_view data) { return to_hex(sha256(data)); }

std::uint64_t leading_u64(const Sha256& digest) {
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) value = (value << 8) | digest[i];
  return value;
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view doc_id,
                          std::uint64_t position, std::string_view condition) {
  std::string descriptor = std::to_string(master_seed);
  descriptor += '|';
  descriptor += doc_id;
  descriptor += '|';
  descriptor += std::to_string(position);
  descriptor += '|';
  descriptor += condition;
  return leading_u64(sha256(descriptor));
}

}  // namespace mia
