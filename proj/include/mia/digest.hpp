#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace mia {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::string_view data);
std::string to_hex(const Sha256& digest);
std::string sha256_hex(std::string_view data);

/// First eight bytes of the digest read big-endian.
std::uint64_t leading_u64(const Sha256& digest);

/// Per-work-item seed: leading_u64(sha256("master|doc_id|position|condition")).
/// Independent of scheduling, so concurrent runs reproduce serial ones.
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view doc_id,
                          std::uint64_t position, std::string_view condition);

}  // namespace mia
