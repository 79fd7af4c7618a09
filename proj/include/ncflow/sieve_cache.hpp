#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "moebius.hpp"

namespace ncflow {

/// On-disk sieve cache:
///   bytes 0..3   "NCF1"
///   bytes 4..11  n_max, unsigned little-endian
///   then ceil(n_max / 4) bytes of 2-bit codes, four per byte, n = 1 in the low bits
///   of the first byte; code 0 -> mu = 0, 1 -> mu = +1, 2 -> mu = -1 (3 is invalid).
namespace sieve_cache {

inline constexpr std::array<char, 4> kMagic = {'N', 'C', 'F', '1'};

inline std::uint8_t encode(int mu) { return mu == 0 ? 0 : (mu > 0 ? 1 : 2); }

inline std::vector<std::uint8_t> serialize(const MoebiusTable& table) {
    const std::uint64_t n = table.n_max();
    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
    const std::size_t header = out.size();
    out.resize(header + (n + 3) / 4, 0);
    const auto mu = table.values();
    for (std::uint64_t k = 1; k <= n; ++k) {
        const std::uint64_t slot = k - 1;
        out[header + slot / 4] |= static_cast<std::uint8_t>(encode(mu[k]) << (2 * (slot % 4)));
    }
    return out;
}

inline MoebiusTable deserialize(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
        throw std::runtime_error("sieve cache: bad magic");
    std::uint64_t n = 0;
    for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(bytes[4 + i]) << (8 * i);
    if (n == 0 || bytes.size() != 12 + (n + 3) / 4) throw std::runtime_error("sieve cache: truncated payload");
    std::vector<std::int8_t> mu(n + 1, 0);
    for (std::uint64_t k = 1; k <= n; ++k) {
        const std::uint64_t slot = k - 1;
        const int code = (bytes[12 + slot / 4] >> (2 * (slot % 4))) & 3;
        if (code == 3) throw std::runtime_error("sieve cache: invalid code at n=" + std::to_string(k));
        mu[k] = static_cast<std::int8_t>(code == 0 ? 0 : (code == 1 ? 1 : -1));
    }
    return MoebiusTable::from_values(std::move(mu));
}

inline std::filesystem::path path_for(const std::filesystem::path& dir, std::uint64_t n_max) {
    return dir / ("mu_" + std::to_string(n_max) + ".ncf");
}

inline std::optional<MoebiusTable> load(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) return std::nullopt;
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

inline void store(const std::filesystem::path& file, const MoebiusTable& table) {
    std::filesystem::create_directories(file.parent_path());
    const auto tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        const auto bytes = serialize(table);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("sieve cache: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, file);
}

}  // namespace sieve_cache

/// Builds the table, going through $NCFLOW_CACHE_DIR when it is set.
inline MoebiusTable load_or_build_table(std::uint64_t n_max, std::uint64_t hard_cap = kDefaultSieveCap) {
    const char* dir = std::getenv("NCFLOW_CACHE_DIR");
    if (!dir || !*dir) return build_table(n_max, hard_cap);
    const auto file = sieve_cache::path_for(dir, n_max);
    if (auto cached = sieve_cache::load(file)) {
        if (cached->n_max() == n_max) return std::move(*cached);
    }
    auto table = build_table(n_max, hard_cap);
    sieve_cache::store(file, table);
    return table;
}

}  // namespace ncflow
