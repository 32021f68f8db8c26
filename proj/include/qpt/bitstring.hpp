#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qpt {

/// A bit string; each element is 0 or 1. Kept as bytes (not std::vector<bool>)
/// so spans and memcmp-style operations work on the hot paths.
using Bits = std::vector<std::uint8_t>;
using BitSpan = std::span<const std::uint8_t>;

/// Parses "0101..." into a bit vector. Throws std::invalid_argument on any
/// character other than '0' or '1'. The empty string is the empty bit string.
inline Bits parse_bits(std::string_view text) {
    Bits out;
    out.reserve(text.size());
    for (char c : text) {
        if (c == '0') {
            out.push_back(0);
        } else if (c == '1') {
            out.push_back(1);
        } else {
            throw std::invalid_argument("bit string may contain only '0' and '1', got '" +
                                        std::string(1, c) + "'");
        }
    }
    return out;
}

inline std::string format_bits(BitSpan bits) {
    std::string out;
    out.reserve(bits.size());
    for (auto b : bits) out.push_back(b ? '1' : '0');
    return out;
}

/// Packs a bit string of length <= 56 into a single word (length in the top
/// byte). Used as a deterministic stream-derivation key component.
inline std::uint64_t pack_bits(BitSpan bits) {
    if (bits.size() > 56) throw std::invalid_argument("pack_bits: at most 56 bits");
    std::uint64_t v = 0;
    for (auto b : bits) v = (v << 1) | (b & 1u);
    return v | (static_cast<std::uint64_t>(bits.size()) << 56);
}

/// FNV-1a hash of the '0'/'1' rendering; used for trace-file headers so a
/// reader can tell which input produced a file without storing the input.
inline std::uint64_t hash_bits(BitSpan bits) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (auto b : bits) {
        h ^= static_cast<std::uint64_t>(b ? '1' : '0');
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// All bit strings of the given length in numeric order (MSB = position 0).
inline std::vector<Bits> all_bitstrings(int len) {
    if (len < 0 || len > 26) throw std::invalid_argument("all_bitstrings: length out of range");
    std::vector<Bits> out;
    out.reserve(std::size_t{1} << len);
    for (std::uint64_t v = 0; v < (std::uint64_t{1} << len); ++v) {
        Bits s(static_cast<std::size_t>(len));
        for (int i = 0; i < len; ++i) s[static_cast<std::size_t>(i)] = (v >> (len - 1 - i)) & 1u;
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace qpt
