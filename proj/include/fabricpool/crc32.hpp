#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace fabricpool {

namespace detail {

inline constexpr std::array<std::uint32_t, 256> kCrc32Table = [] {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k)
            c = (c & 1u) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
        table[i] = c;
    }
    return table;
}();

}  // namespace detail

// CRC-32, reflected polynomial 0x04C11DB7 (table constant 0xEDB88320),
// init and final xor 0xFFFFFFFF. Check value: crc32("123456789") == 0xCBF43926.
inline std::uint32_t crc32(std::span<const std::uint8_t> data) {
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::uint8_t b : data)
        c = detail::kCrc32Table[(c ^ b) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

}  // namespace fabricpool
