#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fabricpool::detail {

inline void append_field(std::string& out, std::uint64_t v, bool hex = false) {
    char buf[20];
    auto [end, ec] = hex ? std::to_chars(buf, buf + sizeof buf, v, 16)
                         : std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    if (hex) out += "0x";
    out.append(buf, end);
}

inline bool parse_field(std::string_view s, std::uint64_t& out) {
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        s.remove_prefix(2);
        base = 16;
    }
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out, base);
    return ec == std::errc{} && p == s.data() + s.size();
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

// Visit lines of a blob without copying; returns false from the visitor to
// stop early.
template <typename F>
inline void for_each_line(std::string_view text, F&& visit) {
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        ++line_no;
        if (!visit(line_no, text.substr(pos, eol - pos))) return;
        pos = eol + 1;
    }
}

}  // namespace fabricpool::detail
