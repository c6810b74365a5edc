#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace fetchplan {

/// Entity names are lowercase snake_case tokens ("dining_table").
using EntityName = std::string;

/// Normalize a raw name to lowercase snake_case: trims surrounding
/// whitespace and punctuation, lowercases, and collapses internal
/// whitespace/hyphen runs into single underscores.
inline EntityName normalize_name(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_sep = false;
    for (char c : raw) {
        unsigned char u = static_cast<unsigned char>(c);
        if (std::isalnum(u) || c == '_') {
            if (pending_sep && !out.empty()) out.push_back('_');
            pending_sep = false;
            out.push_back(static_cast<char>(std::tolower(u)));
        } else if (std::isspace(u) || c == '-') {
            pending_sep = true;
        }
        // other punctuation is dropped
    }
    return out;
}

inline std::string join(const std::vector<std::string>& items, std::string_view sep = ", ") {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) out += sep;
        out += items[i];
    }
    return out;
}

inline bool contains(const std::vector<std::string>& items, std::string_view name) {
    for (const auto& it : items)
        if (it == name) return true;
    return false;
}

} // namespace fetchplan
