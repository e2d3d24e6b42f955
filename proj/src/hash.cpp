#include "llmcodec/hash.hpp"

#include <cstdio>

#include "llmcodec/error.hpp"

namespace llmcodec {

std::string to_hex(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::uint64_t from_hex(std::string_view text) {
    if (text.empty() || text.size() > 16) throw Error(ErrorCode::ParseError, "bad hex digest");
    std::uint64_t v = 0;
    for (char c : text) {
        v <<= 4;
        if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
        else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
        else if (c >= 'A' && c <= 'F') v |= static_cast<std::uint64_t>(c - 'A' + 10);
        else throw Error(ErrorCode::ParseError, "bad hex digest", std::string(text));
    }
    return v;
}

}  // namespace llmcodec
