#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace llmcodec {

/// Incremental 64-bit FNV-1a.
class Fnv1a64 {
public:
    static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
    static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

    void update(std::span<const unsigned char> bytes) {
        for (unsigned char b : bytes) {
            state_ ^= b;
            state_ *= kPrime;
        }
    }
    void update(std::string_view s) {
        update({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
    }
    template <typename T>
    void update_pod(const T& value) {
        update({reinterpret_cast<const unsigned char*>(&value), sizeof(T)});
    }
    template <typename T>
    void update_array(std::span<const T> values) {
        update({reinterpret_cast<const unsigned char*>(values.data()), values.size_bytes()});
    }

    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = kOffset;
};

std::string to_hex(std::uint64_t value);
std::uint64_t from_hex(std::string_view text);

}  // namespace llmcodec
