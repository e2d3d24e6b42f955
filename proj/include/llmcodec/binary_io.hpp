#pragma once

// Little-endian primitives shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "llmcodec/error.hpp"

namespace llmcodec::bin {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    void str(std::string_view s) { bytes(s.data(), s.size()); }
    template <typename T>
    void put(T v) { bytes(&v, sizeof(T)); }

    const std::string& buffer() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    bool at_end() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

    void need(std::size_t n) const {
        if (remaining() < n) throw Error(ErrorCode::TruncatedFile, "unexpected end of file");
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

private:
    std::string data_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& data);

}  // namespace llmcodec::bin
