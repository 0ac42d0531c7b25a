#pragma once

// Little-endian primitives shared by the checkpoint and dataset containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "spacetime/error.hpp"

namespace spacetime::io {

template <class T>
T to_little(T value) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        std::memcpy(&value, bytes, sizeof(T));
    }
    return value;
}

class Writer {
public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void u32(std::uint32_t v) {
        v = to_little(v);
        bytes(&v, sizeof v);
    }
    void u64(std::uint64_t v) {
        v = to_little(v);
        bytes(&v, sizeof v);
    }
    void f64(double v) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        u64(bits);
    }
    void f64s(const double* p, std::size_t n) {
        if constexpr (std::endian::native == std::endian::little) {
            bytes(p, n * sizeof(double));
        } else {
            for (std::size_t i = 0; i < n; ++i) f64(p[i]);
        }
    }
    void str(std::string_view s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    const std::string& buffer() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view buf) : buf_(buf) {}

    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, sizeof v);
        return to_little(v);
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, sizeof v);
        return to_little(v);
    }
    double f64() { return std::bit_cast<double>(u64()); }
    void f64s(double* p, std::size_t n) {
        if (n > remaining() / sizeof(double)) throw FormatError("truncated payload");
        if constexpr (std::endian::native == std::endian::little) {
            bytes(p, n * sizeof(double));
        } else {
            for (std::size_t i = 0; i < n; ++i) p[i] = f64();
        }
    }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s(buf_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (n > remaining()) throw FormatError("truncated payload");
    }
    std::string_view buf_;
    std::size_t pos_ = 0;
};

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("failed reading " + path.string());
    return contents;
}

}  // namespace spacetime::io
