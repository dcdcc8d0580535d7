#pragma once

// Little-endian binary containers used by checkpoints and index files.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adenorm/error.hpp"

namespace adenorm::io {

class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        char buf[4];
        for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out_.write(buf, 4);
    }

    void u64(std::uint64_t v) {
        char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out_.write(buf, 8);
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void str(std::string_view s) {
        u64(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    /// Raw bytes, no length prefix (used for magic headers).
    void raw(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

    void f32s(std::span<const float> xs) {
        for (float x : xs) f32(x);
    }

    void f64s(std::span<const double> xs) {
        for (double x : xs) f64(x);
    }

private:
    std::ostream& out_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::istream& in) : in_(in) {}

    std::uint8_t u8() {
        char c;
        read(&c, 1);
        return static_cast<std::uint8_t>(c);
    }

    std::uint32_t u32() {
        unsigned char buf[4];
        read(reinterpret_cast<char*>(buf), 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        unsigned char buf[8];
        read(reinterpret_cast<char*>(buf), 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::string str(std::size_t max_len = std::size_t{1} << 30) {
        std::uint64_t n = u64();
        if (n > max_len) throw ParseError("string length out of range");
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }

    void expect(std::string_view magic) {
        std::string got(magic.size(), '\0');
        read(got.data(), magic.size());
        if (got != magic) throw ParseError("bad header: expected '" + std::string(magic) + "'");
    }

    void f32s(std::span<float> xs) {
        for (float& x : xs) x = f32();
    }

    void f64s(std::span<double> xs) {
        for (double& x : xs) x = f64();
    }

private:
    void read(char* dst, std::size_t n) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw ParseError("unexpected end of file");
    }

    std::istream& in_;
};

}  // namespace adenorm::io
