#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "mvms/core/error.hpp"

namespace mvms::io {

template <class U>
void put_le(std::ostream& out, U v) {
    unsigned char b[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

inline void put_u8(std::ostream& out, std::uint8_t v) { put_le(out, v); }
inline void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
inline void put_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
inline void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
inline void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }

template <class U>
U get_le(std::istream& in, const char* what) {
    unsigned char b[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) throw FormatError(std::string("truncated input reading ") + what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
    return v;
}

inline std::uint8_t get_u8(std::istream& in, const char* what) { return get_le<std::uint8_t>(in, what); }
inline std::uint32_t get_u32(std::istream& in, const char* what) { return get_le<std::uint32_t>(in, what); }
inline std::uint64_t get_u64(std::istream& in, const char* what) { return get_le<std::uint64_t>(in, what); }
inline double get_f64(std::istream& in, const char* what) { return std::bit_cast<double>(get_le<std::uint64_t>(in, what)); }
inline float get_f32(std::istream& in, const char* what) { return std::bit_cast<float>(get_le<std::uint32_t>(in, what)); }

inline void expect_magic(std::istream& in, const char (&magic)[5], const char* what) {
    char buf[4];
    if (!in.read(buf, 4) || std::string(buf, 4) != std::string(magic, 4))
        throw FormatError(std::string(what) + ": bad magic (expected \"" + magic + "\")");
}

inline void expect_end(std::istream& in, const char* what) {
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError(std::string(what) + ": trailing bytes after payload");
}

} // namespace mvms::io
