#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "rfm/errors.hpp"

// Little-endian binary readers/writers shared by the checkpoint, dataset,
// and triplet stores. All multi-byte values are explicitly serialized
// byte-by-byte so files are identical across hosts.
namespace rfm::binio {

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& os, float f) {
    put_u32(os, std::bit_cast<uint32_t>(f));
}

inline void put_bytes(std::ostream& os, const void* data, size_t n) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline uint32_t get_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("truncated file while reading " + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& is, const std::string& what) {
    return std::bit_cast<float>(get_u32(is, what));
}

inline std::string get_string(std::istream& is, size_t n, const std::string& what) {
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw FormatError("truncated file while reading " + what);
    return s;
}

inline void expect_magic(std::istream& is, const char (&magic)[5], const std::string& path) {
    char seen[4];
    is.read(seen, 4);
    if (!is) throw FormatError(path + ": file too short for magic bytes");
    if (std::memcmp(seen, magic, 4) != 0) {
        char hex[16];
        std::string got;
        for (int i = 0; i < 4; ++i) {
            std::snprintf(hex, sizeof(hex), "%02x", static_cast<unsigned char>(seen[i]));
            got += hex;
        }
        throw FormatError(path + ": bad magic bytes 0x" + got + ", expected \"" +
                          std::string(magic, 4) + "\"");
    }
}

inline std::ofstream open_write(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    return os;
}

inline std::ifstream open_read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return is;
}

}  // namespace rfm::binio
