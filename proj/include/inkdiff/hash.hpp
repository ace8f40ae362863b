#pragma once

#include <cstdint>
#include <string>

namespace inkdiff {

// FNV-1a 64-bit; used for dataset file hashes and checkpoint content hashes
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

std::string hash_hex(uint64_t h);
uint64_t parse_hash_hex(const std::string& s); // throws DataError on junk
uint64_t hash_file(const std::string& path);   // throws DataError if unreadable

} // namespace inkdiff
