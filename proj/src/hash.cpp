#include "inkdiff/hash.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include "inkdiff/errors.hpp"

namespace inkdiff {

std::string hash_hex(uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

uint64_t parse_hash_hex(const std::string& s) {
    if (s.size() != 16) throw DataError("bad hash string: " + s);
    uint64_t h = 0;
    for (char c : s) {
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else throw DataError("bad hash string: " + s);
        h = (h << 4) | static_cast<uint64_t>(d);
    }
    return h;
}

uint64_t hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file for hashing: " + path);
    uint64_t h = 0xCBF29CE484222325ull;
    std::vector<char> buf(1 << 16);
    while (f) {
        f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        std::streamsize got = f.gcount();
        if (got > 0) h = fnv1a64(buf.data(), static_cast<size_t>(got), h);
    }
    return h;
}

} // namespace inkdiff
