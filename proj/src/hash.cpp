#include "condi/hash.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include "condi/common.hpp"

namespace condi {

std::string Fnv64::hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
    return std::string(buf);
}

std::string hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open file for hashing: " + path.string());
    }
    Fnv64 h;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

std::string hash_string(const std::string& s) {
    Fnv64 h;
    h.update(s);
    return h.hex();
}

} // namespace condi
