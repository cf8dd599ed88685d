#ifndef CONDI_HASH_HPP
#define CONDI_HASH_HPP

#include <cstdint>
#include <filesystem>
#include <string>

namespace condi {

// FNV-1a, 64 bit. Used for content addressing of pipeline stages and for
// the dataset_hash column; not a cryptographic digest.
class Fnv64 {
  public:
    Fnv64& update(const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= bytes[i];
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }

    Fnv64& update(const std::string& s) { return update(s.data(), s.size()); }

    std::uint64_t value() const { return state_; }

    std::string hex() const;

  private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hash_file(const std::filesystem::path& path);
std::string hash_string(const std::string& s);

} // namespace condi

#endif
