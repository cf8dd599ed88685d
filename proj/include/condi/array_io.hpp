#ifndef CONDI_ARRAY_IO_HPP
#define CONDI_ARRAY_IO_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace condi {

// Array container ("CDAR"): 4-byte magic, version byte = 1, dtype byte
// (1 = float32 little-endian, 2 = uint8), ndim byte, ndim x u32-le dims,
// row-major payload. Arrays can also be concatenated inside a larger file
// (checkpoints do this), hence the stream-level API.

enum class Dtype : std::uint8_t { f32 = 1, u8 = 2 };

struct ArrayF32 {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
    std::size_t size() const { return data.size(); }
};

struct ArrayU8 {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
    std::size_t size() const { return data.size(); }
};

void write_array(std::ostream& out, const ArrayF32& a);
void write_array(std::ostream& out, const ArrayU8& a);

struct ArrayInfo {
    Dtype dtype;
    std::vector<std::uint32_t> dims;
};

// `context` names the source (a path, usually) in error messages.
// peek_info restores the stream position after reading the header.
ArrayInfo peek_info(std::istream& in, const std::string& context);
ArrayF32 read_array_f32(std::istream& in, const std::string& context);
ArrayU8 read_array_u8(std::istream& in, const std::string& context);

void save_array(const std::filesystem::path& path, const ArrayF32& a);
void save_array(const std::filesystem::path& path, const ArrayU8& a);
ArrayF32 load_array_f32(const std::filesystem::path& path);
ArrayU8 load_array_u8(const std::filesystem::path& path);

std::size_t element_count(const std::vector<std::uint32_t>& dims);

} // namespace condi

#endif
