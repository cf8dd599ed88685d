#include "condi/array_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "condi/common.hpp"

namespace condi {

namespace {

constexpr char kMagic[4] = {'C', 'D', 'A', 'R'};
constexpr std::uint8_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "payload I/O assumes a little-endian host");

void write_u32le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(std::istream& in, const std::string& context) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) {
        throw DataError("malformed header (truncated dims) in " + context);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

struct Header {
    Dtype dtype;
    std::vector<std::uint32_t> dims;
};

void write_header(std::ostream& out, Dtype dtype, const std::vector<std::uint32_t>& dims) {
    if (dims.empty() || dims.size() > 255) {
        throw DataError("array rank must be in [1, 255]");
    }
    out.write(kMagic, 4);
    out.put(static_cast<char>(kVersion));
    out.put(static_cast<char>(dtype));
    out.put(static_cast<char>(dims.size()));
    for (std::uint32_t d : dims) {
        write_u32le(out, d);
    }
}

Header read_header(std::istream& in, const std::string& context) {
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("malformed header (bad magic) in " + context);
    }
    const int version = in.get();
    if (version != kVersion) {
        throw DataError("malformed header (unsupported version " + std::to_string(version) +
                        ") in " + context);
    }
    const int dtype = in.get();
    if (dtype != static_cast<int>(Dtype::f32) && dtype != static_cast<int>(Dtype::u8)) {
        throw DataError("malformed header (unknown dtype " + std::to_string(dtype) + ") in " +
                        context);
    }
    const int ndim = in.get();
    if (ndim <= 0) {
        throw DataError("malformed header (bad rank) in " + context);
    }
    Header h;
    h.dtype = static_cast<Dtype>(dtype);
    h.dims.resize(static_cast<std::size_t>(ndim));
    for (auto& d : h.dims) {
        d = read_u32le(in, context);
    }
    return h;
}

template <typename T>
void read_payload(std::istream& in, std::vector<T>& out, std::size_t count,
                  const std::string& context) {
    out.resize(count);
    const auto bytes = static_cast<std::streamsize>(count * sizeof(T));
    in.read(reinterpret_cast<char*>(out.data()), bytes);
    if (in.gcount() != bytes) {
        throw DataError("truncated payload in " + context);
    }
}

} // namespace

std::size_t element_count(const std::vector<std::uint32_t>& dims) {
    std::size_t n = 1;
    for (std::uint32_t d : dims) {
        if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d) {
            throw DataError("array dimensions overflow");
        }
        n *= d;
    }
    return n;
}

void write_array(std::ostream& out, const ArrayF32& a) {
    if (a.data.size() != element_count(a.dims)) {
        throw DataError("array data does not match dims");
    }
    write_header(out, Dtype::f32, a.dims);
    out.write(reinterpret_cast<const char*>(a.data.data()),
              static_cast<std::streamsize>(a.data.size() * sizeof(float)));
}

void write_array(std::ostream& out, const ArrayU8& a) {
    if (a.data.size() != element_count(a.dims)) {
        throw DataError("array data does not match dims");
    }
    write_header(out, Dtype::u8, a.dims);
    out.write(reinterpret_cast<const char*>(a.data.data()),
              static_cast<std::streamsize>(a.data.size()));
}

ArrayInfo peek_info(std::istream& in, const std::string& context) {
    const auto pos = in.tellg();
    Header h = read_header(in, context);
    in.seekg(pos);
    return ArrayInfo{h.dtype, std::move(h.dims)};
}

ArrayF32 read_array_f32(std::istream& in, const std::string& context) {
    Header h = read_header(in, context);
    if (h.dtype != Dtype::f32) {
        throw DataError("expected float32 array in " + context);
    }
    ArrayF32 a;
    a.dims = std::move(h.dims);
    read_payload(in, a.data, element_count(a.dims), context);
    return a;
}

ArrayU8 read_array_u8(std::istream& in, const std::string& context) {
    Header h = read_header(in, context);
    if (h.dtype != Dtype::u8) {
        throw DataError("expected uint8 array in " + context);
    }
    ArrayU8 a;
    a.dims = std::move(h.dims);
    read_payload(in, a.data, element_count(a.dims), context);
    return a;
}

namespace {

template <typename A> void save_impl(const std::filesystem::path& path, const A& a) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path.string());
    }
    write_array(out, a);
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

template <typename A, typename Fn>
A load_impl(const std::filesystem::path& path, Fn read_fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open: " + path.string());
    }
    return read_fn(in, path.string());
}

} // namespace

void save_array(const std::filesystem::path& path, const ArrayF32& a) { save_impl(path, a); }
void save_array(const std::filesystem::path& path, const ArrayU8& a) { save_impl(path, a); }

ArrayF32 load_array_f32(const std::filesystem::path& path) {
    return load_impl<ArrayF32>(path, read_array_f32);
}

ArrayU8 load_array_u8(const std::filesystem::path& path) {
    return load_impl<ArrayU8>(path, read_array_u8);
}

} // namespace condi
