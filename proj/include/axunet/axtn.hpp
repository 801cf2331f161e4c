#pragma once

// AXTN tensor container.
//
// Layout, bit-exact:
//   bytes 0..3   magic "AXTN" (41 58 54 4E)
//   byte  4      version, 0x01
//   byte  5      dtype, 0x01 = f32, 0x02 = f64
//   byte  6      ndim
//   then         ndim x u32 little-endian extents
//   then         row-major little-endian payload (last index fastest)

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "axunet/errors.hpp"
#include "axunet/tensor.hpp"

namespace axunet::axtn {

static_assert(std::endian::native == std::endian::little,
              "AXTN I/O assumes a little-endian host");

inline constexpr std::uint8_t kVersion = 0x01;

template <typename T>
constexpr std::uint8_t dtype_byte() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? 0x01 : 0x02;
}

struct Header {
    std::uint8_t dtype = 0;
    Shape shape;
};

template <typename T>
void save(const std::filesystem::path& path, const Shape& shape, std::span<const T> payload) {
    if (static_cast<std::int64_t>(payload.size()) != numel(shape))
        throw DataError("axtn save: payload size does not match shape " + shape_str(shape));
    if (shape.size() > 255)
        throw DataError("axtn save: more than 255 dimensions");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("axtn save: cannot open " + path.string());
    const char magic[4] = {'A', 'X', 'T', 'N'};
    out.write(magic, 4);
    const std::uint8_t meta[3] = {kVersion, dtype_byte<T>(), static_cast<std::uint8_t>(shape.size())};
    out.write(reinterpret_cast<const char*>(meta), 3);
    for (const auto d : shape) {
        if (d < 0 || d > 0xffffffffll)
            throw DataError("axtn save: extent out of u32 range in " + shape_str(shape));
        const std::uint32_t e = static_cast<std::uint32_t>(d);
        out.write(reinterpret_cast<const char*>(&e), 4);
    }
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(T)));
    if (!out) throw DataError("axtn save: short write to " + path.string());
}

template <typename T>
void save(const std::filesystem::path& path, const Tensor<T>& t) {
    save<T>(path, t.shape(), t.data());
}

inline Header read_header(std::ifstream& in, const std::filesystem::path& path) {
    char magic[4] = {};
    std::uint8_t meta[3] = {};
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(meta), 3);
    if (!in || std::memcmp(magic, "AXTN", 4) != 0)
        throw DataError("axtn load: bad magic in " + path.string());
    if (meta[0] != kVersion)
        throw DataError("axtn load: unsupported version " + std::to_string(meta[0]) + " in " + path.string());
    if (meta[1] != 0x01 && meta[1] != 0x02)
        throw DataError("axtn load: unknown dtype byte in " + path.string());
    Header h;
    h.dtype = meta[1];
    h.shape.resize(meta[2]);
    for (auto& d : h.shape) {
        std::uint32_t e = 0;
        in.read(reinterpret_cast<char*>(&e), 4);
        d = e;
    }
    if (!in) throw DataError("axtn load: truncated header in " + path.string());
    return h;
}

inline Header peek(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("axtn load: cannot open " + path.string());
    return read_header(in, path);
}

template <typename T>
Tensor<T> load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("axtn load: cannot open " + path.string());
    const Header h = read_header(in, path);
    if (h.dtype != dtype_byte<T>())
        throw DataError("axtn load: dtype mismatch in " + path.string() + " (file " +
                        std::to_string(h.dtype) + ", requested " + std::to_string(dtype_byte<T>()) + ")");
    std::vector<T> payload(static_cast<std::size_t>(numel(h.shape)));
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(T)));
    if (!in) throw DataError("axtn load: truncated payload in " + path.string());
    in.peek();
    if (!in.eof()) throw DataError("axtn load: trailing bytes in " + path.string());
    return Tensor<T>::from_data(h.shape, std::move(payload));
}

}  // namespace axunet::axtn
