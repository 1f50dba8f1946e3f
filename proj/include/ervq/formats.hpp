#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ervq/matrix.hpp"
#include "ervq/rvq.hpp"

namespace ervq {

/// Failure while writing output files (maps to CLI exit code 4).
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or unreadable input file (user error, CLI exit code 2).
class parse_error : public std::runtime_error {
public:
    explicit parse_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open file: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw parse_error("read failed: " + path.string());
    return bytes;
}

}  // namespace detail

/// Write a file atomically: the contents land under a temporary name in the
/// same directory and are renamed into place, so interrupted runs never
/// leave truncated artifacts.
inline void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw io_error("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw io_error("rename failed for: " + path.string());
    }
}

inline constexpr char kIndexStreamMagic[9] = "ERVQIDX1";
inline constexpr char kMatrixMagic[9] = "ERVQMAT1";

struct IndexStreamData {
    std::uint32_t stages = 0;         // M
    std::uint32_t codebook_size = 0;  // K
    std::uint32_t frames = 0;         // L
    IndexMatrix indices;              // LxM
};

/// Binary index stream: magic "ERVQIDX1", then M, K, L as little-endian
/// u32, then L*M little-endian u32 indices row-major.
inline void write_index_stream(const std::filesystem::path& path, const IndexMatrix& indices,
                               std::uint32_t codebook_size) {
    std::string bytes;
    bytes.reserve(20 + indices.values.size() * 4);
    bytes.append(kIndexStreamMagic, 8);
    detail::put_u32_le(bytes, static_cast<std::uint32_t>(indices.cols));
    detail::put_u32_le(bytes, codebook_size);
    detail::put_u32_le(bytes, static_cast<std::uint32_t>(indices.rows));
    for (std::uint32_t v : indices.values) detail::put_u32_le(bytes, v);
    atomic_write(path, bytes);
}

inline IndexStreamData read_index_stream(const std::filesystem::path& path) {
    std::string bytes = detail::read_file_bytes(path);
    if (bytes.size() < 20 || bytes.compare(0, 8, kIndexStreamMagic, 8) != 0) {
        throw parse_error("not an index stream (bad magic): " + path.string());
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    IndexStreamData out;
    out.stages = detail::get_u32_le(p + 8);
    out.codebook_size = detail::get_u32_le(p + 12);
    out.frames = detail::get_u32_le(p + 16);
    std::size_t expected = 20 + std::size_t(out.stages) * out.frames * 4;
    if (bytes.size() != expected) {
        throw parse_error("index stream truncated or oversized: " + path.string());
    }
    out.indices = IndexMatrix(out.frames, out.stages);
    for (std::size_t n = 0; n < out.indices.values.size(); ++n) {
        out.indices.values[n] = detail::get_u32_le(p + 20 + n * 4);
    }
    return out;
}

/// Float32 matrix file: magic "ERVQMAT1", rows and cols as little-endian
/// u32, then rows*cols little-endian IEEE float32 values row-major.
inline void write_matrix_f32(const std::filesystem::path& path, const Matrix& m) {
    std::string bytes;
    bytes.reserve(16 + m.values().size() * 4);
    bytes.append(kMatrixMagic, 8);
    detail::put_u32_le(bytes, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32_le(bytes, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.values()) {
        detail::put_u32_le(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    atomic_write(path, bytes);
}

inline Matrix read_matrix_f32(const std::filesystem::path& path) {
    std::string bytes = detail::read_file_bytes(path);
    if (bytes.size() < 16 || bytes.compare(0, 8, kMatrixMagic, 8) != 0) {
        throw parse_error("not a matrix file (bad magic): " + path.string());
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    std::uint32_t rows = detail::get_u32_le(p + 8);
    std::uint32_t cols = detail::get_u32_le(p + 12);
    std::size_t expected = 16 + std::size_t(rows) * cols * 4;
    if (bytes.size() != expected) {
        throw parse_error("matrix file truncated or oversized: " + path.string());
    }
    std::vector<double> values(std::size_t(rows) * cols);
    for (std::size_t n = 0; n < values.size(); ++n) {
        values[n] = static_cast<double>(std::bit_cast<float>(detail::get_u32_le(p + 16 + n * 4)));
    }
    return Matrix(rows, cols, std::move(values));
}

}  // namespace ervq
