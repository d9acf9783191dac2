// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

// Binary containers. All integers and floats are little-endian.
//
// LB2M (dense matrix):
//   "LB2M" | u16 version=1 | u64 d_out | u64 d_in | u8 dtype (0=f32, 1=f64)
//   | d_out*d_in values, row-major | u32 crc32 of all preceding bytes
//
// LB2C (compressed layer):
//   "LB2C" | u16 version=1 | u64 d_out | u64 d_in | u64 rank | u8 method
//   | u8 path_count | u64 seed | u32 iterations
//   | per path: f32 h[d_out] | f32 l[rank] | f32 g[d_in]
//               | u64 nbytes | u64 words (U_b, d_out x rank)
//               | u64 nbytes | u64 words (V_b, d_in x rank)
//   | u32 crc32 of all preceding bytes
//
// Scales are computed in double precision and rounded to f32 on write.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <zlib.h>

#include "lb2/core.hpp"
#include "lb2/quantize.hpp"

namespace lb2 {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint16_t kContainerVersion = 1;
inline constexpr std::array<char, 4> kMatrixMagic{'L', 'B', '2', 'M'};
inline constexpr std::array<char, 4> kLayerMagic{'L', 'B', '2', 'C'};

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in chunks.
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1U << 30));
        crc = crc32(crc, data, chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

class ByteWriter {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }

    template <class T>
    void uint(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i)
            buf_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
    }

    void f32(double v) { uint(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

    void magic(const std::array<char, 4>& m) { raw(m.data(), m.size()); }

    Bytes finish() {
        uint(crc32_of(buf_.data(), buf_.size()));
        return std::move(buf_);
    }

    std::size_t size() const { return buf_.size(); }
    void reserve(std::size_t n) { buf_.reserve(n); }

private:
    Bytes buf_;
};

/// Bounds-checked reader over a CRC-verified buffer.
class ByteReader {
public:
    ByteReader(const Bytes& bytes, const std::array<char, 4>& magic, const char* what)
        : data_(bytes.data()), what_(what) {
        require(bytes.size() >= 4 + 2 + 4, Errc::corrupt, std::string(what) + ": truncated file");
        end_ = bytes.size() - 4;
        std::uint32_t stored = 0;
        for (int i = 0; i < 4; ++i)
            stored |= static_cast<std::uint32_t>(bytes[end_ + static_cast<std::size_t>(i)]) << (8 * i);
        require(std::memcmp(bytes.data(), magic.data(), 4) == 0, Errc::corrupt,
                std::string(what) + ": bad magic");
        require(crc32_of(bytes.data(), end_) == stored, Errc::corrupt,
                std::string(what) + ": checksum mismatch");
        pos_ = 4;
        const auto version = uint<std::uint16_t>();
        require(version == kContainerVersion, Errc::corrupt,
                std::string(what) + ": unsupported version " + std::to_string(version));
    }

    template <class T>
    T uint() {
        need(sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    double f32() { return static_cast<double>(std::bit_cast<float>(uint<std::uint32_t>())); }
    double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

    std::size_t remaining() const { return end_ - pos_; }

    void need(std::size_t n) const {
        require(n <= remaining(), Errc::corrupt, std::string(what_) + ": truncated payload");
    }

    void expect_end() const {
        require(pos_ == end_, Errc::corrupt, std::string(what_) + ": trailing bytes");
    }

private:
    const std::uint8_t* data_;
    std::size_t pos_ = 0;
    std::size_t end_ = 0;
    const char* what_;
};

// ---------------------------------------------------------------------------

inline Bytes serialize_matrix(const Matrix& m, DType dtype = DType::f32) {
    ByteWriter w;
    const std::size_t width = dtype == DType::f32 ? 4 : 8;
    w.reserve(4 + 2 + 8 + 8 + 1 + static_cast<std::size_t>(m.size()) * width + 4);
    w.magic(kMatrixMagic);
    w.uint(kContainerVersion);
    w.uint(static_cast<std::uint64_t>(m.rows()));
    w.uint(static_cast<std::uint64_t>(m.cols()));
    w.uint(static_cast<std::uint8_t>(dtype));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) dtype == DType::f32 ? w.f32(m(i, j)) : w.f64(m(i, j));
    return w.finish();
}

struct LoadedMatrix {
    Matrix values;
    DType dtype = DType::f32;
};

inline LoadedMatrix deserialize_matrix(const Bytes& bytes) {
    ByteReader r(bytes, kMatrixMagic, "LB2M");
    const auto rows = r.uint<std::uint64_t>();
    const auto cols = r.uint<std::uint64_t>();
    const auto tag = r.uint<std::uint8_t>();
    require(tag <= 1, Errc::corrupt, "LB2M: unknown dtype tag");
    const auto dtype = static_cast<DType>(tag);
    const std::size_t width = dtype == DType::f32 ? 4 : 8;
    require(rows >= 1 && cols >= 1 && cols <= r.remaining() / width / rows &&
                rows * cols * width == r.remaining(),
            Errc::corrupt, "LB2M: payload length does not match header");
    LoadedMatrix out{Matrix(static_cast<Index>(rows), static_cast<Index>(cols)), dtype};
    for (Index i = 0; i < out.values.rows(); ++i)
        for (Index j = 0; j < out.values.cols(); ++j)
            out.values(i, j) = dtype == DType::f32 ? r.f32() : r.f64();
    r.expect_end();
    return out;
}

inline Bytes serialize_layer(const CompressedLayer& layer) {
    layer.validate();
    ByteWriter w;
    w.magic(kLayerMagic);
    w.uint(kContainerVersion);
    w.uint(static_cast<std::uint64_t>(layer.d_out));
    w.uint(static_cast<std::uint64_t>(layer.d_in));
    w.uint(static_cast<std::uint64_t>(layer.rank));
    w.uint(static_cast<std::uint8_t>(layer.method));
    w.uint(static_cast<std::uint8_t>(layer.paths.size()));
    w.uint(layer.seed);
    w.uint(layer.iterations);
    auto put_vec = [&](const Vector& v) {
        for (Index i = 0; i < v.size(); ++i) w.f32(v(i));
    };
    auto put_bits = [&](const PackedBinaryFactor& f) {
        w.uint(static_cast<std::uint64_t>(f.words().size() * 8));
        for (std::uint64_t word : f.words()) w.uint(word);
    };
    for (const auto& p : layer.paths) {
        put_vec(p.scales.h_scale);
        put_vec(p.scales.l_scale);
        put_vec(p.scales.g_scale);
        put_bits(p.u_binary);
        put_bits(p.v_binary);
    }
    return w.finish();
}

inline CompressedLayer deserialize_layer(const Bytes& bytes) {
    ByteReader r(bytes, kLayerMagic, "LB2C");
    CompressedLayer layer;
    const auto d_out = r.uint<std::uint64_t>();
    const auto d_in = r.uint<std::uint64_t>();
    const auto rank = r.uint<std::uint64_t>();
    const auto method = r.uint<std::uint8_t>();
    const auto npaths = r.uint<std::uint8_t>();
    layer.seed = r.uint<std::uint64_t>();
    layer.iterations = r.uint<std::uint32_t>();
    require(method <= 2, Errc::corrupt, "LB2C: unknown method tag");
    require(npaths == 1 || npaths == 2, Errc::corrupt, "LB2C: path count must be 1 or 2");
    // Each dimension costs at least 4 payload bytes, which bounds the header values.
    const std::size_t cap = r.remaining() / 4;
    require(d_out >= 1 && d_in >= 1 && rank >= 1 && d_out <= cap && d_in <= cap && rank <= cap,
            Errc::corrupt, "LB2C: implausible dimensions");
    layer.d_out = static_cast<Index>(d_out);
    layer.d_in = static_cast<Index>(d_in);
    layer.rank = static_cast<Index>(rank);
    layer.method = static_cast<Method>(method);

    auto get_vec = [&](Index n) {
        r.need(static_cast<std::size_t>(n) * 4);
        Vector v(n);
        for (Index i = 0; i < n; ++i) v(i) = r.f32();
        return v;
    };
    auto get_bits = [&](Index rows) {
        const auto nbytes = r.uint<std::uint64_t>();
        const auto expected = static_cast<std::uint64_t>(rows * PackedBinaryFactor::words_for(layer.rank)) * 8;
        require(nbytes == expected, Errc::corrupt, "LB2C: packed factor length mismatch");
        r.need(nbytes);
        std::vector<std::uint64_t> words(nbytes / 8);
        for (auto& word : words) word = r.uint<std::uint64_t>();
        return PackedBinaryFactor::from_words(rows, layer.rank, std::move(words));
    };
    for (unsigned k = 0; k < npaths; ++k) {
        QuantizedPath p;
        p.scales.h_scale = get_vec(layer.d_out);
        p.scales.l_scale = get_vec(layer.rank);
        p.scales.g_scale = get_vec(layer.d_in);
        p.u_binary = get_bits(layer.d_out);
        p.v_binary = get_bits(layer.d_in);
        layer.paths.push_back(std::move(p));
    }
    r.expect_end();
    layer.validate();
    return layer;
}

// ---------------------------------------------------------------------------

inline Bytes read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), Errc::io, "cannot open '" + path + "' for reading");
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    require(!in.bad(), Errc::io, "error reading '" + path + "'");
    return data;
}

inline void write_file(const std::string& path, const Bytes& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), Errc::io, "cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    out.flush();
    require(static_cast<bool>(out), Errc::io, "error writing '" + path + "'");
}

inline Matrix load_matrix(const std::string& path) { return deserialize_matrix(read_file(path)).values; }

inline void save_matrix(const std::string& path, const Matrix& m, DType dtype = DType::f32) {
    write_file(path, serialize_matrix(m, dtype));
}

inline CompressedLayer load_layer(const std::string& path) {
    return deserialize_layer(read_file(path));
}

inline void save_layer(const std::string& path, const CompressedLayer& layer) {
    write_file(path, serialize_layer(layer));
}

}  // namespace lb2
