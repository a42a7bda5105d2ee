#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "teamwork/common.hpp"
#include "teamwork/tensor.hpp"

namespace teamwork {

// "TNSR" container: 8-byte magic, little-endian u32 dtype tag (0 = f64,
// 1 = f32), u32 ndim, ndim x u64 dims, then raw little-endian data.
inline constexpr std::array<unsigned char, 8> kTnsrMagic = {'T', 'N', 'S', 'R', 0, 0, 0, 1};

enum class Dtype : std::uint32_t { F64 = 0, F32 = 1 };

template <typename T>
constexpr Dtype dtype_of() {
    if constexpr (std::is_same_v<T, double>)
        return Dtype::F64;
    else
        return Dtype::F32;
}

inline std::size_t dtype_size(Dtype d) { return d == Dtype::F64 ? 8 : 4; }

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
}
inline std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError("tnsr: truncated header");
    return v;
}
inline std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 8)) throw IoError("tnsr: truncated header");
    return v;
}

}  // namespace detail

struct TnsrRecord {
    Dtype dtype = Dtype::F64;
    std::vector<std::uint64_t> dims;
    std::vector<unsigned char> raw;

    std::size_t elem_count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= static_cast<std::size_t>(d);
        return n;
    }

    // Converting accessor; widening or narrowing between f32/f64 is explicit.
    template <typename T>
    std::vector<T> values() const {
        std::vector<T> out(elem_count());
        if (dtype == dtype_of<T>()) {
            std::memcpy(out.data(), raw.data(), raw.size());
        } else if (dtype == Dtype::F64) {
            const double* src = reinterpret_cast<const double*>(raw.data());
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(src[i]);
        } else {
            const float* src = reinterpret_cast<const float*>(raw.data());
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(src[i]);
        }
        return out;
    }
};

inline void write_tnsr(std::ostream& os, Dtype dtype, const std::vector<std::uint64_t>& dims,
                       const void* data, std::size_t bytes) {
    os.write(reinterpret_cast<const char*>(kTnsrMagic.data()), kTnsrMagic.size());
    detail::put_u32(os, static_cast<std::uint32_t>(dtype));
    detail::put_u32(os, static_cast<std::uint32_t>(dims.size()));
    std::size_t n = 1;
    for (auto d : dims) {
        detail::put_u64(os, d);
        n *= static_cast<std::size_t>(d);
    }
    if (n * dtype_size(dtype) != bytes) throw IoError("tnsr: dims do not match payload size");
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!os) throw IoError("tnsr: write failed");
}

template <typename T>
void write_tnsr(std::ostream& os, const std::vector<std::uint64_t>& dims,
                const std::vector<T>& values) {
    write_tnsr(os, dtype_of<T>(), dims, values.data(), values.size() * sizeof(T));
}

inline TnsrRecord read_tnsr(std::istream& is) {
    std::array<unsigned char, 8> magic{};
    if (!is.read(reinterpret_cast<char*>(magic.data()), magic.size()))
        throw IoError("tnsr: truncated magic");
    if (magic != kTnsrMagic) throw IoError("tnsr: bad magic");
    TnsrRecord rec;
    std::uint32_t tag = detail::get_u32(is);
    if (tag > 1) throw IoError("tnsr: unknown dtype tag " + std::to_string(tag));
    rec.dtype = static_cast<Dtype>(tag);
    std::uint32_t ndim = detail::get_u32(is);
    if (ndim == 0 || ndim > 8) throw IoError("tnsr: unreasonable ndim " + std::to_string(ndim));
    rec.dims.resize(ndim);
    std::size_t n = 1;
    for (auto& d : rec.dims) {
        d = detail::get_u64(is);
        if (d == 0) throw IoError("tnsr: zero dimension");
        n *= static_cast<std::size_t>(d);
    }
    rec.raw.resize(n * dtype_size(rec.dtype));
    if (!is.read(reinterpret_cast<char*>(rec.raw.data()),
                 static_cast<std::streamsize>(rec.raw.size())))
        throw IoError("tnsr: truncated payload");
    return rec;
}

template <typename T>
void write_tnsr_matrix(std::ostream& os, const DenseMatrix<T>& m) {
    write_tnsr(os, {m.rows, m.cols}, m.data);
}

template <typename T>
DenseMatrix<T> read_tnsr_matrix(std::istream& is) {
    TnsrRecord rec = read_tnsr(is);
    if (rec.dims.size() != 2) throw IoError("tnsr: expected a 2-d record");
    return DenseMatrix<T>(static_cast<std::size_t>(rec.dims[0]),
                          static_cast<std::size_t>(rec.dims[1]), rec.values<T>());
}

template <typename T>
void save_tnsr(const std::filesystem::path& path, const std::vector<std::uint64_t>& dims,
               const std::vector<T>& values) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    write_tnsr(os, dims, values);
}

inline TnsrRecord load_tnsr(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    return read_tnsr(is);
}

}  // namespace teamwork
