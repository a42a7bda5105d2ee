#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "teamwork/adapter.hpp"
#include "teamwork/common.hpp"
#include "teamwork/tnsr_io.hpp"

namespace teamwork {

// "TWRK" checkpoint: 8-byte magic, little-endian u32 layer_count, u32 T,
// u32 r, then per layer u32 m, u32 n, u8 mode tag, followed by W, the T
// A-factors and the T B-factors, each as an embedded TNSR record. Round
// trips are bit-exact.
inline constexpr std::array<unsigned char, 8> kTwrkMagic = {'T', 'W', 'R', 'K', 0, 0, 0, 1};

template <typename T>
void write_checkpoint(std::ostream& os, const std::vector<TeamworkAdapter<T>>& layers) {
    if (layers.empty()) throw ParamError("checkpoint: no layers");
    const std::size_t team = layers[0].team_size();
    const std::size_t rank = layers[0].rank();
    for (const auto& l : layers)
        if (l.team_size() != team || l.rank() != rank)
            throw ShapeError("checkpoint: layers disagree on team size or rank");

    os.write(reinterpret_cast<const char*>(kTwrkMagic.data()), kTwrkMagic.size());
    detail::put_u32(os, static_cast<std::uint32_t>(layers.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(team));
    detail::put_u32(os, static_cast<std::uint32_t>(rank));
    for (const auto& layer : layers) {
        detail::put_u32(os, static_cast<std::uint32_t>(layer.out_dim()));
        detail::put_u32(os, static_cast<std::uint32_t>(layer.in_dim()));
        const std::uint8_t tag = static_cast<std::uint8_t>(layer.mode);
        os.write(reinterpret_cast<const char*>(&tag), 1);
        write_tnsr_matrix(os, layer.frozen);
        for (const auto& a : layer.factors_a) write_tnsr_matrix(os, a);
        for (const auto& b : layer.factors_b) write_tnsr_matrix(os, b);
    }
    if (!os) throw IoError("checkpoint: write failed");
}

template <typename T>
std::vector<TeamworkAdapter<T>> read_checkpoint(std::istream& is) {
    std::array<unsigned char, 8> magic{};
    if (!is.read(reinterpret_cast<char*>(magic.data()), magic.size()))
        throw IoError("checkpoint: truncated magic");
    if (magic != kTwrkMagic) throw IoError("checkpoint: bad magic");
    const std::uint32_t layer_count = detail::get_u32(is);
    const std::uint32_t team = detail::get_u32(is);
    const std::uint32_t rank = detail::get_u32(is);
    if (layer_count == 0 || layer_count > 4096 || team == 0 || rank == 0)
        throw IoError("checkpoint: implausible header");

    std::vector<TeamworkAdapter<T>> layers;
    layers.reserve(layer_count);
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        const std::uint32_t m = detail::get_u32(is);
        const std::uint32_t n = detail::get_u32(is);
        std::uint8_t tag = 0;
        if (!is.read(reinterpret_cast<char*>(&tag), 1)) throw IoError("checkpoint: truncated");
        if (tag > 2) throw IoError("checkpoint: unknown mode tag");
        TeamworkAdapter<T> layer;
        layer.mode = static_cast<AdapterMode>(tag);
        layer.frozen = read_tnsr_matrix<T>(is);
        if (layer.frozen.rows != m || layer.frozen.cols != n)
            throw IoError("checkpoint: layer dims disagree with record");
        for (std::uint32_t i = 0; i < team; ++i) {
            layer.factors_a.push_back(read_tnsr_matrix<T>(is));
            if (layer.factors_a.back().rows != m || layer.factors_a.back().cols != rank)
                throw IoError("checkpoint: A-factor shape mismatch");
        }
        for (std::uint32_t i = 0; i < team; ++i) {
            layer.factors_b.push_back(read_tnsr_matrix<T>(is));
            if (layer.factors_b.back().rows != rank || layer.factors_b.back().cols != n)
                throw IoError("checkpoint: B-factor shape mismatch");
        }
        layers.push_back(std::move(layer));
    }
    return layers;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<TeamworkAdapter<T>>& layers) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    write_checkpoint(os, layers);
}

template <typename T>
std::vector<TeamworkAdapter<T>> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    return read_checkpoint<T>(is);
}

// Scalar type recorded in the first embedded tensor, for format dispatch.
inline Dtype checkpoint_dtype(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    is.seekg(8 + 4 + 4 + 4 + 4 + 4 + 1);  // magic, header, layer dims, mode tag
    std::array<unsigned char, 8> magic{};
    if (!is.read(reinterpret_cast<char*>(magic.data()), magic.size()) || magic != kTnsrMagic)
        throw IoError("checkpoint: malformed first tensor record");
    return static_cast<Dtype>(detail::get_u32(is));
}

}  // namespace teamwork
