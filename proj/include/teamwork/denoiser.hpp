#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "teamwork/adapter.hpp"
#include "teamwork/attention.hpp"
#include "teamwork/common.hpp"
#include "teamwork/synth.hpp"
#include "teamwork/tensor.hpp"

namespace teamwork {

// Toy denoiser: patchify the image into tokens, append the time scalar as a
// broadcast channel, then run embed -> MLP block -> self-attention over the
// tokens -> MLP block -> unembed, with residual connections around the
// blocks. Every linear layer is a team-adapted layer; attention mixes tokens
// within a teammate only, so all cross-teammate information flows through
// the adapted linear layers.
struct ToyGeometry {
    std::size_t height = 16, width = 16, patch = 2;
    std::size_t channels = 3;
    std::size_t model_dim = 64, hidden_dim = 128, heads = 4;

    std::size_t tokens() const { return (height / patch) * (width / patch); }
    std::size_t patch_dim() const { return channels * patch * patch; }
    std::size_t embed_dim() const { return patch_dim() + 1; }  // + time channel

    void validate() const {
        if (height == 0 || width == 0 || patch == 0 || channels == 0)
            throw ParamError("geometry: dimensions must be positive");
        if (height % patch != 0 || width % patch != 0)
            throw ParamError("geometry: image size must be divisible by the patch size");
        if (model_dim == 0 || hidden_dim == 0 || heads == 0 || model_dim % heads != 0)
            throw ParamError("geometry: model_dim must be positive and divisible by heads");
    }
};

inline constexpr std::size_t kNetLayerCount = 10;

inline constexpr std::array<const char*, kNetLayerCount> kNetLayerNames = {
    "embed",   "mlp1_in", "mlp1_out", "attn_q",  "attn_k",
    "attn_v",  "attn_o",  "mlp2_in",  "mlp2_out", "unembed",
};

inline constexpr std::array<bool, kNetLayerCount> kNetLayerIsAttention = {
    false, false, false, true, true, true, true, false, false, false,
};

// (out_dim, in_dim) of each layer for a given geometry.
inline std::array<std::pair<std::size_t, std::size_t>, kNetLayerCount> net_layer_dims(
    const ToyGeometry& g) {
    const std::size_t d = g.model_dim, h = g.hidden_dim;
    return {{{d, g.embed_dim()},
             {h, d},
             {d, h},
             {d, d},
             {d, d},
             {d, d},
             {d, d},
             {h, d},
             {d, h},
             {g.patch_dim(), d}}};
}

// GELU, tanh approximation.
template <typename T>
T gelu(T x) {
    const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    const T a = static_cast<T>(0.044715);
    return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::tanh(c * (x + a * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
    const T c = static_cast<T>(0.7978845608028654);
    const T a = static_cast<T>(0.044715);
    const T u = c * (x + a * x * x * x);
    const T th = std::tanh(u);
    const T du = c * (static_cast<T>(1) + static_cast<T>(3) * a * x * x);
    return static_cast<T>(0.5) * (static_cast<T>(1) + th) +
           static_cast<T>(0.5) * x * (static_cast<T>(1) - th * th) * du;
}

// plane (c x H x W) -> tokens x patch_dim, row-major over the patch grid.
template <typename T>
DenseMatrix<T> patchify(const Image<T>& plane, const ToyGeometry& g) {
    if (plane.channels != g.channels || plane.height != g.height || plane.width != g.width)
        throw ShapeError("patchify: plane does not match geometry");
    const std::size_t gw = g.width / g.patch;
    DenseMatrix<T> out(g.tokens(), g.patch_dim());
    for (std::size_t py = 0; py < g.height / g.patch; ++py)
        for (std::size_t px = 0; px < gw; ++px) {
            T* row = out.row(py * gw + px);
            std::size_t f = 0;
            for (std::size_t c = 0; c < g.channels; ++c)
                for (std::size_t dy = 0; dy < g.patch; ++dy)
                    for (std::size_t dx = 0; dx < g.patch; ++dx)
                        row[f++] = plane.at(c, py * g.patch + dy, px * g.patch + dx);
        }
    return out;
}

template <typename T>
Image<T> unpatchify(const DenseMatrix<T>& tokens, const ToyGeometry& g) {
    if (tokens.rows != g.tokens() || tokens.cols != g.patch_dim())
        throw ShapeError("unpatchify: token block does not match geometry");
    const std::size_t gw = g.width / g.patch;
    Image<T> plane(g.channels, g.height, g.width);
    for (std::size_t py = 0; py < g.height / g.patch; ++py)
        for (std::size_t px = 0; px < gw; ++px) {
            const T* row = tokens.row(py * gw + px);
            std::size_t f = 0;
            for (std::size_t c = 0; c < g.channels; ++c)
                for (std::size_t dy = 0; dy < g.patch; ++dy)
                    for (std::size_t dx = 0; dx < g.patch; ++dx)
                        plane.at(c, py * g.patch + dy, px * g.patch + dx) = row[f++];
        }
    return plane;
}

template <typename T>
struct NetTape {
    double t = 0;
    std::array<AdapterTokenCache<T>, kNetLayerCount> layer_cache;
    TeamMatrices<T> gelu1_pre, gelu2_pre;        // per active teammate
    std::vector<AttnCoreCache<T>> attn;          // per active teammate
};

// Gradient accumulation targets. `factors_a/b` hold one buffer per layer and
// absolute teammate index; `base` holds one dW buffer per layer and is used
// only while pretraining the base weights.
template <typename T>
struct NetGradSinks {
    std::vector<std::vector<DenseMatrix<T>>>* factors_a = nullptr;
    std::vector<std::vector<DenseMatrix<T>>>* factors_b = nullptr;
    std::vector<DenseMatrix<T>>* base = nullptr;
};

template <typename T>
struct DenoiserNet {
    ToyGeometry geom;
    std::vector<TeamworkAdapter<T>> layers;  // kNetLayerCount entries

    std::size_t team_size() const { return layers.empty() ? 0 : layers[0].team_size(); }
    AdapterMode mode() const { return layers.empty() ? AdapterMode::FrozenOnly : layers[0].mode; }

    // Freshly initialized single-instance base net. The base weights are
    // trainable only during pretraining; attach_adapters freezes them.
    static DenoiserNet random_base(const ToyGeometry& g, Rng& rng) {
        g.validate();
        DenoiserNet net;
        net.geom = g;
        for (const auto& [out_dim, in_dim] : net_layer_dims(g)) {
            const double stddev = 1.0 / std::sqrt(static_cast<double>(in_dim));
            DenseMatrix<T> w(out_dim, in_dim);
            gaussian_fill(w, rng, stddev);
            net.layers.push_back(TeamworkAdapter<T>::frozen_only(std::move(w)));
        }
        return net;
    }

    // Re-wraps the frozen base weights with per-teammate factors. With
    // adapt_attention_only, only the q/k/v/o projections receive factors and
    // the other layers stay frozen.
    void attach_adapters(std::size_t team, std::size_t rank, Rng& rng, AdapterMode adapter_mode,
                         bool adapt_attention_only = false) {
        if (team == 0 || rank == 0) throw ParamError("attach_adapters: team and rank positive");
        if (adapter_mode == AdapterMode::FrozenOnly)
            throw ParamError("attach_adapters: pick teamwork or per-instance mode");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            DenseMatrix<T> w = std::move(layers[i].frozen);
            if (adapt_attention_only && !kNetLayerIsAttention[i])
                layers[i] = TeamworkAdapter<T>::frozen_only(std::move(w), team, rank);
            else
                layers[i] = TeamworkAdapter<T>::adapted(std::move(w), team, rank, rng, adapter_mode);
        }
    }

    bool layer_trainable(std::size_t i) const { return layers[i].mode != AdapterMode::FrozenOnly; }
};

// Forward over the active teammates. `planes` is active-aligned in teammate
// index order; the returned velocity planes use the same alignment.
template <typename T>
std::vector<Image<T>> net_forward(const DenoiserNet<T>& net, const std::vector<Image<T>>& planes,
                                  double t, const ActivationMask& mask, NetTape<T>* tape) {
    const std::size_t active = mask.active_count();
    if (planes.size() != active) throw ShapeError("net_forward: planes do not match mask");
    const ToyGeometry& g = net.geom;

    TeamMatrices<T> x;
    x.reserve(active);
    for (const auto& p : planes) {
        DenseMatrix<T> tok = patchify(p, g);
        DenseMatrix<T> with_t(tok.rows, tok.cols + 1);
        for (std::size_t i = 0; i < tok.rows; ++i) {
            std::copy(tok.row(i), tok.row(i) + tok.cols, with_t.row(i));
            with_t(i, tok.cols) = static_cast<T>(t);
        }
        x.push_back(std::move(with_t));
    }
    if (tape) tape->t = t;

    auto cache_of = [&](std::size_t layer) -> AdapterTokenCache<T>* {
        return tape ? &tape->layer_cache[layer] : nullptr;
    };

    // embed
    TeamMatrices<T> h = forward_tokens(net.layers[0], x, mask, cache_of(0));

    // first MLP block with residual
    {
        TeamMatrices<T> u = forward_tokens(net.layers[1], h, mask, cache_of(1));
        if (tape) tape->gelu1_pre = u;
        for (auto& ui : u)
            for (auto& v : ui.data) v = gelu(v);
        TeamMatrices<T> m = forward_tokens(net.layers[2], u, mask, cache_of(2));
        for (std::size_t k = 0; k < active; ++k) add_inplace(h[k], m[k]);
    }

    // self-attention within each teammate, residual around the o-projection
    {
        TeamMatrices<T> q = forward_tokens(net.layers[3], h, mask, cache_of(3));
        TeamMatrices<T> kk = forward_tokens(net.layers[4], h, mask, cache_of(4));
        TeamMatrices<T> v = forward_tokens(net.layers[5], h, mask, cache_of(5));
        TeamMatrices<T> z;
        z.reserve(active);
        if (tape) tape->attn.assign(active, AttnCoreCache<T>{});
        for (std::size_t k = 0; k < active; ++k)
            z.push_back(attn_core_forward(q[k], kk[k], v[k], g.heads,
                                          tape ? &tape->attn[k] : nullptr));
        TeamMatrices<T> o = forward_tokens(net.layers[6], z, mask, cache_of(6));
        for (std::size_t k = 0; k < active; ++k) add_inplace(h[k], o[k]);
    }

    // second MLP block with residual
    {
        TeamMatrices<T> u = forward_tokens(net.layers[7], h, mask, cache_of(7));
        if (tape) tape->gelu2_pre = u;
        for (auto& ui : u)
            for (auto& v : ui.data) v = gelu(v);
        TeamMatrices<T> m = forward_tokens(net.layers[8], u, mask, cache_of(8));
        for (std::size_t k = 0; k < active; ++k) add_inplace(h[k], m[k]);
    }

    TeamMatrices<T> out = forward_tokens(net.layers[9], h, mask, cache_of(9));
    std::vector<Image<T>> velocity;
    velocity.reserve(active);
    for (const auto& yk : out) velocity.push_back(unpatchify(yk, g));
    return velocity;
}

namespace detail {

// dW accumulation for the pretraining phase: dW += sum_k G_k^T X_k.
template <typename T>
void accumulate_base_grad(const AdapterTokenCache<T>& cache, const TeamMatrices<T>& gs,
                          DenseMatrix<T>& dw) {
    for (std::size_t k = 0; k < gs.size(); ++k)
        gemm_tn(gs[k], cache.inputs[k], dw, true, MacCategory::FrozenLinear);
}

}  // namespace detail

// Reverse pass matching net_forward. `plane_grads` is the upstream gradient
// of the loss with respect to the velocity planes, active-aligned.
template <typename T>
void net_backward(const DenoiserNet<T>& net, const NetTape<T>& tape,
                  const std::vector<Image<T>>& plane_grads, const ActivationMask& mask,
                  NetGradSinks<T> sinks) {
    const std::size_t active = mask.active_count();
    if (plane_grads.size() != active) throw ShapeError("net_backward: grads do not match mask");
    const ToyGeometry& g = net.geom;

    auto sink_of = [&](std::size_t layer) -> FactorGradSink<T> {
        FactorGradSink<T> s;
        if (sinks.factors_a) s.a = &(*sinks.factors_a)[layer];
        if (sinks.factors_b) s.b = &(*sinks.factors_b)[layer];
        return s;
    };
    auto layer_backward = [&](std::size_t layer, const TeamMatrices<T>& gs) -> TeamMatrices<T> {
        TeamMatrices<T> gx = backward_tokens(net.layers[layer], tape.layer_cache[layer], gs, mask,
                                             net.layer_trainable(layer) ? sink_of(layer)
                                                                        : FactorGradSink<T>{});
        if (sinks.base) detail::accumulate_base_grad(tape.layer_cache[layer], gs, (*sinks.base)[layer]);
        return gx;
    };

    TeamMatrices<T> dy;
    dy.reserve(active);
    for (const auto& p : plane_grads) dy.push_back(patchify(p, g));

    // unembed
    TeamMatrices<T> dh = layer_backward(9, dy);

    // second MLP block
    {
        TeamMatrices<T> dm = dh;  // residual branch
        TeamMatrices<T> du = layer_backward(8, dm);
        for (std::size_t k = 0; k < active; ++k)
            for (std::size_t i = 0; i < du[k].size(); ++i)
                du[k].data[i] *= gelu_grad(tape.gelu2_pre[k].data[i]);
        TeamMatrices<T> dh_in = layer_backward(7, du);
        for (std::size_t k = 0; k < active; ++k) add_inplace(dh[k], dh_in[k]);
    }

    // attention
    {
        TeamMatrices<T> dz = layer_backward(6, dh);
        TeamMatrices<T> dq, dk, dv;
        dq.reserve(active);
        dk.reserve(active);
        dv.reserve(active);
        for (std::size_t k = 0; k < active; ++k) {
            auto grads = attn_core_backward(tape.attn[k], dz[k]);
            dq.push_back(std::move(grads.q));
            dk.push_back(std::move(grads.k));
            dv.push_back(std::move(grads.v));
        }
        TeamMatrices<T> dh_q = layer_backward(3, dq);
        TeamMatrices<T> dh_k = layer_backward(4, dk);
        TeamMatrices<T> dh_v = layer_backward(5, dv);
        for (std::size_t k = 0; k < active; ++k) {
            add_inplace(dh[k], dh_q[k]);
            add_inplace(dh[k], dh_k[k]);
            add_inplace(dh[k], dh_v[k]);
        }
    }

    // first MLP block
    {
        TeamMatrices<T> du = layer_backward(2, dh);
        for (std::size_t k = 0; k < active; ++k)
            for (std::size_t i = 0; i < du[k].size(); ++i)
                du[k].data[i] *= gelu_grad(tape.gelu1_pre[k].data[i]);
        TeamMatrices<T> dh_in = layer_backward(1, du);
        for (std::size_t k = 0; k < active; ++k) add_inplace(dh[k], dh_in[k]);
    }

    // embed; the gradient with respect to the raw input planes is discarded
    layer_backward(0, dh);
}

}  // namespace teamwork
