#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "teamwork/common.hpp"
#include "teamwork/flops.hpp"
#include "teamwork/rng.hpp"
#include "teamwork/tensor.hpp"

namespace teamwork {

// Team geometry. A team runs ceil(channels / 3) adapted instances of the
// base model, each owning a triplet of data channels.
struct TeamConfig {
    std::size_t channels = 3;
    std::size_t team_size = 1;
    std::size_t rank = 1;

    static TeamConfig from_channels(std::size_t channels, std::size_t rank) {
        if (channels == 0) throw ParamError("TeamConfig: channels must be positive");
        if (rank == 0) throw ParamError("TeamConfig: rank must be positive");
        return TeamConfig{channels, (channels + 2) / 3, rank};
    }
};

// Per-teammate on/off switches. Length equals the team size; ops that
// evaluate the adapter require at least one active teammate.
class ActivationMask {
  public:
    explicit ActivationMask(std::size_t team_size, bool value = true)
        : active_(team_size, value ? 1 : 0) {
        if (team_size == 0) throw ParamError("ActivationMask: team size must be positive");
    }

    static ActivationMask all(std::size_t team_size) { return ActivationMask(team_size, true); }

    static ActivationMask only(std::size_t team_size, std::size_t idx) {
        ActivationMask m(team_size, false);
        m.set(idx, true);
        return m;
    }

    static ActivationMask of(std::size_t team_size, const std::vector<std::size_t>& indices) {
        ActivationMask m(team_size, false);
        for (auto i : indices) m.set(i, true);
        return m;
    }

    std::size_t size() const { return active_.size(); }
    bool active(std::size_t i) const { return active_.at(i) != 0; }
    void set(std::size_t i, bool value) { active_.at(i) = value ? 1 : 0; }

    std::size_t active_count() const {
        std::size_t n = 0;
        for (auto v : active_) n += v;
        return n;
    }

    std::vector<std::size_t> active_indices() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < active_.size(); ++i)
            if (active_[i]) idx.push_back(i);
        return idx;
    }

    std::string bits() const {
        std::string s;
        for (auto v : active_) s += v ? '1' : '0';
        return s;
    }

    bool operator==(const ActivationMask& o) const { return active_ == o.active_; }

  private:
    std::vector<std::uint8_t> active_;
};

enum class AdapterMode : std::uint8_t {
    Teamwork = 0,        // dense cross-teammate low-rank offset
    PerInstanceLora = 1, // independent LoRA per teammate, block-diagonal offset
    FrozenOnly = 2,      // base weights only, factors ignored
};

inline const char* adapter_mode_name(AdapterMode m) {
    switch (m) {
        case AdapterMode::Teamwork: return "teamwork";
        case AdapterMode::PerInstanceLora: return "per-instance";
        case AdapterMode::FrozenOnly: return "frozen";
    }
    return "?";
}

// One adapted linear layer: frozen base weights W (m x n) shared by all
// teammates, plus per-teammate low-rank factors A_i (m x r) and B_i (r x n)
// that jointly encode the offset over the whole team. W is never mutated
// after construction.
template <typename T>
struct TeamworkAdapter {
    DenseMatrix<T> frozen;                   // W
    std::vector<DenseMatrix<T>> factors_a;   // one m x r block per teammate
    std::vector<DenseMatrix<T>> factors_b;   // one r x n block per teammate
    AdapterMode mode = AdapterMode::Teamwork;
    double scale = 1.0;                      // offset multiplier, 1 = plain LoRA convention

    std::size_t out_dim() const { return frozen.rows; }
    std::size_t in_dim() const { return frozen.cols; }
    std::size_t team_size() const { return factors_a.size(); }
    std::size_t rank() const { return factors_a.empty() ? 0 : factors_a[0].cols; }

    // A_i ~ normal(0, 1/rank), B_i = 0; the adapted layer therefore starts
    // out exactly equal to the frozen layer.
    static TeamworkAdapter adapted(DenseMatrix<T> base, std::size_t team_size, std::size_t rank,
                                   Rng& rng, AdapterMode mode = AdapterMode::Teamwork) {
        if (team_size == 0) throw ParamError("adapter: team size must be positive");
        if (rank == 0) throw ParamError("adapter: rank must be positive");
        TeamworkAdapter ad;
        if (rank >= std::min(base.rows, base.cols))
            warn("adapter: rank " + std::to_string(rank) + " is not low for a " +
                 base.shape_str() + " layer");
        const double stddev = 1.0 / std::sqrt(static_cast<double>(rank));
        for (std::size_t i = 0; i < team_size; ++i) {
            DenseMatrix<T> a(base.rows, rank);
            gaussian_fill(a, rng, stddev);
            ad.factors_a.push_back(std::move(a));
            ad.factors_b.emplace_back(rank, base.cols);
        }
        ad.frozen = std::move(base);
        ad.mode = mode;
        return ad;
    }

    // Zero factors are kept per teammate so the checkpoint layout stays
    // uniform; forward ignores them in this mode.
    static TeamworkAdapter frozen_only(DenseMatrix<T> base, std::size_t team_size = 1,
                                       std::size_t rank = 1) {
        if (team_size == 0 || rank == 0)
            throw ParamError("adapter: team size and rank must be positive");
        TeamworkAdapter ad;
        ad.frozen = std::move(base);
        ad.mode = AdapterMode::FrozenOnly;
        for (std::size_t i = 0; i < team_size; ++i) {
            ad.factors_a.emplace_back(ad.frozen.rows, rank);
            ad.factors_b.emplace_back(rank, ad.frozen.cols);
        }
        return ad;
    }
};

template <typename T>
using TeamVectors = std::vector<DenseVector<T>>;  // one entry per active teammate, index order

template <typename T>
using TeamMatrices = std::vector<DenseMatrix<T>>; // token-stacked variant (tokens x dim)

namespace detail {

template <typename T>
std::vector<std::size_t> check_team_call(const TeamworkAdapter<T>& ad, const ActivationMask& mask,
                                         std::size_t input_count) {
    if (mask.size() != ad.team_size())
        throw ShapeError("adapter: mask of length " + std::to_string(mask.size()) +
                         " for team of " + std::to_string(ad.team_size()));
    auto idx = mask.active_indices();
    if (idx.empty()) throw ParamError("adapter: mask activates no teammate");
    if (input_count != idx.size())
        throw ShapeError("adapter: got " + std::to_string(input_count) + " inputs for " +
                         std::to_string(idx.size()) + " active teammates");
    return idx;
}

template <typename T>
void check_input_dims(const TeamworkAdapter<T>& ad, const TeamVectors<T>& x) {
    for (const auto& xi : x)
        if (xi.len() != ad.in_dim())
            throw ShapeError("adapter: input length " + std::to_string(xi.len()) +
                             " does not match layer width " + std::to_string(ad.in_dim()));
}

}  // namespace detail

// Factor-form forward: shared code s = sum_j B_j x_j computed once, then
// y_i = W x_i + A_i s. Costs |active| m n + |active| r (m + n) MACs, linear
// in the number of active teammates.
template <typename T>
TeamVectors<T> forward_unmaterialized(const TeamworkAdapter<T>& ad, const TeamVectors<T>& x,
                                      const ActivationMask& mask) {
    if (ad.mode != AdapterMode::Teamwork)
        throw ParamError("forward_unmaterialized: adapter is not in teamwork mode");
    auto idx = detail::check_team_call(ad, mask, x.size());
    detail::check_input_dims(ad, x);

    DenseVector<T> shared = matvec(ad.factors_b[idx[0]], x[0], MacCategory::LowRank);
    for (std::size_t k = 1; k < idx.size(); ++k)
        apply(ad.factors_b[idx[k]], x[k], shared, true, MacCategory::LowRank);

    TeamVectors<T> y;
    y.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        DenseVector<T> yi = matvec(ad.frozen, x[k], MacCategory::FrozenLinear);
        DenseVector<T> off = matvec(ad.factors_a[idx[k]], shared, MacCategory::LowRank);
        if (ad.scale != 1.0) scale_inplace(off, static_cast<T>(ad.scale));
        add_inplace(yi, off);
        y.push_back(std::move(yi));
    }
    return y;
}

// Independent LoRA per teammate: y_i = W x_i + A_i (B_i x_i). No information
// crosses teammates, the joint offset is block-diagonal.
template <typename T>
TeamVectors<T> forward_per_instance(const TeamworkAdapter<T>& ad, const TeamVectors<T>& x,
                                    const ActivationMask& mask) {
    if (ad.mode != AdapterMode::PerInstanceLora)
        throw ParamError("forward_per_instance: adapter is not in per-instance mode");
    auto idx = detail::check_team_call(ad, mask, x.size());
    detail::check_input_dims(ad, x);
    TeamVectors<T> y;
    y.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        DenseVector<T> code = matvec(ad.factors_b[idx[k]], x[k], MacCategory::LowRank);
        DenseVector<T> yi = matvec(ad.frozen, x[k], MacCategory::FrozenLinear);
        DenseVector<T> off = matvec(ad.factors_a[idx[k]], code, MacCategory::LowRank);
        if (ad.scale != 1.0) scale_inplace(off, static_cast<T>(ad.scale));
        add_inplace(yi, off);
        y.push_back(std::move(yi));
    }
    return y;
}

template <typename T>
TeamVectors<T> forward_frozen(const TeamworkAdapter<T>& ad, const TeamVectors<T>& x,
                              const ActivationMask& mask) {
    auto idx = detail::check_team_call(ad, mask, x.size());
    detail::check_input_dims(ad, x);
    TeamVectors<T> y;
    y.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k)
        y.push_back(matvec(ad.frozen, x[k], MacCategory::FrozenLinear));
    return y;
}

// The offset matrix over active teammates, in index order: block (i, j) is
// scale * A_i B_j for teamwork mode, its block-diagonal restriction for
// per-instance mode, and zero for frozen mode. Assembly is not metered; the
// amortized cost model charges only the application of a materialized matrix.
template <typename T>
DenseMatrix<T> materialize_delta(const TeamworkAdapter<T>& ad, const ActivationMask& mask) {
    if (mask.size() != ad.team_size()) throw ShapeError("materialize_delta: mask length mismatch");
    auto idx = mask.active_indices();
    if (idx.empty()) throw ParamError("materialize_delta: mask activates no teammate");
    LedgerPause pause;
    const std::size_t m = ad.out_dim(), n = ad.in_dim(), a = idx.size();
    DenseMatrix<T> delta(a * m, a * n);
    if (ad.mode == AdapterMode::FrozenOnly) return delta;
    for (std::size_t bi = 0; bi < a; ++bi) {
        for (std::size_t bj = 0; bj < a; ++bj) {
            if (ad.mode == AdapterMode::PerInstanceLora && bi != bj) continue;
            const DenseMatrix<T>& A = ad.factors_a[idx[bi]];
            const DenseMatrix<T>& B = ad.factors_b[idx[bj]];
            for (std::size_t i = 0; i < m; ++i) {
                T* drow = delta.row(bi * m + i) + bj * n;
                for (std::size_t l = 0; l < A.cols; ++l) {
                    const T ail = A(i, l) * static_cast<T>(ad.scale);
                    const T* brow = B.row(l);
                    for (std::size_t j = 0; j < n; ++j) drow[j] += ail * brow[j];
                }
            }
        }
    }
    return delta;
}

// Dense-path forward: assembles block(W) + delta and applies it as a single
// product of |active| m * |active| n MACs, quadratic in active teammates.
template <typename T>
TeamVectors<T> forward_materialized(const TeamworkAdapter<T>& ad, const TeamVectors<T>& x,
                                    const ActivationMask& mask) {
    if (ad.mode != AdapterMode::Teamwork)
        throw ParamError("forward_materialized: adapter is not in teamwork mode");
    auto idx = detail::check_team_call(ad, mask, x.size());
    detail::check_input_dims(ad, x);
    const std::size_t m = ad.out_dim(), n = ad.in_dim(), a = idx.size();

    DenseMatrix<T> combined = materialize_delta(ad, mask);
    {
        LedgerPause pause;
        for (std::size_t b = 0; b < a; ++b)
            for (std::size_t i = 0; i < m; ++i) {
                T* drow = combined.row(b * m + i) + b * n;
                const T* wrow = ad.frozen.row(i);
                for (std::size_t j = 0; j < n; ++j) drow[j] += wrow[j];
            }
    }

    DenseVector<T> xcat(a * n);
    for (std::size_t k = 0; k < a; ++k)
        std::copy(x[k].data.begin(), x[k].data.end(), xcat.data.begin() + k * n);
    DenseVector<T> ycat = matvec(combined, xcat, MacCategory::FrozenLinear);

    TeamVectors<T> y;
    y.reserve(a);
    for (std::size_t k = 0; k < a; ++k) {
        DenseVector<T> yi(m);
        std::copy(ycat.data.begin() + k * m, ycat.data.begin() + (k + 1) * m, yi.data.begin());
        y.push_back(std::move(yi));
    }
    return y;
}

// Mode-dispatching forward.
template <typename T>
TeamVectors<T> forward(const TeamworkAdapter<T>& ad, const TeamVectors<T>& x,
                       const ActivationMask& mask) {
    switch (ad.mode) {
        case AdapterMode::Teamwork: return forward_unmaterialized(ad, x, mask);
        case AdapterMode::PerInstanceLora: return forward_per_instance(ad, x, mask);
        case AdapterMode::FrozenOnly: return forward_frozen(ad, x, mask);
    }
    throw ParamError("forward: unknown adapter mode");
}

// Gradients for one team call. Lists are aligned with the active teammates
// in index order; inactive teammates contribute nothing and receive nothing.
template <typename T>
struct AdapterGrads {
    std::vector<DenseMatrix<T>> a;  // per active teammate, m x r
    std::vector<DenseMatrix<T>> b;  // per active teammate, r x n
    TeamVectors<T> x;               // per active teammate, n
};

// Analytic gradients. Teamwork mode: with s = sum_j B_j x_j and
// u = scale * sum_i A_i^T g_i,
//   dA_i = scale * g_i s^T,   dB_j = u x_j^T,   dx_j = W^T g_j + B_j^T u.
// W receives no gradient. Per-instance mode is the block-diagonal special
// case with per-teammate codes; frozen mode only propagates dx.
template <typename T>
AdapterGrads<T> backward(const TeamworkAdapter<T>& ad, const TeamVectors<T>& x,
                         const TeamVectors<T>& g, const ActivationMask& mask) {
    auto idx = detail::check_team_call(ad, mask, x.size());
    detail::check_input_dims(ad, x);
    if (g.size() != idx.size()) throw ShapeError("backward: upstream count mismatch");
    for (const auto& gi : g)
        if (gi.len() != ad.out_dim()) throw ShapeError("backward: upstream length mismatch");

    const std::size_t a = idx.size();
    AdapterGrads<T> grads;
    grads.x.reserve(a);

    if (ad.mode == AdapterMode::FrozenOnly) {
        for (std::size_t k = 0; k < a; ++k)
            grads.x.push_back(matvec_t(ad.frozen, g[k], MacCategory::FrozenLinear));
        return grads;
    }

    grads.a.reserve(a);
    grads.b.reserve(a);

    if (ad.mode == AdapterMode::Teamwork) {
        DenseVector<T> shared = matvec(ad.factors_b[idx[0]], x[0], MacCategory::LowRank);
        for (std::size_t k = 1; k < a; ++k)
            apply(ad.factors_b[idx[k]], x[k], shared, true, MacCategory::LowRank);

        DenseVector<T> u = matvec_t(ad.factors_a[idx[0]], g[0], MacCategory::LowRank);
        for (std::size_t k = 1; k < a; ++k)
            apply_t(ad.factors_a[idx[k]], g[k], u, true, MacCategory::LowRank);
        if (ad.scale != 1.0) scale_inplace(u, static_cast<T>(ad.scale));

        for (std::size_t k = 0; k < a; ++k) {
            DenseMatrix<T> ga = outer(g[k], shared, MacCategory::LowRank);
            if (ad.scale != 1.0) scale_inplace(ga, static_cast<T>(ad.scale));
            grads.a.push_back(std::move(ga));
            grads.b.push_back(outer(u, x[k], MacCategory::LowRank));
            DenseVector<T> gx = matvec_t(ad.frozen, g[k], MacCategory::FrozenLinear);
            apply_t(ad.factors_b[idx[k]], u, gx, true, MacCategory::LowRank);
            grads.x.push_back(std::move(gx));
        }
        return grads;
    }

    // per-instance
    for (std::size_t k = 0; k < a; ++k) {
        DenseVector<T> code = matvec(ad.factors_b[idx[k]], x[k], MacCategory::LowRank);
        DenseVector<T> u = matvec_t(ad.factors_a[idx[k]], g[k], MacCategory::LowRank);
        if (ad.scale != 1.0) scale_inplace(u, static_cast<T>(ad.scale));
        DenseMatrix<T> ga = outer(g[k], code, MacCategory::LowRank);
        if (ad.scale != 1.0) scale_inplace(ga, static_cast<T>(ad.scale));
        grads.a.push_back(std::move(ga));
        grads.b.push_back(outer(u, x[k], MacCategory::LowRank));
        DenseVector<T> gx = matvec_t(ad.frozen, g[k], MacCategory::FrozenLinear);
        apply_t(ad.factors_b[idx[k]], u, gx, true, MacCategory::LowRank);
        grads.x.push_back(std::move(gx));
    }
    return grads;
}

// Reduced adapter holding only the active teammates' factors. Any masked
// computation on the original adapter performs exactly the computation of
// the restricted adapter under a full mask.
template <typename T>
TeamworkAdapter<T> restricted(const TeamworkAdapter<T>& ad, const ActivationMask& mask) {
    if (mask.size() != ad.team_size()) throw ShapeError("restricted: mask length mismatch");
    auto idx = mask.active_indices();
    if (idx.empty()) throw ParamError("restricted: mask activates no teammate");
    TeamworkAdapter<T> out;
    out.frozen = ad.frozen;
    out.mode = ad.mode;
    out.scale = ad.scale;
    for (auto i : idx) {
        out.factors_a.push_back(ad.factors_a[i]);
        out.factors_b.push_back(ad.factors_b[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Token-stacked variants used by the denoiser: each active teammate carries a
// (tokens x dim) activation matrix and the team coupling applies per token
// row. Same algebra as the vector form, evaluated with matrix products.

template <typename T>
struct AdapterTokenCache {
    TeamMatrices<T> inputs;   // X_i, tokens x n (copied for the backward pass)
    DenseMatrix<T> shared;    // S = sum_j X_j B_j^T, tokens x r (teamwork mode)
    TeamMatrices<T> codes;    // per-teammate X_i B_i^T (per-instance mode)
};

template <typename T>
TeamMatrices<T> forward_tokens(const TeamworkAdapter<T>& ad, const TeamMatrices<T>& xs,
                               const ActivationMask& mask, AdapterTokenCache<T>* cache) {
    auto idx = detail::check_team_call(ad, mask, xs.size());
    const std::size_t a = idx.size();
    if (a == 0) throw ParamError("forward_tokens: empty mask");
    const std::size_t tokens = xs[0].rows;
    for (const auto& xi : xs)
        if (xi.cols != ad.in_dim() || xi.rows != tokens)
            throw ShapeError("forward_tokens: input block " + xi.shape_str() +
                             " does not match layer width " + std::to_string(ad.in_dim()));

    TeamMatrices<T> ys;
    ys.reserve(a);
    if (cache) {
        cache->inputs = xs;
        cache->codes.clear();
    }

    if (ad.mode == AdapterMode::FrozenOnly) {
        for (std::size_t k = 0; k < a; ++k) {
            DenseMatrix<T> y(tokens, ad.out_dim());
            gemm_nt(xs[k], ad.frozen, y, false, MacCategory::FrozenLinear);
            ys.push_back(std::move(y));
        }
        return ys;
    }

    if (ad.mode == AdapterMode::Teamwork) {
        DenseMatrix<T> shared(tokens, ad.rank());
        gemm_nt(xs[0], ad.factors_b[idx[0]], shared, false, MacCategory::LowRank);
        for (std::size_t k = 1; k < a; ++k)
            gemm_nt(xs[k], ad.factors_b[idx[k]], shared, true, MacCategory::LowRank);
        if (ad.scale != 1.0) scale_inplace(shared, static_cast<T>(ad.scale));
        for (std::size_t k = 0; k < a; ++k) {
            DenseMatrix<T> y(tokens, ad.out_dim());
            gemm_nt(xs[k], ad.frozen, y, false, MacCategory::FrozenLinear);
            gemm_nt(shared, ad.factors_a[idx[k]], y, true, MacCategory::LowRank);
            ys.push_back(std::move(y));
        }
        if (cache) cache->shared = std::move(shared);
        return ys;
    }

    // per-instance
    for (std::size_t k = 0; k < a; ++k) {
        DenseMatrix<T> code(tokens, ad.rank());
        gemm_nt(xs[k], ad.factors_b[idx[k]], code, false, MacCategory::LowRank);
        if (ad.scale != 1.0) scale_inplace(code, static_cast<T>(ad.scale));
        DenseMatrix<T> y(tokens, ad.out_dim());
        gemm_nt(xs[k], ad.frozen, y, false, MacCategory::FrozenLinear);
        gemm_nt(code, ad.factors_a[idx[k]], y, true, MacCategory::LowRank);
        if (cache) cache->codes.push_back(std::move(code));
        ys.push_back(std::move(y));
    }
    return ys;
}

// Token-form gradients. grad_a / grad_b accumulate into caller-held buffers
// indexed by absolute teammate id (the trainer owns one buffer per factor).
template <typename T>
struct FactorGradSink {
    std::vector<DenseMatrix<T>>* a = nullptr;  // team_size entries, m x r
    std::vector<DenseMatrix<T>>* b = nullptr;  // team_size entries, r x n
};

template <typename T>
TeamMatrices<T> backward_tokens(const TeamworkAdapter<T>& ad, const AdapterTokenCache<T>& cache,
                                const TeamMatrices<T>& gs, const ActivationMask& mask,
                                FactorGradSink<T> sink) {
    auto idx = detail::check_team_call(ad, mask, gs.size());
    const std::size_t a = idx.size();
    const std::size_t tokens = gs[0].rows;
    for (const auto& gi : gs)
        if (gi.cols != ad.out_dim() || gi.rows != tokens)
            throw ShapeError("backward_tokens: upstream block shape mismatch");
    if (cache.inputs.size() != a) throw ShapeError("backward_tokens: stale cache");

    TeamMatrices<T> gx;
    gx.reserve(a);

    if (ad.mode == AdapterMode::FrozenOnly) {
        for (std::size_t k = 0; k < a; ++k) {
            DenseMatrix<T> g(tokens, ad.in_dim());
            gemm(gs[k], ad.frozen, g, false, MacCategory::FrozenLinear);
            gx.push_back(std::move(g));
        }
        return gx;
    }

    if (ad.mode == AdapterMode::Teamwork) {
        // Note: cache.shared already carries the offset scale, so dA picks up
        // the scale from S while dB/dx pick it up from U.
        DenseMatrix<T> u(tokens, ad.rank());
        gemm(gs[0], ad.factors_a[idx[0]], u, false, MacCategory::LowRank);
        for (std::size_t k = 1; k < a; ++k)
            gemm(gs[k], ad.factors_a[idx[k]], u, true, MacCategory::LowRank);
        if (ad.scale != 1.0) scale_inplace(u, static_cast<T>(ad.scale));

        for (std::size_t k = 0; k < a; ++k) {
            if (sink.a) gemm_tn(gs[k], cache.shared, (*sink.a)[idx[k]], true, MacCategory::LowRank);
            if (sink.b) gemm_tn(u, cache.inputs[k], (*sink.b)[idx[k]], true, MacCategory::LowRank);
            DenseMatrix<T> g(tokens, ad.in_dim());
            gemm(gs[k], ad.frozen, g, false, MacCategory::FrozenLinear);
            gemm(u, ad.factors_b[idx[k]], g, true, MacCategory::LowRank);
            gx.push_back(std::move(g));
        }
        return gx;
    }

    // per-instance
    for (std::size_t k = 0; k < a; ++k) {
        DenseMatrix<T> u(tokens, ad.rank());
        gemm(gs[k], ad.factors_a[idx[k]], u, false, MacCategory::LowRank);
        if (ad.scale != 1.0) scale_inplace(u, static_cast<T>(ad.scale));
        if (sink.a) gemm_tn(gs[k], cache.codes[k], (*sink.a)[idx[k]], true, MacCategory::LowRank);
        if (sink.b) gemm_tn(u, cache.inputs[k], (*sink.b)[idx[k]], true, MacCategory::LowRank);
        DenseMatrix<T> g(tokens, ad.in_dim());
        gemm(gs[k], ad.frozen, g, false, MacCategory::FrozenLinear);
        gemm(u, ad.factors_b[idx[k]], g, true, MacCategory::LowRank);
        gx.push_back(std::move(g));
    }
    return gx;
}

}  // namespace teamwork
