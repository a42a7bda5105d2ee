#pragma once

#include <cmath>
#include <vector>

#include "teamwork/adapter.hpp"
#include "teamwork/common.hpp"
#include "teamwork/flops.hpp"
#include "teamwork/tensor.hpp"

namespace teamwork {

struct AttentionSpec {
    std::size_t token_count = 0;
    std::size_t model_dim = 0;
    std::size_t head_count = 1;

    void validate() const {
        if (token_count == 0 || model_dim == 0 || head_count == 0)
            throw ParamError("attention: token count, dim and heads must be positive");
        if (model_dim % head_count != 0)
            throw ParamError("attention: model_dim " + std::to_string(model_dim) +
                             " not divisible by head_count " + std::to_string(head_count));
    }

    std::size_t head_dim() const { return model_dim / head_count; }
};

// Row softmax with max subtraction for stability.
template <typename T>
void softmax_rows_inplace(DenseMatrix<T>& m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        T* row = m.row(i);
        T mx = row[0];
        for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, row[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < m.cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const T inv = T(1) / sum;
        for (std::size_t j = 0; j < m.cols; ++j) row[j] *= inv;
    }
}

namespace detail {

template <typename T>
DenseMatrix<T> head_slice(const DenseMatrix<T>& m, std::size_t head, std::size_t head_dim) {
    DenseMatrix<T> out(m.rows, head_dim);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const T* src = m.row(i) + head * head_dim;
        T* dst = out.row(i);
        for (std::size_t j = 0; j < head_dim; ++j) dst[j] = src[j];
    }
    return out;
}

template <typename T>
void head_unslice_acc(DenseMatrix<T>& full, const DenseMatrix<T>& part, std::size_t head,
                      std::size_t head_dim, bool accumulate) {
    for (std::size_t i = 0; i < part.rows; ++i) {
        T* dst = full.row(i) + head * head_dim;
        const T* src = part.row(i);
        for (std::size_t j = 0; j < head_dim; ++j)
            dst[j] = accumulate ? dst[j] + src[j] : src[j];
    }
}

}  // namespace detail

// Cached intermediates of one multi-head scaled-dot-product application,
// enough to run the backward pass.
template <typename T>
struct AttnCoreCache {
    std::vector<DenseMatrix<T>> q, k, v;      // per head, tokens x head_dim
    std::vector<DenseMatrix<T>> probs;        // per head, tokens x tokens
    std::size_t heads = 0;
    std::size_t head_dim = 0;
};

// out = concat_h( softmax(Q_h K_h^T / sqrt(head_dim)) V_h ). The score and
// mix products are metered under the attention category; softmax and the
// 1/sqrt(d) scaling are not multiply-accumulates and are not counted.
template <typename T>
DenseMatrix<T> attn_core_forward(const DenseMatrix<T>& q, const DenseMatrix<T>& k,
                                 const DenseMatrix<T>& v, std::size_t heads,
                                 AttnCoreCache<T>* cache = nullptr) {
    if (!q.same_shape(k) || !q.same_shape(v))
        throw ShapeError("attention: q/k/v shapes disagree");
    if (q.cols % heads != 0) throw ParamError("attention: dim not divisible by heads");
    const std::size_t head_dim = q.cols / heads;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(head_dim));

    DenseMatrix<T> out(q.rows, q.cols);
    if (cache) {
        cache->q.clear();
        cache->k.clear();
        cache->v.clear();
        cache->probs.clear();
        cache->heads = heads;
        cache->head_dim = head_dim;
    }
    for (std::size_t h = 0; h < heads; ++h) {
        DenseMatrix<T> qh = detail::head_slice(q, h, head_dim);
        DenseMatrix<T> kh = detail::head_slice(k, h, head_dim);
        DenseMatrix<T> vh = detail::head_slice(v, h, head_dim);
        DenseMatrix<T> scores(q.rows, q.rows);
        gemm_nt(qh, kh, scores, false, MacCategory::Attention);
        scale_inplace(scores, inv_sqrt);
        softmax_rows_inplace(scores);
        DenseMatrix<T> mixed(q.rows, head_dim);
        gemm(scores, vh, mixed, false, MacCategory::Attention);
        detail::head_unslice_acc(out, mixed, h, head_dim, false);
        if (cache) {
            cache->q.push_back(std::move(qh));
            cache->k.push_back(std::move(kh));
            cache->v.push_back(std::move(vh));
            cache->probs.push_back(std::move(scores));
        }
    }
    return out;
}

template <typename T>
struct AttnCoreGrads {
    DenseMatrix<T> q, k, v;
};

template <typename T>
AttnCoreGrads<T> attn_core_backward(const AttnCoreCache<T>& cache, const DenseMatrix<T>& d_out) {
    const std::size_t heads = cache.heads, head_dim = cache.head_dim;
    const std::size_t tokens = d_out.rows;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(head_dim));
    AttnCoreGrads<T> g{DenseMatrix<T>(tokens, heads * head_dim),
                       DenseMatrix<T>(tokens, heads * head_dim),
                       DenseMatrix<T>(tokens, heads * head_dim)};
    for (std::size_t h = 0; h < heads; ++h) {
        DenseMatrix<T> dz = detail::head_slice(d_out, h, head_dim);
        const DenseMatrix<T>& p = cache.probs[h];

        DenseMatrix<T> dv(tokens, head_dim);
        gemm_tn(p, dz, dv, false, MacCategory::Attention);

        DenseMatrix<T> dp(tokens, tokens);
        gemm_nt(dz, cache.v[h], dp, false, MacCategory::Attention);

        // softmax backward: ds = p * (dp - rowdot(dp, p))
        DenseMatrix<T> ds(tokens, tokens);
        for (std::size_t i = 0; i < tokens; ++i) {
            const T* prow = p.row(i);
            const T* dprow = dp.row(i);
            T dot = T(0);
            for (std::size_t j = 0; j < tokens; ++j) dot += prow[j] * dprow[j];
            T* dsrow = ds.row(i);
            for (std::size_t j = 0; j < tokens; ++j) dsrow[j] = prow[j] * (dprow[j] - dot);
        }
        scale_inplace(ds, inv_sqrt);

        DenseMatrix<T> dq(tokens, head_dim);
        gemm(ds, cache.k[h], dq, false, MacCategory::Attention);
        DenseMatrix<T> dk(tokens, head_dim);
        gemm_tn(ds, cache.q[h], dk, false, MacCategory::Attention);

        detail::head_unslice_acc(g.q, dq, h, head_dim, false);
        detail::head_unslice_acc(g.k, dk, h, head_dim, false);
        detail::head_unslice_acc(g.v, dv, h, head_dim, false);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Coordination baselines. Forward-only with fixed random projections: the
// comparison of interest at this scale is cost scaling, not trained quality.
// Q/K/V projections are metered as frozen linear work; only the score and
// mix products land in the attention category. No positional encoding is
// applied, so token order is meaningful only through the token contents.

template <typename T>
struct AttentionWeights {
    DenseMatrix<T> wq, wk, wv;  // model_dim x model_dim each
};

template <typename T>
AttentionWeights<T> make_attention_weights(const AttentionSpec& spec, Rng& rng) {
    spec.validate();
    const double stddev = 1.0 / std::sqrt(static_cast<double>(spec.model_dim));
    AttentionWeights<T> w;
    w.wq = random_matrix<T>(spec.model_dim, spec.model_dim, rng, stddev);
    w.wk = random_matrix<T>(spec.model_dim, spec.model_dim, rng, stddev);
    w.wv = random_matrix<T>(spec.model_dim, spec.model_dim, rng, stddev);
    return w;
}

namespace detail {

template <typename T>
void check_token_blocks(const TeamMatrices<T>& tokens, const AttentionSpec& spec) {
    spec.validate();
    if (tokens.empty()) throw ParamError("attention: no teammates");
    for (const auto& x : tokens)
        if (x.rows != spec.token_count || x.cols != spec.model_dim)
            throw ShapeError("attention: token block " + x.shape_str() + " does not match spec " +
                             std::to_string(spec.token_count) + "x" +
                             std::to_string(spec.model_dim));
}

}  // namespace detail

// Batched attention: every teammate attends over its own tokens only, so no
// information crosses teammates. Cost is linear in the team size.
template <typename T>
TeamMatrices<T> self_attention(const TeamMatrices<T>& tokens, const AttentionSpec& spec,
                               const AttentionWeights<T>& w) {
    detail::check_token_blocks(tokens, spec);
    TeamMatrices<T> out;
    out.reserve(tokens.size());
    for (const auto& x : tokens) {
        DenseMatrix<T> q(x.rows, x.cols), k(x.rows, x.cols), v(x.rows, x.cols);
        gemm_nt(x, w.wq, q, false, MacCategory::FrozenLinear);
        gemm_nt(x, w.wk, k, false, MacCategory::FrozenLinear);
        gemm_nt(x, w.wv, v, false, MacCategory::FrozenLinear);
        out.push_back(attn_core_forward(q, k, v, spec.head_count));
    }
    return out;
}

// Joint attention: one attention over the concatenation of all teammates'
// tokens, split back afterwards. The score/mix cost grows with
// (T * token_count)^2 * model_dim, quadratic in the team size.
template <typename T>
TeamMatrices<T> joint_attention(const TeamMatrices<T>& tokens, const AttentionSpec& spec,
                                const AttentionWeights<T>& w) {
    detail::check_token_blocks(tokens, spec);
    const std::size_t t = tokens.size();
    const std::size_t rows = spec.token_count;
    DenseMatrix<T> cat(t * rows, spec.model_dim);
    for (std::size_t i = 0; i < t; ++i)
        std::copy(tokens[i].data.begin(), tokens[i].data.end(),
                  cat.data.begin() + i * rows * spec.model_dim);

    DenseMatrix<T> q(cat.rows, cat.cols), k(cat.rows, cat.cols), v(cat.rows, cat.cols);
    gemm_nt(cat, w.wq, q, false, MacCategory::FrozenLinear);
    gemm_nt(cat, w.wk, k, false, MacCategory::FrozenLinear);
    gemm_nt(cat, w.wv, v, false, MacCategory::FrozenLinear);
    DenseMatrix<T> mixed = attn_core_forward(q, k, v, spec.head_count);

    TeamMatrices<T> out;
    out.reserve(t);
    for (std::size_t i = 0; i < t; ++i) {
        DenseMatrix<T> block(rows, spec.model_dim);
        std::copy(mixed.data.begin() + i * rows * spec.model_dim,
                  mixed.data.begin() + (i + 1) * rows * spec.model_dim, block.data.begin());
        out.push_back(std::move(block));
    }
    return out;
}

}  // namespace teamwork
