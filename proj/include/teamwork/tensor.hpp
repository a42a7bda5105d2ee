#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <string>
#include <type_traits>
#include <vector>

#include "teamwork/common.hpp"
#include "teamwork/flops.hpp"
#include "teamwork/rng.hpp"

namespace teamwork {

// Row-major dense matrix. Row-major is the single layout convention for the
// whole project; there is no transpose flag, transposed products are explicit
// kernels instead.
template <typename T>
struct DenseMatrix {
    static_assert(std::is_floating_point_v<T>);

    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T(0)) {
        if (r == 0 || c == 0)
            throw ShapeError("DenseMatrix: dimensions must be positive, got " + shape_str());
    }
    DenseMatrix(std::size_t r, std::size_t c, std::vector<T> values)
        : rows(r), cols(c), data(std::move(values)) {
        if (r == 0 || c == 0)
            throw ShapeError("DenseMatrix: dimensions must be positive, got " + shape_str());
        if (data.size() != r * c)
            throw ShapeError("DenseMatrix: buffer size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str());
    }

    T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    T* row(std::size_t i) { return data.data() + i * cols; }
    const T* row(std::size_t i) const { return data.data() + i * cols; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
        return m;
    }
};

template <typename T>
struct DenseVector {
    static_assert(std::is_floating_point_v<T>);

    std::vector<T> data;

    DenseVector() = default;
    explicit DenseVector(std::size_t n) : data(n, T(0)) {
        if (n == 0) throw ShapeError("DenseVector: length must be positive");
    }
    explicit DenseVector(std::vector<T> values) : data(std::move(values)) {
        if (data.empty()) throw ShapeError("DenseVector: length must be positive");
    }

    std::size_t len() const { return data.size(); }
    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }
};

using Mat = DenseMatrix<double>;
using Vec = DenseVector<double>;

namespace detail {

inline void check_inner(std::size_t a_cols, std::size_t b_rows, const std::string& a_shape,
                        const std::string& b_shape) {
    if (a_cols != b_rows)
        throw ShapeError("matmul: inner dimensions disagree, " + a_shape + " vs " + b_shape);
}

}  // namespace detail

// C (+)= A * B.   A: p x k, B: k x q.
template <typename T>
void gemm(const DenseMatrix<T>& a, const DenseMatrix<T>& b, DenseMatrix<T>& c, bool accumulate,
          MacCategory cat) {
    detail::check_inner(a.cols, b.rows, a.shape_str(), b.shape_str());
    if (c.rows != a.rows || c.cols != b.cols)
        throw ShapeError("matmul: output shape " + c.shape_str() + " does not match " +
                         std::to_string(a.rows) + "x" + std::to_string(b.cols));
    const std::size_t p = a.rows, k = a.cols, q = b.cols;
    for (std::size_t i = 0; i < p; ++i) {
        T* crow = c.row(i);
        if (!accumulate)
            for (std::size_t j = 0; j < q; ++j) crow[j] = T(0);
        const T* arow = a.row(i);
        for (std::size_t l = 0; l < k; ++l) {
            const T al = arow[l];
            const T* brow = b.row(l);
            for (std::size_t j = 0; j < q; ++j) crow[j] += al * brow[j];
        }
    }
    count_macs(cat, static_cast<std::uint64_t>(p) * k * q);
}

// C (+)= A * B^T.   A: p x k, B: q x k.
template <typename T>
void gemm_nt(const DenseMatrix<T>& a, const DenseMatrix<T>& b, DenseMatrix<T>& c, bool accumulate,
             MacCategory cat) {
    detail::check_inner(a.cols, b.cols, a.shape_str(), b.shape_str() + "^T");
    if (c.rows != a.rows || c.cols != b.rows)
        throw ShapeError("matmul_nt: output shape " + c.shape_str() + " does not match " +
                         std::to_string(a.rows) + "x" + std::to_string(b.rows));
    const std::size_t p = a.rows, k = a.cols, q = b.rows;
    for (std::size_t i = 0; i < p; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (std::size_t j = 0; j < q; ++j) {
            const T* brow = b.row(j);
            T acc = T(0);
            for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
    count_macs(cat, static_cast<std::uint64_t>(p) * k * q);
}

// C (+)= A^T * B.   A: k x p, B: k x q.
template <typename T>
void gemm_tn(const DenseMatrix<T>& a, const DenseMatrix<T>& b, DenseMatrix<T>& c, bool accumulate,
             MacCategory cat) {
    detail::check_inner(a.rows, b.rows, a.shape_str() + "^T", b.shape_str());
    if (c.rows != a.cols || c.cols != b.cols)
        throw ShapeError("matmul_tn: output shape " + c.shape_str() + " does not match " +
                         std::to_string(a.cols) + "x" + std::to_string(b.cols));
    const std::size_t k = a.rows, p = a.cols, q = b.cols;
    if (!accumulate) c.fill(T(0));
    for (std::size_t l = 0; l < k; ++l) {
        const T* arow = a.row(l);
        const T* brow = b.row(l);
        for (std::size_t i = 0; i < p; ++i) {
            const T ai = arow[i];
            T* crow = c.row(i);
            for (std::size_t j = 0; j < q; ++j) crow[j] += ai * brow[j];
        }
    }
    count_macs(cat, static_cast<std::uint64_t>(p) * k * q);
}

template <typename T>
DenseMatrix<T> matmul(const DenseMatrix<T>& a, const DenseMatrix<T>& b,
                      MacCategory cat = MacCategory::FrozenLinear) {
    detail::check_inner(a.cols, b.rows, a.shape_str(), b.shape_str());
    DenseMatrix<T> c(a.rows, b.cols);
    gemm(a, b, c, false, cat);
    return c;
}

// y (+)= W x.   W: m x n, x: n.
template <typename T>
void apply(const DenseMatrix<T>& w, const DenseVector<T>& x, DenseVector<T>& y, bool accumulate,
           MacCategory cat) {
    if (w.cols != x.len())
        throw ShapeError("matvec: " + w.shape_str() + " against vector of length " +
                         std::to_string(x.len()));
    if (y.len() != w.rows)
        throw ShapeError("matvec: output length " + std::to_string(y.len()) + " does not match " +
                         std::to_string(w.rows));
    for (std::size_t i = 0; i < w.rows; ++i) {
        const T* wrow = w.row(i);
        T acc = T(0);
        for (std::size_t j = 0; j < w.cols; ++j) acc += wrow[j] * x.data[j];
        y[i] = accumulate ? y[i] + acc : acc;
    }
    count_macs(cat, static_cast<std::uint64_t>(w.rows) * w.cols);
}

template <typename T>
DenseVector<T> matvec(const DenseMatrix<T>& w, const DenseVector<T>& x,
                      MacCategory cat = MacCategory::FrozenLinear) {
    DenseVector<T> y(w.rows);
    apply(w, x, y, false, cat);
    return y;
}

// y (+)= W^T g.   W: m x n, g: m.
template <typename T>
void apply_t(const DenseMatrix<T>& w, const DenseVector<T>& g, DenseVector<T>& y, bool accumulate,
             MacCategory cat) {
    if (w.rows != g.len())
        throw ShapeError("matvec_t: " + w.shape_str() + "^T against vector of length " +
                         std::to_string(g.len()));
    if (y.len() != w.cols)
        throw ShapeError("matvec_t: output length mismatch");
    if (!accumulate)
        for (auto& v : y.data) v = T(0);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const T gi = g[i];
        const T* wrow = w.row(i);
        for (std::size_t j = 0; j < w.cols; ++j) y[j] += wrow[j] * gi;
    }
    count_macs(cat, static_cast<std::uint64_t>(w.rows) * w.cols);
}

template <typename T>
DenseVector<T> matvec_t(const DenseMatrix<T>& w, const DenseVector<T>& g,
                        MacCategory cat = MacCategory::FrozenLinear) {
    DenseVector<T> y(w.cols);
    apply_t(w, g, y, false, cat);
    return y;
}

// M (+)= u v^T.
template <typename T>
void outer_acc(const DenseVector<T>& u, const DenseVector<T>& v, DenseMatrix<T>& m,
               bool accumulate, MacCategory cat) {
    if (m.rows != u.len() || m.cols != v.len())
        throw ShapeError("outer: output shape " + m.shape_str() + " does not match vectors");
    for (std::size_t i = 0; i < u.len(); ++i) {
        const T ui = u[i];
        T* mrow = m.row(i);
        for (std::size_t j = 0; j < v.len(); ++j)
            mrow[j] = (accumulate ? mrow[j] : T(0)) + ui * v[j];
    }
    count_macs(cat, static_cast<std::uint64_t>(u.len()) * v.len());
}

template <typename T>
DenseMatrix<T> outer(const DenseVector<T>& u, const DenseVector<T>& v,
                     MacCategory cat = MacCategory::LowRank) {
    DenseMatrix<T> m(u.len(), v.len());
    outer_acc(u, v, m, false, cat);
    return m;
}

// Elementwise helpers (no MACs recorded; the ledger tracks matrix products).
template <typename T>
void add_inplace(DenseVector<T>& y, const DenseVector<T>& d) {
    if (y.len() != d.len()) throw ShapeError("add: vector length mismatch");
    for (std::size_t i = 0; i < y.len(); ++i) y[i] += d[i];
}

template <typename T>
void add_inplace(DenseMatrix<T>& y, const DenseMatrix<T>& d) {
    if (!y.same_shape(d)) throw ShapeError("add: shape mismatch " + y.shape_str() + " vs " + d.shape_str());
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += d.data[i];
}

template <typename T>
void scale_inplace(DenseMatrix<T>& m, T s) {
    for (auto& v : m.data) v *= s;
}

template <typename T>
void scale_inplace(DenseVector<T>& m, T s) {
    for (auto& v : m.data) v *= s;
}

template <typename T>
double max_abs(const DenseMatrix<T>& m) {
    double r = 0;
    for (T v : m.data) r = std::max(r, std::abs(static_cast<double>(v)));
    return r;
}

template <typename T>
double max_abs_diff(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
    double r = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        r = std::max(r, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
    return r;
}

template <typename T>
double max_abs_diff(const DenseVector<T>& a, const DenseVector<T>& b) {
    if (a.len() != b.len()) throw ShapeError("max_abs_diff: length mismatch");
    double r = 0;
    for (std::size_t i = 0; i < a.len(); ++i)
        r = std::max(r, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return r;
}

template <typename T>
bool bitwise_equal(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(T)) == 0;
}

template <typename T>
bool bitwise_equal(const DenseVector<T>& a, const DenseVector<T>& b) {
    return a.len() == b.len() &&
           std::memcmp(a.data.data(), b.data.data(), a.len() * sizeof(T)) == 0;
}

// Entries become i.i.d. normal(0, stddev^2) draws from rng.
template <typename T>
DenseMatrix<T>& gaussian_fill(DenseMatrix<T>& m, Rng& rng, double stddev) {
    if (!(stddev > 0)) throw ParamError("gaussian_fill: stddev must be positive");
    for (auto& v : m.data) v = static_cast<T>(stddev * rng.normal());
    return m;
}

template <typename T>
DenseVector<T>& gaussian_fill(DenseVector<T>& v, Rng& rng, double stddev) {
    if (!(stddev > 0)) throw ParamError("gaussian_fill: stddev must be positive");
    for (auto& x : v.data) x = static_cast<T>(stddev * rng.normal());
    return v;
}

template <typename T>
DenseMatrix<T> random_matrix(std::size_t r, std::size_t c, Rng& rng, double stddev = 1.0) {
    DenseMatrix<T> m(r, c);
    gaussian_fill(m, rng, stddev);
    return m;
}

template <typename T>
DenseVector<T> random_vector(std::size_t n, Rng& rng, double stddev = 1.0) {
    DenseVector<T> v(n);
    gaussian_fill(v, rng, stddev);
    return v;
}

}  // namespace teamwork
