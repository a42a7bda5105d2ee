#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "teamwork/adapter.hpp"
#include "teamwork/attention.hpp"
#include "teamwork/common.hpp"
#include "teamwork/flops.hpp"

namespace teamwork {

enum class CostScheme {
    TeamworkUnmat,
    TeamworkMat,
    PerInstanceLora,
    JointAttention,
    SelfAttention,
};

inline const char* cost_scheme_name(CostScheme s) {
    switch (s) {
        case CostScheme::TeamworkUnmat: return "teamwork-unmat";
        case CostScheme::TeamworkMat: return "teamwork-mat";
        case CostScheme::PerInstanceLora: return "per-instance-lora";
        case CostScheme::JointAttention: return "joint-attention";
        case CostScheme::SelfAttention: return "self-attention";
    }
    return "?";
}

inline CostScheme cost_scheme_from_name(const std::string& name) {
    for (CostScheme s : {CostScheme::TeamworkUnmat, CostScheme::TeamworkMat,
                         CostScheme::PerInstanceLora, CostScheme::JointAttention,
                         CostScheme::SelfAttention})
        if (name == cost_scheme_name(s)) return s;
    throw ParamError("unknown cost scheme: " + name);
}

inline bool is_attention_scheme(CostScheme s) {
    return s == CostScheme::JointAttention || s == CostScheme::SelfAttention;
}

// Closed-form forward MAC counts for the linear-layer schemes. The factor
// form costs T m n + T r (m + n); applying a materialized joint matrix costs
// T^2 m n; per-instance LoRA costs exactly what the factor form costs.
inline std::uint64_t predict_linear_cost(CostScheme scheme, std::uint64_t t, std::uint64_t m,
                                         std::uint64_t n, std::uint64_t r) {
    if (t == 0 || m == 0 || n == 0 || r == 0)
        throw ParamError("predict_linear_cost: dimensions must be positive");
    switch (scheme) {
        case CostScheme::TeamworkUnmat:
        case CostScheme::PerInstanceLora:
            return t * m * n + t * r * (m + n);
        case CostScheme::TeamworkMat:
            return t * t * m * n;
        default:
            throw ParamError(std::string("predict_linear_cost: ") + cost_scheme_name(scheme) +
                             " is not a linear-layer scheme");
    }
}

// Closed-form score+mix MAC counts for the attention schemes (softmax and
// scaling excluded; projections are linear-layer work tracked separately).
inline std::uint64_t predict_attention_cost(CostScheme scheme, std::uint64_t t,
                                            std::uint64_t tokens, std::uint64_t dim) {
    if (t == 0 || tokens == 0 || dim == 0)
        throw ParamError("predict_attention_cost: dimensions must be positive");
    switch (scheme) {
        case CostScheme::SelfAttention:
            return 2 * t * tokens * tokens * dim;
        case CostScheme::JointAttention:
            return 2 * (t * tokens) * (t * tokens) * dim;
        default:
            throw ParamError(std::string("predict_attention_cost: ") + cost_scheme_name(scheme) +
                             " is not an attention scheme");
    }
}

struct CostDims {
    std::size_t m = 64, n = 64, r = 16;      // adapted layer geometry
    std::size_t tokens = 64, dim = 32, heads = 4;  // attention geometry
};

struct CostReport {
    CostScheme scheme;
    std::size_t team_size;
    CostDims dims;
    std::uint64_t predicted = 0;
    std::uint64_t measured = 0;

    std::string line() const {
        std::ostringstream os;
        os << "scheme=" << cost_scheme_name(scheme) << " T=" << team_size << " m=" << dims.m
           << " n=" << dims.n << " r=" << dims.r << " tokens=" << dims.tokens
           << " dim=" << dims.dim << " predicted_macs=" << predicted
           << " measured_macs=" << measured << " measured_flops=" << 2 * measured;
        return os.str();
    }
};

// Runs one instrumented forward of the requested scheme and returns the
// relevant MAC counter: total (frozen + lowrank) for linear schemes, the
// attention category for attention schemes.
inline std::uint64_t measure_cost(CostScheme scheme, std::size_t t, const CostDims& d, Rng& rng) {
    FlopLedger ledger;
    if (is_attention_scheme(scheme)) {
        AttentionSpec spec{d.tokens, d.dim, d.heads};
        auto w = make_attention_weights<double>(spec, rng);
        TeamMatrices<double> tokens;
        for (std::size_t i = 0; i < t; ++i)
            tokens.push_back(random_matrix<double>(spec.token_count, spec.model_dim, rng, 0.5));
        LedgerScope scope(ledger);
        if (scheme == CostScheme::SelfAttention)
            self_attention(tokens, spec, w);
        else
            joint_attention(tokens, spec, w);
        return ledger.count(MacCategory::Attention);
    }

    auto mode = scheme == CostScheme::PerInstanceLora ? AdapterMode::PerInstanceLora
                                                      : AdapterMode::Teamwork;
    TeamworkAdapter<double> ad;
    ad.frozen = random_matrix<double>(d.m, d.n, rng);
    ad.mode = mode;
    for (std::size_t i = 0; i < t; ++i) {
        ad.factors_a.push_back(random_matrix<double>(d.m, d.r, rng));
        ad.factors_b.push_back(random_matrix<double>(d.r, d.n, rng));
    }
    TeamVectors<double> x;
    for (std::size_t i = 0; i < t; ++i) x.push_back(random_vector<double>(d.n, rng));
    auto mask = ActivationMask::all(t);
    LedgerScope scope(ledger);
    switch (scheme) {
        case CostScheme::TeamworkUnmat: forward_unmaterialized(ad, x, mask); break;
        case CostScheme::TeamworkMat: forward_materialized(ad, x, mask); break;
        case CostScheme::PerInstanceLora: forward_per_instance(ad, x, mask); break;
        default: break;
    }
    return ledger.count(MacCategory::FrozenLinear) + ledger.count(MacCategory::LowRank);
}

inline std::uint64_t predict_cost(CostScheme scheme, std::size_t t, const CostDims& d) {
    return is_attention_scheme(scheme) ? predict_attention_cost(scheme, t, d.tokens, d.dim)
                                       : predict_linear_cost(scheme, t, d.m, d.n, d.r);
}

// Least-squares slope of log(y) against log(x).
inline double fit_loglog_slope(const std::vector<std::size_t>& xs,
                               const std::vector<std::uint64_t>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw ParamError("fit_loglog_slope: need matching lists of at least 2 points");
    const std::size_t n = xs.size();
    double mx = 0, my = 0;
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        lx[i] = std::log(static_cast<double>(xs[i]));
        ly[i] = std::log(static_cast<double>(ys[i]));
        mx += lx[i];
        my += ly[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    return num / den;
}

struct SweepResult {
    std::vector<CostReport> reports;
    std::map<CostScheme, double> slopes;
};

// Instrumented forwards over a list of team sizes plus fitted log-log growth
// slopes per scheme. Factor-form Teamwork and batched self-attention grow
// linearly; materialized Teamwork and joint attention grow quadratically.
inline SweepResult scaling_sweep(const std::vector<std::size_t>& team_sizes, const CostDims& dims,
                                 const std::vector<CostScheme>& schemes, std::uint64_t seed) {
    std::vector<std::size_t> distinct = team_sizes;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 4)
        throw ParamError("scaling_sweep: need at least 4 distinct team sizes");
    if (!distinct.empty() && distinct.front() == 0)
        throw ParamError("scaling_sweep: team sizes must be positive");

    SweepResult result;
    Rng root(seed);
    for (CostScheme scheme : schemes) {
        std::vector<std::uint64_t> measured;
        for (std::size_t t : distinct) {
            Rng rng = root.split(static_cast<std::uint64_t>(t) * 131 +
                                 static_cast<std::uint64_t>(scheme));
            CostReport rep;
            rep.scheme = scheme;
            rep.team_size = t;
            rep.dims = dims;
            rep.predicted = predict_cost(scheme, t, dims);
            rep.measured = measure_cost(scheme, t, dims, rng);
            measured.push_back(rep.measured);
            result.reports.push_back(rep);
        }
        result.slopes[scheme] = fit_loglog_slope(distinct, measured);
    }
    return result;
}

inline std::vector<CostScheme> all_cost_schemes() {
    return {CostScheme::TeamworkUnmat, CostScheme::TeamworkMat, CostScheme::PerInstanceLora,
            CostScheme::SelfAttention, CostScheme::JointAttention};
}

// Two-column (T, measured MACs) blocks per scheme, separated by blank lines,
// consumable with gnuplot's `index` selector.
inline void write_gnuplot_table(std::ostream& os, const SweepResult& sweep) {
    CostScheme current{};
    bool first = true;
    for (const auto& rep : sweep.reports) {
        if (first || rep.scheme != current) {
            if (!first) os << "\n\n";
            os << "# " << cost_scheme_name(rep.scheme) << "\n";
            current = rep.scheme;
            first = false;
        }
        os << rep.team_size << " " << rep.measured << "\n";
    }
}

}  // namespace teamwork
