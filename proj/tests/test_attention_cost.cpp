#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support/finite_diff.hpp"
#include "teamwork/attention.hpp"
#include "teamwork/cost.hpp"

using namespace teamwork;

namespace {

// Naive per-pair dot-product attention, no shared kernels with the library.
Mat attention_oracle(const Mat& q, const Mat& k, const Mat& v, std::size_t heads) {
    const std::size_t tokens = q.rows, hd = q.cols / heads;
    Mat out(tokens, q.cols);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < tokens; ++i) {
            std::vector<double> w(tokens);
            double sum = 0;
            for (std::size_t j = 0; j < tokens; ++j) {
                double dot = 0;
                for (std::size_t c = 0; c < hd; ++c) dot += q(i, h * hd + c) * k(j, h * hd + c);
                w[j] = std::exp(dot / std::sqrt(double(hd)));
                sum += w[j];
            }
            for (std::size_t c = 0; c < hd; ++c) {
                double acc = 0;
                for (std::size_t j = 0; j < tokens; ++j) acc += (w[j] / sum) * v(j, h * hd + c);
                out(i, h * hd + c) = acc;
            }
        }
    }
    return out;
}

TeamMatrices<double> random_tokens(std::size_t t, const AttentionSpec& spec, Rng& rng) {
    TeamMatrices<double> x;
    for (std::size_t i = 0; i < t; ++i)
        x.push_back(random_matrix<double>(spec.token_count, spec.model_dim, rng, 0.5));
    return x;
}

}  // namespace

TEST_CASE("attention spec validation") {
    CHECK_THROWS_AS((AttentionSpec{8, 30, 4}.validate()), ParamError);
    CHECK_NOTHROW((AttentionSpec{8, 32, 4}.validate()));
}

TEST_CASE("single token: softmax of one element, output is the value projection") {
    Rng rng(211);
    AttentionSpec spec{1, 8, 2};
    auto w = make_attention_weights<double>(spec, rng);
    auto tokens = random_tokens(3, spec, rng);
    auto out = self_attention(tokens, spec, w);
    for (std::size_t i = 0; i < 3; ++i) {
        Mat vproj(1, 8);
        gemm_nt(tokens[i], w.wv, vproj, false, MacCategory::FrozenLinear);
        CHECK(max_abs_diff(out[i], vproj) <= 1e-14);
    }
}

TEST_CASE("self attention has no cross-talk: permuting teammates permutes outputs") {
    Rng rng(223);
    AttentionSpec spec{6, 16, 4};
    auto w = make_attention_weights<double>(spec, rng);
    auto tokens = random_tokens(3, spec, rng);
    auto out = self_attention(tokens, spec, w);
    TeamMatrices<double> permuted = {tokens[2], tokens[0], tokens[1]};
    auto out_p = self_attention(permuted, spec, w);
    CHECK(bitwise_equal(out_p[0], out[2]));
    CHECK(bitwise_equal(out_p[1], out[0]));
    CHECK(bitwise_equal(out_p[2], out[1]));
}

TEST_CASE("self attention agrees with the quadratic-loop oracle") {
    Rng rng(227);
    AttentionSpec spec{7, 12, 3};
    auto w = make_attention_weights<double>(spec, rng);
    auto tokens = random_tokens(2, spec, rng);
    auto out = self_attention(tokens, spec, w);
    for (std::size_t i = 0; i < 2; ++i) {
        Mat q(spec.token_count, spec.model_dim), k(q.rows, q.cols), v(q.rows, q.cols);
        gemm_nt(tokens[i], w.wq, q, false, MacCategory::FrozenLinear);
        gemm_nt(tokens[i], w.wk, k, false, MacCategory::FrozenLinear);
        gemm_nt(tokens[i], w.wv, v, false, MacCategory::FrozenLinear);
        CHECK(max_abs_diff(out[i], attention_oracle(q, k, v, spec.head_count)) <= 1e-10);
    }
}

TEST_CASE("joint attention with one teammate equals self attention") {
    Rng rng(229);
    AttentionSpec spec{5, 8, 2};
    auto w = make_attention_weights<double>(spec, rng);
    auto tokens = random_tokens(1, spec, rng);
    auto self = self_attention(tokens, spec, w);
    auto joint = joint_attention(tokens, spec, w);
    CHECK(max_abs_diff(self[0], joint[0]) <= 1e-12);
}

TEST_CASE("joint attention over identical teammates collapses to self attention") {
    Rng rng(233);
    AttentionSpec spec{6, 8, 2};
    auto w = make_attention_weights<double>(spec, rng);
    Mat shared_tokens = random_matrix<double>(spec.token_count, spec.model_dim, rng, 0.5);
    TeamMatrices<double> tokens = {shared_tokens, shared_tokens, shared_tokens};
    auto self = self_attention(tokens, spec, w);
    auto joint = joint_attention(tokens, spec, w);
    for (std::size_t i = 0; i < 3; ++i) CHECK(max_abs_diff(self[i], joint[i]) <= 1e-10);
}

TEST_CASE("joint attention core MACs quadruple when the team doubles") {
    Rng rng(239);
    AttentionSpec spec{16, 16, 4};
    auto w = make_attention_weights<double>(spec, rng);
    auto count = [&](std::size_t t) {
        auto tokens = random_tokens(t, spec, rng);
        FlopLedger ledger;
        LedgerScope scope(ledger);
        joint_attention(tokens, spec, w);
        return ledger.count(MacCategory::Attention);
    };
    const double ratio = double(count(4)) / double(count(2));
    CHECK(ratio == Catch::Approx(4.0).epsilon(0.05));
}

TEST_CASE("growth: self attention linear, joint attention quadratic in team size") {
    Rng rng(241);
    AttentionSpec spec{16, 8, 2};
    auto w = make_attention_weights<double>(spec, rng);
    std::vector<std::size_t> team_sizes = {1, 2, 4, 8, 16};
    std::vector<std::uint64_t> self_total, joint_core;
    for (std::size_t t : team_sizes) {
        auto tokens = random_tokens(t, spec, rng);
        FlopLedger ledger;
        {
            LedgerScope scope(ledger);
            self_attention(tokens, spec, w);
        }
        self_total.push_back(ledger.total());
        ledger.reset();
        {
            LedgerScope scope(ledger);
            joint_attention(tokens, spec, w);
        }
        joint_core.push_back(ledger.count(MacCategory::Attention));
    }
    const double self_slope = fit_loglog_slope(team_sizes, self_total);
    const double joint_slope = fit_loglog_slope(team_sizes, joint_core);
    CHECK(self_slope == Catch::Approx(1.0).margin(0.1));
    CHECK(joint_slope == Catch::Approx(2.0).margin(0.1));
}

TEST_CASE("attention core backward matches finite differences") {
    Rng rng(251);
    const std::size_t tokens = 5, dim = 6, heads = 2;
    Mat q = random_matrix<double>(tokens, dim, rng, 0.7);
    Mat k = random_matrix<double>(tokens, dim, rng, 0.7);
    Mat v = random_matrix<double>(tokens, dim, rng, 0.7);
    Mat g = random_matrix<double>(tokens, dim, rng, 1.0);

    AttnCoreCache<double> cache;
    attn_core_forward(q, k, v, heads, &cache);
    auto grads = attn_core_backward(cache, g);

    auto loss = [&]() {
        Mat out = attn_core_forward(q, k, v, heads);
        double l = 0;
        for (std::size_t i = 0; i < out.size(); ++i) l += g.data[i] * out.data[i];
        return l;
    };
    for (Mat* input : {&q, &k, &v}) {
        Mat* analytic = input == &q ? &grads.q : (input == &k ? &grads.k : &grads.v);
        for (std::size_t i = 0; i < input->size(); ++i) {
            double fd = testsupport::central_diff_at(&input->data[i], loss);
            CHECK(testsupport::rel_err(analytic->data[i], fd) <= 1e-6);
        }
    }
}

TEST_CASE("linear cost predictions: LoRA degeneration and quadratic law") {
    // T = 1 factor form is the standard LoRA cost
    CHECK(predict_linear_cost(CostScheme::TeamworkUnmat, 1, 32, 48, 4) ==
          32ull * 48 + 4ull * (32 + 48));
    // materialized cost is quadratic in the team
    CHECK(predict_linear_cost(CostScheme::TeamworkMat, 5, 64, 64, 16) ==
          25 * predict_linear_cost(CostScheme::TeamworkMat, 1, 64, 64, 16));
    // per-instance is identical to the factor form
    for (std::uint64_t t : {1, 2, 3, 8})
        CHECK(predict_linear_cost(CostScheme::PerInstanceLora, t, 24, 36, 4) ==
              predict_linear_cost(CostScheme::TeamworkUnmat, t, 24, 36, 4));
    CHECK_THROWS_AS(predict_linear_cost(CostScheme::TeamworkUnmat, 1, 0, 4, 2), ParamError);
    CHECK_THROWS_AS(predict_linear_cost(CostScheme::JointAttention, 1, 4, 4, 2), ParamError);
    CHECK_THROWS_AS(cost_scheme_from_name("warp-drive"), ParamError);
}

TEST_CASE("predictions equal instrumented measurements exactly") {
    Rng rng(257);
    for (int iter = 0; iter < 20; ++iter) {
        CostDims d;
        d.m = 1 + rng.uniform_int(24);
        d.n = 1 + rng.uniform_int(24);
        d.r = 1 + rng.uniform_int(6);
        d.tokens = 1 + rng.uniform_int(12);
        d.dim = (1 + rng.uniform_int(4)) * 2;
        d.heads = 2;
        std::size_t t = 1 + rng.uniform_int(6);
        Rng mrng = rng.split(iter);
        for (CostScheme s : all_cost_schemes())
            CHECK(measure_cost(s, t, d, mrng) == predict_cost(s, t, d));
    }
}

TEST_CASE("per-instance and factor-form teamwork measure identically for every T") {
    Rng rng(263);
    CostDims d;
    d.m = 20;
    d.n = 12;
    d.r = 3;
    for (std::size_t t : {1, 2, 4, 8, 16}) {
        Rng r1 = rng.split(t), r2 = rng.split(t + 100);
        CHECK(measure_cost(CostScheme::TeamworkUnmat, t, d, r1) ==
              measure_cost(CostScheme::PerInstanceLora, t, d, r2));
    }
}

TEST_CASE("scaling sweep reproduces the linear and quadratic growth windows") {
    CostDims dims;
    dims.m = 32;
    dims.n = 32;
    dims.r = 4;
    dims.tokens = 64;
    dims.dim = 32;
    dims.heads = 4;
    auto sweep = scaling_sweep({1, 2, 4, 8, 16}, dims, all_cost_schemes(), 7);
    CHECK(sweep.slopes[CostScheme::TeamworkUnmat] == Catch::Approx(1.0).margin(0.1));
    CHECK(sweep.slopes[CostScheme::PerInstanceLora] == Catch::Approx(1.0).margin(0.1));
    CHECK(sweep.slopes[CostScheme::SelfAttention] == Catch::Approx(1.0).margin(0.1));
    CHECK(sweep.slopes[CostScheme::TeamworkMat] == Catch::Approx(2.0).margin(0.1));
    CHECK(sweep.slopes[CostScheme::JointAttention] == Catch::Approx(2.0).margin(0.1));
    for (const auto& rep : sweep.reports) CHECK(rep.measured == rep.predicted);

    CHECK_THROWS_AS(scaling_sweep({1, 2, 4}, dims, all_cost_schemes(), 7), ParamError);
    CHECK_THROWS_AS(scaling_sweep({1, 2, 2, 4}, dims, all_cost_schemes(), 7), ParamError);
}

TEST_CASE("cost grows monotonically in every dimension") {
    CostDims base;
    base.m = 16;
    base.n = 12;
    base.r = 4;
    base.tokens = 10;
    base.dim = 8;
    for (CostScheme s : all_cost_schemes()) {
        auto cost = [&](std::size_t t, const CostDims& d) { return predict_cost(s, t, d); };
        CostDims d = base;
        CHECK(cost(3, d) >= cost(2, d));
        d.m *= 2;
        CHECK(cost(2, d) >= cost(2, base));
        d = base;
        d.n *= 2;
        CHECK(cost(2, d) >= cost(2, base));
        d = base;
        d.r *= 2;
        CHECK(cost(2, d) >= cost(2, base));
        d = base;
        d.tokens *= 2;
        CHECK(cost(2, d) >= cost(2, base));
    }
}

TEST_CASE("materialized cost doubles with m; factor-form cost is affine in m") {
    const std::uint64_t t = 3, n = 24, r = 4;
    CHECK(predict_linear_cost(CostScheme::TeamworkMat, t, 32, n, r) * 2 ==
          predict_linear_cost(CostScheme::TeamworkMat, t, 64, n, r));
    // affine: equal second differences under equal increments of m
    auto f = [&](std::uint64_t m) {
        return predict_linear_cost(CostScheme::TeamworkUnmat, t, m, n, r);
    };
    CHECK(f(32) - f(16) == f(48) - f(32));
    CHECK(f(32) > f(16));
}

TEST_CASE("gnuplot table has one block per scheme") {
    CostDims dims;
    auto sweep = scaling_sweep({1, 2, 4, 8}, dims,
                               {CostScheme::TeamworkUnmat, CostScheme::JointAttention}, 3);
    std::ostringstream os;
    write_gnuplot_table(os, sweep);
    const std::string text = os.str();
    CHECK(text.find("# teamwork-unmat") != std::string::npos);
    CHECK(text.find("# joint-attention") != std::string::npos);
    CHECK(std::count(text.begin(), text.end(), '\n') >= 10);
}
