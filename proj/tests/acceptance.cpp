// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Runs the full coordination-benefit experiment, so expect
// several minutes of CPU time.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "support/finite_diff.hpp"
#include "teamwork/teamwork.hpp"

using namespace teamwork;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, double elapsed_s) {
    std::printf("[%s] C%-2d %s (%.1fs)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
                elapsed_s);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void run_criterion(int criterion, const std::string& what,
                   const std::function<bool(std::string&)>& body) {
    const auto start = Clock::now();
    std::string detail = what;
    bool pass = false;
    try {
        pass = body(detail);
    } catch (const std::exception& e) {
        detail = what + " raised: " + e.what();
    }
    report(criterion, pass, detail, std::chrono::duration<double>(Clock::now() - start).count());
}

TeamworkAdapter<double> random_adapter(std::size_t m, std::size_t n, std::size_t r, std::size_t t,
                                       Rng& rng, AdapterMode mode = AdapterMode::Teamwork) {
    TeamworkAdapter<double> ad;
    ad.frozen = random_matrix<double>(m, n, rng);
    ad.mode = mode;
    for (std::size_t i = 0; i < t; ++i) {
        ad.factors_a.push_back(random_matrix<double>(m, r, rng));
        ad.factors_b.push_back(random_matrix<double>(r, n, rng));
    }
    return ad;
}

TeamVectors<double> random_team(std::size_t count, std::size_t n, Rng& rng) {
    TeamVectors<double> x;
    for (std::size_t i = 0; i < count; ++i) x.push_back(random_vector<double>(n, rng));
    return x;
}

ActivationMask random_mask(std::size_t t, Rng& rng, bool strict_subset = false) {
    ActivationMask mask(t, false);
    for (std::size_t i = 0; i < t; ++i) mask.set(i, rng.bernoulli(0.5));
    if (mask.active_count() == 0) mask.set(rng.uniform_int(t), true);
    if (strict_subset && mask.active_count() == t && t > 1) mask.set(rng.uniform_int(t), false);
    return mask;
}

// ---------------------------------------------------------------------------
// Criteria 1..7, 9: direct library probes.

bool criterion1(std::string& detail) {
    Rng rng(1001);
    double worst = 0;
    for (int iter = 0; iter < 100; ++iter) {
        const std::size_t m = 1 + rng.uniform_int(32);
        const std::size_t n = 1 + rng.uniform_int(32);
        const std::size_t r = 1 + rng.uniform_int(8);
        const std::size_t t = 1 + rng.uniform_int(8);
        auto ad = random_adapter(m, n, r, t, rng);
        auto mask = random_mask(t, rng);
        auto x = random_team(mask.active_count(), n, rng);
        auto fast = forward_unmaterialized(ad, x, mask);
        auto dense = forward_materialized(ad, x, mask);
        for (std::size_t k = 0; k < fast.size(); ++k)
            worst = std::max(worst, max_abs_diff(fast[k], dense[k]));
    }
    std::ostringstream os;
    os << "materialization equivalence over 100 random adapters: max |diff| = " << worst
       << " <= 1e-10";
    detail = os.str();
    return worst <= 1e-10;
}

bool criterion2(std::string& detail) {
    Rng rng(1002);
    bool ok = true;
    for (int iter = 0; iter < 25 && ok; ++iter) {
        const std::size_t m = 2 + rng.uniform_int(16);
        const std::size_t n = 2 + rng.uniform_int(16);
        const std::size_t r = 1 + rng.uniform_int(4);
        auto ad = random_adapter(m, n, r, 1, rng);
        auto x = random_team(1, n, rng);
        auto mask = ActivationMask::all(1);
        auto y = forward_unmaterialized(ad, x, mask)[0];
        Vec code = matvec(ad.factors_b[0], x[0], MacCategory::LowRank);
        Vec ref = matvec(ad.frozen, x[0], MacCategory::FrozenLinear);
        Vec off = matvec(ad.factors_a[0], code, MacCategory::LowRank);
        add_inplace(ref, off);
        ok &= bitwise_equal(y, ref);

        // zero-initialized B: adapted output equals the frozen output exactly
        const std::size_t t = 1 + rng.uniform_int(5);
        Mat base = random_matrix<double>(m, n, rng);
        auto fresh = TeamworkAdapter<double>::adapted(base, t, r, rng);
        auto xt = random_team(t, n, rng);
        auto tm = ActivationMask::all(t);
        auto adapted_y = forward_unmaterialized(fresh, xt, tm);
        auto frozen_y = forward_frozen(fresh, xt, tm);
        for (std::size_t k = 0; k < t; ++k) ok &= bitwise_equal(adapted_y[k], frozen_y[k]);
    }
    detail = "LoRA degeneration: T=1 bitwise equals standard LoRA; zero B equals frozen output";
    return ok;
}

bool criterion3(std::string& detail) {
    Rng rng(1003);
    const double h = 1e-5, tol = 1e-6;
    double worst = 0;
    std::size_t checked = 0;
    bool input_grad_seen = false;
    for (int iter = 0; iter < 100; ++iter) {
        const std::size_t m = 2 + rng.uniform_int(6);
        const std::size_t n = 2 + rng.uniform_int(6);
        const std::size_t r = 1 + rng.uniform_int(3);
        const std::size_t t = 2 + rng.uniform_int(3);
        auto ad = random_adapter(m, n, r, t, rng);
        auto mask = iter % 3 == 0 ? ActivationMask::all(t) : random_mask(t, rng);
        const std::size_t a = mask.active_count();
        auto x = random_team(a, n, rng);
        auto g = random_team(a, m, rng);
        const bool zero_slot = iter % 2 == 1 && a > 1;  // emulates an input teammate
        if (zero_slot)
            for (auto& v : g[0].data) v = 0.0;

        auto grads = backward(ad, x, g, mask);
        auto loss = [&]() {
            auto y = forward_unmaterialized(ad, x, mask);
            double l = 0;
            for (std::size_t k = 0; k < y.size(); ++k)
                for (std::size_t i = 0; i < y[k].len(); ++i) l += g[k][i] * y[k][i];
            return l;
        };
        auto idx = mask.active_indices();
        for (std::size_t k = 0; k < a; ++k) {
            for (std::size_t i = 0; i < grads.a[k].size(); ++i) {
                const double fd =
                    testsupport::central_diff_at(&ad.factors_a[idx[k]].data[i], loss, h);
                worst = std::max(worst, testsupport::rel_err(grads.a[k].data[i], fd));
                ++checked;
            }
            for (std::size_t i = 0; i < grads.b[k].size(); ++i) {
                const double fd =
                    testsupport::central_diff_at(&ad.factors_b[idx[k]].data[i], loss, h);
                worst = std::max(worst, testsupport::rel_err(grads.b[k].data[i], fd));
                ++checked;
            }
            for (std::size_t i = 0; i < n; ++i) {
                const double fd = testsupport::central_diff_at(&x[k][i], loss, h);
                worst = std::max(worst, testsupport::rel_err(grads.x[k][i], fd));
                ++checked;
            }
        }
        if (zero_slot) input_grad_seen |= max_abs(grads.b[0]) > 0;
    }
    std::ostringstream os;
    os << "analytic vs central differences over 100 configs (" << checked
       << " entries): worst rel err = " << worst << " <= 1e-6; masked subsets and zero-upstream "
       << "teammates included";
    detail = os.str();
    return worst <= tol && input_grad_seen;
}

bool criterion4(std::string& detail) {
    Rng rng(1004);
    double worst = 0;
    bool per_instance_zero = true;
    for (int iter = 0; iter < 50; ++iter) {
        const std::size_t m = 2 + rng.uniform_int(6);
        const std::size_t n = 2 + rng.uniform_int(6);
        const std::size_t r = 1 + rng.uniform_int(3);
        const std::size_t t = 2 + rng.uniform_int(4);
        auto ad = random_adapter(m, n, r, t, rng);
        auto mask = ActivationMask::all(t);
        auto x = random_team(t, n, rng);
        const std::size_t i = rng.uniform_int(t);
        std::size_t j = rng.uniform_int(t);
        while (j == i) j = rng.uniform_int(t);

        Mat expected = matmul(ad.factors_a[i], ad.factors_b[j]);
        auto pin = ad;
        pin.mode = AdapterMode::PerInstanceLora;
        for (std::size_t row = 0; row < m; ++row) {
            TeamVectors<double> g;
            for (std::size_t k = 0; k < t; ++k) g.push_back(Vec(m));
            g[i][row] = 1.0;
            auto grads = backward(ad, x, g, mask);
            for (std::size_t col = 0; col < n; ++col)
                worst = std::max(worst, std::abs(grads.x[j][col] - expected(row, col)));
            auto pgrads = backward(pin, x, g, mask);
            for (std::size_t col = 0; col < n; ++col)
                per_instance_zero &= pgrads.x[j][col] == 0.0;
        }
    }
    std::ostringstream os;
    os << "cross-teammate jacobian equals A_i B_j (max |diff| = " << worst
       << " <= 1e-10) and is exactly zero per-instance";
    detail = os.str();
    return worst <= 1e-10 && per_instance_zero;
}

bool criterion5(std::string& detail) {
    Rng rng(1005);
    bool ok = true;
    for (int iter = 0; iter < 50 && ok; ++iter) {
        const std::size_t m = 2 + rng.uniform_int(8);
        const std::size_t n = 2 + rng.uniform_int(8);
        const std::size_t r = 1 + rng.uniform_int(3);
        const std::size_t t = 2 + rng.uniform_int(5);
        auto ad = random_adapter(m, n, r, t, rng);
        auto mask = random_mask(t, rng, /*strict_subset=*/true);
        const std::size_t a = mask.active_count();
        auto x = random_team(a, n, rng);
        auto g = random_team(a, m, rng);
        auto sub = restricted(ad, mask);
        auto full = ActivationMask::all(a);

        auto y1 = forward_unmaterialized(ad, x, mask);
        auto y2 = forward_unmaterialized(sub, x, full);
        for (std::size_t k = 0; k < a; ++k) ok &= bitwise_equal(y1[k], y2[k]);
        auto g1 = backward(ad, x, g, mask);
        auto g2 = backward(sub, x, g, full);
        for (std::size_t k = 0; k < a; ++k) {
            ok &= bitwise_equal(g1.a[k], g2.a[k]);
            ok &= bitwise_equal(g1.b[k], g2.b[k]);
            ok &= bitwise_equal(g1.x[k], g2.x[k]);
        }
    }
    detail = "masked forward/backward equals the from-scratch restricted adapter exactly, "
             "50 random strict subsets";
    return ok;
}

bool criterion6(std::string& detail) {
    Rng rng(1006);
    bool exact = true;
    for (int iter = 0; iter < 20; ++iter) {
        CostDims d;
        d.m = 1 + rng.uniform_int(32);
        d.n = 1 + rng.uniform_int(32);
        d.r = 1 + rng.uniform_int(8);
        const std::size_t t = 1 + rng.uniform_int(8);
        Rng mrng = rng.split(iter);
        exact &= measure_cost(CostScheme::TeamworkUnmat, t, d, mrng) ==
                 t * (d.m * d.n + d.r * (d.m + d.n));
        exact &= measure_cost(CostScheme::TeamworkMat, t, d, mrng) == t * t * d.m * d.n;
        exact &= measure_cost(CostScheme::PerInstanceLora, t, d, mrng) ==
                 t * (d.m * d.n + d.r * (d.m + d.n));
    }

    CostDims dims;
    dims.m = 32;
    dims.n = 32;
    dims.r = 4;
    dims.tokens = 64;
    dims.dim = 32;
    dims.heads = 4;
    auto sweep = scaling_sweep({1, 2, 4, 8, 16}, dims, all_cost_schemes(), 1006);
    const double s_unmat = sweep.slopes[CostScheme::TeamworkUnmat];
    const double s_pi = sweep.slopes[CostScheme::PerInstanceLora];
    const double s_self = sweep.slopes[CostScheme::SelfAttention];
    const double s_mat = sweep.slopes[CostScheme::TeamworkMat];
    const double s_joint = sweep.slopes[CostScheme::JointAttention];
    const bool linear_ok = std::abs(s_unmat - 1.0) <= 0.1 && std::abs(s_pi - 1.0) <= 0.1 &&
                           std::abs(s_self - 1.0) <= 0.1;
    const bool quad_ok = std::abs(s_mat - 2.0) <= 0.1 && std::abs(s_joint - 2.0) <= 0.1;

    std::ostringstream os;
    os << "cost law: measured MACs equal closed forms with zero tolerance; slopes unmat/pi/self = "
       << s_unmat << "/" << s_pi << "/" << s_self << " in [0.9,1.1], mat/joint = " << s_mat << "/"
       << s_joint << " in [1.9,2.1]";
    detail = os.str();
    return exact && linear_ok && quad_ok;
}

ToyGeometry probe_geometry() {
    ToyGeometry g;
    g.height = 8;
    g.width = 8;
    g.patch = 2;
    g.model_dim = 8;
    g.hidden_dim = 12;
    g.heads = 2;
    return g;
}

bool criterion7(std::string& detail) {
    ToyGeometry g = probe_geometry();
    Rng rng(1007);
    auto net = DenoiserNet<double>::random_base(g, rng);
    net.attach_adapters(2, 2, rng, AdapterMode::Teamwork);
    for (auto& layer : net.layers) {
        for (auto& a : layer.factors_a) gaussian_fill(a, rng, 0.3);
        for (auto& b : layer.factors_b) gaussian_fill(b, rng, 0.3);
    }

    TeamSample<double> sample;
    sample.planes.push_back(random_noise_plane<double>(3, g.height, g.width, rng));
    sample.planes.push_back(random_noise_plane<double>(3, g.height, g.width, rng));
    sample.roles = {Role::InputTeammate, Role::OutputTeammate};
    std::vector<Image<double>> noise = {random_noise_plane<double>(3, g.height, g.width, rng)};
    auto mask = ActivationMask::all(2);

    // (a) loss gradient on input-teammate output slots is identically zero
    auto batch = make_flow_batch(sample, 0.4, noise, mask);
    std::vector<Image<double>> pred = {random_noise_plane<double>(3, g.height, g.width, rng),
                                       random_noise_plane<double>(3, g.height, g.width, rng)};
    std::vector<Image<double>> upstream;
    const double base_loss = velocity_mse(pred, batch, &upstream);
    bool zero_ok = true;
    for (double v : upstream[0].data) zero_ok &= v == 0.0;
    auto perturbed = pred;
    for (auto& v : perturbed[0].data) v += 2.0;
    zero_ok &= velocity_mse(perturbed, batch) == base_loss;

    // (b) input-teammate adapter factors still receive gradient
    std::vector<std::vector<Mat>> grad_a(kNetLayerCount), grad_b(kNetLayerCount);
    for (std::size_t l = 0; l < kNetLayerCount; ++l)
        for (std::size_t k = 0; k < 2; ++k) {
            grad_a[l].emplace_back(net.layers[l].factors_a[k].rows,
                                   net.layers[l].factors_a[k].cols);
            grad_b[l].emplace_back(net.layers[l].factors_b[k].rows,
                                   net.layers[l].factors_b[k].cols);
        }
    NetGradSinks<double> sinks;
    sinks.factors_a = &grad_a;
    sinks.factors_b = &grad_b;
    flow_loss_and_gradients(net, sample, 0.4, noise, mask, sinks);
    double input_norm = 0;
    for (std::size_t l = 0; l < kNetLayerCount; ++l)
        input_norm += max_abs(grad_a[l][0]) + max_abs(grad_b[l][0]);
    const bool reach_ok = input_norm > 0;

    // (c) sampler passes clean inputs at every step
    std::size_t steps_seen = 0;
    bool clean_ok = true;
    std::function<void(std::size_t, double, const std::vector<Image<double>>&,
                       const std::vector<Role>&)>
        observer = [&](std::size_t, double, const std::vector<Image<double>>& state,
                       const std::vector<Role>& roles) {
            ++steps_seen;
            for (std::size_t s = 0; s < state.size(); ++s)
                if (roles[s] == Role::InputTeammate)
                    clean_ok &= std::memcmp(state[s].data.data(), sample.planes[0].data.data(),
                                            state[s].size() * sizeof(double)) == 0;
        };
    std::vector<Role> roles = {Role::InputTeammate, Role::OutputTeammate};
    Rng srng(3);
    sample_team(net, roles, mask, {sample.planes[0]}, NoiseSchedule::uniform(8), srng, &observer);
    clean_ok &= steps_seen == 8;

    detail = "input-teammate contract: zero loss gradient on input slots, nonzero factor "
             "gradients, clean inputs at all 8 sampler steps";
    return zero_ok && reach_ok && clean_ok;
}

bool criterion9(std::string& detail) {
    ToyGeometry g = probe_geometry();
    auto raw = generate_decomposition(Rng(97), 6, g.height, g.width, SynthSpec{}, 1);
    Dataset<double> data;
    data.meta.task = "decompose";
    data.meta.teammates = topology_for_task("decompose");
    for (const auto& r : raw) {
        TeamSample<double> s;
        s.planes = {encode_plane<double>(r.image), encode_plane<double>(r.albedo),
                    encode_plane<double>(r.shading)};
        s.roles = {Role::InputTeammate, Role::OutputTeammate, Role::OutputTeammate};
        data.samples.push_back(std::move(s));
        data.truth.push_back({r.image, r.albedo, r.shading});
    }

    auto run = [&]() {
        Rng rng(41);
        auto net = DenoiserNet<double>::random_base(g, rng);
        std::vector<Mat> frozen_before;
        for (const auto& l : net.layers) frozen_before.push_back(l.frozen);
        net.attach_adapters(3, 2, rng, AdapterMode::Teamwork);
        TrainOptions opts;
        opts.steps = 5;
        opts.accumulation = 3;
        Rng trng(42);
        auto log = train_adapter(net, data, opts, trng);
        std::ostringstream ckpt;
        write_checkpoint(ckpt, net.layers);
        bool frozen_ok = true;
        for (std::size_t l = 0; l < kNetLayerCount; ++l)
            frozen_ok &= bitwise_equal(net.layers[l].frozen, frozen_before[l]);
        return std::make_tuple(log.to_text(), ckpt.str(), frozen_ok);
    };

    auto [log1, ckpt1, frozen1] = run();
    auto [log2, ckpt2, frozen2] = run();
    const bool determinism_ok = log1 == log2 && ckpt1 == ckpt2;

    std::istringstream in(ckpt1);
    auto loaded = read_checkpoint<double>(in);
    std::ostringstream out;
    write_checkpoint(out, loaded);
    const bool roundtrip_ok = out.str() == ckpt1;

    detail = "determinism and persistence: same seed gives identical logs and bit-identical "
             "checkpoints; round-trip bit-exact; frozen W untouched by training";
    return determinism_ok && roundtrip_ok && frozen1 && frozen2;
}

// ---------------------------------------------------------------------------
// Criteria 8 and 10: the desk-scale coordination experiment.

struct ArmResult {
    double recomp_full = 0;
    double recomp_isolated = 0;
};

struct SeedResult {
    ArmResult teamwork, per_instance, dropout;
};

Dataset<double> build_dataset(std::uint64_t seed, std::size_t count) {
    auto raw = generate_decomposition(Rng(seed), count, 16, 16, SynthSpec{}, 2);
    Dataset<double> ds;
    ds.meta.task = "decompose";
    ds.meta.teammates = topology_for_task("decompose");
    ds.meta.height = 16;
    ds.meta.width = 16;
    ds.meta.count = count;
    for (const auto& r : raw) {
        TeamSample<double> s;
        s.planes = {encode_plane<double>(r.image), encode_plane<double>(r.albedo),
                    encode_plane<double>(r.shading)};
        s.roles = {Role::InputTeammate, Role::OutputTeammate, Role::OutputTeammate};
        ds.samples.push_back(std::move(s));
        ds.truth.push_back({r.image, r.albedo, r.shading});
    }
    return ds;
}

SeedResult run_experiment_seed(std::uint64_t seed) {
    ToyGeometry g;
    g.height = 16;
    g.width = 16;
    g.patch = 2;
    g.model_dim = 32;
    g.hidden_dim = 64;
    g.heads = 4;

    auto train_ds = build_dataset(1000 + seed, 1000);  // 1k training samples
    auto eval_ds = build_dataset(9000 + seed, 48);

    PretrainOptions popts;
    popts.steps = 400;
    popts.accumulation = 8;
    Rng prng(seed * 31 + 7);
    auto base = pretrain_base(pretraining_pool(train_ds), g, popts, prng);

    auto run_arm = [&](AdapterMode mode, double dropout) {
        DenoiserNet<double> net = base;
        Rng arng(seed * 97 + 13);
        net.attach_adapters(3, 8, arng, mode);
        TrainOptions topts;
        topts.steps = 1000;  // 1k optimizer steps
        topts.accumulation = 8;
        topts.lr = 1e-3;
        topts.mask_policy = dropout > 0 ? MaskPolicy::Dropout : MaskPolicy::Full;
        topts.dropout_prob = dropout;
        Rng trng(seed * 131 + 17);
        train_adapter(net, train_ds, topts, trng);

        EvalOptions eopts;
        eopts.samples = 48;
        eopts.euler_steps = 16;
        eopts.seed = seed * 7 + 3;
        eopts.threads = 2;
        ArmResult arm;
        arm.recomp_full = evaluate_masked(net, eval_ds, ActivationMask::all(3), eopts)
                              .recomposition;
        arm.recomp_isolated = evaluate_isolated(net, eval_ds, eopts).recomposition;
        return arm;
    };

    SeedResult result;
    result.teamwork = run_arm(AdapterMode::Teamwork, 0.0);
    result.per_instance = run_arm(AdapterMode::PerInstanceLora, 0.0);
    result.dropout = run_arm(AdapterMode::Teamwork, 0.2);  // the reported drop-out rate
    return result;
}

double median3(double a, double b, double c) {
    return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

}  // namespace

int main() {
    std::printf("teamwork acceptance suite\n");
    // random probe configurations intentionally include ranks at or above
    // min(m, n); silence the resulting advisory warnings
    warn_handler() = [](const std::string&) {};
    const auto suite_start = Clock::now();

    run_criterion(1, "materialization equivalence", [](std::string& d) {
        const auto t0 = Clock::now();
        const bool ok = criterion1(d);
        return ok && std::chrono::duration<double>(Clock::now() - t0).count() < 10.0;
    });
    run_criterion(2, "LoRA degeneration", criterion2);
    run_criterion(3, "gradient correctness", [](std::string& d) {
        const auto t0 = Clock::now();
        const bool ok = criterion3(d);
        return ok && std::chrono::duration<double>(Clock::now() - t0).count() < 30.0;
    });
    run_criterion(4, "coordination structure", criterion4);
    run_criterion(5, "mask-subset equivalence", criterion5);
    run_criterion(6, "cost law", [](std::string& d) {
        const auto t0 = Clock::now();
        const bool ok = criterion6(d);
        return ok && std::chrono::duration<double>(Clock::now() - t0).count() < 60.0;
    });
    run_criterion(7, "input-teammate contract", criterion7);
    run_criterion(9, "determinism and persistence", criterion9);

    // Criteria 8 and 10 share the three-seed experiment.
    const auto exp_start = Clock::now();
    std::vector<SeedResult> seeds;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        seeds.push_back(run_experiment_seed(seed));
        const auto& r = seeds.back();
        std::printf("  seed %llu: teamwork full/iso = %.4f/%.4f, per-instance full = %.4f, "
                    "dropout full/iso = %.4f/%.4f\n",
                    static_cast<unsigned long long>(seed), r.teamwork.recomp_full,
                    r.teamwork.recomp_isolated, r.per_instance.recomp_full,
                    r.dropout.recomp_full, r.dropout.recomp_isolated);
        std::fflush(stdout);
    }
    const double exp_seconds = std::chrono::duration<double>(Clock::now() - exp_start).count();

    const double tw_full = median3(seeds[0].teamwork.recomp_full, seeds[1].teamwork.recomp_full,
                                   seeds[2].teamwork.recomp_full);
    const double tw_iso =
        median3(seeds[0].teamwork.recomp_isolated, seeds[1].teamwork.recomp_isolated,
                seeds[2].teamwork.recomp_isolated);
    const double pi_full =
        median3(seeds[0].per_instance.recomp_full, seeds[1].per_instance.recomp_full,
                seeds[2].per_instance.recomp_full);
    const double gap_plain = median3(
        seeds[0].teamwork.recomp_isolated - seeds[0].teamwork.recomp_full,
        seeds[1].teamwork.recomp_isolated - seeds[1].teamwork.recomp_full,
        seeds[2].teamwork.recomp_isolated - seeds[2].teamwork.recomp_full);
    const double gap_dropout = median3(
        seeds[0].dropout.recomp_isolated - seeds[0].dropout.recomp_full,
        seeds[1].dropout.recomp_isolated - seeds[1].dropout.recomp_full,
        seeds[2].dropout.recomp_isolated - seeds[2].dropout.recomp_full);

    {
        std::ostringstream os;
        os << "coordination benefit (16x16, 1k samples, 1k steps, 3 seeds): median recomposition "
           << "teamwork = " << tw_full << " < per-instance = " << pi_full
           << "; full <= isolated (" << tw_full << " <= " << tw_iso << "); runtime " << exp_seconds
           << "s < 1800s";
        report(8, tw_full < pi_full && tw_full <= tw_iso && exp_seconds < 1800.0, os.str(),
               exp_seconds);
    }
    {
        std::ostringstream os;
        os << "dropout-mask training: median full-vs-isolated gap with 20% dropout = "
           << gap_dropout << " < without = " << gap_plain;
        report(10, gap_dropout < gap_plain, os.str(), 0.0);
    }

    const double total = std::chrono::duration<double>(Clock::now() - suite_start).count();
    std::printf("%d of 10 criteria passed in %.1fs\n", 10 - g_failures, total);
    return g_failures;
}
