#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "teamwork/denoiser.hpp"
#include "teamwork/flow.hpp"
#include "teamwork/synth.hpp"

namespace teamwork {

struct EvalOptions {
    std::size_t samples = 64;
    std::size_t euler_steps = 20;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

struct EvalMetrics {
    struct PerTeammate {
        std::string name;
        std::array<double, 3> channel_rmse{};
        double rmse = 0;
    };
    std::vector<PerTeammate> teammates;  // evaluated output teammates
    double recomposition = std::numeric_limits<double>::quiet_NaN();
    std::size_t samples = 0;
    std::string mask_bits;
};

namespace detail {

template <typename T>
std::vector<Image<T>> active_input_planes(const TeamSample<T>& sample,
                                          const ActivationMask& mask) {
    std::vector<Image<T>> planes;
    for (std::size_t i = 0; i < sample.planes.size(); ++i)
        if (mask.active(i) && sample.roles[i] == Role::InputTeammate)
            planes.push_back(sample.planes[i]);
    return planes;
}

inline int find_teammate(const DatasetMeta& meta, const std::string& name) {
    for (std::size_t i = 0; i < meta.teammates.size(); ++i)
        if (meta.teammates[i].name == name) return static_cast<int>(i);
    return -1;
}

}  // namespace detail

// Samples the active output teammates jointly under `mask` for the first
// opts.samples dataset entries and reports decoded-range RMSE per teammate,
// plus the albedo x shading recomposition error when both are evaluated.
template <typename T>
EvalMetrics evaluate_masked(const DenoiserNet<T>& net, const Dataset<T>& data,
                            const ActivationMask& mask, const EvalOptions& opts) {
    if (data.samples.empty()) throw ParamError("eval: dataset is empty");
    if (mask.size() != data.team_size()) throw ShapeError("eval: mask does not match dataset");
    const std::size_t count = std::min(opts.samples, data.samples.size());
    if (count == 0) throw ParamError("eval: no samples requested");

    std::vector<Role> roles;
    std::vector<std::size_t> out_idx;  // absolute teammate ids of evaluated outputs
    for (std::size_t i = 0; i < data.team_size(); ++i) {
        roles.push_back(data.meta.teammates[i].role);
        if (mask.active(i) && roles.back() == Role::OutputTeammate) out_idx.push_back(i);
    }
    if (out_idx.empty()) throw ParamError("eval: mask activates no output teammate");

    const NoiseSchedule sched = NoiseSchedule::uniform(opts.euler_steps);
    const int albedo_id = detail::find_teammate(data.meta, "albedo");
    const int shading_id = detail::find_teammate(data.meta, "shading");
    const int image_id = detail::find_teammate(data.meta, "image");
    const bool recompose = albedo_id >= 0 && shading_id >= 0 && image_id >= 0 &&
                           mask.active(static_cast<std::size_t>(albedo_id)) &&
                           mask.active(static_cast<std::size_t>(shading_id)) &&
                           data.meta.teammates[image_id].role == Role::InputTeammate;

    std::vector<std::array<double, 3>> channel_sums(out_idx.size(), {0, 0, 0});
    std::vector<double> rmse_sums(out_idx.size(), 0.0);
    std::vector<double> recomposition_sums(count, 0.0);
    std::vector<std::vector<std::array<double, 3>>> channel_each(
        count, std::vector<std::array<double, 3>>(out_idx.size()));
    std::vector<std::vector<double>> rmse_each(count, std::vector<double>(out_idx.size()));

    Rng root(opts.seed);
    parallel_for(count, opts.threads, [&](std::size_t s) {
        Rng rng = root.split(s);
        auto inputs = detail::active_input_planes(data.samples[s], mask);
        auto outputs = sample_team(net, roles, mask, inputs, sched, rng);
        Plane pred_albedo, pred_shading;
        for (std::size_t k = 0; k < out_idx.size(); ++k) {
            Plane decoded = decode_plane(outputs[k]);
            const Plane& truth = data.truth[s][out_idx[k]];
            channel_each[s][k] = per_channel_rmse(decoded, truth);
            rmse_each[s][k] = plane_rmse(decoded, truth);
            if (recompose && out_idx[k] == static_cast<std::size_t>(albedo_id))
                pred_albedo = decoded;
            if (recompose && out_idx[k] == static_cast<std::size_t>(shading_id))
                pred_shading = decoded;
        }
        if (recompose)
            recomposition_sums[s] =
                recomposition_error(pred_albedo, pred_shading, data.truth[s][image_id]);
    });

    EvalMetrics metrics;
    metrics.samples = count;
    metrics.mask_bits = mask.bits();
    for (std::size_t k = 0; k < out_idx.size(); ++k) {
        for (std::size_t s = 0; s < count; ++s) {
            for (int c = 0; c < 3; ++c) channel_sums[k][c] += channel_each[s][k][c];
            rmse_sums[k] += rmse_each[s][k];
        }
        EvalMetrics::PerTeammate pt;
        pt.name = data.meta.teammates[out_idx[k]].name;
        for (int c = 0; c < 3; ++c) pt.channel_rmse[c] = channel_sums[k][c] / double(count);
        pt.rmse = rmse_sums[k] / double(count);
        metrics.teammates.push_back(pt);
    }
    if (recompose) {
        double total = 0;
        for (double v : recomposition_sums) total += v;
        metrics.recomposition = total / double(count);
    }
    return metrics;
}

// Sequential evaluation: each output teammate is sampled in isolation (only
// the input teammates stay active beside it), then the separately sampled
// planes are combined for the recomposition metric. This disables test-time
// coordination between outputs.
template <typename T>
EvalMetrics evaluate_isolated(const DenoiserNet<T>& net, const Dataset<T>& data,
                              const EvalOptions& opts) {
    if (data.samples.empty()) throw ParamError("eval: dataset is empty");
    const std::size_t count = std::min(opts.samples, data.samples.size());
    if (count == 0) throw ParamError("eval: no samples requested");

    std::vector<Role> roles;
    std::vector<std::size_t> out_idx;
    for (std::size_t i = 0; i < data.team_size(); ++i) {
        roles.push_back(data.meta.teammates[i].role);
        if (roles.back() == Role::OutputTeammate) out_idx.push_back(i);
    }

    const NoiseSchedule sched = NoiseSchedule::uniform(opts.euler_steps);
    const int albedo_id = detail::find_teammate(data.meta, "albedo");
    const int shading_id = detail::find_teammate(data.meta, "shading");
    const int image_id = detail::find_teammate(data.meta, "image");
    const bool recompose = albedo_id >= 0 && shading_id >= 0 && image_id >= 0 &&
                           data.meta.teammates[image_id].role == Role::InputTeammate;

    std::vector<std::vector<std::array<double, 3>>> channel_each(
        count, std::vector<std::array<double, 3>>(out_idx.size()));
    std::vector<std::vector<double>> rmse_each(count, std::vector<double>(out_idx.size()));
    std::vector<double> recomposition_each(count, 0.0);

    Rng root(opts.seed);
    parallel_for(count, opts.threads, [&](std::size_t s) {
        Plane pred_albedo, pred_shading;
        for (std::size_t k = 0; k < out_idx.size(); ++k) {
            ActivationMask mask(data.team_size(), false);
            for (std::size_t i = 0; i < data.team_size(); ++i)
                if (roles[i] == Role::InputTeammate) mask.set(i, true);
            mask.set(out_idx[k], true);
            Rng rng = root.split(s).split(out_idx[k]);
            auto inputs = detail::active_input_planes(data.samples[s], mask);
            auto outputs = sample_team(net, roles, mask, inputs, sched, rng);
            Plane decoded = decode_plane(outputs[0]);
            const Plane& truth = data.truth[s][out_idx[k]];
            channel_each[s][k] = per_channel_rmse(decoded, truth);
            rmse_each[s][k] = plane_rmse(decoded, truth);
            if (recompose && out_idx[k] == static_cast<std::size_t>(albedo_id))
                pred_albedo = decoded;
            if (recompose && out_idx[k] == static_cast<std::size_t>(shading_id))
                pred_shading = decoded;
        }
        if (recompose)
            recomposition_each[s] =
                recomposition_error(pred_albedo, pred_shading, data.truth[s][image_id]);
    });

    EvalMetrics metrics;
    metrics.samples = count;
    metrics.mask_bits = "isolated";
    for (std::size_t k = 0; k < out_idx.size(); ++k) {
        EvalMetrics::PerTeammate pt;
        pt.name = data.meta.teammates[out_idx[k]].name;
        double rsum = 0;
        std::array<double, 3> csum{};
        for (std::size_t s = 0; s < count; ++s) {
            rsum += rmse_each[s][k];
            for (int c = 0; c < 3; ++c) csum[c] += channel_each[s][k][c];
        }
        pt.rmse = rsum / double(count);
        for (int c = 0; c < 3; ++c) pt.channel_rmse[c] = csum[c] / double(count);
        metrics.teammates.push_back(pt);
    }
    if (recompose) {
        double total = 0;
        for (double v : recomposition_each) total += v;
        metrics.recomposition = total / double(count);
    }
    return metrics;
}

// Mean output-teammate RMSE, a scalar summary used by the ablation
// comparisons.
inline double mean_output_rmse(const EvalMetrics& m) {
    double total = 0;
    for (const auto& pt : m.teammates) total += pt.rmse;
    return m.teammates.empty() ? 0.0 : total / static_cast<double>(m.teammates.size());
}

}  // namespace teamwork
