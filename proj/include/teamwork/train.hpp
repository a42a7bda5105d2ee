#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "teamwork/common.hpp"
#include "teamwork/denoiser.hpp"
#include "teamwork/flow.hpp"
#include "teamwork/synth.hpp"

namespace teamwork {

// First/second-moment optimizer with bias correction, applied to whatever
// parameter list the caller enumerates.
template <typename T>
struct Adam {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.99, eps = 1e-8;
    long steps_taken = 0;
    std::vector<DenseMatrix<T>> moment1, moment2;

    void init_like(const std::vector<DenseMatrix<T>*>& params) {
        moment1.clear();
        moment2.clear();
        for (const auto* p : params) {
            moment1.emplace_back(p->rows, p->cols);
            moment2.emplace_back(p->rows, p->cols);
        }
    }

    void step(const std::vector<DenseMatrix<T>*>& params,
              const std::vector<const DenseMatrix<T>*>& grads) {
        if (params.size() != grads.size() || params.size() != moment1.size())
            throw ShapeError("adam: parameter/gradient list mismatch");
        ++steps_taken;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps_taken));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps_taken));
        for (std::size_t p = 0; p < params.size(); ++p) {
            DenseMatrix<T>& w = *params[p];
            const DenseMatrix<T>& g = *grads[p];
            DenseMatrix<T>& m = moment1[p];
            DenseMatrix<T>& v = moment2[p];
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = static_cast<double>(g.data[i]);
                const double mi = beta1 * static_cast<double>(m.data[i]) + (1.0 - beta1) * gi;
                const double vi = beta2 * static_cast<double>(v.data[i]) + (1.0 - beta2) * gi * gi;
                m.data[i] = static_cast<T>(mi);
                v.data[i] = static_cast<T>(vi);
                w.data[i] -= static_cast<T>(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
            }
        }
    }
};

// Line-delimited metrics: one record per optimizer step. wall_ms is zero
// unless timing capture is enabled, keeping default logs byte-identical
// across same-seed runs.
struct MetricRecord {
    std::size_t step = 0;
    double loss = 0;
    std::string mask;
    double wall_ms = 0;
};

struct MetricsLog {
    std::vector<MetricRecord> records;

    std::string to_text() const {
        std::string out = "# step loss mask wall_ms\n";
        char buf[128];
        for (const auto& r : records) {
            std::snprintf(buf, sizeof(buf), "%zu %.12g %s %.3f\n", r.step, r.loss,
                          r.mask.c_str(), r.wall_ms);
            out += buf;
        }
        return out;
    }

    double final_loss() const { return records.empty() ? 0.0 : records.back().loss; }

    std::vector<double> losses() const {
        std::vector<double> l;
        l.reserve(records.size());
        for (const auto& r : records) l.push_back(r.loss);
        return l;
    }
};

enum class MaskPolicy { Full, Dropout };

struct TrainOptions {
    std::size_t steps = 1000;
    std::size_t accumulation = 16;
    double lr = 1e-3;
    MaskPolicy mask_policy = MaskPolicy::Full;
    double dropout_prob = 0.0;
    bool timings = false;
};

// Inputs stay active; each output teammate is independently deactivated with
// probability p, redrawing if the whole output side would drop.
inline ActivationMask draw_training_mask(const std::vector<Role>& roles, MaskPolicy policy,
                                         double p, Rng& rng) {
    ActivationMask mask(roles.size(), true);
    if (policy == MaskPolicy::Full || p <= 0.0) return mask;
    for (;;) {
        bool any_output = false;
        for (std::size_t i = 0; i < roles.size(); ++i) {
            if (roles[i] == Role::InputTeammate) {
                mask.set(i, true);
                continue;
            }
            const bool keep = !rng.bernoulli(p);
            mask.set(i, keep);
            any_output |= keep;
        }
        if (any_output) return mask;
    }
}

namespace detail {

template <typename T>
std::vector<Image<T>> draw_noise_planes(const TeamSample<T>& sample, const ActivationMask& mask,
                                        Rng& rng) {
    std::vector<Image<T>> noise;
    for (std::size_t i = 0; i < sample.planes.size(); ++i)
        if (mask.active(i) && sample.roles[i] == Role::OutputTeammate)
            noise.push_back(random_noise_plane<T>(sample.planes[i].channels,
                                                  sample.planes[i].height,
                                                  sample.planes[i].width, rng));
    return noise;
}

class StopWatch {
  public:
    explicit StopWatch(bool enabled) : enabled_(enabled) {
        if (enabled_) start_ = std::chrono::steady_clock::now();
    }
    double elapsed_ms() const {
        if (!enabled_) return 0.0;
        const auto now = std::chrono::steady_clock::now();
        return std::chrono::duration<double, std::milli>(now - start_).count();
    }

  private:
    bool enabled_;
    std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

// Micro-batch-1 adaptation: every sample is one forward/backward of the team
// layer stack; gradients accumulate over `accumulation` samples per optimizer
// step. Only adapter factors are updated; the frozen base never changes.
template <typename T>
MetricsLog train_adapter(DenoiserNet<T>& net, const Dataset<T>& data, const TrainOptions& opts,
                         Rng& rng) {
    if (opts.accumulation < 1) throw ParamError("train: accumulation must be at least 1");
    if (data.samples.empty()) throw ParamError("train: dataset is empty");
    if (net.team_size() != data.team_size())
        throw ShapeError("train: net team size does not match dataset");

    std::vector<Role> roles;
    for (const auto& tm : data.meta.teammates) roles.push_back(tm.role);

    // gradient buffers per layer and absolute teammate index
    std::vector<std::vector<DenseMatrix<T>>> grad_a(kNetLayerCount), grad_b(kNetLayerCount);
    std::vector<DenseMatrix<T>*> params;
    std::vector<const DenseMatrix<T>*> grads;
    for (std::size_t l = 0; l < kNetLayerCount; ++l) {
        for (std::size_t k = 0; k < net.team_size(); ++k) {
            grad_a[l].emplace_back(net.layers[l].factors_a[k].rows,
                                   net.layers[l].factors_a[k].cols);
            grad_b[l].emplace_back(net.layers[l].factors_b[k].rows,
                                   net.layers[l].factors_b[k].cols);
        }
        if (!net.layer_trainable(l)) continue;
        for (std::size_t k = 0; k < net.team_size(); ++k) {
            params.push_back(&net.layers[l].factors_a[k]);
            grads.push_back(&grad_a[l][k]);
            params.push_back(&net.layers[l].factors_b[k]);
            grads.push_back(&grad_b[l][k]);
        }
    }

    if (params.empty()) throw ParamError("train: net has no trainable adapters");

    Adam<T> adam;
    adam.lr = opts.lr;
    adam.init_like(params);

    NetGradSinks<T> sinks;
    sinks.factors_a = &grad_a;
    sinks.factors_b = &grad_b;

    MetricsLog log;
    for (std::size_t step = 0; step < opts.steps; ++step) {
        detail::StopWatch watch(opts.timings);
        for (auto& per_layer : grad_a)
            for (auto& g : per_layer) g.fill(T(0));
        for (auto& per_layer : grad_b)
            for (auto& g : per_layer) g.fill(T(0));

        double loss_sum = 0;
        std::string mask_bits;
        for (std::size_t micro = 0; micro < opts.accumulation; ++micro) {
            const std::size_t idx = rng.uniform_int(data.samples.size());
            ActivationMask mask =
                draw_training_mask(roles, opts.mask_policy, opts.dropout_prob, rng);
            const double t = rng.uniform_open();
            auto noise = detail::draw_noise_planes(data.samples[idx], mask, rng);
            loss_sum += flow_loss_and_gradients(net, data.samples[idx], t, noise, mask, sinks);
            mask_bits = mask.bits();
        }
        const T inv = static_cast<T>(1.0 / static_cast<double>(opts.accumulation));
        for (auto& per_layer : grad_a)
            for (auto& g : per_layer) scale_inplace(g, inv);
        for (auto& per_layer : grad_b)
            for (auto& g : per_layer) scale_inplace(g, inv);
        adam.step(params, grads);

        log.records.push_back({step, loss_sum / static_cast<double>(opts.accumulation),
                               mask_bits, watch.elapsed_ms()});
    }
    return log;
}

struct PretrainOptions {
    std::size_t steps = 500;
    std::size_t accumulation = 8;
    double lr = 1e-3;
    bool timings = false;
};

// Trains a single-instance denoiser on raw 3-channel images; the resulting
// weights are the frozen base every adapter builds on. With steps = 0 the
// randomly initialized net is returned unchanged.
template <typename T>
DenoiserNet<T> pretrain_base(const std::vector<Image<T>>& images, const ToyGeometry& geom,
                             const PretrainOptions& opts, Rng& rng, MetricsLog* log = nullptr) {
    if (images.empty()) throw ParamError("pretrain: dataset is empty");
    if (opts.accumulation < 1) throw ParamError("pretrain: accumulation must be at least 1");
    DenoiserNet<T> net = DenoiserNet<T>::random_base(geom, rng);

    std::vector<DenseMatrix<T>> grad_w;
    std::vector<DenseMatrix<T>*> params;
    std::vector<const DenseMatrix<T>*> grads;
    for (auto& layer : net.layers) grad_w.emplace_back(layer.frozen.rows, layer.frozen.cols);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        params.push_back(&net.layers[l].frozen);
        grads.push_back(&grad_w[l]);
    }
    Adam<T> adam;
    adam.lr = opts.lr;
    adam.init_like(params);

    NetGradSinks<T> sinks;
    sinks.base = &grad_w;

    const ActivationMask mask = ActivationMask::all(1);
    for (std::size_t step = 0; step < opts.steps; ++step) {
        detail::StopWatch watch(opts.timings);
        for (auto& g : grad_w) g.fill(T(0));
        double loss_sum = 0;
        for (std::size_t micro = 0; micro < opts.accumulation; ++micro) {
            const std::size_t idx = rng.uniform_int(images.size());
            TeamSample<T> sample;
            sample.planes.push_back(images[idx]);
            sample.roles.push_back(Role::OutputTeammate);
            const double t = rng.uniform_open();
            std::vector<Image<T>> noise = {random_noise_plane<T>(
                images[idx].channels, images[idx].height, images[idx].width, rng)};
            loss_sum += flow_loss_and_gradients(net, sample, t, noise, mask, sinks);
        }
        const T inv = static_cast<T>(1.0 / static_cast<double>(opts.accumulation));
        for (auto& g : grad_w) scale_inplace(g, inv);
        adam.step(params, grads);
        if (log)
            log->records.push_back({step, loss_sum / static_cast<double>(opts.accumulation), "1",
                                    watch.elapsed_ms()});
    }
    return net;
}

// Flattens every plane of every sample into a pretraining image pool, so the
// base model sees all plane kinds the teammates will later handle.
template <typename T>
std::vector<Image<T>> pretraining_pool(const Dataset<T>& data) {
    std::vector<Image<T>> pool;
    for (const auto& s : data.samples)
        for (const auto& p : s.planes) pool.push_back(p);
    return pool;
}

}  // namespace teamwork
