#pragma once

#include <cstring>
#include <functional>
#include <vector>

#include "teamwork/common.hpp"
#include "teamwork/denoiser.hpp"
#include "teamwork/rng.hpp"
#include "teamwork/synth.hpp"

namespace teamwork {

// Integration grid on [0, 1]; t[0] = 0 (data) and t.back() = 1 (noise).
struct NoiseSchedule {
    std::vector<double> t;

    static NoiseSchedule uniform(std::size_t steps) {
        if (steps == 0) throw ParamError("schedule: need at least one step");
        NoiseSchedule s;
        s.t.resize(steps + 1);
        for (std::size_t i = 0; i <= steps; ++i)
            s.t[i] = static_cast<double>(i) / static_cast<double>(steps);
        s.t[0] = 0.0;
        s.t[steps] = 1.0;
        return s;
    }

    void validate() const {
        if (t.size() < 2 || t.front() != 0.0 || t.back() != 1.0)
            throw ParamError("schedule: grid must start at 0 and end at 1");
        for (std::size_t i = 1; i < t.size(); ++i)
            if (!(t[i] > t[i - 1])) throw ParamError("schedule: grid must be strictly increasing");
    }

    std::size_t steps() const { return t.size() - 1; }
};

template <typename T>
Image<T> random_noise_plane(std::size_t channels, std::size_t h, std::size_t w, Rng& rng) {
    Image<T> p(channels, h, w);
    for (auto& v : p.data) v = static_cast<T>(rng.normal());
    return p;
}

// Net inputs and velocity targets for one flow-matching step. Output slots
// carry the interpolation z_t = (1 - t) x0 + t eps with target eps - x0;
// input slots carry the clean plane at every t and have no target.
template <typename T>
struct FlowBatch {
    std::vector<Image<T>> inputs;   // active-aligned net inputs
    std::vector<Role> roles;        // active-aligned roles
    std::vector<Image<T>> targets;  // one per active output slot, in order
};

template <typename T>
FlowBatch<T> make_flow_batch(const TeamSample<T>& sample, double t,
                             const std::vector<Image<T>>& noise, const ActivationMask& mask) {
    sample.validate();
    if (!(t > 0.0 && t < 1.0)) throw ParamError("flow: t must lie strictly inside (0, 1)");
    if (mask.size() != sample.planes.size())
        throw ShapeError("flow: mask does not match the team sample");
    for (std::size_t i = 0; i < sample.roles.size(); ++i)
        if (sample.roles[i] == Role::InputTeammate && !mask.active(i))
            throw ParamError("flow: input teammates must stay active");

    FlowBatch<T> batch;
    std::size_t noise_used = 0;
    for (std::size_t i = 0; i < sample.planes.size(); ++i) {
        if (!mask.active(i)) continue;
        batch.roles.push_back(sample.roles[i]);
        const Image<T>& x0 = sample.planes[i];
        if (sample.roles[i] == Role::InputTeammate) {
            batch.inputs.push_back(x0);
            continue;
        }
        if (noise_used >= noise.size()) throw ShapeError("flow: missing noise plane");
        const Image<T>& eps = noise[noise_used++];
        if (!eps.same_shape(x0)) throw ShapeError("flow: noise plane shape mismatch");
        Image<T> zt(x0.channels, x0.height, x0.width);
        Image<T> target(x0.channels, x0.height, x0.width);
        for (std::size_t k = 0; k < x0.size(); ++k) {
            zt.data[k] = static_cast<T>((1.0 - t) * x0.data[k] + t * eps.data[k]);
            target.data[k] = eps.data[k] - x0.data[k];
        }
        batch.inputs.push_back(std::move(zt));
        batch.targets.push_back(std::move(target));
    }
    if (noise_used != noise.size()) throw ShapeError("flow: too many noise planes");
    if (batch.targets.empty()) throw ParamError("flow: no active output teammate");
    return batch;
}

// Mean squared error between predicted velocity and target over output slots
// only. Input-teammate slots contribute no loss term, so the gradient on
// their predictions is identically zero.
template <typename T>
double velocity_mse(const std::vector<Image<T>>& pred, const FlowBatch<T>& batch,
                    std::vector<Image<T>>* upstream = nullptr) {
    if (pred.size() != batch.roles.size()) throw ShapeError("loss: prediction count mismatch");
    std::size_t denom = 0;
    for (const auto& tgt : batch.targets) denom += tgt.size();
    double loss = 0;
    if (upstream) upstream->clear();
    std::size_t out_slot = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (batch.roles[k] == Role::InputTeammate) {
            if (upstream)
                upstream->emplace_back(pred[k].channels, pred[k].height, pred[k].width);
            continue;
        }
        const Image<T>& tgt = batch.targets[out_slot++];
        if (!pred[k].same_shape(tgt)) throw ShapeError("loss: prediction shape mismatch");
        Image<T> grad(pred[k].channels, pred[k].height, pred[k].width);
        for (std::size_t i = 0; i < tgt.size(); ++i) {
            const double d = static_cast<double>(pred[k].data[i]) -
                             static_cast<double>(tgt.data[i]);
            loss += d * d;
            grad.data[i] = static_cast<T>(2.0 * d / static_cast<double>(denom));
        }
        if (upstream) upstream->push_back(std::move(grad));
    }
    return loss / static_cast<double>(denom);
}

// Forward-only flow-matching loss for one team sample.
template <typename T>
double flow_matching_loss(const DenoiserNet<T>& net, const TeamSample<T>& sample, double t,
                          const std::vector<Image<T>>& noise, const ActivationMask& mask) {
    FlowBatch<T> batch = make_flow_batch(sample, t, noise, mask);
    auto pred = net_forward(net, batch.inputs, t, mask, static_cast<NetTape<T>*>(nullptr));
    return velocity_mse(pred, batch);
}

// Loss plus gradient accumulation into the provided sinks.
template <typename T>
double flow_loss_and_gradients(const DenoiserNet<T>& net, const TeamSample<T>& sample, double t,
                               const std::vector<Image<T>>& noise, const ActivationMask& mask,
                               NetGradSinks<T> sinks) {
    FlowBatch<T> batch = make_flow_batch(sample, t, noise, mask);
    NetTape<T> tape;
    auto pred = net_forward(net, batch.inputs, t, mask, &tape);
    std::vector<Image<T>> upstream;
    const double loss = velocity_mse(pred, batch, &upstream);
    net_backward(net, tape, upstream, mask, sinks);
    return loss;
}

// Euler sampler from t = 1 (noise) to t = 0 (data). Output slots start from
// unit Gaussian noise; input slots carry the clean conditioning plane at
// every step and their predicted velocities are discarded.
template <typename T>
std::vector<Image<T>> sample_team(
    const DenoiserNet<T>& net, const std::vector<Role>& team_roles, const ActivationMask& mask,
    const std::vector<Image<T>>& input_planes, const NoiseSchedule& sched, Rng& rng,
    const std::function<void(std::size_t, double, const std::vector<Image<T>>&,
                             const std::vector<Role>&)>* observer = nullptr) {
    sched.validate();
    if (team_roles.size() != mask.size()) throw ShapeError("sample: roles do not match mask");
    const ToyGeometry& g = net.geom;

    std::vector<Role> roles;     // active-aligned
    std::vector<Image<T>> state;
    std::size_t inputs_used = 0;
    for (std::size_t i = 0; i < team_roles.size(); ++i) {
        if (!mask.active(i)) continue;
        roles.push_back(team_roles[i]);
        if (team_roles[i] == Role::InputTeammate) {
            if (inputs_used >= input_planes.size())
                throw ParamError("sample: missing plane for an active input teammate");
            state.push_back(input_planes[inputs_used++]);
        } else {
            state.push_back(random_noise_plane<T>(g.channels, g.height, g.width, rng));
        }
    }
    if (inputs_used != input_planes.size()) throw ParamError("sample: surplus input planes");
    bool any_output = false;
    for (Role r : roles) any_output |= r == Role::OutputTeammate;
    if (!any_output) throw ParamError("sample: mask activates no output teammate");

    const std::vector<Image<T>> clean = state;  // for the clean-input contract check

    for (std::size_t k = sched.steps(); k >= 1; --k) {
        const double t_hi = sched.t[k];
        const double dt = sched.t[k] - sched.t[k - 1];
        auto velocity = net_forward(net, state, t_hi, mask, static_cast<NetTape<T>*>(nullptr));
        for (std::size_t s = 0; s < state.size(); ++s) {
            if (roles[s] == Role::InputTeammate) continue;  // prediction discarded
            for (std::size_t i = 0; i < state[s].size(); ++i)
                state[s].data[i] -= static_cast<T>(dt) * velocity[s].data[i];
        }
        for (std::size_t s = 0; s < state.size(); ++s)
            if (roles[s] == Role::InputTeammate &&
                std::memcmp(state[s].data.data(), clean[s].data.data(),
                            state[s].size() * sizeof(T)) != 0)
                throw ContractError("sample: input teammate plane was perturbed");
        if (observer) (*observer)(k, sched.t[k - 1], state, roles);
    }

    std::vector<Image<T>> outputs;
    for (std::size_t s = 0; s < state.size(); ++s)
        if (roles[s] == Role::OutputTeammate) outputs.push_back(std::move(state[s]));
    return outputs;
}

}  // namespace teamwork
