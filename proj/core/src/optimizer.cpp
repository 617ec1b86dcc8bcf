#include "sparselab/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sparselab {

SgdState SgdState::make(const Network& net) {
    SgdState st;
    st.weight_velocity.reserve(net.params.size());
    for (const auto& p : net.params) {
        st.weight_velocity.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
    st.bias_velocity.reserve(net.biases.size());
    for (const auto& b : net.biases) {
        st.bias_velocity.emplace_back(static_cast<std::size_t>(b.numel()), 0.0);
    }
    return st;
}

void SgdState::zero_velocity_at_masked(const Network& net) {
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        const auto& mask = net.params[i].mask;
        auto& v = weight_velocity[i];
        for (std::size_t k = 0; k < v.size(); ++k) {
            if (!mask[k]) v[k] = 0.0;
        }
    }
}

void sgd_step(Network& net, SgdState& state, const SgdHparams& hp) {
    if (state.weight_velocity.size() != net.params.size() ||
        state.bias_velocity.size() != net.biases.size()) {
        throw std::invalid_argument("sgd_step: optimizer state does not match this network");
    }
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        auto& p = net.params[i];
        if (!p.weight.has_grad()) throw std::invalid_argument("sgd_step: missing weight grads for " + p.layer_id);
        auto& v = state.weight_velocity[i];
        for (std::size_t k = 0; k < v.size(); ++k) {
            if (!p.mask[k]) {
                v[k] = 0.0;
                continue;
            }
            const double g = p.weight.grad[k] + hp.weight_decay * p.weight.data[k];
            v[k] = hp.momentum * v[k] + g;
            p.weight.data[k] -= hp.lr * v[k];
        }
    }
    for (std::size_t i = 0; i < net.biases.size(); ++i) {
        auto& b = net.biases[i];
        if (!b.has_grad()) throw std::invalid_argument("sgd_step: missing bias grads");
        auto& v = state.bias_velocity[i];
        for (std::size_t k = 0; k < v.size(); ++k) {
            const double g = b.grad[k] + hp.weight_decay * b.data[k];
            v[k] = hp.momentum * v[k] + g;
            b.data[k] -= hp.lr * v[k];
        }
    }
}

void StepLrSchedule::validate() const {
    if (!(base_lr > 0.0)) throw std::invalid_argument("lr schedule: base_lr must be positive");
    if (!(factor > 0.0)) throw std::invalid_argument("lr schedule: factor must be positive");
    for (std::size_t i = 0; i + 1 < drop_epochs.size(); ++i) {
        if (drop_epochs[i] >= drop_epochs[i + 1]) {
            throw std::invalid_argument("lr schedule: drop epochs must be strictly increasing");
        }
    }
}

double StepLrSchedule::lr_at_epoch(std::int64_t epoch) const {
    double lr = base_lr;
    for (auto d : drop_epochs) {
        if (epoch >= d) lr *= factor;
    }
    return lr;
}

}  // namespace sparselab
