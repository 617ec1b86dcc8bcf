#pragma once

#include <cstdint>
#include <vector>

#include "sparselab/network.hpp"

namespace sparselab {

struct SgdHparams {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

// Momentum buffers parallel to net.params / net.biases.
struct SgdState {
    std::vector<std::vector<double>> weight_velocity;
    std::vector<std::vector<double>> bias_velocity;

    static SgdState make(const Network& net);

    // Invariant after any mask change: velocity is zero wherever mask is zero.
    void zero_velocity_at_masked(const Network& net);
};

// v <- momentum * v + (g + wd * w); w <- w - lr * v.
// Masked weight positions are skipped entirely and their velocity pinned
// to zero, so masked weights stay exactly zero.
void sgd_step(Network& net, SgdState& state, const SgdHparams& hp);

// Piecewise-constant schedule: base_lr scaled by factor once per passed
// drop epoch. drop_epochs must be strictly increasing.
struct StepLrSchedule {
    double base_lr = 0.1;
    double factor = 0.1;
    std::vector<std::int64_t> drop_epochs;

    void validate() const;
    double lr_at_epoch(std::int64_t epoch) const;
};

}  // namespace sparselab
