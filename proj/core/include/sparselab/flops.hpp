#pragma once

#include <cstdint>
#include <vector>

#include "sparselab/algorithms.hpp"
#include "sparselab/layers.hpp"

namespace sparselab {

// FLOPs = 2 x multiply-adds for weight layers; elementwise layers cost
// 1 FLOP per output element; unstructured sparsity is credited at full
// linear savings.
struct FlopsReport {
    double forward_flops_per_sample = 0.0;  // at the run's final density
    double dense_forward_flops = 0.0;
    double train_flops_total = 0.0;
    double dense_train_flops_total = 0.0;
    double normalized_forward = 1.0;  // vs dense single-sample inference
    double normalized_train = 1.0;    // vs a dense run of the same length
};

struct FlopsOptions {
    // A regeneration event that ranks gradients at masked positions needs a
    // dense backward for that step; charge it (default) or amortize to zero.
    bool charge_dense_regen = true;
};

double layer_forward_flops(const LayerSpec& layer, const Shape& input_sample, double density);

// density_by_layer maps prunable layer ids to densities; absent layers
// count as dense.
double network_forward_flops(const std::vector<LayerSpec>& layers, const Shape& input,
                             const std::vector<std::string>& layer_ids,
                             const std::vector<double>& layer_density);

struct TrajectoryPoint {
    std::int64_t step = -1;  // -1 marks the pre-training state
    double global_density = 1.0;
    std::vector<double> layer_density;  // ordered like RunRecord.layer_ids
};

// One point per prune event, preceded by the initial state.
std::vector<TrajectoryPoint> density_trajectory(const RunRecord& run);

// Integrates 3 x forward x batch over the run's piecewise-constant density
// trajectory; per-step density is the one in effect when that step's
// forward ran (events take effect on the following step).
FlopsReport train_flops(const RunRecord& run, const std::vector<LayerSpec>& layers,
                        const Shape& input, const FlopsOptions& opts = {});

}  // namespace sparselab
