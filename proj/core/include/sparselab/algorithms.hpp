#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparselab/data.hpp"
#include "sparselab/masks.hpp"
#include "sparselab/network.hpp"
#include "sparselab/optimizer.hpp"
#include "sparselab/schedules.hpp"

namespace sparselab {

struct Checkpoint;

enum class AlgoKind { granet, gmp, rigl, set, static_sparse, dense };
std::string algo_kind_name(AlgoKind kind);
AlgoKind algo_kind_from_name(const std::string& name);

struct AlgorithmSpec {
    AlgoKind kind = AlgoKind::dense;
    SparsityPlan init_plan;        // initial mask layout; granet dense-to-sparse uses s_i = 0
    PruneSchedule prune_schedule;  // granet/gmp only
    RegenSchedule regen_schedule;  // granet drop/regrow ratio; rigl/set reuse it, and its
                                   // t_end (when nonzero) also ends topology updates
    PruneScope scope = PruneScope::global;
    bool structured = false;       // whole-filter ops; requires all-conv prunable layers
    std::int64_t dst_update_interval = 100;  // rigl/set
    bool gmp_keep_values = false;  // mask-only pruning, pruned values can re-enter
    bool protect_first_last = false;  // exempt the first and last weight layers from pruning

    bool has_prune_schedule() const { return kind == AlgoKind::granet || kind == AlgoKind::gmp; }
    bool is_dst() const { return kind == AlgoKind::rigl || kind == AlgoKind::set; }
    void validate(const Network& net) const;
};

struct TrainSettings {
    std::int64_t epochs = 160;
    std::int64_t batch_size = 128;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    StepLrSchedule lr;
    std::int64_t eval_batch_size = 256;
    std::vector<std::int64_t> checkpoint_epochs;  // snapshot after these epochs finish
    double divergence_loss = 1e4;  // abort when a step loss exceeds this or goes non-finite
};

struct MetricPoint {
    std::int64_t step = 0;
    std::int64_t epoch = 0;
    std::string split;   // "train" / "test" / "run"
    std::string metric;  // "accuracy", "loss", "lr", ...
    double value = 0.0;
};

struct RunRecord {
    std::string algorithm;
    std::uint64_t seed = 0;
    std::int64_t epochs = 0;
    std::int64_t steps_per_epoch = 0;
    std::int64_t batch_size = 0;

    std::vector<double> step_loss;  // one entry per optimizer step
    std::vector<MetricPoint> metrics;
    std::vector<PruneEvent> events;

    // Prunable-layer geometry, fixed for the whole run.
    std::vector<std::string> layer_ids;
    std::vector<std::int64_t> layer_numel;
    std::vector<std::int64_t> initial_nnz;
    std::vector<std::int64_t> final_nnz;

    // Full parameter snapshots; initial_* feed the rewinding retrainers.
    std::vector<std::vector<double>> initial_weights, initial_biases;
    std::vector<std::vector<double>> final_weights, final_biases;
    std::vector<std::vector<std::uint8_t>> final_masks;

    double final_train_accuracy = 0.0;
    double final_test_accuracy = 0.0;
    std::uint64_t final_mask_digest = 0;
    std::uint64_t final_weight_digest = 0;

    bool aborted = false;
    std::string abort_reason;

    std::int64_t total_steps() const { return epochs * steps_per_epoch; }
    double global_density_after(std::size_t event_index) const;
    double initial_global_density() const;
};

std::uint64_t digest_bytes(const void* data, std::size_t size, std::uint64_t h = 1469598103934665603ull);

// The shared training loop. Policies differ only in what happens at the
// event hook after each optimizer step:
//   granet       prune to the cubic schedule, then per-layer drop/regrow
//   gmp          prune to the cubic schedule only
//   rigl / set   fixed-sparsity drop/regrow every dst_update_interval steps
//   static/dense no events
// When `resume` is given, training continues from its stored state and the
// returned record extends the one inside it. Checkpoints are appended to
// `sink` after each epoch listed in settings.checkpoint_epochs, and on
// divergence abort.
RunRecord train_run(Network& net, const Dataset& train, const Dataset& test,
                    const AlgorithmSpec& algo, const TrainSettings& settings, std::uint64_t seed,
                    const Checkpoint* resume = nullptr, std::vector<Checkpoint>* sink = nullptr);

// Fresh random weights on the run's final masks, masks frozen, full rerun.
RunRecord reinit_ablation(const RunRecord& base, const std::vector<LayerSpec>& layers,
                          const Shape& input, const Dataset& train, const Dataset& test,
                          const TrainSettings& settings, std::uint64_t seed2);

enum class RewindMode { lth_weights, lr_rewind };
std::string rewind_mode_name(RewindMode mode);
RewindMode rewind_mode_from_name(const std::string& name);

// lth_weights: step-0 weights at surviving positions, mask frozen, full LR
// schedule rerun. lr_rewind: keep final weights, mask frozen, rerun the LR
// schedule from epoch 0.
RunRecord rewind_retrain(const RunRecord& base, RewindMode mode, const std::vector<LayerSpec>& layers,
                         const Shape& input, const Dataset& train, const Dataset& test,
                         const TrainSettings& settings, std::uint64_t seed);

// Fixed-order batched accuracy on a dataset.
double evaluate_accuracy(const Network& net, const Dataset& ds, std::int64_t batch_size);

}  // namespace sparselab
