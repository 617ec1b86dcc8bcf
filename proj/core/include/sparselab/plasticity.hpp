#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparselab/algorithms.hpp"
#include "sparselab/checkpoint.hpp"

namespace sparselab {

/// One measurement cell: restore the base run at the end of epoch
/// `snapshot_epoch`, one-shot prune a fraction of the active weights by
/// magnitude, optionally regenerate the same count by gradient, then
/// continue training. The base run's checkpoints are never mutated.
struct PlasticityProbe {
    std::int64_t snapshot_epoch = 0;  // state after this epoch finished
    double prune_rate = 0.5;          // fraction of active weights removed
    std::int64_t k = 1;               // continuation epochs at frozen lr
    double frozen_lr = -1.0;          // -1: resolve to the lr in effect at snapshot_epoch
    bool regen = false;
    PruneScope scope = PruneScope::global;
    bool structured = false;  // whole-filter prune/regrow, per layer

    void validate(std::int64_t total_epochs) const;
};

struct ProbeResult {
    double t_pre = 0.0;   // test accuracy at the snapshot, before pruning
    double t_post = 0.0;  // test accuracy after the continuation
    double plasticity = 0.0;  // t_post - t_pre

    bool has_gap = false;
    double t_final_unpruned = 0.0;
    double t_final_pruned = 0.0;
    double gap = 0.0;  // t_final_pruned - t_final_unpruned

    double frozen_lr = 0.0;
    std::int64_t removed_total = 0;
    std::int64_t regenerated_total = 0;
};

// Continues k epochs with the learning rate frozen at its snapshot value
// and reports plasticity = t_post - t_pre. Throws when no checkpoint in
// `series` matches snapshot_epoch; the message lists the epochs available.
ProbeResult run_probe(const std::vector<Checkpoint>& series, const PlasticityProbe& probe,
                      const std::vector<LayerSpec>& layers, const Shape& input,
                      const Dataset& train, const Dataset& test, const TrainSettings& settings,
                      std::uint64_t base_seed);

// Continues on the base run's own learning rate schedule to its final epoch
// and reports gap = t_final_pruned - t_final_unpruned, with the unpruned
// final accuracy taken from `base`. probe.k is ignored here; the window is
// whatever remains of the schedule (possibly empty).
ProbeResult run_final_gap(const std::vector<Checkpoint>& series, const RunRecord& base,
                          const PlasticityProbe& probe, const std::vector<LayerSpec>& layers,
                          const Shape& input, const Dataset& train, const Dataset& test,
                          const TrainSettings& settings, std::uint64_t base_seed);

/// Cartesian sweep grid: snapshot epochs x prune rates x regen options,
/// evaluated over every base run given.
struct SweepGrid {
    std::string arch;                // label written to the csv
    double pretrain_sparsity = 0.0;  // label written to the csv
    std::vector<std::int64_t> snapshot_epochs;
    std::vector<double> prune_rates;
    std::vector<bool> regen_options;
    std::int64_t k = 1;
    bool include_final_gap = false;
    PruneScope scope = PruneScope::global;
    bool structured = false;
};

/// One pre-trained run the sweep probes into. Pointers are borrowed.
struct SweepBase {
    std::uint64_t seed = 0;
    const std::vector<Checkpoint>* series = nullptr;
    const RunRecord* record = nullptr;
};

struct SweepRow {
    std::string arch;
    double pretrain_sparsity = 0.0;
    std::int64_t snapshot_epoch = 0;
    double prune_rate = 0.0;
    bool regen = false;
    std::uint64_t seed = 0;
    double t_pre = 0.0;
    double t_post = 0.0;
    double plasticity = 0.0;
    double gap = 0.0;  // NaN when the grid skips final-gap continuation
    bool failed = false;
    std::string error;
};

// Runs every cell, recording failures per cell and carrying on. Row order
// follows the grid nesting: snapshot, then rate, then regen, then seed.
std::vector<SweepRow> probe_sweep(const SweepGrid& grid, const std::vector<SweepBase>& bases,
                                  const std::vector<LayerSpec>& layers, const Shape& input,
                                  const Dataset& train, const Dataset& test,
                                  const TrainSettings& settings);

// Long-format csv; failed cells leave their numeric fields empty.
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace sparselab
