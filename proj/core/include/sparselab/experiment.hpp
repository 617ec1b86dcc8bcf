#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sparselab/config.hpp"
#include "sparselab/data.hpp"

namespace sparselab {

// Train/test pair resolved from a dataset config: loaded or generated,
// split, normalized with statistics taken from the training split only,
// and reshaped to the network's input.
struct LoadedData {
    Dataset train;
    Dataset test;
};

LoadedData load_experiment_data(const ExperimentConfig& cfg);

// Runs every seed cell under root/<name>/<algo>_seed<seed>/, resuming from
// the newest checkpoint when one exists and skipping cells that already
// finished. Returns 0 when every cell is complete and healthy.
int run_experiment(const ExperimentConfig& cfg, const std::string& root, int jobs,
                   std::ostream& log);

// Rebuilds summary and per-layer sparsity tables from stored run artifacts.
int report_experiment(const std::string& exp_dir, std::ostream& out);

// Dry run: resolved settings, the prune-event grid with scheduled sparsity
// and regeneration ratio at each event, and a FLOPs estimate. No training.
int validate_experiment(const ExperimentConfig& cfg, std::ostream& out);

// Ensures the base runs exist (training any that are missing), then sweeps
// the probe grid and writes root/<name>/probes.csv.
int probe_experiment(const ExperimentConfig& cfg, const std::string& root, int jobs,
                     std::ostream& log);

}  // namespace sparselab
