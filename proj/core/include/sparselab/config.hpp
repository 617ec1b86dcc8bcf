#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparselab/algorithms.hpp"
#include "sparselab/layers.hpp"
#include "sparselab/tensor.hpp"

namespace sparselab {

struct DatasetConfig {
    std::string kind = "synthetic";  // synthetic | idx | cifar10
    std::string synthetic_kind = "two_moons";
    std::int64_t n = 1000;
    double noise = 0.1;
    std::uint64_t seed = 12345;  // dataset generation/split seed, fixed across run seeds
    std::string images, labels;            // idx train pair
    std::string test_images, test_labels;  // idx test pair (optional; else split)
    std::string path, test_path;           // cifar10 binary files
    std::int64_t class_count = 10;         // idx only
    double train_fraction = 0.8;           // used when no separate test files
    bool normalize = true;
};

struct NetworkConfig {
    Shape input;
    std::vector<LayerSpec> layers;
};

struct PruneConfig {
    double s_initial = 0.0;
    double s_final = 0.9;
    std::int64_t t0_epoch = 0;
    std::int64_t tf_epoch = 110;
    std::int64_t interval_steps = 1000;
};

struct RegenConfig {
    std::string mode = "cosine";
    double r_initial = 0.5;
    std::int64_t t_end_epoch = -1;  // -1: tf_epoch for granet/gmp, total epochs for rigl/set
};

struct AlgorithmConfig {
    std::string kind = "dense";
    std::string scope = "global";
    bool structured = false;
    std::string init_mode = "dense";
    double init_sparsity = 0.0;
    PruneConfig prune;
    RegenConfig regen;
    std::int64_t dst_update_interval = 100;
    bool gmp_keep_values = false;
    bool protect_first_last = false;
};

struct TrainConfig {
    std::int64_t epochs = 160;
    std::int64_t batch_size = 128;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::vector<std::int64_t> lr_drop_epochs = {80, 120};
    double lr_drop_factor = 0.1;
    std::int64_t eval_batch_size = 256;
    std::vector<std::int64_t> checkpoint_epochs;
    double divergence_loss = 1e4;
};

struct ProbeSweepConfig {
    bool present = false;
    std::vector<std::int64_t> snapshot_epochs;
    std::vector<double> prune_rates = {0.2, 0.5, 0.9, 0.98};
    std::vector<bool> regen_options = {false, true};
    std::int64_t k_epochs = -1;  // -1: ceil(epochs * 30 / 160)
    bool include_final_gap = false;
    std::string scope = "global";
    bool structured = false;
};

// One experiment: a dataset, a network, one algorithm over a list of seeds,
// and an optional probe sweep. Parsing is closed-world; unknown keys are
// rejected with their full path.
struct ExperimentConfig {
    std::string name = "experiment";
    DatasetConfig dataset;
    NetworkConfig network;
    AlgorithmConfig algorithm;
    TrainConfig train;
    std::vector<std::uint64_t> seeds = {1};
    std::string output_dir = "runs";
    ProbeSweepConfig probes;
    bool charge_dense_regen = true;

    static ExperimentConfig parse_file(const std::string& path);
    static ExperimentConfig parse_json(const std::string& text, const std::string& origin);

    // Cross-field checks with exact field paths in every message.
    void validate_semantics() const;
    // Referenced input files must exist before a run starts.
    void check_files() const;

    AlgorithmSpec resolve_algorithm(std::int64_t steps_per_epoch) const;
    TrainSettings resolve_train() const;
    std::int64_t resolved_probe_k() const;

    // Fully-resolved echo of the config, defaults included.
    std::string to_manifest_json() const;
};

}  // namespace sparselab
