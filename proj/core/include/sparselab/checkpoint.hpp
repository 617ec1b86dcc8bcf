#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparselab/algorithms.hpp"
#include "sparselab/network.hpp"
#include "sparselab/optimizer.hpp"
#include "sparselab/rng.hpp"

namespace sparselab {

// Everything needed to continue a run bit-exactly: parameters, masks,
// optimizer state, RNG stream positions, and the record so far.
struct Checkpoint {
    std::uint64_t root_seed = 0;
    std::int64_t next_epoch = 0;
    std::int64_t next_step = 0;
    std::vector<RngStreams::Entry> rng_states;

    // Parallel to net.params / net.biases.
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<std::uint8_t>> masks;
    std::vector<std::uint8_t> prunable_flags;
    std::vector<std::vector<double>> stash;  // empty inner vectors when unused
    std::vector<std::vector<double>> biases;
    std::vector<std::vector<double>> weight_velocity;
    std::vector<std::vector<double>> bias_velocity;

    RunRecord record;
};

Checkpoint capture_checkpoint(const Network& net, const SgdState& opt, const RngStreams& rng,
                              const RunRecord& record, std::int64_t next_epoch,
                              std::int64_t next_step);

void restore_checkpoint(const Checkpoint& ck, Network& net, SgdState& opt, RngStreams& rng);

// Little-endian binary container; load(save(x)) round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sparselab
