#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sparselab {

/// Deterministic counter-style generator (splitmix64). State is a single
/// 64-bit word, which keeps checkpointing trivial and makes every stream
/// replayable from (root seed, stream name) alone.
class Rng {
public:
    Rng() = default;
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1), 53-bit resolution.
    double next_double();

    /// Uniform integer in [0, bound) without modulo bias.
    std::uint64_t next_below(std::uint64_t bound);

    /// Standard normal via Box-Muller. No cached spare, so the draw count
    /// per call is fixed and the stream stays position-independent.
    double next_normal();

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_ = 0x9e3779b97f4a7c15ull;
};

/// Stable 64-bit hash (FNV-1a) used to derive stream seeds from names.
std::uint64_t stable_hash(std::string_view text);

/// Derives the seed of a named stream from a root seed. Distinct names give
/// statistically independent streams; the mapping never changes between
/// versions, so toggling one feature cannot perturb another stream.
std::uint64_t derive_stream_seed(std::uint64_t root_seed, std::string_view name);

/// The named RNG streams owned by one run. Streams are created lazily and
/// each advances independently.
class RngStreams {
public:
    RngStreams() = default;
    explicit RngStreams(std::uint64_t root_seed) : root_seed_(root_seed) {}

    std::uint64_t root_seed() const { return root_seed_; }
    Rng& stream(const std::string& name);
    bool has_stream(const std::string& name) const;

    struct Entry {
        std::string name;
        std::uint64_t state;
    };
    std::vector<Entry> snapshot() const;
    void restore(std::uint64_t root_seed, const std::vector<Entry>& entries);

private:
    std::uint64_t root_seed_ = 0;
    std::vector<std::pair<std::string, Rng>> streams_;
};

/// Fisher-Yates permutation of [0, n) driven by the given stream.
std::vector<std::int64_t> shuffled_indices(std::int64_t n, Rng& rng);

}  // namespace sparselab
