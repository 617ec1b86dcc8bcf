#include "sparselab/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sparselab {

std::uint64_t Rng::next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::next_below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::next_below: bound must be positive");
    const std::uint64_t threshold = -bound % bound;
    for (;;) {
        const std::uint64_t x = next_u64();
        if (x >= threshold) return x % bound;
    }
}

double Rng::next_normal() {
    // Draw u1 from (0,1] so the log is finite.
    double u1 = 1.0 - next_double();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t stable_hash(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t derive_stream_seed(std::uint64_t root_seed, std::string_view name) {
    // Mix the root seed and the name hash through one splitmix step each.
    Rng mixer(root_seed ^ stable_hash(name));
    mixer.next_u64();
    return mixer.next_u64();
}

Rng& RngStreams::stream(const std::string& name) {
    for (auto& [n, rng] : streams_) {
        if (n == name) return rng;
    }
    streams_.emplace_back(name, Rng(derive_stream_seed(root_seed_, name)));
    return streams_.back().second;
}

bool RngStreams::has_stream(const std::string& name) const {
    for (const auto& [n, rng] : streams_) {
        if (n == name) return true;
    }
    return false;
}

std::vector<RngStreams::Entry> RngStreams::snapshot() const {
    std::vector<Entry> out;
    out.reserve(streams_.size());
    for (const auto& [n, rng] : streams_) out.push_back({n, rng.state()});
    return out;
}

void RngStreams::restore(std::uint64_t root_seed, const std::vector<Entry>& entries) {
    root_seed_ = root_seed;
    streams_.clear();
    for (const auto& e : entries) {
        Rng r;
        r.set_state(e.state);
        streams_.emplace_back(e.name, r);
    }
}

std::vector<std::int64_t> shuffled_indices(std::int64_t n, Rng& rng) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(i + 1)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return idx;
}

}  // namespace sparselab
