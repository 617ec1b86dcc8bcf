#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "sparselab/rng.hpp"

using namespace sparselab;

namespace {

// Reference splitmix64 transcribed from the published algorithm, kept
// separate from the library so the two cannot drift together.
std::uint64_t reference_splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace

TEST_CASE("generator matches the reference splitmix64 sequence") {
    for (std::uint64_t seed : {0ull, 1ull, 1234567ull, 0xdeadbeefull}) {
        Rng rng(seed);
        std::uint64_t ref_state = seed;
        for (int i = 0; i < 100; ++i) {
            CHECK(rng.next_u64() == reference_splitmix64(ref_state));
        }
    }
    // Published test vectors, seed 1234567.
    Rng rng(1234567);
    CHECK(rng.next_u64() == 0x599ed017fb08fc85ull);
    CHECK(rng.next_u64() == 0x2c73f08458540fa5ull);
    CHECK(rng.next_u64() == 0x883ebce5a3f27c77ull);
}

TEST_CASE("stable_hash is fnv-1a with the published vectors") {
    CHECK(stable_hash("") == 0xcbf29ce484222325ull);
    CHECK(stable_hash("a") == 0xaf63dc4c8601ec8cull);
    CHECK(stable_hash("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("next_double lies in [0,1) and looks uniform") {
    Rng rng(42);
    double sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double x = rng.next_double();
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
        sum += x;
    }
    CHECK(std::abs(sum / 10000.0 - 0.5) < 0.02);
}

TEST_CASE("next_below stays under the bound and covers it") {
    Rng rng(7);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        const auto x = rng.next_below(10);
        REQUIRE(x < 10);
        seen.insert(x);
    }
    CHECK(seen.size() == 10);
    CHECK_THROWS(rng.next_below(0));
}

TEST_CASE("next_normal has unit moments") {
    Rng rng(99);
    const int n = 20000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.next_normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.03);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("named streams are independent and reproducible") {
    RngStreams a(123), b(123);
    CHECK(a.stream("init").next_u64() == b.stream("init").next_u64());

    // Drawing from one stream never moves another.
    RngStreams c(123);
    c.stream("shuffle").next_u64();
    c.stream("shuffle").next_u64();
    RngStreams d(123);
    CHECK(c.stream("init").next_u64() == d.stream("init").next_u64());

    // Distinct names and distinct roots give distinct sequences.
    RngStreams e(124);
    CHECK(a.stream("regen").next_u64() != a.stream("init").next_u64());
    CHECK(e.stream("init").next_u64() != b.stream("init").next_u64());
}

TEST_CASE("snapshot and restore replay the stream exactly") {
    RngStreams s(5);
    s.stream("init").next_u64();
    s.stream("shuffle").next_double();
    const auto snap = s.snapshot();
    const auto a1 = s.stream("init").next_u64();
    const auto a2 = s.stream("shuffle").next_u64();

    RngStreams t;
    t.restore(5, snap);
    CHECK(t.root_seed() == 5);
    CHECK(t.stream("init").next_u64() == a1);
    CHECK(t.stream("shuffle").next_u64() == a2);
}

TEST_CASE("shuffled_indices is a deterministic permutation") {
    Rng a(11), b(11);
    const auto p1 = shuffled_indices(100, a);
    const auto p2 = shuffled_indices(100, b);
    CHECK(p1 == p2);

    auto sorted = p1;
    std::sort(sorted.begin(), sorted.end());
    for (std::int64_t i = 0; i < 100; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);

    Rng c(12);
    CHECK(shuffled_indices(100, c) != p1);
    Rng d(1);
    CHECK(shuffled_indices(0, d).empty());
    CHECK(shuffled_indices(1, d) == std::vector<std::int64_t>{0});
}
