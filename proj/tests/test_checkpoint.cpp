#include <doctest.h>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "sparselab/algorithms.hpp"
#include "sparselab/checkpoint.hpp"
#include "sparselab/data.hpp"

using namespace sparselab;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const auto dir = fs::temp_directory_path() / "sparselab_ckpt_tests";
    fs::create_directories(dir);
    return dir;
}

std::vector<std::uint8_t> file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

void put_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

// A checkpoint with every section populated, produced by a short real run.
Checkpoint make_live_checkpoint() {
    const Dataset data = make_synthetic("two_moons", 48, 0.1, 17);
    const std::vector<LayerSpec> specs = {LayerSpec::affine(2, 8), LayerSpec::relu(),
                                          LayerSpec::affine(8, 2)};
    Network net = Network::build(specs, {2});

    AlgorithmSpec algo;
    algo.kind = AlgoKind::gmp;
    algo.init_plan = {SparseInitMode::dense, 0.0};
    algo.prune_schedule = PruneSchedule{0.0, 0.7, 0, 3, 4};
    algo.gmp_keep_values = true;  // exercises the stash section

    TrainSettings settings;
    settings.epochs = 4;
    settings.batch_size = 16;
    settings.checkpoint_epochs = {2};

    std::vector<Checkpoint> sink;
    const RunRecord rec = train_run(net, data, data, algo, settings, 5, nullptr, &sink);
    REQUIRE_FALSE(rec.aborted);
    REQUIRE(sink.size() == 1);
    return sink[0];
}

}  // namespace

TEST_CASE("checkpoint survives a save/load cycle bit for bit") {
    const Checkpoint ck = make_live_checkpoint();
    const auto p1 = (scratch_dir() / "a.ckpt").string();
    const auto p2 = (scratch_dir() / "b.ckpt").string();
    save_checkpoint(p1, ck);
    const Checkpoint back = load_checkpoint(p1);
    save_checkpoint(p2, back);

    // Re-serializing the loaded checkpoint reproduces the file exactly.
    CHECK(file_bytes(p1) == file_bytes(p2));

    CHECK(back.root_seed == ck.root_seed);
    CHECK(back.next_epoch == ck.next_epoch);
    CHECK(back.next_step == ck.next_step);
    CHECK(back.weights == ck.weights);
    CHECK(back.masks == ck.masks);
    CHECK(back.biases == ck.biases);
    CHECK(back.stash == ck.stash);
    CHECK(back.prunable_flags == ck.prunable_flags);
    CHECK(back.weight_velocity == ck.weight_velocity);
    CHECK(back.bias_velocity == ck.bias_velocity);
    REQUIRE(back.rng_states.size() == ck.rng_states.size());
    for (std::size_t i = 0; i < ck.rng_states.size(); ++i) {
        CHECK(back.rng_states[i].name == ck.rng_states[i].name);
        CHECK(back.rng_states[i].state == ck.rng_states[i].state);
    }
    CHECK(back.record.algorithm == ck.record.algorithm);
    CHECK(back.record.step_loss == ck.record.step_loss);
    CHECK(back.record.metrics.size() == ck.record.metrics.size());
    CHECK(back.record.events.size() == ck.record.events.size());
    CHECK(back.record.layer_ids == ck.record.layer_ids);
}

TEST_CASE("exotic doubles round-trip with their exact bit patterns") {
    Checkpoint ck = make_live_checkpoint();
    auto& w = ck.weights.at(0);
    REQUIRE(w.size() >= 4);
    w[0] = std::numeric_limits<double>::quiet_NaN();
    w[1] = -0.0;
    w[2] = std::numeric_limits<double>::denorm_min();
    w[3] = -std::numeric_limits<double>::infinity();

    const auto path = (scratch_dir() / "exotic.ckpt").string();
    save_checkpoint(path, ck);
    const Checkpoint back = load_checkpoint(path);
    for (int i = 0; i < 4; ++i) {
        CHECK(std::bit_cast<std::uint64_t>(back.weights.at(0)[i]) ==
              std::bit_cast<std::uint64_t>(w[i]));
    }
}

TEST_CASE("corrupt checkpoint files fail loudly with an offset") {
    const Checkpoint ck = make_live_checkpoint();
    const auto path = (scratch_dir() / "victim.ckpt").string();
    save_checkpoint(path, ck);
    const auto good = file_bytes(path);
    REQUIRE(good.size() > 64);

    SUBCASE("wrong magic") {
        auto bad = good;
        bad[0] = 'X';
        put_bytes(path, bad);
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("bad magic"),
                             std::runtime_error);
    }
    SUBCASE("unsupported version") {
        auto bad = good;
        bad[4] = 99;
        put_bytes(path, bad);
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("unsupported version"),
                             std::runtime_error);
    }
    SUBCASE("truncated body names the failing offset") {
        auto bad = good;
        bad.resize(good.size() / 2);
        put_bytes(path, bad);
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("offset"),
                             std::runtime_error);
    }
    SUBCASE("trailing garbage is rejected") {
        auto bad = good;
        bad.push_back(0);
        put_bytes(path, bad);
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("trailing"),
                             std::runtime_error);
    }
    SUBCASE("too short for the header") {
        put_bytes(path, {'S', 'L'});
        CHECK_THROWS(load_checkpoint(path));
    }
}

TEST_CASE("saving goes through a temp file and replaces atomically") {
    const Checkpoint ck = make_live_checkpoint();
    const auto dir = scratch_dir();
    const auto path = (dir / "atomic.ckpt").string();
    save_checkpoint(path, ck);
    save_checkpoint(path, ck);  // overwrite in place

    // No temp droppings left behind.
    for (const auto& entry : fs::directory_iterator(dir)) {
        CHECK(entry.path().string().find(".tmp") == std::string::npos);
    }
    CHECK(load_checkpoint(path).root_seed == ck.root_seed);

    CHECK_THROWS(save_checkpoint((dir / "no_such_subdir" / "x.ckpt").string(), ck));
    CHECK_THROWS(load_checkpoint((dir / "missing.ckpt").string()));
}

TEST_CASE("restore puts a checkpoint back into live objects exactly") {
    const Dataset data = make_synthetic("two_moons", 48, 0.1, 17);
    const std::vector<LayerSpec> specs = {LayerSpec::affine(2, 8), LayerSpec::relu(),
                                          LayerSpec::affine(8, 2)};
    const Checkpoint ck = make_live_checkpoint();

    Network net = Network::build(specs, {2});
    SgdState opt = SgdState::make(net);
    RngStreams rng(ck.root_seed);
    restore_checkpoint(ck, net, opt, rng);

    const Checkpoint again = capture_checkpoint(net, opt, rng, ck.record, ck.next_epoch, ck.next_step);
    CHECK(again.weights == ck.weights);
    CHECK(again.masks == ck.masks);
    CHECK(again.biases == ck.biases);
    CHECK(again.stash == ck.stash);
    CHECK(again.weight_velocity == ck.weight_velocity);
    CHECK(again.bias_velocity == ck.bias_velocity);
    REQUIRE(again.rng_states.size() == ck.rng_states.size());
    for (std::size_t i = 0; i < ck.rng_states.size(); ++i) {
        CHECK(again.rng_states[i].name == ck.rng_states[i].name);
        CHECK(again.rng_states[i].state == ck.rng_states[i].state);
    }

    // Mismatched architecture is rejected.
    Network small = Network::build({LayerSpec::affine(2, 2)}, {2});
    SgdState small_opt = SgdState::make(small);
    RngStreams small_rng(1);
    CHECK_THROWS(restore_checkpoint(ck, small, small_opt, small_rng));
}
