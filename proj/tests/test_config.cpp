#include <doctest.h>

#include <functional>
#include <stdexcept>
#include <string>

#include "sparselab/config.hpp"

using namespace sparselab;

namespace {

// Smallest config that passes validation.
const char* kMinimal = R"({
  "name": "toy",
  "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]}
})";

const char* kGranet = R"({
  "name": "granet_toy",
  "dataset": {"kind": "synthetic", "synthetic_kind": "two_moons", "n": 256, "noise": 0.1},
  "network": {
    "input": [2],
    "layers": [
      {"kind": "affine", "in": 2, "out": 16},
      {"kind": "relu"},
      {"kind": "affine", "in": 16, "out": 2}
    ]
  },
  "algorithm": {
    "kind": "granet",
    "init": {"mode": "dense", "sparsity": 0.0},
    "prune": {"s_initial": 0.0, "s_final": 0.9, "t0_epoch": 0, "tf_epoch": 10, "interval_steps": 4},
    "regen": {"mode": "cosine", "r_initial": 0.5}
  },
  "train": {"epochs": 16, "batch_size": 16, "lr": 0.1, "lr_drop_epochs": [8, 12]},
  "seeds": [1, 2, 3]
})";

std::string parse_error(const std::string& text) {
    try {
        auto cfg = ExperimentConfig::parse_json(text, "test");
        cfg.validate_semantics();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("minimal config fills in documented defaults") {
    auto cfg = ExperimentConfig::parse_json(kMinimal, "test");
    cfg.validate_semantics();
    CHECK(cfg.name == "toy");
    CHECK(cfg.dataset.kind == "synthetic");
    CHECK(cfg.dataset.synthetic_kind == "two_moons");
    CHECK(cfg.algorithm.kind == "dense");
    CHECK(cfg.train.epochs == 160);
    CHECK(cfg.train.batch_size == 128);
    CHECK(cfg.train.lr == 0.1);
    CHECK(cfg.train.momentum == 0.9);
    CHECK(cfg.train.weight_decay == 5e-4);
    CHECK(cfg.train.lr_drop_epochs == std::vector<std::int64_t>{80, 120});
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1});
    CHECK(cfg.output_dir == "runs");
    CHECK(cfg.charge_dense_regen);
    CHECK_FALSE(cfg.probes.present);
    REQUIRE(cfg.network.layers.size() == 1);
    CHECK(cfg.network.layers[0].kind == LayerKind::affine);
}

TEST_CASE("unknown keys are rejected with their full dotted path") {
    auto msg = parse_error(R"({"name": "x", "nets": {}})");
    CHECK(msg.find("nets") != std::string::npos);
    CHECK(msg.find("unknown key") != std::string::npos);

    msg = parse_error(R"({
      "name": "x",
      "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]},
      "train": {"epocs": 10}
    })");
    CHECK(msg.find("train.epocs") != std::string::npos);

    msg = parse_error(R"({
      "name": "x",
      "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]},
      "algorithm": {"kind": "gmp", "prune": {"s_final": 0.9, "sf": 0.9}}
    })");
    CHECK(msg.find("algorithm.prune.sf") != std::string::npos);

    msg = parse_error(R"({
      "name": "x",
      "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2, "bias": true}]}
    })");
    CHECK(msg.find("network.layers[0].bias") != std::string::npos);
}

TEST_CASE("sparsity ordering violations name both offending keys") {
    const auto msg = parse_error(R"({
      "name": "x",
      "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]},
      "algorithm": {"kind": "gmp", "prune": {"s_initial": 0.9, "s_final": 0.5}}
    })");
    CHECK(msg.find("algorithm.prune.s_initial") != std::string::npos);
    CHECK(msg.find("algorithm.prune.s_final") != std::string::npos);
}

TEST_CASE("semantic validation catches out-of-range settings") {
    CHECK(parse_error(R"({"name": "x", "dataset": {"kind": "parquet"},
        "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]}})")
              .find("dataset.kind") != std::string::npos);

    CHECK(parse_error(R"({"name": "x", "dataset": {"kind": "idx"},
        "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]}})")
              .find("dataset.images") != std::string::npos);

    CHECK(parse_error(R"({"name": "x", "dataset": {"kind": "cifar10"},
        "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]}})")
              .find("dataset.path") != std::string::npos);

    CHECK(parse_error(R"({"name": "x", "dataset": {"train_fraction": 1.0},
        "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]}})")
              .find("train_fraction") != std::string::npos);

    CHECK(parse_error(R"({"name": "x",
        "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]},
        "algorithm": {"kind": "granet", "regen": {"r_initial": 1.5}}})")
              .find("r_initial") != std::string::npos);

    CHECK(parse_error(R"({"name": "x",
        "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]},
        "algorithm": {"kind": "gmp", "prune": {"tf_epoch": 200}},
        "train": {"epochs": 100}})")
              .find("tf_epoch") != std::string::npos);

    CHECK(parse_error(R"({"name": "x",
        "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]},
        "train": {"epochs": 10, "checkpoint_epochs": [10]}})")
              .find("checkpoint_epochs") != std::string::npos);

    CHECK(parse_error(R"({"name": "x",
        "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]},
        "algorithm": {"kind": "lottery"}})")
              .find("lottery") != std::string::npos);

    CHECK(parse_error(R"({"name": "",
        "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]}})")
              .find("name") != std::string::npos);

    CHECK(parse_error(R"({"name": "x"})").find("network") != std::string::npos);
}

TEST_CASE("layer table parses every kind and rejects impostors") {
    auto cfg = ExperimentConfig::parse_json(R"({
      "name": "conv",
      "network": {
        "input": [1, 8, 8],
        "layers": [
          {"kind": "conv2d", "in_channels": 1, "out_channels": 4, "kernel": 3, "stride": 1, "padding": 1},
          {"kind": "relu"},
          {"kind": "avgpool2d", "kernel": 2, "stride": 2},
          {"kind": "flatten"},
          {"kind": "affine", "in": 64, "out": 10}
        ]
      }
    })",
                                            "test");
    cfg.validate_semantics();
    REQUIRE(cfg.network.layers.size() == 5);
    CHECK(cfg.network.layers[0].kind == LayerKind::conv2d);
    CHECK(cfg.network.layers[0].kernel_h == 3);
    CHECK(cfg.network.layers[0].padding == 1);
    CHECK(cfg.network.layers[2].kind == LayerKind::avgpool2d);
    CHECK(cfg.network.input == Shape{1, 8, 8});

    const auto msg = parse_error(R"({
      "name": "x",
      "network": {"input": [2], "layers": [{"kind": "maxpool"}]}
    })");
    CHECK(msg.find("unknown layer kind") != std::string::npos);
    CHECK(msg.find("maxpool") != std::string::npos);
}

TEST_CASE("resolution turns epoch-level knobs into step-level schedules") {
    auto cfg = ExperimentConfig::parse_json(kGranet, "test");
    cfg.validate_semantics();

    const std::int64_t spe = 256 / 16;  // dataset n / batch_size
    const AlgorithmSpec spec = cfg.resolve_algorithm(spe);
    CHECK(spec.kind == AlgoKind::granet);
    CHECK(spec.prune_schedule.t_start == 0);
    CHECK(spec.prune_schedule.interval == 4);
    CHECK(spec.prune_schedule.n_intervals == 10 * spe / 4);
    CHECK(spec.prune_schedule.s_final == 0.9);
    // Unset regen horizon inherits the prune window's end.
    CHECK(spec.regen_schedule.t_end == 10 * spe);
    CHECK(spec.regen_schedule.mode == RegenSchedule::Mode::cosine);

    const TrainSettings st = cfg.resolve_train();
    CHECK(st.epochs == 16);
    CHECK(st.batch_size == 16);
    CHECK(st.lr.base_lr == 0.1);
    CHECK(st.lr.drop_epochs == std::vector<std::int64_t>{8, 12});

    // Explicit regen horizon wins.
    auto cfg2 = cfg;
    cfg2.algorithm.regen.t_end_epoch = 4;
    CHECK(cfg2.resolve_algorithm(spe).regen_schedule.t_end == 4 * spe);

    // A dense config resolves to no schedules at all.
    auto dense = ExperimentConfig::parse_json(kMinimal, "test");
    CHECK_FALSE(dense.resolve_algorithm(10).has_prune_schedule());
}

TEST_CASE("probe defaults scale the frozen window with run length") {
    auto cfg = ExperimentConfig::parse_json(kGranet, "test");
    CHECK(cfg.resolved_probe_k() == 3);  // ceil(16 * 30 / 160)
    cfg.probes.k_epochs = 7;
    CHECK(cfg.resolved_probe_k() == 7);
    cfg.probes.k_epochs = -1;
    cfg.train.epochs = 160;
    CHECK(cfg.resolved_probe_k() == 30);
}

TEST_CASE("probe block parses and validates") {
    auto cfg = ExperimentConfig::parse_json(R"({
      "name": "probes",
      "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]},
      "train": {"epochs": 20},
      "probes": {
        "snapshot_epochs": [5, 15],
        "prune_rates": [0.2, 0.9],
        "regen": [false, true],
        "k_epochs": 2
      }
    })",
                                            "test");
    cfg.validate_semantics();
    CHECK(cfg.probes.present);
    CHECK(cfg.probes.snapshot_epochs == std::vector<std::int64_t>{5, 15});
    CHECK(cfg.probes.prune_rates == std::vector<double>{0.2, 0.9});
    CHECK(cfg.probes.regen_options == std::vector<bool>{false, true});

    const auto msg = parse_error(R"({
      "name": "probes",
      "network": {"input": [2], "layers": [{"kind": "affine", "in": 2, "out": 2}]},
      "train": {"epochs": 20},
      "probes": {"snapshot_epochs": [25], "prune_rates": [0.5]}
    })");
    CHECK(msg.find("snapshot_epochs") != std::string::npos);
}

TEST_CASE("manifest echo preserves the resolved configuration") {
    auto cfg = ExperimentConfig::parse_json(kGranet, "test");
    cfg.validate_semantics();
    const auto text = cfg.to_manifest_json();

    // The echo must itself be valid JSON carrying the key settings.
    CHECK(text.find("\"granet_toy\"") != std::string::npos);
    CHECK(text.find("\"granet\"") != std::string::npos);
    CHECK(text.find("\"s_final\": 0.9") != std::string::npos);
    CHECK(text.find("\"epochs\": 16") != std::string::npos);

    // Round-trip: the manifest parses back to an equivalent config.
    auto back = ExperimentConfig::parse_json(text, "manifest");
    back.validate_semantics();
    CHECK(back.name == cfg.name);
    CHECK(back.algorithm.prune.s_final == cfg.algorithm.prune.s_final);
    CHECK(back.train.epochs == cfg.train.epochs);
    CHECK(back.seeds == cfg.seeds);
    CHECK(back.to_manifest_json() == text);
}

TEST_CASE("malformed json names the origin") {
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse_json("{not json", "broken.json"),
                         doctest::Contains("broken.json"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse_json("[1, 2]", "arr.json"),
                         doctest::Contains("top level"), std::invalid_argument);
    CHECK_THROWS(ExperimentConfig::parse_file("/nonexistent/path/config.json"));
}
