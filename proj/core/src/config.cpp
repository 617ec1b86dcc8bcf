#include "sparselab/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sparselab/schedules.hpp"

namespace sparselab {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    throw std::invalid_argument("config: " + path + ": " + what);
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) {
            bad(path.empty() ? key : path + "." + key, "unknown key");
        }
    }
}

const json* find(const json& obj, const std::string& key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

template <typename T>
T get_num(const json& obj, const std::string& path, const std::string& key, T fallback) {
    const auto* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_number()) bad(path + "." + key, "expected a number");
    return v->get<T>();
}

bool get_bool(const json& obj, const std::string& path, const std::string& key, bool fallback) {
    const auto* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_boolean()) bad(path + "." + key, "expected true or false");
    return v->get<bool>();
}

std::string get_str(const json& obj, const std::string& path, const std::string& key,
                    const std::string& fallback) {
    const auto* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_string()) bad(path + "." + key, "expected a string");
    return v->get<std::string>();
}

template <typename T>
std::vector<T> get_vec(const json& obj, const std::string& path, const std::string& key,
                       std::vector<T> fallback) {
    const auto* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_array()) bad(path + "." + key, "expected an array");
    std::vector<T> out;
    for (const auto& e : *v) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!e.is_boolean()) bad(path + "." + key, "expected an array of booleans");
        } else {
            if (!e.is_number()) bad(path + "." + key, "expected an array of numbers");
        }
        out.push_back(e.get<T>());
    }
    return out;
}

LayerSpec parse_layer(const json& obj, const std::string& path) {
    if (!obj.is_object()) bad(path, "expected an object");
    const auto kind = get_str(obj, path, "kind", "");
    if (kind.empty()) bad(path + ".kind", "required");
    if (kind == "affine") {
        check_keys(obj, path, {"kind", "in", "out"});
        return LayerSpec::affine(get_num<std::int64_t>(obj, path, "in", 0),
                                 get_num<std::int64_t>(obj, path, "out", 0));
    }
    if (kind == "conv2d") {
        check_keys(obj, path, {"kind", "in_channels", "out_channels", "kernel", "stride", "padding"});
        const auto k = get_num<std::int64_t>(obj, path, "kernel", 3);
        return LayerSpec::conv2d(get_num<std::int64_t>(obj, path, "in_channels", 0),
                                 get_num<std::int64_t>(obj, path, "out_channels", 0), k, k,
                                 get_num<std::int64_t>(obj, path, "stride", 1),
                                 get_num<std::int64_t>(obj, path, "padding", 0));
    }
    if (kind == "relu") {
        check_keys(obj, path, {"kind"});
        return LayerSpec::relu();
    }
    if (kind == "flatten") {
        check_keys(obj, path, {"kind"});
        return LayerSpec::flatten();
    }
    if (kind == "avgpool2d") {
        check_keys(obj, path, {"kind", "kernel", "stride"});
        const auto k = get_num<std::int64_t>(obj, path, "kernel", 2);
        return LayerSpec::avgpool2d(k, k, get_num<std::int64_t>(obj, path, "stride", k));
    }
    bad(path + ".kind", "unknown layer kind '" + kind +
                            "' (affine, conv2d, relu, flatten, avgpool2d)");
}

}  // namespace

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_json(buf.str(), path);
}

ExperimentConfig ExperimentConfig::parse_json(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& ex) {
        throw std::invalid_argument("config " + origin + ": " + ex.what());
    }
    if (!root.is_object()) throw std::invalid_argument("config " + origin + ": top level must be an object");

    ExperimentConfig cfg;
    check_keys(root, "", {"name", "dataset", "network", "algorithm", "train", "seeds", "output_dir",
                          "probes", "charge_dense_regen"});
    cfg.name = get_str(root, "", "name", cfg.name);
    cfg.charge_dense_regen = get_bool(root, "", "charge_dense_regen", cfg.charge_dense_regen);
    cfg.output_dir = get_str(root, "", "output_dir", cfg.output_dir);
    {
        const auto* v = find(root, "seeds");
        if (v) {
            if (!v->is_array() || v->empty()) bad("seeds", "expected a non-empty array");
            cfg.seeds.clear();
            for (const auto& e : *v) {
                if (!e.is_number_unsigned()) bad("seeds", "expected non-negative integers");
                cfg.seeds.push_back(e.get<std::uint64_t>());
            }
        }
    }

    if (const auto* d = find(root, "dataset")) {
        const std::string p = "dataset";
        if (!d->is_object()) bad(p, "expected an object");
        check_keys(*d, p, {"kind", "synthetic_kind", "n", "noise", "seed", "images", "labels",
                           "test_images", "test_labels", "path", "test_path", "class_count",
                           "train_fraction", "normalize"});
        auto& dc = cfg.dataset;
        dc.kind = get_str(*d, p, "kind", dc.kind);
        dc.synthetic_kind = get_str(*d, p, "synthetic_kind", dc.synthetic_kind);
        dc.n = get_num<std::int64_t>(*d, p, "n", dc.n);
        dc.noise = get_num<double>(*d, p, "noise", dc.noise);
        dc.seed = get_num<std::uint64_t>(*d, p, "seed", dc.seed);
        dc.images = get_str(*d, p, "images", "");
        dc.labels = get_str(*d, p, "labels", "");
        dc.test_images = get_str(*d, p, "test_images", "");
        dc.test_labels = get_str(*d, p, "test_labels", "");
        dc.path = get_str(*d, p, "path", "");
        dc.test_path = get_str(*d, p, "test_path", "");
        dc.class_count = get_num<std::int64_t>(*d, p, "class_count", dc.class_count);
        dc.train_fraction = get_num<double>(*d, p, "train_fraction", dc.train_fraction);
        dc.normalize = get_bool(*d, p, "normalize", dc.normalize);
    }

    const auto* n = find(root, "network");
    if (!n) bad("network", "required");
    {
        const std::string p = "network";
        if (!n->is_object()) bad(p, "expected an object");
        check_keys(*n, p, {"input", "layers"});
        const auto* input = find(*n, "input");
        if (!input || !input->is_array() || input->empty()) bad(p + ".input", "expected a non-empty array");
        for (const auto& e : *input) {
            if (!e.is_number_integer()) bad(p + ".input", "expected integers");
            cfg.network.input.push_back(e.get<std::int64_t>());
        }
        const auto* layers = find(*n, "layers");
        if (!layers || !layers->is_array() || layers->empty()) bad(p + ".layers", "expected a non-empty array");
        for (std::size_t i = 0; i < layers->size(); ++i) {
            cfg.network.layers.push_back(
                parse_layer((*layers)[i], p + ".layers[" + std::to_string(i) + "]"));
        }
    }

    if (const auto* a = find(root, "algorithm")) {
        const std::string p = "algorithm";
        if (!a->is_object()) bad(p, "expected an object");
        check_keys(*a, p, {"kind", "scope", "structured", "init", "prune", "regen",
                           "dst_update_interval", "gmp_keep_values", "protect_first_last"});
        auto& ac = cfg.algorithm;
        ac.kind = get_str(*a, p, "kind", ac.kind);
        ac.scope = get_str(*a, p, "scope", ac.scope);
        ac.structured = get_bool(*a, p, "structured", ac.structured);
        ac.dst_update_interval = get_num<std::int64_t>(*a, p, "dst_update_interval", ac.dst_update_interval);
        ac.gmp_keep_values = get_bool(*a, p, "gmp_keep_values", ac.gmp_keep_values);
        ac.protect_first_last = get_bool(*a, p, "protect_first_last", ac.protect_first_last);
        if (const auto* init = find(*a, "init")) {
            const std::string pi = p + ".init";
            if (!init->is_object()) bad(pi, "expected an object");
            check_keys(*init, pi, {"mode", "sparsity"});
            ac.init_mode = get_str(*init, pi, "mode", ac.init_mode);
            ac.init_sparsity = get_num<double>(*init, pi, "sparsity", ac.init_sparsity);
        }
        if (const auto* pr = find(*a, "prune")) {
            const std::string pp = p + ".prune";
            if (!pr->is_object()) bad(pp, "expected an object");
            check_keys(*pr, pp, {"s_initial", "s_final", "t0_epoch", "tf_epoch", "interval_steps"});
            ac.prune.s_initial = get_num<double>(*pr, pp, "s_initial", ac.prune.s_initial);
            ac.prune.s_final = get_num<double>(*pr, pp, "s_final", ac.prune.s_final);
            ac.prune.t0_epoch = get_num<std::int64_t>(*pr, pp, "t0_epoch", ac.prune.t0_epoch);
            ac.prune.tf_epoch = get_num<std::int64_t>(*pr, pp, "tf_epoch", ac.prune.tf_epoch);
            ac.prune.interval_steps = get_num<std::int64_t>(*pr, pp, "interval_steps", ac.prune.interval_steps);
        }
        if (const auto* rg = find(*a, "regen")) {
            const std::string pr = p + ".regen";
            if (!rg->is_object()) bad(pr, "expected an object");
            check_keys(*rg, pr, {"mode", "r_initial", "t_end_epoch"});
            ac.regen.mode = get_str(*rg, pr, "mode", ac.regen.mode);
            ac.regen.r_initial = get_num<double>(*rg, pr, "r_initial", ac.regen.r_initial);
            ac.regen.t_end_epoch = get_num<std::int64_t>(*rg, pr, "t_end_epoch", ac.regen.t_end_epoch);
        }
    }

    if (const auto* t = find(root, "train")) {
        const std::string p = "train";
        if (!t->is_object()) bad(p, "expected an object");
        check_keys(*t, p, {"epochs", "batch_size", "lr", "momentum", "weight_decay", "lr_drop_epochs",
                           "lr_drop_factor", "eval_batch_size", "checkpoint_epochs", "divergence_loss"});
        auto& tc = cfg.train;
        tc.epochs = get_num<std::int64_t>(*t, p, "epochs", tc.epochs);
        tc.batch_size = get_num<std::int64_t>(*t, p, "batch_size", tc.batch_size);
        tc.lr = get_num<double>(*t, p, "lr", tc.lr);
        tc.momentum = get_num<double>(*t, p, "momentum", tc.momentum);
        tc.weight_decay = get_num<double>(*t, p, "weight_decay", tc.weight_decay);
        tc.lr_drop_epochs = get_vec<std::int64_t>(*t, p, "lr_drop_epochs", tc.lr_drop_epochs);
        tc.lr_drop_factor = get_num<double>(*t, p, "lr_drop_factor", tc.lr_drop_factor);
        tc.eval_batch_size = get_num<std::int64_t>(*t, p, "eval_batch_size", tc.eval_batch_size);
        tc.checkpoint_epochs = get_vec<std::int64_t>(*t, p, "checkpoint_epochs", tc.checkpoint_epochs);
        tc.divergence_loss = get_num<double>(*t, p, "divergence_loss", tc.divergence_loss);
    }

    if (const auto* pb = find(root, "probes")) {
        const std::string p = "probes";
        if (!pb->is_object()) bad(p, "expected an object");
        check_keys(*pb, p, {"snapshot_epochs", "prune_rates", "regen", "k_epochs",
                            "include_final_gap", "scope", "structured"});
        auto& ps = cfg.probes;
        ps.present = true;
        ps.snapshot_epochs = get_vec<std::int64_t>(*pb, p, "snapshot_epochs", ps.snapshot_epochs);
        ps.prune_rates = get_vec<double>(*pb, p, "prune_rates", ps.prune_rates);
        ps.regen_options = get_vec<bool>(*pb, p, "regen", ps.regen_options);
        ps.k_epochs = get_num<std::int64_t>(*pb, p, "k_epochs", ps.k_epochs);
        ps.include_final_gap = get_bool(*pb, p, "include_final_gap", ps.include_final_gap);
        ps.scope = get_str(*pb, p, "scope", ps.scope);
        ps.structured = get_bool(*pb, p, "structured", ps.structured);
    }

    cfg.validate_semantics();
    return cfg;
}

void ExperimentConfig::validate_semantics() const {
    if (name.empty()) bad("name", "must not be empty");
    if (dataset.kind != "synthetic" && dataset.kind != "idx" && dataset.kind != "cifar10") {
        bad("dataset.kind", "unknown kind '" + dataset.kind + "' (synthetic, idx, cifar10)");
    }
    if (dataset.kind == "idx" && (dataset.images.empty() || dataset.labels.empty())) {
        bad("dataset.images", "idx datasets need dataset.images and dataset.labels");
    }
    if (dataset.kind == "cifar10" && dataset.path.empty()) {
        bad("dataset.path", "cifar10 datasets need a file path");
    }
    if (!(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0)) {
        bad("dataset.train_fraction", "must be in (0, 1)");
    }

    algo_kind_from_name(algorithm.kind);           // throws on bad names
    prune_scope_from_name(algorithm.scope);
    sparse_init_from_name(algorithm.init_mode);
    if (algorithm.kind == "granet" || algorithm.kind == "rigl" || algorithm.kind == "set") {
        regen_mode_from_name(algorithm.regen.mode);
    }
    if (algorithm.prune.s_initial > algorithm.prune.s_final) {
        bad("algorithm.prune.s_initial",
            "exceeds algorithm.prune.s_final (" + std::to_string(algorithm.prune.s_initial) + " > " +
                std::to_string(algorithm.prune.s_final) + ")");
    }
    if (algorithm.kind == "granet" || algorithm.kind == "gmp") {
        if (algorithm.prune.t0_epoch < 0 || algorithm.prune.tf_epoch < algorithm.prune.t0_epoch) {
            bad("algorithm.prune.tf_epoch", "window must satisfy 0 <= t0_epoch <= tf_epoch");
        }
        if (algorithm.prune.tf_epoch > train.epochs) {
            bad("algorithm.prune.tf_epoch", "exceeds train.epochs");
        }
        if (algorithm.prune.interval_steps < 1) bad("algorithm.prune.interval_steps", "must be >= 1");
    }
    if (!(algorithm.init_sparsity >= 0.0 && algorithm.init_sparsity < 1.0)) {
        bad("algorithm.init.sparsity", "must be in [0, 1)");
    }
    if (!(algorithm.regen.r_initial >= 0.0 && algorithm.regen.r_initial <= 1.0)) {
        bad("algorithm.regen.r_initial", "must be in [0, 1]");
    }

    if (train.epochs < 1) bad("train.epochs", "must be >= 1");
    if (train.batch_size < 1) bad("train.batch_size", "must be >= 1");
    if (!(train.lr > 0.0)) bad("train.lr", "must be positive");
    for (auto e : train.checkpoint_epochs) {
        if (e < 0 || e >= train.epochs) bad("train.checkpoint_epochs", "epoch " + std::to_string(e) + " outside [0, epochs)");
    }

    if (probes.present) {
        if (probes.snapshot_epochs.empty()) bad("probes.snapshot_epochs", "must not be empty");
        for (auto e : probes.snapshot_epochs) {
            if (e < 0 || e >= train.epochs) bad("probes.snapshot_epochs", "epoch " + std::to_string(e) + " outside [0, epochs)");
        }
        for (auto r : probes.prune_rates) {
            if (!(r > 0.0 && r < 1.0)) bad("probes.prune_rates", "rates must be in (0, 1)");
        }
        if (probes.regen_options.empty()) bad("probes.regen", "must not be empty");
        prune_scope_from_name(probes.scope);
    }
}

void ExperimentConfig::check_files() const {
    auto must_exist = [](const std::string& path, const std::string& key) {
        if (!path.empty() && !std::filesystem::exists(path)) {
            bad(key, "file does not exist: " + path);
        }
    };
    must_exist(dataset.images, "dataset.images");
    must_exist(dataset.labels, "dataset.labels");
    must_exist(dataset.test_images, "dataset.test_images");
    must_exist(dataset.test_labels, "dataset.test_labels");
    must_exist(dataset.path, "dataset.path");
    must_exist(dataset.test_path, "dataset.test_path");
}

AlgorithmSpec ExperimentConfig::resolve_algorithm(std::int64_t steps_per_epoch) const {
    AlgorithmSpec spec;
    spec.kind = algo_kind_from_name(algorithm.kind);
    spec.scope = prune_scope_from_name(algorithm.scope);
    spec.structured = algorithm.structured;
    spec.dst_update_interval = algorithm.dst_update_interval;
    spec.gmp_keep_values = algorithm.gmp_keep_values;
    spec.protect_first_last = algorithm.protect_first_last;
    spec.init_plan.mode = sparse_init_from_name(algorithm.init_mode);
    spec.init_plan.global_sparsity = algorithm.init_sparsity;

    if (spec.has_prune_schedule()) {
        spec.prune_schedule = PruneSchedule::from_epochs(
            algorithm.prune.s_initial, algorithm.prune.s_final, algorithm.prune.t0_epoch,
            algorithm.prune.tf_epoch, steps_per_epoch, algorithm.prune.interval_steps);
    }
    if (spec.kind == AlgoKind::granet || spec.is_dst()) {
        spec.regen_schedule.mode = regen_mode_from_name(algorithm.regen.mode);
        spec.regen_schedule.r_initial = algorithm.regen.r_initial;
        auto t_end_epoch = algorithm.regen.t_end_epoch;
        if (t_end_epoch < 0) {
            t_end_epoch = spec.has_prune_schedule() ? algorithm.prune.tf_epoch : train.epochs;
        }
        spec.regen_schedule.t_end = t_end_epoch * steps_per_epoch;
    }
    return spec;
}

TrainSettings ExperimentConfig::resolve_train() const {
    TrainSettings st;
    st.epochs = train.epochs;
    st.batch_size = train.batch_size;
    st.momentum = train.momentum;
    st.weight_decay = train.weight_decay;
    st.lr.base_lr = train.lr;
    st.lr.factor = train.lr_drop_factor;
    st.lr.drop_epochs = train.lr_drop_epochs;
    st.lr.validate();
    st.eval_batch_size = train.eval_batch_size;
    st.checkpoint_epochs = train.checkpoint_epochs;
    st.divergence_loss = train.divergence_loss;
    return st;
}

std::int64_t ExperimentConfig::resolved_probe_k() const {
    if (probes.k_epochs > 0) return probes.k_epochs;
    return static_cast<std::int64_t>(std::ceil(static_cast<double>(train.epochs) * 30.0 / 160.0));
}

std::string ExperimentConfig::to_manifest_json() const {
    json j;
    j["name"] = name;
    j["charge_dense_regen"] = charge_dense_regen;
    j["output_dir"] = output_dir;
    j["seeds"] = seeds;

    json d;
    d["kind"] = dataset.kind;
    if (dataset.kind == "synthetic") {
        d["synthetic_kind"] = dataset.synthetic_kind;
        d["n"] = dataset.n;
        d["noise"] = dataset.noise;
    }
    if (!dataset.images.empty()) d["images"] = dataset.images;
    if (!dataset.labels.empty()) d["labels"] = dataset.labels;
    if (!dataset.test_images.empty()) d["test_images"] = dataset.test_images;
    if (!dataset.test_labels.empty()) d["test_labels"] = dataset.test_labels;
    if (!dataset.path.empty()) d["path"] = dataset.path;
    if (!dataset.test_path.empty()) d["test_path"] = dataset.test_path;
    d["class_count"] = dataset.class_count;
    d["seed"] = dataset.seed;
    d["train_fraction"] = dataset.train_fraction;
    d["normalize"] = dataset.normalize;
    j["dataset"] = d;

    json net;
    net["input"] = network.input;
    json layers = json::array();
    for (const auto& l : network.layers) {
        json lj;
        lj["kind"] = layer_kind_name(l.kind);
        switch (l.kind) {
            case LayerKind::affine:
                lj["in"] = l.in_features;
                lj["out"] = l.out_features;
                break;
            case LayerKind::conv2d:
                lj["in_channels"] = l.in_channels;
                lj["out_channels"] = l.out_channels;
                lj["kernel"] = l.kernel_h;
                lj["stride"] = l.stride;
                lj["padding"] = l.padding;
                break;
            case LayerKind::avgpool2d:
                lj["kernel"] = l.kernel_h;
                lj["stride"] = l.stride;
                break;
            case LayerKind::relu:
            case LayerKind::flatten:
                break;
        }
        layers.push_back(lj);
    }
    net["layers"] = layers;
    j["network"] = net;

    json a;
    a["kind"] = algorithm.kind;
    a["scope"] = algorithm.scope;
    a["structured"] = algorithm.structured;
    a["init"] = {{"mode", algorithm.init_mode}, {"sparsity", algorithm.init_sparsity}};
    a["prune"] = {{"s_initial", algorithm.prune.s_initial},
                  {"s_final", algorithm.prune.s_final},
                  {"t0_epoch", algorithm.prune.t0_epoch},
                  {"tf_epoch", algorithm.prune.tf_epoch},
                  {"interval_steps", algorithm.prune.interval_steps}};
    a["regen"] = {{"mode", algorithm.regen.mode},
                  {"r_initial", algorithm.regen.r_initial},
                  {"t_end_epoch", algorithm.regen.t_end_epoch}};
    a["dst_update_interval"] = algorithm.dst_update_interval;
    a["gmp_keep_values"] = algorithm.gmp_keep_values;
    a["protect_first_last"] = algorithm.protect_first_last;
    j["algorithm"] = a;

    json t;
    t["epochs"] = train.epochs;
    t["batch_size"] = train.batch_size;
    t["lr"] = train.lr;
    t["momentum"] = train.momentum;
    t["weight_decay"] = train.weight_decay;
    t["lr_drop_epochs"] = train.lr_drop_epochs;
    t["lr_drop_factor"] = train.lr_drop_factor;
    t["eval_batch_size"] = train.eval_batch_size;
    t["checkpoint_epochs"] = train.checkpoint_epochs;
    t["divergence_loss"] = train.divergence_loss;
    j["train"] = t;

    if (probes.present) {
        json p;
        p["snapshot_epochs"] = probes.snapshot_epochs;
        p["prune_rates"] = probes.prune_rates;
        json regen = json::array();
        for (bool b : probes.regen_options) regen.push_back(b);
        p["regen"] = regen;
        p["k_epochs"] = resolved_probe_k();
        p["include_final_gap"] = probes.include_final_gap;
        p["scope"] = probes.scope;
        p["structured"] = probes.structured;
        j["probes"] = p;
    }
    return j.dump(2);
}

}  // namespace sparselab
