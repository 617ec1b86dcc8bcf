#include "sparselab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "sparselab/checkpoint.hpp"
#include "sparselab/flops.hpp"
#include "sparselab/plasticity.hpp"

namespace sparselab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cell_name(const ExperimentConfig& cfg, std::uint64_t seed) {
    return cfg.algorithm.kind + "_seed" + std::to_string(seed);
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_metrics_jsonl(const fs::path& path, const RunRecord& rec) {
    std::ostringstream os;
    for (const auto& m : rec.metrics) {
        json j;
        j["step"] = m.step;
        j["epoch"] = m.epoch;
        j["split"] = m.split;
        j["metric"] = m.metric;
        j["value"] = m.value;
        os << j.dump() << '\n';
    }
    write_text(path, os.str());
}

void write_events_csv(const fs::path& path, const RunRecord& rec) {
    std::ostringstream os;
    os << "step,scope,target_sparsity,achieved_sparsity,regen_ratio,used_dense_gradient,"
          "layer,schedule_pruned,removed,regenerated,nnz,numel,clamped\n";
    for (const auto& ev : rec.events) {
        for (const auto& le : ev.layers) {
            os << ev.step << ',' << prune_scope_name(ev.scope) << ',' << fmt(ev.target_sparsity)
               << ',' << fmt(ev.achieved_sparsity) << ',' << fmt(ev.regen_ratio) << ','
               << (ev.used_dense_gradient ? 1 : 0) << ',' << le.layer_id << ','
               << le.schedule_pruned << ',' << le.removed << ',' << le.regenerated << ','
               << le.nnz << ',' << le.numel << ',' << (le.clamped ? 1 : 0) << '\n';
        }
    }
    write_text(path, os.str());
}

// Per-layer occupancy at the end of the run, one row per prunable layer
// plus an Overall row.
void write_sparsity_csv(const fs::path& path, const RunRecord& rec) {
    std::ostringstream os;
    os << "layer,numel,nnz,density,sparsity\n";
    std::int64_t total_numel = 0, total_nnz = 0;
    for (std::size_t i = 0; i < rec.layer_ids.size(); ++i) {
        const auto numel = rec.layer_numel[i];
        const auto nnz = rec.final_nnz[i];
        total_numel += numel;
        total_nnz += nnz;
        const double d = numel > 0 ? static_cast<double>(nnz) / static_cast<double>(numel) : 1.0;
        os << rec.layer_ids[i] << ',' << numel << ',' << nnz << ',' << fmt(d) << ','
           << fmt(1.0 - d) << '\n';
    }
    const double d = total_numel > 0
                         ? static_cast<double>(total_nnz) / static_cast<double>(total_numel)
                         : 1.0;
    os << "Overall," << total_numel << ',' << total_nnz << ',' << fmt(d) << ',' << fmt(1.0 - d)
       << '\n';
    write_text(path, os.str());
}

void write_trajectory_csv(const fs::path& path, const RunRecord& rec) {
    const auto traj = density_trajectory(rec);
    std::ostringstream os;
    os << "step,global_density";
    for (const auto& id : rec.layer_ids) os << ',' << id;
    os << '\n';
    for (const auto& pt : traj) {
        os << pt.step << ',' << fmt(pt.global_density);
        for (double d : pt.layer_density) os << ',' << fmt(d);
        os << '\n';
    }
    write_text(path, os.str());
}

json flops_to_json(const FlopsReport& rep) {
    json j;
    j["forward_flops_per_sample"] = rep.forward_flops_per_sample;
    j["dense_forward_flops"] = rep.dense_forward_flops;
    j["train_flops_total"] = rep.train_flops_total;
    j["dense_train_flops_total"] = rep.dense_train_flops_total;
    j["normalized_forward"] = rep.normalized_forward;
    j["normalized_train"] = rep.normalized_train;
    return j;
}

FlopsReport flops_from_json(const json& j) {
    FlopsReport rep;
    rep.forward_flops_per_sample = j.at("forward_flops_per_sample").get<double>();
    rep.dense_forward_flops = j.at("dense_forward_flops").get<double>();
    rep.train_flops_total = j.at("train_flops_total").get<double>();
    rep.dense_train_flops_total = j.at("dense_train_flops_total").get<double>();
    rep.normalized_forward = j.at("normalized_forward").get<double>();
    rep.normalized_train = j.at("normalized_train").get<double>();
    return rep;
}

double record_sparsity(const RunRecord& rec) {
    std::int64_t numel = 0, nnz = 0;
    for (std::size_t i = 0; i < rec.layer_ids.size(); ++i) {
        numel += rec.layer_numel[i];
        nnz += rec.final_nnz[i];
    }
    return numel > 0 ? 1.0 - static_cast<double>(nnz) / static_cast<double>(numel) : 0.0;
}

struct CellSummaryInput {
    const RunRecord* rec = nullptr;
    FlopsReport flops;
};

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    sd = 0.0;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
}

// One row per algorithm, aggregated across seeds. Inputs must already be
// sorted (algorithm, seed) so repeated invocations sum in the same order.
std::string summary_table(const std::vector<CellSummaryInput>& cells) {
    std::ostringstream os;
    os << "algorithm,seeds,test_accuracy_mean,test_accuracy_std,train_accuracy_mean,"
          "train_accuracy_std,sparsity_mean,normalized_train_flops_mean,"
          "normalized_forward_flops_mean\n";
    std::size_t i = 0;
    while (i < cells.size()) {
        std::size_t j = i;
        std::vector<double> test, train, sp, ntrain, nfwd;
        while (j < cells.size() && cells[j].rec->algorithm == cells[i].rec->algorithm) {
            test.push_back(cells[j].rec->final_test_accuracy);
            train.push_back(cells[j].rec->final_train_accuracy);
            sp.push_back(record_sparsity(*cells[j].rec));
            ntrain.push_back(cells[j].flops.normalized_train);
            nfwd.push_back(cells[j].flops.normalized_forward);
            ++j;
        }
        double m, s;
        os << cells[i].rec->algorithm << ',' << (j - i);
        mean_std(test, m, s);
        os << ',' << fmt(m) << ',' << fmt(s);
        mean_std(train, m, s);
        os << ',' << fmt(m) << ',' << fmt(s);
        mean_std(sp, m, s);
        os << ',' << fmt(m);
        mean_std(ntrain, m, s);
        os << ',' << fmt(m);
        mean_std(nfwd, m, s);
        os << ',' << fmt(m) << '\n';
        i = j;
    }
    return os.str();
}

struct ManifestLog {
    fs::path path;
    std::mutex mu;

    void append(const json& line) {
        std::lock_guard<std::mutex> lock(mu);
        std::ofstream out(path, std::ios::app);
        if (!out) throw std::runtime_error("cannot append to " + path.string());
        out << line.dump() << '\n';
    }
};

std::optional<std::int64_t> epoch_from_filename(const fs::path& p) {
    const auto name = p.filename().string();
    if (name.rfind("epoch_", 0) != 0 || p.extension() != ".ckpt") return std::nullopt;
    try {
        return std::stoll(name.substr(6));
    } catch (...) {
        return std::nullopt;
    }
}

std::vector<std::int64_t> available_snapshot_epochs(const fs::path& ckdir) {
    std::vector<std::int64_t> out;
    if (!fs::exists(ckdir)) return out;
    for (const auto& e : fs::directory_iterator(ckdir)) {
        if (auto n = epoch_from_filename(e.path())) out.push_back(*n);
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct CellResult {
    bool ok = false;
    bool cached = false;
    std::string error;
};

// One (config, seed) training cell. Training is segmented at checkpoint
// epochs so every checkpoint hits disk before the next segment starts; a
// rerun picks up from the newest epoch file.
CellResult run_cell(const ExperimentConfig& cfg, const LoadedData& data, const fs::path& dir,
                    std::uint64_t seed) {
    CellResult result;
    const auto ckdir = dir / "checkpoints";
    fs::create_directories(ckdir);
    const auto final_path = dir / "final.ckpt";

    if (fs::exists(final_path)) {
        const auto done = load_checkpoint(final_path.string());
        result.cached = true;
        result.ok = !done.record.aborted;
        if (!result.ok) result.error = done.record.abort_reason;
        return result;
    }

    const auto steps_per_epoch = data.train.size() / cfg.train.batch_size;
    const auto algo = cfg.resolve_algorithm(steps_per_epoch);
    const auto settings = cfg.resolve_train();

    Checkpoint cur;
    bool have_cur = false;
    const auto have_epochs = available_snapshot_epochs(ckdir);
    if (!have_epochs.empty()) {
        cur = load_checkpoint((ckdir / ("epoch_" + std::to_string(have_epochs.back()) + ".ckpt")).string());
        have_cur = true;
    }

    // Segment targets: one past each pending checkpoint epoch, then the end.
    std::set<std::int64_t> targets;
    const std::int64_t from = have_cur ? cur.next_epoch : 0;
    for (auto e : settings.checkpoint_epochs) {
        if (e + 1 > from && e + 1 < settings.epochs) targets.insert(e + 1);
    }
    targets.insert(settings.epochs);

    Network net = Network::build(cfg.network.layers, cfg.network.input);
    RunRecord rec;
    for (auto target : targets) {
        TrainSettings seg = settings;
        seg.epochs = target;
        std::vector<Checkpoint> sink;
        rec = train_run(net, data.train, data.test, algo, seg, seed, have_cur ? &cur : nullptr,
                        &sink);
        for (auto& ck : sink) {
            const bool boundary = !ck.record.aborted && ck.next_step == ck.next_epoch * steps_per_epoch;
            const auto name = boundary ? "epoch_" + std::to_string(ck.next_epoch - 1) + ".ckpt"
                                       : std::string("abort.ckpt");
            save_checkpoint((ckdir / name).string(), ck);
        }
        if (rec.aborted || target == settings.epochs) break;
        cur = std::move(sink.back());
        have_cur = true;
    }

    write_metrics_jsonl(dir / "metrics.jsonl", rec);
    write_events_csv(dir / "events.csv", rec);
    write_sparsity_csv(dir / "sparsity.csv", rec);
    write_trajectory_csv(dir / "trajectory.csv", rec);
    const auto flops = train_flops(rec, cfg.network.layers, cfg.network.input,
                                   FlopsOptions{cfg.charge_dense_regen});
    write_text(dir / "flops.json", flops_to_json(flops).dump(2) + "\n");

    // The completed run rides in the checkpoint container: snapshots from
    // the record, no optimizer or stream state left to carry.
    Checkpoint fin;
    fin.root_seed = seed;
    fin.next_epoch = rec.epochs;
    fin.next_step = rec.total_steps();
    fin.weights = rec.final_weights;
    fin.masks = rec.final_masks;
    fin.stash.resize(rec.final_weights.size());
    for (const auto& p : net.params) fin.prunable_flags.push_back(p.prunable ? 1 : 0);
    fin.biases = rec.final_biases;
    for (const auto& w : rec.final_weights) fin.weight_velocity.emplace_back(w.size(), 0.0);
    for (const auto& b : rec.final_biases) fin.bias_velocity.emplace_back(b.size(), 0.0);
    fin.record = rec;
    save_checkpoint(final_path.string(), fin);

    result.ok = !rec.aborted;
    if (!result.ok) result.error = rec.abort_reason;
    return result;
}

std::vector<CellSummaryInput> gather_summaries(const std::vector<std::pair<RunRecord, FlopsReport>>& cells) {
    std::vector<CellSummaryInput> in;
    for (const auto& [rec, fl] : cells) in.push_back({&rec, fl});
    std::sort(in.begin(), in.end(), [](const CellSummaryInput& a, const CellSummaryInput& b) {
        if (a.rec->algorithm != b.rec->algorithm) return a.rec->algorithm < b.rec->algorithm;
        return a.rec->seed < b.rec->seed;
    });
    return in;
}

}  // namespace

LoadedData load_experiment_data(const ExperimentConfig& cfg) {
    const auto& dc = cfg.dataset;
    Dataset train, test;
    if (dc.kind == "synthetic") {
        const auto full = make_synthetic(dc.synthetic_kind, dc.n, dc.noise, dc.seed);
        auto parts = split_shuffle(full, {dc.train_fraction, 1.0 - dc.train_fraction}, dc.seed);
        train = std::move(parts[0]);
        test = std::move(parts[1]);
    } else if (dc.kind == "idx") {
        train = load_idx_pair(dc.images, dc.labels, dc.class_count);
        if (!dc.test_images.empty()) {
            test = load_idx_pair(dc.test_images, dc.test_labels, dc.class_count);
        } else {
            auto parts = split_shuffle(train, {dc.train_fraction, 1.0 - dc.train_fraction}, dc.seed);
            train = std::move(parts[0]);
            test = std::move(parts[1]);
        }
    } else if (dc.kind == "cifar10") {
        train = read_cifar10_bin(dc.path);
        if (!dc.test_path.empty()) {
            test = read_cifar10_bin(dc.test_path);
        } else {
            auto parts = split_shuffle(train, {dc.train_fraction, 1.0 - dc.train_fraction}, dc.seed);
            train = std::move(parts[0]);
            test = std::move(parts[1]);
        }
    } else {
        throw std::invalid_argument("config: dataset.kind: unknown kind '" + dc.kind + "'");
    }

    if (dc.normalize) {
        const auto stats = compute_norm_stats(train);
        apply_normalization(train, stats);
        apply_normalization(test, stats);
    }
    train = reshape_inputs(train, cfg.network.input);
    test = reshape_inputs(test, cfg.network.input);
    return {std::move(train), std::move(test)};
}

int run_experiment(const ExperimentConfig& cfg, const std::string& root, int jobs,
                   std::ostream& log) {
    cfg.check_files();
    const fs::path exp = fs::path(root) / cfg.name;
    fs::create_directories(exp);

    const auto manifest_echo = cfg.to_manifest_json();
    write_text(exp / "manifest.json", manifest_echo + "\n");
    ManifestLog manifest{exp / "manifest.jsonl", {}};
    manifest.append(json{{"type", "config"}, {"config", json::parse(manifest_echo)}});

    const auto data = load_experiment_data(cfg);
    log << "experiment " << cfg.name << ": train=" << data.train.size()
        << " test=" << data.test.size() << " cells=" << cfg.seeds.size() << "\n";

    std::vector<CellResult> results(cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mu;
    auto worker = [&]() {
        for (;;) {
            const auto i = next.fetch_add(1);
            if (i >= cfg.seeds.size()) return;
            const auto seed = cfg.seeds[i];
            const auto name = cell_name(cfg, seed);
            CellResult r;
            try {
                r = run_cell(cfg, data, exp / name, seed);
            } catch (const std::exception& ex) {
                r.ok = false;
                r.error = ex.what();
            }
            results[i] = r;
            manifest.append(json{{"type", "cell"},
                                 {"cell", name},
                                 {"seed", seed},
                                 {"status", r.ok ? (r.cached ? "cached" : "done") : "failed"},
                                 {"error", r.error}});
            std::lock_guard<std::mutex> lock(log_mu);
            log << "cell " << name << ": " << (r.ok ? (r.cached ? "cached" : "done") : "FAILED");
            if (!r.error.empty()) log << " (" << r.error << ")";
            log << "\n";
        }
    };
    const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(cfg.seeds.size())));
    std::vector<std::thread> pool;
    for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    bool all_ok = true;
    std::vector<std::pair<RunRecord, FlopsReport>> cells;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        if (!results[i].ok) {
            all_ok = false;
            continue;
        }
        const auto dir = exp / cell_name(cfg, cfg.seeds[i]);
        auto ck = load_checkpoint((dir / "final.ckpt").string());
        std::ifstream fj(dir / "flops.json");
        cells.emplace_back(std::move(ck.record), flops_from_json(json::parse(fj)));
    }
    if (!cells.empty()) {
        const auto table = summary_table(gather_summaries(cells));
        write_text(exp / "summary.csv", table);
        log << table;
    }
    return all_ok ? 0 : 1;
}

int report_experiment(const std::string& exp_dir, std::ostream& out) {
    const fs::path exp(exp_dir);
    std::vector<fs::path> cell_dirs;
    if (fs::exists(exp)) {
        for (const auto& e : fs::directory_iterator(exp)) {
            if (e.is_directory() && e.path().filename().string().find("_seed") != std::string::npos) {
                cell_dirs.push_back(e.path());
            }
        }
    }
    std::sort(cell_dirs.begin(), cell_dirs.end());
    if (cell_dirs.empty()) {
        out << "no runs found in " << exp_dir << "\n";
        return 1;
    }

    std::vector<std::string> missing;
    std::vector<std::pair<RunRecord, FlopsReport>> cells;
    for (const auto& dir : cell_dirs) {
        if (!fs::exists(dir / "final.ckpt")) {
            missing.push_back((dir / "final.ckpt").string());
            continue;
        }
        if (!fs::exists(dir / "flops.json")) {
            missing.push_back((dir / "flops.json").string());
            continue;
        }
        auto ck = load_checkpoint((dir / "final.ckpt").string());
        std::ifstream fj(dir / "flops.json");
        auto flops = flops_from_json(json::parse(fj));
        write_sparsity_csv(dir / "sparsity.csv", ck.record);
        cells.emplace_back(std::move(ck.record), std::move(flops));
    }
    for (const auto& m : missing) out << "missing artifact: " << m << "\n";
    if (cells.empty()) {
        out << "no runs found in " << exp_dir << "\n";
        return 1;
    }

    const auto table = summary_table(gather_summaries(cells));
    write_text(exp / "summary.csv", table);
    out << table;
    return missing.empty() ? 0 : 1;
}

int validate_experiment(const ExperimentConfig& cfg, std::ostream& out) {
    cfg.check_files();
    const auto data = load_experiment_data(cfg);
    const auto steps_per_epoch = data.train.size() / cfg.train.batch_size;
    if (steps_per_epoch < 1) {
        throw std::invalid_argument("config: train.batch_size: training split of " +
                                    std::to_string(data.train.size()) +
                                    " samples is smaller than one batch");
    }
    const auto algo = cfg.resolve_algorithm(steps_per_epoch);
    const auto settings = cfg.resolve_train();
    Network net = Network::build(cfg.network.layers, cfg.network.input);
    algo.validate(net);

    out << "experiment " << cfg.name << "\n";
    out << "  dataset: " << cfg.dataset.kind << " train=" << data.train.size()
        << " test=" << data.test.size() << "\n";
    out << "  network: " << net.describe() << "\n";
    out << "  algorithm: " << cfg.algorithm.kind << " scope=" << cfg.algorithm.scope
        << (cfg.algorithm.structured ? " structured" : "") << "\n";
    out << "  steps/epoch: " << steps_per_epoch << ", total steps: "
        << settings.epochs * steps_per_epoch << "\n";

    // Predicted density trajectory under the schedule, densities spread
    // uniformly over prunable layers. Real runs redistribute by magnitude;
    // the estimate is labeled as such.
    RunRecord plan;
    plan.epochs = settings.epochs;
    plan.steps_per_epoch = steps_per_epoch;
    plan.batch_size = settings.batch_size;
    plan.step_loss.assign(static_cast<std::size_t>(settings.epochs * steps_per_epoch), 0.0);
    const auto infos = net.prunable_infos();
    const auto densities = plan_densities(infos, algo.init_plan);
    for (const auto& info : infos) {
        plan.layer_ids.push_back(info.layer_id);
        plan.layer_numel.push_back(info.numel);
        plan.initial_nnz.push_back(round_half_up(densities.at(info.layer_id) *
                                                 static_cast<double>(info.numel)));
    }
    plan.final_nnz = plan.initial_nnz;

    if (algo.has_prune_schedule()) {
        const auto& ps = algo.prune_schedule;
        out << "  prune events (step, epoch, sparsity, regen ratio):\n";
        for (std::int64_t k = 0; k <= ps.n_intervals; ++k) {
            const auto t = ps.t_start + k * ps.interval;
            const double s = ps.sparsity_at(t);
            const double r = algo.kind == AlgoKind::granet ? algo.regen_schedule.ratio_at(t) : 0.0;
            out << "    t=" << t << " epoch=" << t / steps_per_epoch << " s=" << std::setprecision(6)
                << s << " r=" << r << "\n";

            PruneEvent ev;
            ev.step = t;
            for (std::size_t i = 0; i < plan.layer_ids.size(); ++i) {
                LayerEvent le;
                le.layer_id = plan.layer_ids[i];
                le.numel = plan.layer_numel[i];
                le.nnz = round_half_up((1.0 - s) * static_cast<double>(le.numel));
                le.nnz = std::min(le.nnz, plan.final_nnz[i]);  // schedules never resurrect
                ev.used_dense_gradient = algo.kind == AlgoKind::granet && r > 0.0;
                plan.final_nnz[i] = le.nnz;
                ev.layers.push_back(le);
            }
            plan.events.push_back(std::move(ev));
        }
    } else if (algo.is_dst()) {
        out << "  topology updates every " << algo.dst_update_interval << " steps";
        if (algo.regen_schedule.t_end > 0) out << " until step " << algo.regen_schedule.t_end;
        out << "\n";
    }

    const auto flops = train_flops(plan, cfg.network.layers, cfg.network.input,
                                   FlopsOptions{cfg.charge_dense_regen});
    out << std::setprecision(6);
    out << "  estimated flops (uniform-density approximation):\n";
    out << "    dense forward/sample: " << flops.dense_forward_flops << "\n";
    out << "    final forward/sample: " << flops.forward_flops_per_sample
        << " (normalized " << flops.normalized_forward << ")\n";
    out << "    training total: " << flops.train_flops_total << " (normalized "
        << flops.normalized_train << ")\n";
    if (cfg.probes.present) {
        out << "  probes: " << cfg.probes.snapshot_epochs.size() << " epochs x "
            << cfg.probes.prune_rates.size() << " rates x " << cfg.probes.regen_options.size()
            << " regen options, k=" << cfg.resolved_probe_k() << "\n";
    }
    return 0;
}

int probe_experiment(const ExperimentConfig& cfg, const std::string& root, int jobs,
                     std::ostream& log) {
    if (!cfg.probes.present) {
        throw std::invalid_argument("config: probes: section required for the probe command");
    }
    // Base runs must snapshot every probed epoch.
    ExperimentConfig base_cfg = cfg;
    for (auto e : cfg.probes.snapshot_epochs) {
        auto& ce = base_cfg.train.checkpoint_epochs;
        if (std::find(ce.begin(), ce.end(), e) == ce.end()) ce.push_back(e);
    }
    std::sort(base_cfg.train.checkpoint_epochs.begin(), base_cfg.train.checkpoint_epochs.end());

    const int rc = run_experiment(base_cfg, root, jobs, log);
    if (rc != 0) {
        log << "probe: base runs incomplete, aborting sweep\n";
        return rc;
    }

    const fs::path exp = fs::path(root) / cfg.name;
    const auto data = load_experiment_data(cfg);
    const auto settings = cfg.resolve_train();

    std::vector<std::vector<Checkpoint>> series(cfg.seeds.size());
    std::vector<RunRecord> records(cfg.seeds.size());
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        const auto dir = exp / cell_name(cfg, cfg.seeds[i]);
        const auto have = available_snapshot_epochs(dir / "checkpoints");
        for (auto e : cfg.probes.snapshot_epochs) {
            if (std::find(have.begin(), have.end(), e) == have.end()) {
                std::ostringstream os;
                os << "cell " << cell_name(cfg, cfg.seeds[i]) << ": no checkpoint for epoch " << e
                   << "; available:";
                if (have.empty()) os << " none";
                for (auto h : have) os << " " << h;
                os << " (delete final.ckpt to retrain with snapshots)";
                throw std::runtime_error(os.str());
            }
            series[i].push_back(
                load_checkpoint((dir / "checkpoints" / ("epoch_" + std::to_string(e) + ".ckpt")).string()));
        }
        records[i] = load_checkpoint((dir / "final.ckpt").string()).record;
    }

    SweepGrid grid;
    grid.arch = cfg.name;
    std::replace(grid.arch.begin(), grid.arch.end(), ',', ';');
    grid.pretrain_sparsity = cfg.algorithm.init_sparsity;
    grid.snapshot_epochs = cfg.probes.snapshot_epochs;
    grid.prune_rates = cfg.probes.prune_rates;
    grid.regen_options = cfg.probes.regen_options;
    grid.k = cfg.resolved_probe_k();
    grid.include_final_gap = cfg.probes.include_final_gap;
    grid.scope = prune_scope_from_name(cfg.probes.scope);
    grid.structured = cfg.probes.structured;

    std::vector<SweepBase> bases;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        bases.push_back({cfg.seeds[i], &series[i], &records[i]});
    }

    const auto rows = probe_sweep(grid, bases, cfg.network.layers, cfg.network.input, data.train,
                                  data.test, settings);
    const auto csv = (exp / "probes.csv").string();
    write_sweep_csv(csv, rows);

    std::size_t failed = 0;
    for (const auto& r : rows) {
        if (r.failed) {
            ++failed;
            log << "probe cell failed (epoch=" << r.snapshot_epoch << " p=" << r.prune_rate
                << " regen=" << r.regen << " seed=" << r.seed << "): " << r.error << "\n";
        }
    }
    log << "probe sweep: " << rows.size() << " cells, " << failed << " failed -> " << csv << "\n";
    return failed == 0 ? 0 : 1;
}

}  // namespace sparselab
