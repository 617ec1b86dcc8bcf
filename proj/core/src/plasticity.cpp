#include "sparselab/plasticity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace sparselab {

namespace {

std::string probe_id(const PlasticityProbe& probe) {
    std::ostringstream os;
    os << "probe.e" << probe.snapshot_epoch << ".p" << probe.prune_rate << ".r"
       << (probe.regen ? 1 : 0);
    return os.str();
}

const Checkpoint& find_snapshot(const std::vector<Checkpoint>& series, std::int64_t epoch) {
    for (const auto& ck : series) {
        if (ck.next_epoch == epoch + 1) return ck;
    }
    std::ostringstream os;
    os << "no checkpoint for epoch " << epoch << "; available:";
    if (series.empty()) {
        os << " none";
    } else {
        for (const auto& ck : series) os << " " << (ck.next_epoch - 1);
    }
    throw std::invalid_argument(os.str());
}

// Restores the snapshot, applies the one-shot prune and the optional
// gradient regeneration, and repacks the result as a checkpoint the shared
// training loop can resume from. The snapshot itself is left untouched.
Checkpoint prepare_continuation(const Checkpoint& ck, const PlasticityProbe& probe,
                                const std::vector<LayerSpec>& layers, const Shape& input,
                                const Dataset& train, const TrainSettings& settings,
                                std::uint64_t base_seed, ProbeResult& out, const Dataset& test) {
    Network net = Network::build(layers, input);
    SgdState opt = SgdState::make(net);
    RngStreams rng(base_seed);
    restore_checkpoint(ck, net, opt, rng);

    out.t_pre = evaluate_accuracy(net, test, settings.eval_batch_size);

    auto prunable = net.prunable_params();
    std::vector<std::int64_t> removed(prunable.size(), 0);
    if (probe.structured) {
        for (std::size_t i = 0; i < prunable.size(); ++i) {
            removed[i] = filter_prune_structured(*prunable[i], probe.prune_rate);
        }
    } else if (probe.scope == PruneScope::global) {
        removed = global_topk_keep(prunable, 1.0 - probe.prune_rate);
    } else {
        for (std::size_t i = 0; i < prunable.size(); ++i) {
            removed[i] = topk_keep_magnitude(*prunable[i], 1.0 - probe.prune_rate);
        }
    }
    for (auto r : removed) out.removed_total += r;

    if (probe.regen && out.removed_total > 0) {
        // Dense gradients from one private minibatch; the draw never touches
        // the restored training streams, so regeneration cannot perturb the
        // continuation's batch order.
        Rng draw(derive_stream_seed(base_seed, probe_id(probe)));
        const auto rows_all = shuffled_indices(train.size(), draw);
        const auto bsz = std::min<std::int64_t>(settings.batch_size, train.size());
        const std::vector<std::int64_t> rows(rows_all.begin(), rows_all.begin() + bsz);

        Tensor x;
        std::vector<std::int64_t> y;
        train.gather(rows, x, y);
        net.zero_grad();
        ForwardCache fc;
        Tensor logits = net.forward(x, &fc);
        softmax_cross_entropy(logits, y);
        Tensor dlogits(logits.shape);
        dlogits.data = logits.grad;
        net.backward(fc, dlogits);

        for (std::size_t i = 0; i < prunable.size(); ++i) {
            if (removed[i] == 0) continue;
            auto& p = *prunable[i];
            out.regenerated_total +=
                probe.structured ? filter_regenerate_structured(p, removed[i], p.weight.grad)
                                 : regenerate_by_gradient(p, removed[i], p.weight.grad);
        }
        net.zero_grad();
    }

    opt.zero_velocity_at_masked(net);
    return capture_checkpoint(net, opt, rng, ck.record, ck.next_epoch, ck.next_step);
}

}  // namespace

void PlasticityProbe::validate(std::int64_t total_epochs) const {
    if (snapshot_epoch < 0 || snapshot_epoch >= total_epochs) {
        throw std::invalid_argument("probe snapshot epoch " + std::to_string(snapshot_epoch) +
                                    " outside [0, " + std::to_string(total_epochs) + ")");
    }
    if (!(prune_rate > 0.0 && prune_rate < 1.0)) {
        throw std::invalid_argument("probe prune rate must be in (0, 1)");
    }
    if (k < 1) throw std::invalid_argument("probe continuation length k must be >= 1");
    if (structured && scope != PruneScope::uniform) {
        throw std::invalid_argument("structured probes prune per layer; use uniform scope");
    }
}

ProbeResult run_probe(const std::vector<Checkpoint>& series, const PlasticityProbe& probe,
                      const std::vector<LayerSpec>& layers, const Shape& input,
                      const Dataset& train, const Dataset& test, const TrainSettings& settings,
                      std::uint64_t base_seed) {
    probe.validate(settings.epochs);
    const double a_t = settings.lr.lr_at_epoch(probe.snapshot_epoch);
    if (probe.frozen_lr > 0.0 && std::abs(probe.frozen_lr - a_t) > 1e-12) {
        throw std::invalid_argument("probe frozen lr " + std::to_string(probe.frozen_lr) +
                                    " is not the lr in effect at epoch " +
                                    std::to_string(probe.snapshot_epoch) + " (" +
                                    std::to_string(a_t) + ")");
    }

    const auto& ck = find_snapshot(series, probe.snapshot_epoch);
    ProbeResult res;
    res.frozen_lr = a_t;
    Checkpoint cont = prepare_continuation(ck, probe, layers, input, train, settings, base_seed,
                                           res, test);

    TrainSettings frozen = settings;
    frozen.epochs = probe.snapshot_epoch + 1 + probe.k;
    frozen.lr = StepLrSchedule{a_t, 1.0, {}};
    frozen.checkpoint_epochs.clear();

    AlgorithmSpec algo;
    algo.kind = AlgoKind::static_sparse;
    Network net = Network::build(layers, input);
    const auto rec = train_run(net, train, test, algo, frozen, base_seed, &cont, nullptr);

    res.t_post = rec.final_test_accuracy;
    res.plasticity = res.t_post - res.t_pre;
    return res;
}

ProbeResult run_final_gap(const std::vector<Checkpoint>& series, const RunRecord& base,
                          const PlasticityProbe& probe, const std::vector<LayerSpec>& layers,
                          const Shape& input, const Dataset& train, const Dataset& test,
                          const TrainSettings& settings, std::uint64_t base_seed) {
    probe.validate(settings.epochs);
    const auto& ck = find_snapshot(series, probe.snapshot_epoch);
    ProbeResult res;
    res.frozen_lr = settings.lr.lr_at_epoch(probe.snapshot_epoch);
    Checkpoint cont = prepare_continuation(ck, probe, layers, input, train, settings, base_seed,
                                           res, test);

    TrainSettings remaining = settings;
    remaining.checkpoint_epochs.clear();

    AlgorithmSpec algo;
    algo.kind = AlgoKind::static_sparse;
    Network net = Network::build(layers, input);
    const auto rec = train_run(net, train, test, algo, remaining, base_seed, &cont, nullptr);

    res.t_post = rec.final_test_accuracy;
    res.plasticity = res.t_post - res.t_pre;
    res.has_gap = true;
    res.t_final_unpruned = base.final_test_accuracy;
    res.t_final_pruned = rec.final_test_accuracy;
    res.gap = res.t_final_pruned - res.t_final_unpruned;
    return res;
}

std::vector<SweepRow> probe_sweep(const SweepGrid& grid, const std::vector<SweepBase>& bases,
                                  const std::vector<LayerSpec>& layers, const Shape& input,
                                  const Dataset& train, const Dataset& test,
                                  const TrainSettings& settings) {
    std::vector<SweepRow> rows;
    for (auto epoch : grid.snapshot_epochs) {
        for (auto rate : grid.prune_rates) {
            for (bool regen : grid.regen_options) {
                for (const auto& base : bases) {
                    SweepRow row;
                    row.arch = grid.arch;
                    row.pretrain_sparsity = grid.pretrain_sparsity;
                    row.snapshot_epoch = epoch;
                    row.prune_rate = rate;
                    row.regen = regen;
                    row.seed = base.seed;
                    row.gap = std::numeric_limits<double>::quiet_NaN();

                    PlasticityProbe probe;
                    probe.snapshot_epoch = epoch;
                    probe.prune_rate = rate;
                    probe.k = grid.k;
                    probe.regen = regen;
                    probe.scope = grid.scope;
                    probe.structured = grid.structured;

                    try {
                        const auto res = run_probe(*base.series, probe, layers, input, train,
                                                   test, settings, base.seed);
                        row.t_pre = res.t_pre;
                        row.t_post = res.t_post;
                        row.plasticity = res.plasticity;
                        if (grid.include_final_gap) {
                            const auto fin = run_final_gap(*base.series, *base.record, probe,
                                                           layers, input, train, test, settings,
                                                           base.seed);
                            row.gap = fin.gap;
                        }
                    } catch (const std::exception& ex) {
                        row.failed = true;
                        row.error = ex.what();
                    }
                    rows.push_back(std::move(row));
                }
            }
        }
    }
    return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "arch,pretrain_sparsity,snapshot_epoch,prune_rate,regen,seed,t_pre,t_post,plasticity,gap\n";
    out << std::setprecision(17);
    for (const auto& r : rows) {
        out << r.arch << ',' << r.pretrain_sparsity << ',' << r.snapshot_epoch << ','
            << r.prune_rate << ',' << (r.regen ? 1 : 0) << ',' << r.seed << ',';
        if (r.failed) {
            out << ",,,\n";
            continue;
        }
        out << r.t_pre << ',' << r.t_post << ',' << r.plasticity << ',';
        if (!std::isnan(r.gap)) out << r.gap;
        out << '\n';
    }
}

}  // namespace sparselab
