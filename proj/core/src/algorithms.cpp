#include "sparselab/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sparselab/checkpoint.hpp"

namespace sparselab {

std::string algo_kind_name(AlgoKind kind) {
    switch (kind) {
        case AlgoKind::granet: return "granet";
        case AlgoKind::gmp: return "gmp";
        case AlgoKind::rigl: return "rigl";
        case AlgoKind::set: return "set";
        case AlgoKind::static_sparse: return "static";
        case AlgoKind::dense: return "dense";
    }
    return "?";
}

AlgoKind algo_kind_from_name(const std::string& name) {
    if (name == "granet") return AlgoKind::granet;
    if (name == "gmp") return AlgoKind::gmp;
    if (name == "rigl") return AlgoKind::rigl;
    if (name == "set") return AlgoKind::set;
    if (name == "static") return AlgoKind::static_sparse;
    if (name == "dense") return AlgoKind::dense;
    throw std::invalid_argument("unknown algorithm: " + name +
                                " (granet, gmp, rigl, set, static, dense)");
}

void AlgorithmSpec::validate(const Network& net) const {
    if (kind == AlgoKind::dense) {
        if (init_plan.mode != SparseInitMode::dense || init_plan.global_sparsity != 0.0) {
            throw std::invalid_argument("dense runs take no sparse init plan");
        }
    }
    if (has_prune_schedule()) {
        prune_schedule.validate();
        const double plan_s =
            init_plan.mode == SparseInitMode::dense ? 0.0 : init_plan.global_sparsity;
        if (std::abs(plan_s - prune_schedule.s_initial) > 1e-9) {
            throw std::invalid_argument("init plan sparsity " + std::to_string(plan_s) +
                                        " does not match the schedule's initial sparsity " +
                                        std::to_string(prune_schedule.s_initial));
        }
    }
    if (kind == AlgoKind::granet || is_dst()) regen_schedule.validate();
    if (is_dst() && dst_update_interval < 1) {
        throw std::invalid_argument("dst update interval must be >= 1");
    }
    if (gmp_keep_values && kind != AlgoKind::gmp) {
        throw std::invalid_argument("gmp_keep_values applies only to gmp runs");
    }
    if (structured) {
        if (!has_prune_schedule()) {
            throw std::invalid_argument("structured mode applies only to granet/gmp runs");
        }
        if (scope != PruneScope::uniform) {
            throw std::invalid_argument("structured mode requires uniform scope");
        }
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            if (net.param_of_layer[i] >= 0 && net.layers[i].kind != LayerKind::conv2d) {
                throw std::invalid_argument("structured mode requires all prunable layers to be conv2d; layer " +
                                            std::to_string(i) + " is " +
                                            layer_kind_name(net.layers[i].kind));
            }
        }
    }
}

double RunRecord::initial_global_density() const {
    std::int64_t total = 0, nnz = 0;
    for (std::size_t i = 0; i < layer_numel.size(); ++i) {
        total += layer_numel[i];
        nnz += initial_nnz[i];
    }
    return total == 0 ? 1.0 : static_cast<double>(nnz) / static_cast<double>(total);
}

double RunRecord::global_density_after(std::size_t event_index) const {
    const auto& ev = events.at(event_index);
    std::int64_t total = 0, nnz = 0;
    for (const auto& l : ev.layers) {
        total += l.numel;
        nnz += l.nnz;
    }
    return total == 0 ? 1.0 : static_cast<double>(nnz) / static_cast<double>(total);
}

std::uint64_t digest_bytes(const void* data, std::size_t size, std::uint64_t h) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string rewind_mode_name(RewindMode mode) {
    return mode == RewindMode::lth_weights ? "lth_weights" : "lr_rewind";
}

RewindMode rewind_mode_from_name(const std::string& name) {
    if (name == "lth_weights") return RewindMode::lth_weights;
    if (name == "lr_rewind") return RewindMode::lr_rewind;
    throw std::invalid_argument("unknown rewind mode: " + name + " (lth_weights, lr_rewind)");
}

double evaluate_accuracy(const Network& net, const Dataset& ds, std::int64_t batch_size) {
    if (batch_size < 1) throw std::invalid_argument("evaluate_accuracy: batch size must be >= 1");
    const auto n = ds.size();
    if (n == 0) throw std::invalid_argument("evaluate_accuracy: empty dataset");
    std::int64_t correct = 0;
    Tensor batch;
    std::vector<std::int64_t> ys;
    std::vector<std::int64_t> rows;
    for (std::int64_t start = 0; start < n; start += batch_size) {
        const auto stop = std::min(n, start + batch_size);
        rows.resize(static_cast<std::size_t>(stop - start));
        std::iota(rows.begin(), rows.end(), start);
        ds.gather(rows, batch, ys);
        const auto pred = net.predict(batch);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] == ys[i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

namespace {

std::vector<double> copy_of(const std::vector<double>& v) { return v; }

void snapshot_params(const Network& net, std::vector<std::vector<double>>& weights,
                     std::vector<std::vector<double>>& biases) {
    weights.clear();
    biases.clear();
    for (const auto& p : net.params) weights.push_back(copy_of(p.weight.data));
    for (const auto& b : net.biases) biases.push_back(copy_of(b.data));
}

RunRecord make_start_record(const Network& net, const AlgorithmSpec& algo,
                            const TrainSettings& settings, std::uint64_t seed,
                            std::int64_t steps_per_epoch) {
    RunRecord rec;
    rec.algorithm = algo_kind_name(algo.kind);
    rec.seed = seed;
    rec.epochs = settings.epochs;
    rec.steps_per_epoch = steps_per_epoch;
    rec.batch_size = settings.batch_size;
    for (const auto& p : net.params) {
        if (!p.prunable) continue;
        rec.layer_ids.push_back(p.layer_id);
        rec.layer_numel.push_back(p.numel());
        rec.initial_nnz.push_back(p.nnz());
    }
    snapshot_params(net, rec.initial_weights, rec.initial_biases);
    return rec;
}

void finalize_record(RunRecord& rec, const Network& net, const Dataset& train, const Dataset& test,
                     std::int64_t eval_batch) {
    rec.final_nnz.clear();
    for (const auto& p : net.params) {
        if (p.prunable) rec.final_nnz.push_back(p.nnz());
    }
    snapshot_params(net, rec.final_weights, rec.final_biases);
    rec.final_masks.clear();
    for (const auto& p : net.params) rec.final_masks.push_back(p.mask);

    std::uint64_t mh = 1469598103934665603ull;
    std::uint64_t wh = 1469598103934665603ull;
    for (const auto& p : net.params) {
        mh = digest_bytes(p.mask.data(), p.mask.size(), mh);
        wh = digest_bytes(p.weight.data.data(), p.weight.data.size() * sizeof(double), wh);
    }
    for (const auto& b : net.biases) {
        wh = digest_bytes(b.data.data(), b.data.size() * sizeof(double), wh);
    }
    rec.final_mask_digest = mh;
    rec.final_weight_digest = wh;
    rec.final_train_accuracy = evaluate_accuracy(net, train, eval_batch);
    rec.final_test_accuracy = evaluate_accuracy(net, test, eval_batch);
}

// One drop/regrow cycle on a single layer; returns its event row.
LayerEvent regen_cycle(MaskedParam& p, double ratio, bool structured, bool by_gradient, Rng* rng) {
    LayerEvent le;
    le.layer_id = p.layer_id;
    if (!p.weight.has_grad() && by_gradient) {
        throw std::logic_error("regeneration needs gradients for " + p.layer_id);
    }
    if (structured) {
        le.removed = filter_prune_structured(p, ratio);
        le.regenerated = filter_regenerate_structured(p, le.removed, p.weight.grad);
    } else {
        le.removed = topk_keep_magnitude(p, 1.0 - ratio);
        le.regenerated = by_gradient ? regenerate_by_gradient(p, le.removed, p.weight.grad)
                                     : regenerate_random(p, le.removed, *rng);
    }
    le.clamped = le.regenerated < le.removed;
    return le;
}

struct LoopState {
    Network* net;
    SgdState* opt;
    RngStreams* rng;
    RunRecord* rec;
};

// Prune/regrow hook, called after the optimizer step at global step t.
void policy_event(LoopState& st, const AlgorithmSpec& algo, std::int64_t t) {
    auto& net = *st.net;
    const bool structured = algo.structured;

    if (algo.has_prune_schedule() && algo.prune_schedule.is_prune_step(t)) {
        const double target = algo.prune_schedule.sparsity_at(t);
        PruneEvent ev;
        ev.step = t;
        ev.scope = algo.scope;
        ev.target_sparsity = target;
        auto prunable = net.prunable_params();

        std::vector<std::int64_t> sched_pruned(prunable.size(), 0);
        if (structured) {
            for (std::size_t i = 0; i < prunable.size(); ++i) {
                auto& p = *prunable[i];
                const auto filters = p.weight.shape[0];
                const auto active = active_filter_count(p);
                const auto keep = std::min(round_half_up((1.0 - target) * static_cast<double>(filters)), active);
                const double frac = active == 0 ? 0.0 : 1.0 - static_cast<double>(keep) / static_cast<double>(active);
                sched_pruned[i] = filter_prune_structured(p, frac);
            }
        } else if (algo.scope == PruneScope::global) {
            sched_pruned = algo.gmp_keep_values ? global_magnitude_prune_keep_values(prunable, target)
                                                : global_magnitude_prune(prunable, target);
        } else {
            for (std::size_t i = 0; i < prunable.size(); ++i) {
                sched_pruned[i] = algo.gmp_keep_values
                                      ? prune_layer_to_sparsity_keep_values(*prunable[i], target)
                                      : prune_layer_to_sparsity(*prunable[i], target);
            }
        }

        const double r = algo.kind == AlgoKind::granet ? algo.regen_schedule.ratio_at(t) : 0.0;
        ev.regen_ratio = r;
        ev.used_dense_gradient = algo.kind == AlgoKind::granet && r > 0.0;
        for (std::size_t i = 0; i < prunable.size(); ++i) {
            LayerEvent le;
            if (algo.kind == AlgoKind::granet) {
                le = regen_cycle(*prunable[i], r, structured, true, nullptr);
            } else {
                le.layer_id = prunable[i]->layer_id;
            }
            le.schedule_pruned = sched_pruned[i];
            le.nnz = prunable[i]->nnz();
            le.numel = prunable[i]->numel();
            ev.layers.push_back(std::move(le));
        }
        ev.achieved_sparsity = net.global_sparsity();
        st.opt->zero_velocity_at_masked(net);
        st.rec->events.push_back(std::move(ev));
        return;
    }

    if (algo.is_dst() && t > 0 && t % algo.dst_update_interval == 0 &&
        (algo.regen_schedule.t_end == 0 || t < algo.regen_schedule.t_end)) {
        const double r = algo.regen_schedule.ratio_at(t);
        PruneEvent ev;
        ev.step = t;
        ev.scope = PruneScope::uniform;
        ev.regen_ratio = r;
        ev.used_dense_gradient = algo.kind == AlgoKind::rigl;
        ev.target_sparsity = net.global_sparsity();
        for (auto* p : net.prunable_params()) {
            auto le = regen_cycle(*p, r, false, algo.kind == AlgoKind::rigl,
                                  &st.rng->stream("regen"));
            le.nnz = p->nnz();
            le.numel = p->numel();
            ev.layers.push_back(std::move(le));
        }
        ev.achieved_sparsity = net.global_sparsity();
        st.opt->zero_velocity_at_masked(net);
        st.rec->events.push_back(std::move(ev));
    }
}

}  // namespace

RunRecord train_run(Network& net, const Dataset& train, const Dataset& test,
                    const AlgorithmSpec& algo, const TrainSettings& settings, std::uint64_t seed,
                    const Checkpoint* resume, std::vector<Checkpoint>* sink) {
    train.validate();
    test.validate();
    settings.lr.validate();
    if (settings.epochs < 1) throw std::invalid_argument("train_run: epochs must be >= 1");
    if (settings.batch_size < 1) throw std::invalid_argument("train_run: batch size must be >= 1");
    const auto steps_per_epoch = train.size() / settings.batch_size;
    if (steps_per_epoch < 1) {
        throw std::invalid_argument("train_run: training split of " + std::to_string(train.size()) +
                                    " samples is smaller than one batch of " +
                                    std::to_string(settings.batch_size));
    }

    RngStreams rng(seed);
    SgdState opt = SgdState::make(net);
    RunRecord rec;
    std::int64_t start_epoch = 0;

    if (resume) {
        if (resume->root_seed != seed) {
            throw std::invalid_argument("resume: checkpoint seed " + std::to_string(resume->root_seed) +
                                        " does not match run seed " + std::to_string(seed));
        }
        restore_checkpoint(*resume, net, opt, rng);
        algo.validate(net);
        rec = resume->record;
        start_epoch = resume->next_epoch;
        if (rec.steps_per_epoch != steps_per_epoch || rec.batch_size != settings.batch_size) {
            throw std::invalid_argument("resume: checkpoint was taken with a different batch geometry");
        }
        rec.epochs = settings.epochs;
    } else {
        if (algo.protect_first_last) {
            std::vector<MaskedParam*> all;
            for (auto& p : net.params) all.push_back(&p);
            if (all.size() < 3) {
                throw std::invalid_argument("protect_first_last leaves no prunable layer");
            }
            all.front()->prunable = false;
            all.back()->prunable = false;
        }
        algo.validate(net);
        net.init_params(rng.stream("init"));
        auto prunable = net.prunable_params();
        apply_sparsity_plan(prunable, net.prunable_infos(), algo.init_plan,
                            rng.stream("sparse_init"));
        if (algo.gmp_keep_values) {
            for (auto* p : prunable) p->enable_stash();
        }
        rec = make_start_record(net, algo, settings, seed, steps_per_epoch);
    }

    LoopState st{&net, &opt, &rng, &rec};
    Tensor batch_x;
    std::vector<std::int64_t> batch_y;
    std::vector<std::int64_t> rows(static_cast<std::size_t>(settings.batch_size));

    for (std::int64_t e = start_epoch; e < settings.epochs; ++e) {
        const SgdHparams hp{settings.lr.lr_at_epoch(e), settings.momentum, settings.weight_decay};
        const auto order = shuffled_indices(train.size(), rng.stream("shuffle"));
        double epoch_loss = 0.0;

        for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
            const auto t = e * steps_per_epoch + s;
            std::copy_n(order.begin() + s * settings.batch_size, settings.batch_size, rows.begin());
            train.gather(rows, batch_x, batch_y);

            net.zero_grad();
            ForwardCache fc;
            Tensor logits = net.forward(batch_x, &fc);
            double loss;
            try {
                loss = softmax_cross_entropy(logits, batch_y);
            } catch (const std::runtime_error& ex) {
                rec.aborted = true;
                rec.abort_reason = std::string("step ") + std::to_string(t) + ": " + ex.what();
                finalize_record(rec, net, train, test, settings.eval_batch_size);
                if (sink) sink->push_back(capture_checkpoint(net, opt, rng, rec, e, t));
                return rec;
            }
            rec.step_loss.push_back(loss);
            epoch_loss += loss;
            if (!std::isfinite(loss) || loss > settings.divergence_loss) {
                rec.aborted = true;
                std::ostringstream why;
                why << "loss diverged at step " << t << " (" << loss << " > "
                    << settings.divergence_loss << ")";
                rec.abort_reason = why.str();
                finalize_record(rec, net, train, test, settings.eval_batch_size);
                if (sink) sink->push_back(capture_checkpoint(net, opt, rng, rec, e, t));
                return rec;
            }

            Tensor dlogits(logits.shape);
            dlogits.data = logits.grad;
            net.backward(fc, dlogits);
            sgd_step(net, opt, hp);
            policy_event(st, algo, t);
        }

        const auto t_last = (e + 1) * steps_per_epoch - 1;
        rec.metrics.push_back({t_last, e, "train", "loss",
                               epoch_loss / static_cast<double>(steps_per_epoch)});
        rec.metrics.push_back({t_last, e, "run", "lr", hp.lr});
        rec.metrics.push_back(
            {t_last, e, "train", "accuracy", evaluate_accuracy(net, train, settings.eval_batch_size)});
        rec.metrics.push_back(
            {t_last, e, "test", "accuracy", evaluate_accuracy(net, test, settings.eval_batch_size)});

        if (sink && std::find(settings.checkpoint_epochs.begin(), settings.checkpoint_epochs.end(),
                              e) != settings.checkpoint_epochs.end()) {
            sink->push_back(capture_checkpoint(net, opt, rng, rec, e + 1, (e + 1) * steps_per_epoch));
        }
    }

    finalize_record(rec, net, train, test, settings.eval_batch_size);
    return rec;
}

namespace {

// Shared scaffolding for the retrainers: frozen masks, fresh optimizer,
// full LR schedule, no prune events.
RunRecord retrain_frozen(const RunRecord& base, const std::vector<LayerSpec>& layers,
                         const Shape& input, const Dataset& train, const Dataset& test,
                         const TrainSettings& settings, std::uint64_t seed,
                         const std::vector<std::vector<double>>* weights,
                         const std::vector<std::vector<double>>* biases, bool reinit) {
    if (base.final_masks.empty()) {
        throw std::invalid_argument("retrain: run record carries no final masks");
    }
    Network net = Network::build(layers, input);
    if (net.params.size() != base.final_masks.size() ||
        net.biases.size() != base.final_biases.size()) {
        throw std::invalid_argument("retrain: run record does not match this architecture");
    }

    RngStreams rng(seed);
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        if (base.final_masks[i].size() != net.params[i].mask.size()) {
            throw std::invalid_argument("retrain: mask size mismatch at " + net.params[i].layer_id);
        }
        net.params[i].mask = base.final_masks[i];
    }
    if (reinit) {
        net.init_params(rng.stream("init"));
    } else {
        for (std::size_t i = 0; i < net.params.size(); ++i) {
            net.params[i].weight.data = (*weights)[i];
        }
        for (std::size_t i = 0; i < net.biases.size(); ++i) {
            net.biases[i].data = (*biases)[i];
        }
    }
    net.zero_weights_at_masked();

    AlgorithmSpec algo;
    algo.kind = AlgoKind::static_sparse;

    const auto steps_per_epoch = train.size() / settings.batch_size;
    Checkpoint start;
    start.root_seed = seed;
    start.rng_states = rng.snapshot();
    for (const auto& p : net.params) {
        start.weights.push_back(p.weight.data);
        start.masks.push_back(p.mask);
        start.prunable_flags.push_back(p.prunable ? 1 : 0);
        start.stash.emplace_back();
        start.weight_velocity.emplace_back(p.weight.data.size(), 0.0);
    }
    for (const auto& b : net.biases) {
        start.biases.push_back(b.data);
        start.bias_velocity.emplace_back(b.data.size(), 0.0);
    }
    start.record = make_start_record(net, algo, settings, seed, steps_per_epoch);
    return train_run(net, train, test, algo, settings, seed, &start, nullptr);
}

}  // namespace

RunRecord reinit_ablation(const RunRecord& base, const std::vector<LayerSpec>& layers,
                          const Shape& input, const Dataset& train, const Dataset& test,
                          const TrainSettings& settings, std::uint64_t seed2) {
    return retrain_frozen(base, layers, input, train, test, settings, seed2, nullptr, nullptr, true);
}

RunRecord rewind_retrain(const RunRecord& base, RewindMode mode, const std::vector<LayerSpec>& layers,
                         const Shape& input, const Dataset& train, const Dataset& test,
                         const TrainSettings& settings, std::uint64_t seed) {
    if (mode == RewindMode::lth_weights) {
        if (base.initial_weights.empty()) {
            throw std::invalid_argument("lth_weights rewind: run record has no step-0 weight snapshot");
        }
        return retrain_frozen(base, layers, input, train, test, settings, seed,
                              &base.initial_weights, &base.initial_biases, false);
    }
    if (base.final_weights.empty()) {
        throw std::invalid_argument("lr_rewind: run record has no final weights");
    }
    return retrain_frozen(base, layers, input, train, test, settings, seed, &base.final_weights,
                          &base.final_biases, false);
}

}  // namespace sparselab
