#include "sparselab/masks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sparselab {

namespace {

struct Slot {
    double magnitude;
    std::int64_t layer;
    std::int64_t index;
};

bool keep_before(const Slot& a, const Slot& b) {
    if (a.magnitude != b.magnitude) return a.magnitude > b.magnitude;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.index < b.index;
}

void check_fraction(double f, const char* what) {
    if (!(f >= 0.0 && f <= 1.0)) {
        throw std::invalid_argument(std::string(what) + " must be in [0, 1], got " + std::to_string(f));
    }
}

// Keeps the `keep` largest-|w| active positions of one layer.
std::int64_t keep_top_active(MaskedParam& p, std::int64_t keep) {
    std::vector<Slot> active;
    active.reserve(static_cast<std::size_t>(p.nnz()));
    for (std::int64_t i = 0; i < p.numel(); ++i) {
        if (p.mask[static_cast<std::size_t>(i)]) {
            active.push_back({std::abs(p.weight.at(i)), 0, i});
        }
    }
    const auto nnz = static_cast<std::int64_t>(active.size());
    if (keep >= nnz) return 0;
    std::sort(active.begin(), active.end(), keep_before);
    for (std::int64_t k = keep; k < nnz; ++k) {
        const auto i = active[static_cast<std::size_t>(k)].index;
        p.weight.at(i) = 0.0;
        p.mask[static_cast<std::size_t>(i)] = 0;
    }
    return nnz - keep;
}

}  // namespace

MaskedParam::MaskedParam(std::string id, Tensor w)
    : layer_id(std::move(id)), weight(std::move(w)), mask(static_cast<std::size_t>(weight.numel()), 1) {}

std::int64_t MaskedParam::nnz() const {
    std::int64_t n = 0;
    for (auto m : mask) n += m ? 1 : 0;
    return n;
}

double MaskedParam::density() const {
    return numel() == 0 ? 0.0 : static_cast<double>(nnz()) / static_cast<double>(numel());
}

void MaskedParam::enable_stash() {
    if (stash.empty()) stash.assign(static_cast<std::size_t>(numel()), 0.0);
}

void MaskedParam::apply_mask() {
    for (std::int64_t i = 0; i < numel(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) weight.at(i) = 0.0;
    }
}

std::string sparse_init_name(SparseInitMode mode) {
    switch (mode) {
        case SparseInitMode::dense: return "dense";
        case SparseInitMode::uniform: return "uniform";
        case SparseInitMode::erk: return "erk";
    }
    return "?";
}

SparseInitMode sparse_init_from_name(const std::string& name) {
    if (name == "dense") return SparseInitMode::dense;
    if (name == "uniform") return SparseInitMode::uniform;
    if (name == "erk") return SparseInitMode::erk;
    throw std::invalid_argument("unknown sparse init mode: " + name);
}

std::string prune_scope_name(PruneScope scope) {
    return scope == PruneScope::global ? "global" : "uniform";
}

PruneScope prune_scope_from_name(const std::string& name) {
    if (name == "global") return PruneScope::global;
    if (name == "uniform") return PruneScope::uniform;
    throw std::invalid_argument("unknown prune scope: " + name);
}

std::int64_t round_half_up(double x) {
    return static_cast<std::int64_t>(std::floor(x + 0.5));
}

std::int64_t topk_keep_magnitude(MaskedParam& p, double keep_fraction) {
    check_fraction(keep_fraction, "keep_fraction");
    const auto keep = round_half_up(keep_fraction * static_cast<double>(p.nnz()));
    return keep_top_active(p, keep);
}

std::int64_t prune_layer_to_sparsity(MaskedParam& p, double target_sparsity) {
    check_fraction(target_sparsity, "target_sparsity");
    const auto keep = round_half_up((1.0 - target_sparsity) * static_cast<double>(p.numel()));
    return keep_top_active(p, keep);
}

namespace {

// Keeps the `keep` largest-|w| active positions across all given layers.
std::vector<std::int64_t> global_keep_top(const std::vector<MaskedParam*>& params,
                                          std::int64_t keep) {
    std::vector<Slot> active;
    for (std::size_t li = 0; li < params.size(); ++li) {
        const auto& p = *params[li];
        active.reserve(active.size() + static_cast<std::size_t>(p.nnz()));
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            if (p.mask[static_cast<std::size_t>(i)]) {
                active.push_back({std::abs(p.weight.at(i)), static_cast<std::int64_t>(li), i});
            }
        }
    }
    std::sort(active.begin(), active.end(), keep_before);
    std::vector<std::int64_t> removed(params.size(), 0);
    const auto nnz = static_cast<std::int64_t>(active.size());
    for (std::int64_t k = keep; k < nnz; ++k) {
        const auto& s = active[static_cast<std::size_t>(k)];
        auto& p = *params[static_cast<std::size_t>(s.layer)];
        p.weight.at(s.index) = 0.0;
        p.mask[static_cast<std::size_t>(s.index)] = 0;
        ++removed[static_cast<std::size_t>(s.layer)];
    }
    return removed;
}

}  // namespace

std::vector<std::int64_t> global_magnitude_prune(const std::vector<MaskedParam*>& params,
                                                 double target_sparsity) {
    check_fraction(target_sparsity, "target_sparsity");
    std::int64_t total = 0;
    std::int64_t nnz = 0;
    for (const auto* p : params) {
        total += p->numel();
        nnz += p->nnz();
    }
    if (total == 0) return std::vector<std::int64_t>(params.size(), 0);

    // The guard works in keep counts, not fractions: floor rounding lets the
    // achieved fraction overshoot the next scheduled one on tiny layers while
    // the counts stay monotone. Only an actual resurrection is refused.
    const auto keep =
        static_cast<std::int64_t>(std::floor((1.0 - target_sparsity) * static_cast<double>(total)));
    if (keep > nnz) {
        const double current = 1.0 - static_cast<double>(nnz) / static_cast<double>(total);
        throw std::invalid_argument("global prune target " + std::to_string(target_sparsity) +
                                    " is below current sparsity " + std::to_string(current));
    }
    return global_keep_top(params, keep);
}

std::vector<std::int64_t> global_topk_keep(const std::vector<MaskedParam*>& params,
                                           double keep_fraction) {
    check_fraction(keep_fraction, "keep_fraction");
    std::int64_t nnz = 0;
    for (const auto* p : params) nnz += p->nnz();
    return global_keep_top(params, round_half_up(keep_fraction * static_cast<double>(nnz)));
}

namespace {

// Shared keep-values selection: ranks active |w| and stashed |value|
// together and re-materializes the winning set.
std::vector<std::int64_t> keep_values_select(const std::vector<MaskedParam*>& params,
                                             std::int64_t keep) {
    std::vector<Slot> all;
    for (std::size_t li = 0; li < params.size(); ++li) {
        auto& p = *params[li];
        p.enable_stash();
        all.reserve(all.size() + static_cast<std::size_t>(p.numel()));
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            const double mag = p.mask[static_cast<std::size_t>(i)]
                                   ? std::abs(p.weight.at(i))
                                   : std::abs(p.stash[static_cast<std::size_t>(i)]);
            all.push_back({mag, static_cast<std::int64_t>(li), i});
        }
    }
    std::sort(all.begin(), all.end(), keep_before);

    std::vector<std::int64_t> removed(params.size(), 0);
    const auto n = static_cast<std::int64_t>(all.size());
    for (std::int64_t k = 0; k < n; ++k) {
        const auto& s = all[static_cast<std::size_t>(k)];
        auto& p = *params[static_cast<std::size_t>(s.layer)];
        auto& m = p.mask[static_cast<std::size_t>(s.index)];
        if (k < keep) {
            if (!m) {  // resurrect the stashed value
                p.weight.at(s.index) = p.stash[static_cast<std::size_t>(s.index)];
                p.stash[static_cast<std::size_t>(s.index)] = 0.0;
                m = 1;
            }
        } else {
            if (m) {
                p.stash[static_cast<std::size_t>(s.index)] = p.weight.at(s.index);
                p.weight.at(s.index) = 0.0;
                m = 0;
                ++removed[static_cast<std::size_t>(s.layer)];
            }
        }
    }
    return removed;
}

}  // namespace

std::vector<std::int64_t> global_magnitude_prune_keep_values(const std::vector<MaskedParam*>& params,
                                                             double target_sparsity) {
    check_fraction(target_sparsity, "target_sparsity");
    std::int64_t total = 0;
    for (const auto* p : params) total += p->numel();
    if (total == 0) return std::vector<std::int64_t>(params.size(), 0);
    const auto keep = static_cast<std::int64_t>(std::floor((1.0 - target_sparsity) * static_cast<double>(total)));
    return keep_values_select(params, keep);
}

std::int64_t prune_layer_to_sparsity_keep_values(MaskedParam& p, double target_sparsity) {
    check_fraction(target_sparsity, "target_sparsity");
    const auto keep = round_half_up((1.0 - target_sparsity) * static_cast<double>(p.numel()));
    std::vector<MaskedParam*> one{&p};
    return keep_values_select(one, keep)[0];
}

std::int64_t regenerate_by_gradient(MaskedParam& p, std::int64_t count, const std::vector<double>& grads) {
    if (static_cast<std::int64_t>(grads.size()) != p.numel()) {
        throw std::invalid_argument("regenerate_by_gradient: grad buffer has " +
                                    std::to_string(grads.size()) + " entries for " +
                                    std::to_string(p.numel()) + " weights");
    }
    if (count < 0) throw std::invalid_argument("regenerate_by_gradient: negative count");
    std::vector<Slot> zeros;
    for (std::int64_t i = 0; i < p.numel(); ++i) {
        if (!p.mask[static_cast<std::size_t>(i)]) {
            zeros.push_back({std::abs(grads[static_cast<std::size_t>(i)]), 0, i});
        }
    }
    const auto avail = static_cast<std::int64_t>(zeros.size());
    const auto take = std::min(count, avail);
    std::sort(zeros.begin(), zeros.end(), keep_before);
    for (std::int64_t k = 0; k < take; ++k) {
        const auto i = zeros[static_cast<std::size_t>(k)].index;
        p.mask[static_cast<std::size_t>(i)] = 1;
        p.weight.at(i) = 0.0;  // regenerated connections start at zero
        if (p.has_stash()) p.stash[static_cast<std::size_t>(i)] = 0.0;
    }
    return take;
}

std::int64_t regenerate_random(MaskedParam& p, std::int64_t count, Rng& rng) {
    if (count < 0) throw std::invalid_argument("regenerate_random: negative count");
    std::vector<std::int64_t> zeros;
    for (std::int64_t i = 0; i < p.numel(); ++i) {
        if (!p.mask[static_cast<std::size_t>(i)]) zeros.push_back(i);
    }
    const auto avail = static_cast<std::int64_t>(zeros.size());
    const auto take = std::min(count, avail);
    for (std::int64_t k = 0; k < take; ++k) {
        const auto j = k + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(avail - k)));
        std::swap(zeros[static_cast<std::size_t>(k)], zeros[static_cast<std::size_t>(j)]);
        const auto i = zeros[static_cast<std::size_t>(k)];
        p.mask[static_cast<std::size_t>(i)] = 1;
        p.weight.at(i) = 0.0;
        if (p.has_stash()) p.stash[static_cast<std::size_t>(i)] = 0.0;
    }
    return take;
}

namespace {

void check_conv_shape(const MaskedParam& conv, const char* op) {
    if (conv.weight.shape.size() != 4) {
        throw std::invalid_argument(std::string(op) + ": expected a conv weight [out_ch, in_ch, kh, kw], got " +
                                    shape_str(conv.weight.shape));
    }
}

}  // namespace

std::int64_t active_filter_count(const MaskedParam& conv) {
    check_conv_shape(conv, "active_filter_count");
    const auto filters = conv.weight.shape[0];
    const auto fs = conv.numel() / filters;
    std::int64_t active = 0;
    for (std::int64_t f = 0; f < filters; ++f) {
        for (std::int64_t i = 0; i < fs; ++i) {
            if (conv.mask[static_cast<std::size_t>(f * fs + i)]) {
                ++active;
                break;
            }
        }
    }
    return active;
}

std::int64_t filter_prune_structured(MaskedParam& conv, double prune_fraction) {
    check_conv_shape(conv, "filter_prune_structured");
    check_fraction(prune_fraction, "prune_fraction");
    const auto filters = conv.weight.shape[0];
    const auto fs = conv.numel() / filters;

    std::vector<Slot> active;  // magnitude = sum |w| over the filter slice
    for (std::int64_t f = 0; f < filters; ++f) {
        bool any = false;
        double sum = 0.0;
        for (std::int64_t i = 0; i < fs; ++i) {
            const auto idx = f * fs + i;
            if (conv.mask[static_cast<std::size_t>(idx)]) any = true;
            sum += std::abs(conv.weight.at(idx));
        }
        if (any) active.push_back({sum, 0, f});
    }
    const auto n_active = static_cast<std::int64_t>(active.size());
    const auto keep = round_half_up((1.0 - prune_fraction) * static_cast<double>(n_active));
    if (keep >= n_active) return 0;
    std::sort(active.begin(), active.end(), keep_before);
    for (std::int64_t k = keep; k < n_active; ++k) {
        const auto f = active[static_cast<std::size_t>(k)].index;
        for (std::int64_t i = 0; i < fs; ++i) {
            const auto idx = f * fs + i;
            conv.weight.at(idx) = 0.0;
            conv.mask[static_cast<std::size_t>(idx)] = 0;
        }
    }
    return n_active - keep;
}

std::int64_t filter_regenerate_structured(MaskedParam& conv, std::int64_t count,
                                          const std::vector<double>& grads) {
    check_conv_shape(conv, "filter_regenerate_structured");
    if (static_cast<std::int64_t>(grads.size()) != conv.numel()) {
        throw std::invalid_argument("filter_regenerate_structured: grad buffer size mismatch");
    }
    if (count < 0) throw std::invalid_argument("filter_regenerate_structured: negative count");
    const auto filters = conv.weight.shape[0];
    const auto fs = conv.numel() / filters;

    std::vector<Slot> zero_filters;
    for (std::int64_t f = 0; f < filters; ++f) {
        bool any = false;
        double gsum = 0.0;
        for (std::int64_t i = 0; i < fs; ++i) {
            const auto idx = f * fs + i;
            if (conv.mask[static_cast<std::size_t>(idx)]) any = true;
            gsum += std::abs(grads[static_cast<std::size_t>(idx)]);
        }
        if (!any) zero_filters.push_back({gsum, 0, f});
    }
    const auto take = std::min(count, static_cast<std::int64_t>(zero_filters.size()));
    std::sort(zero_filters.begin(), zero_filters.end(), keep_before);
    for (std::int64_t k = 0; k < take; ++k) {
        const auto f = zero_filters[static_cast<std::size_t>(k)].index;
        for (std::int64_t i = 0; i < fs; ++i) {
            const auto idx = f * fs + i;
            conv.mask[static_cast<std::size_t>(idx)] = 1;
            conv.weight.at(idx) = 0.0;
        }
    }
    return take;
}

std::map<std::string, double> plan_densities(const std::vector<LayerShapeInfo>& layers,
                                             const SparsityPlan& plan) {
    if (!(plan.global_sparsity >= 0.0 && plan.global_sparsity < 1.0)) {
        throw std::invalid_argument("sparsity plan: global sparsity must be in [0, 1), got " +
                                    std::to_string(plan.global_sparsity));
    }
    std::map<std::string, double> out;
    if (plan.mode == SparseInitMode::dense) {
        for (const auto& l : layers) out[l.layer_id] = 1.0;
        return out;
    }
    if (plan.mode == SparseInitMode::uniform) {
        for (const auto& l : layers) out[l.layer_id] = 1.0 - plan.global_sparsity;
        return out;
    }

    // erk: density_l = eps * raw_l capped at 1, eps solved so the totals match.
    std::int64_t total = 0;
    std::vector<double> raw(layers.size(), 0.0);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        total += l.numel;
        if (l.kernel.size() == 4) {
            const double c_out = static_cast<double>(l.kernel[0]);
            const double c_in = static_cast<double>(l.kernel[1]);
            const double kh = static_cast<double>(l.kernel[2]);
            const double kw = static_cast<double>(l.kernel[3]);
            raw[i] = (c_in + c_out + kh + kw) / (c_in * c_out * kh * kw);
        } else {
            const double fi = static_cast<double>(l.fan_in);
            const double fo = static_cast<double>(l.fan_out);
            raw[i] = (fi + fo) / (fi * fo);
        }
    }
    const double target = (1.0 - plan.global_sparsity) * static_cast<double>(total);

    std::vector<bool> capped(layers.size(), false);
    for (;;) {
        double denom = 0.0;
        double capped_nnz = 0.0;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (capped[i]) {
                capped_nnz += static_cast<double>(layers[i].numel);
            } else {
                denom += raw[i] * static_cast<double>(layers[i].numel);
            }
        }
        if (denom == 0.0) break;  // everything capped; densities are all 1
        const double eps = (target - capped_nnz) / denom;
        bool changed = false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (!capped[i] && eps * raw[i] > 1.0) {
                capped[i] = true;
                changed = true;
            }
        }
        if (!changed) {
            for (std::size_t i = 0; i < layers.size(); ++i) {
                out[layers[i].layer_id] = capped[i] ? 1.0 : eps * raw[i];
            }
            return out;
        }
    }
    for (const auto& l : layers) out[l.layer_id] = 1.0;
    return out;
}

void apply_sparsity_plan(const std::vector<MaskedParam*>& params,
                         const std::vector<LayerShapeInfo>& infos, const SparsityPlan& plan,
                         Rng& rng) {
    if (params.size() != infos.size()) {
        throw std::invalid_argument("apply_sparsity_plan: params/infos size mismatch");
    }
    const auto densities = plan_densities(infos, plan);
    for (std::size_t li = 0; li < params.size(); ++li) {
        auto& p = *params[li];
        const double d = densities.at(infos[li].layer_id);
        const auto n = p.numel();
        auto target = round_half_up(d * static_cast<double>(n));
        if (target >= n) {
            std::fill(p.mask.begin(), p.mask.end(), 1);
            continue;
        }
        std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        std::fill(p.mask.begin(), p.mask.end(), 0);
        for (std::int64_t k = 0; k < target; ++k) {
            const auto j = k + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(n - k)));
            std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(j)]);
            p.mask[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = 1;
        }
        p.apply_mask();
    }
}

}  // namespace sparselab
