#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sparselab/rng.hpp"
#include "sparselab/tensor.hpp"

namespace sparselab {

/// A weight tensor paired with a same-shape binary mask. The enforced
/// invariant is weight[i] == 0 wherever mask[i] == 0; every operation in
/// this module preserves it.
struct MaskedParam {
    std::string layer_id;
    Tensor weight;
    std::vector<std::uint8_t> mask;
    bool prunable = true;

    /// Kept values of pruned weights, used only when a run reproduces
    /// mask-only pruning (gmp_keep_values). Empty otherwise.
    std::vector<double> stash;

    MaskedParam() = default;
    MaskedParam(std::string id, Tensor w);

    std::int64_t numel() const { return weight.numel(); }
    std::int64_t nnz() const;
    double density() const;
    double sparsity() const { return 1.0 - density(); }

    bool has_stash() const { return !stash.empty(); }
    void enable_stash();

    /// Zeroes weights at masked positions. Normally a no-op.
    void apply_mask();
};

enum class SparseInitMode { dense, uniform, erk };
std::string sparse_init_name(SparseInitMode mode);
SparseInitMode sparse_init_from_name(const std::string& name);

/// How the initial masks are laid out across layers.
struct SparsityPlan {
    SparseInitMode mode = SparseInitMode::dense;
    double global_sparsity = 0.0;
};

/// Per-layer record of one prune/regenerate event. `removed` counts only
/// the drop/regrow cycle, so removed == regenerated whenever regeneration
/// ran unclamped; the schedule-driven prune is tracked separately.
struct LayerEvent {
    std::string layer_id;
    std::int64_t schedule_pruned = 0;  // weights cut to reach the target sparsity
    std::int64_t removed = 0;          // weights dropped by the regeneration cycle
    std::int64_t regenerated = 0;
    std::int64_t nnz = 0;
    std::int64_t numel = 0;
    bool clamped = false;  // regeneration request exceeded available zeros
};

enum class PruneScope { global, uniform };
std::string prune_scope_name(PruneScope scope);
PruneScope prune_scope_from_name(const std::string& name);

struct PruneEvent {
    std::int64_t step = 0;
    PruneScope scope = PruneScope::global;
    double target_sparsity = 0.0;
    double achieved_sparsity = 0.0;
    double regen_ratio = 0.0;
    bool used_dense_gradient = false;
    std::vector<LayerEvent> layers;
};

/// Half-up rounding used for every keep-count in this module.
std::int64_t round_half_up(double x);

// -- unstructured pruning ---------------------------------------------------

/// Keeps the round(keep_fraction * nnz) largest-|w| active positions and
/// prunes the rest (weight and mask set to 0). Ties break toward the lower
/// flat index. Returns the number of positions removed.
std::int64_t topk_keep_magnitude(MaskedParam& p, double keep_fraction);

/// Prunes the layer so that round((1-s) * numel) positions stay active;
/// a no-op when the layer is already at or below that count.
std::int64_t prune_layer_to_sparsity(MaskedParam& p, double target_sparsity);

/// Magnitude pruning across all given layers jointly: exactly
/// floor((1-target) * N_total) weights survive. Throws if the target is
/// below the current global sparsity (this op never resurrects weights).
std::vector<std::int64_t> global_magnitude_prune(const std::vector<MaskedParam*>& params,
                                                 double target_sparsity);

/// One-shot fractional prune across layers: keeps the
/// round(keep_fraction * nnz_total) largest-|w| active positions. Returns
/// per-layer removed counts.
std::vector<std::int64_t> global_topk_keep(const std::vector<MaskedParam*>& params,
                                           double keep_fraction);

/// Mask-only variant: ranks active weights and stashed (previously pruned)
/// values together, so a stashed weight can re-enter the mask. Stash buffers
/// are enabled on first use.
std::vector<std::int64_t> global_magnitude_prune_keep_values(const std::vector<MaskedParam*>& params,
                                                             double target_sparsity);
std::int64_t prune_layer_to_sparsity_keep_values(MaskedParam& p, double target_sparsity);

// -- regeneration -----------------------------------------------------------

/// Activates `count` masked positions with the largest |grad|; new weights
/// start at 0. Requests beyond the available zeros are clamped; the return
/// reports how many were actually activated.
std::int64_t regenerate_by_gradient(MaskedParam& p, std::int64_t count, const std::vector<double>& grads);

/// As above with uniform random choice among the masked positions.
std::int64_t regenerate_random(MaskedParam& p, std::int64_t count, Rng& rng);

// -- structured (whole output filters) --------------------------------------

/// Prunes whole output filters of a conv weight [out_ch, in_ch, kh, kw] by
/// smallest sum |w|; active filter count becomes round((1-f) * active).
/// Throws on non-conv shapes. Returns pruned filter count.
std::int64_t filter_prune_structured(MaskedParam& conv, double prune_fraction);

/// Reactivates `count` fully-zero filters with the largest sum |grad|,
/// weights reset to 0. Clamped to the available zero filters.
std::int64_t filter_regenerate_structured(MaskedParam& conv, std::int64_t count,
                                          const std::vector<double>& grads);

std::int64_t active_filter_count(const MaskedParam& conv);

// -- sparse initialization --------------------------------------------------

struct LayerShapeInfo {
    std::string layer_id;
    std::int64_t numel = 0;
    std::int64_t fan_in = 0;
    std::int64_t fan_out = 0;
    Shape kernel;  // weight shape; rank 4 for conv, rank 2 for affine
};

/// Per-layer densities for the plan. erk densities are proportional to
/// (fan_in+fan_out)/(fan_in*fan_out) for affine weights and
/// (c_in+c_out+kh+kw)/(c_in*c_out*kh*kw) for conv kernels, scaled so the
/// total kept count matches (1-s) * N, with capping at 1 and redistribution.
std::map<std::string, double> plan_densities(const std::vector<LayerShapeInfo>& layers,
                                             const SparsityPlan& plan);

/// Applies the plan to the given params: chooses random positions per layer
/// at the planned density and zeroes the rest. Dense plans produce all-ones
/// masks without consuming randomness.
void apply_sparsity_plan(const std::vector<MaskedParam*>& params,
                         const std::vector<LayerShapeInfo>& infos, const SparsityPlan& plan,
                         Rng& rng);

}  // namespace sparselab
