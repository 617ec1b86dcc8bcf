#pragma once

#include <cstdint>
#include <string>

namespace sparselab {

// Cubic sparsity ramp evaluated on the step grid t0, t0 + dt, ..., t0 + n*dt.
struct PruneSchedule {
    double s_initial = 0.0;
    double s_final = 0.0;
    std::int64_t t_start = 0;
    std::int64_t interval = 1000;  // dt, in steps
    std::int64_t n_intervals = 0;

    // Maps epoch endpoints onto the step grid; (tf - t0) * steps_per_epoch
    // must be divisible by the interval.
    static PruneSchedule from_epochs(double s_initial, double s_final, std::int64_t t0_epoch,
                                     std::int64_t tf_epoch, std::int64_t steps_per_epoch,
                                     std::int64_t interval_steps);

    void validate() const;

    std::int64_t t_end() const { return t_start + n_intervals * interval; }

    bool is_prune_step(std::int64_t t) const;

    // Clamps to s_initial before the window and s_final after it; inside
    // the window only grid steps are valid and anything else throws.
    double sparsity_at(std::int64_t t) const;
};

// Fraction of pruned weights to regenerate at step t.
struct RegenSchedule {
    enum class Mode { constant, cosine };

    Mode mode = Mode::cosine;
    double r_initial = 0.5;
    std::int64_t t_end = 0;  // cosine reaches zero here; 0 means constant r_initial

    void validate() const;
    double ratio_at(std::int64_t t) const;
};

std::string regen_mode_name(RegenSchedule::Mode mode);
RegenSchedule::Mode regen_mode_from_name(const std::string& name);

}  // namespace sparselab
