#include "sparselab/schedules.hpp"

#include <cmath>
#include <stdexcept>

namespace sparselab {

PruneSchedule PruneSchedule::from_epochs(double s_initial, double s_final, std::int64_t t0_epoch,
                                         std::int64_t tf_epoch, std::int64_t steps_per_epoch,
                                         std::int64_t interval_steps) {
    if (steps_per_epoch < 1) throw std::invalid_argument("prune schedule: steps_per_epoch must be >= 1");
    if (tf_epoch < t0_epoch) throw std::invalid_argument("prune schedule: tf epoch before t0 epoch");
    const auto span = (tf_epoch - t0_epoch) * steps_per_epoch;
    if (interval_steps < 1) throw std::invalid_argument("prune schedule: interval must be >= 1");
    if (span % interval_steps != 0) {
        throw std::invalid_argument("prune schedule: window of " + std::to_string(span) +
                                    " steps is not divisible by interval " +
                                    std::to_string(interval_steps));
    }
    PruneSchedule s;
    s.s_initial = s_initial;
    s.s_final = s_final;
    s.t_start = t0_epoch * steps_per_epoch;
    s.interval = interval_steps;
    s.n_intervals = span / interval_steps;
    s.validate();
    return s;
}

void PruneSchedule::validate() const {
    if (!(s_initial >= 0.0 && s_initial < 1.0) || !(s_final >= 0.0 && s_final < 1.0)) {
        throw std::invalid_argument("prune schedule: sparsities must be in [0, 1)");
    }
    if (s_final < s_initial) {
        throw std::invalid_argument("prune schedule: final sparsity below initial sparsity");
    }
    if (t_start < 0) throw std::invalid_argument("prune schedule: negative start step");
    if (interval < 1) throw std::invalid_argument("prune schedule: interval must be >= 1");
    if (n_intervals < 0) throw std::invalid_argument("prune schedule: negative interval count");
}

bool PruneSchedule::is_prune_step(std::int64_t t) const {
    if (t < t_start || t > t_end()) return false;
    return (t - t_start) % interval == 0;
}

double PruneSchedule::sparsity_at(std::int64_t t) const {
    if (t < t_start) return s_initial;
    if (t >= t_end()) return s_final;  // a zero-length window jumps straight to s_final
    if ((t - t_start) % interval != 0) {
        throw std::invalid_argument("prune schedule: step " + std::to_string(t) +
                                    " is inside the window but off the grid (start " +
                                    std::to_string(t_start) + ", interval " +
                                    std::to_string(interval) + ")");
    }
    if (t == t_start) return s_initial;  // exact endpoint, not the formula's rounding of it
    const double frac =
        static_cast<double>(t - t_start) / static_cast<double>(n_intervals * interval);
    const double rem = 1.0 - frac;
    return s_final + (s_initial - s_final) * rem * rem * rem;
}

void RegenSchedule::validate() const {
    if (!(r_initial >= 0.0 && r_initial <= 1.0)) {
        throw std::invalid_argument("regen schedule: initial ratio must be in [0, 1]");
    }
    if (t_end < 0) throw std::invalid_argument("regen schedule: negative end step");
}

double RegenSchedule::ratio_at(std::int64_t t) const {
    if (t < 0) throw std::invalid_argument("regen schedule: negative step");
    if (mode == Mode::constant || t_end == 0) return r_initial;
    const double frac = static_cast<double>(std::min(t, t_end)) / static_cast<double>(t_end);
    return 0.5 * r_initial * (1.0 + std::cos(M_PI * frac));
}

std::string regen_mode_name(RegenSchedule::Mode mode) {
    return mode == RegenSchedule::Mode::cosine ? "cosine" : "constant";
}

RegenSchedule::Mode regen_mode_from_name(const std::string& name) {
    if (name == "cosine") return RegenSchedule::Mode::cosine;
    if (name == "constant") return RegenSchedule::Mode::constant;
    throw std::invalid_argument("unknown regeneration schedule mode: " + name);
}

}  // namespace sparselab
