#include <doctest.h>

#include <cmath>

#include "sparselab/rng.hpp"
#include "sparselab/schedules.hpp"

using namespace sparselab;

namespace {

// Direct evaluation of the cubic ramp, written independently of the
// library: s(t) = s_f + (s_i - s_f) * (1 - (t - t0)/(n*dt))^3.
double cubic_reference(double s_i, double s_f, std::int64_t t0, std::int64_t dt, std::int64_t n,
                       std::int64_t t) {
    const double frac = static_cast<double>(t - t0) / static_cast<double>(n * dt);
    const double rem = 1.0 - frac;
    return s_f + (s_i - s_f) * rem * rem * rem;
}

}  // namespace

TEST_CASE("cubic ramp hits frozen values") {
    PruneSchedule s{0.0, 0.9, 0, 100, 10};
    s.validate();
    CHECK(s.sparsity_at(0) == 0.0);
    CHECK(s.sparsity_at(1000) == 0.9);
    // Halfway: 0.9 * (1 - 0.5^3) = 0.7875.
    CHECK(s.sparsity_at(500) == doctest::Approx(0.7875).epsilon(1e-15));
    // One interval in: 0.9 * (1 - 0.9^3) = 0.24390 exactly in closed form.
    CHECK(s.sparsity_at(100) == doctest::Approx(0.9 * (1.0 - 0.729)).epsilon(1e-15));
}

TEST_CASE("cubic ramp matches the direct formula on random configurations") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const double s_i = rng.next_double() * 0.5;
        const double s_f = s_i + rng.next_double() * (0.99 - s_i);
        const auto t0 = static_cast<std::int64_t>(rng.next_below(5000));
        const auto dt = static_cast<std::int64_t>(1 + rng.next_below(2000));
        const auto n = static_cast<std::int64_t>(1 + rng.next_below(50));
        PruneSchedule s{s_i, s_f, t0, dt, n};
        s.validate();
        for (std::int64_t k = 0; k <= n; ++k) {
            const auto t = t0 + k * dt;
            CHECK(std::abs(s.sparsity_at(t) - cubic_reference(s_i, s_f, t0, dt, n, t)) <= 1e-12);
        }
        CHECK(s.sparsity_at(t0) == s_i);
        CHECK(s.sparsity_at(t0 + n * dt) == s_f);
    }
}

TEST_CASE("ramp clamps outside the window and rejects off-grid steps inside") {
    PruneSchedule s{0.1, 0.8, 1000, 100, 5};
    CHECK(s.sparsity_at(0) == 0.1);
    CHECK(s.sparsity_at(999) == 0.1);
    CHECK(s.sparsity_at(1500) == 0.8);
    CHECK(s.sparsity_at(100000) == 0.8);
    CHECK_THROWS(s.sparsity_at(1050));
    CHECK(s.is_prune_step(1000));
    CHECK(s.is_prune_step(1500));
    CHECK(!s.is_prune_step(1050));
    CHECK(!s.is_prune_step(999));
    CHECK(!s.is_prune_step(1600));
}

TEST_CASE("degenerate single-point grid jumps straight to the final sparsity") {
    PruneSchedule s{0.5, 0.5, 200, 100, 0};
    s.validate();
    CHECK(s.sparsity_at(200) == 0.5);
    CHECK(s.is_prune_step(200));
    CHECK(!s.is_prune_step(300));
    CHECK(s.t_end() == 200);
}

TEST_CASE("from_epochs maps the window onto the step grid") {
    // 110 epochs at 400 steps/epoch with dt=1000: 44000 steps, 44 intervals.
    const auto s = PruneSchedule::from_epochs(0.0, 0.9, 0, 110, 400, 1000);
    CHECK(s.t_start == 0);
    CHECK(s.interval == 1000);
    CHECK(s.n_intervals == 44);
    CHECK(s.t_end() == 44000);
    CHECK(s.sparsity_at(0) == 0.0);
    CHECK(s.sparsity_at(44000) == 0.9);

    // A delayed window starts on the right step.
    const auto late = PruneSchedule::from_epochs(0.1, 0.8, 5, 25, 50, 100);
    CHECK(late.t_start == 250);
    CHECK(late.n_intervals == 10);
    CHECK(late.sparsity_at(250) == 0.1);

    // Window length not divisible by the interval.
    CHECK_THROWS(PruneSchedule::from_epochs(0.0, 0.9, 0, 110, 391, 1000));
    CHECK_THROWS(PruneSchedule::from_epochs(0.0, 0.9, 0, 110, 0, 1000));
    CHECK_THROWS(PruneSchedule::from_epochs(0.0, 0.9, 10, 5, 400, 1000));
}

TEST_CASE("schedule validation rejects bad ranges") {
    CHECK_THROWS(PruneSchedule{-0.1, 0.9, 0, 100, 5}.validate());
    CHECK_THROWS(PruneSchedule{0.0, 1.0, 0, 100, 5}.validate());
    CHECK_THROWS(PruneSchedule{0.5, 0.4, 0, 100, 5}.validate());
    CHECK_THROWS(PruneSchedule{0.0, 0.9, 0, 0, 5}.validate());
}

TEST_CASE("cosine regeneration ratio hits frozen values") {
    RegenSchedule r{RegenSchedule::Mode::cosine, 0.5, 1000};
    r.validate();
    CHECK(r.ratio_at(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r.ratio_at(500) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(r.ratio_at(1000) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(r.ratio_at(5000) == doctest::Approx(0.0).epsilon(1e-15));

    // Direct formula at an interior point.
    const double expect = 0.5 / 2.0 * (1.0 + std::cos(M_PI * 250.0 / 1000.0));
    CHECK(r.ratio_at(250) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("constant mode and t_end=0 both freeze the ratio") {
    RegenSchedule c{RegenSchedule::Mode::constant, 0.3, 1000};
    CHECK(c.ratio_at(0) == 0.3);
    CHECK(c.ratio_at(999999) == 0.3);

    RegenSchedule z{RegenSchedule::Mode::cosine, 0.5, 0};
    CHECK(z.ratio_at(0) == 0.5);
    CHECK(z.ratio_at(12345) == 0.5);
}

TEST_CASE("regen validation and mode names") {
    CHECK_THROWS(RegenSchedule{RegenSchedule::Mode::cosine, -0.1, 0}.validate());
    CHECK_THROWS(RegenSchedule{RegenSchedule::Mode::cosine, 1.1, 0}.validate());
    CHECK(regen_mode_from_name("cosine") == RegenSchedule::Mode::cosine);
    CHECK(regen_mode_from_name("constant") == RegenSchedule::Mode::constant);
    CHECK(regen_mode_name(RegenSchedule::Mode::cosine) == "cosine");
    CHECK_THROWS(regen_mode_from_name("linear"));
}
