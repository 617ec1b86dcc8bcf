#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "sparselab/masks.hpp"
#include "sparselab/rng.hpp"

using namespace sparselab;

namespace {

MaskedParam make_param(const std::string& id, Shape shape, std::vector<double> w) {
    return MaskedParam(id, Tensor(std::move(shape), std::move(w)));
}

bool invariant_holds(const MaskedParam& p) {
    for (std::int64_t i = 0; i < p.numel(); ++i) {
        if (p.mask[static_cast<std::size_t>(i)] == 0 && p.weight.at(i) != 0.0) return false;
    }
    return true;
}

// Keep order used everywhere: magnitude descending, flat index ascending.
std::vector<std::int64_t> rank_active(const MaskedParam& p) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = 0; i < p.numel(); ++i) {
        if (p.mask[static_cast<std::size_t>(i)]) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
        return std::abs(p.weight.at(a)) > std::abs(p.weight.at(b));
    });
    return idx;
}

}  // namespace

TEST_CASE("round_half_up frozen values") {
    CHECK(round_half_up(0.0) == 0);
    CHECK(round_half_up(0.49) == 0);
    CHECK(round_half_up(0.5) == 1);
    CHECK(round_half_up(1.5) == 2);
    CHECK(round_half_up(2.4) == 2);
    CHECK(round_half_up(2.5) == 3);
    CHECK(round_half_up(-0.5) == 0);
}

TEST_CASE("masked param counters") {
    auto p = make_param("l", {4}, {0.5, -0.1, 0.3, -0.7});
    CHECK(p.numel() == 4);
    CHECK(p.nnz() == 4);
    CHECK(p.density() == 1.0);
    p.mask = {1, 0, 1, 0};
    p.apply_mask();
    CHECK(p.nnz() == 2);
    CHECK(p.sparsity() == 0.5);
    CHECK(p.weight.at(1) == 0.0);
    CHECK(p.weight.at(3) == 0.0);
    CHECK(invariant_holds(p));
}

TEST_CASE("topk keep: worked example") {
    auto p = make_param("l", {4}, {0.5, -0.1, 0.3, -0.7});
    const auto removed = topk_keep_magnitude(p, 0.5);
    CHECK(removed == 2);
    CHECK(p.mask == std::vector<std::uint8_t>{1, 0, 0, 1});
    CHECK(p.weight.data == std::vector<double>{0.5, 0.0, 0.0, -0.7});
}

TEST_CASE("topk keep: identity, annihilation, ties") {
    auto p = make_param("l", {4}, {0.5, -0.1, 0.3, -0.7});
    CHECK(topk_keep_magnitude(p, 1.0) == 0);
    CHECK(p.nnz() == 4);

    auto q = make_param("l", {4}, {0.2, 0.2, 0.2, 0.2});
    CHECK(topk_keep_magnitude(q, 0.5) == 2);
    CHECK(q.mask == std::vector<std::uint8_t>{1, 1, 0, 0});

    auto z = make_param("l", {4}, {0.5, -0.1, 0.3, -0.7});
    CHECK(topk_keep_magnitude(z, 0.0) == 4);
    CHECK(z.nnz() == 0);
}

TEST_CASE("topk keep matches a sort oracle on random layers") {
    Rng rng(404);
    for (int trial = 0; trial < 20; ++trial) {
        const auto n = static_cast<std::int64_t>(5 + rng.next_below(60));
        std::vector<double> w;
        for (std::int64_t i = 0; i < n; ++i) w.push_back(rng.next_normal());
        auto p = make_param("l", {n}, w);
        // Random pre-mask.
        for (auto& m : p.mask) m = rng.next_below(4) > 0 ? 1 : 0;
        p.apply_mask();

        const auto ranked = rank_active(p);
        const double kf = rng.next_double();
        const auto keep = round_half_up(kf * static_cast<double>(p.nnz()));
        const std::set<std::int64_t> expect(ranked.begin(), ranked.begin() + keep);

        topk_keep_magnitude(p, kf);
        CHECK(p.nnz() == keep);
        for (auto i : expect) CHECK(p.mask[static_cast<std::size_t>(i)] == 1);
        CHECK(invariant_holds(p));
    }
}

TEST_CASE("layer prune to sparsity only ever removes") {
    auto p = make_param("l", {4}, {0.5, -0.1, 0.3, -0.7});
    CHECK(prune_layer_to_sparsity(p, 0.5) == 2);
    CHECK(p.nnz() == 2);
    // Already below the target: no-op.
    CHECK(prune_layer_to_sparsity(p, 0.25) == 0);
    CHECK(p.nnz() == 2);
}

TEST_CASE("global magnitude prune: worked example") {
    auto l1 = make_param("a", {2}, {1.0, 0.01});
    auto l2 = make_param("b", {3}, {0.5, 0.02, 0.003});
    std::vector<MaskedParam*> params{&l1, &l2};
    const auto removed = global_magnitude_prune(params, 0.6);
    CHECK(removed == std::vector<std::int64_t>{1, 2});
    CHECK(l1.mask == std::vector<std::uint8_t>{1, 0});
    CHECK(l2.mask == std::vector<std::uint8_t>{1, 0, 0});
    CHECK(l1.sparsity() == doctest::Approx(0.5));
    CHECK(l2.sparsity() == doctest::Approx(2.0 / 3.0));

    // Same target again: nothing more to remove.
    const auto removed2 = global_magnitude_prune(params, 0.6);
    CHECK(removed2 == std::vector<std::int64_t>{0, 0});

    // Going back down would need resurrection, which this op refuses.
    CHECK_THROWS(global_magnitude_prune(params, 0.1));
}

TEST_CASE("global prune keeps exactly floor((1-s)N) and breaks ties by layer then index") {
    auto l1 = make_param("a", {3}, {0.2, 0.2, 0.2});
    auto l2 = make_param("b", {3}, {0.2, 0.2, 0.2});
    std::vector<MaskedParam*> params{&l1, &l2};
    global_magnitude_prune(params, 0.5);  // floor(0.5 * 6) = 3 survivors
    CHECK(l1.nnz() + l2.nnz() == 3);
    CHECK(l1.mask == std::vector<std::uint8_t>{1, 1, 1});
    CHECK(l2.nnz() == 0);
}

TEST_CASE("single-layer global prune agrees with the layer op") {
    auto a = make_param("a", {4}, {0.5, -0.1, 0.3, -0.7});
    auto b = make_param("b", {4}, {0.5, -0.1, 0.3, -0.7});
    std::vector<MaskedParam*> pa{&a};
    global_magnitude_prune(pa, 0.5);  // floor(0.5*4) = 2
    topk_keep_magnitude(b, 0.5);      // round(0.5*4) = 2
    CHECK(a.mask == b.mask);
    CHECK(a.weight.data == b.weight.data);
}

TEST_CASE("global topk keep works over active positions") {
    auto l1 = make_param("a", {2}, {1.0, 0.01});
    auto l2 = make_param("b", {3}, {0.5, 0.02, 0.003});
    l2.mask = {1, 1, 0};
    l2.apply_mask();
    std::vector<MaskedParam*> params{&l1, &l2};
    // 4 active, keep round(0.5*4)=2: {1.0, 0.5}.
    const auto removed = global_topk_keep(params, 0.5);
    CHECK(removed == std::vector<std::int64_t>{1, 1});
    CHECK(l1.mask == std::vector<std::uint8_t>{1, 0});
    CHECK(l2.mask == std::vector<std::uint8_t>{1, 0, 0});
}

TEST_CASE("gradient regeneration: worked example") {
    auto p = make_param("l", {4}, {0.5, 0.0, 0.0, -0.7});
    p.mask = {1, 0, 0, 1};
    const std::vector<double> grads{0.0, 0.2, -0.9, 0.0};
    CHECK(regenerate_by_gradient(p, 1, grads) == 1);
    CHECK(p.mask == std::vector<std::uint8_t>{1, 0, 1, 1});
    CHECK(p.weight.at(2) == 0.0);  // new connections start from zero
    CHECK(invariant_holds(p));
}

TEST_CASE("gradient regeneration: no-op, saturation, clamp") {
    auto p = make_param("l", {4}, {0.5, 0.0, 0.0, -0.7});
    p.mask = {1, 0, 0, 1};
    const std::vector<double> grads{0.0, 0.2, -0.9, 0.0};
    CHECK(regenerate_by_gradient(p, 0, grads) == 0);
    CHECK(p.nnz() == 2);
    CHECK(regenerate_by_gradient(p, 5, grads) == 2);  // clamped to the 2 zeros
    CHECK(p.nnz() == 4);
}

TEST_CASE("gradient regeneration breaks gradient ties by index") {
    auto p = make_param("l", {4}, {1.0, 0.0, 0.0, 0.0});
    p.mask = {1, 0, 0, 0};
    const std::vector<double> grads{0.0, 0.3, -0.3, 0.3};
    CHECK(regenerate_by_gradient(p, 2, grads) == 2);
    CHECK(p.mask == std::vector<std::uint8_t>{1, 1, 1, 0});
}

TEST_CASE("random regeneration is seeded, disjoint, and clamps") {
    auto fresh = [] {
        auto p = make_param("l", {10}, std::vector<double>(10, 1.0));
        p.mask.assign(10, 0);
        for (int i : {0, 5}) p.mask[static_cast<std::size_t>(i)] = 1;
        p.apply_mask();
        return p;
    };
    auto a = fresh();
    auto b = fresh();
    Rng ra(33), rb(33);
    CHECK(regenerate_random(a, 3, ra) == 3);
    CHECK(regenerate_random(b, 3, rb) == 3);
    CHECK(a.mask == b.mask);
    CHECK(a.nnz() == 5);
    // Previously active positions untouched.
    CHECK(a.mask[0] == 1);
    CHECK(a.mask[5] == 1);
    for (std::int64_t i = 0; i < 10; ++i) CHECK(a.weight.at(i) == (i == 0 || i == 5 ? 1.0 : 0.0));

    Rng rc(34);
    auto c = fresh();
    CHECK(regenerate_random(c, 100, rc) == 8);
    CHECK(c.nnz() == 10);
}

TEST_CASE("keep-values pruning stashes and resurrects exact values") {
    auto p = make_param("l", {2}, {1.0, 0.5});
    std::vector<MaskedParam*> params{&p};
    global_magnitude_prune_keep_values(params, 0.5);  // keep floor(0.5*2)=1
    CHECK(p.mask == std::vector<std::uint8_t>{1, 0});
    CHECK(p.weight.at(1) == 0.0);
    REQUIRE(p.has_stash());
    CHECK(p.stash[1] == 0.5);

    // The surviving weight decays below the stashed one; at the same target
    // the stashed weight re-enters with its old value.
    p.weight.at(0) = 0.1;
    global_magnitude_prune_keep_values(params, 0.5);
    CHECK(p.mask == std::vector<std::uint8_t>{0, 1});
    CHECK(p.weight.at(0) == 0.0);
    CHECK(p.weight.at(1) == 0.5);
    CHECK(p.stash[0] == 0.1);
    CHECK(p.stash[1] == 0.0);
    CHECK(invariant_holds(p));
}

TEST_CASE("layer keep-values variant matches the same ranking rule") {
    auto p = make_param("l", {4}, {0.5, -0.1, 0.3, -0.7});
    prune_layer_to_sparsity_keep_values(p, 0.5);
    CHECK(p.mask == std::vector<std::uint8_t>{1, 0, 0, 1});
    CHECK(p.stash[1] == -0.1);
    CHECK(p.stash[2] == 0.3);

    p.weight.at(0) = 0.05;  // now ranks below both stashed values
    prune_layer_to_sparsity_keep_values(p, 0.5);
    CHECK(p.mask == std::vector<std::uint8_t>{0, 0, 1, 1});
    CHECK(p.weight.at(2) == 0.3);
}

TEST_CASE("structured filter prune: worked example") {
    // Three 1x2x1 filters with |w| sums {2.0, 0.5, 1.2}.
    auto p = make_param("c", {3, 1, 2, 1}, {1.5, -0.5, 0.25, -0.25, 0.6, 0.6});
    CHECK(active_filter_count(p) == 3);
    CHECK(filter_prune_structured(p, 1.0 / 3.0) == 1);
    CHECK(p.mask == std::vector<std::uint8_t>{1, 1, 0, 0, 1, 1});
    CHECK(p.weight.at(2) == 0.0);
    CHECK(p.weight.at(3) == 0.0);
    CHECK(active_filter_count(p) == 2);

    CHECK(filter_prune_structured(p, 0.0) == 0);
    CHECK(filter_prune_structured(p, 1.0) == 2);
    CHECK(p.nnz() == 0);

    auto flat = make_param("l", {4}, {1, 2, 3, 4});
    CHECK_THROWS(filter_prune_structured(flat, 0.5));
}

TEST_CASE("structured filter regeneration: worked example") {
    auto p = make_param("c", {3, 1, 2, 1}, std::vector<double>(6, 0.0));
    p.mask = {1, 1, 0, 0, 0, 0};
    p.weight.at(0) = 1.0;
    p.weight.at(1) = 1.0;
    // Zero filters 1 and 2 with grad sums {0.3, 0.9}.
    const std::vector<double> grads{9.0, 9.0, 0.1, -0.2, 0.4, 0.5};
    CHECK(filter_regenerate_structured(p, 1, grads) == 1);
    CHECK(p.mask == std::vector<std::uint8_t>{1, 1, 0, 0, 1, 1});
    CHECK(p.weight.at(4) == 0.0);

    CHECK(filter_regenerate_structured(p, 0, grads) == 0);
    // Only one zero filter left; a bigger request clamps.
    CHECK(filter_regenerate_structured(p, 3, grads) == 1);
    CHECK(active_filter_count(p) == 3);
    CHECK(filter_regenerate_structured(p, 1, grads) == 0);
}

TEST_CASE("structured masks stay atomic per filter") {
    Rng rng(88);
    auto p = make_param("c", {6, 2, 3, 3}, std::vector<double>(6 * 18, 0.0));
    for (auto& w : p.weight.data) w = rng.next_normal();
    for (int round = 0; round < 5; ++round) {
        filter_prune_structured(p, 0.3);
        std::vector<double> grads(p.weight.data.size());
        for (auto& g : grads) g = rng.next_normal();
        filter_regenerate_structured(p, 1, grads);
        for (std::int64_t f = 0; f < 6; ++f) {
            std::int64_t on = 0;
            for (std::int64_t i = f * 18; i < (f + 1) * 18; ++i) {
                on += p.mask[static_cast<std::size_t>(i)];
            }
            CHECK((on == 0 || on == 18));
        }
        CHECK(invariant_holds(p));
    }
}

TEST_CASE("uniform plan hits per-layer counts") {
    std::vector<LayerShapeInfo> infos{{"a", 100, 10, 10, {10, 10}}, {"b", 10, 5, 2, {2, 5}}};
    const auto d = plan_densities(infos, {SparseInitMode::uniform, 0.5});
    CHECK(d.at("a") == 0.5);
    CHECK(d.at("b") == 0.5);

    const auto dense = plan_densities(infos, {SparseInitMode::dense, 0.0});
    CHECK(dense.at("a") == 1.0);
    CHECK(dense.at("b") == 1.0);
}

TEST_CASE("erk densities match an epsilon-bisection oracle") {
    auto raw = [](const LayerShapeInfo& info) {
        if (info.kernel.size() == 4) {
            const double cout = static_cast<double>(info.kernel[0]);
            const double cin = static_cast<double>(info.kernel[1]);
            const double kh = static_cast<double>(info.kernel[2]);
            const double kw = static_cast<double>(info.kernel[3]);
            return (cin + cout + kh + kw) / (cin * cout * kh * kw);
        }
        const double fi = static_cast<double>(info.fan_in);
        const double fo = static_cast<double>(info.fan_out);
        return (fi + fo) / (fi * fo);
    };
    auto oracle = [&](const std::vector<LayerShapeInfo>& infos, double sparsity) {
        double total = 0.0;
        for (const auto& i : infos) total += static_cast<double>(i.numel);
        const double target = (1.0 - sparsity) * total;
        double lo = 0.0, hi = 1.0;
        // Find an upper bracket, then bisect the capped-density budget.
        auto kept = [&](double eps) {
            double k = 0.0;
            for (const auto& i : infos) {
                k += std::min(1.0, eps * raw(i)) * static_cast<double>(i.numel);
            }
            return k;
        };
        while (kept(hi) < target) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (kept(mid) < target ? lo : hi) = mid;
        }
        std::map<std::string, double> out;
        for (const auto& i : infos) out[i.layer_id] = std::min(1.0, hi * raw(i));
        return out;
    };

    SUBCASE("two affine layers, no capping") {
        std::vector<LayerShapeInfo> infos{{"l1", 78400, 784, 100, {100, 784}},
                                          {"l2", 1000, 100, 10, {10, 100}}};
        const auto got = plan_densities(infos, {SparseInitMode::erk, 0.9});
        const auto want = oracle(infos, 0.9);
        for (const auto& [id, d] : want) {
            CHECK(got.at(id) == doctest::Approx(d).epsilon(1e-9));
        }
        // Budget: total kept within the rounding slack of the target.
        const auto kept = round_half_up(got.at("l1") * 78400.0) + round_half_up(got.at("l2") * 1000.0);
        CHECK(std::abs(kept - static_cast<std::int64_t>(std::floor(0.1 * 79400.0))) <= 2);
    }

    SUBCASE("tiny layer forces a cap and redistribution") {
        std::vector<LayerShapeInfo> infos{{"big", 40000, 200, 200, {200, 200}},
                                          {"tiny", 20, 4, 5, {5, 4}}};
        // tiny's raw score is huge; at low sparsity it caps at 1.
        const auto got = plan_densities(infos, {SparseInitMode::erk, 0.5});
        const auto want = oracle(infos, 0.5);
        CHECK(got.at("tiny") == 1.0);
        for (const auto& [id, d] : want) {
            CHECK(got.at(id) == doctest::Approx(d).epsilon(1e-9));
        }
        double kept = 0.0;
        for (const auto& i : infos) kept += got.at(i.layer_id) * static_cast<double>(i.numel);
        CHECK(kept == doctest::Approx(0.5 * 40020.0).epsilon(1e-9));
    }

    SUBCASE("conv kernels use the kernel-aware score") {
        std::vector<LayerShapeInfo> infos{{"c1", 16 * 3 * 9, 27, 144, {16, 3, 3, 3}},
                                          {"c2", 32 * 16 * 9, 144, 288, {32, 16, 3, 3}}};
        const auto got = plan_densities(infos, {SparseInitMode::erk, 0.8});
        const auto want = oracle(infos, 0.8);
        for (const auto& [id, d] : want) {
            CHECK(got.at(id) == doctest::Approx(d).epsilon(1e-9));
        }
    }
}

TEST_CASE("apply_sparsity_plan realizes planned counts reproducibly") {
    auto build = [] {
        std::vector<MaskedParam> ps;
        ps.push_back(make_param("a", {10, 10}, std::vector<double>(100, 1.0)));
        ps.push_back(make_param("b", {5, 2}, std::vector<double>(10, 1.0)));
        return ps;
    };
    std::vector<LayerShapeInfo> infos{{"a", 100, 10, 10, {10, 10}}, {"b", 10, 2, 5, {5, 2}}};

    auto p1 = build();
    auto p2 = build();
    std::vector<MaskedParam*> v1{&p1[0], &p1[1]}, v2{&p2[0], &p2[1]};
    Rng r1(55), r2(55);
    apply_sparsity_plan(v1, infos, {SparseInitMode::uniform, 0.5}, r1);
    apply_sparsity_plan(v2, infos, {SparseInitMode::uniform, 0.5}, r2);
    CHECK(p1[0].nnz() == 50);
    CHECK(p1[1].nnz() == 5);
    CHECK(p1[0].mask == p2[0].mask);
    CHECK(p1[1].mask == p2[1].mask);
    CHECK(invariant_holds(p1[0]));

    // Dense plans consume no randomness.
    auto p3 = build();
    std::vector<MaskedParam*> v3{&p3[0], &p3[1]};
    Rng r3(55);
    apply_sparsity_plan(v3, infos, {SparseInitMode::dense, 0.0}, r3);
    CHECK(r3.state() == Rng(55).state());
    CHECK(p3[0].nnz() == 100);
}

TEST_CASE("sparse init names round-trip") {
    for (auto m : {SparseInitMode::dense, SparseInitMode::uniform, SparseInitMode::erk}) {
        CHECK(sparse_init_from_name(sparse_init_name(m)) == m);
    }
    CHECK_THROWS(sparse_init_from_name("lottery"));
    CHECK(prune_scope_from_name("global") == PruneScope::global);
    CHECK(prune_scope_from_name("uniform") == PruneScope::uniform);
    CHECK_THROWS(prune_scope_from_name("layerwise"));
}
