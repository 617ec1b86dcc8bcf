#include <benchmark/benchmark.h>

#include "sparselab/masks.hpp"
#include "sparselab/network.hpp"
#include "sparselab/rng.hpp"

namespace {

using namespace sparselab;

Network make_mlp() {
    std::vector<LayerSpec> layers{LayerSpec::affine(784, 300), LayerSpec::relu(),
                                  LayerSpec::affine(300, 100), LayerSpec::relu(),
                                  LayerSpec::affine(100, 10)};
    Network net = Network::build(layers, {784});
    Rng rng(7);
    net.init_params(rng);
    return net;
}

Tensor make_batch(std::int64_t n) {
    Tensor x({n, 784});
    Rng rng(11);
    for (auto& v : x.data) v = rng.next_double();
    return x;
}

void bench_forward(benchmark::State& state) {
    auto net = make_mlp();
    const auto x = make_batch(state.range(0));
    for (auto _ : state) {
        auto y = net.forward(x);
        benchmark::DoNotOptimize(y.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bench_forward)->Arg(32)->Arg(128);

void bench_forward_backward(benchmark::State& state) {
    auto net = make_mlp();
    const auto x = make_batch(state.range(0));
    std::vector<std::int64_t> y(static_cast<std::size_t>(state.range(0)));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<std::int64_t>(i % 10);
    for (auto _ : state) {
        net.zero_grad();
        ForwardCache fc;
        Tensor logits = net.forward(x, &fc);
        softmax_cross_entropy(logits, y);
        Tensor dl(logits.shape);
        dl.data = logits.grad;
        net.backward(fc, dl);
        benchmark::DoNotOptimize(net.params[0].weight.grad.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bench_forward_backward)->Arg(32)->Arg(128);

void bench_global_prune(benchmark::State& state) {
    for (auto _ : state) {
        state.PauseTiming();
        auto net = make_mlp();
        auto params = net.prunable_params();
        state.ResumeTiming();
        global_magnitude_prune(params, 0.9);
        benchmark::DoNotOptimize(params[0]->mask.data());
    }
}
BENCHMARK(bench_global_prune);

void bench_erk_plan(benchmark::State& state) {
    auto net = make_mlp();
    const auto infos = net.prunable_infos();
    SparsityPlan plan{SparseInitMode::erk, 0.9};
    for (auto _ : state) {
        auto d = plan_densities(infos, plan);
        benchmark::DoNotOptimize(d.size());
    }
}
BENCHMARK(bench_erk_plan);

}  // namespace

BENCHMARK_MAIN();
