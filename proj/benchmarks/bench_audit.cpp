// Microbenchmarks for the hot paths: the dense forward pass, the interval
// pass, the backward linear relaxation, and one certified training step.
// Sizes mirror the classifier heads the toolkit trains (narrow, a few layers).

#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include "audit/bounds.hpp"
#include "audit/dataset.hpp"
#include "audit/harness.hpp"
#include "audit/linalg.hpp"
#include "audit/rng.hpp"
#include "audit/train.hpp"

namespace {

audit::Network make_net(std::size_t input, std::size_t width, std::size_t depth, std::size_t classes,
                        std::uint64_t seed) {
    std::vector<std::size_t> widths;
    widths.push_back(input);
    for (std::size_t k = 0; k < depth; ++k) widths.push_back(width);
    widths.push_back(classes);
    audit::Rng rng(seed);
    return audit::init_classifier(widths, rng);
}

audit::Vector make_input(std::size_t dim, std::uint64_t seed) {
    audit::Rng rng(seed);
    audit::Vector z(dim);
    for (double& v : z) v = rng.gaussian();
    return z;
}

audit::PerturbationSpec make_pert(std::size_t dim) {
    audit::PerturbationSpec pert;
    pert.dims.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) pert.dims[d] = d;
    pert.epsilon = 0.1;
    pert.norm = audit::Norm::l2;
    return pert;
}

void BM_matvec(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    audit::Rng rng(1);
    audit::Matrix w(n, n);
    for (double& v : w.values) v = rng.gaussian();
    const audit::Vector x = make_input(n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(audit::matvec(w, x));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_matvec)->Arg(16)->Arg(64)->Arg(256);

void BM_forward(benchmark::State& state) {
    const audit::Network net = make_net(8, static_cast<std::size_t>(state.range(0)), 4, 2, 3);
    const audit::Vector z = make_input(8, 4);
    for (auto _ : state) benchmark::DoNotOptimize(audit::forward(net, z));
}
BENCHMARK(BM_forward)->Arg(32)->Arg(128);

void BM_interval_pass(benchmark::State& state) {
    const audit::Network net = make_net(8, static_cast<std::size_t>(state.range(0)), 4, 2, 5);
    const audit::Vector z = make_input(8, 6);
    const audit::PerturbationSpec pert = make_pert(8);
    for (auto _ : state) benchmark::DoNotOptimize(audit::propagate_bounds(net, z, pert));
}
BENCHMARK(BM_interval_pass)->Arg(32)->Arg(128);

void BM_backward_relaxation(benchmark::State& state) {
    const audit::Network net = make_net(8, static_cast<std::size_t>(state.range(0)), 4, 2, 7);
    const audit::Vector z = make_input(8, 8);
    const audit::PerturbationSpec pert = make_pert(8);
    const std::vector<audit::LinearSpec> specs = audit::margin_specs(2, 0);
    for (auto _ : state) benchmark::DoNotOptimize(audit::crown_backward(net, z, pert, specs.front()));
}
BENCHMARK(BM_backward_relaxation)->Arg(32)->Arg(128);

void BM_certified_gradient(benchmark::State& state) {
    const std::size_t batch_size = static_cast<std::size_t>(state.range(0));
    const audit::Network net = make_net(8, 32, 4, 2, 9);

    audit::Rng rng(10);
    audit::Dataset data;
    data.num_classes = 2;
    data.points = audit::Matrix(batch_size, 8);
    for (double& v : data.points.values) v = rng.gaussian();
    data.labels.resize(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) data.labels[i] = i % 2;

    std::vector<std::size_t> batch(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) batch[i] = i;
    const audit::PerturbationSpec pert = make_pert(8);

    for (auto _ : state)
        benchmark::DoNotOptimize(audit::certified_backward(net, data, batch, 0.5, pert));
}
BENCHMARK(BM_certified_gradient)->Arg(16)->Arg(64);

} // namespace

BENCHMARK_MAIN();
