// Serial reference against the OpenMP batch kernels.
//   ./bench_batch --benchmark_filter=Matching

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "lincomb/batch.hpp"

namespace {

using namespace lincomb;

Matrix log_probs(std::mt19937_64& rng, std::size_t rows, std::size_t d) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Matrix m(rows, d);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (double& x : m.row(r)) s += (x = u(rng));
        for (double& x : m.row(r)) x = std::log(x / s);
    }
    return m;
}

Matrix shuffled_labels(std::mt19937_64& rng, std::size_t b, std::size_t d) {
    Matrix y(b, d);
    std::uniform_int_distribution<std::size_t> cls(0, d - 1);
    for (std::size_t r = 0; r < b; ++r) y(r, cls(rng)) = 1.0;
    return y;
}

constexpr std::size_t kClasses = 100;

// args: batch items, bag size
void Matching(benchmark::State& st, Execution exec) {
    std::mt19937_64 rng(7);
    const auto n = static_cast<std::size_t>(st.range(0)), b = static_cast<std::size_t>(st.range(1));
    std::vector<Matrix> lp, y;
    for (std::size_t i = 0; i < n; ++i) {
        lp.push_back(log_probs(rng, b, kClasses));
        y.push_back(shuffled_labels(rng, b, kClasses));
    }
    for (auto _ : st) benchmark::DoNotOptimize(matching_loss_batch(lp, y, exec).total);
    st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * n));
}

// args: batch items, sequence length
void Gsa(benchmark::State& st, Execution exec) {
    std::mt19937_64 rng(11);
    const auto n = static_cast<std::size_t>(st.range(0)), len = static_cast<std::size_t>(st.range(1));
    std::vector<Matrix> lp, y;
    for (std::size_t i = 0; i < n; ++i) {
        lp.push_back(log_probs(rng, len, 32));
        y.push_back(shuffled_labels(rng, len, 32));
    }
    for (auto _ : st) benchmark::DoNotOptimize(gsa_loss_batch(lp, y, 1.5, exec).total);
    st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * n));
}

// args: batch items, matrix size
void Assignment(benchmark::State& st, Execution exec) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u;
    const auto n = static_cast<std::size_t>(st.range(0)), b = static_cast<std::size_t>(st.range(1));
    std::vector<Matrix> costs(n, Matrix(b, b));
    for (Matrix& c : costs)
        for (double& x : c.data()) x = u(rng);
    for (auto _ : st) benchmark::DoNotOptimize(solve_assignments(costs, exec).size());
    st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * n));
}

void bag_args(benchmark::internal::Benchmark* b) {
    for (long bag : {4, 16, 64}) b->Args({64, bag});
}

void seq_args(benchmark::internal::Benchmark* b) {
    for (long len : {8, 32, 128}) b->Args({64, len});
}

}  // namespace

BENCHMARK_CAPTURE(Matching, serial, Execution::Serial)->Apply(bag_args)->UseRealTime();
BENCHMARK_CAPTURE(Matching, parallel, Execution::Parallel)->Apply(bag_args)->UseRealTime();
BENCHMARK_CAPTURE(Gsa, serial, Execution::Serial)->Apply(seq_args)->UseRealTime();
BENCHMARK_CAPTURE(Gsa, parallel, Execution::Parallel)->Apply(seq_args)->UseRealTime();
BENCHMARK_CAPTURE(Assignment, serial, Execution::Serial)->Apply(bag_args)->UseRealTime();
BENCHMARK_CAPTURE(Assignment, parallel, Execution::Parallel)->Apply(bag_args)->UseRealTime();

BENCHMARK_MAIN();
