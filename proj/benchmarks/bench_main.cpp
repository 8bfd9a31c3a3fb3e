#include <benchmark/benchmark.h>

#include <random>

#include "dpd/dataset.hpp"
#include "dpd/dpdtest.hpp"
#include "dpd/estimate.hpp"
#include "dpd/quadform.hpp"

namespace {

dpd::Dataset salinity() {
    return dpd::read_csv_dataset(std::string(DPDKIT_BENCH_DATA_DIR) + "/salinity.csv", {"salinity"});
}

dpd::Dataset synthetic(int n, int p) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (int j = 1; j < p; ++j) X(i, j) = z(rng);
        y(i) = X.row(i).sum() + z(rng);
    }
    return {X, y};
}

void BM_QuadFormTail(benchmark::State& state) {
    const int r = static_cast<int>(state.range(0));
    std::vector<double> w(r), d(r);
    for (int k = 0; k < r; ++k) {
        w[k] = 0.5 + 0.3 * k;
        d[k] = k % 2 == 0 ? 0.0 : 1.5;
    }
    const dpd::QuadFormDist dist(w, d);
    const double x = 1.5 * dist.mean();
    for (auto _ : state) benchmark::DoNotOptimize(dpd::qf_upper_tail(dist, x));
}
BENCHMARK(BM_QuadFormTail)->Arg(1)->Arg(4)->Arg(8);

void BM_SalinityFit(benchmark::State& state) {
    const dpd::Dataset d = salinity();
    const double tau = static_cast<double>(state.range(0)) / 100.0;
    for (auto _ : state) benchmark::DoNotOptimize(dpd::fit_mdpde(dpd::Model::normal(), d, tau));
}
BENCHMARK(BM_SalinityFit)->Arg(0)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_CompositeTest(benchmark::State& state) {
    const dpd::Dataset d = synthetic(static_cast<int>(state.range(0)), 3);
    dpd::LinearConstraint c;
    c.L = Eigen::MatrixXd::Zero(3, 2);
    c.L(1, 0) = 1.0;
    c.L(2, 1) = 1.0;
    c.l0 = Eigen::Vector2d(1.0, 1.0);
    dpd::TestOptions opts;
    opts.fit.restarts = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(dpd::dpdts_composite(dpd::Model::normal(), d, c, 0.5, 0.5, 0.05, opts));
    }
}
BENCHMARK(BM_CompositeTest)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
