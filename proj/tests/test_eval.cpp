#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cebm/eval.hpp"
#include "cebm/rng.hpp"

using namespace cebm;

namespace {

Tensor gaussian_cloud(std::size_t n, double mx, double my, std::uint64_t seed) {
    Rng rng(seed);
    Tensor pts({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
        pts(i, 0) = mx + rng.normal();
        pts(i, 1) = my + rng.normal();
    }
    return pts;
}

}  // namespace

TEST_CASE("gauss-hermite integrates polynomials against exp(-x^2)") {
    GaussHermite gh = gauss_hermite(64);
    double w = 0, m2 = 0, m4 = 0;
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
        w += gh.weights[i];
        m2 += gh.weights[i] * gh.nodes[i] * gh.nodes[i];
        m4 += gh.weights[i] * std::pow(gh.nodes[i], 4);
    }
    CHECK(w == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-12));
    CHECK(m2 == doctest::Approx(std::sqrt(M_PI) / 2).epsilon(1e-12));
    CHECK(m4 == doctest::Approx(3 * std::sqrt(M_PI) / 4).epsilon(1e-12));
}

TEST_CASE("scott factor at n=8192") {
    Tensor pts = gaussian_cloud(8192, 0, 0, 1);
    Kde2d kde(pts);
    CHECK(kde.bandwidth_factor() == doctest::Approx(std::pow(8192.0, -1.0 / 6.0)).epsilon(1e-12));
    CHECK(kde.bandwidth_factor() == doctest::Approx(0.2227).epsilon(1e-3));
}

TEST_CASE("single point kde is a bump at the point") {
    Tensor one({1, 2}, {0.5, -0.25});
    Kde2d kde(one);
    double at = kde.density(0.5, -0.25);
    CHECK(at > kde.density(0.6, -0.25));
    CHECK(at > kde.density(0.5, -0.15));
}

TEST_CASE("kde of 1e5 standard normal draws approximates the density") {
    Tensor pts = gaussian_cloud(100000, 0, 0, 7);
    Kde2d kde(pts);
    double mae = 0.0;
    int count = 0;
    for (double x = -3; x <= 3.0001; x += 0.25)
        for (double y = -3; y <= 3.0001; y += 0.25) {
            double truth = std::exp(-0.5 * (x * x + y * y)) / (2 * M_PI);
            mae += std::abs(kde.density(x, y) - truth);
            ++count;
        }
    mae /= count;
    CHECK(mae < 0.01);
}

TEST_CASE("bhattacharyya identical, disjoint, and gaussian-shift cases") {
    GridSpec grid;
    Tensor p = gaussian_cloud(8192, 0, 0, 3);
    BcResult same = bhattacharyya(p, p, grid);
    CHECK(same.bc >= 0.999);

    Tensor far1 = gaussian_cloud(2048, -10, 0, 4);
    Tensor far2 = gaussian_cloud(2048, 10, 0, 5);
    GridSpec wide{-15, 15, 256, 1};
    BcResult disjoint = bhattacharyya(far1, far2, wide);
    CHECK(disjoint.bc < 0.01);

    Tensor q = gaussian_cloud(8192, 1, 0, 6);
    BcResult shift = bhattacharyya(p, q, grid);
    CHECK(std::abs(shift.bc - std::exp(-0.125)) < 0.01);

    // symmetry by construction
    BcResult rev = bhattacharyya(q, p, grid);
    CHECK(std::abs(rev.bc - shift.bc) < 1e-12);
}

TEST_CASE("bhattacharyya warns when the grid misses mass") {
    Tensor p = gaussian_cloud(4096, 0, 0, 8);
    Tensor q = gaussian_cloud(4096, 6, 0, 9);  // centered at the grid edge
    GridSpec grid;  // [-4, 4]
    BcResult res = bhattacharyya(p, q, grid);
    CHECK(res.coverage_warning);
}

TEST_CASE("landscape scan: mle and rnce peak at 1, ibc is biased") {
    std::vector<double> mu_grid;
    for (double m = -1.0; m <= 3.0001; m += 0.025) mu_grid.push_back(m);

    LandscapeScan mle = landscape_scan("mle", 10, mu_grid, 64, 100000, 1);
    CHECK(std::abs(mle.argmax - 1.0) < 0.05);
    // shifted so the maximum is zero
    double mx = -1e9;
    for (double v : mle.value) mx = std::max(mx, v);
    CHECK(mx == doctest::Approx(0.0));

    for (std::size_t k : {10, 100}) {
        LandscapeScan r = landscape_scan("rnce", k, mu_grid, 64, 100000, 2);
        CHECK(std::abs(r.argmax - 1.0) < 0.05);
    }

    LandscapeScan ibc10 = landscape_scan("ibc", 10, mu_grid, 64, 100000, 3);
    CHECK(ibc10.argmax > 1.3);
    LandscapeScan ibc1e4 = landscape_scan("ibc", 10000, mu_grid, 64, 100000, 4);
    CHECK(std::abs(ibc1e4.argmax - 2.0) < 0.05);
}

TEST_CASE("asymptotic variance sanity at K=9 (smoke-scale)") {
    AsymptoticsReport rep = asymptotic_variance_mc(9, 800, 160, 5);
    double expect = 1.0 + 1.0 / 9.0;
    CHECK(std::abs(rep.var_sqrt_n - expect) / expect < 0.30);
    CHECK(std::abs(rep.mean_n_kl - 0.5 * expect) / (0.5 * expect) < 0.30);
}

TEST_CASE("asymptotics stationarity under seed-stream offset") {
    AsymptoticsReport a = asymptotic_variance_mc(9, 500, 120, 11);
    AsymptoticsReport b = asymptotic_variance_mc(9, 500, 120, 12);
    // same law, different stream: MC bands overlap generously
    CHECK(std::abs(a.var_sqrt_n - b.var_sqrt_n) < 0.5);
}

TEST_CASE("fisher trace MC vs closed form") {
    double mc0 = fisher_trace_mc(0.0, 1.0, 1000000, 3);
    CHECK(std::abs(mc0 - 3.0) / 3.0 < 0.05);
    // closed form from the natural-family operation
    auto fam = GaussianNaturalFamily::from_moments(0.0, 1.0);
    double cf = fisher_trace(gaussian_family_fisher(fam));
    CHECK(std::abs(mc0 - cf) / cf < 0.02);

    auto fam2 = GaussianNaturalFamily::from_moments(2.0, 0.5);
    double cf2 = fisher_trace(gaussian_family_fisher(fam2));
    double mc2 = fisher_trace_mc(2.0, 0.5, 1000000, 4);
    CHECK(std::abs(mc2 - cf2) / cf2 < 0.02);
}

TEST_CASE("saddle value equals -log(K+1) for the realizable pair") {
    for (std::size_t k : {1, 9}) {
        SaddleEstimate est = saddle_value_check(k, 20000, 6);
        double target = -std::log(double(k + 1));
        CHECK(std::abs(est.value - target) <= 3.0 * est.stderr_ + 1e-9);
    }
    // energy shift leaves the estimate unchanged bitwise
    SaddleEstimate a = saddle_value_check(9, 5000, 7, 0.0);
    SaddleEstimate b = saddle_value_check(9, 5000, 7, 4.2);
    CHECK(a.value == b.value);
}

TEST_CASE("histogram2d counting") {
    Tensor pts({5, 2}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 9.0, 0.0, 0.5, 0.5});
    Histogram2d h = histogram2d(pts, 8, -4, 4);
    std::size_t total = 0, nonzero = 0;
    for (auto c : h.counts) {
        total += c;
        nonzero += c > 0;
    }
    CHECK(total == 4);
    CHECK(nonzero == 1);
    CHECK(h.out_of_range == 1);
}

TEST_CASE("histogram2d of uniform samples is multinomially flat") {
    Rng rng(13);
    const std::size_t n = 160000;
    Tensor pts({n, 2});
    for (double& v : pts.data) v = rng.uniform(-4.0, 4.0);
    const std::size_t bins = 16;
    Histogram2d h = histogram2d(pts, bins, -4, 4);
    double expect = double(n) / double(bins * bins);
    double sd = std::sqrt(expect * (1.0 - 1.0 / double(bins * bins)));
    std::size_t within = 0;
    for (auto c : h.counts)
        if (std::abs(double(c) - expect) <= 4.0 * sd) ++within;
    CHECK(double(within) / double(bins * bins) >= 0.95);
}
