#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cebm/models.hpp"
#include "cebm/tensor.hpp"

namespace cebm {

// Gauss-Hermite nodes/weights for integral of exp(-x^2) f(x); weights sum to sqrt(pi).
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;
};
GaussHermite gauss_hermite(int order);

// Gaussian KDE with Scott's-rule bandwidth (n^(-1/(d+4)) scaling of the
// sample covariance), with a small floor for degenerate inputs.
class Kde2d {
 public:
    explicit Kde2d(const Tensor& points);

    double density(double x, double y) const;
    std::vector<double> density_grid(double lo, double hi, int n_per_axis,
                                     int threads = 1) const;

    double bandwidth_factor() const { return factor_; }

 private:
    Tensor pts_;
    double factor_ = 0.0;
    // H^{-1} entries and normalization
    double hinv00_ = 0, hinv01_ = 0, hinv11_ = 0;
    double norm_ = 0;
};

struct BcResult {
    double bc = 0.0;
    double p_mass = 0.0;  // KDE mass captured by the grid
    double q_mass = 0.0;
    bool coverage_warning = false;  // > 5% of either mass lies off-grid
};

struct GridSpec {
    double lo = -4.0;
    double hi = 4.0;
    int n = 256;
    int threads = 1;
};

BcResult bhattacharyya(const Tensor& p_samples, const Tensor& q_samples, const GridSpec& grid);

struct LandscapeScan {
    std::vector<double> mu;
    std::vector<double> value;  // shifted so max == 0
    double argmax = 0.0;
};

// Population objective landscapes for the unit-variance Gaussian mean family,
// true N(1,1), proposal N(0,1). Positive-sample integral by Gauss-Hermite,
// negatives by a fixed pool of Monte-Carlo draws partitioned into K-sets.
LandscapeScan landscape_scan(const std::string& objective, std::size_t k,
                             const std::vector<double>& mu_grid, int gh_order,
                             std::size_t neg_pool, std::uint64_t seed);

struct AsymptoticsReport {
    std::size_t k = 0;
    std::size_t n = 0;
    std::size_t replications = 0;
    double var_sqrt_n = 0.0;      // Var(sqrt(n) (mu_hat - mu*))
    double mean_n_kl = 0.0;       // mean of n * KL(p || p_hat)
    double fisher_trace = 0.0;    // Tr(I^{-1} J) closed form for the family
    std::uint64_t seed = 0;
};

// Empirical R-NCE maximization over the mean family with the proposal fixed
// at the true N(1,1); 1-D Newton with bisection fallback.
AsymptoticsReport asymptotic_variance_mc(std::size_t k, std::size_t n,
                                         std::size_t replications, std::uint64_t seed);

double fisher_trace_mc(double mu, double sigma, std::size_t n_samples, std::uint64_t seed);

struct SaddleEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

// Monte-Carlo estimate of the population objective at the realizable pair
// (energy = log-density of N(1,1) up to a constant, proposal = N(1,1)).
SaddleEstimate saddle_value_check(std::size_t k, std::size_t draws, std::uint64_t seed,
                                  double energy_shift = 0.0);

struct Histogram2d {
    std::vector<std::size_t> counts;  // bins x bins, row-major
    std::size_t bins = 0;
    std::size_t out_of_range = 0;
};

Histogram2d histogram2d(const Tensor& samples, std::size_t bins, double lo, double hi);

}  // namespace cebm
