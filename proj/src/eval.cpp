#include "cebm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cebm/rng.hpp"
#include "cebm/threading.hpp"

namespace cebm {

GaussHermite gauss_hermite(int order) {
    if (order < 1) throw std::invalid_argument("gauss_hermite: order must be >= 1");
    GaussHermite gh;
    gh.nodes.assign(order, 0.0);
    gh.weights.assign(order, 0.0);
    const int m = (order + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0) {
            z = std::sqrt(2.0 * order + 1.0) - 1.85575 * std::pow(2.0 * order + 1.0, -1.0 / 6.0);
        } else if (i == 1) {
            z -= 1.14 * std::pow(double(order), 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * gh.nodes[0];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * gh.nodes[1];
        } else {
            z = 2.0 * z - gh.nodes[i - 2];
        }
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = std::pow(M_PI, -0.25);
            double p2 = 0.0;
            for (int j = 1; j <= order; ++j) {
                double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
            }
            pp = std::sqrt(2.0 * order) * p2;
            double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-14) break;
        }
        gh.nodes[i] = z;
        gh.nodes[order - 1 - i] = -z;
        gh.weights[i] = 2.0 / (pp * pp);
        gh.weights[order - 1 - i] = gh.weights[i];
    }
    // nodes ascend for readability
    std::reverse(gh.nodes.begin(), gh.nodes.end());
    std::reverse(gh.weights.begin(), gh.weights.end());
    return gh;
}

Kde2d::Kde2d(const Tensor& points) : pts_(points) {
    const std::size_t n = points.shape[0];
    if (n < 1) throw std::invalid_argument("Kde2d: need at least one point");
    factor_ = std::pow(double(std::max<std::size_t>(n, 2)), -1.0 / 6.0);  // d = 2

    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += points(i, 0);
        my += points(i, 1);
    }
    mx /= double(n);
    my /= double(n);
    double c00 = 0, c01 = 0, c11 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = points(i, 0) - mx, dy = points(i, 1) - my;
        c00 += dx * dx;
        c01 += dx * dy;
        c11 += dy * dy;
    }
    double denom = n > 1 ? double(n - 1) : 1.0;
    c00 /= denom;
    c01 /= denom;
    c11 /= denom;

    double f2 = factor_ * factor_;
    double h00 = f2 * c00, h01 = f2 * c01, h11 = f2 * c11;
    // floor for degenerate (e.g. single-point) inputs
    const double floor_var = 1e-3 * 1e-3;
    if (h00 < floor_var) h00 = floor_var;
    if (h11 < floor_var) h11 = floor_var;
    double det = h00 * h11 - h01 * h01;
    if (det <= 0) {
        h01 = 0.0;
        det = h00 * h11;
    }
    hinv00_ = h11 / det;
    hinv01_ = -h01 / det;
    hinv11_ = h00 / det;
    norm_ = 1.0 / (2.0 * M_PI * std::sqrt(det) * double(n));
}

double Kde2d::density(double x, double y) const {
    const std::size_t n = pts_.shape[0];
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = x - pts_(i, 0), dy = y - pts_(i, 1);
        double q = dx * (hinv00_ * dx + hinv01_ * dy) + dy * (hinv01_ * dx + hinv11_ * dy);
        acc += std::exp(-0.5 * q);
    }
    return acc * norm_;
}

std::vector<double> Kde2d::density_grid(double lo, double hi, int n_per_axis,
                                         int threads) const {
    std::vector<double> out(std::size_t(n_per_axis) * std::size_t(n_per_axis));
    double h = (hi - lo) / double(n_per_axis - 1);
    parallel_for(std::size_t(n_per_axis), threads, [&](std::size_t row_lo, std::size_t row_hi) {
        for (std::size_t iy = row_lo; iy < row_hi; ++iy)
            for (int ix = 0; ix < n_per_axis; ++ix)
                out[iy * std::size_t(n_per_axis) + std::size_t(ix)] =
                    density(lo + ix * h, lo + double(iy) * h);
    });
    return out;
}

BcResult bhattacharyya(const Tensor& p_samples, const Tensor& q_samples, const GridSpec& grid) {
    if (p_samples.shape[0] < 2 || q_samples.shape[0] < 2)
        throw std::invalid_argument("bhattacharyya: need >= 2 samples per side");
    Kde2d kp(p_samples), kq(q_samples);
    std::vector<double> dp = kp.density_grid(grid.lo, grid.hi, grid.n, grid.threads);
    std::vector<double> dq = kq.density_grid(grid.lo, grid.hi, grid.n, grid.threads);
    double cell = (grid.hi - grid.lo) / double(grid.n - 1);
    double area = cell * cell;
    BcResult res;
    for (std::size_t i = 0; i < dp.size(); ++i) {
        res.bc += std::sqrt(dp[i] * dq[i]) * area;
        res.p_mass += dp[i] * area;
        res.q_mass += dq[i] * area;
    }
    res.bc = std::min(res.bc, 1.0);
    res.coverage_warning = res.p_mass < 0.95 || res.q_mass < 0.95;
    return res;
}

LandscapeScan landscape_scan(const std::string& objective, std::size_t k,
                             const std::vector<double>& mu_grid, int gh_order,
                             std::size_t neg_pool, std::uint64_t seed) {
    const double true_mean = 1.0;
    const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
    LandscapeScan scan;
    scan.mu = mu_grid;
    scan.value.resize(mu_grid.size());

    if (objective == "mle") {
        // E_{y ~ N(1,1)} log N(y; mu, 1), exact
        for (std::size_t i = 0; i < mu_grid.size(); ++i) {
            double mu = mu_grid[i];
            scan.value[i] = -0.5 * ((true_mean - mu) * (true_mean - mu) + 1.0) - half_log_2pi;
        }
    } else {
        // proposal pool from N(0,1), shared across the whole scan
        Rng rng(seed);
        std::vector<double> pool(neg_pool);
        for (double& v : pool) v = rng.normal();
        std::size_t n_sets = std::max<std::size_t>(1, neg_pool / k);

        GaussHermite gh = gauss_hermite(gh_order);
        const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
        bool rnce = objective == "rnce";
        if (!rnce && objective != "ibc")
            throw std::invalid_argument("landscape_scan: unknown objective " + objective);

        for (std::size_t i = 0; i < mu_grid.size(); ++i) {
            double mu = mu_grid[i];
            auto score = [&](double y) {
                double e = -0.5 * (y - mu) * (y - mu);
                if (!rnce) return e;
                double logp = -0.5 * y * y - half_log_2pi;  // proposal N(0,1)
                return e - logp;
            };
            // per-set sums of exp(score) over the negatives
            std::vector<double> set_sum(n_sets, 0.0);
            for (std::size_t s = 0; s < n_sets; ++s)
                for (std::size_t j = 0; j < k; ++j) set_sum[s] += std::exp(score(pool[s * k + j]));
            double total = 0.0;
            for (std::size_t g = 0; g < gh.nodes.size(); ++g) {
                double y = true_mean + std::sqrt(2.0) * gh.nodes[g];  // y ~ N(1,1)
                double sp = score(y);
                double esp = std::exp(sp);
                double inner = 0.0;
                for (std::size_t s = 0; s < n_sets; ++s)
                    inner += sp - std::log(esp + set_sum[s]);
                total += gh.weights[g] * inv_sqrt_pi * inner / double(n_sets);
            }
            scan.value[i] = total;
        }
    }

    double best = scan.value[0];
    std::size_t best_i = 0;
    for (std::size_t i = 1; i < scan.value.size(); ++i)
        if (scan.value[i] > best) {
            best = scan.value[i];
            best_i = i;
        }
    for (double& v : scan.value) v -= best;
    scan.argmax = scan.mu[best_i];
    return scan;
}

namespace {

struct RnceObjective1d {
    // data and negatives for one replication; proposal == true N(1,1), so the
    // proposal log-density cancels out of the argmax but not the value; we
    // keep scores s_k = E_mu(y_k) - log p(y_k) for exact Newton derivatives.
    const std::vector<double>* data;
    const std::vector<double>* negs;  // n * k entries
    std::size_t k;

    // returns (L', L'') of the mean log-posterior at mu
    std::pair<double, double> derivatives(double mu) const {
        std::size_t n = data->size();
        double g = 0.0, h = 0.0;
        std::vector<double> a(k + 1);
        std::vector<double> s(k + 1);
        for (std::size_t i = 0; i < n; ++i) {
            a[0] = (*data)[i] - mu;
            for (std::size_t j = 0; j < k; ++j) a[j + 1] = (*negs)[i * k + j] - mu;
            // scores up to a mu-free constant: E_mu(y) - log N(y; 1, 1)
            double mx = -1e300;
            for (std::size_t j = 0; j <= k; ++j) {
                double y = a[j] + mu;
                s[j] = -0.5 * a[j] * a[j] + 0.5 * (y - 1.0) * (y - 1.0);
                mx = std::max(mx, s[j]);
            }
            double z = 0.0, abar = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j <= k; ++j) {
                double w = std::exp(s[j] - mx);
                z += w;
                abar += w * a[j];
                m2 += w * a[j] * a[j];
            }
            abar /= z;
            m2 /= z;
            g += a[0] - abar;
            h += -(m2 - abar * abar);
        }
        return {g / double(n), h / double(n)};
    }
};

}  // namespace

AsymptoticsReport asymptotic_variance_mc(std::size_t k, std::size_t n,
                                         std::size_t replications, std::uint64_t seed) {
    if (replications < 2) throw std::invalid_argument("asymptotic_variance_mc: need >= 2 reps");
    Rng root(seed);
    std::vector<double> mu_hats(replications);
    for (std::size_t rep = 0; rep < replications; ++rep) {
        Rng rng = root.split(rep);
        std::vector<double> data(n), negs(n * k);
        for (double& v : data) v = rng.normal(1.0, 1.0);
        for (double& v : negs) v = rng.normal(1.0, 1.0);  // proposal = true p
        RnceObjective1d obj{&data, &negs, k};

        double mu = 0.0;
        for (double v : data) mu += v;
        mu /= double(n);
        bool ok = false;
        for (int it = 0; it < 50; ++it) {
            auto [g, h] = obj.derivatives(mu);
            if (std::abs(h) < 1e-14) break;
            double step = g / h;
            mu -= step;
            if (!(mu > -10 && mu < 10)) break;
            if (std::abs(step) < 1e-12) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            // bisection fallback on L' over a wide bracket
            double lo = -5, hi = 7;
            auto gl = obj.derivatives(lo).first;
            for (int it = 0; it < 200; ++it) {
                double mid = 0.5 * (lo + hi);
                double gm = obj.derivatives(mid).first;
                if ((gm > 0) == (gl > 0)) {
                    lo = mid;
                    gl = gm;
                } else {
                    hi = mid;
                }
            }
            mu = 0.5 * (lo + hi);
        }
        mu_hats[rep] = mu;
    }

    double mean = 0.0;
    for (double v : mu_hats) mean += v;
    mean /= double(replications);
    double var = 0.0, mean_nkl = 0.0;
    for (double v : mu_hats) {
        double c = std::sqrt(double(n)) * (v - 1.0);
        var += c * c;
        mean_nkl += double(n) * 0.5 * (v - 1.0) * (v - 1.0);
    }
    // centered variance of sqrt(n)(mu_hat - mu*)
    double cm = std::sqrt(double(n)) * (mean - 1.0);
    var = var / double(replications) - cm * cm;
    mean_nkl /= double(replications);

    AsymptoticsReport rep;
    rep.k = k;
    rep.n = n;
    rep.replications = replications;
    rep.var_sqrt_n = var;
    rep.mean_n_kl = mean_nkl;
    rep.fisher_trace = 1.0;  // I = 1 for the unit-variance mean family
    rep.seed = seed;
    return rep;
}

double fisher_trace_mc(double mu, double sigma, std::size_t n_samples, std::uint64_t seed) {
    if (sigma <= 0.0) throw std::invalid_argument("fisher_trace_mc: sigma must be > 0");
    Rng rng(seed);
    double m1 = 0, m2 = 0, m11 = 0, m12 = 0, m22 = 0, j11 = 0, j12 = 0, j22 = 0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        double y = rng.normal(mu, sigma);
        double y2 = y * y;
        m1 += y;
        m2 += y2;
        m11 += y * y;
        m12 += y * y2;
        m22 += y2 * y2;
        j11 += 1.0;
        j12 += 2.0 * y;
        j22 += 4.0 * y2;
    }
    double inv = 1.0 / double(n_samples);
    m1 *= inv;
    m2 *= inv;
    m11 *= inv;
    m12 *= inv;
    m22 *= inv;
    j11 *= inv;
    j12 *= inv;
    j22 *= inv;
    double i00 = m11 - m1 * m1, i01 = m12 - m1 * m2, i11 = m22 - m2 * m2;
    double det = i00 * i11 - i01 * i01;
    if (std::abs(det) < 1e-12)
        throw std::runtime_error("fisher_trace_mc: singular covariance estimate; raise n");
    double a00 = i11 / det, a01 = -i01 / det, a11 = i00 / det;
    return a00 * j11 + a01 * j12 + a01 * j12 + a11 * j22;
}

SaddleEstimate saddle_value_check(std::size_t k, std::size_t draws, std::uint64_t seed,
                                  double energy_shift) {
    Rng rng(seed);
    const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
    auto score = [&](double y) {
        double e = -0.5 * (y - 1.0) * (y - 1.0) + energy_shift;   // log N(1,1) + const
        double logp = -0.5 * (y - 1.0) * (y - 1.0) - half_log_2pi;  // proposal N(1,1)
        return e - logp;
    };
    double sum = 0.0, sumsq = 0.0;
    std::vector<double> s(k + 1);
    for (std::size_t i = 0; i < draws; ++i) {
        double ypos = rng.normal(1.0, 1.0);
        s[0] = score(ypos);
        double mx = s[0];
        for (std::size_t j = 0; j < k; ++j) {
            s[j + 1] = score(rng.normal(1.0, 1.0));
            mx = std::max(mx, s[j + 1]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j <= k; ++j) z += std::exp(s[j] - mx);
        double l = s[0] - (mx + std::log(z));
        sum += l;
        sumsq += l * l;
    }
    SaddleEstimate est;
    est.value = sum / double(draws);
    double var = sumsq / double(draws) - est.value * est.value;
    est.stderr_ = std::sqrt(std::max(var, 0.0) / double(draws));
    return est;
}

Histogram2d histogram2d(const Tensor& samples, std::size_t bins, double lo, double hi) {
    if (bins < 1) throw std::invalid_argument("histogram2d: bins must be >= 1");
    Histogram2d h;
    h.bins = bins;
    h.counts.assign(bins * bins, 0);
    double w = (hi - lo) / double(bins);
    for (std::size_t i = 0; i < samples.shape[0]; ++i) {
        double x = samples(i, 0), y = samples(i, 1);
        if (x < lo || x >= hi || y < lo || y >= hi) {
            ++h.out_of_range;
            continue;
        }
        std::size_t bx = std::size_t((x - lo) / w);
        std::size_t by = std::size_t((y - lo) / w);
        bx = std::min(bx, bins - 1);
        by = std::min(by, bins - 1);
        ++h.counts[by * bins + bx];
    }
    return h;
}

}  // namespace cebm
