#include "cebm/datasets.hpp"

#include <cmath>
#include <stdexcept>

#include "cebm/models.hpp"

namespace cebm {

Tensor sample_pinwheel(const PinwheelSpec& spec) {
    if (spec.spokes < 4 || spec.spokes > 7)
        throw std::invalid_argument("sample_pinwheel: spokes must be in {4..7}");
    Rng rng(spec.seed);
    Tensor out({spec.n, 2});
    for (std::size_t i = 0; i < spec.n; ++i) {
        int spoke = int(rng.uniform_index(std::uint64_t(spec.spokes)));
        double r = -1.0;
        while (r <= 0.0) r = rng.normal(spec.radius_mean, spec.radius_std);
        double a = rng.normal(0.0, spec.angle_jitter);
        double theta = spoke * 2.0 * M_PI / spec.spokes + a + spec.swirl * (r - 1.0);
        out(i, 0) = spec.scale * r * std::cos(theta);
        out(i, 1) = spec.scale * r * std::sin(theta);
    }
    return out;
}

namespace {

// Arc length of r = b*phi from 0 to phi.
double spiral_arclen(double b, double phi) {
    double s = std::sqrt(1.0 + phi * phi);
    return 0.5 * b * (phi * s + std::log(phi + s));
}

double spiral_invert_arclen(double b, double target) {
    double lo = 0.0, hi = 1.0;
    while (spiral_arclen(b, hi) < target) hi *= 2.0;
    for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        if (spiral_arclen(b, mid) < target) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

constexpr double kSpiralB = 3.0 / (4.0 * M_PI);  // max radius 3 at phi = 4*pi

double spiral_total_arclen(double length) {
    // context length 800 maps to the full 2-turn spiral
    double full = spiral_arclen(kSpiralB, 4.0 * M_PI);
    return full * length / 800.0;
}

Tensor spiral_points(const SpiralSpec& spec, bool with_noise) {
    if (spec.length < 400.0 || spec.length > 800.0)
        throw std::invalid_argument("sample_spiral: length must be in [400, 800]");
    Rng rng(spec.seed);
    double total = spiral_total_arclen(spec.length);
    Tensor out({spec.n, 2});
    for (std::size_t i = 0; i < spec.n; ++i) {
        double s = rng.uniform() * total;
        double phi = spiral_invert_arclen(kSpiralB, s);
        double r = kSpiralB * phi;
        double x = r * std::cos(phi), y = r * std::sin(phi);
        if (with_noise) {
            x += rng.normal(0.0, spec.noise_std);
            y += rng.normal(0.0, spec.noise_std);
        }
        out(i, 0) = x;
        out(i, 1) = y;
    }
    return out;
}

}  // namespace

Tensor sample_spiral(const SpiralSpec& spec) { return spiral_points(spec, true); }

Tensor sample_spiral_noise_free(const SpiralSpec& spec) { return spiral_points(spec, false); }

std::vector<double> sample_gaussian_cond(const GaussianCondSpec& spec, std::size_t n,
                                         std::uint64_t seed) {
    if (spec.sigma <= 0.0) throw std::invalid_argument("sample_gaussian_cond: sigma <= 0");
    Rng rng(seed);
    std::vector<double> out(n);
    for (double& v : out) v = rng.normal(spec.mean, spec.sigma);
    return out;
}

Dataset make_pinwheel_dataset(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.context.resize(n);
    ds.events = Tensor({n, 2});
    // generate per-spoke pools so each draw matches sample_pinwheel marginals
    for (std::size_t i = 0; i < n; ++i) {
        int spokes = 4 + int(rng.uniform_index(4));
        PinwheelSpec one;
        one.spokes = spokes;
        one.n = 1;
        one.seed = rng.next_u64();
        Tensor pt = sample_pinwheel(one);
        ds.context[i] = {double(spokes)};
        ds.events(i, 0) = pt(0, 0);
        ds.events(i, 1) = pt(0, 1);
    }
    return ds;
}

Dataset make_spiral_dataset(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.context.resize(n);
    ds.events = Tensor({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
        SpiralSpec one;
        one.length = rng.uniform(400.0, 800.0);
        one.n = 1;
        one.seed = rng.next_u64();
        Tensor pt = sample_spiral(one);
        ds.context[i] = {one.length};
        ds.events(i, 0) = pt(0, 0);
        ds.events(i, 1) = pt(0, 1);
    }
    return ds;
}

Dataset make_gaussian1d_dataset(const GaussianCondSpec& spec, std::size_t n,
                                std::uint64_t seed) {
    Dataset ds;
    ds.context.assign(n, {});
    std::vector<double> ys = sample_gaussian_cond(spec, n, seed);
    ds.events = Tensor({n, 1});
    for (std::size_t i = 0; i < n; ++i) ds.events(i, 0) = ys[i];
    return ds;
}

std::vector<double> pinwheel_context_embedding(int spokes) {
    return sinusoidal_embedding(double(spokes), 10);
}

std::vector<double> spiral_context_embedding(double length) {
    return {(length - 600.0) / 200.0};
}

std::size_t task_context_dim(const std::string& task) {
    if (task == "pinwheel") return 10;
    if (task == "spiral") return 1;
    if (task == "gaussian1d") return 0;
    throw std::invalid_argument("unknown task " + task);
}

std::vector<double> task_context_embedding(const std::string& task,
                                           const std::vector<double>& raw) {
    if (task == "pinwheel") return pinwheel_context_embedding(int(std::llround(raw.at(0))));
    if (task == "spiral") return spiral_context_embedding(raw.at(0));
    if (task == "gaussian1d") return {};
    throw std::invalid_argument("unknown task " + task);
}

std::vector<std::vector<double>> task_eval_contexts(const std::string& task) {
    if (task == "pinwheel") return {{4.0}, {5.0}, {6.0}, {7.0}};
    if (task == "spiral") return {{400.0}, {600.0}, {800.0}};
    if (task == "gaussian1d") return {{}};
    throw std::invalid_argument("unknown task " + task);
}

}  // namespace cebm
