#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cebm/rng.hpp"
#include "cebm/tensor.hpp"

namespace cebm {

// A conditional 2-D (or 1-D) dataset: raw context per row plus event coords.
struct Dataset {
    std::vector<std::vector<double>> context;  // raw task context per sample
    Tensor events;                             // (n, d)

    std::size_t size() const { return context.size(); }
};

struct PinwheelSpec {
    int spokes = 5;  // in {4,5,6,7}
    std::size_t n = 50000;
    std::uint64_t seed = 0;

    // pinned generator constants
    double radius_mean = 1.0;
    double radius_std = 0.25;
    double angle_jitter = 0.1;
    double swirl = 0.3;
    double scale = 1.5;
};

struct SpiralSpec {
    double length = 600.0;  // context in [400, 800]
    std::size_t n = 50000;
    std::uint64_t seed = 0;
    double noise_std = 0.05;
};

struct GaussianCondSpec {
    double mean = 1.0;
    double sigma = 1.0;
};

Tensor sample_pinwheel(const PinwheelSpec& spec);
Tensor sample_spiral(const SpiralSpec& spec);
Tensor sample_spiral_noise_free(const SpiralSpec& spec);
std::vector<double> sample_gaussian_cond(const GaussianCondSpec& spec, std::size_t n,
                                         std::uint64_t seed);

// Mixed-context training sets used by the 2-D benchmarks: the pinwheel draws
// spokes uniformly from {4..7}, the spiral draws lengths uniformly from [400, 800].
Dataset make_pinwheel_dataset(std::size_t n, std::uint64_t seed);
Dataset make_spiral_dataset(std::size_t n, std::uint64_t seed);
Dataset make_gaussian1d_dataset(const GaussianCondSpec& spec, std::size_t n, std::uint64_t seed);

// Task-specific context embeddings fed to the models.
std::vector<double> pinwheel_context_embedding(int spokes);          // 10-dim sinusoidal
std::vector<double> spiral_context_embedding(double length);         // normalized to [-1,1]
std::size_t task_context_dim(const std::string& task);
std::vector<double> task_context_embedding(const std::string& task,
                                           const std::vector<double>& raw);

// Representative evaluation contexts per task.
std::vector<std::vector<double>> task_eval_contexts(const std::string& task);

}  // namespace cebm
