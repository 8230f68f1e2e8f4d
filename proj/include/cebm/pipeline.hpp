#pragma once

#include <optional>
#include <string>

#include "cebm/config.hpp"
#include "cebm/datasets.hpp"
#include "cebm/edm.hpp"
#include "cebm/eval.hpp"
#include "cebm/samplers.hpp"
#include "cebm/training.hpp"

namespace cebm {

// Models and trained parameters reconstructed from a config (+ checkpoint).
struct Experiment {
    ExperimentConfig cfg;
    EnergyModel energy;
    VelocityField vf;
    Denoiser denoiser;
    ParameterVector theta;  // energy / denoiser parameters
    ParameterVector xi;     // sampler parameters

    bool has_energy() const {
        return cfg.method == "rnce" || cfg.method == "irnce" || cfg.method == "ibc";
    }
    bool has_flow() const {
        return cfg.method == "rnce" || cfg.method == "irnce" || cfg.method == "nf";
    }
    bool is_edm() const { return cfg.method == "edm" || cfg.method == "edm_phi"; }
};

Experiment make_experiment(ExperimentConfig cfg);

Dataset make_task_dataset(const ExperimentConfig& cfg);

// Runs the configured training, writing checkpoint.ckpt, train_log.csv and
// resolved_config.json into cfg.out_dir.
Experiment run_training(ExperimentConfig cfg);

void save_experiment(const Experiment& exp, const std::string& path);
Experiment load_experiment(const std::string& path);

struct SampleRequest {
    std::string sampler;  // two_stage | three_stage | flow | pflow
    std::size_t n = 0;
    std::uint64_t seed = 0;
    int best_of = 1;
    bool want_scores = false;  // force the score column even when it is costly
    std::vector<double> context_raw;  // task-specific raw context
};

struct SampleResult {
    Tensor samples;              // (n, d)
    std::vector<double> scores;  // relative-likelihood scores when supported
    bool has_scores = false;
};

SampleResult draw_samples(const Experiment& exp, const SampleRequest& req);

struct BcReport {
    std::vector<std::vector<double>> contexts;
    std::vector<double> bc;
    double min_bc = 0.0;
    GridSpec grid;
    std::size_t n_samples = 0;
};

// KDE/grid Bhattacharyya of model samples against fresh generator truth, one
// entry per task evaluation context.
BcReport eval_bc_against_truth(const Experiment& exp, const std::string& sampler,
                               std::size_t n_samples, const GridSpec& grid,
                               std::uint64_t seed);

Tensor truth_samples(const std::string& task, const std::vector<double>& context_raw,
                     std::size_t n, std::uint64_t seed);

}  // namespace cebm
