#pragma once

#include <string>
#include <vector>

#include "cebm/edm.hpp"
#include "cebm/eval.hpp"
#include "cebm/models.hpp"
#include "cebm/samplers.hpp"
#include "cebm/training.hpp"

namespace cebm {

// Declarative experiment description. JSON-round-trip stable, every field has
// a default, unknown keys are rejected.
struct ExperimentConfig {
    std::string task = "pinwheel";     // pinwheel | spiral | gaussian1d
    std::string method = "rnce";       // rnce | irnce | ibc | nf | edm | edm_phi
    std::uint64_t seed = 0;
    std::size_t dataset_size = 50000;
    int threads = 1;
    std::string out_dir = ".";

    ArchDescriptor energy_arch;
    ArchDescriptor vf_arch;
    TrainConfig train;
    EdmConfig edm;

    struct SamplerConfig {
        std::string kind = "two_stage";  // two_stage | three_stage | flow | pflow
        std::string mcmc = "langevin";   // langevin | hmc
        int t_mcmc = 500;
        double eta = 1e-3;
        int leapfrog_steps = 50;
        double t_lower = 0.5;
        int total_grad_evals = 500;
        double eta_sde = 1e-3;
        int flow_fine_steps = 96;
        int flow_lp_steps = 16;
    } sampler;

    struct EvalConfig {
        double grid_lo = -4.0;
        double grid_hi = 4.0;
        int grid_n = 256;
        std::size_t n_samples = 8192;
        double ibc_box_halfwidth = 4.0;  // uniform negative box for IBC
    } eval;

    // Fills method/task-appropriate architecture defaults for fields left empty.
    void resolve_defaults();

    std::string to_json() const;
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::string& path);

    // dotted-path override, e.g. "train.k=19" or "sampler.kind=flow"
    void apply_override(const std::string& key_eq_value);
};

}  // namespace cebm
