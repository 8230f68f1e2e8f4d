#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cebm/datasets.hpp"
#include "cebm/edm.hpp"
#include "cebm/interpolant.hpp"
#include "cebm/models.hpp"
#include "cebm/objectives.hpp"
#include "cebm/optimizer.hpp"

namespace cebm {

struct SigmaPertSchedule {
    double start = 0.0;
    double end = 0.0;
    double anneal_frac = 0.5;  // anneal over this fraction of steps, hold after

    double at(std::int64_t step, std::int64_t total_steps) const;
};

struct TrainConfig {
    std::int64_t t_outer = 4000;
    int t_samp = 5;
    int t_rnce = 5;
    int k = 9;   // negatives per positive
    int m = 1;   // interpolating times per datum (I-R-NCE)
    int batch_size = 128;
    LrSchedule lr_theta{"constant", 1e-3};
    LrSchedule lr_xi{"constant", 1e-3};
    double weight_decay_theta = 0.0;
    double weight_decay_xi = 0.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double alpha = 2.0;        // interpolant-loss time warp
    double alpha_rnce = -1.0;  // R-NCE time warp; < 0 means "same as alpha"
    SigmaPertSchedule sigma_pert;

    double rnce_alpha() const { return alpha_rnce > 0.0 ? alpha_rnce : alpha; }
    std::uint64_t seed = 0;
    int flow_fine_steps = 64;
    int flow_lp_steps = 16;
    bool pretrained_sampler = false;  // run all sampler steps before any R-NCE step
    std::string init_scheme = "uniform_fan_in";
};

struct TrainLogRecord {
    std::int64_t step = 0;
    double rnce_loss = 0.0;
    double sampler_loss = 0.0;
    double q_pos_mean = 0.0;
    double posterior_entropy = 0.0;
    double sigma_pert = 0.0;
};

struct TrainLog {
    std::vector<TrainLogRecord> records;
    bool collapse_flag = false;
    std::int64_t collapse_step = -1;
    std::int64_t phase_boundary_step = -1;  // pretrained-sampler bookkeeping

    void append(TrainLogRecord r);
    void to_csv(const std::string& path) const;
};

struct TrainResult {
    ParameterVector theta;
    ParameterVector xi;
    TrainLog log;
};

// Gaussian noise on event coordinates only; contexts untouched.
Tensor perturb_batch(const Tensor& events, double sigma_pert, Rng& rng);

// Alternating sampler / R-NCE loop with fresh negatives drawn from the flow
// at t=1 every R-NCE step.
TrainResult train_rnce(const TrainConfig& cfg, const Dataset& data, const std::string& task,
                       const EnergyModel& energy, ParameterVector theta,
                       const VelocityField& vf, ParameterVector xi);

// Time-indexed variant: positives are bridge draws I_t(z, y), negatives come
// from flow truncations, sharing K trajectories across the m times.
TrainResult train_irnce(const TrainConfig& cfg, const Dataset& data, const std::string& task,
                        const EnergyModel& energy, ParameterVector theta,
                        const VelocityField& vf, ParameterVector xi);

// Raw-energy softmax objective with uniform box negatives.
TrainResult train_ibc(const TrainConfig& cfg, const Dataset& data, const std::string& task,
                      const EnergyModel& energy, ParameterVector theta, double box_halfwidth);

// Sampler-only training (the NF baseline).
TrainResult train_nf(const TrainConfig& cfg, const Dataset& data, const std::string& task,
                     const VelocityField& vf, ParameterVector xi);

// Denoising score matching in the EDM parameterization (both variants).
TrainResult train_edm(const TrainConfig& cfg, const Dataset& data, const std::string& task,
                      const Denoiser& den, ParameterVector params);

// Embeds the raw dataset contexts for the given task.
Tensor embed_contexts(const std::string& task, const Dataset& data,
                      const std::vector<std::size_t>& idx);

}  // namespace cebm
