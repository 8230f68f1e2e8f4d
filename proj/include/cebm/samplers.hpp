#pragma once

#include <cstdint>
#include <vector>

#include "cebm/interpolant.hpp"
#include "cebm/models.hpp"
#include "cebm/tensor.hpp"

namespace cebm {

struct McmcConfig {
    std::string kind = "langevin";  // langevin | hmc
    int t_mcmc = 0;                 // langevin steps; for hmc: total gradient evaluations
    double eta = 1e-3;
    int leapfrog_steps = 50;
    std::uint64_t seed = 0;
    bool suppress_noise = false;    // unit-test hook, unreachable from the CLI
};

struct SdeConfig {
    double eta = 0.0;
    int steps = 64;
    std::uint64_t seed = 0;
    double t0 = 0.0;
    double t1 = 1.0;
};

struct IEbmSampleConfig {
    double t_lower = 0.5;         // truncation time of the CNF warm start
    int total_grad_evals = 500;   // split between the SDE and MCMC stages
    double eta_sde = 1e-3;
    double eta_mcmc = 1e-3;
    int leapfrog_steps = 50;
    std::uint64_t seed = 0;
};

struct EnergyRef {
    const EnergyModel* model = nullptr;
    const ParameterVector* params = nullptr;
};

// Unadjusted Langevin: y <- y + eta * grad_y E + sqrt(2 eta) w. Chains are the
// rows of y0; each row draws noise from its own split stream.
Tensor langevin_chain_batch(const EnergyRef& energy, const Tensor& x_emb, Tensor y0,
                            const McmcConfig& cfg, double t = 1.0);
std::vector<double> langevin_chain(const EnergyRef& energy, const std::vector<double>& x_emb,
                                   std::vector<double> y0, const McmcConfig& cfg,
                                   double t = 1.0);

// One leapfrog trajectory for the Hamiltonian -E + |p|^2/2 (exposed for the
// reversibility and energy-drift tests).
void leapfrog(const EnergyRef& energy, const Tensor& x_emb, Tensor& y, Tensor& p, double eta,
              int steps, double t = 1.0);

struct HmcResult {
    Tensor y;
    double accept_rate = 0.0;
};

HmcResult hmc_chain_batch(const EnergyRef& energy, const Tensor& x_emb, Tensor y0,
                          const McmcConfig& cfg, double t = 1.0);
std::vector<double> hmc_chain(const EnergyRef& energy, const std::vector<double>& x_emb,
                              std::vector<double> y0, const McmcConfig& cfg, double t = 1.0);

// Flow sample at t=1 warm-starts the MCMC chain.
Tensor two_stage_sample_batch(const FlowModel& flow, const EnergyRef& energy,
                              const Tensor& x_emb, std::size_t n, const McmcConfig& cfg);

// Euler-Maruyama for dy = (v + eta grad_y E) dt + sqrt(2 eta) dW over [t0, t1].
Tensor sde_transport_batch(const FlowModel& flow, const EnergyRef& energy, const Tensor& x_emb,
                           Tensor y_start, const SdeConfig& cfg);

// Truncated CNF -> SDE transport to t=1 -> HMC at t=1 (time-indexed energy).
Tensor three_stage_sample_batch(const FlowModel& flow, const EnergyRef& energy,
                                const Tensor& x_emb, std::size_t n,
                                const IEbmSampleConfig& cfg);

// Argmax by score, ties broken by lowest index.
std::size_t select_best_of(const std::vector<double>& scores);

}  // namespace cebm
