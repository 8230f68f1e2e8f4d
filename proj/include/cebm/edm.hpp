#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cebm/models.hpp"
#include "cebm/param.hpp"
#include "cebm/rng.hpp"
#include "cebm/tensor.hpp"

namespace cebm {

struct EdmConfig {
    double sigma_data = 0.5;
    double sigma_min = 0.002;
    double sigma_max = 60.0;
    double rho = 7.0;
    double sigma_rel = 0.02;  // relative-likelihood evaluation noise level
    int n_steps = 96;         // sampler steps
    int lp_steps = 16;        // divergence evaluations for log-prob
    // training noise draws: ln(sigma) ~ N(p_mean, p_std^2), clamped to range
    double p_mean = -1.2;
    double p_std = 1.2;

    double c_skip(double sigma) const;
    double c_out(double sigma) const;
    double c_in(double sigma) const;
    double c_noise(double sigma) const;
    double loss_weight(double sigma) const;  // (sigma^2 + sd^2) / (sigma * sd)^2

    double draw_sigma(Rng& rng) const;
};

// Descending Karras grid; endpoints are exactly sigma_max and sigma_min.
std::vector<double> karras_sigma_schedule(const EdmConfig& cfg, int n_steps);

// d(x, y, sigma) = c_skip y + c_out F(x, c_in y, c_noise); the energy variant
// replaces the raw vector net F with the y-gradient of a scalar potential.
class Denoiser {
 public:
    Denoiser() = default;
    static Denoiser direct(ArchDescriptor net_arch, std::size_t ctx_dim, std::size_t event_dim,
                           EdmConfig cfg);
    static Denoiser energy(ArchDescriptor phi_arch, std::size_t ctx_dim, std::size_t event_dim,
                           EdmConfig cfg);

    const std::string& variant() const { return variant_; }
    const EdmConfig& config() const { return cfg_; }
    EdmConfig& config() { return cfg_; }
    std::size_t event_dim() const { return event_dim_; }
    std::size_t ctx_dim() const { return ctx_dim_; }
    const ArchDescriptor& net_arch() const;

    ParameterVector init_params(std::uint64_t seed) const;

    // On-tape denoiser output for one shared sigma across rows.
    ad::Var build(ad::Tape& tape, const BoundParams& params, ad::Var x_emb, ad::Var y_noisy,
                  double sigma) const;

    Tensor denoise_batch(const ParameterVector& params, const Tensor& x_emb, const Tensor& y,
                         double sigma) const;

    // (d(x,y,sigma) - y) / sigma^2
    Tensor score_batch(const ParameterVector& params, const Tensor& x_emb, const Tensor& y,
                       double sigma) const;

    // divergence of the probability-flow field (y - d)/sigma w.r.t. y
    std::vector<double> pflow_divergence(const ParameterVector& params, const Tensor& x_emb,
                                         const Tensor& y, double sigma) const;

    // relative likelihood r(x, y, sigma_rel); energy variant only
    std::vector<double> relative_likelihood(const ParameterVector& params, const Tensor& x_emb,
                                            const Tensor& y) const;

 private:
    std::string variant_;
    EdmConfig cfg_;
    std::size_t ctx_dim_ = 0, event_dim_ = 0;
    VelocityField fnet_;  // direct
    EnergyModel phi_;     // energy
};

// Weighted denoising regression loss at per-row sigmas (on-tape; y_clean and
// noise are constants).
ad::Var edm_train_loss_build(ad::Tape& tape, const Denoiser& den, const BoundParams& params,
                             const Tensor& x_emb, const Tensor& y_clean, const Tensor& noise,
                             const std::vector<double>& sigmas);

double edm_train_loss_value(const Denoiser& den, const ParameterVector& params,
                            const Tensor& x_emb, const Tensor& y_clean, const Tensor& noise,
                            const std::vector<double>& sigmas);

// Generic probability-flow machinery, injectable for analytic oracles.
using DenoiseFn = std::function<Tensor(const Tensor& y, double sigma)>;
using DivergenceFn = std::function<std::vector<double>(const Tensor& y, double sigma)>;

Tensor pflow_sample_batch(const DenoiseFn& denoise, const EdmConfig& cfg, std::size_t n,
                          std::size_t event_dim, std::uint64_t seed);

struct PflowLogp {
    Tensor y;
    std::vector<double> logp;
};

// Heun on the fine sigma grid, divergence on a coarse subset, trapezoid finish.
PflowLogp pflow_sample_logprob_batch(const DenoiseFn& denoise, const DivergenceFn& div,
                                     const EdmConfig& cfg, std::size_t n, std::size_t event_dim,
                                     std::uint64_t seed);

}  // namespace cebm
