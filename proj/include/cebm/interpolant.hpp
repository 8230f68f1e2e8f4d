#pragma once

#include <functional>
#include <vector>

#include "cebm/models.hpp"
#include "cebm/param.hpp"
#include "cebm/rng.hpp"
#include "cebm/tensor.hpp"

namespace cebm {

// Trigonometric bridge: I_t(z, y) = cos(pi t / 2) z + sin(pi t / 2) y.
namespace interpolant {

std::vector<double> eval(const std::vector<double>& z, const std::vector<double>& y, double t);
std::vector<double> dt(const std::vector<double>& z, const std::vector<double>& y, double t);

// row-wise, one t per row
Tensor eval_batch(const Tensor& z, const Tensor& y, const std::vector<double>& ts);
Tensor dt_batch(const Tensor& z, const Tensor& y, const std::vector<double>& ts);

}  // namespace interpolant

// Law of t: pushforward of Uniform(0,1] under t -> t^(1/alpha).
struct TimeDistribution {
    double alpha = 1.0;

    double sample(Rng& rng) const;
};

struct StepSchedule {
    std::vector<double> ts;     // strictly increasing, first element 0
    std::vector<double> lp_ts;  // subset of ts used for divergence evaluation

    static StepSchedule uniform(int n_fine_steps, int n_lp_points, double t_end = 1.0);
    void validate() const;
};

// Batched time-dependent field with optional exact divergence.
struct BatchedField {
    std::function<Tensor(const Tensor& y, double t)> value;
    std::function<std::vector<double>(const Tensor& y, double t)> divergence;
};

// One explicit trapezoidal (Heun) step from t0 to t1.
std::vector<double> heun_step(
    const std::function<std::vector<double>(double, const std::vector<double>&)>& field,
    const std::vector<double>& y, double t0, double t1);

Tensor integrate_heun(const BatchedField& field, Tensor y0, const std::vector<double>& ts);

struct FlowIntegrationResult {
    Tensor y;
    std::vector<double> div_integral;  // trapezoid of divergence over lp_ts, per row
    // states captured at requested snapshot times (same order as request)
    std::vector<Tensor> snapshots;
    std::vector<std::vector<double>> snapshot_div_integrals;
};

// Fine Heun integration of the sample variable with divergence evaluated only
// at schedule.lp_ts, finished by composite trapezoid. Optionally snapshots the
// state and running divergence integral at chosen grid times.
FlowIntegrationResult integrate_two_timescale(const BatchedField& field, Tensor y0,
                                              const StepSchedule& schedule,
                                              const std::vector<double>& snapshot_ts = {});

// Exact divergence of a velocity field: one reverse pass per event dimension.
std::vector<double> exact_divergence(const VelocityField& vf, const ParameterVector& xi,
                                     const Tensor& x_emb, const Tensor& y, double t);

double log_normal_density(const std::vector<double>& z);

// CNF with standard normal base. Produces samples and log-densities at any
// truncation time.
class FlowModel {
 public:
    FlowModel() = default;
    FlowModel(VelocityField vf, ParameterVector xi) : vf_(std::move(vf)), xi_(std::move(xi)) {}

    const VelocityField& vf() const { return vf_; }
    const ParameterVector& params() const { return xi_; }
    ParameterVector& params() { return xi_; }

    int fine_steps = 150;
    int lp_steps = 15;

    StepSchedule default_schedule(double t_end) const;
    BatchedField field(const Tensor& x_emb) const;

    Tensor draw_base(std::size_t n, Rng& rng) const;

    // Deterministic given seed; truncate_at in (0, 1].
    std::vector<double> sample(const std::vector<double>& x_emb, std::uint64_t seed,
                               double truncate_at) const;
    Tensor sample_batch(const Tensor& x_emb, const Tensor& z, const StepSchedule& s) const;

    struct SampleLogp {
        Tensor y;
        std::vector<double> logp;
        std::vector<double> div_integral;
    };
    SampleLogp sample_with_logprob(const Tensor& x_emb, const Tensor& z,
                                   const StepSchedule& s) const;

    // Density of given points under the truncated flow at time t (backward solve).
    std::vector<double> logprob_at(const Tensor& x_emb, const Tensor& y, double t,
                                   const StepSchedule& s) const;

 private:
    VelocityField vf_;
    ParameterVector xi_;
};

// Population interpolant regression loss of the velocity field, on-tape.
// x_emb:(n,cx), y:(n,d), z:(n,d), ts: one time per row.
ad::Var interpolant_loss_build(ad::Tape& tape, const VelocityField& vf, const BoundParams& xi,
                               const Tensor& x_emb, const Tensor& y, const Tensor& z,
                               const std::vector<double>& ts);

double interpolant_loss_value(const VelocityField& vf, const ParameterVector& xi,
                              const Tensor& x_emb, const Tensor& y, const Tensor& z,
                              const std::vector<double>& ts);

}  // namespace cebm
