#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cebm/param.hpp"
#include "cebm/rng.hpp"
#include "cebm/tape.hpp"
#include "cebm/tensor.hpp"

namespace cebm {

// JSON-round-trippable architecture description:
// {"kind": "mlp_energy"|"mlp_vf"|"concatsquash_vf"|"gaussian_mean"|"gaussian_natural",
//  "widths":[...], "time_embed_dim":int, "residual":bool}
struct ArchDescriptor {
    std::string kind = "mlp_energy";
    std::vector<int> widths;
    int time_embed_dim = 0;
    bool residual = true;

    std::string to_json() const;
    static ArchDescriptor from_json(const std::string& text);
};

// Classic base-10000 positional embedding, used for the discrete pinwheel
// context and (with the value pre-scaled) for scale/noise times.
std::vector<double> sinusoidal_embedding(double value, int dim);

constexpr double kTimeEmbedScale = 25.0;

inline std::vector<double> time_embedding(double t, int dim) {
    return sinusoidal_embedding(t * kTimeEmbedScale, dim);
}

// Fan-in scaled uniform init: W ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)), biases zero.
ParameterVector mlp_init(const ArchDescriptor& arch, std::size_t ctx_dim,
                         std::size_t event_dim, std::uint64_t seed);

// Scalar energy network E(x, y[, t]). Context and time arrive pre-embedded;
// the caller controls both embeddings.
class EnergyModel {
 public:
    EnergyModel() = default;
    EnergyModel(ArchDescriptor arch, std::size_t ctx_dim, std::size_t event_dim);

    const ArchDescriptor& arch() const { return arch_; }
    std::size_t ctx_dim() const { return ctx_dim_; }
    std::size_t event_dim() const { return event_dim_; }
    bool time_indexed() const { return arch_.time_embed_dim > 0; }

    ParameterVector init_params(std::uint64_t seed) const;

    // Batched graph construction. x_emb: (n, ctx_dim) input node, y: (n, event_dim),
    // t_emb: (n, time_embed_dim) or invalid when not time-indexed. Returns (n, 1).
    ad::Var build(ad::Tape& tape, const BoundParams& params, ad::Var x_emb, ad::Var y,
                  ad::Var t_emb = {}) const;

    double energy_eval(const ParameterVector& params, const std::vector<double>& x_emb,
                       const std::vector<double>& y, double t = 1.0) const;
    std::vector<double> energy_batch(const ParameterVector& params, const Tensor& x_emb,
                                     const Tensor& y, double t = 1.0) const;

    // grad_y E(x, y, t)
    std::vector<double> energy_score(const ParameterVector& params,
                                     const std::vector<double>& x_emb,
                                     const std::vector<double>& y, double t = 1.0) const;
    // One reverse pass for a whole batch of independent rows.
    Tensor score_batch(const ParameterVector& params, const Tensor& x_emb, const Tensor& y,
                       double t = 1.0) const;

    Tensor time_embed_rows(std::size_t n, double t) const;

 private:
    ArchDescriptor arch_;
    std::size_t ctx_dim_ = 0;
    std::size_t event_dim_ = 0;
};

// Vector field v_t(x, y) -> event_dim. "mlp_vf" runs t through an on-graph
// two-layer MLP; "concatsquash_vf" gates dense layers with sigmoid(dense(t)).
class VelocityField {
 public:
    VelocityField() = default;
    VelocityField(ArchDescriptor arch, std::size_t ctx_dim, std::size_t event_dim);

    const ArchDescriptor& arch() const { return arch_; }
    std::size_t ctx_dim() const { return ctx_dim_; }
    std::size_t event_dim() const { return event_dim_; }

    ParameterVector init_params(std::uint64_t seed) const;

    // x_emb: (n, ctx_dim), y: (n, event_dim), t_raw: (n, 1) raw times.
    ad::Var build(ad::Tape& tape, const BoundParams& params, ad::Var x_emb, ad::Var y,
                  ad::Var t_raw) const;

    Tensor velocity_batch(const ParameterVector& params, const Tensor& x_emb, const Tensor& y,
                          double t) const;

 private:
    ArchDescriptor arch_;
    std::size_t ctx_dim_ = 0;
    std::size_t event_dim_ = 0;
};

// Unit family for the closed-form suites: E_mu(y) = -(y - mu)^2 / (2 sigma^2).
struct GaussianMeanFamily {
    double sigma = 1.0;

    static ArchDescriptor descriptor() {
        ArchDescriptor a;
        a.kind = "gaussian_mean";
        return a;
    }

    ParameterVector init_params(double mu0 = 0.0) const {
        ParameterVector p;
        p.add("mu", Tensor::scalar(mu0));
        return p;
    }

    double energy(double mu, double y) const {
        double d = y - mu;
        return -d * d / (2.0 * sigma * sigma);
    }

    // (n,1) energies for a (n,1) batch on tape
    ad::Var build(ad::Tape& tape, ad::Var mu, ad::Var y) const;
};

// Natural-parameter Gaussian with sufficient statistic psi(y) = (y, y^2).
struct GaussianNaturalFamily {
    std::array<double, 2> theta{0.0, -0.5};

    static GaussianNaturalFamily from_moments(double mu, double sigma);

    double mu() const { return -theta[0] / (2.0 * theta[1]); }
    double sigma2() const { return -1.0 / (2.0 * theta[1]); }
    bool integrable() const { return theta[1] < 0.0; }

    double energy(double y) const { return theta[0] * y + theta[1] * y * y; }
};

struct FisherPair {
    std::array<double, 4> I;  // row-major 2x2
    std::array<double, 4> J;
};

// Closed forms: I = Cov(psi) under N(mu, sigma^2), J = E[d_y psi d_y psi^T]
// with d_y psi = (1, 2y).
FisherPair gaussian_family_fisher(const GaussianNaturalFamily& fam);

double fisher_trace(const FisherPair& fp);  // Tr(I^{-1} J)

}  // namespace cebm
