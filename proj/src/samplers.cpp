#include "cebm/samplers.hpp"

#include <cmath>
#include <stdexcept>

namespace cebm {

namespace {

void check_finite_or_abort(const Tensor& y, const char* where, int step) {
    if (!y.all_finite())
        throw std::runtime_error(std::string(where) + ": non-finite iterate at step " +
                                 std::to_string(step));
}

Tensor single_row(const std::vector<double>& v) {
    Tensor t({1, v.size()});
    t.data = v;
    return t;
}

}  // namespace

Tensor langevin_chain_batch(const EnergyRef& energy, const Tensor& x_emb, Tensor y0,
                            const McmcConfig& cfg, double t) {
    if (cfg.eta <= 0.0) throw std::invalid_argument("langevin: eta must be > 0");
    const std::size_t n = y0.shape[0], d = y0.shape[1];
    Rng root(cfg.seed);
    std::vector<Rng> streams;
    streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i) streams.push_back(root.split(i));
    double noise_scale = std::sqrt(2.0 * cfg.eta);
    for (int step = 0; step < cfg.t_mcmc; ++step) {
        Tensor g = energy.model->score_batch(*energy.params, x_emb, y0, t);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double w = cfg.suppress_noise ? 0.0 : streams[i].normal();
                y0(i, j) += cfg.eta * g(i, j) + noise_scale * w;
            }
        check_finite_or_abort(y0, "langevin", step);
    }
    return y0;
}

std::vector<double> langevin_chain(const EnergyRef& energy, const std::vector<double>& x_emb,
                                   std::vector<double> y0, const McmcConfig& cfg, double t) {
    Tensor X = single_row(x_emb);
    Tensor Y = single_row(y0);
    return langevin_chain_batch(energy, X, std::move(Y), cfg, t).data;
}

void leapfrog(const EnergyRef& energy, const Tensor& x_emb, Tensor& y, Tensor& p, double eta,
              int steps, double t) {
    // potential U = -E, so grad U = -score
    Tensor g = energy.model->score_batch(*energy.params, x_emb, y, t);
    for (std::size_t i = 0; i < p.numel(); ++i) p.data[i] += 0.5 * eta * g.data[i];
    for (int s = 0; s < steps; ++s) {
        for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] += eta * p.data[i];
        g = energy.model->score_batch(*energy.params, x_emb, y, t);
        double scale = (s + 1 < steps) ? eta : 0.5 * eta;
        for (std::size_t i = 0; i < p.numel(); ++i) p.data[i] += scale * g.data[i];
    }
}

HmcResult hmc_chain_batch(const EnergyRef& energy, const Tensor& x_emb, Tensor y0,
                          const McmcConfig& cfg, double t) {
    const std::size_t n = y0.shape[0], d = y0.shape[1];
    Rng root(cfg.seed);
    std::vector<Rng> streams;
    streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i) streams.push_back(root.split(i));

    // each proposal costs leapfrog_steps + 1 score evaluations
    int per_proposal = cfg.leapfrog_steps + 1;
    int proposals = cfg.t_mcmc / per_proposal;
    std::size_t accepted = 0, attempted = 0;

    for (int prop = 0; prop < proposals; ++prop) {
        auto e_start = energy.model->energy_batch(*energy.params, x_emb, y0, t);
        Tensor p({n, d});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                p(i, j) = cfg.suppress_noise ? 0.0 : streams[i].normal();
        std::vector<double> h0(n);
        for (std::size_t i = 0; i < n; ++i) {
            double k = 0.0;
            for (std::size_t j = 0; j < d; ++j) k += p(i, j) * p(i, j);
            h0[i] = -e_start[i] + 0.5 * k;
        }
        Tensor y_prop = y0;
        leapfrog(energy, x_emb, y_prop, p, cfg.eta, cfg.leapfrog_steps, t);
        check_finite_or_abort(y_prop, "hmc", prop);
        auto e_end = energy.model->energy_batch(*energy.params, x_emb, y_prop, t);
        for (std::size_t i = 0; i < n; ++i) {
            double k = 0.0;
            for (std::size_t j = 0; j < d; ++j) k += p(i, j) * p(i, j);
            double h1 = -e_end[i] + 0.5 * k;
            double u = streams[i].uniform_open0();
            ++attempted;
            if (std::log(u) < h0[i] - h1) {
                ++accepted;
                for (std::size_t j = 0; j < d; ++j) y0(i, j) = y_prop(i, j);
            }
        }
    }
    HmcResult res;
    res.y = std::move(y0);
    res.accept_rate = attempted ? double(accepted) / double(attempted) : 0.0;
    return res;
}

std::vector<double> hmc_chain(const EnergyRef& energy, const std::vector<double>& x_emb,
                              std::vector<double> y0, const McmcConfig& cfg, double t) {
    Tensor X = single_row(x_emb);
    Tensor Y = single_row(y0);
    return hmc_chain_batch(energy, X, std::move(Y), cfg, t).y.data;
}

Tensor two_stage_sample_batch(const FlowModel& flow, const EnergyRef& energy,
                              const Tensor& x_emb, std::size_t n, const McmcConfig& cfg) {
    Rng rng(cfg.seed);
    Tensor z = flow.draw_base(n, rng);
    StepSchedule s = flow.default_schedule(1.0);
    Tensor y = flow.sample_batch(x_emb, z, s);
    if (cfg.t_mcmc == 0) return y;
    McmcConfig chain_cfg = cfg;
    chain_cfg.seed = splitmix64(cfg.seed ^ 0xabcdef12u);
    if (cfg.kind == "hmc") return hmc_chain_batch(energy, x_emb, std::move(y), chain_cfg).y;
    return langevin_chain_batch(energy, x_emb, std::move(y), chain_cfg);
}

Tensor sde_transport_batch(const FlowModel& flow, const EnergyRef& energy, const Tensor& x_emb,
                           Tensor y_start, const SdeConfig& cfg) {
    if (cfg.steps < 1) throw std::invalid_argument("sde_transport: steps must be >= 1");
    const std::size_t n = y_start.shape[0], d = y_start.shape[1];
    Rng root(cfg.seed);
    std::vector<Rng> streams;
    streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i) streams.push_back(root.split(i));

    double h = (cfg.t1 - cfg.t0) / double(cfg.steps);
    double noise_scale = std::sqrt(2.0 * cfg.eta * std::abs(h));
    for (int s = 0; s < cfg.steps; ++s) {
        double t = cfg.t0 + h * double(s);
        Tensor v = flow.vf().velocity_batch(flow.params(), x_emb, y_start, t);
        if (cfg.eta > 0.0) {
            Tensor g = energy.model->score_batch(*energy.params, x_emb, y_start, t);
            for (std::size_t i = 0; i < v.numel(); ++i) v.data[i] += cfg.eta * g.data[i];
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double w = cfg.eta > 0.0 ? streams[i].normal() : 0.0;
                y_start(i, j) += h * v(i, j) + noise_scale * w;
            }
        check_finite_or_abort(y_start, "sde_transport", s);
    }
    return y_start;
}

Tensor three_stage_sample_batch(const FlowModel& flow, const EnergyRef& energy,
                                const Tensor& x_emb, std::size_t n,
                                const IEbmSampleConfig& cfg) {
    if (cfg.t_lower <= 0.0 || cfg.t_lower > 1.0)
        throw std::invalid_argument("three_stage: t_lower must be in (0, 1]");
    Rng rng(cfg.seed);
    Tensor z = flow.draw_base(n, rng);

    int mcmc_evals = int(cfg.t_lower * cfg.total_grad_evals);
    int sde_evals = int((1.0 - cfg.t_lower) * cfg.total_grad_evals);

    McmcConfig mc;
    mc.kind = "hmc";
    mc.t_mcmc = mcmc_evals;
    mc.eta = cfg.eta_mcmc;
    mc.leapfrog_steps = cfg.leapfrog_steps;
    mc.seed = splitmix64(cfg.seed ^ 0x33aa55u);

    if (cfg.t_lower == 1.0) {
        // degenerate split: SDE leg is empty, pure two-stage behavior
        StepSchedule s1 = flow.default_schedule(1.0);
        Tensor y = flow.sample_batch(x_emb, z, s1);
        return hmc_chain_batch(energy, x_emb, std::move(y), mc).y;
    }

    StepSchedule s = flow.default_schedule(cfg.t_lower);
    Tensor y = flow.sample_batch(x_emb, z, s);

    SdeConfig sde;
    sde.eta = cfg.eta_sde;
    sde.steps = std::max(1, sde_evals);
    sde.t0 = cfg.t_lower;
    sde.t1 = 1.0;
    sde.seed = splitmix64(cfg.seed ^ 0x77cc99u);
    y = sde_transport_batch(flow, energy, x_emb, std::move(y), sde);

    return hmc_chain_batch(energy, x_emb, std::move(y), mc, 1.0).y;
}

std::size_t select_best_of(const std::vector<double>& scores) {
    if (scores.empty()) throw std::invalid_argument("select_best_of: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

}  // namespace cebm
