#include "cebm/edm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cebm {

double EdmConfig::c_skip(double sigma) const {
    double sd2 = sigma_data * sigma_data;
    return sd2 / (sigma * sigma + sd2);
}

double EdmConfig::c_out(double sigma) const {
    double sd2 = sigma_data * sigma_data;
    return sigma * sigma_data / std::sqrt(sigma * sigma + sd2);
}

double EdmConfig::c_in(double sigma) const {
    double sd2 = sigma_data * sigma_data;
    return 1.0 / std::sqrt(sigma * sigma + sd2);
}

double EdmConfig::c_noise(double sigma) const { return 0.25 * std::log(sigma); }

double EdmConfig::loss_weight(double sigma) const {
    double sd = sigma_data;
    return (sigma * sigma + sd * sd) / (sigma * sigma * sd * sd);
}

double EdmConfig::draw_sigma(Rng& rng) const {
    double s = std::exp(p_mean + p_std * rng.normal());
    return std::clamp(s, sigma_min, sigma_max);
}

std::vector<double> karras_sigma_schedule(const EdmConfig& cfg, int n_steps) {
    if (n_steps < 2) throw std::invalid_argument("karras schedule: need >= 2 points");
    std::vector<double> s(n_steps);
    double a = std::pow(cfg.sigma_max, 1.0 / cfg.rho);
    double b = std::pow(cfg.sigma_min, 1.0 / cfg.rho);
    for (int i = 0; i < n_steps; ++i) {
        double u = double(i) / double(n_steps - 1);
        s[i] = std::pow(a + u * (b - a), cfg.rho);
    }
    s.front() = cfg.sigma_max;
    s.back() = cfg.sigma_min;
    return s;
}

Denoiser Denoiser::direct(ArchDescriptor net_arch, std::size_t ctx_dim, std::size_t event_dim,
                          EdmConfig cfg) {
    Denoiser d;
    d.variant_ = "direct";
    d.cfg_ = cfg;
    d.ctx_dim_ = ctx_dim;
    d.event_dim_ = event_dim;
    d.fnet_ = VelocityField(std::move(net_arch), ctx_dim, event_dim);
    return d;
}

Denoiser Denoiser::energy(ArchDescriptor phi_arch, std::size_t ctx_dim, std::size_t event_dim,
                          EdmConfig cfg) {
    if (phi_arch.time_embed_dim <= 0)
        throw std::invalid_argument("energy denoiser: phi needs a noise-level embedding");
    Denoiser d;
    d.variant_ = "energy";
    d.cfg_ = cfg;
    d.ctx_dim_ = ctx_dim;
    d.event_dim_ = event_dim;
    d.phi_ = EnergyModel(std::move(phi_arch), ctx_dim, event_dim);
    return d;
}

const ArchDescriptor& Denoiser::net_arch() const {
    return variant_ == "direct" ? fnet_.arch() : phi_.arch();
}

ParameterVector Denoiser::init_params(std::uint64_t seed) const {
    return variant_ == "direct" ? fnet_.init_params(seed) : phi_.init_params(seed);
}

ad::Var Denoiser::build(ad::Tape& tape, const BoundParams& params, ad::Var x_emb, ad::Var y_noisy,
                        double sigma) const {
    if (sigma <= 0.0) throw std::invalid_argument("denoiser: sigma must be > 0");
    const std::size_t n = tape.value(y_noisy).shape[0];
    double cs = cfg_.c_skip(sigma), co = cfg_.c_out(sigma), ci = cfg_.c_in(sigma);
    double cn = cfg_.c_noise(sigma);

    ad::Var u = tape.scale(y_noisy, ci);
    ad::Var raw;
    if (variant_ == "direct") {
        ad::Var t_raw = tape.input(Tensor::full({n, 1}, cn));
        raw = fnet_.build(tape, params, x_emb, u, t_raw);
    } else {
        ad::Var t_emb = tape.input(phi_.time_embed_rows(n, cn));
        ad::Var pot = phi_.build(tape, params, x_emb, u, t_emb);
        // rows are independent; grad of the row-sum w.r.t. u is the per-row grad
        ad::Var total = tape.sum(pot);
        auto g = tape.grad_graph(total, std::vector<ad::Var>{u});
        raw = g[0];
    }
    return tape.add(tape.scale(y_noisy, cs), tape.scale(raw, co));
}

Tensor Denoiser::denoise_batch(const ParameterVector& params, const Tensor& x_emb,
                               const Tensor& y, double sigma) const {
    ad::Tape tape;
    BoundParams bound = bind(tape, params);
    ad::Var X;
    if (ctx_dim_ > 0) X = tape.input(x_emb);
    ad::Var Y = tape.input(y);
    ad::Var d = build(tape, bound, X, Y, sigma);
    return tape.value(d);
}

Tensor Denoiser::score_batch(const ParameterVector& params, const Tensor& x_emb, const Tensor& y,
                             double sigma) const {
    Tensor d = denoise_batch(params, x_emb, y, sigma);
    Tensor out(y.shape);
    double inv = 1.0 / (sigma * sigma);
    for (std::size_t i = 0; i < y.numel(); ++i) out.data[i] = (d.data[i] - y.data[i]) * inv;
    return out;
}

std::vector<double> Denoiser::pflow_divergence(const ParameterVector& params,
                                               const Tensor& x_emb, const Tensor& y,
                                               double sigma) const {
    const std::size_t n = y.shape[0], dimn = y.shape[1];
    ad::Tape tape;
    BoundParams bound = bind(tape, params);
    ad::Var X;
    if (ctx_dim_ > 0) X = tape.input(x_emb);
    ad::Var Y = tape.input(y);
    ad::Var D = build(tape, bound, X, Y, sigma);
    ad::Var F = tape.scale(tape.sub(Y, D), 1.0 / sigma);
    std::vector<double> div(n, 0.0);
    for (std::size_t j = 0; j < dimn; ++j) {
        Tensor seed(tape.value(F).shape);
        for (std::size_t r = 0; r < n; ++r) seed(r, j) = 1.0;
        tape.backward(F, &seed);
        Tensor g = tape.adjoint(Y);
        for (std::size_t r = 0; r < n; ++r) div[r] += g(r, j);
    }
    return div;
}

std::vector<double> Denoiser::relative_likelihood(const ParameterVector& params,
                                                  const Tensor& x_emb, const Tensor& y) const {
    if (variant_ != "energy")
        throw std::invalid_argument("relative_likelihood: direct variant has no scalar potential");
    double sigma = cfg_.sigma_rel;
    if (sigma <= 0.0) throw std::invalid_argument("relative_likelihood: sigma_rel must be > 0");
    const std::size_t n = y.shape[0];
    double cs = cfg_.c_skip(sigma), co = cfg_.c_out(sigma), ci = cfg_.c_in(sigma);
    double cn = cfg_.c_noise(sigma);

    Tensor u(y.shape);
    for (std::size_t i = 0; i < y.numel(); ++i) u.data[i] = ci * y.data[i];
    std::vector<double> phi_vals = phi_.energy_batch(params, x_emb, u, cn);

    std::vector<double> out(n);
    double t2 = sigma * sigma;
    for (std::size_t i = 0; i < n; ++i) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < y.shape[1]; ++j) norm2 += y(i, j) * y(i, j);
        out[i] = (cs - 1.0) * norm2 / (2.0 * t2) + co / (t2 * ci) * phi_vals[i];
    }
    return out;
}

ad::Var edm_train_loss_build(ad::Tape& tape, const Denoiser& den, const BoundParams& params,
                             const Tensor& x_emb, const Tensor& y_clean, const Tensor& noise,
                             const std::vector<double>& sigmas) {
    const std::size_t n = y_clean.shape[0];
    if (n == 0) throw std::invalid_argument("edm_train_loss: empty batch");

    // group rows by identical sigma draws would complicate bookkeeping; the
    // denoiser build is per-sigma, so evaluate one sigma at a time and stack.
    // For training we instead draw one sigma per row but share across the
    // batch slice with equal sigma; here each row may have its own sigma, so
    // build row-by-row groups of equal sigma.
    ad::Var total;
    bool first = true;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sigmas[a] < sigmas[b]; });

    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start;
        while (end < n && sigmas[order[end]] == sigmas[order[start]]) ++end;
        double sigma = sigmas[order[start]];
        std::size_t m = end - start;

        Tensor X({m, std::max<std::size_t>(den.ctx_dim(), 1)});
        Tensor Yc({m, den.event_dim()}), Yn({m, den.event_dim()});
        for (std::size_t r = 0; r < m; ++r) {
            std::size_t src = order[start + r];
            for (std::size_t j = 0; j < den.ctx_dim(); ++j) X(r, j) = x_emb(src, j);
            for (std::size_t j = 0; j < den.event_dim(); ++j) {
                Yc(r, j) = y_clean(src, j);
                Yn(r, j) = y_clean(src, j) + sigma * noise(src, j);
            }
        }
        ad::Var Xv;
        if (den.ctx_dim() > 0) Xv = tape.input(X);
        ad::Var Ynv = tape.input(Yn);
        ad::Var D = den.build(tape, params, Xv, Ynv, sigma);
        ad::Var R = tape.sub(D, tape.input(Yc));
        ad::Var sq = tape.sum(tape.square(R));
        ad::Var contrib = tape.scale(sq, den.config().loss_weight(sigma) / double(n));
        total = first ? contrib : tape.add(total, contrib);
        first = false;
        start = end;
    }
    return total;
}

double edm_train_loss_value(const Denoiser& den, const ParameterVector& params,
                            const Tensor& x_emb, const Tensor& y_clean, const Tensor& noise,
                            const std::vector<double>& sigmas) {
    ad::Tape tape;
    BoundParams bound = bind(tape, params);
    return tape.value(edm_train_loss_build(tape, den, bound, x_emb, y_clean, noise, sigmas))
        .data[0];
}

namespace {

void pflow_heun_step(const DenoiseFn& denoise, Tensor& y, double s0, double s1) {
    double h = s1 - s0;
    Tensor d0 = denoise(y, s0);
    Tensor k1(y.shape);
    for (std::size_t i = 0; i < y.numel(); ++i) k1.data[i] = (y.data[i] - d0.data[i]) / s0;
    Tensor ymid(y.shape);
    for (std::size_t i = 0; i < y.numel(); ++i) ymid.data[i] = y.data[i] + h * k1.data[i];
    Tensor d1 = denoise(ymid, s1);
    for (std::size_t i = 0; i < y.numel(); ++i) {
        double k2 = (ymid.data[i] - d1.data[i]) / s1;
        y.data[i] += 0.5 * h * (k1.data[i] + k2);
    }
}

}  // namespace

Tensor pflow_sample_batch(const DenoiseFn& denoise, const EdmConfig& cfg, std::size_t n,
                          std::size_t event_dim, std::uint64_t seed) {
    Rng rng(seed);
    Tensor y({n, event_dim});
    for (double& v : y.data) v = cfg.sigma_max * rng.normal();
    std::vector<double> sig = karras_sigma_schedule(cfg, cfg.n_steps);
    for (std::size_t k = 0; k + 1 < sig.size(); ++k) pflow_heun_step(denoise, y, sig[k], sig[k + 1]);
    return y;
}

PflowLogp pflow_sample_logprob_batch(const DenoiseFn& denoise, const DivergenceFn& div,
                                     const EdmConfig& cfg, std::size_t n, std::size_t event_dim,
                                     std::uint64_t seed) {
    Rng rng(seed);
    Tensor y({n, event_dim});
    for (double& v : y.data) v = cfg.sigma_max * rng.normal();

    std::vector<double> base_lp(n);
    for (std::size_t i = 0; i < n; ++i) {
        double q = 0.0;
        for (std::size_t j = 0; j < event_dim; ++j) q += y(i, j) * y(i, j);
        base_lp[i] = -0.5 * q / (cfg.sigma_max * cfg.sigma_max) -
                     0.5 * double(event_dim) * std::log(2.0 * M_PI * cfg.sigma_max * cfg.sigma_max);
    }

    std::vector<double> sig = karras_sigma_schedule(cfg, cfg.n_steps);
    // lp grid: evenly spaced indices into the sigma grid, endpoints included
    int nlp = std::min(cfg.lp_steps, cfg.n_steps);
    std::vector<bool> is_lp(sig.size(), false);
    for (int k = 0; k < nlp; ++k)
        is_lp[std::size_t(std::llround(double(k) * (sig.size() - 1) / double(nlp - 1)))] = true;

    std::vector<double> running(n, 0.0), last_div;
    double last_sigma = 0.0;
    bool have_last = false;
    auto visit = [&](std::size_t idx) {
        if (!is_lp[idx]) return;
        std::vector<double> d = div(y, sig[idx]);
        if (have_last) {
            double h = sig[idx] - last_sigma;  // negative: descending schedule
            for (std::size_t i = 0; i < n; ++i) running[i] += 0.5 * h * (last_div[i] + d[i]);
        }
        last_div = std::move(d);
        last_sigma = sig[idx];
        have_last = true;
    };

    visit(0);
    for (std::size_t k = 0; k + 1 < sig.size(); ++k) {
        pflow_heun_step(denoise, y, sig[k], sig[k + 1]);
        visit(k + 1);
    }

    PflowLogp out;
    out.logp.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.logp[i] = base_lp[i] - running[i];
    out.y = std::move(y);
    return out;
}

}  // namespace cebm
