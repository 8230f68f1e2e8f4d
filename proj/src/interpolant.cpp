#include "cebm/interpolant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cebm {

namespace interpolant {

std::vector<double> eval(const std::vector<double>& z, const std::vector<double>& y, double t) {
    if (z.size() != y.size()) throw std::invalid_argument("interpolant: dimension mismatch");
    if (t == 0.0) return z;  // endpoint identities hold exactly
    if (t == 1.0) return y;
    double c = std::cos(0.5 * M_PI * t), s = std::sin(0.5 * M_PI * t);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = c * z[i] + s * y[i];
    return out;
}

std::vector<double> dt(const std::vector<double>& z, const std::vector<double>& y, double t) {
    if (z.size() != y.size()) throw std::invalid_argument("interpolant: dimension mismatch");
    double c = 0.5 * M_PI * std::cos(0.5 * M_PI * t), s = -0.5 * M_PI * std::sin(0.5 * M_PI * t);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = s * z[i] + c * y[i];
    return out;
}

Tensor eval_batch(const Tensor& z, const Tensor& y, const std::vector<double>& ts) {
    Tensor out(z.shape);
    for (std::size_t i = 0; i < z.shape[0]; ++i) {
        double c = ts[i] == 1.0 ? 0.0 : std::cos(0.5 * M_PI * ts[i]);
        double s = ts[i] == 0.0 ? 0.0 : (ts[i] == 1.0 ? 1.0 : std::sin(0.5 * M_PI * ts[i]));
        if (ts[i] == 0.0) c = 1.0;
        for (std::size_t j = 0; j < z.shape[1]; ++j) out(i, j) = c * z(i, j) + s * y(i, j);
    }
    return out;
}

Tensor dt_batch(const Tensor& z, const Tensor& y, const std::vector<double>& ts) {
    Tensor out(z.shape);
    for (std::size_t i = 0; i < z.shape[0]; ++i) {
        double c = 0.5 * M_PI * std::cos(0.5 * M_PI * ts[i]);
        double s = -0.5 * M_PI * std::sin(0.5 * M_PI * ts[i]);
        for (std::size_t j = 0; j < z.shape[1]; ++j) out(i, j) = s * z(i, j) + c * y(i, j);
    }
    return out;
}

}  // namespace interpolant

double TimeDistribution::sample(Rng& rng) const {
    if (alpha < 1.0) throw std::invalid_argument("TimeDistribution: alpha must be >= 1");
    return std::pow(rng.uniform_open0(), 1.0 / alpha);
}

StepSchedule StepSchedule::uniform(int n_fine_steps, int n_lp_points, double t_end) {
    if (n_fine_steps < 1 || n_lp_points < 2)
        throw std::invalid_argument("StepSchedule: need >= 1 fine step and >= 2 lp points");
    StepSchedule s;
    s.ts.resize(std::size_t(n_fine_steps) + 1);
    for (int i = 0; i <= n_fine_steps; ++i) s.ts[i] = t_end * double(i) / double(n_fine_steps);
    // lp grid on fine-grid indices so lp_ts is a true subset
    s.lp_ts.reserve(n_lp_points);
    for (int k = 0; k < n_lp_points; ++k) {
        int idx = int(std::llround(double(k) * n_fine_steps / double(n_lp_points - 1)));
        s.lp_ts.push_back(s.ts[idx]);
    }
    s.lp_ts.erase(std::unique(s.lp_ts.begin(), s.lp_ts.end()), s.lp_ts.end());
    s.validate();
    return s;
}

void StepSchedule::validate() const {
    if (ts.empty() || ts.front() != 0.0)
        throw std::invalid_argument("StepSchedule: fine grid must start at 0");
    for (std::size_t i = 1; i < ts.size(); ++i)
        if (ts[i] <= ts[i - 1]) throw std::invalid_argument("StepSchedule: ts not increasing");
    if (lp_ts.size() < 2) throw std::invalid_argument("StepSchedule: need >= 2 lp points");
    for (std::size_t i = 1; i < lp_ts.size(); ++i)
        if (lp_ts[i] <= lp_ts[i - 1])
            throw std::invalid_argument("StepSchedule: lp_ts not increasing");
    for (double t : lp_ts)
        if (!std::binary_search(ts.begin(), ts.end(), t))
            throw std::invalid_argument("StepSchedule: lp_ts must be a subset of ts");
}

std::vector<double> heun_step(
    const std::function<std::vector<double>(double, const std::vector<double>&)>& field,
    const std::vector<double>& y, double t0, double t1) {
    double h = t1 - t0;
    std::vector<double> k1 = field(t0, y);
    std::vector<double> ymid(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) ymid[i] = y[i] + h * k1[i];
    std::vector<double> k2 = field(t1, ymid);
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] + 0.5 * h * (k1[i] + k2[i]);
    return out;
}

namespace {

void heun_step_batch(const BatchedField& field, Tensor& y, double t0, double t1) {
    double h = t1 - t0;
    Tensor k1 = field.value(y, t0);
    Tensor ymid(y.shape);
    for (std::size_t i = 0; i < y.numel(); ++i) ymid.data[i] = y.data[i] + h * k1.data[i];
    Tensor k2 = field.value(ymid, t1);
    for (std::size_t i = 0; i < y.numel(); ++i)
        y.data[i] += 0.5 * h * (k1.data[i] + k2.data[i]);
}

}  // namespace

Tensor integrate_heun(const BatchedField& field, Tensor y0, const std::vector<double>& ts) {
    Tensor y = std::move(y0);
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) heun_step_batch(field, y, ts[k], ts[k + 1]);
    return y;
}

FlowIntegrationResult integrate_two_timescale(const BatchedField& field, Tensor y0,
                                              const StepSchedule& schedule,
                                              const std::vector<double>& snapshot_ts) {
    schedule.validate();
    const std::size_t n = y0.shape[0];
    FlowIntegrationResult res;
    res.div_integral.assign(n, 0.0);
    res.snapshots.resize(snapshot_ts.size());
    res.snapshot_div_integrals.resize(snapshot_ts.size());

    Tensor y = std::move(y0);
    std::vector<double> running(n, 0.0);
    double last_lp_t = 0.0;
    std::vector<double> last_div;
    bool have_last = false;

    auto visit = [&](double t) {
        bool is_lp = std::binary_search(schedule.lp_ts.begin(), schedule.lp_ts.end(), t);
        if (is_lp) {
            std::vector<double> d = field.divergence(y, t);
            if (have_last) {
                double h = t - last_lp_t;
                for (std::size_t i = 0; i < n; ++i)
                    running[i] += 0.5 * h * (last_div[i] + d[i]);
            }
            last_div = std::move(d);
            last_lp_t = t;
            have_last = true;
        }
        for (std::size_t s = 0; s < snapshot_ts.size(); ++s) {
            if (snapshot_ts[s] == t) {
                res.snapshots[s] = y;
                res.snapshot_div_integrals[s] = running;
            }
        }
    };

    visit(schedule.ts[0]);
    for (std::size_t k = 0; k + 1 < schedule.ts.size(); ++k) {
        heun_step_batch(field, y, schedule.ts[k], schedule.ts[k + 1]);
        visit(schedule.ts[k + 1]);
    }
    res.div_integral = running;
    res.y = std::move(y);
    return res;
}

std::vector<double> exact_divergence(const VelocityField& vf, const ParameterVector& xi,
                                     const Tensor& x_emb, const Tensor& y, double t) {
    const std::size_t n = y.shape[0];
    const std::size_t d = y.shape[1];
    ad::Tape tape;
    BoundParams bound = bind(tape, xi);
    ad::Var X = tape.input(x_emb);
    ad::Var Y = tape.input(y);
    ad::Var T = tape.input(Tensor::full({n, 1}, t));
    ad::Var v = vf.build(tape, bound, X, Y, T);

    std::vector<double> div(n, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        // seed selects component i of every row; rows stay independent
        Tensor seed(tape.value(v).shape);
        for (std::size_t r = 0; r < n; ++r) seed(r, i) = 1.0;
        tape.backward(v, &seed);
        Tensor g = tape.adjoint(Y);
        for (std::size_t r = 0; r < n; ++r) div[r] += g(r, i);
    }
    return div;
}

double log_normal_density(const std::vector<double>& z) {
    double q = 0.0;
    for (double v : z) q += v * v;
    return -0.5 * q - 0.5 * double(z.size()) * std::log(2.0 * M_PI);
}

StepSchedule FlowModel::default_schedule(double t_end) const {
    return StepSchedule::uniform(fine_steps, lp_steps, t_end);
}

BatchedField FlowModel::field(const Tensor& x_emb) const {
    BatchedField f;
    f.value = [this, x_emb](const Tensor& y, double t) {
        return vf_.velocity_batch(xi_, x_emb, y, t);
    };
    f.divergence = [this, x_emb](const Tensor& y, double t) {
        return exact_divergence(vf_, xi_, x_emb, y, t);
    };
    return f;
}

Tensor FlowModel::draw_base(std::size_t n, Rng& rng) const {
    Tensor z({n, vf_.event_dim()});
    for (double& v : z.data) v = rng.normal();
    return z;
}

std::vector<double> FlowModel::sample(const std::vector<double>& x_emb, std::uint64_t seed,
                                      double truncate_at) const {
    if (truncate_at <= 0.0 || truncate_at > 1.0)
        throw std::invalid_argument("FlowModel::sample: truncate_at must be in (0, 1]");
    Rng rng(seed);
    Tensor X({1, vf_.ctx_dim()});
    X.data = x_emb;
    Tensor z = draw_base(1, rng);
    StepSchedule s = default_schedule(truncate_at);
    Tensor y = sample_batch(X, z, s);
    return y.data;
}

Tensor FlowModel::sample_batch(const Tensor& x_emb, const Tensor& z,
                               const StepSchedule& s) const {
    s.validate();
    return integrate_heun(field(x_emb), z, s.ts);
}

FlowModel::SampleLogp FlowModel::sample_with_logprob(const Tensor& x_emb, const Tensor& z,
                                                     const StepSchedule& s) const {
    FlowIntegrationResult r = integrate_two_timescale(field(x_emb), z, s);
    SampleLogp out;
    out.y = std::move(r.y);
    out.div_integral = std::move(r.div_integral);
    out.logp.resize(z.shape[0]);
    for (std::size_t i = 0; i < z.shape[0]; ++i) {
        std::vector<double> zi(z.shape[1]);
        for (std::size_t j = 0; j < z.shape[1]; ++j) zi[j] = z(i, j);
        out.logp[i] = log_normal_density(zi) - out.div_integral[i];
    }
    return out;
}

std::vector<double> FlowModel::logprob_at(const Tensor& x_emb, const Tensor& y, double t,
                                          const StepSchedule& s) const {
    const std::size_t n = y.shape[0];
    if (t < 1e-4) {
        // degenerate truncation: base density
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> yi(y.shape[1]);
            for (std::size_t j = 0; j < y.shape[1]; ++j) yi[j] = y(i, j);
            out[i] = log_normal_density(yi);
        }
        return out;
    }
    s.validate();
    if (s.ts.back() + 1e-12 < t)
        throw std::invalid_argument("FlowModel::logprob_at: schedule does not reach t");

    BatchedField f = field(x_emb);
    Tensor state = y;
    std::vector<double> div_integral(n, 0.0);
    double last_lp_t = 0.0;
    std::vector<double> last_div;
    bool have_last = false;
    auto visit = [&](double tt) {
        if (!std::binary_search(s.lp_ts.begin(), s.lp_ts.end(), tt)) return;
        std::vector<double> d = f.divergence(state, tt);
        if (have_last) {
            double h = last_lp_t - tt;  // descending
            for (std::size_t i = 0; i < n; ++i) div_integral[i] += 0.5 * h * (last_div[i] + d[i]);
        }
        last_div = std::move(d);
        last_lp_t = tt;
        have_last = true;
    };

    // walk the schedule backwards from t down to 0
    std::size_t kend = 0;
    while (kend + 1 < s.ts.size() && s.ts[kend] + 1e-12 < t) ++kend;
    visit(s.ts[kend]);
    for (std::size_t k = kend; k > 0; --k) {
        double t0 = s.ts[k], t1 = s.ts[k - 1];
        double h = t1 - t0;
        Tensor k1 = f.value(state, t0);
        Tensor ymid(state.shape);
        for (std::size_t i = 0; i < state.numel(); ++i)
            ymid.data[i] = state.data[i] + h * k1.data[i];
        Tensor k2 = f.value(ymid, t1);
        for (std::size_t i = 0; i < state.numel(); ++i)
            state.data[i] += 0.5 * h * (k1.data[i] + k2.data[i]);
        visit(t1);
    }

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> zi(state.shape[1]);
        for (std::size_t j = 0; j < state.shape[1]; ++j) zi[j] = state(i, j);
        out[i] = log_normal_density(zi) - div_integral[i];
    }
    return out;
}

ad::Var interpolant_loss_build(ad::Tape& tape, const VelocityField& vf, const BoundParams& xi,
                               const Tensor& x_emb, const Tensor& y, const Tensor& z,
                               const std::vector<double>& ts) {
    const std::size_t n = y.shape[0];
    if (n == 0) throw std::invalid_argument("interpolant_loss: empty batch");
    Tensor yt = interpolant::eval_batch(z, y, ts);
    Tensor dtI = interpolant::dt_batch(z, y, ts);
    Tensor tcol({n, 1});
    for (std::size_t i = 0; i < n; ++i) tcol(i, 0) = ts[i];

    ad::Var X = tape.input(x_emb);
    ad::Var Y = tape.input(yt);
    ad::Var T = tape.input(tcol);
    ad::Var D = tape.input(dtI);
    ad::Var v = vf.build(tape, xi, X, Y, T);
    ad::Var sq = tape.row_sum(tape.square(v));
    ad::Var cross = tape.row_sum(tape.mul(D, v));
    ad::Var per_row = tape.sub(sq, tape.scale(cross, 2.0));
    return tape.scale(tape.sum(per_row), 1.0 / double(n));
}

double interpolant_loss_value(const VelocityField& vf, const ParameterVector& xi,
                              const Tensor& x_emb, const Tensor& y, const Tensor& z,
                              const std::vector<double>& ts) {
    ad::Tape tape;
    BoundParams bound = bind(tape, xi);
    ad::Var loss = interpolant_loss_build(tape, vf, bound, x_emb, y, z, ts);
    return tape.value(loss).data[0];
}

}  // namespace cebm
