#include "cebm/models.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace cebm {

using nlohmann::json;

std::string ArchDescriptor::to_json() const {
    json j;
    j["kind"] = kind;
    j["widths"] = widths;
    j["time_embed_dim"] = time_embed_dim;
    j["residual"] = residual;
    return j.dump();
}

ArchDescriptor ArchDescriptor::from_json(const std::string& text) {
    json j = json::parse(text);
    ArchDescriptor a;
    a.kind = j.at("kind").get<std::string>();
    a.widths = j.value("widths", std::vector<int>{});
    a.time_embed_dim = j.value("time_embed_dim", 0);
    a.residual = j.value("residual", true);
    return a;
}

std::vector<double> sinusoidal_embedding(double value, int dim) {
    std::vector<double> e(dim);
    for (int i = 0; i < dim / 2; ++i) {
        double freq = std::pow(10000.0, -2.0 * i / double(dim));
        e[2 * i] = std::sin(value * freq);
        e[2 * i + 1] = std::cos(value * freq);
    }
    if (dim % 2 == 1) e[dim - 1] = std::sin(value * std::pow(10000.0, -1.0));
    return e;
}

namespace {

Tensor uniform_fan_in(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    double a = std::sqrt(3.0 / double(fan_in));
    Tensor w({fan_in, fan_out});
    for (double& v : w.data) v = rng.uniform(-a, a);
    return w;
}

void add_dense(ParameterVector& p, const std::string& name, std::size_t in, std::size_t out,
               Rng& rng) {
    if (in == 0 || out == 0)
        throw std::invalid_argument("mlp_init: zero-width layer " + name);
    p.add(name + ".w", uniform_fan_in(in, out, rng));
    p.add(name + ".b", Tensor({1, out}));
}

ad::Var dense(ad::Tape& t, const BoundParams& p, const std::string& name, ad::Var h) {
    ad::Var w = p.at(name + ".w");
    ad::Var b = p.at(name + ".b");
    std::size_t n = t.value(h).shape[0];
    return t.add(t.matmul(h, w), t.broadcast_rows(b, n));
}

}  // namespace

ParameterVector mlp_init(const ArchDescriptor& arch, std::size_t ctx_dim,
                         std::size_t event_dim, std::uint64_t seed) {
    Rng rng(seed);
    ParameterVector p;
    if (arch.kind == "gaussian_mean") {
        p.add("mu", Tensor::scalar(0.0));
        return p;
    }
    if (arch.kind == "gaussian_natural") {
        p.add("theta", Tensor::vec({0.0, -0.5}));
        return p;
    }
    for (int w : arch.widths)
        if (w <= 0) throw std::invalid_argument("mlp_init: zero-width layer");
    if (arch.widths.empty()) throw std::invalid_argument("mlp_init: widths empty");

    std::size_t width = std::size_t(arch.widths[0]);
    if (arch.kind == "mlp_energy") {
        std::size_t in = ctx_dim + event_dim + std::size_t(arch.time_embed_dim);
        add_dense(p, "proj", in, width, rng);
        for (std::size_t i = 0; i < arch.widths.size(); ++i)
            add_dense(p, "blk" + std::to_string(i), std::size_t(arch.widths[i]),
                      std::size_t(arch.widths[i]), rng);
        add_dense(p, "head", width, 1, rng);
        return p;
    }
    if (arch.kind == "mlp_vf") {
        // t -> 2-layer MLP of width time_embed_dim, then concat with (x, y)
        std::size_t te = std::size_t(arch.time_embed_dim);
        if (te == 0) throw std::invalid_argument("mlp_init: mlp_vf needs time_embed_dim > 0");
        add_dense(p, "temb0", 1, te, rng);
        add_dense(p, "temb1", te, te, rng);
        std::size_t in = ctx_dim + event_dim + te;
        add_dense(p, "proj", in, width, rng);
        for (std::size_t i = 0; i < arch.widths.size(); ++i)
            add_dense(p, "blk" + std::to_string(i), std::size_t(arch.widths[i]),
                      std::size_t(arch.widths[i]), rng);
        add_dense(p, "head", width, event_dim, rng);
        return p;
    }
    if (arch.kind == "concatsquash_vf") {
        std::size_t in = ctx_dim + event_dim;
        std::size_t prev = in;
        for (std::size_t i = 0; i <= arch.widths.size(); ++i) {
            std::size_t out = i < arch.widths.size() ? std::size_t(arch.widths[i]) : event_dim;
            std::string name = "cs" + std::to_string(i);
            add_dense(p, name, prev, out, rng);
            p.add(name + ".gw", uniform_fan_in(1, out, rng));
            p.add(name + ".gb", Tensor({1, out}));
            p.add(name + ".tw", uniform_fan_in(1, out, rng));
            prev = out;
        }
        return p;
    }
    throw std::invalid_argument("mlp_init: unknown kind " + arch.kind);
}

EnergyModel::EnergyModel(ArchDescriptor arch, std::size_t ctx_dim, std::size_t event_dim)
    : arch_(std::move(arch)), ctx_dim_(ctx_dim), event_dim_(event_dim) {}

ParameterVector EnergyModel::init_params(std::uint64_t seed) const {
    return mlp_init(arch_, ctx_dim_, event_dim_, seed);
}

ad::Var EnergyModel::build(ad::Tape& tape, const BoundParams& params, ad::Var x_emb, ad::Var y,
                           ad::Var t_emb) const {
    if (arch_.kind == "gaussian_mean") {
        GaussianMeanFamily fam;  // unit sigma in descriptor form
        return fam.build(tape, params.at("mu"), y);
    }
    if (arch_.kind == "gaussian_natural") {
        ad::Var th = params.at("theta");
        std::size_t n = tape.value(y).shape[0];
        ad::Var th1 = tape.reshape(tape.slice_cols(tape.reshape(th, {1, 2}), 0, 1), {1, 1});
        ad::Var th2 = tape.reshape(tape.slice_cols(tape.reshape(th, {1, 2}), 1, 1), {1, 1});
        ad::Var lin = tape.mul(y, tape.broadcast_scalar(tape.reshape(th1, {1}), {n, 1}));
        ad::Var quad = tape.mul(tape.square(y), tape.broadcast_scalar(tape.reshape(th2, {1}), {n, 1}));
        return tape.add(lin, quad);
    }

    ad::Var h = y;
    if (ctx_dim_ > 0) h = tape.concat_cols(x_emb, y);
    if (time_indexed()) {
        if (!t_emb.valid()) throw std::invalid_argument("EnergyModel: missing time embedding");
        h = tape.concat_cols(h, t_emb);
    }
    h = tape.swish(dense(tape, params, "proj", h));
    for (std::size_t i = 0; i < arch_.widths.size(); ++i) {
        ad::Var z = tape.swish(dense(tape, params, "blk" + std::to_string(i), h));
        h = arch_.residual ? tape.add(h, z) : z;
    }
    return dense(tape, params, "head", h);
}

Tensor EnergyModel::time_embed_rows(std::size_t n, double t) const {
    Tensor te({n, std::size_t(arch_.time_embed_dim)});
    std::vector<double> e = time_embedding(t, arch_.time_embed_dim);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < e.size(); ++j) te(i, j) = e[j];
    return te;
}

double EnergyModel::energy_eval(const ParameterVector& params, const std::vector<double>& x_emb,
                                const std::vector<double>& y, double t) const {
    Tensor X({1, ctx_dim_});
    X.data = x_emb;
    Tensor Y({1, event_dim_});
    Y.data = y;
    return energy_batch(params, X, Y, t)[0];
}

std::vector<double> EnergyModel::energy_batch(const ParameterVector& params, const Tensor& x_emb,
                                              const Tensor& y, double t) const {
    if (y.shape[1] != event_dim_ || (ctx_dim_ > 0 && x_emb.shape[1] != ctx_dim_))
        throw std::invalid_argument("EnergyModel: dimension mismatch");
    ad::Tape tape;
    BoundParams bound = bind(tape, params);
    ad::Var X = tape.input(x_emb);
    ad::Var Y = tape.input(y);
    ad::Var T;
    if (time_indexed()) T = tape.input(time_embed_rows(y.shape[0], t));
    ad::Var e = build(tape, bound, X, Y, T);
    return tape.value(e).data;
}

std::vector<double> EnergyModel::energy_score(const ParameterVector& params,
                                              const std::vector<double>& x_emb,
                                              const std::vector<double>& y, double t) const {
    Tensor X({1, ctx_dim_});
    X.data = x_emb;
    Tensor Y({1, event_dim_});
    Y.data = y;
    return score_batch(params, X, Y, t).data;
}

Tensor EnergyModel::score_batch(const ParameterVector& params, const Tensor& x_emb,
                                const Tensor& y, double t) const {
    if (y.shape[1] != event_dim_ || (ctx_dim_ > 0 && x_emb.shape[1] != ctx_dim_))
        throw std::invalid_argument("EnergyModel: dimension mismatch");
    ad::Tape tape;
    BoundParams bound = bind(tape, params);
    ad::Var X = tape.input(x_emb);
    ad::Var Y = tape.input(y);
    ad::Var T;
    if (time_indexed()) T = tape.input(time_embed_rows(y.shape[0], t));
    ad::Var e = build(tape, bound, X, Y, T);
    // rows are independent, so one pass seeded with ones gives every row's grad
    tape.backward(tape.sum(e));
    return tape.adjoint(Y);
}

VelocityField::VelocityField(ArchDescriptor arch, std::size_t ctx_dim, std::size_t event_dim)
    : arch_(std::move(arch)), ctx_dim_(ctx_dim), event_dim_(event_dim) {}

ParameterVector VelocityField::init_params(std::uint64_t seed) const {
    return mlp_init(arch_, ctx_dim_, event_dim_, seed);
}

ad::Var VelocityField::build(ad::Tape& tape, const BoundParams& params, ad::Var x_emb, ad::Var y,
                             ad::Var t_raw) const {
    std::size_t n = tape.value(y).shape[0];
    if (arch_.kind == "mlp_vf") {
        ad::Var te = tape.swish(dense(tape, params, "temb0", t_raw));
        te = tape.swish(dense(tape, params, "temb1", te));
        ad::Var h = y;
        if (ctx_dim_ > 0) h = tape.concat_cols(x_emb, y);
        h = tape.concat_cols(h, te);
        h = tape.swish(dense(tape, params, "proj", h));
        for (std::size_t i = 0; i < arch_.widths.size(); ++i) {
            ad::Var z = tape.swish(dense(tape, params, "blk" + std::to_string(i), h));
            h = arch_.residual ? tape.add(h, z) : z;
        }
        return dense(tape, params, "head", h);
    }
    if (arch_.kind == "concatsquash_vf") {
        ad::Var h = y;
        if (ctx_dim_ > 0) h = tape.concat_cols(x_emb, y);
        for (std::size_t i = 0; i <= arch_.widths.size(); ++i) {
            std::string name = "cs" + std::to_string(i);
            ad::Var lin = dense(tape, params, name, h);
            std::size_t out = tape.value(lin).shape[1];
            ad::Var gate = tape.sigmoid(
                tape.add(tape.matmul(t_raw, params.at(name + ".gw")),
                         tape.broadcast_rows(params.at(name + ".gb"), n)));
            ad::Var tbias = tape.matmul(t_raw, params.at(name + ".tw"));
            h = tape.add(tape.mul(lin, gate), tbias);
            if (i < arch_.widths.size()) h = tape.swish(h);
            (void)out;
        }
        return h;
    }
    throw std::invalid_argument("VelocityField: unknown kind " + arch_.kind);
}

Tensor VelocityField::velocity_batch(const ParameterVector& params, const Tensor& x_emb,
                                     const Tensor& y, double t) const {
    ad::Tape tape;
    BoundParams bound = bind(tape, params);
    ad::Var X = tape.input(x_emb);
    ad::Var Y = tape.input(y);
    ad::Var T = tape.input(Tensor::full({y.shape[0], 1}, t));
    ad::Var v = build(tape, bound, X, Y, T);
    return tape.value(v);
}

ad::Var GaussianMeanFamily::build(ad::Tape& tape, ad::Var mu, ad::Var y) const {
    std::size_t n = tape.value(y).shape[0];
    ad::Var mu_b = tape.broadcast_scalar(mu, {n, 1});
    ad::Var d = tape.sub(y, mu_b);
    return tape.scale(tape.square(d), -1.0 / (2.0 * sigma * sigma));
}

GaussianNaturalFamily GaussianNaturalFamily::from_moments(double mu, double sigma) {
    GaussianNaturalFamily f;
    f.theta[1] = -1.0 / (2.0 * sigma * sigma);
    f.theta[0] = mu / (sigma * sigma);
    return f;
}

FisherPair gaussian_family_fisher(const GaussianNaturalFamily& fam) {
    if (!fam.integrable())
        throw std::invalid_argument("gaussian_family_fisher: non-integrable parameters");
    double mu = fam.mu();
    double s2 = fam.sigma2();
    FisherPair fp;
    // I = Cov(y, y^2): Var(y) = s2, Cov(y, y^2) = 2 mu s2, Var(y^2) = 4 mu^2 s2 + 2 s2^2
    fp.I = {s2, 2 * mu * s2, 2 * mu * s2, 4 * mu * mu * s2 + 2 * s2 * s2};
    // J = E[(1, 2y)(1, 2y)^T]
    fp.J = {1.0, 2 * mu, 2 * mu, 4 * (mu * mu + s2)};
    return fp;
}

double fisher_trace(const FisherPair& fp) {
    double det = fp.I[0] * fp.I[3] - fp.I[1] * fp.I[2];
    if (std::abs(det) < 1e-300) throw std::runtime_error("fisher_trace: singular I");
    // Tr(I^{-1} J) for symmetric 2x2
    double inv00 = fp.I[3] / det, inv01 = -fp.I[1] / det, inv11 = fp.I[0] / det;
    return inv00 * fp.J[0] + inv01 * fp.J[1] + inv01 * fp.J[2] + inv11 * fp.J[3];
}

}  // namespace cebm
