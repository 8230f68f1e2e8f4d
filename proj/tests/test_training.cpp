#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cebm/io.hpp"
#include "cebm/training.hpp"

using namespace cebm;

namespace {

TrainConfig quick_gaussian_cfg() {
    TrainConfig cfg;
    cfg.t_outer = 400;
    cfg.t_samp = 2;
    cfg.t_rnce = 1;
    cfg.k = 9;
    cfg.batch_size = 64;
    cfg.lr_theta = {"warmup_cosine", 2e-2, 0, 400, 1e-3};
    cfg.lr_xi = {"constant", 5e-3};
    cfg.alpha = 1.0;
    cfg.flow_fine_steps = 32;
    cfg.flow_lp_steps = 8;
    cfg.seed = 7;
    return cfg;
}

VelocityField gaussian_vf() {
    ArchDescriptor a;
    a.kind = "concatsquash_vf";
    a.widths = {32};
    return VelocityField(a, 0, 1);
}

}  // namespace

TEST_CASE("adam first step moves by about -lr * sign(g)") {
    ParameterVector p;
    p.add("w", Tensor::vec({1.0, -2.0}));
    ParameterVector g = p.zeros_like();
    g.at("w").data = {0.3, -0.04};
    Adam opt(LrSchedule{"constant", 1e-3}, 0.0, 0.9, 0.999, 1e-12);
    opt.step(p, g);
    CHECK(p.at("w").data[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
    CHECK(p.at("w").data[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-6));
}

TEST_CASE("adam zero gradient with zero weight decay is a fixed point") {
    ParameterVector p;
    p.add("w", Tensor::vec({0.7, 0.1}));
    auto before = p.flatten();
    ParameterVector g = p.zeros_like();
    Adam opt(LrSchedule{"constant", 1e-2});
    opt.step(p, g);
    opt.step(p, g);
    CHECK(p.flatten() == before);
}

TEST_CASE("adam resume from checkpoint state is bitwise identical") {
    ParameterVector p;
    p.add("w", Tensor::vec({0.5, -0.5, 1.5}));
    ParameterVector g = p.zeros_like();
    g.at("w").data = {0.1, 0.2, -0.3};

    // two sequential steps
    ParameterVector pa = p;
    Adam a(LrSchedule{"constant", 1e-3}, 1e-4);
    a.step(pa, g);
    a.step(pa, g);

    // one step, snapshot, restore into a fresh optimizer, second step
    ParameterVector pb = p;
    Adam b1(LrSchedule{"constant", 1e-3}, 1e-4);
    b1.step(pb, g);
    Adam b2(LrSchedule{"constant", 1e-3}, 1e-4);
    b2.restore(b1.m(), b1.v(), b1.step_count());
    b2.step(pb, g);

    CHECK(pa.flatten() == pb.flatten());
}

TEST_CASE("warmup cosine schedule shape") {
    LrSchedule s{"warmup_cosine", 1e-3, 100, 1000, 1e-5};
    CHECK(s.at(0) == doctest::Approx(1e-5).epsilon(1.0));  // tiny at the start
    CHECK(s.at(99) == doctest::Approx(1e-3).epsilon(1e-6));
    CHECK(s.at(100) > s.at(550));
    CHECK(s.at(999) == doctest::Approx(1e-5).epsilon(1e-2));
}

TEST_CASE("perturb_batch moments and edge cases") {
    Rng rng(3);
    Tensor Y({100000, 2});
    Tensor before = Y;
    Rng prng(5);
    Tensor same = perturb_batch(Y, 0.0, prng);
    CHECK(same.data == before.data);

    Rng prng2(6);
    Tensor noisy = perturb_batch(Y, 0.01, prng2);
    double var = 0;
    for (std::size_t i = 0; i < noisy.numel(); ++i) var += noisy.data[i] * noisy.data[i];
    var /= double(noisy.numel());
    CHECK(std::abs(std::sqrt(var) - 0.01) < 0.0005);
}

TEST_CASE("sigma_pert schedule anneals then holds") {
    SigmaPertSchedule sp{0.01, 0.005, 0.5};
    CHECK(sp.at(0, 1000) == doctest::Approx(0.01));
    CHECK(sp.at(250, 1000) == doctest::Approx(0.0075));
    CHECK(sp.at(500, 1000) == doctest::Approx(0.005));
    CHECK(sp.at(900, 1000) == doctest::Approx(0.005));
    // monotone non-increasing
    double prev = 1.0;
    for (int s = 0; s < 1000; s += 10) {
        double v = sp.at(s, 1000);
        CHECK(v <= prev + 1e-15);
        prev = v;
    }
}

TEST_CASE("train log enforces monotone steps and writes csv") {
    TrainLog log;
    log.append({1, 0.5, 0.1, 0.3, 1.2, 0.01});
    log.append({2, 0.4, 0.1, 0.3, 1.2, 0.01});
    CHECK_THROWS_AS(log.append({2, 0, 0, 0, 0, 0}), std::logic_error);
    log.to_csv("/tmp/cebm_trainlog_test.csv");
    CsvTable t = read_csv("/tmp/cebm_trainlog_test.csv");
    CHECK(t.header.size() == 6);
    CHECK(t.rows.size() == 2);
    CHECK(t.rows[1][t.col("rnce_loss")] == doctest::Approx(0.4));
}

TEST_CASE("train_rnce identical config+seed reproduces the log bitwise") {
    Dataset data = make_gaussian1d_dataset({1.0, 1.0}, 2000, 50);
    TrainConfig cfg = quick_gaussian_cfg();
    cfg.t_outer = 12;
    EnergyModel energy(GaussianMeanFamily::descriptor(), 0, 1);
    VelocityField vf = gaussian_vf();
    auto run = [&] {
        return train_rnce(cfg, data, "gaussian1d", energy, energy.init_params(1), vf,
                          vf.init_params(2));
    };
    TrainResult r1 = run();
    TrainResult r2 = run();
    CHECK(r1.theta.flatten() == r2.theta.flatten());
    CHECK(r1.xi.flatten() == r2.xi.flatten());
    REQUIRE(r1.log.records.size() == r2.log.records.size());
    for (std::size_t i = 0; i < r1.log.records.size(); ++i) {
        CHECK(r1.log.records[i].rnce_loss == r2.log.records[i].rnce_loss);
        CHECK(r1.log.records[i].q_pos_mean == r2.log.records[i].q_pos_mean);
    }
}

TEST_CASE("t_rnce=0 leaves theta bitwise unchanged; sampler params move") {
    Dataset data = make_gaussian1d_dataset({1.0, 1.0}, 2000, 51);
    TrainConfig cfg = quick_gaussian_cfg();
    cfg.t_outer = 10;
    cfg.t_rnce = 0;
    EnergyModel energy(GaussianMeanFamily::descriptor(), 0, 1);
    VelocityField vf = gaussian_vf();
    ParameterVector theta0 = energy.init_params(1);
    ParameterVector xi0 = vf.init_params(2);
    TrainResult r = train_rnce(cfg, data, "gaussian1d", energy, theta0, vf, xi0);
    CHECK(r.theta.flatten() == theta0.flatten());
    CHECK(r.xi.flatten() != xi0.flatten());
}

TEST_CASE("no gradient leakage: pure R-NCE steps leave the sampler unchanged") {
    Dataset data = make_gaussian1d_dataset({1.0, 1.0}, 2000, 52);
    TrainConfig cfg = quick_gaussian_cfg();
    cfg.t_outer = 10;
    cfg.t_samp = 0;
    EnergyModel energy(GaussianMeanFamily::descriptor(), 0, 1);
    VelocityField vf = gaussian_vf();
    ParameterVector xi0 = vf.init_params(2);
    TrainResult r = train_rnce(cfg, data, "gaussian1d", energy, energy.init_params(1), vf, xi0);
    CHECK(r.xi.flatten() == xi0.flatten());
}

TEST_CASE("realizable 1-D gaussian: joint training recovers mu and the saddle loss") {
    Dataset data = make_gaussian1d_dataset({1.0, 1.0}, 5000, 53);
    TrainConfig cfg = quick_gaussian_cfg();
    EnergyModel energy(GaussianMeanFamily::descriptor(), 0, 1);
    VelocityField vf = gaussian_vf();
    TrainResult r = train_rnce(cfg, data, "gaussian1d", energy, energy.init_params(1), vf,
                               vf.init_params(2));
    double mu_hat = r.theta.at("mu").data[0];
    CHECK(std::abs(mu_hat - 1.0) < 0.05);
    // trailing-window loss near log(K+1)
    double tail = 0.0;
    std::size_t nt = 50;
    for (std::size_t i = r.log.records.size() - nt; i < r.log.records.size(); ++i)
        tail += r.log.records[i].rnce_loss;
    tail /= double(nt);
    CHECK(std::abs(tail - std::log(10.0)) < 0.1);
}

TEST_CASE("pretrained sampler mode: conservation, boundary log, same optimum") {
    Dataset data = make_gaussian1d_dataset({1.0, 1.0}, 5000, 54);
    TrainConfig cfg = quick_gaussian_cfg();
    cfg.pretrained_sampler = true;
    EnergyModel energy(GaussianMeanFamily::descriptor(), 0, 1);
    VelocityField vf = gaussian_vf();
    TrainResult r = train_rnce(cfg, data, "gaussian1d", energy, energy.init_params(1), vf,
                               vf.init_params(2));
    // counts preserved: same number of rnce records as joint mode
    CHECK(std::int64_t(r.log.records.size()) == cfg.t_outer * cfg.t_rnce);
    CHECK(r.log.phase_boundary_step == 0);  // all sampler steps happen first
    double mu_hat = r.theta.at("mu").data[0];
    CHECK(std::abs(mu_hat - 1.0) < 0.05);
}

TEST_CASE("irnce with m=1 and near-degenerate time law tracks rnce") {
    Dataset data = make_gaussian1d_dataset({1.0, 1.0}, 4000, 55);
    TrainConfig cfg = quick_gaussian_cfg();
    cfg.t_outer = 150;
    ArchDescriptor ta;
    ta.kind = "mlp_energy";
    ta.widths = {16, 16};
    ta.time_embed_dim = 10;
    EnergyModel tenergy(ta, 0, 1);
    VelocityField vf = gaussian_vf();

    TrainConfig icfg = cfg;
    icfg.alpha_rnce = 1e9;  // t == 1 after snapping; sampler times unaffected
    icfg.m = 1;
    TrainResult ri = train_irnce(icfg, data, "gaussian1d", tenergy, tenergy.init_params(3), vf,
                                 vf.init_params(2));
    TrainResult rr = train_rnce(cfg, data, "gaussian1d", tenergy, tenergy.init_params(3), vf,
                                vf.init_params(2));
    double tail_i = 0, tail_r = 0;
    std::size_t nt = 30;
    for (std::size_t i = ri.log.records.size() - nt; i < ri.log.records.size(); ++i)
        tail_i += ri.log.records[i].rnce_loss;
    for (std::size_t i = rr.log.records.size() - nt; i < rr.log.records.size(); ++i)
        tail_r += rr.log.records[i].rnce_loss;
    CHECK(std::abs(tail_i / nt - tail_r / nt) < 0.25);
}

TEST_CASE("irnce m=3 runs and reports per-time diagnostics") {
    Dataset data = make_gaussian1d_dataset({1.0, 1.0}, 3000, 56);
    TrainConfig cfg = quick_gaussian_cfg();
    cfg.t_outer = 40;
    cfg.m = 3;
    cfg.alpha = 2.0;
    ArchDescriptor ta;
    ta.kind = "mlp_energy";
    ta.widths = {16, 16};
    ta.time_embed_dim = 10;
    EnergyModel tenergy(ta, 0, 1);
    VelocityField vf = gaussian_vf();
    TrainResult r = train_irnce(cfg, data, "gaussian1d", tenergy, tenergy.init_params(3), vf,
                                vf.init_params(2));
    CHECK(r.log.records.size() == std::size_t(cfg.t_outer * cfg.t_rnce));
    for (const auto& rec : r.log.records) {
        CHECK(std::isfinite(rec.rnce_loss));
        CHECK(rec.q_pos_mean >= 0.0);
        CHECK(rec.q_pos_mean <= 1.0);
    }
}

TEST_CASE("posterior collapse is detected and flagged, not fatal") {
    // single repeated data point, energy already optimal, absurdly distant
    // uniform negatives: q_pos saturates at 1 and the gradient vanishes
    Dataset data;
    data.context.assign(256, {});
    data.events = Tensor({256, 1});
    for (std::size_t i = 0; i < 256; ++i) data.events(i, 0) = 2.0;
    TrainConfig cfg = quick_gaussian_cfg();
    cfg.t_outer = 130;
    cfg.t_rnce = 1;
    cfg.lr_theta = {"constant", 1e-12};
    EnergyModel energy(GaussianMeanFamily::descriptor(), 0, 1);
    ParameterVector theta = energy.init_params(1);
    theta.at("mu").data[0] = 2.0;
    TrainResult r = train_ibc(cfg, data, "gaussian1d", energy, theta, 4e6);
    CHECK(r.log.collapse_flag);
    CHECK(r.log.collapse_step >= 100);
}
