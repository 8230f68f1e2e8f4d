#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cebm/objectives.hpp"
#include "cebm/rng.hpp"

using namespace cebm;

namespace {

// unit-variance mean family as an EnergyModel
EnergyModel mean_family_model() { return EnergyModel(GaussianMeanFamily::descriptor(), 0, 1); }

ParameterVector mu_params(double mu) {
    ParameterVector p;
    p.add("mu", Tensor::scalar(mu));
    return p;
}

NegativeBatch make_item(double y_pos, std::vector<double> negs, double pos_logp,
                        std::vector<double> neg_logps) {
    NegativeBatch nb;
    nb.y_pos = {y_pos};
    nb.pos_logp = pos_logp;
    nb.negs = Tensor({negs.size(), 1});
    for (std::size_t i = 0; i < negs.size(); ++i) nb.negs(i, 0) = negs[i];
    nb.neg_logps = std::move(neg_logps);
    return nb;
}

}  // namespace

TEST_CASE("posterior is uniform when scores match") {
    auto w = posterior_q({1.0, 1.0, 1.0, 1.0}, {1.0, 1.0, 1.0, 1.0});
    for (double q : w.q) CHECK(q == doctest::Approx(0.25).epsilon(1e-15));

    // high-precision two-way softmax: scores (2, 0)
    auto w2 = posterior_q({2.0, 0.0}, {0.0, 0.0});
    CHECK(w2.q[0] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-14));
    CHECK(w2.q[1] == doctest::Approx(std::exp(-2.0) / (1.0 + std::exp(-2.0))).epsilon(1e-14));
}

TEST_CASE("posterior weights sum to one within 1e-12") {
    Rng rng(4);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> e(10), lp(10);
        for (int i = 0; i < 10; ++i) {
            e[i] = rng.normal(0, 100);  // huge score gaps stay stable
            lp[i] = rng.normal(0, 10);
        }
        auto w = posterior_q(e, lp);
        double s = 0;
        for (double q : w.q) s += q;
        CHECK(std::abs(s - 1.0) < 1e-12);
        for (double q : w.q) CHECK(q >= 0.0);
    }
}

TEST_CASE("posterior invariant to constant energy shifts") {
    std::vector<double> e{0.3, -1.0, 2.0}, lp{0.1, 0.2, -0.4};
    auto w1 = posterior_q(e, lp);
    for (double& v : e) v += 13.7;
    auto w2 = posterior_q(e, lp);
    for (int i = 0; i < 3; ++i) CHECK(w1.q[i] == doctest::Approx(w2.q[i]).epsilon(1e-12));
}

TEST_CASE("posterior rejects all -inf scores") {
    double ninf = -std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(posterior_q({ninf, ninf}, {0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("rnce loss at uniform scores is log(K+1)") {
    EnergyModel m = mean_family_model();
    ParameterVector p = mu_params(0.0);
    // energies == proposal logps for every slot: choose y values then set
    // logps equal to the family's energies
    std::vector<NegativeBatch> batch;
    Rng rng(9);
    for (int i = 0; i < 4; ++i) {
        std::vector<double> negs(9), neg_lps(9);
        GaussianMeanFamily fam;
        double ypos = rng.normal();
        for (int k = 0; k < 9; ++k) {
            negs[k] = rng.normal();
            neg_lps[k] = fam.energy(0.0, negs[k]);
        }
        batch.push_back(make_item(ypos, negs, fam.energy(0.0, ypos), neg_lps));
    }
    CHECK(rnce_loss(m, p, batch) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("rnce loss K=1 hand value") {
    // scores (2, 0) with positive first: loss = -log(0.8807...)
    EnergyModel m = mean_family_model();
    ParameterVector p = mu_params(0.0);
    GaussianMeanFamily fam;
    // choose y values and logps so that score(pos) - score(neg) = 2
    double ypos = 0.5, yneg = 0.7;
    double lp_pos = fam.energy(0.0, ypos) - 2.0;
    double lp_neg = fam.energy(0.0, yneg);
    std::vector<NegativeBatch> batch{make_item(ypos, {yneg}, lp_pos, {lp_neg})};
    double expected = -std::log(1.0 / (1.0 + std::exp(-2.0)));
    CHECK(rnce_loss(m, p, batch) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(rnce_loss(m, p, batch) == doctest::Approx(0.126928).epsilon(1e-5));
}

TEST_CASE("rnce loss invariant to slot permutation of negatives") {
    EnergyModel m = mean_family_model();
    ParameterVector p = mu_params(0.4);
    Rng rng(12);
    std::vector<double> negs(5), lps(5);
    for (int k = 0; k < 5; ++k) {
        negs[k] = rng.normal();
        lps[k] = rng.normal();
    }
    auto base = make_item(0.3, negs, -0.9, lps);
    double l1 = rnce_loss(m, p, {base});
    std::swap(negs[0], negs[4]);
    std::swap(lps[0], lps[4]);
    auto permuted = make_item(0.3, negs, -0.9, lps);
    double l2 = rnce_loss(m, p, {permuted});
    CHECK(l1 == doctest::Approx(l2).epsilon(1e-15));
}

TEST_CASE("rnce loss is nonnegative") {
    EnergyModel m = mean_family_model();
    ParameterVector p = mu_params(0.0);
    Rng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> negs(3), lps(3);
        for (int k = 0; k < 3; ++k) {
            negs[k] = rng.normal();
            lps[k] = rng.normal();
        }
        std::vector<NegativeBatch> batch{make_item(rng.normal(), negs, rng.normal(), lps)};
        CHECK(rnce_loss(m, p, batch) >= 0.0);
    }
}

TEST_CASE("empty batch raises") {
    EnergyModel m = mean_family_model();
    ParameterVector p = mu_params(0.0);
    CHECK_THROWS_AS(rnce_loss(m, p, {}), std::invalid_argument);
    CHECK_THROWS_AS(ibc_loss(m, p, {}), std::invalid_argument);
    CHECK_THROWS_AS(mle_gaussian_mean({}, 1.0), std::invalid_argument);
}

TEST_CASE("ibc loss uniform energies and uniform-proposal equivalence") {
    EnergyModel m = mean_family_model();
    ParameterVector p = mu_params(0.0);
    // uniform energies: all y equal
    std::vector<double> negs(9, 0.7), lps(9, 0.0);
    std::vector<NegativeBatch> batch{make_item(0.7, negs, 0.0, lps)};
    CHECK(ibc_loss(m, p, batch) == doctest::Approx(std::log(10.0)).epsilon(1e-12));

    // equal proposal log-densities: rnce == ibc
    Rng rng(33);
    std::vector<double> negs2(4), lps2(4, -1.3);
    for (double& v : negs2) v = rng.normal();
    std::vector<NegativeBatch> b2{make_item(rng.normal(), negs2, -1.3, lps2)};
    CHECK(rnce_loss(m, p, b2) == doctest::Approx(ibc_loss(m, p, b2)).epsilon(1e-12));
}

TEST_CASE("irnce reduces to rnce at m=1, t=1 and averages linearly") {
    EnergyModel m = mean_family_model();
    ParameterVector p = mu_params(0.2);
    Rng rng(44);
    std::vector<TimeIndexedItem> items;
    std::vector<NegativeBatch> flat;
    for (int i = 0; i < 3; ++i) {
        std::vector<double> negs(4), lps(4);
        for (int k = 0; k < 4; ++k) {
            negs[k] = rng.normal();
            lps[k] = rng.normal();
        }
        NegativeBatch nb = make_item(rng.normal(), negs, rng.normal(), lps);
        nb.t = 1.0;
        TimeIndexedItem item;
        item.x_emb = {};
        item.per_time = {nb};
        items.push_back(item);
        flat.push_back(nb);
    }
    CHECK(irnce_loss(m, p, items) == doctest::Approx(rnce_loss(m, p, flat)).epsilon(1e-15));

    // m=5 equals the mean of five m=1 losses with the same draws
    TimeIndexedItem multi;
    multi.x_emb = {};
    double acc = 0.0;
    for (int j = 0; j < 5; ++j) {
        std::vector<double> negs(4), lps(4);
        for (int k = 0; k < 4; ++k) {
            negs[k] = rng.normal();
            lps[k] = rng.normal();
        }
        NegativeBatch nb = make_item(rng.normal(), negs, rng.normal(), lps);
        nb.t = 0.2 * (j + 1);
        multi.per_time.push_back(nb);
        TimeIndexedItem single;
        single.per_time = {nb};
        acc += irnce_loss(m, p, {single});
    }
    CHECK(irnce_loss(m, p, {multi}) == doctest::Approx(acc / 5.0).epsilon(1e-12));
}

TEST_CASE("irnce loss at uniform scores is log(K+1) at every time") {
    ArchDescriptor a;
    a.kind = "mlp_energy";
    a.widths = {8};
    a.time_embed_dim = 10;
    EnergyModel m(a, 0, 1);
    ParameterVector p = m.init_params(5);
    // force scores equal by setting logps to the model's own energies
    TimeIndexedItem item;
    Rng rng(55);
    for (double t : {0.3, 0.8}) {
        NegativeBatch nb;
        nb.t = t;
        nb.y_pos = {rng.normal()};
        nb.negs = Tensor({3, 1});
        for (int k = 0; k < 3; ++k) nb.negs(k, 0) = rng.normal();
        nb.pos_logp = m.energy_eval(p, {}, nb.y_pos, t);
        for (int k = 0; k < 3; ++k)
            nb.neg_logps.push_back(m.energy_eval(p, {}, {nb.negs(k, 0)}, t));
        item.per_time.push_back(nb);
    }
    CHECK(irnce_loss(m, p, {item}) == doctest::Approx(std::log(4.0)).epsilon(1e-10));
}

TEST_CASE("irnce rejects t outside (0,1]") {
    EnergyModel m = mean_family_model();
    ParameterVector p = mu_params(0.0);
    TimeIndexedItem item;
    NegativeBatch nb = make_item(0.1, {0.2}, 0.0, {0.0});
    nb.t = 0.0;
    item.per_time = {nb};
    CHECK_THROWS_AS(irnce_loss(m, p, {item}), std::invalid_argument);
}

TEST_CASE("mle of the gaussian mean family") {
    CHECK(mle_gaussian_mean({1, 1, 1}, 1.0) == 1.0);
    CHECK(mle_gaussian_mean({0, 2}, 1.0) == 1.0);
    Rng rng(71);
    std::vector<double> data(100000);
    for (double& v : data) v = rng.normal(1.0, 1.0);
    CHECK(std::abs(mle_gaussian_mean(data, 1.0) - 1.0) < 0.02);
}

TEST_CASE("rnce loss gradient matches finite differences") {
    EnergyModel m = mean_family_model();
    ParameterVector p = mu_params(0.3);
    Rng rng(81);
    std::vector<NegativeBatch> batch;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> negs(4), lps(4);
        for (int k = 0; k < 4; ++k) {
            negs[k] = rng.normal();
            lps[k] = rng.normal(0, 0.5);
        }
        batch.push_back(make_item(rng.normal(1.0, 1.0), negs, rng.normal(0, 0.5), lps));
    }
    auto build = [&](ad::Tape& t, const BoundParams& b) {
        return contrastive_loss_build(t, m, b, batch, true);
    };
    CHECK(finite_difference_check(build, p, 1e-5) < 1e-5);
}

TEST_CASE("rnce gradient has zero mean at the optimum with realizable proposal") {
    // p = N(1,1), proposal = p, energy = mean family at mu*=1.
    // dl/dmu per draw, averaged over many independent (y, negatives) draws.
    Rng rng(91);
    const int n = 100000, K = 9;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        double ypos = rng.normal(1.0, 1.0);
        std::vector<double> ys{ypos};
        for (int k = 0; k < K; ++k) ys.push_back(rng.normal(1.0, 1.0));
        // scores: all equal since energy - log p is constant; q uniform
        // dl/dmu = (ypos - mu) - sum_k q_k (y_k - mu) with q = softmax of scores
        std::vector<double> e(K + 1), lp(K + 1);
        GaussianMeanFamily fam;
        for (int k = 0; k <= K; ++k) {
            e[k] = fam.energy(1.0, ys[k]);
            lp[k] = fam.energy(1.0, ys[k]) - 0.5 * std::log(2 * M_PI);
        }
        auto q = posterior_q(e, lp);
        double g = (ys[0] - 1.0);
        for (int k = 0; k <= K; ++k) g -= q.q[k] * (ys[k] - 1.0);
        sum += g;
        sumsq += g * g;
    }
    double mean = sum / n;
    double stderr_ = std::sqrt((sumsq / n - mean * mean) / n);
    CHECK(std::abs(mean) < 3.0 * stderr_);
}
