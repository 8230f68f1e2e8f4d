#include "cebm/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cebm {

PosteriorWeights posterior_q(const std::vector<double>& energies,
                             const std::vector<double>& proposal_logps) {
    if (energies.size() != proposal_logps.size())
        throw std::invalid_argument("posterior_q: length mismatch");
    std::vector<double> s(energies.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = energies[i] - proposal_logps[i];
    double m = -std::numeric_limits<double>::infinity();
    for (double v : s) m = std::max(m, v);
    if (!std::isfinite(m)) throw std::invalid_argument("posterior_q: all scores are -inf");
    double z = 0.0;
    PosteriorWeights w;
    w.q.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        w.q[i] = std::exp(s[i] - m);
        z += w.q[i];
    }
    for (double& v : w.q) v /= z;
    return w;
}

namespace {

struct StackedBatch {
    Tensor x_emb;      // (rows, cx)
    Tensor y;          // (rows, d)
    Tensor logps;      // (rows, 1)
    Tensor t_emb;      // (rows, te) when time-indexed
    std::vector<std::size_t> group_sizes;  // K_i + 1 per item
    std::vector<double> weights;           // contribution of each item's loss
};

StackedBatch stack_items(const EnergyModel& model, const std::vector<NegativeBatch>& items,
                         const std::vector<double>& weights) {
    std::size_t rows = 0;
    for (const auto& it : items) rows += it.k() + 1;
    const std::size_t cx = model.ctx_dim();
    const std::size_t d = model.event_dim();
    StackedBatch sb;
    sb.x_emb = Tensor({rows, std::max<std::size_t>(cx, 1)});
    sb.y = Tensor({rows, d});
    sb.logps = Tensor({rows, 1});
    if (model.time_indexed()) sb.t_emb = Tensor({rows, std::size_t(model.arch().time_embed_dim)});
    sb.weights = weights;

    std::size_t r = 0;
    for (const auto& it : items) {
        std::size_t kk = it.k();
        if (it.y_pos.size() != d || (cx > 0 && it.x_emb.size() != cx))
            throw std::invalid_argument("contrastive loss: dimension mismatch");
        if (it.neg_logps.size() != kk)
            throw std::invalid_argument("contrastive loss: negative log-density count mismatch");
        sb.group_sizes.push_back(kk + 1);
        std::vector<double> te;
        if (model.time_indexed()) te = time_embedding(it.t, model.arch().time_embed_dim);
        for (std::size_t s = 0; s < kk + 1; ++s, ++r) {
            for (std::size_t j = 0; j < cx; ++j) sb.x_emb(r, j) = it.x_emb[j];
            if (s == 0) {
                for (std::size_t j = 0; j < d; ++j) sb.y(r, j) = it.y_pos[j];
                sb.logps(r, 0) = it.pos_logp;
            } else {
                for (std::size_t j = 0; j < d; ++j) sb.y(r, j) = it.negs(s - 1, j);
                sb.logps(r, 0) = it.neg_logps[s - 1];
            }
            if (model.time_indexed())
                for (std::size_t j = 0; j < te.size(); ++j) sb.t_emb(r, j) = te[j];
        }
    }
    return sb;
}

// -sum_i w_i * [score_i0 - logsumexp_j score_ij], positive in slot 0
ContrastiveBuild grouped_loss(ad::Tape& tape, const EnergyModel& model,
                              const BoundParams& params, const StackedBatch& sb,
                              bool use_proposal_logps) {
    ad::Var X, T;
    if (model.ctx_dim() > 0) X = tape.input(sb.x_emb);
    ad::Var Y = tape.input(sb.y);
    if (model.time_indexed()) T = tape.input(sb.t_emb);
    ad::Var E = model.build(tape, params, X, Y, T);  // (rows, 1)

    ad::Var S = E;
    if (use_proposal_logps) S = tape.sub(E, tape.input(sb.logps));

    // all groups share K in the training path; reshape to (n, K+1) and do a
    // stabilized row logsumexp with the max held as a constant
    std::size_t n = sb.group_sizes.size();
    std::size_t kp1 = sb.group_sizes[0];
    for (std::size_t g : sb.group_sizes)
        if (g != kp1) throw std::invalid_argument("contrastive loss: ragged K not supported");

    ad::Var Sm = tape.reshape(S, {n, kp1});
    const Tensor& sval = tape.value(Sm);
    Tensor mx({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < kp1; ++j) m = std::max(m, sval(i, j));
        if (!std::isfinite(m)) throw std::invalid_argument("contrastive loss: -inf scores");
        mx(i, 0) = m;
    }
    ad::Var M = tape.input(mx);
    ad::Var shifted = tape.sub(Sm, tape.broadcast_cols(M, kp1));
    ad::Var lse = tape.add(M, tape.log(tape.row_sum(tape.exp(shifted))));
    ad::Var pos = tape.slice_cols(Sm, 0, 1);
    ad::Var per_item = tape.sub(pos, lse);  // (n, 1)

    Tensor wts({n, 1});
    for (std::size_t i = 0; i < n; ++i) wts(i, 0) = sb.weights[i];
    ad::Var weighted = tape.mul(per_item, tape.input(wts));
    return {tape.neg(tape.sum(weighted)), Sm};
}

}  // namespace

ContrastiveBuild contrastive_loss_build_ex(ad::Tape& tape, const EnergyModel& model,
                                           const BoundParams& params,
                                           const std::vector<NegativeBatch>& batch,
                                           bool use_proposal_logps) {
    if (batch.empty()) throw std::invalid_argument("contrastive loss: empty batch");
    std::vector<double> w(batch.size(), 1.0 / double(batch.size()));
    StackedBatch sb = stack_items(model, batch, w);
    return grouped_loss(tape, model, params, sb, use_proposal_logps);
}

ad::Var contrastive_loss_build(ad::Tape& tape, const EnergyModel& model,
                               const BoundParams& params,
                               const std::vector<NegativeBatch>& batch,
                               bool use_proposal_logps) {
    return contrastive_loss_build_ex(tape, model, params, batch, use_proposal_logps).loss;
}

ContrastiveBuild irnce_loss_build_ex(ad::Tape& tape, const EnergyModel& model,
                                     const BoundParams& params,
                                     const std::vector<TimeIndexedItem>& batch) {
    if (batch.empty()) throw std::invalid_argument("irnce loss: empty batch");
    std::vector<NegativeBatch> flat;
    std::vector<double> w;
    for (const auto& item : batch) {
        if (item.per_time.empty()) throw std::invalid_argument("irnce loss: item has no times");
        for (const auto& nb : item.per_time) {
            if (nb.t <= 0.0 || nb.t > 1.0)
                throw std::invalid_argument("irnce loss: t outside (0, 1]");
            flat.push_back(nb);
            flat.back().x_emb = item.x_emb;
            w.push_back(1.0 / (double(batch.size()) * double(item.per_time.size())));
        }
    }
    StackedBatch sb = stack_items(model, flat, w);
    return grouped_loss(tape, model, params, sb, true);
}

ad::Var irnce_loss_build(ad::Tape& tape, const EnergyModel& model, const BoundParams& params,
                         const std::vector<TimeIndexedItem>& batch) {
    return irnce_loss_build_ex(tape, model, params, batch).loss;
}

double rnce_loss(const EnergyModel& model, const ParameterVector& params,
                 const std::vector<NegativeBatch>& batch) {
    ad::Tape tape;
    BoundParams bound = bind(tape, params);
    return tape.value(contrastive_loss_build(tape, model, bound, batch, true)).data[0];
}

double ibc_loss(const EnergyModel& model, const ParameterVector& params,
                const std::vector<NegativeBatch>& batch) {
    ad::Tape tape;
    BoundParams bound = bind(tape, params);
    return tape.value(contrastive_loss_build(tape, model, bound, batch, false)).data[0];
}

double irnce_loss(const EnergyModel& model, const ParameterVector& params,
                  const std::vector<TimeIndexedItem>& batch) {
    ad::Tape tape;
    BoundParams bound = bind(tape, params);
    return tape.value(irnce_loss_build(tape, model, bound, batch)).data[0];
}

double mle_gaussian_mean(const std::vector<double>& data, double sigma) {
    (void)sigma;  // the MLE of the mean does not depend on it
    if (data.empty()) throw std::invalid_argument("mle_gaussian_mean: empty data");
    double s = 0.0;
    for (double v : data) s += v;
    return s / double(data.size());
}

}  // namespace cebm
