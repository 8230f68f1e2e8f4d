#include "cebm/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cebm/io.hpp"

namespace cebm {

double SigmaPertSchedule::at(std::int64_t step, std::int64_t total_steps) const {
    if (start <= 0.0) return 0.0;
    double anneal_steps = anneal_frac * double(total_steps);
    if (anneal_steps <= 0.0 || step >= anneal_steps) return end;
    double u = double(step) / anneal_steps;
    return start + u * (end - start);
}

void TrainLog::append(TrainLogRecord r) {
    if (!records.empty() && r.step <= records.back().step)
        throw std::logic_error("TrainLog: step index must be monotone");
    records.push_back(r);
}

void TrainLog::to_csv(const std::string& path) const {
    std::vector<std::vector<double>> rows;
    rows.reserve(records.size());
    for (const auto& r : records)
        rows.push_back({double(r.step), r.rnce_loss, r.sampler_loss, r.q_pos_mean,
                        r.posterior_entropy, r.sigma_pert});
    write_csv(path, {"step", "rnce_loss", "sampler_loss", "q_pos_mean", "posterior_entropy",
                     "sigma_pert"},
              rows);
}

Tensor perturb_batch(const Tensor& events, double sigma_pert, Rng& rng) {
    if (sigma_pert < 0.0) throw std::invalid_argument("perturb_batch: sigma_pert < 0");
    Tensor out = events;
    if (sigma_pert == 0.0) return out;
    for (double& v : out.data) v += rng.normal(0.0, sigma_pert);
    return out;
}

Tensor embed_contexts(const std::string& task, const Dataset& data,
                      const std::vector<std::size_t>& idx) {
    std::size_t cx = task_context_dim(task);
    Tensor X({idx.size(), std::max<std::size_t>(cx, 1)});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        auto emb = task_context_embedding(task, data.context[idx[r]]);
        for (std::size_t j = 0; j < cx; ++j) X(r, j) = emb[j];
    }
    if (cx == 0) X = Tensor({idx.size(), 0});
    return X;
}

namespace {

std::vector<std::size_t> draw_indices(Rng& rng, std::size_t n, std::size_t count) {
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = rng.uniform_index(n);
    return idx;
}

Tensor gather_events(const Dataset& data, const std::vector<std::size_t>& idx) {
    Tensor Y({idx.size(), data.events.shape[1]});
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < data.events.shape[1]; ++j)
            Y(r, j) = data.events(idx[r], j);
    return Y;
}

Tensor repeat_rows(const Tensor& x, std::size_t times) {
    Tensor out({x.shape[0] * times, x.shape[1]});
    for (std::size_t i = 0; i < x.shape[0]; ++i)
        for (std::size_t rep = 0; rep < times; ++rep)
            for (std::size_t j = 0; j < x.shape[1]; ++j)
                out(i * times + rep, j) = x(i, j);
    return out;
}

// diagnostics from the stacked (n, K+1) score matrix
struct PosteriorDiag {
    double q_pos_mean = 0.0;
    double entropy = 0.0;
};

PosteriorDiag posterior_diagnostics(const Tensor& scores) {
    PosteriorDiag d;
    std::size_t n = scores.shape[0], kp1 = scores.shape[1];
    for (std::size_t i = 0; i < n; ++i) {
        double m = scores(i, 0);
        for (std::size_t j = 1; j < kp1; ++j) m = std::max(m, scores(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < kp1; ++j) z += std::exp(scores(i, j) - m);
        double h = 0.0;
        for (std::size_t j = 0; j < kp1; ++j) {
            double q = std::exp(scores(i, j) - m) / z;
            if (q > 0) h -= q * std::log(q);
        }
        d.q_pos_mean += std::exp(scores(i, 0) - m) / z;
        d.entropy += h;
    }
    d.q_pos_mean /= double(n);
    d.entropy /= double(n);
    return d;
}

double grad_norm(const ParameterVector& g) {
    double s = 0.0;
    for (const auto& e : g.entries())
        for (double v : e.value.data) s += v * v;
    return std::sqrt(s);
}

struct CollapseDetector {
    int consecutive = 0;

    bool update(double q_pos_mean, double gnorm) {
        if (q_pos_mean > 0.99 && gnorm < 1e-6) ++consecutive;
        else consecutive = 0;
        return consecutive >= 100;
    }
};

// scores matrix alongside the loss so diagnostics come from the same pass
struct RnceStepOutput {
    double loss = 0.0;
    PosteriorDiag diag;
    ParameterVector grads;
};

RnceStepOutput rnce_tape_step(const EnergyModel& energy, const ParameterVector& theta,
                              const std::vector<NegativeBatch>& items, bool use_logps) {
    ad::Tape tape;
    BoundParams bound = bind(tape, theta);
    ContrastiveBuild built = contrastive_loss_build_ex(tape, energy, bound, items, use_logps);
    RnceStepOutput out;
    out.loss = tape.value(built.loss).data[0];
    out.diag = posterior_diagnostics(tape.value(built.scores));
    out.grads = gradient(tape, built.loss, bound);
    return out;
}

}  // namespace

namespace {

// shared structure of the rnce/irnce loops; irnce differs only in how the
// per-step contrastive items are produced
struct JointLoopHooks {
    std::function<double(std::int64_t step, Rng& rng, ParameterVector& xi, Adam& opt_xi)>
        sampler_step;
    std::function<RnceStepOutput(std::int64_t step, Rng& rng, const ParameterVector& xi,
                                 const ParameterVector& theta)>
        rnce_items_and_grads;
};

TrainResult run_joint_loop(const TrainConfig& cfg, ParameterVector theta, ParameterVector xi,
                           const JointLoopHooks& hooks) {
    Adam opt_theta(cfg.lr_theta, cfg.weight_decay_theta, cfg.adam_beta1, cfg.adam_beta2,
                   cfg.adam_eps);
    Adam opt_xi(cfg.lr_xi, cfg.weight_decay_xi, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    TrainLog log;
    CollapseDetector collapse;
    Rng root(cfg.seed);
    double last_sampler_loss = 0.0;
    std::int64_t global_step = 0;

    auto do_sampler_phase = [&](std::int64_t outer, int reps) {
        for (int s = 0; s < reps; ++s) {
            Rng rng = root.split(0x5A5A5A5A + outer * 1000 + s);
            last_sampler_loss = hooks.sampler_step(outer, rng, xi, opt_xi);
        }
    };
    auto do_rnce_phase = [&](std::int64_t outer, int reps) {
        for (int s = 0; s < reps; ++s) {
            Rng rng = root.split(0x0E0E0E0E + outer * 1000 + s);
            RnceStepOutput out = hooks.rnce_items_and_grads(outer, rng, xi, theta);
            double gnorm = grad_norm(out.grads);
            opt_theta.step(theta, out.grads);
            ++global_step;
            TrainLogRecord rec;
            rec.step = global_step;
            rec.rnce_loss = out.loss;
            rec.sampler_loss = last_sampler_loss;
            rec.q_pos_mean = out.diag.q_pos_mean;
            rec.posterior_entropy = out.diag.entropy;
            rec.sigma_pert = cfg.sigma_pert.at(global_step - 1, cfg.t_outer * cfg.t_rnce);
            log.append(rec);
            if (!log.collapse_flag && collapse.update(out.diag.q_pos_mean, gnorm)) {
                log.collapse_flag = true;
                log.collapse_step = global_step;
            }
        }
    };

    if (cfg.pretrained_sampler) {
        for (std::int64_t outer = 0; outer < cfg.t_outer; ++outer)
            do_sampler_phase(outer, cfg.t_samp);
        log.phase_boundary_step = global_step;
        for (std::int64_t outer = 0; outer < cfg.t_outer; ++outer)
            do_rnce_phase(outer, cfg.t_rnce);
    } else {
        for (std::int64_t outer = 0; outer < cfg.t_outer; ++outer) {
            do_sampler_phase(outer, cfg.t_samp);
            do_rnce_phase(outer, cfg.t_rnce);
        }
    }

    TrainResult res;
    res.theta = std::move(theta);
    res.xi = std::move(xi);
    res.log = std::move(log);
    return res;
}

double sampler_interpolant_step(const TrainConfig& cfg, const Dataset& data,
                                const std::string& task, const VelocityField& vf, Rng& rng,
                                ParameterVector& xi, Adam& opt_xi, std::int64_t step_for_pert) {
    auto idx = draw_indices(rng, data.size(), std::size_t(cfg.batch_size));
    Tensor X = embed_contexts(task, data, idx);
    Tensor Y = gather_events(data, idx);
    double sp = cfg.sigma_pert.at(step_for_pert, cfg.t_outer * std::max(cfg.t_samp, 1));
    Rng pert_rng = rng.split(17);
    Y = perturb_batch(Y, sp, pert_rng);
    // variance reduction: m (z, t) draws per datum
    std::size_t mm = std::size_t(std::max(cfg.m, 1));
    Tensor Xm = repeat_rows(X, mm);
    Tensor Ym = repeat_rows(Y, mm);
    Tensor Z({Ym.shape[0], Ym.shape[1]});
    for (double& v : Z.data) v = rng.normal();
    TimeDistribution lambda{cfg.alpha};
    std::vector<double> ts(Ym.shape[0]);
    for (double& t : ts) t = lambda.sample(rng);

    ad::Tape tape;
    BoundParams bound = bind(tape, xi);
    ad::Var loss = interpolant_loss_build(tape, vf, bound, Xm, Ym, Z, ts);
    double val = tape.value(loss).data[0];
    ParameterVector g = gradient(tape, loss, bound);
    opt_xi.step(xi, g);
    return val;
}

}  // namespace

TrainResult train_rnce(const TrainConfig& cfg, const Dataset& data, const std::string& task,
                       const EnergyModel& energy, ParameterVector theta,
                       const VelocityField& vf, ParameterVector xi) {
    if (data.size() == 0) throw std::invalid_argument("train_rnce: empty dataset");
    const std::size_t d = data.events.shape[1];
    const std::size_t K = std::size_t(cfg.k);

    JointLoopHooks hooks;
    hooks.sampler_step = [&](std::int64_t outer, Rng& rng, ParameterVector& xi_ref,
                             Adam& opt_xi) {
        return sampler_interpolant_step(cfg, data, task, vf, rng, xi_ref, opt_xi, outer);
    };
    hooks.rnce_items_and_grads = [&](std::int64_t outer, Rng& rng, const ParameterVector& xi_ref,
                                     const ParameterVector& theta_ref) {
        (void)outer;
        auto idx = draw_indices(rng, data.size(), std::size_t(cfg.batch_size));
        Tensor X = embed_contexts(task, data, idx);
        Tensor Y = gather_events(data, idx);
        double sigma_now = cfg.sigma_pert.at(outer * cfg.t_rnce, cfg.t_outer * cfg.t_rnce);
        Rng pert_rng = rng.split(23);
        Y = perturb_batch(Y, sigma_now, pert_rng);

        FlowModel flow(vf, xi_ref);
        flow.fine_steps = cfg.flow_fine_steps;
        flow.lp_steps = cfg.flow_lp_steps;
        StepSchedule sched = flow.default_schedule(1.0);

        // fresh negatives: K per item in one batched integration
        Tensor Xrep = repeat_rows(X, K);
        Rng zrng = rng.split(29);
        Tensor Z({idx.size() * K, d});
        for (double& v : Z.data) v = zrng.normal();
        auto negs = flow.sample_with_logprob(Xrep, Z, sched);
        // positive log-densities under the current flow (backward solve)
        auto pos_lps = flow.logprob_at(X, Y, 1.0, sched);

        std::vector<NegativeBatch> items(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            NegativeBatch& nb = items[i];
            nb.t = 1.0;
            nb.x_emb.assign(X.data.begin() + i * X.shape[1],
                            X.data.begin() + (i + 1) * X.shape[1]);
            nb.y_pos.assign(Y.data.begin() + i * d, Y.data.begin() + (i + 1) * d);
            nb.pos_logp = pos_lps[i];
            nb.negs = Tensor({K, d});
            nb.neg_logps.resize(K);
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t j = 0; j < d; ++j) nb.negs(k, j) = negs.y(i * K + k, j);
                nb.neg_logps[k] = negs.logp[i * K + k];
            }
        }
        return rnce_tape_step(energy, theta_ref, items, true);
    };

    return run_joint_loop(cfg, std::move(theta), std::move(xi), hooks);
}

TrainResult train_irnce(const TrainConfig& cfg, const Dataset& data, const std::string& task,
                        const EnergyModel& energy, ParameterVector theta,
                        const VelocityField& vf, ParameterVector xi) {
    if (data.size() == 0) throw std::invalid_argument("train_irnce: empty dataset");
    if (!energy.time_indexed())
        throw std::invalid_argument("train_irnce: energy model must be time-indexed");
    const std::size_t d = data.events.shape[1];
    const std::size_t K = std::size_t(cfg.k);
    const std::size_t mm = std::size_t(std::max(cfg.m, 1));

    JointLoopHooks hooks;
    hooks.sampler_step = [&](std::int64_t outer, Rng& rng, ParameterVector& xi_ref,
                             Adam& opt_xi) {
        return sampler_interpolant_step(cfg, data, task, vf, rng, xi_ref, opt_xi, outer);
    };
    hooks.rnce_items_and_grads = [&](std::int64_t outer, Rng& rng, const ParameterVector& xi_ref,
                                     const ParameterVector& theta_ref) {
        auto idx = draw_indices(rng, data.size(), std::size_t(cfg.batch_size));
        Tensor X = embed_contexts(task, data, idx);
        Tensor Y = gather_events(data, idx);
        double sigma_now = cfg.sigma_pert.at(outer * cfg.t_rnce, cfg.t_outer * cfg.t_rnce);
        Rng pert_rng = rng.split(23);
        Y = perturb_batch(Y, sigma_now, pert_rng);

        FlowModel flow(vf, xi_ref);
        flow.fine_steps = cfg.flow_fine_steps;
        flow.lp_steps = cfg.flow_lp_steps;
        StepSchedule sched = flow.default_schedule(1.0);

        // m interpolation times shared across the batch, snapped onto the
        // divergence grid so truncated log-densities are exact partial sums
        TimeDistribution lambda{cfg.rnce_alpha()};
        std::vector<double> times(mm);
        for (std::size_t j = 0; j < mm; ++j) {
            double t = lambda.sample(rng);
            auto it = std::lower_bound(sched.lp_ts.begin() + 1, sched.lp_ts.end(), t);
            if (it == sched.lp_ts.end()) --it;
            // nearest of the two neighbors, never t=0
            if (it != sched.lp_ts.begin() + 1 && t - *(it - 1) < *it - t &&
                *(it - 1) > 0.0)
                --it;
            times[j] = *it;
        }
        std::sort(times.begin(), times.end());

        // K shared trajectories per item, snapshotted at the m times
        Tensor Xrep = repeat_rows(X, K);
        Rng zrng = rng.split(29);
        Tensor Z({idx.size() * K, d});
        for (double& v : Z.data) v = zrng.normal();
        FlowIntegrationResult traj =
            integrate_two_timescale(flow.field(Xrep), Z, sched, times);

        std::vector<TimeIndexedItem> items(idx.size());
        Rng irng = rng.split(31);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            TimeIndexedItem& item = items[i];
            item.x_emb.assign(X.data.begin() + i * X.shape[1],
                              X.data.begin() + (i + 1) * X.shape[1]);
            for (std::size_t j = 0; j < mm; ++j) {
                NegativeBatch nb;
                nb.t = times[j];
                // positive: bridge draw at the sampled time
                std::vector<double> yvec(d), zvec(d);
                for (std::size_t c = 0; c < d; ++c) {
                    yvec[c] = Y(i, c);
                    zvec[c] = irng.normal();
                }
                nb.y_pos = interpolant::eval(zvec, yvec, times[j]);
                nb.negs = Tensor({K, d});
                nb.neg_logps.resize(K);
                for (std::size_t k = 0; k < K; ++k) {
                    for (std::size_t c = 0; c < d; ++c)
                        nb.negs(k, c) = traj.snapshots[j](i * K + k, c);
                    std::vector<double> z0(d);
                    for (std::size_t c = 0; c < d; ++c) z0[c] = Z(i * K + k, c);
                    nb.neg_logps[k] =
                        log_normal_density(z0) - traj.snapshot_div_integrals[j][i * K + k];
                }
                item.per_time.push_back(std::move(nb));
            }
        }
        // positive log-densities: backward solves grouped per time
        for (std::size_t j = 0; j < mm; ++j) {
            Tensor Ypos({idx.size(), d});
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t c = 0; c < d; ++c) Ypos(i, c) = items[i].per_time[j].y_pos[c];
            auto lps = flow.logprob_at(X, Ypos, times[j], sched);
            for (std::size_t i = 0; i < idx.size(); ++i) items[i].per_time[j].pos_logp = lps[i];
        }

        ad::Tape tape;
        BoundParams bound = bind(tape, theta_ref);
        ContrastiveBuild built = irnce_loss_build_ex(tape, energy, bound, items);
        RnceStepOutput out;
        out.loss = tape.value(built.loss).data[0];
        out.diag = posterior_diagnostics(tape.value(built.scores));
        out.grads = gradient(tape, built.loss, bound);
        return out;
    };

    return run_joint_loop(cfg, std::move(theta), std::move(xi), hooks);
}

TrainResult train_ibc(const TrainConfig& cfg, const Dataset& data, const std::string& task,
                      const EnergyModel& energy, ParameterVector theta, double box_halfwidth) {
    if (data.size() == 0) throw std::invalid_argument("train_ibc: empty dataset");
    const std::size_t d = data.events.shape[1];
    const std::size_t K = std::size_t(cfg.k);

    JointLoopHooks hooks;
    hooks.sampler_step = [](std::int64_t, Rng&, ParameterVector&, Adam&) { return 0.0; };
    hooks.rnce_items_and_grads = [&](std::int64_t outer, Rng& rng, const ParameterVector&,
                                     const ParameterVector& theta_ref) {
        auto idx = draw_indices(rng, data.size(), std::size_t(cfg.batch_size));
        Tensor X = embed_contexts(task, data, idx);
        Tensor Y = gather_events(data, idx);
        double sigma_now = cfg.sigma_pert.at(outer * cfg.t_rnce, cfg.t_outer * cfg.t_rnce);
        Rng pert_rng = rng.split(23);
        Y = perturb_batch(Y, sigma_now, pert_rng);

        std::vector<NegativeBatch> items(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            NegativeBatch& nb = items[i];
            nb.t = 1.0;
            nb.x_emb.assign(X.data.begin() + i * X.shape[1],
                            X.data.begin() + (i + 1) * X.shape[1]);
            nb.y_pos.assign(Y.data.begin() + i * d, Y.data.begin() + (i + 1) * d);
            nb.pos_logp = 0.0;
            nb.negs = Tensor({K, d});
            nb.neg_logps.assign(K, 0.0);
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t j = 0; j < d; ++j)
                    nb.negs(k, j) = rng.uniform(-box_halfwidth, box_halfwidth);
        }
        return rnce_tape_step(energy, theta_ref, items, false);
    };

    TrainConfig ibc_cfg = cfg;
    ibc_cfg.t_samp = 0;
    return run_joint_loop(ibc_cfg, std::move(theta), ParameterVector{}, hooks);
}

TrainResult train_nf(const TrainConfig& cfg, const Dataset& data, const std::string& task,
                     const VelocityField& vf, ParameterVector xi) {
    if (data.size() == 0) throw std::invalid_argument("train_nf: empty dataset");
    Adam opt_xi(cfg.lr_xi, cfg.weight_decay_xi, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    TrainLog log;
    Rng root(cfg.seed);
    std::int64_t total = cfg.t_outer * std::max(cfg.t_samp, 1);
    std::int64_t step = 0;
    for (std::int64_t outer = 0; outer < cfg.t_outer; ++outer) {
        for (int s = 0; s < std::max(cfg.t_samp, 1); ++s) {
            Rng rng = root.split(0x5A5A5A5A + outer * 1000 + s);
            double val = 0.0;
            {
                auto idx = draw_indices(rng, data.size(), std::size_t(cfg.batch_size));
                Tensor X = embed_contexts(task, data, idx);
                Tensor Y = gather_events(data, idx);
                double sp = cfg.sigma_pert.at(step, total);
                Rng pert_rng = rng.split(17);
                Y = perturb_batch(Y, sp, pert_rng);
                Tensor Z({Y.shape[0], Y.shape[1]});
                for (double& v : Z.data) v = rng.normal();
                TimeDistribution lambda{cfg.alpha};
                std::vector<double> ts(Y.shape[0]);
                for (double& t : ts) t = lambda.sample(rng);
                ad::Tape tape;
                BoundParams bound = bind(tape, xi);
                ad::Var loss = interpolant_loss_build(tape, vf, bound, X, Y, Z, ts);
                val = tape.value(loss).data[0];
                ParameterVector g = gradient(tape, loss, bound);
                opt_xi.step(xi, g);
            }
            ++step;
            TrainLogRecord rec;
            rec.step = step;
            rec.sampler_loss = val;
            rec.sigma_pert = cfg.sigma_pert.at(step - 1, total);
            log.append(rec);
        }
    }
    TrainResult res;
    res.xi = std::move(xi);
    res.log = std::move(log);
    return res;
}

TrainResult train_edm(const TrainConfig& cfg, const Dataset& data, const std::string& task,
                      const Denoiser& den, ParameterVector params) {
    if (data.size() == 0) throw std::invalid_argument("train_edm: empty dataset");
    Adam opt(cfg.lr_theta, cfg.weight_decay_theta, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    TrainLog log;
    Rng root(cfg.seed);
    std::int64_t total = cfg.t_outer * std::max(cfg.t_rnce, 1);
    std::int64_t step = 0;
    for (std::int64_t outer = 0; outer < cfg.t_outer; ++outer) {
        for (int s = 0; s < std::max(cfg.t_rnce, 1); ++s) {
            Rng rng = root.split(0xED0ED0 + outer * 1000 + s);
            auto idx = draw_indices(rng, data.size(), std::size_t(cfg.batch_size));
            Tensor X = embed_contexts(task, data, idx);
            Tensor Y = gather_events(data, idx);
            double sp = cfg.sigma_pert.at(step, total);
            Rng pert_rng = rng.split(17);
            Y = perturb_batch(Y, sp, pert_rng);
            Tensor noise({Y.shape[0], Y.shape[1]});
            for (double& v : noise.data) v = rng.normal();
            std::vector<double> sigmas(Y.shape[0]);
            for (double& v : sigmas) v = den.config().draw_sigma(rng);

            ad::Tape tape;
            BoundParams bound = bind(tape, params);
            ad::Var loss = edm_train_loss_build(tape, den, bound, X, Y, noise, sigmas);
            double val = tape.value(loss).data[0];
            ParameterVector g = gradient(tape, loss, bound);
            opt.step(params, g);
            ++step;
            TrainLogRecord rec;
            rec.step = step;
            rec.rnce_loss = val;  // reused column: per-step training loss
            rec.sigma_pert = sp;
            log.append(rec);
        }
    }
    TrainResult res;
    res.theta = std::move(params);
    res.log = std::move(log);
    return res;
}

}  // namespace cebm
