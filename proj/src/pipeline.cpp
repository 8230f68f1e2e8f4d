#include "cebm/pipeline.hpp"

#include <filesystem>
#include <stdexcept>

#include "json.hpp"

#include "cebm/io.hpp"

namespace cebm {

using nlohmann::json;

Experiment make_experiment(ExperimentConfig cfg) {
    cfg.resolve_defaults();
    Experiment exp;
    exp.cfg = cfg;
    std::size_t cx = task_context_dim(cfg.task);
    std::size_t d = cfg.task == "gaussian1d" ? 1 : 2;

    if (exp.has_energy()) {
        exp.energy = EnergyModel(cfg.energy_arch, cx, d);
        exp.theta = exp.energy.init_params(splitmix64(cfg.seed ^ 0x7e7a));
    }
    if (exp.has_flow() || cfg.method == "ibc") {
        exp.vf = VelocityField(cfg.vf_arch, cx, d);
        exp.xi = exp.vf.init_params(splitmix64(cfg.seed ^ 0x51));
    }
    if (exp.is_edm()) {
        exp.denoiser = cfg.method == "edm"
                           ? Denoiser::direct(cfg.vf_arch, cx, d, cfg.edm)
                           : Denoiser::energy(cfg.energy_arch, cx, d, cfg.edm);
        exp.theta = exp.denoiser.init_params(splitmix64(cfg.seed ^ 0xED));
    }
    return exp;
}

Dataset make_task_dataset(const ExperimentConfig& cfg) {
    std::uint64_t ds_seed = splitmix64(cfg.seed ^ 0xDA7A);
    if (cfg.task == "pinwheel") return make_pinwheel_dataset(cfg.dataset_size, ds_seed);
    if (cfg.task == "spiral") return make_spiral_dataset(cfg.dataset_size, ds_seed);
    if (cfg.task == "gaussian1d")
        return make_gaussian1d_dataset({1.0, 1.0}, cfg.dataset_size, ds_seed);
    throw std::invalid_argument("unknown task " + cfg.task);
}

void save_experiment(const Experiment& exp, const std::string& path) {
    Checkpoint ckpt;
    json meta;
    ExperimentConfig embedded = exp.cfg;
    embedded.out_dir = ".";  // byte-identical checkpoints regardless of output location
    meta["config"] = json::parse(embedded.to_json());
    ckpt.metadata_json = meta.dump();
    if (exp.theta.size()) ckpt.groups["theta"] = exp.theta;
    if (exp.xi.size()) ckpt.groups["xi"] = exp.xi;
    save_checkpoint(path, ckpt);
}

Experiment load_experiment(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    json meta = json::parse(ckpt.metadata_json);
    if (!meta.contains("config"))
        throw std::invalid_argument("checkpoint missing embedded config: " + path);
    ExperimentConfig cfg = ExperimentConfig::from_json(meta["config"].dump());
    Experiment exp = make_experiment(cfg);
    if (ckpt.groups.count("theta")) exp.theta = ckpt.groups["theta"];
    if (ckpt.groups.count("xi")) exp.xi = ckpt.groups["xi"];
    return exp;
}

Experiment run_training(ExperimentConfig cfg) {
    cfg.resolve_defaults();
    Experiment exp = make_experiment(cfg);
    Dataset data = make_task_dataset(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    write_text_file(cfg.out_dir + "/resolved_config.json", cfg.to_json());

    TrainConfig tc = cfg.train;
    tc.seed = splitmix64(cfg.seed ^ 0x7121);

    // keep an initial checkpoint so a numerical abort still leaves one behind
    save_experiment(exp, cfg.out_dir + "/checkpoint.ckpt");

    TrainResult res;
    if (cfg.method == "rnce") {
        res = train_rnce(tc, data, cfg.task, exp.energy, exp.theta, exp.vf, exp.xi);
        exp.theta = res.theta;
        exp.xi = res.xi;
    } else if (cfg.method == "irnce") {
        res = train_irnce(tc, data, cfg.task, exp.energy, exp.theta, exp.vf, exp.xi);
        exp.theta = res.theta;
        exp.xi = res.xi;
    } else if (cfg.method == "ibc") {
        res = train_ibc(tc, data, cfg.task, exp.energy, exp.theta, cfg.eval.ibc_box_halfwidth);
        exp.theta = res.theta;
    } else if (cfg.method == "nf") {
        res = train_nf(tc, data, cfg.task, exp.vf, exp.xi);
        exp.xi = res.xi;
    } else if (cfg.method == "edm" || cfg.method == "edm_phi") {
        res = train_edm(tc, data, cfg.task, exp.denoiser, exp.theta);
        exp.theta = res.theta;
    } else {
        throw std::invalid_argument("unknown method " + cfg.method);
    }

    res.log.to_csv(cfg.out_dir + "/train_log.csv");
    save_experiment(exp, cfg.out_dir + "/checkpoint.ckpt");
    return exp;
}

Tensor truth_samples(const std::string& task, const std::vector<double>& context_raw,
                     std::size_t n, std::uint64_t seed) {
    if (task == "pinwheel") {
        PinwheelSpec spec;
        spec.spokes = int(std::llround(context_raw.at(0)));
        spec.n = n;
        spec.seed = seed;
        return sample_pinwheel(spec);
    }
    if (task == "spiral") {
        SpiralSpec spec;
        spec.length = context_raw.at(0);
        spec.n = n;
        spec.seed = seed;
        return sample_spiral(spec);
    }
    if (task == "gaussian1d") {
        auto ys = sample_gaussian_cond({1.0, 1.0}, n, seed);
        Tensor out({n, 1});
        for (std::size_t i = 0; i < n; ++i) out(i, 0) = ys[i];
        return out;
    }
    throw std::invalid_argument("unknown task " + task);
}

namespace {

Tensor repeat_context(const std::vector<double>& emb, std::size_t n) {
    Tensor X({n, emb.size()});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < emb.size(); ++j) X(i, j) = emb[j];
    return X;
}

// scores used for best-of ranking and the CSV score column
std::vector<double> relative_scores(const Experiment& exp, const Tensor& x_emb,
                                    const Tensor& samples) {
    if (exp.cfg.method == "edm_phi")
        return exp.denoiser.relative_likelihood(exp.theta, x_emb, samples);
    if (exp.has_energy()) {
        Tensor x = x_emb;
        return exp.energy.energy_batch(exp.theta, x, samples, 1.0);
    }
    throw std::invalid_argument("method has no pointwise relative-likelihood score");
}

}  // namespace

SampleResult draw_samples(const Experiment& exp, const SampleRequest& req) {
    const auto& cfg = exp.cfg;
    std::vector<double> emb = task_context_embedding(cfg.task, req.context_raw);
    std::size_t d = cfg.task == "gaussian1d" ? 1 : 2;
    std::size_t want = req.n * std::size_t(std::max(req.best_of, 1));

    const std::string& s = req.sampler;
    bool mismatch =
        (s == "pflow" && !exp.is_edm()) || (s == "three_stage" && cfg.method != "irnce") ||
        ((s == "flow") && (exp.is_edm() || cfg.method == "ibc")) ||
        ((s == "two_stage") && !(cfg.method == "rnce" || cfg.method == "irnce" ||
                                 cfg.method == "ibc" || cfg.method == "nf"));
    if (mismatch)
        throw std::invalid_argument("sampler '" + s + "' does not match method " + cfg.method);

    SampleResult out;
    out.samples = Tensor({want, d});
    std::vector<double> logp_scores;

    if (want > 0) {
        Tensor x_emb = repeat_context(emb, want);
        if (exp.is_edm()) {
            DenoiseFn den = [&](const Tensor& y, double sigma) {
                return exp.denoiser.denoise_batch(exp.theta, x_emb, y, sigma);
            };
            bool need_logp = req.best_of > 1 || req.want_scores;
            if (cfg.method == "edm" && need_logp) {
                DivergenceFn div = [&](const Tensor& y, double sigma) {
                    return exp.denoiser.pflow_divergence(exp.theta, x_emb, y, sigma);
                };
                PflowLogp res = pflow_sample_logprob_batch(den, div, cfg.edm, want, d, req.seed);
                out.samples = std::move(res.y);
                logp_scores = std::move(res.logp);
            } else {
                out.samples = pflow_sample_batch(den, cfg.edm, want, d, req.seed);
            }
        } else {
            FlowModel flow(exp.vf, exp.xi);
            flow.fine_steps = cfg.sampler.flow_fine_steps;
            flow.lp_steps = cfg.sampler.flow_lp_steps;
            EnergyRef eref{&exp.energy, &exp.theta};

            if (s == "flow" || cfg.method == "nf") {
                bool need_logp = req.best_of > 1 || req.want_scores;
                if (cfg.method == "nf" && need_logp) {
                    Rng rng(req.seed);
                    Tensor z = flow.draw_base(want, rng);
                    StepSchedule sched = flow.default_schedule(1.0);
                    auto res = flow.sample_with_logprob(x_emb, z, sched);
                    out.samples = std::move(res.y);
                    logp_scores = std::move(res.logp);
                } else {
                    Rng rng(req.seed);
                    Tensor z = flow.draw_base(want, rng);
                    StepSchedule sched = flow.default_schedule(1.0);
                    out.samples = flow.sample_batch(x_emb, z, sched);
                }
            } else if (s == "two_stage") {
                if (cfg.method == "ibc") {
                    // uniform box warm start, then Langevin (no learned flow)
                    Rng rng(req.seed);
                    Tensor y0({want, d});
                    for (double& v : y0.data)
                        v = rng.uniform(-cfg.eval.ibc_box_halfwidth, cfg.eval.ibc_box_halfwidth);
                    McmcConfig mc;
                    mc.kind = cfg.sampler.mcmc;
                    mc.t_mcmc = cfg.sampler.t_mcmc;
                    mc.eta = cfg.sampler.eta;
                    mc.leapfrog_steps = cfg.sampler.leapfrog_steps;
                    mc.seed = splitmix64(req.seed ^ 0x1BC);
                    out.samples = mc.kind == "hmc"
                                      ? hmc_chain_batch(eref, x_emb, std::move(y0), mc).y
                                      : langevin_chain_batch(eref, x_emb, std::move(y0), mc);
                } else {
                    McmcConfig mc;
                    mc.kind = cfg.sampler.mcmc;
                    mc.t_mcmc = cfg.sampler.t_mcmc;
                    mc.eta = cfg.sampler.eta;
                    mc.leapfrog_steps = cfg.sampler.leapfrog_steps;
                    mc.seed = req.seed;
                    out.samples = two_stage_sample_batch(flow, eref, x_emb, want, mc);
                }
            } else if (s == "three_stage") {
                IEbmSampleConfig ic;
                ic.t_lower = cfg.sampler.t_lower;
                ic.total_grad_evals = cfg.sampler.total_grad_evals;
                ic.eta_sde = cfg.sampler.eta_sde;
                ic.eta_mcmc = cfg.sampler.eta;
                ic.leapfrog_steps = cfg.sampler.leapfrog_steps;
                ic.seed = req.seed;
                out.samples = three_stage_sample_batch(flow, eref, x_emb, want, ic);
            } else {
                throw std::invalid_argument("unknown sampler " + s);
            }
        }
    }

    // score column + best-of reduction
    bool can_score = exp.cfg.method == "edm_phi" || exp.has_energy() ||
                     (!logp_scores.empty());
    if (can_score && want > 0) {
        Tensor x_emb = repeat_context(emb, want);
        std::vector<double> scores =
            !logp_scores.empty() ? logp_scores : relative_scores(exp, x_emb, out.samples);
        if (req.best_of > 1) {
            Tensor kept({req.n, d});
            std::vector<double> kept_scores(req.n);
            for (std::size_t i = 0; i < req.n; ++i) {
                std::vector<double> group(scores.begin() + i * req.best_of,
                                          scores.begin() + (i + 1) * req.best_of);
                std::size_t b = select_best_of(group);
                for (std::size_t j = 0; j < d; ++j)
                    kept(i, j) = out.samples(i * req.best_of + b, j);
                kept_scores[i] = group[b];
            }
            out.samples = std::move(kept);
            out.scores = std::move(kept_scores);
        } else {
            out.scores = std::move(scores);
        }
        out.has_scores = true;
    } else if (req.best_of > 1) {
        throw std::invalid_argument("best-of ranking needs a relative-likelihood score");
    }
    return out;
}

BcReport eval_bc_against_truth(const Experiment& exp, const std::string& sampler,
                               std::size_t n_samples, const GridSpec& grid,
                               std::uint64_t seed) {
    BcReport rep;
    rep.grid = grid;
    rep.n_samples = n_samples;
    rep.contexts = task_eval_contexts(exp.cfg.task);
    rep.min_bc = 1.0;
    for (std::size_t c = 0; c < rep.contexts.size(); ++c) {
        SampleRequest req;
        req.sampler = sampler;
        req.n = n_samples;
        req.seed = splitmix64(seed ^ (0xC0 + c));
        req.context_raw = rep.contexts[c];
        SampleResult model = draw_samples(exp, req);
        Tensor truth = truth_samples(exp.cfg.task, rep.contexts[c], n_samples,
                                     splitmix64(seed ^ (0x7174 + c)));
        BcResult bc = bhattacharyya(truth, model.samples, grid);
        rep.bc.push_back(bc.bc);
        rep.min_bc = std::min(rep.min_bc, bc.bc);
    }
    return rep;
}

}  // namespace cebm
