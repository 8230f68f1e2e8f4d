#include "cebm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "cebm/datasets.hpp"
#include "cebm/io.hpp"

namespace cebm {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
}

json arch_to_json(const ArchDescriptor& a) {
    return json{{"kind", a.kind},
                {"widths", a.widths},
                {"time_embed_dim", a.time_embed_dim},
                {"residual", a.residual}};
}

ArchDescriptor arch_from_json(const json& j, const std::string& where) {
    reject_unknown(j, {"kind", "widths", "time_embed_dim", "residual"}, where);
    ArchDescriptor a;
    a.kind = j.value("kind", a.kind);
    a.widths = j.value("widths", a.widths);
    a.time_embed_dim = j.value("time_embed_dim", a.time_embed_dim);
    a.residual = j.value("residual", a.residual);
    return a;
}

json lr_to_json(const LrSchedule& s) {
    return json{{"kind", s.kind},
                {"base_lr", s.base_lr},
                {"warmup_steps", s.warmup_steps},
                {"total_steps", s.total_steps},
                {"final_lr", s.final_lr}};
}

LrSchedule lr_from_json(const json& j, const std::string& where) {
    reject_unknown(j, {"kind", "base_lr", "warmup_steps", "total_steps", "final_lr"}, where);
    LrSchedule s;
    s.kind = j.value("kind", s.kind);
    s.base_lr = j.value("base_lr", s.base_lr);
    s.warmup_steps = j.value("warmup_steps", s.warmup_steps);
    s.total_steps = j.value("total_steps", s.total_steps);
    s.final_lr = j.value("final_lr", s.final_lr);
    return s;
}

}  // namespace

void ExperimentConfig::resolve_defaults() {
    bool time_indexed = method == "irnce" || method == "edm_phi";
    if (energy_arch.widths.empty() && energy_arch.kind == "mlp_energy") {
        energy_arch.widths = std::vector<int>(8, 40);
        energy_arch.time_embed_dim = time_indexed ? 10 : 0;
        energy_arch.residual = true;
    }
    if (task == "gaussian1d" && energy_arch.kind == "mlp_energy" &&
        (method == "rnce" || method == "ibc")) {
        energy_arch = GaussianMeanFamily::descriptor();
    }
    if (vf_arch.widths.empty()) {
        if (method == "rnce" || method == "irnce" || method == "ibc") {
            vf_arch.kind = "concatsquash_vf";
            vf_arch.widths = {32};
            vf_arch.time_embed_dim = 0;
            vf_arch.residual = false;
        } else {
            vf_arch.kind = "mlp_vf";
            vf_arch.widths = std::vector<int>(8, 48);
            vf_arch.time_embed_dim = 10;
            vf_arch.residual = true;
        }
    }
    if (method == "edm_phi" && energy_arch.time_embed_dim == 0) energy_arch.time_embed_dim = 10;
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["task"] = task;
    j["method"] = method;
    j["seed"] = seed;
    j["dataset_size"] = dataset_size;
    j["threads"] = threads;
    j["out_dir"] = out_dir;
    j["energy_arch"] = arch_to_json(energy_arch);
    j["vf_arch"] = arch_to_json(vf_arch);
    j["train"] = json{{"t_outer", train.t_outer},
                      {"t_samp", train.t_samp},
                      {"t_rnce", train.t_rnce},
                      {"k", train.k},
                      {"m", train.m},
                      {"batch_size", train.batch_size},
                      {"lr_theta", lr_to_json(train.lr_theta)},
                      {"lr_xi", lr_to_json(train.lr_xi)},
                      {"weight_decay_theta", train.weight_decay_theta},
                      {"weight_decay_xi", train.weight_decay_xi},
                      {"adam_beta1", train.adam_beta1},
                      {"adam_beta2", train.adam_beta2},
                      {"adam_eps", train.adam_eps},
                      {"alpha", train.alpha},
                      {"alpha_rnce", train.alpha_rnce},
                      {"sigma_pert",
                       json{{"start", train.sigma_pert.start},
                            {"end", train.sigma_pert.end},
                            {"anneal_frac", train.sigma_pert.anneal_frac}}},
                      {"seed", train.seed},
                      {"flow_fine_steps", train.flow_fine_steps},
                      {"flow_lp_steps", train.flow_lp_steps},
                      {"pretrained_sampler", train.pretrained_sampler},
                      {"init_scheme", train.init_scheme}};
    j["edm"] = json{{"sigma_data", edm.sigma_data}, {"sigma_min", edm.sigma_min},
                    {"sigma_max", edm.sigma_max},   {"rho", edm.rho},
                    {"sigma_rel", edm.sigma_rel},   {"n_steps", edm.n_steps},
                    {"lp_steps", edm.lp_steps},     {"p_mean", edm.p_mean},
                    {"p_std", edm.p_std}};
    j["sampler"] = json{{"kind", sampler.kind},
                        {"mcmc", sampler.mcmc},
                        {"t_mcmc", sampler.t_mcmc},
                        {"eta", sampler.eta},
                        {"leapfrog_steps", sampler.leapfrog_steps},
                        {"t_lower", sampler.t_lower},
                        {"total_grad_evals", sampler.total_grad_evals},
                        {"eta_sde", sampler.eta_sde},
                        {"flow_fine_steps", sampler.flow_fine_steps},
                        {"flow_lp_steps", sampler.flow_lp_steps}};
    j["eval"] = json{{"grid_lo", eval.grid_lo},
                     {"grid_hi", eval.grid_hi},
                     {"grid_n", eval.grid_n},
                     {"n_samples", eval.n_samples},
                     {"ibc_box_halfwidth", eval.ibc_box_halfwidth}};
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    reject_unknown(j,
                   {"task", "method", "seed", "dataset_size", "threads", "out_dir",
                    "energy_arch", "vf_arch", "train", "edm", "sampler", "eval"},
                   "root");
    ExperimentConfig c;
    c.task = j.value("task", c.task);
    c.method = j.value("method", c.method);
    c.seed = j.value("seed", c.seed);
    c.dataset_size = j.value("dataset_size", c.dataset_size);
    c.threads = j.value("threads", c.threads);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("energy_arch")) c.energy_arch = arch_from_json(j["energy_arch"], "energy_arch");
    if (j.contains("vf_arch")) c.vf_arch = arch_from_json(j["vf_arch"], "vf_arch");
    if (j.contains("train")) {
        const json& t = j["train"];
        reject_unknown(t,
                       {"t_outer", "t_samp", "t_rnce", "k", "m", "batch_size", "lr_theta",
                        "lr_xi", "weight_decay_theta", "weight_decay_xi", "adam_beta1",
                        "adam_beta2", "adam_eps", "alpha", "alpha_rnce", "sigma_pert", "seed",
                        "flow_fine_steps", "flow_lp_steps", "pretrained_sampler", "init_scheme"},
                       "train");
        c.train.t_outer = t.value("t_outer", c.train.t_outer);
        c.train.t_samp = t.value("t_samp", c.train.t_samp);
        c.train.t_rnce = t.value("t_rnce", c.train.t_rnce);
        c.train.k = t.value("k", c.train.k);
        c.train.m = t.value("m", c.train.m);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        if (t.contains("lr_theta")) c.train.lr_theta = lr_from_json(t["lr_theta"], "lr_theta");
        if (t.contains("lr_xi")) c.train.lr_xi = lr_from_json(t["lr_xi"], "lr_xi");
        c.train.weight_decay_theta = t.value("weight_decay_theta", c.train.weight_decay_theta);
        c.train.weight_decay_xi = t.value("weight_decay_xi", c.train.weight_decay_xi);
        c.train.adam_beta1 = t.value("adam_beta1", c.train.adam_beta1);
        c.train.adam_beta2 = t.value("adam_beta2", c.train.adam_beta2);
        c.train.adam_eps = t.value("adam_eps", c.train.adam_eps);
        c.train.alpha = t.value("alpha", c.train.alpha);
        c.train.alpha_rnce = t.value("alpha_rnce", c.train.alpha_rnce);
        if (t.contains("sigma_pert")) {
            const json& sp = t["sigma_pert"];
            reject_unknown(sp, {"start", "end", "anneal_frac"}, "sigma_pert");
            c.train.sigma_pert.start = sp.value("start", c.train.sigma_pert.start);
            c.train.sigma_pert.end = sp.value("end", c.train.sigma_pert.end);
            c.train.sigma_pert.anneal_frac = sp.value("anneal_frac", c.train.sigma_pert.anneal_frac);
            if (c.train.sigma_pert.start < c.train.sigma_pert.end)
                throw std::invalid_argument("config: sigma_pert start must be >= end");
        }
        c.train.seed = t.value("seed", c.train.seed);
        c.train.flow_fine_steps = t.value("flow_fine_steps", c.train.flow_fine_steps);
        c.train.flow_lp_steps = t.value("flow_lp_steps", c.train.flow_lp_steps);
        c.train.pretrained_sampler = t.value("pretrained_sampler", c.train.pretrained_sampler);
        c.train.init_scheme = t.value("init_scheme", c.train.init_scheme);
    }
    if (j.contains("edm")) {
        const json& e = j["edm"];
        reject_unknown(e,
                       {"sigma_data", "sigma_min", "sigma_max", "rho", "sigma_rel", "n_steps",
                        "lp_steps", "p_mean", "p_std"},
                       "edm");
        c.edm.sigma_data = e.value("sigma_data", c.edm.sigma_data);
        c.edm.sigma_min = e.value("sigma_min", c.edm.sigma_min);
        c.edm.sigma_max = e.value("sigma_max", c.edm.sigma_max);
        c.edm.rho = e.value("rho", c.edm.rho);
        c.edm.sigma_rel = e.value("sigma_rel", c.edm.sigma_rel);
        c.edm.n_steps = e.value("n_steps", c.edm.n_steps);
        c.edm.lp_steps = e.value("lp_steps", c.edm.lp_steps);
        c.edm.p_mean = e.value("p_mean", c.edm.p_mean);
        c.edm.p_std = e.value("p_std", c.edm.p_std);
        if (c.edm.sigma_min >= c.edm.sigma_max)
            throw std::invalid_argument("config: sigma_min must be < sigma_max");
        if (c.edm.rho < 1.0) throw std::invalid_argument("config: rho must be >= 1");
    }
    if (j.contains("sampler")) {
        const json& s = j["sampler"];
        reject_unknown(s,
                       {"kind", "mcmc", "t_mcmc", "eta", "leapfrog_steps", "t_lower",
                        "total_grad_evals", "eta_sde", "flow_fine_steps", "flow_lp_steps"},
                       "sampler");
        c.sampler.kind = s.value("kind", c.sampler.kind);
        c.sampler.mcmc = s.value("mcmc", c.sampler.mcmc);
        c.sampler.t_mcmc = s.value("t_mcmc", c.sampler.t_mcmc);
        c.sampler.eta = s.value("eta", c.sampler.eta);
        c.sampler.leapfrog_steps = s.value("leapfrog_steps", c.sampler.leapfrog_steps);
        c.sampler.t_lower = s.value("t_lower", c.sampler.t_lower);
        c.sampler.total_grad_evals = s.value("total_grad_evals", c.sampler.total_grad_evals);
        c.sampler.eta_sde = s.value("eta_sde", c.sampler.eta_sde);
        c.sampler.flow_fine_steps = s.value("flow_fine_steps", c.sampler.flow_fine_steps);
        c.sampler.flow_lp_steps = s.value("flow_lp_steps", c.sampler.flow_lp_steps);
    }
    if (j.contains("eval")) {
        const json& e = j["eval"];
        reject_unknown(e, {"grid_lo", "grid_hi", "grid_n", "n_samples", "ibc_box_halfwidth"},
                       "eval");
        c.eval.grid_lo = e.value("grid_lo", c.eval.grid_lo);
        c.eval.grid_hi = e.value("grid_hi", c.eval.grid_hi);
        c.eval.grid_n = e.value("grid_n", c.eval.grid_n);
        c.eval.n_samples = e.value("n_samples", c.eval.n_samples);
        c.eval.ibc_box_halfwidth = e.value("ibc_box_halfwidth", c.eval.ibc_box_halfwidth);
    }
    const std::set<std::string> tasks{"pinwheel", "spiral", "gaussian1d"};
    const std::set<std::string> methods{"rnce", "irnce", "ibc", "nf", "edm", "edm_phi"};
    if (!tasks.count(c.task)) throw std::invalid_argument("config: unknown task " + c.task);
    if (!methods.count(c.method))
        throw std::invalid_argument("config: unknown method " + c.method);
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void ExperimentConfig::apply_override(const std::string& key_eq_value) {
    auto eq = key_eq_value.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must look like key.path=value");
    std::string path = key_eq_value.substr(0, eq);
    std::string value = key_eq_value.substr(eq + 1);

    json j = json::parse(to_json());
    json* node = &j;
    std::size_t start = 0;
    std::vector<std::string> parts;
    while (true) {
        auto dot = path.find('.', start);
        parts.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i]))
            throw std::invalid_argument("override: unknown key " + parts[i]);
        node = &(*node)[parts[i]];
    }
    if (!node->contains(parts.back()))
        throw std::invalid_argument("override: unknown key " + parts.back());
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::parse_error&) {
        parsed = value;  // bare strings
    }
    (*node)[parts.back()] = parsed;
    *this = from_json(j.dump());
}

}  // namespace cebm
