#include "cebm/param.hpp"

#include <cmath>
#include <stdexcept>

namespace cebm {

void ParameterVector::add(std::string name, Tensor value) {
    if (index_.count(name))
        throw std::invalid_argument("ParameterVector: duplicate name " + name);
    index_[name] = entries_.size();
    entries_.push_back({std::move(name), std::move(value)});
}

const Tensor& ParameterVector::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
        throw std::out_of_range("ParameterVector: no entry named " + name);
    return entries_[it->second].value;
}

Tensor& ParameterVector::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end())
        throw std::out_of_range("ParameterVector: no entry named " + name);
    return entries_[it->second].value;
}

std::size_t ParameterVector::numel() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
}

std::vector<double> ParameterVector::flatten() const {
    std::vector<double> flat;
    flat.reserve(numel());
    for (const auto& e : entries_)
        flat.insert(flat.end(), e.value.data.begin(), e.value.data.end());
    return flat;
}

void ParameterVector::unflatten(const std::vector<double>& flat) {
    if (flat.size() != numel())
        throw std::invalid_argument("ParameterVector: unflatten size mismatch");
    std::size_t off = 0;
    for (auto& e : entries_) {
        std::copy(flat.begin() + off, flat.begin() + off + e.value.numel(),
                  e.value.data.begin());
        off += e.value.numel();
    }
}

ParameterVector ParameterVector::zeros_like() const {
    ParameterVector z;
    for (const auto& e : entries_) z.add(e.name, Tensor(e.value.shape));
    return z;
}

bool ParameterVector::same_layout(const ParameterVector& o) const {
    if (entries_.size() != o.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].name != o.entries_[i].name ||
            entries_[i].value.shape != o.entries_[i].value.shape)
            return false;
    return true;
}

ad::Var BoundParams::at(const std::string& name) const {
    const auto& es = source->entries();
    for (std::size_t i = 0; i < es.size(); ++i)
        if (es[i].name == name) return vars[i];
    throw std::out_of_range("BoundParams: no entry named " + name);
}

BoundParams bind(ad::Tape& tape, const ParameterVector& params) {
    BoundParams b;
    b.source = &params;
    b.vars.reserve(params.size());
    for (const auto& e : params.entries()) b.vars.push_back(tape.input(e.value));
    return b;
}

ParameterVector gradient(ad::Tape& tape, ad::Var output, const BoundParams& bound) {
    if (tape.value(output).numel() != 1)
        throw std::invalid_argument("gradient: output must be scalar");
    tape.backward(output);
    ParameterVector g;
    const auto& es = bound.source->entries();
    for (std::size_t i = 0; i < es.size(); ++i) g.add(es[i].name, tape.adjoint(bound.vars[i]));
    return g;
}

double finite_difference_check(const std::function<double(const ParameterVector&)>& f,
                               const ParameterVector& p, const ParameterVector& analytic_grad,
                               double step) {
    if (step <= 0.0) throw std::invalid_argument("finite_difference_check: step must be > 0");
    ParameterVector probe = p;
    std::vector<double> flat = probe.flatten();
    std::vector<double> gflat = analytic_grad.flatten();
    double worst = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        double orig = flat[i];
        flat[i] = orig + step;
        probe.unflatten(flat);
        double fp = f(probe);
        flat[i] = orig - step;
        probe.unflatten(flat);
        double fm = f(probe);
        flat[i] = orig;
        double fd = (fp - fm) / (2.0 * step);
        double rel = std::abs(fd - gflat[i]) / (std::abs(gflat[i]) + 1e-12);
        worst = std::max(worst, rel);
    }
    probe.unflatten(flat);
    return worst;
}

double finite_difference_check(
    const std::function<ad::Var(ad::Tape&, const BoundParams&)>& build,
    const ParameterVector& p, double step) {
    ad::Tape tape;
    BoundParams bound = bind(tape, p);
    ad::Var out = build(tape, bound);
    ParameterVector g = gradient(tape, out, bound);
    auto value_of = [&](const ParameterVector& q) {
        ad::Tape t2;
        BoundParams b2 = bind(t2, q);
        return t2.value(build(t2, b2)).data[0];
    };
    return finite_difference_check(value_of, p, g, step);
}

}  // namespace cebm
