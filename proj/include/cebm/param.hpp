#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cebm/tape.hpp"
#include "cebm/tensor.hpp"

namespace cebm {

// Named, shaped, deterministically ordered collection of real parameters.
class ParameterVector {
 public:
    struct Entry {
        std::string name;
        Tensor value;
    };

    void add(std::string name, Tensor value);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);

    std::size_t size() const { return entries_.size(); }
    std::size_t numel() const;
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    std::vector<double> flatten() const;
    void unflatten(const std::vector<double>& flat);

    // Zero-valued clone with the same names/shapes.
    ParameterVector zeros_like() const;

    bool same_layout(const ParameterVector& o) const;

 private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

// Tape bindings for every entry of a ParameterVector, in entry order.
struct BoundParams {
    std::vector<ad::Var> vars;
    const ParameterVector* source = nullptr;

    ad::Var operator[](std::size_t i) const { return vars[i]; }
    ad::Var at(const std::string& name) const;
};

BoundParams bind(ad::Tape& tape, const ParameterVector& params);

// Gradient of a scalar tape output w.r.t. every bound parameter; entries
// untouched by the graph come back as zeros.
ParameterVector gradient(ad::Tape& tape, ad::Var output, const BoundParams& bound);

// Max over coordinates of |central difference - analytic| / (|analytic| + 1e-12).
double finite_difference_check(const std::function<double(const ParameterVector&)>& f,
                               const ParameterVector& p, const ParameterVector& analytic_grad,
                               double step);

// Convenience: runs f through a tape to obtain the analytic gradient itself.
double finite_difference_check(
    const std::function<ad::Var(ad::Tape&, const BoundParams&)>& build,
    const ParameterVector& p, double step);

}  // namespace cebm
