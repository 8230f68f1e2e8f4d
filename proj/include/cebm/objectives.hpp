#pragma once

#include <vector>

#include "cebm/models.hpp"
#include "cebm/param.hpp"
#include "cebm/tensor.hpp"

namespace cebm {

// One positive example with its K contrast samples and all proposal
// log-densities under the (possibly truncated) sampler. Slot 0 of any
// stacked score layout is the positive.
struct NegativeBatch {
    std::vector<double> x_emb;       // embedded context
    std::vector<double> y_pos;       // event
    double t = 1.0;                  // 1 for the non-interpolating objective
    Tensor negs;                     // (K, event_dim)
    std::vector<double> neg_logps;   // K proposal log-densities
    double pos_logp = 0.0;           // proposal log-density of y_pos

    std::size_t k() const { return negs.shape.empty() ? 0 : negs.shape[0]; }
};

struct PosteriorWeights {
    std::vector<double> q;  // K+1 entries, sum to 1
};

// Softmax of (energy - proposal_logp), max-subtraction stabilized.
PosteriorWeights posterior_q(const std::vector<double>& energies,
                             const std::vector<double>& proposal_logps);

// Numeric loss values (positive in slot 0 internally).
double rnce_loss(const EnergyModel& model, const ParameterVector& params,
                 const std::vector<NegativeBatch>& batch);
double ibc_loss(const EnergyModel& model, const ParameterVector& params,
                const std::vector<NegativeBatch>& batch);

// Time-indexed batch: m (t, y_t, negatives) triples per datum.
struct TimeIndexedItem {
    std::vector<double> x_emb;
    std::vector<NegativeBatch> per_time;  // m entries, each with its own t
};

double irnce_loss(const EnergyModel& model, const ParameterVector& params,
                  const std::vector<TimeIndexedItem>& batch);

double mle_gaussian_mean(const std::vector<double>& data, double sigma);

// On-tape builders used by the training loops. All items must share K and the
// context/event dimensions of `model`. `use_proposal_logps=false` gives the
// raw-energy softmax objective. `scores` is the stabilized (n, K+1) score
// matrix (positive in column 0), exposed for training diagnostics.
struct ContrastiveBuild {
    ad::Var loss;
    ad::Var scores;
};

ContrastiveBuild contrastive_loss_build_ex(ad::Tape& tape, const EnergyModel& model,
                                           const BoundParams& params,
                                           const std::vector<NegativeBatch>& batch,
                                           bool use_proposal_logps);

ad::Var contrastive_loss_build(ad::Tape& tape, const EnergyModel& model,
                               const BoundParams& params,
                               const std::vector<NegativeBatch>& batch,
                               bool use_proposal_logps);

ContrastiveBuild irnce_loss_build_ex(ad::Tape& tape, const EnergyModel& model,
                                     const BoundParams& params,
                                     const std::vector<TimeIndexedItem>& batch);

ad::Var irnce_loss_build(ad::Tape& tape, const EnergyModel& model, const BoundParams& params,
                         const std::vector<TimeIndexedItem>& batch);

}  // namespace cebm
