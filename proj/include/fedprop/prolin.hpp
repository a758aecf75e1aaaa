#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedprop/detector.hpp"
#include "fedprop/matrix.hpp"
#include "fedprop/parallel.hpp"
#include "fedprop/participation.hpp"
#include "fedprop/reconstruct.hpp"

namespace fedprop::prolin {

// Clamp applied to tau inside logs and denominators only; the stored values
// live on the full closed interval [0, 1].
inline constexpr double kTauFloor = 1e-6;

// rounds x clients x features, dense row-major.  Cells for (round, client)
// pairs outside the participation schedule are never written by anything in
// this module and stay exactly zero.
class Tensor3 {
  public:
    Tensor3() = default;
    Tensor3(std::size_t rounds, std::size_t clients, std::size_t features,
            double fill = 0.0)
        : rounds_(rounds),
          clients_(clients),
          features_(features),
          data_(rounds * clients * features, fill) {}

    std::size_t rounds() const { return rounds_; }
    std::size_t clients() const { return clients_; }
    std::size_t features() const { return features_; }

    double& operator()(std::size_t r, std::size_t i, std::size_t f) {
        return data_[(r * clients_ + i) * features_ + f];
    }
    double operator()(std::size_t r, std::size_t i, std::size_t f) const {
        return data_[(r * clients_ + i) * features_ + f];
    }

    std::span<double> at(std::size_t r, std::size_t i) {
        return {data_.data() + (r * clients_ + i) * features_, features_};
    }
    std::span<const double> at(std::size_t r, std::size_t i) const {
        return {data_.data() + (r * clients_ + i) * features_, features_};
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool operator==(const Tensor3&) const = default;

  private:
    std::size_t rounds_ = 0;
    std::size_t clients_ = 0;
    std::size_t features_ = 0;
    std::vector<double> data_;
};

struct GammaWeights {
    double ml = 1.0;
    double reg = 1.0;
    double lstsq = 1.0;
    bool operator==(const GammaWeights&) const = default;
};

// One joint recovery instance: everything is indexed per round r and client
// i.  For each participating pair the optimizer maintains a feature estimate
// X(r, i, :); per client it maintains a confidence tau_i that the client
// carries the probed property.
struct ProlinProblem {
    fedsim::ParticipationMatrix participation;               // rounds x clients
    linalg::Matrix aggregates;                                // rounds x features
    linalg::Matrix anchor;                                    // clients x features
    std::vector<detector::FeatureDistributions> distributions;  // one per round
    double bias = 0.0;  // averaged detector intercept, used by the warm start

    std::size_t round_count() const { return participation.rounds(); }
    std::size_t client_count() const { return participation.clients(); }
    std::size_t feature_count() const { return aggregates.cols(); }
};

void validate(const ProlinProblem& problem);

struct ProlinState {
    std::vector<double> tau;  // per-client confidence in [0, 1]
    Tensor3 x;                // per-round per-client feature estimates
};

enum class InitMode { warm, uniform };

// warm: tau from the anchor profile pushed through the averaged intercept,
// X broadcast from the anchor.  uniform: tau = 1/2 everywhere, each round's
// aggregate split evenly over its participants.
ProlinState initialize(const ProlinProblem& problem, InitMode mode);

// Per-class log-likelihood sums for one client over the rounds it took part
// in: pos = sum of positive-fit log-densities of its estimates, neg likewise.
// Log-domain throughout; densities are never multiplied in linear space.
struct LogLikelihoodTerms {
    double pos = 0.0;
    double neg = 0.0;
};

LogLikelihoodTerms log_likelihood_terms(const ProlinProblem& problem,
                                        const ProlinState& state, std::size_t client);

// The three objective pieces, reported unweighted:
//   ml     negative log-likelihood of a two-component mixture; per client
//          the positive branch scores that client's estimates against each
//          round's positive-class fit, the negative branch likewise, and
//          tau_i mixes the branches.
//   reg    squared distance between each client's mean estimate across its
//          rounds and its anchor profile.
//   lstsq  per-round aggregate consistency, weighted by the round's
//          distribution-separation weight.
struct ComponentValues {
    double ml = 0.0;
    double reg = 0.0;
    double lstsq = 0.0;
};

ComponentValues objective_components(const ProlinProblem& problem,
                                     const ProlinState& state,
                                     Exec exec = Exec::parallel);

// Weighted sum of the components; throws naming the offending term if any
// component fails to be finite.
double objective_value(const ProlinProblem& problem, const ProlinState& state,
                       const GammaWeights& gamma, Exec exec = Exec::parallel);

enum class Component { ml, reg, lstsq };

struct Gradients {
    std::vector<double> tau;
    Tensor3 x;
};

// Exact gradient of one unweighted component.  Cells outside the schedule
// come back exactly zero, as does the tau part for reg and lstsq.
Gradients component_gradient(const ProlinProblem& problem, const ProlinState& state,
                             Component which, Exec exec = Exec::parallel);

Gradients total_gradient(const ProlinProblem& problem, const ProlinState& state,
                         const GammaWeights& gamma, Exec exec = Exec::parallel);

double gradient_norm(const Gradients& g);

// Component weights proportional to the reciprocal gradient norms at the
// given state, normalized so they sum to 3.
GammaWeights rebalance_gamma(const ProlinProblem& problem, const ProlinState& state,
                             Exec exec = Exec::parallel);

struct OptimizerParams {
    double step = 1e-2;
    double momentum = 0.9;
    std::size_t max_iters = 2000;
    // convergence: relative objective change across one gamma_every window
    double rel_tol = 1e-8;
    std::size_t gamma_every = 50;  // window length; 0 disables window checks
    bool dynamic_gamma = true;     // reweight components at each window edge
    // this many consecutive objective increases abort the run as divergent
    std::size_t divergence_patience = 200;
    bool freeze_tau = false;
    GammaWeights gamma{};  // initial weights, kept as-is when not dynamic
    bool operator==(const OptimizerParams&) const = default;
};

struct SolveTrace {
    // objective[0] is the value at the initial state; one entry per step
    // after that.  Entries are comparable only between weight changes.
    std::vector<double> objective;
    std::vector<GammaWeights> gamma_history;  // initial weights plus rebalances
    std::size_t iterations = 0;
    bool converged = false;
    bool diverged = false;
};

struct ProlinResult {
    ProlinState state;
    SolveTrace trace;
};

// Projected gradient descent with momentum over (tau, X); tau is kept in
// [0, 1] by clamping, and a clamped coordinate has its velocity dropped.
ProlinResult solve(const ProlinProblem& problem, const ProlinState& init,
                   const OptimizerParams& params, Exec exec = Exec::parallel);

reconstruct::Decision to_decision(const ProlinState& state, double threshold = 0.5);

// Alternative decision rule: label exactly the k clients with the highest
// confidence as positive (ties broken toward the lower client id).
reconstruct::Decision top_k_decision(const ProlinState& state, std::size_t k);

}  // namespace fedprop::prolin
