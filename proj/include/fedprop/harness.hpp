#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedprop/config.hpp"
#include "fedprop/detector.hpp"
#include "fedprop/federation.hpp"
#include "fedprop/metrics.hpp"
#include "fedprop/parallel.hpp"
#include "fedprop/prolin.hpp"
#include "fedprop/reconstruct.hpp"

namespace fedprop::harness {

// Evaluation points: every cadence rounds, plus the final round when the
// total is not a multiple.  Values are prefix lengths (1-based round counts).
std::vector<std::size_t> evaluation_rounds(std::size_t rounds, std::size_t cadence);

// Everything one seed needs before any training happens.  Derived entirely
// from (config, seed), so the attack half of the pipeline can rebuild its
// own inputs (aux pool, probe target) when re-run against a stored view.
struct SeedInputs {
    std::vector<fedsim::ClientDataset> datasets;
    std::vector<fedsim::ClientRole> roles;
    std::vector<bool> truth;          // truth[i] = client i carries the property
    std::vector<fedsim::Sample> aux;  // server-side pool, disjoint from client data
    fedsim::Sample target;            // membership probe; unused otherwise
};

SeedInputs prepare_seed(const ExperimentConfig& config, std::uint64_t seed);

// One method's output at one evaluation point.
struct DecisionRecord {
    std::size_t round = 0;  // how many rounds of observations were used
    reconstruct::Decision decision;
    // per-client feature estimate behind the decision; empty for the method
    // that scores raw updates directly
    std::vector<double> profile;
};

struct SeedOutcome {
    std::uint64_t seed = 0;
    std::vector<bool> truth;
    fedsim::AttackerView view;
    std::vector<detector::DetectorModel> detectors;  // one per round
    std::vector<detector::FeatureDistributions> distributions;
    std::vector<DecisionRecord> decisions;
    std::vector<MetricRow> metrics;
    // joint-solver objective per iteration at the last evaluation point
    std::vector<double> prolin_trace;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<SeedOutcome> seeds;
};

struct SimulationOutput {
    std::uint64_t seed = 0;
    std::vector<bool> truth;
    fedsim::AttackerView view;
};

// Federation half only: datasets, roles, run, attacker view.
SimulationOutput simulate_seed(const ExperimentConfig& config, std::uint64_t seed,
                               Exec exec = Exec::parallel);

// Attack half: per-round detector training, distribution fits, and every
// requested reconstruction method at each evaluation point, all computed
// from the attacker view alone plus regenerated server-side inputs.
SeedOutcome attack_view(const ExperimentConfig& config, std::uint64_t seed,
                        const fedsim::AttackerView& view,
                        const std::vector<bool>& truth, Exec exec = Exec::parallel);

SeedOutcome run_seed(const ExperimentConfig& config, std::uint64_t seed,
                     Exec exec = Exec::parallel);

// All seeds end to end.  Failures abort with the failing stage named.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                Exec exec = Exec::parallel);

// All metric rows of a result in deterministic order (seed-major, then
// evaluation round, then method), with cross-seed "mean" rows appended.
std::vector<MetricRow> collect_metrics(const ExperimentResult& result);

}  // namespace fedprop::harness
