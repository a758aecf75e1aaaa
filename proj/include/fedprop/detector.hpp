#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedprop/federation.hpp"

namespace fedprop::detector {

enum class Property { membership, inversion, ascent };

// Per-round scorer M_r = h ∘ g: g is the strictly linear map alpha^T x (no
// bias term inside), h folds the bias into the sigmoid.  Keeping g linear is
// what lets scores of sums decompose into sums of scores later on.
struct DetectorModel {
    std::size_t round = 0;
    std::vector<double> alpha;
    double beta = 0.0;
    std::size_t feature_count = 1;
};

double extract_feature(const DetectorModel& model, std::span<const double> update);
double confidence(const DetectorModel& model, std::span<const double> update);

struct LabeledUpdate {
    std::vector<double> update;
    bool positive = false;
};

// Train/eval halves of the synthesized supervision, plus the sample batches
// each update was computed from (same index order), which the construction
// tests inspect.
struct LabeledUpdateSet {
    std::vector<LabeledUpdate> train, eval;
    std::vector<std::vector<fedsim::Sample>> train_batches, eval_batches;
};

struct TrainingSetSpec {
    Property property = Property::ascent;
    fedsim::Sample target;         // membership probe; unused for the other properties
    double eta = 0.1;              // local-pass step used to synthesize updates
    std::size_t epochs = 1;
    std::size_t batch_size = 10;
    std::size_t example_size = 30; // samples per synthesized batch
    std::size_t count = 100;       // total examples; must be even
};

// Builds balanced positive/negative update examples from attacker-side
// auxiliary data (which the caller keeps disjoint from client data) against
// a fixed model snapshot, split 80/20 into train and eval.
LabeledUpdateSet build_training_set(const std::vector<fedsim::Sample>& aux,
                                    const fedsim::GlobalModel& snapshot,
                                    const TrainingSetSpec& spec, std::uint64_t seed);

struct DetectorTrainParams {
    double eta = 1e-3;
    std::size_t epochs = 400;
    std::size_t batch_size = 10;
    double tol = 1e-6;  // allowed per-epoch loss regression before stopping
};

DetectorModel train_detector(const LabeledUpdateSet& data,
                             const DetectorTrainParams& params, std::uint64_t seed,
                             std::size_t round = 0);

double detector_loss(const DetectorModel& model, std::span<const LabeledUpdate> examples);
double detector_accuracy(const DetectorModel& model,
                         std::span<const LabeledUpdate> examples);

inline constexpr double kSigmaFloor = 1e-6;

// Gaussian fits of the per-class feature values on the eval split, one pair
// per feature; ovl is their overlap and weight = 1 - ovl.
struct FeatureDistributions {
    std::size_t round = 0;
    std::vector<double> mu_plus, sigma_plus, mu_minus, sigma_minus;
    double ovl = 1.0;
    double weight = 0.0;
};

FeatureDistributions fit_distributions(const DetectorModel& model,
                                       const LabeledUpdateSet& data);

// Overlap of two normal densities, integral of the pointwise minimum, by
// composite Simpson quadrature out to eight sigmas beyond both means.
double compute_ovl(double mu1, double sigma1, double mu2, double sigma2);

}  // namespace fedprop::detector
