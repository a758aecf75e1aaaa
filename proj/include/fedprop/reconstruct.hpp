#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedprop/detector.hpp"
#include "fedprop/federation.hpp"
#include "fedprop/solvers.hpp"

namespace fedprop::reconstruct {

enum class Method { baseline, ols, reg, prolin };
std::string method_name(Method m);

// Per-round scalar observations G_r = alpha_r^T b_r.  Everything here reads
// the attacker view only; ground truth never enters this module.
linalg::Matrix feature_aggregates(const fedsim::AttackerView& view,
                                  const std::vector<detector::DetectorModel>& detectors);

double mean_bias(std::span<const detector::DetectorModel> detectors);

struct Decision {
    Method method = Method::baseline;
    std::vector<double> tau;   // per-client confidence
    std::vector<bool> labels;  // tau > threshold
    bool rank_deficient = false;
    double threshold = 0.5;
};

struct FeatureProfile {
    Method method = Method::ols;
    linalg::Matrix values;  // clients x t
    bool rank_deficient = false;
};

// Disaggregate the raw update sums into per-client average updates, then
// score each with every round's detector and average the confidences.
Decision baseline_reconstruct(const fedsim::AttackerView& view,
                              const std::vector<detector::DetectorModel>& detectors,
                              double threshold = 0.5, Exec exec = Exec::parallel);

// Disaggregate in feature space instead: solve G ~ A x for the per-client
// feature profile, then squash through the averaged detector bias.
std::pair<FeatureProfile, Decision> ols_feature_reconstruct(
    const linalg::Matrix& g, const fedsim::ParticipationMatrix& participation,
    double bias, double threshold = 0.5, Exec exec = Exec::parallel);

// Same, with overlap-derived row weights and a ridge penalty.
std::pair<FeatureProfile, Decision> reg_feature_reconstruct(
    const linalg::Matrix& g, const fedsim::ParticipationMatrix& participation,
    std::span<const double> row_weights, double bias, double lambda = 5.0,
    double threshold = 0.5, Exec exec = Exec::parallel);

// Monte-Carlo comparison of the two disaggregation routes under the same
// iid noise: reconstructing full updates and then scoring them versus
// reconstructing the scores directly.  The error ratio tracks
// ||alpha||_2 / t, which is the whole argument for feature space.
struct ErrorRatioRow {
    double alpha_norm = 0;
    double update_route_error = 0;   // mean L1 error of scores of rebuilt updates
    double feature_route_error = 0;  // mean L1 error of directly rebuilt scores
    double ratio = 0;
    double reference = 0;  // alpha_norm / t
};

std::vector<ErrorRatioRow> reconstruction_error_ratio(std::span<const double> alpha_norms,
                                                      std::size_t t, double noise_sigma,
                                                      std::size_t trials,
                                                      std::uint64_t seed,
                                                      bool sparse_alpha = false);

}  // namespace fedprop::reconstruct
