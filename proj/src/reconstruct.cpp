#include "fedprop/reconstruct.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "fedprop/numeric.hpp"
#include "fedprop/rng.hpp"

namespace fedprop::reconstruct {

namespace {

void require_detectors(const fedsim::AttackerView& view,
                       const std::vector<detector::DetectorModel>& detectors) {
    if (detectors.size() < view.rounds.size())
        throw std::invalid_argument("feature aggregates: missing detector for a round");
    for (std::size_t r = 0; r < view.rounds.size(); ++r) {
        if (detectors[r].round != r)
            throw std::invalid_argument("feature aggregates: detector round mismatch");
        if (detectors[r].alpha.size() != view.rounds[r].aggregate.size())
            throw std::invalid_argument("feature aggregates: detector width mismatch");
    }
}

Decision decide_from_profile(const FeatureProfile& profile, double bias,
                             double threshold) {
    Decision d;
    d.method = profile.method;
    d.rank_deficient = profile.rank_deficient;
    d.threshold = threshold;
    const std::size_t clients = profile.values.rows();
    d.tau.resize(clients);
    d.labels.resize(clients);
    for (std::size_t i = 0; i < clients; ++i) {
        double feature = 0.0;  // t = 1 in practice; wider profiles sum features
        for (std::size_t f = 0; f < profile.values.cols(); ++f)
            feature += profile.values(i, f);
        d.tau[i] = sigmoid(feature + bias);
        d.labels[i] = d.tau[i] > threshold;
    }
    return d;
}

}  // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::baseline: return "baseline";
        case Method::ols: return "ols";
        case Method::reg: return "reg";
        case Method::prolin: return "prolin";
    }
    throw std::invalid_argument("unknown method");
}

linalg::Matrix feature_aggregates(const fedsim::AttackerView& view,
                                  const std::vector<detector::DetectorModel>& detectors) {
    require_detectors(view, detectors);
    linalg::Matrix g(view.rounds.size(), 1);
    for (std::size_t r = 0; r < view.rounds.size(); ++r)
        g(r, 0) = detector::extract_feature(detectors[r], view.rounds[r].aggregate);
    return g;
}

double mean_bias(std::span<const detector::DetectorModel> detectors) {
    if (detectors.empty()) throw std::invalid_argument("mean_bias: no detectors");
    double acc = 0.0;
    for (const auto& d : detectors) acc += d.beta;
    return acc / static_cast<double>(detectors.size());
}

Decision baseline_reconstruct(const fedsim::AttackerView& view,
                              const std::vector<detector::DetectorModel>& detectors,
                              double threshold, Exec exec) {
    if (view.rounds.empty()) throw std::invalid_argument("baseline: empty view");
    require_detectors(view, detectors);

    const std::size_t rounds = view.rounds.size();
    const std::size_t clients = view.participation.clients();
    const std::size_t z = view.rounds.front().aggregate.size();

    linalg::Matrix b(rounds, z);
    for (std::size_t r = 0; r < rounds; ++r)
        for (std::size_t j = 0; j < z; ++j) b(r, j) = view.rounds[r].aggregate[j];

    const linalg::SolveReport solved =
        linalg::ols_solve(view.participation.as_matrix(), b, exec);

    Decision d;
    d.method = Method::baseline;
    d.rank_deficient = solved.rank_deficient;
    d.threshold = threshold;
    d.tau.resize(clients);
    d.labels.resize(clients);
    for (std::size_t i = 0; i < clients; ++i) {
        double acc = 0.0;
        for (std::size_t r = 0; r < rounds; ++r)
            acc += sigmoid(dot(detectors[r].alpha, solved.solution.row(i)) +
                           detectors[r].beta);
        d.tau[i] = acc / static_cast<double>(rounds);
        d.labels[i] = d.tau[i] > threshold;
    }
    return d;
}

std::pair<FeatureProfile, Decision> ols_feature_reconstruct(
    const linalg::Matrix& g, const fedsim::ParticipationMatrix& participation,
    double bias, double threshold, Exec exec) {
    if (g.rows() != participation.rounds())
        throw std::invalid_argument("ols features: G rows != participation rounds");
    const linalg::SolveReport solved =
        linalg::ols_solve(participation.as_matrix(), g, exec);
    FeatureProfile profile{Method::ols, solved.solution, solved.rank_deficient};
    Decision d = decide_from_profile(profile, bias, threshold);
    return {std::move(profile), std::move(d)};
}

std::pair<FeatureProfile, Decision> reg_feature_reconstruct(
    const linalg::Matrix& g, const fedsim::ParticipationMatrix& participation,
    std::span<const double> row_weights, double bias, double lambda, double threshold,
    Exec exec) {
    if (g.rows() != participation.rounds())
        throw std::invalid_argument("reg features: G rows != participation rounds");
    const linalg::SolveReport solved = linalg::ridge_solve(
        participation.as_matrix(), g, row_weights, lambda, exec);
    FeatureProfile profile{Method::reg, solved.solution, solved.rank_deficient};
    Decision d = decide_from_profile(profile, bias, threshold);
    return {std::move(profile), std::move(d)};
}

std::vector<ErrorRatioRow> reconstruction_error_ratio(std::span<const double> alpha_norms,
                                                      std::size_t t, double noise_sigma,
                                                      std::size_t trials,
                                                      std::uint64_t seed,
                                                      bool sparse_alpha) {
    if (t != 1)
        throw std::invalid_argument("error ratio experiment: only t = 1 is implemented");
    if (trials == 0) throw std::invalid_argument("error ratio experiment: zero trials");
    if (!(noise_sigma > 0.0))
        throw std::invalid_argument("error ratio experiment: noise sigma must be > 0");

    const std::size_t rounds = 40, clients = 10, width = 50;

    // one full-column-rank schedule shared by every row and trial
    fedsim::ParticipationMatrix schedule;
    for (std::uint64_t attempt = 0;; ++attempt) {
        schedule = fedsim::ParticipationMatrix::sample(rounds, clients, 0.4,
                                                       derive_seed(seed, 0xAA, attempt));
        if (!linalg::ols_solve(schedule.as_matrix(),
                               linalg::Matrix(rounds, 1, 1.0))
                 .rank_deficient)
            break;
        if (attempt > 32)
            throw std::runtime_error("error ratio experiment: no full-rank schedule");
    }
    const linalg::Matrix a = schedule.as_matrix();
    const linalg::Matrix a_pinv = linalg::pseudo_inverse(a);

    std::vector<ErrorRatioRow> rows;
    for (const double norm : alpha_norms) {
        Rng rng(derive_seed(seed, 0xBB, static_cast<std::uint64_t>(norm * 1024)));
        std::normal_distribution<double> gauss(0.0, 1.0);

        std::vector<double> alpha(width, 0.0);
        if (sparse_alpha) {
            alpha[width / 2] = norm;
        } else {
            double len = 0.0;
            for (auto& x : alpha) {
                x = gauss(rng);
                len += x * x;
            }
            len = std::sqrt(len);
            for (auto& x : alpha) x *= norm / len;
        }

        double update_route = 0.0, feature_route = 0.0;
        for (std::size_t trial = 0; trial < trials; ++trial) {
            linalg::Matrix w(clients, width);
            for (auto& x : w.data()) x = gauss(rng);

            linalg::Matrix b = matmul(a, w);
            for (auto& x : b.data()) x += noise_sigma * gauss(rng);
            const linalg::Matrix w_rec = matmul(a_pinv, b);

            linalg::Matrix scores(clients, 1);
            for (std::size_t i = 0; i < clients; ++i) scores(i, 0) = dot(alpha, w.row(i));

            for (std::size_t i = 0; i < clients; ++i)
                update_route += std::abs(scores(i, 0) - dot(alpha, w_rec.row(i)));

            linalg::Matrix g = matmul(a, scores);
            for (auto& x : g.data()) x += noise_sigma * gauss(rng);
            const linalg::Matrix scores_rec = matmul(a_pinv, g);
            for (std::size_t i = 0; i < clients; ++i)
                feature_route += std::abs(scores(i, 0) - scores_rec(i, 0));
        }
        update_route /= static_cast<double>(trials);
        feature_route /= static_cast<double>(trials);

        rows.push_back(ErrorRatioRow{norm, update_route, feature_route,
                                     update_route / feature_route,
                                     norm / static_cast<double>(t)});
    }
    return rows;
}

}  // namespace fedprop::reconstruct
