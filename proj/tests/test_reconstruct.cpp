#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "fedprop/detector.hpp"
#include "fedprop/federation.hpp"
#include "fedprop/numeric.hpp"
#include "fedprop/reconstruct.hpp"

using namespace fedprop;
using namespace fedprop::reconstruct;
using fedsim::ParticipationMatrix;
using linalg::Matrix;

namespace {

ParticipationMatrix schedule_from(std::size_t clients,
                                  const std::vector<std::vector<std::size_t>>& rows) {
    ParticipationMatrix p(rows.size(), clients);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c : rows[r]) p.set(r, c, true);
    return p;
}

// G = A x for a per-client scalar feature vector x
Matrix exact_aggregates(const ParticipationMatrix& p, const std::vector<double>& x) {
    Matrix g(p.rounds(), 1);
    for (std::size_t r = 0; r < p.rounds(); ++r) {
        double acc = 0.0;
        for (std::size_t c : p.participants(r)) acc += x[c];
        g(r, 0) = acc;
    }
    return g;
}

double ref_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// A full-column-rank 5x4 schedule used by several cases below.
const std::vector<std::vector<std::size_t>> kFullRankRows = {
    {0, 1}, {1, 2}, {2, 3}, {0, 3}, {0, 2}};

}  // namespace

TEST_CASE("method names are stable strings") {
    CHECK(method_name(Method::baseline) == "baseline");
    CHECK(method_name(Method::ols) == "ols");
    CHECK(method_name(Method::reg) == "reg");
    CHECK(method_name(Method::prolin) == "prolin");
}

TEST_CASE("feature aggregates apply each round's own detector to its sum") {
    fedsim::AttackerView view;
    view.participation = schedule_from(2, {{0}, {1}});
    view.rounds.push_back({0, {0}, {1.0, 2.0}, {}});
    view.rounds.push_back({1, {1}, {-3.0, 0.5}, {}});

    std::vector<detector::DetectorModel> dets;
    dets.push_back({0, {1.0, 1.0}, 0.0, 1});
    dets.push_back({1, {2.0, -2.0}, 0.0, 1});

    const Matrix g = feature_aggregates(view, dets);
    REQUIRE(g.rows() == 2);
    REQUIRE(g.cols() == 1);
    CHECK(g(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(g(1, 0) == doctest::Approx(-7.0).epsilon(1e-12));

    SUBCASE("a missing detector is rejected") {
        dets.pop_back();
        CHECK_THROWS_AS(feature_aggregates(view, dets), std::invalid_argument);
    }
    SUBCASE("a round index mismatch is rejected") {
        dets[1].round = 7;
        CHECK_THROWS_AS(feature_aggregates(view, dets), std::invalid_argument);
    }
    SUBCASE("a width mismatch is rejected") {
        dets[1].alpha = {1.0, 2.0, 3.0};
        CHECK_THROWS_AS(feature_aggregates(view, dets), std::invalid_argument);
    }
}

TEST_CASE("mean_bias averages the per-round intercepts") {
    std::vector<detector::DetectorModel> dets;
    dets.push_back({0, {1.0}, 0.5, 1});
    dets.push_back({1, {1.0}, -1.5, 1});
    dets.push_back({2, {1.0}, 2.5, 1});
    CHECK(mean_bias(dets) == doctest::Approx(0.5).epsilon(1e-12));
    dets.clear();
    CHECK_THROWS_AS(mean_bias(dets), std::invalid_argument);
}

TEST_CASE("planted per-client features are recovered exactly from a full-rank schedule") {
    const ParticipationMatrix p = schedule_from(4, kFullRankRows);
    const std::vector<double> planted = {3.0, -3.0, 3.0, -3.0};
    const Matrix g = exact_aggregates(p, planted);

    auto [profile, decision] = ols_feature_reconstruct(g, p, 0.0);
    REQUIRE(profile.values.rows() == 4);
    CHECK_FALSE(profile.rank_deficient);
    CHECK_FALSE(decision.rank_deficient);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(profile.values(i, 0) - planted[i]) < 1e-8);
        CHECK(decision.tau[i] == doctest::Approx(ref_sigmoid(planted[i])).epsilon(1e-9));
        CHECK(decision.labels[i] == (planted[i] > 0));
    }

    SUBCASE("a row-count mismatch between G and the schedule is rejected") {
        const Matrix bad(p.rounds() + 1, 1);
        CHECK_THROWS_AS(ols_feature_reconstruct(bad, p, 0.0), std::invalid_argument);
        const std::vector<double> w(p.rounds() + 1, 1.0);
        CHECK_THROWS_AS(reg_feature_reconstruct(bad, p, w, 0.0), std::invalid_argument);
    }
}

TEST_CASE("an identity schedule passes the aggregates straight through") {
    ParticipationMatrix p(3, 3);
    for (std::size_t i = 0; i < 3; ++i) p.set(i, i, true);
    Matrix g(3, 1);
    g(0, 0) = 0.75;
    g(1, 0) = -2.0;
    g(2, 0) = 5.5;

    auto [profile, decision] = ols_feature_reconstruct(g, p, 0.0);
    CHECK_FALSE(profile.rank_deficient);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(std::abs(profile.values(i, 0) - g(i, 0)) < 1e-10);
    CHECK(decision.labels == std::vector<bool>{true, false, true});
}

TEST_CASE("a never-participating client is flagged and gets the minimum-norm zero") {
    const ParticipationMatrix p = schedule_from(3, {{0}, {1}, {0, 1}});
    const std::vector<double> planted = {1.0, -1.0, 99.0};  // client 2 unobservable
    Matrix g(3, 1);
    g(0, 0) = 1.0;
    g(1, 0) = -1.0;
    g(2, 0) = 0.0;

    auto [profile, decision] = ols_feature_reconstruct(g, p, 0.0);
    CHECK(profile.rank_deficient);
    CHECK(decision.rank_deficient);
    CHECK(std::abs(profile.values(0, 0) - 1.0) < 1e-9);
    CHECK(std::abs(profile.values(1, 0) + 1.0) < 1e-9);
    CHECK(std::abs(profile.values(2, 0)) < 1e-9);
    CHECK(decision.tau[2] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("clients that always co-occur share their summed feature equally") {
    // columns 0 and 1 are identical, so the minimum-norm answer splits them
    const ParticipationMatrix p = schedule_from(
        4, {{0, 1}, {0, 1, 2}, {0, 1, 3}, {2, 3}});
    const std::vector<double> planted = {1.0, 3.0, -2.0, 0.5};
    const Matrix g = exact_aggregates(p, planted);

    auto [profile, decision] = ols_feature_reconstruct(g, p, 0.0);
    CHECK(profile.rank_deficient);
    CHECK(std::abs(profile.values(0, 0) - 2.0) < 1e-8);
    CHECK(std::abs(profile.values(1, 0) - 2.0) < 1e-8);
    CHECK(std::abs(profile.values(2, 0) + 2.0) < 1e-8);
    CHECK(std::abs(profile.values(3, 0) - 0.5) < 1e-8);
}

TEST_CASE("the ridge path collapses to least squares as lambda vanishes") {
    const ParticipationMatrix p = schedule_from(4, kFullRankRows);
    const std::vector<double> planted = {2.0, -1.0, 0.5, -2.5};
    const Matrix g = exact_aggregates(p, planted);
    const std::vector<double> weights(p.rounds(), 1.0);

    auto [ols_profile, ols_decision] = ols_feature_reconstruct(g, p, -0.25);
    auto [reg_profile, reg_decision] =
        reg_feature_reconstruct(g, p, weights, -0.25, 1e-8);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(reg_profile.values(i, 0) - ols_profile.values(i, 0)) < 1e-6);
        CHECK(reg_decision.tau[i] == doctest::Approx(ols_decision.tau[i]).epsilon(1e-6));
    }
}

TEST_CASE("an overwhelming ridge penalty drives every confidence to the bias point") {
    const ParticipationMatrix p = schedule_from(4, kFullRankRows);
    const std::vector<double> planted = {2.0, -1.0, 0.5, -2.5};
    const Matrix g = exact_aggregates(p, planted);
    const std::vector<double> weights(p.rounds(), 1.0);
    const double bias = -0.7;

    auto [profile, decision] = reg_feature_reconstruct(g, p, weights, bias, 1e12);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(profile.values(i, 0)) < 1e-6);
        CHECK(decision.tau[i] == doctest::Approx(ref_sigmoid(bias)).epsilon(1e-6));
        CHECK_FALSE(decision.labels[i]);
    }
}

TEST_CASE("zero-weight rounds are equivalent to deleting those rows") {
    const ParticipationMatrix p = schedule_from(
        4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {0, 2}, {1, 3}});
    const std::vector<double> planted = {1.5, -0.5, 2.0, -1.0};
    Matrix g = exact_aggregates(p, planted);
    g(1, 0) += 10.0;  // poison the rounds that will carry zero weight
    g(4, 0) -= 7.0;

    std::vector<double> weights = {1.0, 0.0, 0.6, 1.0, 0.0, 0.3};

    ParticipationMatrix kept(4, 4);
    Matrix kept_g(4, 1);
    std::vector<double> kept_w;
    std::size_t out = 0;
    for (std::size_t r = 0; r < p.rounds(); ++r) {
        if (weights[r] == 0.0) continue;
        for (std::size_t c = 0; c < 4; ++c) kept.set(out, c, p.at(r, c));
        kept_g(out, 0) = g(r, 0);
        kept_w.push_back(weights[r]);
        ++out;
    }
    REQUIRE(out == 4);

    auto [full, full_dec] = reg_feature_reconstruct(g, p, weights, 0.0, 5.0);
    auto [dropped, dropped_dec] = reg_feature_reconstruct(kept_g, kept, kept_w, 0.0, 5.0);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(std::abs(full.values(i, 0) - dropped.values(i, 0)) < 1e-10);
}

TEST_CASE("relabeling clients permutes the recovered profile with them") {
    const ParticipationMatrix p = schedule_from(4, kFullRankRows);
    const std::vector<double> planted = {2.0, -1.0, 0.5, -2.5};
    const Matrix g = exact_aggregates(p, planted);
    const std::vector<double> weights = {1.0, 0.8, 0.6, 0.4, 0.9};

    const std::vector<std::size_t> perm = {3, 1, 0, 2};  // new id of each old client
    ParticipationMatrix permuted(p.rounds(), 4);
    for (std::size_t r = 0; r < p.rounds(); ++r)
        for (std::size_t c = 0; c < 4; ++c)
            if (p.at(r, c)) permuted.set(r, perm[c], true);

    for (const double lambda : {0.0, 5.0}) {
        auto [base, base_dec] = reg_feature_reconstruct(g, p, weights, 0.1, lambda);
        auto [moved, moved_dec] =
            reg_feature_reconstruct(g, permuted, weights, 0.1, lambda);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(std::abs(moved.values(perm[i], 0) - base.values(i, 0)) < 1e-8);
            CHECK(moved_dec.labels[perm[i]] == base_dec.labels[i]);
        }
    }
}

TEST_CASE("prefixes recover the planted features exactly once they reach full rank") {
    const std::size_t rounds = 20, clients = 6;
    const ParticipationMatrix p = ParticipationMatrix::sample(rounds, clients, 0.5, 404);
    const std::vector<double> planted = {3.0, -3.0, 3.0, -3.0, 3.0, -3.0};
    const Matrix g = exact_aggregates(p, planted);

    bool reached_full_rank = false;
    for (std::size_t r = 2; r <= rounds; ++r) {
        const ParticipationMatrix pre = p.prefix(r);
        Matrix gpre(r, 1);
        for (std::size_t k = 0; k < r; ++k) gpre(k, 0) = g(k, 0);

        auto [profile, decision] = ols_feature_reconstruct(gpre, pre, 0.0);
        if (reached_full_rank) {
            // rank never drops as rounds accumulate
            CHECK_FALSE(profile.rank_deficient);
        }
        if (!profile.rank_deficient) {
            reached_full_rank = true;
            for (std::size_t i = 0; i < clients; ++i)
                CHECK(std::abs(profile.values(i, 0) - planted[i]) < 1e-10);
        }
    }
    CHECK(reached_full_rank);
}

TEST_CASE("constant per-client updates make the update-space route exact") {
    const std::vector<std::vector<double>> updates = {
        {1.0, 2.0, 0.5}, {-1.0, 0.0, 1.0}, {0.5, -2.0, -0.5}, {2.0, 1.0, -0.5}};
    const std::vector<double> alpha = {1.0, 0.5, -1.0};
    const double beta = -0.25;

    fedsim::AttackerView view;
    view.participation = schedule_from(4, kFullRankRows);
    std::vector<detector::DetectorModel> dets;
    for (std::size_t r = 0; r < view.participation.rounds(); ++r) {
        std::vector<double> sum(3, 0.0);
        const auto members = view.participation.participants(r);
        for (std::size_t c : members)
            for (std::size_t j = 0; j < 3; ++j) sum[j] += updates[c][j];
        view.rounds.push_back({r, members, sum, {}});
        dets.push_back({r, alpha, beta, 1});
    }

    const Decision d = baseline_reconstruct(view, dets);
    CHECK(d.method == Method::baseline);
    CHECK_FALSE(d.rank_deficient);
    const std::vector<bool> expect_label = {true, false, false, true};
    for (std::size_t i = 0; i < 4; ++i) {
        double score = beta;
        for (std::size_t j = 0; j < 3; ++j) score += alpha[j] * updates[i][j];
        CHECK(d.tau[i] == doctest::Approx(ref_sigmoid(score)).epsilon(1e-9));
        CHECK(d.labels[i] == expect_label[i]);
    }

    SUBCASE("an empty view is rejected") {
        fedsim::AttackerView empty;
        CHECK_THROWS_AS(baseline_reconstruct(empty, dets), std::invalid_argument);
    }
}

TEST_CASE("a lone client's update is read back verbatim by the baseline") {
    fedsim::AttackerView view;
    view.participation = schedule_from(1, {{0}, {0}, {0}});
    const std::vector<double> u = {0.25, -1.0};
    std::vector<detector::DetectorModel> dets;
    for (std::size_t r = 0; r < 3; ++r) {
        view.rounds.push_back({r, {0}, u, {}});
        dets.push_back({r, {2.0, 1.0}, 0.1, 1});
    }
    const Decision d = baseline_reconstruct(view, dets);
    REQUIRE(d.tau.size() == 1);
    CHECK(d.tau[0] == doctest::Approx(ref_sigmoid(2.0 * 0.25 - 1.0 + 0.1)).epsilon(1e-9));
    CHECK_FALSE(d.labels[0]);
}

TEST_CASE("score noise scales with the detector norm only on the update-space route") {
    const std::vector<double> norms = {1.0, 3.0, 10.0};
    const auto dense = reconstruction_error_ratio(norms, 1, 0.05, 300, 99);
    REQUIRE(dense.size() == 3);
    for (std::size_t k = 0; k < dense.size(); ++k) {
        CHECK(dense[k].reference == doctest::Approx(norms[k]).epsilon(1e-12));
        CHECK(dense[k].feature_route_error > 0.0);
        // the measured amplification stays within a factor of two of ||alpha||
        CHECK(dense[k].ratio > 0.5 * dense[k].reference);
        CHECK(dense[k].ratio < 2.0 * dense[k].reference);
        if (k > 0) CHECK(dense[k].update_route_error > dense[k - 1].update_route_error);
    }

    // a one-hot detector of the same norm behaves the same way
    const auto sparse = reconstruction_error_ratio(norms, 1, 0.05, 300, 99, true);
    for (std::size_t k = 0; k < sparse.size(); ++k) {
        CHECK(sparse[k].ratio > 0.5 * sparse[k].reference);
        CHECK(sparse[k].ratio < 2.0 * sparse[k].reference);
    }

    CHECK_THROWS_AS(reconstruction_error_ratio(norms, 2, 0.05, 10, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(reconstruction_error_ratio(norms, 1, 0.05, 0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(reconstruction_error_ratio(norms, 1, 0.0, 10, 1),
                    std::invalid_argument);
}
