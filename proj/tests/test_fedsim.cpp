#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "fedprop/dataset.hpp"
#include "fedprop/federation.hpp"
#include "fedprop/model.hpp"
#include "fedprop/participation.hpp"
#include "fedprop/rng.hpp"

using namespace fedprop;
using namespace fedprop::fedsim;

namespace {

std::vector<ClientDataset> blob_clients(std::size_t clients, std::size_t per_client,
                                        const BlobTaskParams& params, std::uint64_t seed) {
    const BlobTask task(params, derive_seed(seed, 1));
    Rng rng(derive_seed(seed, 2));
    return split_among_clients(task.draw_many(clients * per_client, rng), clients);
}

std::vector<Sample> pool_of(const std::vector<ClientDataset>& clients) {
    std::vector<Sample> all;
    for (const auto& c : clients)
        all.insert(all.end(), c.samples.begin(), c.samples.end());
    return all;
}

}  // namespace

TEST_CASE("participation rows hold exactly round(C*N) ones") {
    const auto m = ParticipationMatrix::sample(50, 20, 0.2, 7);
    for (std::size_t r = 0; r < m.rounds(); ++r) CHECK(m.row_count_ones(r) == 4);
}

TEST_CASE("per-client participation frequency approaches C") {
    const std::size_t rounds = 10000;
    const auto m = ParticipationMatrix::sample(rounds, 20, 0.2, 11);
    for (std::size_t client : {0UL, 7UL, 19UL}) {
        const double freq =
            static_cast<double>(m.rounds_of(client).size()) / static_cast<double>(rounds);
        CHECK(std::abs(freq - 0.2) < 0.02);
    }
}

TEST_CASE("participation rejects out-of-range fractions") {
    CHECK_THROWS_AS(ParticipationMatrix::sample(5, 20, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(ParticipationMatrix::sample(5, 20, 1.5, 1), std::invalid_argument);
    CHECK_THROWS_AS(ParticipationMatrix::sample(5, 20, 0.01, 1), std::invalid_argument);
}

TEST_CASE("parameter views and the flat vector are the same storage") {
    GlobalModel m(ModelDims{3, 4, 2});
    CHECK(m.param_count() == 3 * 4 + 4 + 2 * 4 + 2);
    auto v = m.views();
    v.w1[5] = 1.5;
    v.b1[2] = -2.0;
    v.w2[7] = 0.25;
    v.b2[1] = 9.0;
    CHECK(m.params()[5] == 1.5);
    CHECK(m.params()[12 + 2] == -2.0);
    CHECK(m.params()[12 + 4 + 7] == 0.25);
    CHECK(m.params()[12 + 4 + 8 + 1] == 9.0);

    GlobalModel copy(ModelDims{3, 4, 2});
    copy.set_params(m.params());
    CHECK(std::memcmp(copy.params().data(), m.params().data(),
                      m.param_count() * sizeof(double)) == 0);
}

TEST_CASE("a zero-gradient batch produces a zero update") {
    // With the output layer zeroed the class probabilities are uniform, and
    // a batch holding the same point under both labels cancels exactly.
    GlobalModel m = GlobalModel::random_init(ModelDims{2, 6, 2}, 5);
    auto v = m.views();
    for (auto& x : v.w2) x = 0.0;
    for (auto& x : v.b2) x = 0.0;

    ClientDataset data;
    data.samples = {Sample{{0.7, -1.2}, 0}, Sample{{0.7, -1.2}, 1}};
    const auto delta = local_update(m, data, LocalUpdateParams{0.5, 1, 2, 99});
    for (double d : delta) CHECK(d == 0.0);
}

TEST_CASE("analytic loss gradient matches central differences") {
    const ModelDims dims{4, 8, 3};
    GlobalModel m = GlobalModel::random_init(dims, 17);
    Rng rng(18);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Sample> data;
    for (int i = 0; i < 12; ++i) {
        Sample s;
        s.features.resize(4);
        for (auto& f : s.features) f = gauss(rng);
        s.label = static_cast<int>(rng() % 3);
        data.push_back(s);
    }
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});

    std::vector<double> grad(m.param_count());
    m.loss_and_grad(data, idx, grad);

    const double h = 1e-5;
    std::uniform_int_distribution<std::size_t> pick(0, m.param_count() - 1);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t c = pick(rng);
        GlobalModel plus = m, minus = m;
        plus.params()[c] += h;
        minus.params()[c] -= h;
        const double fd = (plus.loss(data, idx) - minus.loss(data, idx)) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad[c]), 1e-6});
        CHECK(std::abs(fd - grad[c]) / denom < 1e-4);
    }
}

TEST_CASE("local updates are bitwise deterministic in the seed") {
    const auto clients = blob_clients(1, 30, BlobTaskParams{}, 23);
    const GlobalModel m = GlobalModel::random_init(ModelDims{8, 16, 2}, 24);
    const LocalUpdateParams lp{0.1, 1, 10, 555};
    const auto a = local_update(m, clients[0], lp);
    const auto b = local_update(m, clients[0], lp);
    CHECK(a == b);
    auto lp2 = lp;
    lp2.seed = 556;
    CHECK(local_update(m, clients[0], lp2) != a);
}

TEST_CASE("inversion is an involution and honest roles pass through") {
    const auto clients = blob_clients(1, 20, BlobTaskParams{}, 31);
    const GlobalModel m = GlobalModel::random_init(ModelDims{8, 16, 2}, 32);
    const LocalUpdateParams lp{0.1, 1, 10, 77};
    const auto u = local_update(m, clients[0], lp);

    auto once = apply_attack(u, ClientRole::inversion_attacker, m, clients[0], lp);
    CHECK(once != u);
    auto twice = apply_attack(once, ClientRole::inversion_attacker, m, clients[0], lp);
    CHECK(twice == u);

    CHECK(apply_attack(u, ClientRole::honest, m, clients[0], lp) == u);
    CHECK(apply_attack(u, ClientRole::member_positive, m, clients[0], lp) == u);
}

TEST_CASE("one-step ascent is the exact negation of one-step descent") {
    const GlobalModel m = GlobalModel::random_init(ModelDims{3, 5, 2}, 41);
    ClientDataset data;
    data.samples = {Sample{{0.3, -0.8, 1.1}, 1}};
    const LocalUpdateParams lp{0.25, 1, 1, 0};

    const auto descent = local_update(m, data, lp);
    const auto ascent =
        apply_attack(descent, ClientRole::ascent_attacker, m, data, lp);
    REQUIRE(ascent.size() == descent.size());
    for (std::size_t i = 0; i < ascent.size(); ++i)
        CHECK(ascent[i] == doctest::Approx(-descent[i]).epsilon(1e-12));

    // and the single step is exactly eta * gradient at the start point
    std::vector<double> grad(m.param_count());
    std::vector<std::size_t> idx{0};
    m.loss_and_grad(data.samples, idx, grad);
    for (std::size_t i = 0; i < ascent.size(); ++i)
        CHECK(ascent[i] == doctest::Approx(lp.eta * grad[i]).epsilon(1e-12));
}

TEST_CASE("recorded aggregates equal the sum of archived per-client updates") {
    const auto clients = blob_clients(10, 20, BlobTaskParams{}, 51);
    FederationConfig cfg;
    cfg.rounds = 12;
    cfg.clients = 10;
    cfg.participation_fraction = 0.3;
    cfg.dims = ModelDims{8, 8, 2};
    const std::vector<ClientRole> roles(10, ClientRole::honest);
    const auto res = run_federation(cfg, clients, roles, 52);

    for (std::size_t r = 0; r < cfg.rounds; ++r) {
        const auto& rec = res.view.rounds[r];
        std::vector<double> sum(rec.aggregate.size(), 0.0);
        for (const auto& u : res.truth.updates[r])
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += u[i];
        for (std::size_t i = 0; i < sum.size(); ++i)
            CHECK(rec.aggregate[i] == doctest::Approx(sum[i]).epsilon(1e-9));
    }
}

TEST_CASE("with identical data and C=1 the model step equals one client's update") {
    // Full-batch passes make the per-client shuffles irrelevant.
    const auto one = blob_clients(1, 12, BlobTaskParams{}, 61);
    std::vector<ClientDataset> clients(4, one[0]);
    for (std::size_t i = 0; i < clients.size(); ++i) clients[i].client_id = i;

    FederationConfig cfg;
    cfg.rounds = 3;
    cfg.clients = 4;
    cfg.participation_fraction = 1.0;
    cfg.dims = ModelDims{8, 6, 2};
    cfg.batch_size = 12;
    const std::vector<ClientRole> roles(4, ClientRole::honest);
    const auto res = run_federation(cfg, clients, roles, 62);

    const auto& rec = res.view.rounds[0];
    const auto& u0 = res.truth.updates[0][0];
    for (std::size_t i = 0; i < u0.size(); ++i)
        CHECK(rec.aggregate[i] / 4.0 == doctest::Approx(u0[i]).epsilon(1e-10));
}

TEST_CASE("federation streams are bitwise deterministic and exec-independent") {
#ifdef _OPENMP
    omp_set_num_threads(4);
#endif
    const auto clients = blob_clients(8, 20, BlobTaskParams{}, 71);
    FederationConfig cfg;
    cfg.rounds = 6;
    cfg.clients = 8;
    cfg.participation_fraction = 0.5;
    cfg.dims = ModelDims{8, 8, 2};
    std::vector<ClientRole> roles(8, ClientRole::honest);
    roles[3] = ClientRole::ascent_attacker;

    const auto a = run_federation(cfg, clients, roles, 72, Exec::parallel);
    const auto b = run_federation(cfg, clients, roles, 72, Exec::parallel);
    const auto c = run_federation(cfg, clients, roles, 72, Exec::serial);
    for (std::size_t r = 0; r < cfg.rounds; ++r) {
        CHECK(a.view.rounds[r].aggregate == b.view.rounds[r].aggregate);
        CHECK(a.view.rounds[r].aggregate == c.view.rounds[r].aggregate);
        CHECK(a.view.rounds[r].snapshot == c.view.rounds[r].snapshot);
        CHECK(a.view.rounds[r].participants == c.view.rounds[r].participants);
    }
}

TEST_CASE("federated training learns the blob task") {
    const BlobTaskParams task{8, 4.0};
    const auto clients = blob_clients(10, 30, task, 81);
    FederationConfig cfg;
    cfg.rounds = 60;
    cfg.clients = 10;
    cfg.participation_fraction = 0.3;
    cfg.dims = ModelDims{8, 32, 2};
    cfg.eta = 0.1;
    const std::vector<ClientRole> roles(10, ClientRole::honest);
    const auto res = run_federation(cfg, clients, roles, 82);
    CHECK(res.final_model.accuracy(pool_of(clients)) > 0.9);
}

TEST_CASE("masked aggregation reproduces the plain sum up to fixed-point error") {
    const auto clients = blob_clients(6, 20, BlobTaskParams{}, 91);
    FederationConfig cfg;
    cfg.rounds = 4;
    cfg.clients = 6;
    cfg.participation_fraction = 0.5;
    cfg.dims = ModelDims{8, 6, 2};

    FederationConfig masked_cfg = cfg;
    masked_cfg.use_secagg = true;

    const std::vector<ClientRole> roles(6, ClientRole::honest);
    const auto plain = run_federation(cfg, clients, roles, 92);
    const auto masked = run_federation(masked_cfg, clients, roles, 92);

    // same seed, same updates in round 0; later rounds drift because the
    // quantized aggregate moves the model slightly differently
    const double tol = 3.0 / static_cast<double>(masked_cfg.secagg_scale);
    const auto& pa = plain.view.rounds[0].aggregate;
    const auto& ma = masked.view.rounds[0].aggregate;
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(std::abs(pa[i] - ma[i]) <= tol);
}

TEST_CASE("attacker view prefixes truncate consistently") {
    const auto clients = blob_clients(6, 20, BlobTaskParams{}, 95);
    FederationConfig cfg;
    cfg.rounds = 10;
    cfg.clients = 6;
    cfg.participation_fraction = 0.5;
    cfg.dims = ModelDims{8, 6, 2};
    const std::vector<ClientRole> roles(6, ClientRole::honest);
    const auto res = run_federation(cfg, clients, roles, 96);

    const auto pre = res.view.prefix(4);
    CHECK(pre.rounds.size() == 4);
    CHECK(pre.participation.rounds() == 4);
    for (std::size_t r = 0; r < 4; ++r) {
        CHECK(pre.rounds[r].aggregate == res.view.rounds[r].aggregate);
        CHECK(pre.participation.participants(r) == res.view.participation.participants(r));
    }
    CHECK_THROWS_AS(res.view.prefix(11), std::invalid_argument);
}
