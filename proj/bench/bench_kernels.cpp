// Timing comparison of the parallel kernels against the serial reference
// paths that the tests pin behavior to.  Prints a table and verifies the
// two modes produce bitwise-identical output, which the fixed-fan-in
// reductions are supposed to guarantee.

#include <omp.h>

#include <cstdio>
#include <cstring>
#include <random>
#include <span>
#include <vector>

#include <fedprop/config.hpp>
#include <fedprop/detector.hpp>
#include <fedprop/federation.hpp>
#include <fedprop/harness.hpp>
#include <fedprop/matrix.hpp>
#include <fedprop/participation.hpp>
#include <fedprop/prolin.hpp>
#include <fedprop/rng.hpp>
#include <fedprop/solvers.hpp>

using namespace fedprop;

namespace {

struct Timing {
    double serial_ms = 0;
    double parallel_ms = 0;
    bool identical = false;
};

template <typename Fn>
double time_ms(Fn&& fn, int reps) {
    fn();  // warm up
    const double start = omp_get_wtime();
    for (int i = 0; i < reps; ++i) fn();
    return (omp_get_wtime() - start) * 1000.0 / reps;
}

void print_row(const char* name, const Timing& t) {
    std::printf("%-28s %10.3f %12.3f %9.2fx   %s\n", name, t.serial_ms, t.parallel_ms,
                t.serial_ms / t.parallel_ms, t.identical ? "identical" : "DIFFERS");
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Timing bench_ridge() {
    Rng rng(11);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    const std::size_t rows = 240, cols = 50;
    linalg::Matrix a(rows, cols), b(rows, 1);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) a(i, j) = val(rng);
        b(i, 0) = val(rng);
    }
    std::vector<double> w(rows);
    for (auto& x : w) x = 0.5 + 0.5 * std::abs(val(rng));

    Timing t;
    linalg::SolveReport rs, rp;
    t.serial_ms = time_ms([&] { rs = linalg::ridge_solve(a, b, w, 5.0, Exec::serial); }, 20);
    t.parallel_ms =
        time_ms([&] { rp = linalg::ridge_solve(a, b, w, 5.0, Exec::parallel); }, 20);
    t.identical = same_bits(rs.solution.data(), rp.solution.data());
    return t;
}

prolin::ProlinProblem desk_problem() {
    Rng rng(12);
    const std::size_t n = 120, clients = 20;
    auto part = fedsim::ParticipationMatrix::sample(n, clients, 0.2, 13);
    std::uniform_real_distribution<double> mu(2.0, 5.0), sd(0.5, 1.5), gv(-6.0, 6.0);
    std::vector<detector::FeatureDistributions> dists(n);
    linalg::Matrix g(n, 1);
    for (std::size_t r = 0; r < n; ++r) {
        auto& d = dists[r];
        d.round = r;
        const double m = mu(rng), s = sd(rng);
        d.mu_plus = {m};
        d.mu_minus = {-m};
        d.sigma_plus = {s};
        d.sigma_minus = {s};
        d.ovl = detector::compute_ovl(m, s, -m, s);
        d.weight = 1.0 - d.ovl;
        g(r, 0) = gv(rng);
    }
    linalg::Matrix anchor(clients, 1);
    for (std::size_t i = 0; i < clients; ++i) anchor(i, 0) = gv(rng) / 3.0;
    return prolin::ProlinProblem{std::move(part), std::move(g), std::move(anchor),
                                 std::move(dists), 0.0};
}

Timing bench_gradient() {
    const auto problem = desk_problem();
    auto state = prolin::initialize(problem, prolin::InitMode::uniform);
    const prolin::GammaWeights gamma{1.0, 1.0, 1.0};

    Timing t;
    prolin::Gradients gs, gp;
    t.serial_ms =
        time_ms([&] { gs = prolin::total_gradient(problem, state, gamma, Exec::serial); }, 50);
    t.parallel_ms = time_ms(
        [&] { gp = prolin::total_gradient(problem, state, gamma, Exec::parallel); }, 50);
    t.identical = same_bits(gs.x.data(), gp.x.data()) &&
                  same_bits(gs.tau, gp.tau);
    return t;
}

Timing bench_objective() {
    const auto problem = desk_problem();
    auto state = prolin::initialize(problem, prolin::InitMode::uniform);

    Timing t;
    prolin::ComponentValues vs, vp;
    t.serial_ms =
        time_ms([&] { vs = prolin::objective_components(problem, state, Exec::serial); }, 50);
    t.parallel_ms = time_ms(
        [&] { vp = prolin::objective_components(problem, state, Exec::parallel); }, 50);
    const double a[3] = {vs.ml, vs.reg, vs.lstsq};
    const double b[3] = {vp.ml, vp.reg, vp.lstsq};
    t.identical = std::memcmp(a, b, sizeof a) == 0;
    return t;
}

Timing bench_federation_round() {
    auto cfg = harness::desk_config();
    cfg.rounds = 10;
    const auto inputs = harness::prepare_seed(cfg, 1);
    fedsim::FederationConfig fed;
    fed.rounds = cfg.rounds;
    fed.clients = cfg.clients;
    fed.participation_fraction = cfg.participation;
    fed.dims = cfg.dims;
    fed.eta = cfg.eta_global;
    fed.epochs = cfg.epochs;
    fed.batch_size = cfg.batch_size;

    Timing t;
    auto run = [&](Exec e) {
        return fedsim::run_federation(fed, inputs.datasets, inputs.roles, 7, e);
    };
    auto rs = run(Exec::serial);
    auto rp = run(Exec::parallel);
    t.serial_ms = time_ms([&] { rs = run(Exec::serial); }, 5);
    t.parallel_ms = time_ms([&] { rp = run(Exec::parallel); }, 5);
    t.identical = true;
    for (std::size_t r = 0; r < rs.view.rounds.size(); ++r)
        t.identical = t.identical && same_bits(rs.view.rounds[r].aggregate,
                                               rp.view.rounds[r].aggregate);
    // amortize to a single round for the table
    t.serial_ms /= static_cast<double>(fed.rounds);
    t.parallel_ms /= static_cast<double>(fed.rounds);
    return t;
}

}  // namespace

int main() {
    std::printf("threads available: %d\n\n", omp_get_max_threads());
    std::printf("%-28s %10s %12s %10s   %s\n", "kernel", "serial ms", "parallel ms",
                "speedup", "outputs");

    print_row("ridge solve 240x50", bench_ridge());
    print_row("joint gradient n=120 N=20", bench_gradient());
    print_row("joint objective n=120 N=20", bench_objective());
    print_row("federation round (desk)", bench_federation_round());

    std::printf("\nserial and parallel paths must agree bitwise; a DIFFERS row is a bug\n");
    return 0;
}
