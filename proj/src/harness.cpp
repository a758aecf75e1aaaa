#include "fedprop/harness.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include "fedprop/idx.hpp"
#include "fedprop/rng.hpp"

namespace fedprop::harness {

namespace {

// Stream tags keeping every stage's randomness independent of the others.
constexpr std::uint64_t kTaskStream = 0x11;
constexpr std::uint64_t kPoolStream = 0x12;
constexpr std::uint64_t kAuxStream = 0x13;
constexpr std::uint64_t kTargetStream = 0x14;
constexpr std::uint64_t kRoleStream = 0x15;
constexpr std::uint64_t kFederationStream = 0x16;
constexpr std::uint64_t kDetectorSetStream = 0x17;
constexpr std::uint64_t kDetectorTrainStream = 0x18;

// Runs one pipeline stage and prefixes any failure with the stage name, so
// a run that dies deep inside a solver still says which step was at fault.
template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::exception& e) {
        throw std::runtime_error(name + ": " + e.what());
    }
}

std::string seed_tag(std::uint64_t seed) { return "seed " + std::to_string(seed); }

fedsim::ClientRole planted_role(detector::Property property) {
    switch (property) {
        case detector::Property::membership: return fedsim::ClientRole::member_positive;
        case detector::Property::inversion: return fedsim::ClientRole::inversion_attacker;
        case detector::Property::ascent: return fedsim::ClientRole::ascent_attacker;
    }
    throw std::invalid_argument("unknown property");
}

// Relabels a decision to mark exactly the k highest-confidence clients,
// ties toward the lower id, mirroring the joint solver's top-k rule.
void apply_top_k(reconstruct::Decision& decision, std::size_t k) {
    const auto& tau = decision.tau;
    if (k > tau.size()) throw std::invalid_argument("top-k: k exceeds client count");
    std::vector<std::size_t> order(tau.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return tau[a] > tau[b]; });
    decision.labels.assign(tau.size(), false);
    for (std::size_t j = 0; j < k; ++j) decision.labels[order[j]] = true;
    decision.threshold = (k == 0) ? 1.0 : tau[order[k - 1]];
}

}  // namespace

std::vector<std::size_t> evaluation_rounds(std::size_t rounds, std::size_t cadence) {
    if (cadence == 0) throw std::invalid_argument("evaluation cadence must be positive");
    std::vector<std::size_t> out;
    for (std::size_t e = cadence; e <= rounds; e += cadence) out.push_back(e);
    if (rounds > 0 && (out.empty() || out.back() != rounds)) out.push_back(rounds);
    return out;
}

SeedInputs prepare_seed(const ExperimentConfig& config, std::uint64_t seed) {
    validate(config);
    SeedInputs out;
    const std::size_t clients = config.clients;

    std::vector<fedsim::Sample> pool;
    if (config.dataset.kind == "blobs") {
        fedsim::BlobTask task(config.dataset.blobs, derive_seed(seed, kTaskStream));
        Rng pool_rng(derive_seed(seed, kPoolStream));
        pool = task.draw_many(config.client_samples * clients, pool_rng);
        Rng aux_rng(derive_seed(seed, kAuxStream));
        out.aux = task.draw_many(config.aux_samples, aux_rng);
        Rng target_rng(derive_seed(seed, kTargetStream));
        out.target = task.draw(target_rng);
    } else {
        auto all = load_idx(config.dataset.idx_images, config.dataset.idx_labels);
        const std::size_t need = config.client_samples * clients + config.aux_samples + 1;
        if (all.size() < need) {
            throw std::runtime_error("idx dataset holds " + std::to_string(all.size()) +
                                     " samples but the config needs " + std::to_string(need));
        }
        if (all[0].features.size() != config.dims.input) {
            throw std::runtime_error("idx feature size " +
                                     std::to_string(all[0].features.size()) +
                                     " does not match dims.input " +
                                     std::to_string(config.dims.input));
        }
        for (const auto& s : all) {
            if (s.label < 0 || std::size_t(s.label) >= config.dims.classes) {
                throw std::runtime_error("idx label " + std::to_string(s.label) +
                                         " outside dims.classes " +
                                         std::to_string(config.dims.classes));
            }
        }
        Rng shuffle_rng(derive_seed(seed, kPoolStream));
        std::shuffle(all.begin(), all.end(), shuffle_rng);
        pool.assign(all.begin(), all.begin() + std::ptrdiff_t(config.client_samples * clients));
        out.aux.assign(all.begin() + std::ptrdiff_t(config.client_samples * clients),
                       all.begin() + std::ptrdiff_t(need - 1));
        out.target = all[need - 1];
    }
    out.datasets = fedsim::split_among_clients(pool, clients);

    // plant the property on a random subset of clients
    out.roles.assign(clients, fedsim::ClientRole::honest);
    out.truth.assign(clients, false);
    std::vector<std::size_t> ids(clients);
    std::iota(ids.begin(), ids.end(), 0);
    Rng role_rng(derive_seed(seed, kRoleStream));
    const std::size_t planted = positive_count(config);
    for (std::size_t i = 0; i < planted; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, clients - 1);
        std::swap(ids[i], ids[pick(role_rng)]);
        out.roles[ids[i]] = planted_role(config.property);
        out.truth[ids[i]] = true;
    }

    if (config.property == detector::Property::membership) {
        // the probe sample replaces one record so dataset sizes stay equal
        for (std::size_t i = 0; i < clients; ++i) {
            if (out.truth[i]) out.datasets[i].samples[0] = out.target;
        }
    }
    return out;
}

SimulationOutput simulate_seed(const ExperimentConfig& config, std::uint64_t seed,
                               Exec exec) {
    auto inputs = stage("dataset stage (" + seed_tag(seed) + ")",
                        [&] { return prepare_seed(config, seed); });
    fedsim::FederationConfig fed;
    fed.rounds = config.rounds;
    fed.clients = config.clients;
    fed.participation_fraction = config.participation;
    fed.dims = config.dims;
    fed.eta = config.eta_global;
    fed.epochs = config.epochs;
    fed.batch_size = config.batch_size;
    fed.use_secagg = config.use_secagg;
    fed.secagg_scale = config.secagg_scale;
    auto result = stage("simulate stage (" + seed_tag(seed) + ")", [&] {
        return fedsim::run_federation(fed, inputs.datasets, inputs.roles,
                                      derive_seed(seed, kFederationStream), exec);
    });
    return {seed, std::move(inputs.truth), std::move(result.view)};
}

SeedOutcome attack_view(const ExperimentConfig& config, std::uint64_t seed,
                        const fedsim::AttackerView& view,
                        const std::vector<bool>& truth, Exec exec) {
    validate(config);
    if (!(view.dims == config.dims)) {
        throw std::runtime_error("attack stage (" + seed_tag(seed) +
                                 "): view model dims do not match the config");
    }
    if (view.participation.clients() != config.clients) {
        throw std::runtime_error("attack stage (" + seed_tag(seed) +
                                 "): view has a different client count than the config");
    }
    if (truth.size() != config.clients) {
        throw std::runtime_error("attack stage (" + seed_tag(seed) +
                                 "): truth length does not match client count");
    }
    const std::size_t rounds = view.rounds.size();
    if (rounds == 0) {
        throw std::runtime_error("attack stage (" + seed_tag(seed) + "): view has no rounds");
    }

    auto inputs = stage("dataset stage (" + seed_tag(seed) + ")",
                        [&] { return prepare_seed(config, seed); });

    SeedOutcome out;
    out.seed = seed;
    out.truth = truth;
    out.view = view;
    out.detectors.reserve(rounds);
    out.distributions.reserve(rounds);

    detector::TrainingSetSpec set_spec;
    set_spec.property = config.property;
    set_spec.target = inputs.target;
    set_spec.eta = config.eta_global;
    set_spec.epochs = config.epochs;
    set_spec.batch_size = config.batch_size;
    set_spec.example_size = config.example_size;
    set_spec.count = detector_example_count(config);
    detector::DetectorTrainParams train_params;
    train_params.eta = config.eta_detector;
    train_params.epochs = config.detector_epochs;
    train_params.batch_size = config.detector_batch;

    for (std::size_t r = 0; r < rounds; ++r) {
        auto tag = "detector stage (" + seed_tag(seed) + ", round " + std::to_string(r) + ")";
        stage(tag, [&] {
            fedsim::GlobalModel snapshot(config.dims);
            snapshot.set_params(view.rounds[r].snapshot);
            auto set = detector::build_training_set(inputs.aux, snapshot, set_spec,
                                                    derive_seed(seed, kDetectorSetStream, r));
            auto det = detector::train_detector(set, train_params,
                                                derive_seed(seed, kDetectorTrainStream, r), r);
            out.distributions.push_back(detector::fit_distributions(det, set));
            out.detectors.push_back(std::move(det));
        });
    }

    const auto eval_points = evaluation_rounds(rounds, config.eval_cadence);
    const std::size_t planted = positive_count(config);
    const bool top_k = config.decision_rule == "topk";
    const bool wants_reg =
        std::find(config.methods.begin(), config.methods.end(),
                  reconstruct::Method::reg) != config.methods.end();
    const bool wants_prolin =
        std::find(config.methods.begin(), config.methods.end(),
                  reconstruct::Method::prolin) != config.methods.end();

    for (std::size_t e : eval_points) {
        auto tag = "reconstruct stage (" + seed_tag(seed) + ", round " + std::to_string(e) + ")";
        stage(tag, [&] {
            auto prefix = view.prefix(e);
            std::vector<detector::DetectorModel> dets(out.detectors.begin(),
                                                      out.detectors.begin() + std::ptrdiff_t(e));
            auto aggregates = reconstruct::feature_aggregates(prefix, dets);
            double bias = reconstruct::mean_bias(dets);
            std::vector<double> weights(e);
            for (std::size_t r = 0; r < e; ++r) weights[r] = out.distributions[r].weight;

            // the ridge profile doubles as the joint solver's anchor, so
            // compute it once whenever either consumer asked for it
            std::pair<reconstruct::FeatureProfile, reconstruct::Decision> reg_result;
            if (wants_reg || wants_prolin) {
                reg_result = reconstruct::reg_feature_reconstruct(
                    aggregates, prefix.participation, weights, bias, config.lambda,
                    config.threshold, exec);
            }

            for (auto method : config.methods) {
                DecisionRecord record;
                record.round = e;
                switch (method) {
                    case reconstruct::Method::baseline: {
                        record.decision = reconstruct::baseline_reconstruct(
                            prefix, dets, config.threshold, exec);
                        break;
                    }
                    case reconstruct::Method::ols: {
                        auto [profile, decision] = reconstruct::ols_feature_reconstruct(
                            aggregates, prefix.participation, bias, config.threshold, exec);
                        record.decision = std::move(decision);
                        record.profile.assign(profile.values.data().begin(),
                                              profile.values.data().end());
                        break;
                    }
                    case reconstruct::Method::reg: {
                        record.decision = reg_result.second;
                        record.profile.assign(reg_result.first.values.data().begin(),
                                              reg_result.first.values.data().end());
                        break;
                    }
                    case reconstruct::Method::prolin: {
                        prolin::ProlinProblem problem;
                        problem.participation = prefix.participation;
                        problem.aggregates = aggregates;
                        problem.anchor = reg_result.first.values;
                        problem.distributions.assign(
                            out.distributions.begin(),
                            out.distributions.begin() + std::ptrdiff_t(e));
                        problem.bias = bias;
                        auto init = prolin::initialize(problem, prolin::InitMode::warm);
                        auto solved = prolin::solve(problem, init, config.optimizer, exec);
                        record.decision =
                            top_k ? prolin::top_k_decision(solved.state, planted)
                                  : prolin::to_decision(solved.state, config.threshold);
                        record.profile.assign(config.clients, 0.0);
                        for (std::size_t i = 0; i < config.clients; ++i) {
                            auto mine = problem.participation.rounds_of(i);
                            if (mine.empty()) continue;
                            double sum = 0.0;
                            for (std::size_t r : mine) sum += solved.state.x(r, i, 0);
                            record.profile[i] = sum / double(mine.size());
                        }
                        if (e == eval_points.back()) {
                            out.prolin_trace = solved.trace.objective;
                        }
                        break;
                    }
                }
                if (top_k && method != reconstruct::Method::prolin) {
                    apply_top_k(record.decision, planted);
                }
                auto scores = score_labels(record.decision.labels, truth);
                MetricRow row;
                row.seed = std::to_string(seed);
                row.method = reconstruct::method_name(method);
                row.round = e;
                row.precision = scores.precision;
                row.recall = scores.recall;
                row.f1 = scores.f1;
                out.metrics.push_back(std::move(row));
                out.decisions.push_back(std::move(record));
            }
        });
    }
    return out;
}

SeedOutcome run_seed(const ExperimentConfig& config, std::uint64_t seed, Exec exec) {
    auto sim = simulate_seed(config, seed, exec);
    return attack_view(config, seed, sim.view, sim.truth, exec);
}

ExperimentResult run_experiment(const ExperimentConfig& config, Exec exec) {
    validate(config);
    ExperimentResult out;
    out.config = config;
    out.seeds.reserve(config.seeds.size());
    // seeds are independent; they run one after another so a failure
    // propagates cleanly, and the kernels below fan out instead
    for (std::uint64_t seed : config.seeds) {
        out.seeds.push_back(run_seed(config, seed, exec));
    }
    return out;
}

std::vector<MetricRow> collect_metrics(const ExperimentResult& result) {
    std::vector<MetricRow> rows;
    for (const auto& outcome : result.seeds) {
        rows.insert(rows.end(), outcome.metrics.begin(), outcome.metrics.end());
    }
    return with_mean_rows(std::move(rows));
}

}  // namespace fedprop::harness
