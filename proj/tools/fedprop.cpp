// Command-line front end: simulate federations, attack stored runs, run the
// whole pipeline, export plot series, and exercise the brute-force oracles.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedprop/archive.hpp"
#include "fedprop/config.hpp"
#include "fedprop/harness.hpp"
#include "fedprop/matrix.hpp"
#include "fedprop/reconstruct.hpp"
#include "fedprop/rng.hpp"
#include "fedprop/secagg.hpp"
#include "fedprop/solvers.hpp"

using namespace fedprop;
using harness::ExperimentConfig;

namespace {

// Every config knob as an optional override, layered on top of a preset or
// a loaded JSON file, so `--config run.json --lambda 2` does what it reads as.
struct ConfigCli {
    std::string preset = "desk";
    std::string config_path;
    std::vector<std::uint64_t> seeds;

    std::optional<std::string> name;
    std::optional<std::size_t> rounds, clients;
    std::optional<double> participation, positive_fraction;
    std::optional<std::string> property, decision_rule, dataset_kind;
    std::optional<std::vector<std::string>> methods;
    std::optional<std::size_t> blob_dim;
    std::optional<double> blob_separation;
    std::optional<std::string> idx_images, idx_labels;
    std::optional<std::size_t> dim_input, dim_hidden, dim_classes;
    std::optional<std::size_t> client_samples, aux_samples, example_size;
    std::optional<double> eta_global, eta_detector, lambda, threshold;
    std::optional<std::size_t> epochs, batch_size, detector_epochs, detector_batch;
    std::optional<bool> use_secagg;
    std::optional<std::uint64_t> secagg_scale;
    std::optional<std::size_t> eval_cadence;
    std::optional<double> opt_step, opt_momentum;
    std::optional<std::size_t> opt_max_iters;
    std::optional<std::string> output_dir;

    void register_on(CLI::App* cmd) {
        cmd->add_option("--preset", preset, "Start from a preset: desk or full")
            ->check(CLI::IsMember({"desk", "full"}));
        cmd->add_option("--config", config_path, "Load settings from a JSON file");
        cmd->add_option("--seed", seeds, "Seed to run; repeat for several");
        cmd->add_option("--name", name, "Run name used in the archive directory");
        cmd->add_option("--rounds", rounds, "Federation rounds");
        cmd->add_option("--clients", clients, "Number of clients");
        cmd->add_option("--participation", participation, "Fraction selected per round");
        cmd->add_option("--positive-fraction", positive_fraction,
                        "Fraction of clients carrying the property");
        cmd->add_option("--property", property, "membership, inversion, or ascent");
        cmd->add_option("--methods", methods,
                        "Reconstruction methods (baseline ols reg prolin)");
        cmd->add_option("--dataset", dataset_kind, "blobs or idx");
        cmd->add_option("--blob-dim", blob_dim, "Synthetic feature dimension");
        cmd->add_option("--blob-separation", blob_separation, "Class mean distance");
        cmd->add_option("--idx-images", idx_images, "IDX image file");
        cmd->add_option("--idx-labels", idx_labels, "IDX label file");
        cmd->add_option("--input", dim_input, "Model input width");
        cmd->add_option("--hidden", dim_hidden, "Model hidden width");
        cmd->add_option("--classes", dim_classes, "Model class count");
        cmd->add_option("--client-samples", client_samples, "Samples per client");
        cmd->add_option("--aux-samples", aux_samples, "Server-side pool size");
        cmd->add_option("--example-size", example_size, "Samples per synthesized update");
        cmd->add_option("--eta-global", eta_global, "Client learning rate");
        cmd->add_option("--eta-detector", eta_detector, "Scorer learning rate");
        cmd->add_option("--epochs", epochs, "Client local epochs");
        cmd->add_option("--batch-size", batch_size, "Client batch size");
        cmd->add_option("--detector-epochs", detector_epochs, "Scorer training epochs");
        cmd->add_option("--detector-batch", detector_batch, "Scorer batch size");
        cmd->add_flag("--secagg,!--no-secagg", use_secagg, "Mask aggregates");
        cmd->add_option("--secagg-scale", secagg_scale, "Fixed-point scale");
        cmd->add_option("--lambda", lambda, "Ridge regularization");
        cmd->add_option("--threshold", threshold, "Decision threshold on tau");
        cmd->add_option("--rule", decision_rule, "threshold or topk");
        cmd->add_option("--cadence", eval_cadence, "Rounds between evaluations");
        cmd->add_option("--step", opt_step, "Joint solver step size");
        cmd->add_option("--momentum", opt_momentum, "Joint solver momentum");
        cmd->add_option("--max-iters", opt_max_iters, "Joint solver iteration cap");
        cmd->add_option("--out", output_dir, "Directory to write archives under");
    }

    void apply_overrides(ExperimentConfig& c) const {
        auto put = [](const auto& src, auto& dst) {
            if (src) dst = *src;
        };
        put(name, c.name);
        put(rounds, c.rounds);
        put(clients, c.clients);
        put(participation, c.participation);
        put(positive_fraction, c.positive_fraction);
        if (property) c.property = harness::parse_property(*property);
        if (methods) {
            c.methods.clear();
            for (const auto& m : *methods) c.methods.push_back(harness::parse_method(m));
        }
        if (!seeds.empty()) c.seeds = seeds;
        put(dataset_kind, c.dataset.kind);
        put(blob_dim, c.dataset.blobs.dim);
        put(blob_separation, c.dataset.blobs.separation);
        put(idx_images, c.dataset.idx_images);
        put(idx_labels, c.dataset.idx_labels);
        put(dim_input, c.dims.input);
        put(dim_hidden, c.dims.hidden);
        put(dim_classes, c.dims.classes);
        put(client_samples, c.client_samples);
        put(aux_samples, c.aux_samples);
        put(example_size, c.example_size);
        put(eta_global, c.eta_global);
        put(eta_detector, c.eta_detector);
        put(epochs, c.epochs);
        put(batch_size, c.batch_size);
        put(detector_epochs, c.detector_epochs);
        put(detector_batch, c.detector_batch);
        put(use_secagg, c.use_secagg);
        put(secagg_scale, c.secagg_scale);
        put(lambda, c.lambda);
        put(threshold, c.threshold);
        put(decision_rule, c.decision_rule);
        put(eval_cadence, c.eval_cadence);
        put(opt_step, c.optimizer.step);
        put(opt_momentum, c.optimizer.momentum);
        put(opt_max_iters, c.optimizer.max_iters);
        put(output_dir, c.output_dir);
    }

    ExperimentConfig build() const {
        ExperimentConfig c = (preset == "full") ? harness::full_config()
                                                : harness::desk_config();
        if (!config_path.empty()) c = harness::load_config(config_path);
        apply_overrides(c);
        harness::validate(c);
        return c;
    }
};

void print_round_summary(const harness::ExperimentResult& result) {
    if (result.seeds.empty()) return;
    auto rows = harness::collect_metrics(result);
    std::size_t last = 0;
    for (const auto& r : rows) last = std::max(last, r.round);
    std::printf("final evaluation (round %zu, averaged over %zu seeds):\n", last,
                result.seeds.size());
    for (const auto& r : rows) {
        if (r.seed == "mean" && r.round == last) {
            std::printf("  %-9s precision %.3f  recall %.3f  f1 %.3f\n", r.method.c_str(),
                        r.precision, r.recall, r.f1);
        }
    }
}

int cmd_simulate(const ConfigCli& cli, const std::string& dir_flag, Exec exec) {
    auto config = cli.build();
    harness::ExperimentResult result;
    result.config = config;
    for (auto seed : config.seeds) {
        std::printf("seed %llu: simulating %zu rounds...\n",
                    (unsigned long long)seed, config.rounds);
        std::fflush(stdout);
        auto sim = harness::simulate_seed(config, seed, exec);
        harness::SeedOutcome outcome;
        outcome.seed = sim.seed;
        outcome.truth = std::move(sim.truth);
        outcome.view = std::move(sim.view);
        result.seeds.push_back(std::move(outcome));
    }
    std::string dir = dir_flag.empty() ? harness::archive_dir_name(config) : dir_flag;
    harness::write_archive(result, dir);
    std::printf("archive written to %s\n", dir.c_str());
    return 0;
}

int cmd_attack(const ConfigCli& cli, const std::string& archive, Exec exec) {
    auto loaded = harness::read_archive(archive);
    auto config = loaded.config;
    cli.apply_overrides(config);
    harness::validate(config);
    harness::ExperimentResult result;
    result.config = config;
    for (const auto& seed : loaded.seeds) {
        std::printf("seed %llu: attacking %zu recorded rounds...\n",
                    (unsigned long long)seed.seed, seed.view.rounds.size());
        std::fflush(stdout);
        result.seeds.push_back(
            harness::attack_view(config, seed.seed, seed.view, seed.truth, exec));
    }
    harness::write_archive(result, archive);
    print_round_summary(result);
    std::printf("archive updated at %s\n", archive.c_str());
    return 0;
}

int cmd_run(const ConfigCli& cli, const std::string& dir_flag, Exec exec) {
    auto config = cli.build();
    harness::ExperimentResult result;
    result.config = config;
    for (auto seed : config.seeds) {
        std::printf("seed %llu: simulating %zu rounds...\n",
                    (unsigned long long)seed, config.rounds);
        std::fflush(stdout);
        auto sim = harness::simulate_seed(config, seed, exec);
        std::printf("seed %llu: training %zu detectors and reconstructing...\n",
                    (unsigned long long)seed, sim.view.rounds.size());
        std::fflush(stdout);
        result.seeds.push_back(
            harness::attack_view(config, seed, sim.view, sim.truth, exec));
    }
    std::string dir = dir_flag.empty() ? harness::archive_dir_name(config) : dir_flag;
    harness::write_archive(result, dir);
    print_round_summary(result);
    std::printf("archive written to %s\n", dir.c_str());
    return 0;
}

int cmd_export(const std::string& archive, const std::string& series,
               const std::vector<std::size_t>& rounds) {
    harness::export_plot_data(archive, series, rounds);
    std::printf("wrote %s/plots/%s\n", archive.c_str(),
                series == "f1" ? "f1_<method>.csv" : (series + ".csv").c_str());
    return 0;
}

// Brute-force self-checks, usable without any archive.
int cmd_oracle(std::uint64_t seed, std::size_t trials) {
    bool all_ok = true;
    auto report = [&](bool ok, const std::string& line) {
        std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", line.c_str());
        all_ok = all_ok && ok;
    };

    {  // least squares recovers a planted solution
        Rng rng(derive_seed(seed, 1));
        std::normal_distribution<double> gauss;
        linalg::Matrix a(24, 8), x(8, 2);
        for (double& v : a.data()) v = gauss(rng);
        for (double& v : x.data()) v = gauss(rng);
        auto b = linalg::matmul(a, x);
        auto solved = linalg::ols_solve(a, b);
        double err = 0.0;
        for (std::size_t i = 0; i < x.data().size(); ++i) {
            err = std::max(err, std::abs(solved.solution.data()[i] - x.data()[i]));
        }
        report(err < 1e-8, "least squares recovers a planted 24x8 system, max error " +
                               harness::format_double(err));
    }

    {  // masked aggregation equals the plain sum
        Rng rng(derive_seed(seed, 2));
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        const std::uint64_t scale = 1 << 16;
        const std::size_t width = 256, parties = 5;
        bool ok = true;
        for (std::size_t rep = 0; rep < 20 && ok; ++rep) {
            std::vector<std::vector<double>> updates(parties, std::vector<double>(width));
            std::vector<double> plain(width, 0.0);
            for (auto& u : updates) {
                for (std::size_t i = 0; i < width; ++i) {
                    u[i] = unit(rng);
                    plain[i] += u[i];
                }
            }
            auto p = secagg::choose_modulus(1.0, scale, parties);
            auto masks = secagg::generate_masks({0, 1, 2, 3, 4}, width, p, rng());
            std::vector<secagg::MaskedUpdate> sent;
            for (std::size_t c = 0; c < parties; ++c) {
                sent.push_back(secagg::mask_update(
                    secagg::encode_fixed_point(updates[c], scale, p, parties), masks, c, 0));
            }
            auto decoded =
                secagg::decode_fixed_point(secagg::aggregate_masked(sent, masks), scale, p);
            for (std::size_t i = 0; i < width; ++i) {
                ok = ok && std::abs(decoded[i] - plain[i]) <= double(parties) / double(scale);
            }
        }
        report(ok, "masked aggregation matches plain sums within quantization");
    }

    {  // error-ratio study reproduces the norm-proportional gap
        std::vector<double> norms = {1.0, 3.0, 10.0};
        auto rows = reconstruct::reconstruction_error_ratio(norms, 1, 0.05, trials,
                                                            derive_seed(seed, 3));
        bool ok = true;
        std::string detail;
        for (const auto& row : rows) {
            ok = ok && row.ratio > row.reference / 2.0 && row.ratio < row.reference * 2.0;
            detail += " " + harness::format_double(row.alpha_norm) + "->" +
                      harness::format_double(row.ratio);
        }
        report(ok, "update-space error exceeds feature-space by the score norm:" + detail);
    }

    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"property inference from aggregated federated updates"};
    app.require_subcommand(1);
    bool serial = false;
    app.add_flag("--serial", serial, "Run kernels on the single-threaded reference path");

    ConfigCli sim_cli, run_cli, attack_cli;
    std::string sim_dir, run_dir, attack_archive, export_archive, export_series = "f1";
    std::vector<std::size_t> export_rounds;
    std::uint64_t oracle_seed = 1;
    std::size_t oracle_trials = 100;

    auto* sim = app.add_subcommand("simulate", "Run the federation and store the view");
    sim_cli.register_on(sim);
    sim->add_option("--dir", sim_dir, "Exact archive directory (default: timestamped)");

    auto* attack = app.add_subcommand("attack", "Reconstruct from a stored archive");
    attack->add_option("--archive", attack_archive, "Archive directory to attack")
        ->required();
    attack_cli.register_on(attack);

    auto* run = app.add_subcommand("run", "Simulate and attack end to end");
    run_cli.register_on(run);
    run->add_option("--dir", run_dir, "Exact archive directory (default: timestamped)");

    auto* exp = app.add_subcommand("export", "Write plot-ready CSV series");
    exp->add_option("--archive", export_archive, "Archive directory")->required();
    exp->add_option("--series", export_series, "f1, ovl, or dist");
    exp->add_option("--round", export_rounds, "Round for dist; repeatable");

    auto* oracle = app.add_subcommand("oracle", "Run the brute-force verification suite");
    oracle->add_option("--seed", oracle_seed, "Oracle seed");
    oracle->add_option("--trials", oracle_trials, "Monte-Carlo trials");

    CLI11_PARSE(app, argc, argv);
    Exec exec = serial ? Exec::serial : Exec::parallel;

    try {
        if (sim->parsed()) return cmd_simulate(sim_cli, sim_dir, exec);
        if (attack->parsed()) return cmd_attack(attack_cli, attack_archive, exec);
        if (run->parsed()) return cmd_run(run_cli, run_dir, exec);
        if (exp->parsed()) return cmd_export(export_archive, export_series, export_rounds);
        if (oracle->parsed()) return cmd_oracle(oracle_seed, oracle_trials);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
