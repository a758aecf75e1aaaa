#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedprop/harness.hpp"

namespace fedprop::harness {

// JSON form of the attacker-visible record.  The object holds exactly the
// keys {dims, participation, rounds}, each round exactly {round,
// participants, aggregate, snapshot}; per-client updates and role labels
// never appear here, which the isolation tests assert key by key.
std::string view_to_json(const fedsim::AttackerView& view);
fedsim::AttackerView view_from_json(const std::string& text);

// Directory layout written for one experiment:
//   manifest.json           config, seed list, per-seed role assignment
//   metrics.csv             per-seed rows plus cross-seed "mean" rows
//   seed-<s>/view.json      attacker-visible record of the run
//   seed-<s>/detectors.txt  per-round scorer and feature-distribution fits
//   seed-<s>/decisions.csv  confidences and labels at each evaluation point
//   seed-<s>/trace.csv      joint-solver objective at the last evaluation point
void write_archive(const ExperimentResult& result, const std::string& dir);

// Default directory name for a fresh run: <output_dir>/<name>-<UTC stamp>-seed<first>.
std::string archive_dir_name(const ExperimentConfig& config);

// What the attack half needs back from disk.
struct LoadedSeed {
    std::uint64_t seed = 0;
    std::vector<bool> truth;
    fedsim::AttackerView view;
};

struct LoadedArchive {
    ExperimentConfig config;
    std::vector<LoadedSeed> seeds;
};

LoadedArchive read_archive(const std::string& dir);

// Writes plot-ready CSV series under <dir>/plots.  Selectors:
//   "f1"    one file per method: round, mean_f1, std_f1 over seeds
//   "ovl"   round, ovl (averaged over seeds)
//   "dist"  per requested round: seed, round, mu/sigma of both fits, ovl
// Missing inputs fail loudly, listing exactly what was not found.
void export_plot_data(const std::string& dir, const std::string& selector,
                      const std::vector<std::size_t>& rounds = {});

}  // namespace fedprop::harness
