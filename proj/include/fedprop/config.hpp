#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fedprop/dataset.hpp"
#include "fedprop/detector.hpp"
#include "fedprop/model.hpp"
#include "fedprop/prolin.hpp"
#include "fedprop/reconstruct.hpp"

namespace fedprop::harness {

// Where client training data comes from: seeded Gaussian blobs, or a pair
// of IDX files (images + labels) on disk.
struct DatasetSpec {
    std::string kind = "blobs";  // "blobs" or "idx"
    // closer class means than the generator default: the harder task keeps
    // the global model from converging instantly, which the detection
    // scenarios depend on
    fedsim::BlobTaskParams blobs{.dim = 8, .separation = 1.5};
    std::string idx_images;
    std::string idx_labels;
    bool operator==(const DatasetSpec&) const = default;
};

struct ExperimentConfig {
    std::string name = "desk";

    // federation shape
    std::size_t rounds = 120;         // n
    std::size_t clients = 20;         // N
    double participation = 0.2;       // C, fraction selected each round
    double positive_fraction = 0.1;   // phi, fraction of clients with the property

    detector::Property property = detector::Property::ascent;
    std::vector<reconstruct::Method> methods = {
        reconstruct::Method::baseline, reconstruct::Method::ols,
        reconstruct::Method::reg, reconstruct::Method::prolin};
    std::vector<std::uint64_t> seeds = {1, 2, 3};

    DatasetSpec dataset{};
    fedsim::ModelDims dims{8, 32, 2};
    std::size_t client_samples = 30;  // per client, equal sizes
    std::size_t aux_samples = 6000;   // attacker-side pool, disjoint from clients

    // client-side training; the full-batch local step keeps honest updates
    // close to the population gradient, which the reconstructions rely on
    double eta_global = 0.05;
    std::size_t epochs = 1;
    std::size_t batch_size = 30;
    bool use_secagg = false;
    std::uint64_t secagg_scale = std::uint64_t{1} << 16;

    // per-round scorer training
    double eta_detector = 1e-3;
    std::size_t detector_epochs = 400;
    std::size_t detector_batch = 10;
    std::size_t example_size = 30;  // aux samples behind one synthesized update

    // reconstruction
    double lambda = 5.0;
    double threshold = 0.5;
    std::string decision_rule = "threshold";  // "threshold" or "topk"
    std::size_t eval_cadence = 5;
    prolin::OptimizerParams optimizer{};

    std::string output_dir = "runs";

    bool operator==(const ExperimentConfig&) const = default;
};

// Defaults above: a 20-client, 120-round configuration sized so a four-method
// multi-seed run finishes on a desk machine.
ExperimentConfig desk_config();

// Scaled to the overnight regime: 50 clients, 300 rounds, 6000 auxiliary
// samples, local step 0.01.
ExperimentConfig full_config();

// Number of clients assigned the property: positive_fraction rounded up,
// floored at two so precision and recall stay informative.
std::size_t positive_count(const ExperimentConfig& config);

// Participants per round, as the scheduler will round it.
std::size_t participants_per_round(const ExperimentConfig& config);

// Size of the synthesized supervision set for each round's scorer.
std::size_t detector_example_count(const ExperimentConfig& config);

// Throws std::invalid_argument naming the first offending field.
void validate(const ExperimentConfig& config);

std::string property_name(detector::Property p);
detector::Property parse_property(const std::string& name);
reconstruct::Method parse_method(const std::string& name);

std::string serialize_config(const ExperimentConfig& config);
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& config, const std::string& path);

}  // namespace fedprop::harness
