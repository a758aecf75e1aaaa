#include "fedprop/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fedprop::harness {

ExperimentConfig desk_config() { return ExperimentConfig{}; }

ExperimentConfig full_config() {
    ExperimentConfig c;
    c.name = "full";
    c.rounds = 300;
    c.clients = 50;
    c.eta_global = 0.01;
    c.batch_size = 10;
    c.client_samples = 1080;
    c.aux_samples = 6000;
    return c;
}

std::size_t positive_count(const ExperimentConfig& config) {
    // ceil with a small slack so exact products like 0.1 * 20 do not round up
    // an extra step through float noise
    double raw = config.positive_fraction * double(config.clients);
    auto up = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    return std::max<std::size_t>(2, up);
}

std::size_t participants_per_round(const ExperimentConfig& config) {
    return static_cast<std::size_t>(
        std::llround(config.participation * double(config.clients)));
}

std::size_t detector_example_count(const ExperimentConfig& config) {
    return 2 * (config.aux_samples / config.example_size);
}

namespace {

[[noreturn]] void bad(const std::string& what) {
    throw std::invalid_argument("config: " + what);
}

}  // namespace

void validate(const ExperimentConfig& config) {
    if (config.rounds == 0) bad("rounds must be positive");
    if (config.clients < 2) bad("clients must be at least 2");
    if (!(config.participation > 0.0) || config.participation > 1.0)
        bad("participation must be in (0, 1]");
    if (config.positive_fraction < 0.0 || config.positive_fraction >= 1.0)
        bad("positive_fraction must be in [0, 1)");
    if (std::llround(config.positive_fraction * double(config.clients)) < 1)
        bad("positive_fraction rounds to zero planted clients");
    if (positive_count(config) >= config.clients)
        bad("positive clients must leave at least one honest client");
    if (participants_per_round(config) == 0)
        bad("participation rounds to zero clients per round");
    if (config.methods.empty()) bad("methods must not be empty");
    for (std::size_t i = 0; i < config.methods.size(); ++i) {
        for (std::size_t j = i + 1; j < config.methods.size(); ++j) {
            if (config.methods[i] == config.methods[j]) bad("methods contains a duplicate");
        }
    }
    if (config.seeds.empty()) bad("seeds must not be empty");
    if (config.dataset.kind != "blobs" && config.dataset.kind != "idx")
        bad("dataset.kind must be 'blobs' or 'idx'");
    if (config.dataset.kind == "blobs") {
        if (config.dataset.blobs.dim == 0) bad("dataset.blob_dim must be positive");
        if (!(config.dataset.blobs.separation > 0.0))
            bad("dataset.blob_separation must be positive");
        if (config.dims.input != config.dataset.blobs.dim)
            bad("dims.input must match dataset.blob_dim");
        if (config.dims.classes != 2) bad("dims.classes must be 2 for the blob task");
    } else {
        if (config.dataset.idx_images.empty() || config.dataset.idx_labels.empty())
            bad("idx dataset needs idx_images and idx_labels paths");
    }
    if (config.dims.hidden == 0) bad("dims.hidden must be positive");
    if (config.client_samples == 0) bad("client_samples must be positive");
    if (config.batch_size == 0) bad("batch_size must be positive");
    if (config.epochs == 0) bad("epochs must be positive");
    if (!(config.eta_global > 0.0)) bad("eta_global must be positive");
    if (config.secagg_scale < 2) bad("secagg_scale must be at least 2");
    if (!(config.eta_detector > 0.0)) bad("eta_detector must be positive");
    if (config.detector_epochs == 0) bad("detector_epochs must be positive");
    if (config.detector_batch == 0) bad("detector_batch must be positive");
    if (config.example_size == 0) bad("example_size must be positive");
    if (config.aux_samples / config.example_size < 5)
        bad("aux_samples must cover at least 5 batches of example_size");
    if (config.lambda < 0.0) bad("lambda must be nonnegative");
    if (!(config.threshold > 0.0) || !(config.threshold < 1.0))
        bad("threshold must be in (0, 1)");
    if (config.decision_rule != "threshold" && config.decision_rule != "topk")
        bad("decision_rule must be 'threshold' or 'topk'");
    if (config.eval_cadence == 0 || config.eval_cadence > config.rounds)
        bad("eval_cadence must be in [1, rounds]");
    if (!(config.optimizer.step > 0.0)) bad("optimizer.step must be positive");
    if (config.optimizer.momentum < 0.0 || config.optimizer.momentum >= 1.0)
        bad("optimizer.momentum must be in [0, 1)");
    if (config.optimizer.max_iters == 0) bad("optimizer.max_iters must be positive");
    if (config.output_dir.empty()) bad("output_dir must not be empty");
}

std::string property_name(detector::Property p) {
    switch (p) {
        case detector::Property::membership: return "membership";
        case detector::Property::inversion: return "inversion";
        case detector::Property::ascent: return "ascent";
    }
    throw std::invalid_argument("property_name: unknown property");
}

detector::Property parse_property(const std::string& name) {
    if (name == "membership") return detector::Property::membership;
    if (name == "inversion") return detector::Property::inversion;
    if (name == "ascent") return detector::Property::ascent;
    throw std::invalid_argument("config: unknown property '" + name + "'");
}

reconstruct::Method parse_method(const std::string& name) {
    if (name == "baseline") return reconstruct::Method::baseline;
    if (name == "ols") return reconstruct::Method::ols;
    if (name == "reg") return reconstruct::Method::reg;
    if (name == "prolin") return reconstruct::Method::prolin;
    throw std::invalid_argument("config: unknown method '" + name + "'");
}

namespace {

using nlohmann::json;

// Pulls key into out when present, remembering it as consumed so that
// unknown keys can be reported afterwards.
template <typename T>
void take(const json& j, std::set<std::string>& seen, const char* key, T& out) {
    seen.insert(key);
    if (auto it = j.find(key); it != j.end()) out = it->template get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& seen,
                    const char* where) {
    for (const auto& item : j.items()) {
        if (!seen.count(item.key())) {
            throw std::invalid_argument(std::string("config: unknown key '") +
                                        item.key() + "' in " + where);
        }
    }
}

}  // namespace

std::string serialize_config(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    j["rounds"] = c.rounds;
    j["clients"] = c.clients;
    j["participation"] = c.participation;
    j["positive_fraction"] = c.positive_fraction;
    j["property"] = property_name(c.property);
    json methods = json::array();
    for (auto m : c.methods) methods.push_back(reconstruct::method_name(m));
    j["methods"] = methods;
    j["seeds"] = c.seeds;
    j["dataset"] = {{"kind", c.dataset.kind},
                    {"blob_dim", c.dataset.blobs.dim},
                    {"blob_separation", c.dataset.blobs.separation},
                    {"idx_images", c.dataset.idx_images},
                    {"idx_labels", c.dataset.idx_labels}};
    j["dims"] = {{"input", c.dims.input},
                 {"hidden", c.dims.hidden},
                 {"classes", c.dims.classes}};
    j["client_samples"] = c.client_samples;
    j["aux_samples"] = c.aux_samples;
    j["eta_global"] = c.eta_global;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["use_secagg"] = c.use_secagg;
    j["secagg_scale"] = c.secagg_scale;
    j["eta_detector"] = c.eta_detector;
    j["detector_epochs"] = c.detector_epochs;
    j["detector_batch"] = c.detector_batch;
    j["example_size"] = c.example_size;
    j["lambda"] = c.lambda;
    j["threshold"] = c.threshold;
    j["decision_rule"] = c.decision_rule;
    j["eval_cadence"] = c.eval_cadence;
    j["optimizer"] = {{"step", c.optimizer.step},
                      {"momentum", c.optimizer.momentum},
                      {"max_iters", c.optimizer.max_iters},
                      {"rel_tol", c.optimizer.rel_tol},
                      {"gamma_every", c.optimizer.gamma_every},
                      {"dynamic_gamma", c.optimizer.dynamic_gamma},
                      {"divergence_patience", c.optimizer.divergence_patience},
                      {"freeze_tau", c.optimizer.freeze_tau},
                      {"gamma_ml", c.optimizer.gamma.ml},
                      {"gamma_reg", c.optimizer.gamma.reg},
                      {"gamma_lstsq", c.optimizer.gamma.lstsq}};
    j["output_dir"] = c.output_dir;
    return j.dump(2) + "\n";
}

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");

    ExperimentConfig c;
    std::set<std::string> seen;
    try {
        take(j, seen, "name", c.name);
        take(j, seen, "rounds", c.rounds);
        take(j, seen, "clients", c.clients);
        take(j, seen, "participation", c.participation);
        take(j, seen, "positive_fraction", c.positive_fraction);
        seen.insert("property");
        if (j.contains("property")) c.property = parse_property(j["property"].get<std::string>());
        seen.insert("methods");
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& m : j["methods"]) c.methods.push_back(parse_method(m.get<std::string>()));
        }
        take(j, seen, "seeds", c.seeds);
        seen.insert("dataset");
        if (j.contains("dataset")) {
            const json& d = j["dataset"];
            std::set<std::string> dseen;
            take(d, dseen, "kind", c.dataset.kind);
            take(d, dseen, "blob_dim", c.dataset.blobs.dim);
            take(d, dseen, "blob_separation", c.dataset.blobs.separation);
            take(d, dseen, "idx_images", c.dataset.idx_images);
            take(d, dseen, "idx_labels", c.dataset.idx_labels);
            reject_unknown(d, dseen, "dataset");
        }
        seen.insert("dims");
        if (j.contains("dims")) {
            const json& d = j["dims"];
            std::set<std::string> dseen;
            take(d, dseen, "input", c.dims.input);
            take(d, dseen, "hidden", c.dims.hidden);
            take(d, dseen, "classes", c.dims.classes);
            reject_unknown(d, dseen, "dims");
        }
        take(j, seen, "client_samples", c.client_samples);
        take(j, seen, "aux_samples", c.aux_samples);
        take(j, seen, "eta_global", c.eta_global);
        take(j, seen, "epochs", c.epochs);
        take(j, seen, "batch_size", c.batch_size);
        take(j, seen, "use_secagg", c.use_secagg);
        take(j, seen, "secagg_scale", c.secagg_scale);
        take(j, seen, "eta_detector", c.eta_detector);
        take(j, seen, "detector_epochs", c.detector_epochs);
        take(j, seen, "detector_batch", c.detector_batch);
        take(j, seen, "example_size", c.example_size);
        take(j, seen, "lambda", c.lambda);
        take(j, seen, "threshold", c.threshold);
        take(j, seen, "decision_rule", c.decision_rule);
        take(j, seen, "eval_cadence", c.eval_cadence);
        seen.insert("optimizer");
        if (j.contains("optimizer")) {
            const json& o = j["optimizer"];
            std::set<std::string> oseen;
            take(o, oseen, "step", c.optimizer.step);
            take(o, oseen, "momentum", c.optimizer.momentum);
            take(o, oseen, "max_iters", c.optimizer.max_iters);
            take(o, oseen, "rel_tol", c.optimizer.rel_tol);
            take(o, oseen, "gamma_every", c.optimizer.gamma_every);
            take(o, oseen, "dynamic_gamma", c.optimizer.dynamic_gamma);
            take(o, oseen, "divergence_patience", c.optimizer.divergence_patience);
            take(o, oseen, "freeze_tau", c.optimizer.freeze_tau);
            take(o, oseen, "gamma_ml", c.optimizer.gamma.ml);
            take(o, oseen, "gamma_reg", c.optimizer.gamma.reg);
            take(o, oseen, "gamma_lstsq", c.optimizer.gamma.lstsq);
            reject_unknown(o, oseen, "optimizer");
        }
        take(j, seen, "output_dir", c.output_dir);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: bad field type: ") + e.what());
    }
    reject_unknown(j, seen, "config");
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void save_config(const ExperimentConfig& config, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("config: cannot write '" + path + "'");
    out << serialize_config(config);
}

}  // namespace fedprop::harness
