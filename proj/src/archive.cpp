#include "fedprop/archive.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fedprop::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("archive: cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("archive: cannot write '" + path.string() + "'");
    out << text;
}

std::string role_name(fedsim::ClientRole role) {
    switch (role) {
        case fedsim::ClientRole::honest: return "honest";
        case fedsim::ClientRole::member_positive: return "member_positive";
        case fedsim::ClientRole::inversion_attacker: return "inversion_attacker";
        case fedsim::ClientRole::ascent_attacker: return "ascent_attacker";
    }
    throw std::invalid_argument("unknown role");
}

// 17 significant digits, the precision the text archives are pinned to.
std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string seed_dir_name(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

std::string detectors_to_text(const SeedOutcome& outcome) {
    std::string out =
        "# round beta ovl weight t mu+ sigma+ mu- sigma- z alpha\n";
    for (std::size_t r = 0; r < outcome.detectors.size(); ++r) {
        const auto& det = outcome.detectors[r];
        const auto& dist = outcome.distributions[r];
        out += std::to_string(det.round);
        out += ' ';
        out += g17(det.beta);
        out += ' ';
        out += g17(dist.ovl);
        out += ' ';
        out += g17(dist.weight);
        out += ' ';
        out += std::to_string(dist.mu_plus.size());
        for (std::size_t f = 0; f < dist.mu_plus.size(); ++f) {
            out += ' ';
            out += g17(dist.mu_plus[f]);
            out += ' ';
            out += g17(dist.sigma_plus[f]);
            out += ' ';
            out += g17(dist.mu_minus[f]);
            out += ' ';
            out += g17(dist.sigma_minus[f]);
        }
        out += ' ';
        out += std::to_string(det.alpha.size());
        for (double a : det.alpha) {
            out += ' ';
            out += g17(a);
        }
        out += '\n';
    }
    return out;
}

struct DetectorLines {
    std::vector<detector::DetectorModel> detectors;
    std::vector<detector::FeatureDistributions> distributions;
};

DetectorLines parse_detectors_text(const std::string& text, const std::string& where) {
    DetectorLines out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        detector::DetectorModel det;
        detector::FeatureDistributions dist;
        std::size_t t = 0, z = 0;
        fields >> det.round >> det.beta >> dist.ovl >> dist.weight >> t;
        dist.round = det.round;
        dist.mu_plus.resize(t);
        dist.sigma_plus.resize(t);
        dist.mu_minus.resize(t);
        dist.sigma_minus.resize(t);
        for (std::size_t f = 0; f < t; ++f) {
            fields >> dist.mu_plus[f] >> dist.sigma_plus[f] >> dist.mu_minus[f] >>
                dist.sigma_minus[f];
        }
        fields >> z;
        det.alpha.resize(z);
        for (std::size_t i = 0; i < z; ++i) fields >> det.alpha[i];
        det.feature_count = t;
        if (!fields) {
            throw std::runtime_error("archive: malformed detector line in " + where);
        }
        out.detectors.push_back(std::move(det));
        out.distributions.push_back(std::move(dist));
    }
    return out;
}

std::string decisions_to_csv(const SeedOutcome& outcome) {
    std::string out = "seed,method,round,client,tau,label,feature\n";
    for (const auto& record : outcome.decisions) {
        const auto& d = record.decision;
        for (std::size_t i = 0; i < d.tau.size(); ++i) {
            out += std::to_string(outcome.seed);
            out += ',';
            out += reconstruct::method_name(d.method);
            out += ',';
            out += std::to_string(record.round);
            out += ',';
            out += std::to_string(i);
            out += ',';
            out += format_double(d.tau[i]);
            out += ',';
            out += d.labels[i] ? '1' : '0';
            out += ',';
            if (!record.profile.empty()) out += format_double(record.profile[i]);
            out += '\n';
        }
    }
    return out;
}

std::string trace_to_csv(const std::vector<double>& trace) {
    std::string out = "iteration,objective\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += format_double(trace[i]);
        out += '\n';
    }
    return out;
}

}  // namespace

std::string view_to_json(const fedsim::AttackerView& view) {
    json j;
    j["dims"] = {{"input", view.dims.input},
                 {"hidden", view.dims.hidden},
                 {"classes", view.dims.classes}};
    json schedule = json::array();
    for (std::size_t r = 0; r < view.participation.rounds(); ++r) {
        json row = json::array();
        for (std::size_t i = 0; i < view.participation.clients(); ++i) {
            row.push_back(view.participation.at(r, i) ? 1 : 0);
        }
        schedule.push_back(std::move(row));
    }
    j["participation"] = std::move(schedule);
    json rounds = json::array();
    for (const auto& record : view.rounds) {
        rounds.push_back({{"round", record.round},
                          {"participants", record.participants},
                          {"aggregate", record.aggregate},
                          {"snapshot", record.snapshot}});
    }
    j["rounds"] = std::move(rounds);
    return j.dump(2) + "\n";
}

fedsim::AttackerView view_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("archive: view is not valid JSON: ") + e.what());
    }
    for (const auto& item : j.items()) {
        if (item.key() != "dims" && item.key() != "participation" && item.key() != "rounds") {
            throw std::runtime_error("archive: unexpected key '" + item.key() + "' in view");
        }
    }
    fedsim::AttackerView view;
    try {
        const json& dims = j.at("dims");
        view.dims.input = dims.at("input").get<std::size_t>();
        view.dims.hidden = dims.at("hidden").get<std::size_t>();
        view.dims.classes = dims.at("classes").get<std::size_t>();

        const json& schedule = j.at("participation");
        std::size_t rounds = schedule.size();
        std::size_t clients = rounds ? schedule.at(0).size() : 0;
        view.participation = fedsim::ParticipationMatrix(rounds, clients);
        for (std::size_t r = 0; r < rounds; ++r) {
            const json& row = schedule.at(r);
            if (row.size() != clients) {
                throw std::runtime_error("archive: ragged participation rows in view");
            }
            for (std::size_t i = 0; i < clients; ++i) {
                view.participation.set(r, i, row.at(i).get<int>() != 0);
            }
        }

        for (const json& rec : j.at("rounds")) {
            for (const auto& item : rec.items()) {
                if (item.key() != "round" && item.key() != "participants" &&
                    item.key() != "aggregate" && item.key() != "snapshot") {
                    throw std::runtime_error("archive: unexpected key '" + item.key() +
                                             "' in view round");
                }
            }
            fedsim::RoundRecord record;
            record.round = rec.at("round").get<std::size_t>();
            record.participants = rec.at("participants").get<std::vector<std::size_t>>();
            record.aggregate = rec.at("aggregate").get<std::vector<double>>();
            record.snapshot = rec.at("snapshot").get<std::vector<double>>();
            view.rounds.push_back(std::move(record));
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("archive: bad view field: ") + e.what());
    }
    return view;
}

std::string archive_dir_name(const ExperimentConfig& config) {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
    std::string first = config.seeds.empty() ? "0" : std::to_string(config.seeds.front());
    return config.output_dir + "/" + config.name + "-" + stamp + "-seed" + first;
}

void write_archive(const ExperimentResult& result, const std::string& dir) {
    fs::path root(dir);
    fs::create_directories(root);

    json manifest;
    manifest["config"] = json::parse(serialize_config(result.config));
    json runs = json::array();
    for (const auto& outcome : result.seeds) {
        json roles = json::array();
        // roles are reconstructed from truth: planted clients all share the
        // role the property maps to
        for (bool positive : outcome.truth) {
            roles.push_back(positive ? role_name([&] {
                switch (result.config.property) {
                    case detector::Property::membership:
                        return fedsim::ClientRole::member_positive;
                    case detector::Property::inversion:
                        return fedsim::ClientRole::inversion_attacker;
                    default:
                        return fedsim::ClientRole::ascent_attacker;
                }
            }())
                                     : role_name(fedsim::ClientRole::honest));
        }
        runs.push_back({{"seed", outcome.seed},
                        {"dir", seed_dir_name(outcome.seed)},
                        {"roles", std::move(roles)}});
    }
    manifest["runs"] = std::move(runs);
    write_file(root / "manifest.json", manifest.dump(2) + "\n");

    write_file(root / "metrics.csv", metrics_to_csv(collect_metrics(result)));

    for (const auto& outcome : result.seeds) {
        fs::path seed_dir = root / seed_dir_name(outcome.seed);
        fs::create_directories(seed_dir);
        write_file(seed_dir / "view.json", view_to_json(outcome.view));
        if (!outcome.detectors.empty()) {
            write_file(seed_dir / "detectors.txt", detectors_to_text(outcome));
        }
        if (!outcome.decisions.empty()) {
            write_file(seed_dir / "decisions.csv", decisions_to_csv(outcome));
        }
        if (!outcome.prolin_trace.empty()) {
            write_file(seed_dir / "trace.csv", trace_to_csv(outcome.prolin_trace));
        }
    }
}

LoadedArchive read_archive(const std::string& dir) {
    fs::path root(dir);
    json manifest;
    try {
        manifest = json::parse(read_file(root / "manifest.json"));
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("archive: bad manifest: ") + e.what());
    }
    LoadedArchive out;
    try {
        out.config = parse_config(manifest.at("config").dump());
        for (const json& run : manifest.at("runs")) {
            LoadedSeed seed;
            seed.seed = run.at("seed").get<std::uint64_t>();
            for (const json& role : run.at("roles")) {
                seed.truth.push_back(role.get<std::string>() != "honest");
            }
            seed.view = view_from_json(
                read_file(root / run.at("dir").get<std::string>() / "view.json"));
            out.seeds.push_back(std::move(seed));
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("archive: bad manifest field: ") + e.what());
    }
    return out;
}

namespace {

std::vector<std::string> run_dirs(const json& manifest) {
    std::vector<std::string> dirs;
    for (const json& run : manifest.at("runs")) {
        dirs.push_back(run.at("dir").get<std::string>());
    }
    return dirs;
}

void export_f1(const fs::path& root) {
    auto rows = metrics_from_csv(read_file(root / "metrics.csv"));
    std::vector<std::string> methods;
    for (const auto& r : rows) {
        if (r.seed == "mean") continue;
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
            methods.push_back(r.method);
        }
    }
    if (methods.empty()) {
        throw std::runtime_error("export f1: no per-seed rows in " +
                                 (root / "metrics.csv").string());
    }
    fs::create_directories(root / "plots");
    for (const auto& method : methods) {
        std::vector<std::size_t> rounds;
        for (const auto& r : rows) {
            if (r.seed == "mean" || r.method != method) continue;
            if (std::find(rounds.begin(), rounds.end(), r.round) == rounds.end()) {
                rounds.push_back(r.round);
            }
        }
        std::sort(rounds.begin(), rounds.end());
        std::string csv = "round,mean_f1,std_f1\n";
        for (std::size_t round : rounds) {
            std::vector<double> values;
            for (const auto& r : rows) {
                if (r.seed != "mean" && r.method == method && r.round == round) {
                    values.push_back(r.f1);
                }
            }
            double mean = 0.0;
            for (double v : values) mean += v;
            mean /= double(values.size());
            double var = 0.0;
            for (double v : values) var += (v - mean) * (v - mean);
            double stddev = std::sqrt(var / double(values.size()));
            csv += std::to_string(round);
            csv += ',';
            csv += format_double(mean);
            csv += ',';
            csv += format_double(stddev);
            csv += '\n';
        }
        write_file(root / "plots" / ("f1_" + method + ".csv"), csv);
    }
}

std::vector<DetectorLines> load_all_detectors(const fs::path& root, const json& manifest,
                                              const char* what) {
    std::vector<DetectorLines> all;
    std::vector<std::string> missing;
    for (const auto& dir : run_dirs(manifest)) {
        fs::path file = root / dir / "detectors.txt";
        if (!fs::exists(file)) {
            missing.push_back(dir + "/detectors.txt");
            continue;
        }
        all.push_back(parse_detectors_text(read_file(file), file.string()));
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) {
            if (!list.empty()) list += ", ";
            list += m;
        }
        throw std::runtime_error(std::string("export ") + what + ": missing " + list);
    }
    if (all.empty()) {
        throw std::runtime_error(std::string("export ") + what + ": archive has no runs");
    }
    return all;
}

void export_ovl(const fs::path& root, const json& manifest) {
    auto all = load_all_detectors(root, manifest, "ovl");
    std::size_t rounds = all.front().distributions.size();
    for (const auto& lines : all) {
        if (lines.distributions.size() != rounds) {
            throw std::runtime_error("export ovl: seeds disagree on round count");
        }
    }
    std::string csv = "round,ovl\n";
    for (std::size_t r = 0; r < rounds; ++r) {
        double sum = 0.0;
        for (const auto& lines : all) sum += lines.distributions[r].ovl;
        csv += std::to_string(r);
        csv += ',';
        csv += format_double(sum / double(all.size()));
        csv += '\n';
    }
    fs::create_directories(root / "plots");
    write_file(root / "plots" / "ovl.csv", csv);
}

void export_dist(const fs::path& root, const json& manifest,
                 const std::vector<std::size_t>& rounds) {
    if (rounds.empty()) {
        throw std::runtime_error("export dist: no rounds requested");
    }
    auto all = load_all_detectors(root, manifest, "dist");
    std::string missing;
    for (std::size_t round : rounds) {
        for (const auto& lines : all) {
            if (round >= lines.distributions.size()) {
                if (!missing.empty()) missing += ", ";
                missing += std::to_string(round);
                break;
            }
        }
    }
    if (!missing.empty()) {
        throw std::runtime_error("export dist: rounds not in archive: " + missing);
    }
    auto seeds = manifest.at("runs");
    std::string csv = "seed,round,feature,mu_plus,sigma_plus,mu_minus,sigma_minus,ovl\n";
    for (std::size_t round : rounds) {
        for (std::size_t s = 0; s < all.size(); ++s) {
            const auto& dist = all[s].distributions[round];
            for (std::size_t f = 0; f < dist.mu_plus.size(); ++f) {
                csv += std::to_string(seeds.at(s).at("seed").get<std::uint64_t>());
                csv += ',';
                csv += std::to_string(round);
                csv += ',';
                csv += std::to_string(f);
                csv += ',';
                csv += format_double(dist.mu_plus[f]);
                csv += ',';
                csv += format_double(dist.sigma_plus[f]);
                csv += ',';
                csv += format_double(dist.mu_minus[f]);
                csv += ',';
                csv += format_double(dist.sigma_minus[f]);
                csv += ',';
                csv += format_double(dist.ovl);
                csv += '\n';
            }
        }
    }
    fs::create_directories(root / "plots");
    write_file(root / "plots" / "dist.csv", csv);
}

}  // namespace

void export_plot_data(const std::string& dir, const std::string& selector,
                      const std::vector<std::size_t>& rounds) {
    fs::path root(dir);
    if (!fs::exists(root / "manifest.json")) {
        throw std::runtime_error("export: no manifest.json in '" + dir + "'");
    }
    json manifest;
    try {
        manifest = json::parse(read_file(root / "manifest.json"));
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("export: bad manifest: ") + e.what());
    }
    if (selector == "f1") {
        export_f1(root);
    } else if (selector == "ovl") {
        export_ovl(root, manifest);
    } else if (selector == "dist") {
        export_dist(root, manifest, rounds);
    } else {
        throw std::runtime_error("export: unknown selector '" + selector +
                                 "' (expected f1, ovl, or dist)");
    }
}

}  // namespace fedprop::harness
