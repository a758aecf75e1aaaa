#include "fedprop/metrics.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace fedprop::harness {

Scores score_labels(const std::vector<bool>& predicted,
                    const std::vector<bool>& truth) {
    if (predicted.size() != truth.size()) {
        throw std::invalid_argument("score_labels: predicted and truth lengths differ");
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] && truth[i]) ++tp;
        if (predicted[i] && !truth[i]) ++fp;
        if (!predicted[i] && truth[i]) ++fn;
    }
    Scores s;
    s.precision = (tp + fp) ? double(tp) / double(tp + fp) : 0.0;
    s.recall = (tp + fn) ? double(tp) / double(tp + fn) : 0.0;
    s.f1 = (s.precision + s.recall > 0.0)
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    return s;
}

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, end);
}

namespace {

double parse_double(const std::string& field, const char* what) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || p != field.data() + field.size()) {
        throw std::runtime_error(std::string("metrics csv: bad ") + what + " '" + field + "'");
    }
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

}  // namespace

std::string metrics_to_csv(const std::vector<MetricRow>& rows) {
    std::string out = kMetricsHeader;
    out += '\n';
    for (const auto& r : rows) {
        out += r.seed;
        out += ',';
        out += r.method;
        out += ',';
        out += std::to_string(r.round);
        out += ',';
        out += format_double(r.precision);
        out += ',';
        out += format_double(r.recall);
        out += ',';
        out += format_double(r.f1);
        out += '\n';
    }
    return out;
}

std::vector<MetricRow> metrics_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) {
        throw std::runtime_error("metrics csv: missing or wrong header line");
    }
    std::vector<MetricRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 6) {
            throw std::runtime_error("metrics csv: expected 6 fields, got line '" + line + "'");
        }
        MetricRow r;
        r.seed = fields[0];
        r.method = fields[1];
        r.round = static_cast<std::size_t>(parse_double(fields[2], "round"));
        r.precision = parse_double(fields[3], "precision");
        r.recall = parse_double(fields[4], "recall");
        r.f1 = parse_double(fields[5], "f1");
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<MetricRow> with_mean_rows(std::vector<MetricRow> rows) {
    struct Bucket {
        std::string method;
        std::size_t round = 0;
        double precision = 0.0, recall = 0.0, f1 = 0.0;
        std::size_t count = 0;
    };
    std::vector<Bucket> buckets;
    for (const auto& r : rows) {
        if (r.seed == "mean") continue;
        Bucket* b = nullptr;
        for (auto& cand : buckets) {
            if (cand.method == r.method && cand.round == r.round) {
                b = &cand;
                break;
            }
        }
        if (!b) {
            buckets.push_back({r.method, r.round, 0.0, 0.0, 0.0, 0});
            b = &buckets.back();
        }
        b->precision += r.precision;
        b->recall += r.recall;
        b->f1 += r.f1;
        b->count += 1;
    }
    for (const auto& b : buckets) {
        MetricRow m;
        m.seed = "mean";
        m.method = b.method;
        m.round = b.round;
        m.precision = b.precision / double(b.count);
        m.recall = b.recall / double(b.count);
        m.f1 = b.f1 / double(b.count);
        rows.push_back(std::move(m));
    }
    return rows;
}

}  // namespace fedprop::harness
