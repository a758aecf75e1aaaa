#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fedprop::harness {

// Binary confusion summary over per-client labels.  Degenerate ratios (no
// predicted positives, no actual positives) come out as zero rather than NaN
// so that averages over rounds and seeds stay well defined.
struct Scores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Throws std::invalid_argument when the two label vectors differ in length.
Scores score_labels(const std::vector<bool>& predicted,
                    const std::vector<bool>& truth);

// One evaluation result.  seed is the decimal seed of the run the row came
// from, or "mean" for rows averaged across seeds.
struct MetricRow {
    std::string seed;
    std::string method;
    std::size_t round = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool operator==(const MetricRow&) const = default;
};

// Shortest decimal form that parses back to exactly the same double.  Every
// float the harness persists goes through here so reruns are byte-identical.
std::string format_double(double value);

inline constexpr const char* kMetricsHeader = "seed,method,round,precision,recall,f1";

std::string metrics_to_csv(const std::vector<MetricRow>& rows);
std::vector<MetricRow> metrics_from_csv(const std::string& text);

// Appends one "mean" row per (method, round) pair, averaged over the
// distinct seeds present; pairs keep their first-appearance order.  Input
// rows that are already averages are left alone and excluded from the fold.
std::vector<MetricRow> with_mean_rows(std::vector<MetricRow> rows);

}  // namespace fedprop::harness
