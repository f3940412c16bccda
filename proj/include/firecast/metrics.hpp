#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace firecast {

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
};

// Decision convention: score >= threshold is positive.
ConfusionCounts confusion(const std::vector<double>& scores,
                          const std::vector<std::uint8_t>& labels,
                          double threshold);

// Any 0/0 is defined as 0 so degenerate splits never crash a harness.
struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};
Prf precision_recall_f1(const ConfusionCounts& counts);

double accuracy(const ConfusionCounts& counts);

// Mann-Whitney AUC via average ranks: the probability a random positive
// outranks a random negative, ties counted half. Requires both classes.
double auc_roc(const std::vector<double>& scores,
               const std::vector<std::uint8_t>& labels);

struct MetricsReport {
    ConfusionCounts counts;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    double auc_roc = 0.0;

    static MetricsReport from_scores(const std::vector<double>& scores,
                                     const std::vector<std::uint8_t>& labels,
                                     double threshold);
};

// Machine-readable key=value lines, each prefixed "<prefix>.".
void write_metrics_kv(std::ostream& out, const std::string& prefix,
                      const MetricsReport& report);

}  // namespace firecast
