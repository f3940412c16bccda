#include "firecast/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "firecast/errors.hpp"

namespace firecast {

ConfusionCounts confusion(const std::vector<double>& scores,
                          const std::vector<std::uint8_t>& labels,
                          double threshold) {
    if (scores.size() != labels.size()) {
        throw ArgumentError("confusion: " + std::to_string(scores.size()) +
                            " scores vs " + std::to_string(labels.size()) +
                            " labels");
    }
    if (scores.empty()) {
        throw ArgumentError("confusion: empty input");
    }
    ConfusionCounts counts;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        const bool actual = labels[i] != 0;
        if (predicted && actual) ++counts.tp;
        else if (predicted && !actual) ++counts.fp;
        else if (!predicted && actual) ++counts.fn;
        else ++counts.tn;
    }
    return counts;
}

namespace {
double safe_ratio(double numerator, double denominator) {
    return denominator == 0.0 ? 0.0 : numerator / denominator;
}
}  // namespace

Prf precision_recall_f1(const ConfusionCounts& c) {
    Prf out;
    out.precision = safe_ratio(static_cast<double>(c.tp),
                               static_cast<double>(c.tp + c.fp));
    out.recall = safe_ratio(static_cast<double>(c.tp),
                            static_cast<double>(c.tp + c.fn));
    out.f1 = safe_ratio(2.0 * out.precision * out.recall,
                        out.precision + out.recall);
    return out;
}

double accuracy(const ConfusionCounts& c) {
    return safe_ratio(static_cast<double>(c.tp + c.tn),
                      static_cast<double>(c.total()));
}

double auc_roc(const std::vector<double>& scores,
               const std::vector<std::uint8_t>& labels) {
    if (scores.size() != labels.size()) {
        throw ArgumentError("auc_roc: scores and labels lengths differ");
    }
    const std::size_t n = scores.size();
    std::size_t positives = 0;
    for (const auto y : labels) positives += y ? 1 : 0;
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        throw ArgumentError("auc_roc requires both classes present");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] < scores[b];
    });

    // Average ranks across tie groups, then the Mann-Whitney identity.
    double positive_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) +
                                 static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]]) positive_rank_sum += avg_rank;
        }
        i = j;
    }
    const double n1 = static_cast<double>(positives);
    const double n0 = static_cast<double>(negatives);
    return (positive_rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
}

MetricsReport MetricsReport::from_scores(const std::vector<double>& scores,
                                         const std::vector<std::uint8_t>& labels,
                                         double threshold) {
    MetricsReport report;
    report.counts = confusion(scores, labels, threshold);
    const Prf prf = precision_recall_f1(report.counts);
    report.precision = prf.precision;
    report.recall = prf.recall;
    report.f1 = prf.f1;
    report.accuracy = firecast::accuracy(report.counts);
    report.auc_roc = firecast::auc_roc(scores, labels);
    return report;
}

void write_metrics_kv(std::ostream& out, const std::string& prefix,
                      const MetricsReport& report) {
    out << prefix << ".tp=" << report.counts.tp << '\n';
    out << prefix << ".fp=" << report.counts.fp << '\n';
    out << prefix << ".tn=" << report.counts.tn << '\n';
    out << prefix << ".fn=" << report.counts.fn << '\n';
    out << prefix << ".precision=" << report.precision << '\n';
    out << prefix << ".recall=" << report.recall << '\n';
    out << prefix << ".f1=" << report.f1 << '\n';
    out << prefix << ".accuracy=" << report.accuracy << '\n';
    out << prefix << ".auc_roc=" << report.auc_roc << '\n';
}

}  // namespace firecast
