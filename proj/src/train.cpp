#include "firecast/train.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "firecast/errors.hpp"

namespace firecast {

void TrainConfig::validate() const {
    // lr = 0 is allowed and means evaluation-only epochs (no updates).
    if (lr < 0.0) throw ConfigError("lr must be non-negative");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
    if (l2 < 0.0) throw ConfigError("l2 must be non-negative");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0,1)");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

void TrainHistory::write_csv(std::ostream& out) const {
    out << "epoch,train_loss,val_loss,val_auc\n";
    for (const EpochRow& row : rows) {
        out << row.epoch << ',' << row.train_loss << ',' << row.val_loss << ',';
        if (std::isnan(row.val_auc)) {
            out << "";
        } else {
            out << row.val_auc;
        }
        out << '\n';
    }
}

TrainHistory fit(const TrainConfig& config, const FitHooks& hooks) {
    config.validate();
    if (!hooks.run_train_epoch || !hooks.train_loss || !hooks.val_loss ||
        !hooks.snapshot_best || !hooks.restore_best) {
        throw ArgumentError("fit requires train, loss, and snapshot hooks");
    }

    TrainHistory history;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t stale_epochs = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        hooks.run_train_epoch(epoch);

        EpochRow row;
        row.epoch = epoch;
        row.train_loss = hooks.train_loss();
        row.val_loss = hooks.val_loss();
        row.val_auc = hooks.val_auc ? hooks.val_auc()
                                    : std::numeric_limits<double>::quiet_NaN();
        history.rows.push_back(row);
        history.stopped_epoch = epoch;

        if (row.val_loss < best_val) {
            best_val = row.val_loss;
            history.best_epoch = epoch;
            stale_epochs = 0;
            hooks.snapshot_best();
        } else {
            ++stale_epochs;
            if (config.early_stopping &&
                stale_epochs >= config.early_stop_patience + 1) {
                break;
            }
        }
    }

    if (history.best_epoch > 0) {
        hooks.restore_best();
    }
    return history;
}

std::vector<std::size_t> oversample_indices(const std::vector<std::uint8_t>& labels,
                                            RngState& rng) {
    std::vector<std::size_t> positives;
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        (labels[i] ? positives : negatives).push_back(i);
    }
    if (positives.empty() || negatives.empty()) {
        throw ArgumentError("oversample requires both classes present");
    }

    std::vector<std::size_t> out;
    out.reserve(2 * std::max(positives.size(), negatives.size()));
    out.insert(out.end(), positives.begin(), positives.end());
    out.insert(out.end(), negatives.begin(), negatives.end());

    const auto& minority = positives.size() < negatives.size() ? positives : negatives;
    const std::size_t deficit =
        std::max(positives.size(), negatives.size()) -
        std::min(positives.size(), negatives.size());
    for (std::size_t i = 0; i < deficit; ++i) {
        out.push_back(minority[rng.next_below(minority.size())]);
    }
    shuffle_indices(out, rng);
    return out;
}

std::vector<LabeledExample> oversample(const std::vector<LabeledExample>& examples,
                                       RngState& rng) {
    std::vector<std::uint8_t> labels;
    labels.reserve(examples.size());
    for (const auto& ex : examples) labels.push_back(ex.label);
    const std::vector<std::size_t> indices = oversample_indices(labels, rng);
    std::vector<LabeledExample> out;
    out.reserve(indices.size());
    for (const std::size_t idx : indices) out.push_back(examples[idx]);
    return out;
}

void shuffle_indices(std::vector<std::size_t>& indices, RngState& rng) {
    for (std::size_t i = indices.size(); i > 1; --i) {
        const std::size_t j = rng.next_below(i);
        std::swap(indices[i - 1], indices[j]);
    }
}

}  // namespace firecast
