#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "firecast/rng.hpp"

namespace firecast {

struct TrainConfig {
    std::size_t epochs = 20;
    double lr = 0.05;
    double momentum = 0.9;
    double l2 = 1e-4;
    double dropout = 0.5;
    std::size_t batch_size = 32;
    std::size_t early_stop_patience = 1;
    bool early_stopping = true;
    bool oversample = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRow {
    std::size_t epoch = 0;       // 1-based
    double train_loss = 0.0;     // clean end-of-epoch pass over the train split
    double val_loss = 0.0;
    double val_auc = 0.0;        // NaN when the model has no AUC notion
};

struct TrainHistory {
    std::vector<EpochRow> rows;
    std::size_t stopped_epoch = 0;  // last epoch that ran
    std::size_t best_epoch = 0;     // epoch of minimal validation loss

    // CSV: header then one line per epoch (epoch,train_loss,val_loss,val_auc).
    void write_csv(std::ostream& out) const;
};

// Callbacks wiring a concrete model into the shared epoch loop. Losses are
// evaluated in inference mode, so history rows can be reproduced from the
// stored snapshot afterwards.
struct FitHooks {
    std::function<void(std::size_t epoch)> run_train_epoch;
    std::function<double()> train_loss;
    std::function<double()> val_loss;
    std::function<double()> val_auc;  // optional
    std::function<void()> snapshot_best;
    std::function<void()> restore_best;
};

// Epoch loop with early stopping: stop once validation loss has failed to
// improve for patience+1 consecutive epochs; the best-validation snapshot is
// restored before returning.
TrainHistory fit(const TrainConfig& config, const FitHooks& hooks);

// Random oversampling with replacement: minority-class indices duplicated
// until class counts are exactly equal, majority untouched, order shuffled.
// Returns indices into the original example set.
std::vector<std::size_t> oversample_indices(const std::vector<std::uint8_t>& labels,
                                            RngState& rng);

struct LabeledExample {
    std::vector<double> features;
    std::uint8_t label = 0;
    bool operator==(const LabeledExample&) const = default;
};

std::vector<LabeledExample> oversample(const std::vector<LabeledExample>& examples,
                                       RngState& rng);

// Deterministic Fisher-Yates shuffle.
void shuffle_indices(std::vector<std::size_t>& indices, RngState& rng);

}  // namespace firecast
