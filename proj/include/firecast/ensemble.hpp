#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "firecast/cnn.hpp"
#include "firecast/ground.hpp"
#include "firecast/lstm.hpp"
#include "firecast/metrics.hpp"
#include "firecast/train.hpp"
#include "firecast/world.hpp"

namespace firecast {

// Stacked feature layout, width fixed at 8. Everything is computed from
// information available strictly before time t.
inline constexpr std::size_t kStackedFeatures = 8;
enum StackedFeature : std::size_t {
    kFeatForecastTemp = 0,
    kFeatForecastHumidity = 1,
    kFeatForecastWind = 2,
    kFeatForecastPrecip = 3,
    kFeatActivityScore = 4,
    kFeatRfDensity = 5,
    kFeatInfraProximity = 6,
    kFeatDryness = 7,
};

// Ablation groupings: which stacked columns each source owns.
std::vector<std::size_t> weather_feature_columns();
std::vector<std::size_t> vision_feature_columns();
std::vector<std::size_t> ground_feature_columns();

// Two-layer feed-forward scorer: dense(F->16) - relu - dropout - dense(16->1)
// - sigmoid.
struct FfnParams {
    std::size_t input_dim = 0;
    Parameter d1_w, d1_b;  // [F x 16], [16]
    Parameter d2_w, d2_b;  // [16 x 1], [1]
    double dropout_rate = 0.5;
    double l2 = 1e-4;

    FfnParams() = default;
    FfnParams(std::size_t input_dim_, RngState& rng, const std::string& prefix);

    ParamRefs params();
    ConstParamRefs params() const;
};

struct FfnCache {
    std::vector<double> input;
    Tensor pre1, act1;
    DropoutResult drop;
    double logit = 0.0;
    double probability = 0.0;
    bool recorded = false;
};

double meta_forward(const std::vector<double>& features, const FfnParams& ffn,
                    RngState& rng, bool training);
FfnCache meta_forward_cached(const std::vector<double>& features,
                             const FfnParams& ffn, RngState& rng, bool training);
// d_probability is dLoss/d(probability); gradients accumulate into ffn.
void meta_backward(FfnParams& ffn, const FfnCache& cache, double d_probability);

// Per-column normalization applied between stacking and any FFN.
struct FeatureNorm {
    std::array<double, kStackedFeatures> mean{};
    std::array<double, kStackedFeatures> sd{};

    FeatureNorm() {
        sd.fill(1.0);
    }
    std::vector<double> apply(const std::array<double, kStackedFeatures>& raw) const;
    bool operator==(const FeatureNorm&) const = default;
};

enum class EnsembleMode { kStacked, kAveraging };
std::string to_string(EnsembleMode mode);
EnsembleMode ensemble_mode_from_string(const std::string& name);

// Everything needed to score a tile: per-region forecasters, the detector,
// the stacked meta-learner plus the three single-source heads used for
// ablations and the averaging baseline.
struct EnsembleBundle {
    std::uint64_t fingerprint = 0;
    EnsembleMode mode = EnsembleMode::kStacked;
    std::size_t window = kDefaultForecastWindow;
    double rf_radius = kDefaultRfRadius;
    RegionForecasterSet forecasters;
    CnnParams detector;
    FfnParams meta;
    FfnParams head_weather;
    FfnParams head_vision;
    FfnParams head_ground;
    FeatureNorm feature_norm;
};

// Raw stacked feature vector for (tile, t); requires t >= bundle.window.
// Reads nothing at times >= t except the forecast target's own inputs, and
// never reads labels.
std::array<double, kStackedFeatures> stack_features(std::size_t row,
                                                    std::size_t col,
                                                    std::size_t t,
                                                    const WorldDataset& ds,
                                                    const EnsembleBundle& bundle);

struct Prediction {
    double probability = 0.0;
    bool decision = false;  // probability >= threshold
};
Prediction predict(std::size_t row, std::size_t col, std::size_t t,
                   const WorldDataset& ds, const EnsembleBundle& bundle,
                   double threshold = 0.5);

// Bulk feature extraction over a time range, with forecasts cached per
// (region, t) and density grids per t. Rows match stack_features exactly.
struct FeatureTable {
    std::vector<std::array<double, kStackedFeatures>> rows;
    std::vector<std::uint8_t> labels;
    std::vector<std::uint32_t> row_ids, col_ids, t_ids;

    std::size_t size() const { return rows.size(); }
};
FeatureTable build_feature_table(
    const WorldDataset& ds, const RegionForecasterSet& forecasters,
    const CnnParams& detector, double rf_radius, std::size_t t_begin,
    std::size_t t_end, std::optional<std::size_t> only_region = std::nullopt);

FeatureNorm fit_feature_norm(const FeatureTable& table);

// Probabilities for every table row under the bundle's mode.
std::vector<double> score_table(const FeatureTable& table,
                                const EnsembleBundle& bundle);
// Same, but through one single-source head on its column subset.
std::vector<double> score_table_head(const FeatureTable& table,
                                     const FfnParams& head,
                                     const std::vector<std::size_t>& columns,
                                     const FeatureNorm& norm);

struct EnsembleTrainOptions {
    TrainConfig forecaster;
    TrainConfig detector;
    TrainConfig meta;
    std::size_t window = kDefaultForecastWindow;
    double rf_radius = kDefaultRfRadius;
    EnsembleMode mode = EnsembleMode::kStacked;
    std::size_t detector_per_tile = 3;
    // Restrict every stage to one region's data; the trained forecaster is
    // replicated across slots. Used to build single-context source bundles.
    std::optional<std::size_t> only_region;
};

struct EnsembleHistories {
    std::vector<TrainHistory> forecasters;
    TrainHistory detector;
    TrainHistory meta;
    TrainHistory head_weather;
    TrainHistory head_vision;
    TrainHistory head_ground;
};

// Stage order: region forecasters, detector, then the meta-learner and the
// single-source heads on stacked features (train split oversampled, early
// stopping on validation loss).
EnsembleBundle train_ensemble(const WorldDataset& ds, const SplitIndices& split,
                              const EnsembleTrainOptions& options,
                              EnsembleHistories* histories = nullptr);

// Trains one FFN on a column subset of the (already normalized) tables.
FfnParams train_ffn_head(const FeatureTable& train_table,
                         const FeatureTable& val_table, const FeatureNorm& norm,
                         const std::vector<std::size_t>& columns,
                         const TrainConfig& config, const std::string& prefix,
                         TrainHistory* history = nullptr);

struct TransferPlan {
    std::size_t source_region = 0;
    std::size_t target_region = 0;
    // Frozen set: detector convolution stages and LSTM gate weights/biases.
    std::size_t fine_tune_epochs = 3;
    double lr = 0.005;
    std::uint64_t seed = 0;
};

// Copies the bundle, transplants the source region's forecaster onto the
// target region, freezes the feature extractors, and fine-tunes the heads
// (LSTM projection, detector dense head, meta FFN) on target-region data for
// the planned number of epochs. Frozen parameter bytes are untouched.
EnsembleBundle transfer(const EnsembleBundle& source,
                        const WorldDataset& target_ds, const SplitIndices& split,
                        const TransferPlan& plan);

// Validation loss of a bundle's meta path restricted to one region.
double region_val_loss(const EnsembleBundle& bundle, const WorldDataset& ds,
                       const SplitIndices& split, std::size_t region);

// Scratch baseline for transfer comparisons: fresh components trained only on
// the target region with the same epoch budget; returns its validation loss.
double scratch_region_val_loss(const WorldDataset& ds, const SplitIndices& split,
                               std::size_t region, std::size_t epochs, double lr,
                               std::uint64_t seed,
                               std::size_t window = kDefaultForecastWindow,
                               double rf_radius = kDefaultRfRadius);

// Bundle container: a directory holding manifest.txt plus one "WFTN" blob per
// named tensor. Manifest header: "WFEB <version> <fingerprint> <mode> <window>
// <regions>"; body lines are "<name> <shape> <blobfile>".
inline constexpr char kBundleMagic[] = "WFEB";
inline constexpr int kBundleVersion = 1;

void save_bundle(const std::filesystem::path& dir, const EnsembleBundle& bundle);
EnsembleBundle load_bundle(const std::filesystem::path& dir);

}  // namespace firecast
