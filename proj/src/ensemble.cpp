#include "firecast/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "firecast/errors.hpp"
#include "firecast/ops.hpp"
#include "firecast/serialize.hpp"

namespace firecast {

namespace {
constexpr std::size_t kFfnHidden = 16;
}

std::vector<std::size_t> weather_feature_columns() {
    return {kFeatForecastTemp, kFeatForecastHumidity, kFeatForecastWind,
            kFeatForecastPrecip, kFeatDryness};
}
std::vector<std::size_t> vision_feature_columns() {
    return {kFeatActivityScore};
}
std::vector<std::size_t> ground_feature_columns() {
    return {kFeatRfDensity, kFeatInfraProximity};
}

FfnParams::FfnParams(std::size_t input_dim_, RngState& rng,
                     const std::string& prefix)
    : input_dim(input_dim_) {
    const double b1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    Tensor w1({input_dim, kFfnHidden});
    for (std::size_t i = 0; i < w1.size(); ++i) w1[i] = rng.next_uniform(-b1, b1);
    d1_w = Parameter(prefix + ".d1_w", std::move(w1));
    d1_b = Parameter(prefix + ".d1_b", Tensor({kFfnHidden}));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(kFfnHidden));
    Tensor w2({kFfnHidden, 1});
    for (std::size_t i = 0; i < w2.size(); ++i) w2[i] = rng.next_uniform(-b2, b2);
    d2_w = Parameter(prefix + ".d2_w", std::move(w2));
    d2_b = Parameter(prefix + ".d2_b", Tensor({1}));
}

ParamRefs FfnParams::params() { return {&d1_w, &d1_b, &d2_w, &d2_b}; }
ConstParamRefs FfnParams::params() const {
    return {&d1_w, &d1_b, &d2_w, &d2_b};
}

FfnCache meta_forward_cached(const std::vector<double>& features,
                             const FfnParams& ffn, RngState& rng, bool training) {
    if (features.size() != ffn.input_dim) {
        throw DimensionError("meta_forward: feature width " +
                             std::to_string(features.size()) + " does not match " +
                             std::to_string(ffn.input_dim));
    }
    FfnCache cache;
    cache.input = features;
    const Tensor x({features.size()}, std::vector<double>(features));
    cache.pre1 = dense(x, ffn.d1_w.value, ffn.d1_b.value);
    cache.act1 = relu(cache.pre1);
    cache.drop = dropout(cache.act1, ffn.dropout_rate, rng, training);
    const Tensor logits = dense(cache.drop.output, ffn.d2_w.value, ffn.d2_b.value);
    cache.logit = logits[0];
    cache.probability = sigmoid(cache.logit);
    cache.recorded = true;
    return cache;
}

double meta_forward(const std::vector<double>& features, const FfnParams& ffn,
                    RngState& rng, bool training) {
    return meta_forward_cached(features, ffn, rng, training).probability;
}

void meta_backward(FfnParams& ffn, const FfnCache& cache, double d_probability) {
    if (!cache.recorded) {
        throw StateError("meta_backward called before forward");
    }
    const double d_logit =
        d_probability * cache.probability * (1.0 - cache.probability);
    const Tensor d_logits({1}, {d_logit});
    DenseGrads d2 = dense_backward(cache.drop.output, ffn.d2_w.value, d_logits);
    for (std::size_t i = 0; i < d2.w_grad.size(); ++i) ffn.d2_w.grad[i] += d2.w_grad[i];
    ffn.d2_b.grad[0] += d2.b_grad[0];

    Tensor d_drop = dropout_backward(cache.drop, d2.x_grad);
    Tensor d_pre1 = relu_backward(cache.pre1, d_drop);
    const Tensor x({cache.input.size()}, std::vector<double>(cache.input));
    DenseGrads d1 = dense_backward(x, ffn.d1_w.value, d_pre1);
    for (std::size_t i = 0; i < d1.w_grad.size(); ++i) ffn.d1_w.grad[i] += d1.w_grad[i];
    for (std::size_t i = 0; i < d1.b_grad.size(); ++i) ffn.d1_b.grad[i] += d1.b_grad[i];
}

std::vector<double> FeatureNorm::apply(
    const std::array<double, kStackedFeatures>& raw) const {
    std::vector<double> out(kStackedFeatures);
    for (std::size_t i = 0; i < kStackedFeatures; ++i) {
        out[i] = (raw[i] - mean[i]) / sd[i];
    }
    return out;
}

std::string to_string(EnsembleMode mode) {
    return mode == EnsembleMode::kStacked ? "stacked" : "averaging";
}

EnsembleMode ensemble_mode_from_string(const std::string& name) {
    if (name == "stacked") return EnsembleMode::kStacked;
    if (name == "averaging") return EnsembleMode::kAveraging;
    throw ConfigError("unknown ensemble mode \"" + name +
                      "\" (expected stacked or averaging)");
}

// Forecast features are denormalized back to physical units so the
// meta-learner sees region-comparable values; FeatureNorm rescales globally.
std::array<double, kStackedFeatures> stack_features(std::size_t row,
                                                    std::size_t col,
                                                    std::size_t t,
                                                    const WorldDataset& ds,
                                                    const EnsembleBundle& bundle) {
    if (row >= ds.config.rows || col >= ds.config.cols) {
        throw ArgumentError("tile (" + std::to_string(row) + "," +
                            std::to_string(col) + ") outside grid");
    }
    if (t < bundle.window) {
        throw ArgumentError("stack_features needs t >= " +
                            std::to_string(bundle.window) +
                            " for the forecast window, got " + std::to_string(t));
    }
    if (t >= ds.config.timesteps) {
        throw ArgumentError("time index " + std::to_string(t) + " out of range");
    }

    const std::size_t region = ds.region_of(row, col);
    const RegionStats& stats = bundle.forecasters.stats[region];

    std::vector<std::vector<double>> window;
    window.reserve(bundle.window);
    for (std::size_t tt = t - bundle.window; tt < t; ++tt) {
        window.push_back(normalize_weather(ds.at(row, col, tt).weather, stats));
    }
    const std::array<double, kWeatherDims> predicted = denormalize_weather(
        forecast(window, bundle.forecasters.by_region[region]), stats);

    const TileRecord& prev = ds.at(row, col, t - 1);
    const double activity_score =
        detect_activity(prev.activity_patch, bundle.detector);
    const double density =
        rf_density_at(ds.rf_counts_at(t - 1), ds.config.rows, ds.config.cols,
                      bundle.rf_radius, row, col);
    const double proximity =
        1.0 / (1.0 + ds.infra_distance[ds.tile_index(row, col)]);

    return {predicted[kTemperature], predicted[kHumidity], predicted[kWind],
            predicted[kPrecip],      activity_score,       density,
            proximity,               prev.dryness};
}

namespace {
std::vector<double> subset(const std::vector<double>& values,
                           const std::vector<std::size_t>& columns) {
    std::vector<double> out;
    out.reserve(columns.size());
    for (const std::size_t c : columns) out.push_back(values[c]);
    return out;
}

double score_features(const std::array<double, kStackedFeatures>& raw,
                      const EnsembleBundle& bundle) {
    const std::vector<double> normalized = bundle.feature_norm.apply(raw);
    RngState inference_rng;  // dropout is identity outside training
    if (bundle.mode == EnsembleMode::kStacked) {
        return meta_forward(normalized, bundle.meta, inference_rng, false);
    }
    const double pw = meta_forward(subset(normalized, weather_feature_columns()),
                                   bundle.head_weather, inference_rng, false);
    const double pv = meta_forward(subset(normalized, vision_feature_columns()),
                                   bundle.head_vision, inference_rng, false);
    const double pg = meta_forward(subset(normalized, ground_feature_columns()),
                                   bundle.head_ground, inference_rng, false);
    return (pw + pv + pg) / 3.0;
}
}  // namespace

Prediction predict(std::size_t row, std::size_t col, std::size_t t,
                   const WorldDataset& ds, const EnsembleBundle& bundle,
                   double threshold) {
    Prediction out;
    out.probability = score_features(stack_features(row, col, t, ds, bundle), bundle);
    out.decision = out.probability >= threshold;
    return out;
}

FeatureTable build_feature_table(const WorldDataset& ds,
                                 const RegionForecasterSet& forecasters,
                                 const CnnParams& detector, double rf_radius,
                                 std::size_t t_begin, std::size_t t_end,
                                 std::optional<std::size_t> only_region) {
    FeatureTable table;
    const std::size_t start = std::max(t_begin, forecasters.window);
    if (start >= t_end) {
        throw ArgumentError("feature table range is empty after the window cut");
    }
    for (std::size_t t = start; t < t_end; ++t) {
        // One forecast per region and one density grid per step serve every
        // tile at this t.
        std::vector<std::array<double, kWeatherDims>> forecast_by_region(
            ds.config.regions);
        std::vector<bool> have_forecast(ds.config.regions, false);
        const std::vector<double> density_grid =
            rf_density(ds.rf_counts_at(t - 1), ds.config.rows, ds.config.cols,
                       rf_radius);

        for (std::size_t row = 0; row < ds.config.rows; ++row) {
            for (std::size_t col = 0; col < ds.config.cols; ++col) {
                const std::size_t region = ds.region_of(row, col);
                if (only_region && region != *only_region) continue;
                if (!have_forecast[region]) {
                    const RegionStats& stats = forecasters.stats[region];
                    std::vector<std::vector<double>> window;
                    window.reserve(forecasters.window);
                    for (std::size_t tt = t - forecasters.window; tt < t; ++tt) {
                        window.push_back(
                            normalize_weather(ds.at(row, col, tt).weather, stats));
                    }
                    forecast_by_region[region] = denormalize_weather(
                        forecast(window, forecasters.by_region[region]), stats);
                    have_forecast[region] = true;
                }
                const auto& predicted = forecast_by_region[region];
                const TileRecord& prev = ds.at(row, col, t - 1);
                const double activity_score =
                    detect_activity(prev.activity_patch, detector);
                const std::size_t idx = ds.tile_index(row, col);

                table.rows.push_back(
                    {predicted[kTemperature], predicted[kHumidity],
                     predicted[kWind], predicted[kPrecip], activity_score,
                     density_grid[idx], 1.0 / (1.0 + ds.infra_distance[idx]),
                     prev.dryness});
                table.labels.push_back(ds.at(row, col, t).fire);
                table.row_ids.push_back(static_cast<std::uint32_t>(row));
                table.col_ids.push_back(static_cast<std::uint32_t>(col));
                table.t_ids.push_back(static_cast<std::uint32_t>(t));
            }
        }
    }
    return table;
}

FeatureNorm fit_feature_norm(const FeatureTable& table) {
    if (table.rows.empty()) {
        throw ArgumentError("cannot fit feature normalization on an empty table");
    }
    FeatureNorm norm;
    const auto n = static_cast<double>(table.rows.size());
    for (std::size_t c = 0; c < kStackedFeatures; ++c) {
        double mean = 0.0;
        for (const auto& row : table.rows) mean += row[c];
        mean /= n;
        double var = 0.0;
        for (const auto& row : table.rows) {
            const double diff = row[c] - mean;
            var += diff * diff;
        }
        norm.mean[c] = mean;
        norm.sd[c] = std::max(std::sqrt(var / n), 1e-8);
    }
    return norm;
}

std::vector<double> score_table(const FeatureTable& table,
                                const EnsembleBundle& bundle) {
    std::vector<double> scores;
    scores.reserve(table.size());
    for (const auto& row : table.rows) {
        scores.push_back(score_features(row, bundle));
    }
    return scores;
}

std::vector<double> score_table_head(const FeatureTable& table,
                                     const FfnParams& head,
                                     const std::vector<std::size_t>& columns,
                                     const FeatureNorm& norm) {
    std::vector<double> scores;
    scores.reserve(table.size());
    RngState inference_rng;
    for (const auto& row : table.rows) {
        scores.push_back(meta_forward(subset(norm.apply(row), columns), head,
                                      inference_rng, false));
    }
    return scores;
}

FfnParams train_ffn_head(const FeatureTable& train_table,
                         const FeatureTable& val_table, const FeatureNorm& norm,
                         const std::vector<std::size_t>& columns,
                         const TrainConfig& config, const std::string& prefix,
                         TrainHistory* history) {
    config.validate();
    if (train_table.rows.empty() || val_table.rows.empty()) {
        throw ArgumentError("train and validation tables must be non-empty");
    }

    std::vector<std::vector<double>> train_x;
    train_x.reserve(train_table.size());
    for (const auto& row : train_table.rows) {
        train_x.push_back(subset(norm.apply(row), columns));
    }
    std::vector<std::vector<double>> val_x;
    val_x.reserve(val_table.size());
    for (const auto& row : val_table.rows) {
        val_x.push_back(subset(norm.apply(row), columns));
    }

    const RngState root(config.seed);
    RngState init_rng = root.substream("ffn-init", columns.size());
    FfnParams ffn(columns.size(), init_rng, prefix);
    ffn.dropout_rate = config.dropout;
    ffn.l2 = config.l2;
    FfnParams best = ffn;

    RngState sample_rng = root.substream("ffn-oversample");
    std::vector<std::size_t> base_order;
    if (config.oversample) {
        base_order = oversample_indices(train_table.labels, sample_rng);
    } else {
        base_order.resize(train_table.size());
        for (std::size_t i = 0; i < base_order.size(); ++i) base_order[i] = i;
    }

    RngState shuffle_rng = root.substream("ffn-shuffle");
    RngState dropout_rng = root.substream("ffn-dropout");

    auto eval_scores = [&](const std::vector<std::vector<double>>& xs) {
        std::vector<double> scores;
        scores.reserve(xs.size());
        RngState inference_rng;
        for (const auto& x : xs) {
            scores.push_back(meta_forward(x, ffn, inference_rng, false));
        }
        return scores;
    };

    FitHooks hooks;
    hooks.run_train_epoch = [&](std::size_t) {
        std::vector<std::size_t> order = base_order;
        shuffle_indices(order, shuffle_rng);
        for (std::size_t start = 0; start < order.size();
             start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            const double batch_n = static_cast<double>(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t ex = order[k];
                const FfnCache cache =
                    meta_forward_cached(train_x[ex], ffn, dropout_rng, true);
                const double d_p =
                    bce_loss_grad(cache.probability,
                                  static_cast<double>(train_table.labels[ex])) /
                    batch_n;
                meta_backward(ffn, cache, d_p);
            }
            if (config.lr > 0.0) {
                sgd_step(ffn.params(), config.lr, config.momentum, ffn.l2);
            } else {
                zero_grads(ffn.params());
            }
        }
    };
    hooks.train_loss = [&] {
        return bce_loss_mean(eval_scores(train_x), train_table.labels);
    };
    hooks.val_loss = [&] {
        return bce_loss_mean(eval_scores(val_x), val_table.labels);
    };
    hooks.val_auc = [&] {
        const bool has_pos =
            std::find(val_table.labels.begin(), val_table.labels.end(),
                      std::uint8_t{1}) != val_table.labels.end();
        const bool has_neg =
            std::find(val_table.labels.begin(), val_table.labels.end(),
                      std::uint8_t{0}) != val_table.labels.end();
        if (!has_pos || !has_neg) {
            return std::numeric_limits<double>::quiet_NaN();
        }
        return auc_roc(eval_scores(val_x), val_table.labels);
    };
    hooks.snapshot_best = [&] { best = ffn; };
    hooks.restore_best = [&] { ffn = best; };

    const TrainHistory h = fit(config, hooks);
    if (history) *history = h;
    return ffn;
}

EnsembleBundle train_ensemble(const WorldDataset& ds, const SplitIndices& split,
                              const EnsembleTrainOptions& options,
                              EnsembleHistories* histories) {
    EnsembleBundle bundle;
    bundle.fingerprint = ds.config.fingerprint();
    bundle.mode = options.mode;
    bundle.window = options.window;
    bundle.rf_radius = options.rf_radius;

    std::vector<TrainHistory> forecaster_histories;
    bundle.forecasters = train_region_forecasters(
        ds, split, options.forecaster, options.window, &forecaster_histories,
        nullptr, options.only_region);

    TrainHistory detector_history;
    std::optional<TileList> region_tiles;
    if (options.only_region) {
        region_tiles = ds.region_tiles(*options.only_region);
    }
    bundle.detector = train_detector(ds, split, options.detector,
                                     &detector_history, options.detector_per_tile,
                                     region_tiles ? &*region_tiles : nullptr);

    const FeatureTable train_table = build_feature_table(
        ds, bundle.forecasters, bundle.detector, options.rf_radius,
        options.window, split.train_end, options.only_region);
    const FeatureTable val_table = build_feature_table(
        ds, bundle.forecasters, bundle.detector, options.rf_radius,
        split.train_end, split.val_end, options.only_region);

    bundle.feature_norm = fit_feature_norm(train_table);

    std::vector<std::size_t> all_columns(kStackedFeatures);
    for (std::size_t i = 0; i < kStackedFeatures; ++i) all_columns[i] = i;

    TrainHistory meta_history, hw_history, hv_history, hg_history;
    bundle.meta = train_ffn_head(train_table, val_table, bundle.feature_norm,
                                 all_columns, options.meta, "meta", &meta_history);
    bundle.head_weather =
        train_ffn_head(train_table, val_table, bundle.feature_norm,
                       weather_feature_columns(), options.meta, "head_weather",
                       &hw_history);
    bundle.head_vision =
        train_ffn_head(train_table, val_table, bundle.feature_norm,
                       vision_feature_columns(), options.meta, "head_vision",
                       &hv_history);
    bundle.head_ground =
        train_ffn_head(train_table, val_table, bundle.feature_norm,
                       ground_feature_columns(), options.meta, "head_ground",
                       &hg_history);

    if (histories) {
        histories->forecasters = std::move(forecaster_histories);
        histories->detector = detector_history;
        histories->meta = meta_history;
        histories->head_weather = hw_history;
        histories->head_vision = hv_history;
        histories->head_ground = hg_history;
    }
    return bundle;
}

namespace {
void fine_tune_lstm_head(LstmParams& params, const WorldDataset& ds,
                         const SplitIndices& split, std::size_t region,
                         const RegionStats& stats, std::size_t window,
                         const TransferPlan& plan, RngState& shuffle_rng) {
    const auto raw = ds.region_weather_series(region);
    std::vector<std::vector<double>> series(raw.size());
    for (std::size_t t = 0; t < raw.size(); ++t) {
        series[t] = normalize_weather(raw[t], stats);
    }
    std::vector<std::size_t> targets;
    for (std::size_t t = window; t < split.train_end; ++t) targets.push_back(t);
    if (targets.empty()) {
        throw TrainingError("target region has no forecast training windows");
    }
    for (std::size_t epoch = 0; epoch < plan.fine_tune_epochs; ++epoch) {
        std::vector<std::size_t> order = targets;
        shuffle_indices(order, shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += 32) {
            const std::size_t end = std::min(start + 32, order.size());
            const double batch_n = static_cast<double>(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t t = order[k];
                std::vector<std::vector<double>> window_x(
                    series.begin() + static_cast<std::ptrdiff_t>(t - window),
                    series.begin() + static_cast<std::ptrdiff_t>(t));
                const ForecastCache cache = forecast_forward(window_x, params);
                std::vector<double> d_out(kWeatherDims);
                for (std::size_t d = 0; d < kWeatherDims; ++d) {
                    d_out[d] = 2.0 * (cache.output[d] - series[t][d]) /
                               (kWeatherDims * batch_n);
                }
                forecast_backward(params, cache, d_out);
            }
            if (plan.lr > 0.0) {
                sgd_step(params.head_params(), plan.lr, 0.9, 0.0);
            }
            // Gate gradients accumulated during BPTT are discarded: frozen.
            zero_grads(params.params());
        }
    }
}

void fine_tune_detector_head(CnnParams& params, const WorldDataset& ds,
                             const SplitIndices& split, const TileList& tiles,
                             const TransferPlan& plan, RngState& rng) {
    DetectorData data = sample_detector_patches(ds, split.train_ts(), 2, rng, &tiles);
    const bool has_pos = std::find(data.labels.begin(), data.labels.end(),
                                   std::uint8_t{1}) != data.labels.end();
    const bool has_neg = std::find(data.labels.begin(), data.labels.end(),
                                   std::uint8_t{0}) != data.labels.end();
    if (!has_pos || !has_neg) {
        // A region whose tiles are single-class cannot retrain the head;
        // leave the source head in place.
        return;
    }
    for (std::size_t epoch = 0; epoch < plan.fine_tune_epochs; ++epoch) {
        std::vector<std::size_t> order = oversample_indices(data.labels, rng);
        for (std::size_t start = 0; start < order.size(); start += 32) {
            const std::size_t end = std::min(start + 32, order.size());
            const double batch_n = static_cast<double>(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t ex = order[k];
                const CnnForwardCache cache = detect_activity_forward(
                    ds.records[data.record_indices[ex]].activity_patch, params);
                const double d_score =
                    bce_loss_grad(cache.score,
                                  static_cast<double>(data.labels[ex])) /
                    batch_n;
                detect_activity_backward(params, cache, d_score);
            }
            if (plan.lr > 0.0) {
                sgd_step(params.head_params(), plan.lr, 0.9, 0.0);
            }
            zero_grads(params.params());
        }
    }
}
}  // namespace

EnsembleBundle transfer(const EnsembleBundle& source,
                        const WorldDataset& target_ds, const SplitIndices& split,
                        const TransferPlan& plan) {
    if (plan.source_region >= target_ds.config.regions ||
        plan.target_region >= target_ds.config.regions) {
        throw ArgumentError("transfer plan names an unknown region");
    }
    if (source.forecasters.by_region.size() != target_ds.config.regions) {
        throw ConsistencyError("bundle region count does not match dataset");
    }

    EnsembleBundle adapted = source;
    if (plan.fine_tune_epochs == 0) {
        return adapted;  // pure copy
    }

    const RngState root(plan.seed);
    RngState lstm_rng = root.substream("transfer-lstm");
    fine_tune_lstm_head(adapted.forecasters.by_region[plan.target_region],
                        target_ds, split, plan.target_region,
                        adapted.forecasters.stats[plan.target_region],
                        adapted.window, plan, lstm_rng);

    const TileList tiles = target_ds.region_tiles(plan.target_region);
    RngState cnn_rng = root.substream("transfer-cnn");
    fine_tune_detector_head(adapted.detector, target_ds, split, tiles, plan,
                            cnn_rng);

    // Meta fine-tune on target-region stacked features.
    const FeatureTable train_table = build_feature_table(
        target_ds, adapted.forecasters, adapted.detector, adapted.rf_radius,
        adapted.window, split.train_end, plan.target_region);
    const FeatureTable val_table = build_feature_table(
        target_ds, adapted.forecasters, adapted.detector, adapted.rf_radius,
        split.train_end, split.val_end, plan.target_region);

    // Continue from the source meta instead of re-initializing. The epoch
    // loop, oversampling, and best-validation selection mirror what a scratch
    // model gets at the same budget.
    FfnParams meta = adapted.meta;
    FfnParams best = meta;
    RngState shuffle_rng = root.substream("transfer-meta-shuffle");
    RngState dropout_rng = root.substream("transfer-meta-dropout");
    RngState sample_rng = root.substream("transfer-meta-oversample");

    std::vector<std::vector<double>> train_x;
    train_x.reserve(train_table.size());
    for (const auto& row : train_table.rows) {
        train_x.push_back(adapted.feature_norm.apply(row));
    }
    std::vector<std::vector<double>> val_x;
    val_x.reserve(val_table.size());
    for (const auto& row : val_table.rows) {
        val_x.push_back(adapted.feature_norm.apply(row));
    }
    std::vector<std::size_t> base_order;
    const bool both_classes =
        std::find(train_table.labels.begin(), train_table.labels.end(),
                  std::uint8_t{1}) != train_table.labels.end() &&
        std::find(train_table.labels.begin(), train_table.labels.end(),
                  std::uint8_t{0}) != train_table.labels.end();
    if (both_classes) {
        base_order = oversample_indices(train_table.labels, sample_rng);
    } else {
        base_order.resize(train_table.size());
        for (std::size_t i = 0; i < base_order.size(); ++i) base_order[i] = i;
    }

    const std::size_t batch_size = 32;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 0; epoch < plan.fine_tune_epochs; ++epoch) {
        std::vector<std::size_t> order = base_order;
        shuffle_indices(order, shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(start + batch_size, order.size());
            const double batch_n = static_cast<double>(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t ex = order[k];
                const FfnCache cache =
                    meta_forward_cached(train_x[ex], meta, dropout_rng, true);
                const double d_p =
                    bce_loss_grad(cache.probability,
                                  static_cast<double>(train_table.labels[ex])) /
                    batch_n;
                meta_backward(meta, cache, d_p);
            }
            if (plan.lr > 0.0) {
                sgd_step(meta.params(), plan.lr, 0.9, meta.l2);
            } else {
                zero_grads(meta.params());
            }
        }
        std::vector<double> val_scores;
        val_scores.reserve(val_x.size());
        RngState inference_rng;
        for (const auto& x : val_x) {
            val_scores.push_back(meta_forward(x, meta, inference_rng, false));
        }
        const double val_loss = bce_loss_mean(val_scores, val_table.labels);
        if (val_loss < best_val) {
            best_val = val_loss;
            best = meta;
        }
    }
    adapted.meta = best;
    return adapted;
}

double region_val_loss(const EnsembleBundle& bundle, const WorldDataset& ds,
                       const SplitIndices& split, std::size_t region) {
    const FeatureTable val_table = build_feature_table(
        ds, bundle.forecasters, bundle.detector, bundle.rf_radius,
        split.train_end, split.val_end, region);
    return bce_loss_mean(score_table(val_table, bundle), val_table.labels);
}

double scratch_region_val_loss(const WorldDataset& ds, const SplitIndices& split,
                               std::size_t region, std::size_t epochs, double lr,
                               std::uint64_t seed, std::size_t window,
                               double rf_radius) {
    EnsembleTrainOptions options;
    options.window = window;
    options.rf_radius = rf_radius;
    options.only_region = region;
    options.forecaster.epochs = epochs;
    options.forecaster.lr = lr;
    options.forecaster.early_stopping = false;
    options.forecaster.seed = seed;
    options.detector.epochs = epochs;
    options.detector.lr = lr;
    options.detector.early_stopping = false;
    options.detector.seed = seed;
    options.meta.epochs = epochs;
    options.meta.lr = lr;
    options.meta.early_stopping = false;
    options.meta.seed = seed;

    const EnsembleBundle scratch = train_ensemble(ds, split, options);
    return region_val_loss(scratch, ds, split, region);
}

namespace {
void collect_tensors(const EnsembleBundle& bundle,
                     std::vector<std::pair<std::string, const Tensor*>>& out) {
    for (std::size_t r = 0; r < bundle.forecasters.by_region.size(); ++r) {
        const std::string prefix = "region" + std::to_string(r);
        const LstmParams& lstm = bundle.forecasters.by_region[r];
        const ConstParamRefs refs = lstm.params();
        const char* names[] = {".lstm.w_i", ".lstm.w_f", ".lstm.w_o",
                               ".lstm.w_g", ".lstm.b_i", ".lstm.b_f",
                               ".lstm.b_o", ".lstm.b_g", ".lstm.w_out",
                               ".lstm.b_out"};
        for (std::size_t i = 0; i < refs.size(); ++i) {
            out.emplace_back(prefix + names[i], &refs[i]->value);
        }
    }
    const ConstParamRefs det = bundle.detector.params();
    const char* det_names[] = {"detector.conv1_k", "detector.conv1_b",
                               "detector.conv2_k", "detector.conv2_b",
                               "detector.dense_w", "detector.dense_b"};
    for (std::size_t i = 0; i < det.size(); ++i) {
        out.emplace_back(det_names[i], &det[i]->value);
    }
    const auto add_ffn = [&out](const std::string& prefix, const FfnParams& ffn) {
        const ConstParamRefs refs = ffn.params();
        const char* names[] = {".d1_w", ".d1_b", ".d2_w", ".d2_b"};
        for (std::size_t i = 0; i < refs.size(); ++i) {
            out.emplace_back(prefix + names[i], &refs[i]->value);
        }
    };
    add_ffn("meta", bundle.meta);
    add_ffn("head_weather", bundle.head_weather);
    add_ffn("head_vision", bundle.head_vision);
    add_ffn("head_ground", bundle.head_ground);
}
}  // namespace

void save_bundle(const std::filesystem::path& dir, const EnsembleBundle& bundle) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create bundle directory " + dir.string() + ": " +
                      ec.message());
    }

    std::vector<std::pair<std::string, Tensor>> scalars;
    scalars.emplace_back("rf_radius", Tensor::scalar(bundle.rf_radius));
    const auto add_ffn_hyper = [&scalars](const std::string& prefix,
                                          const FfnParams& ffn) {
        scalars.emplace_back(prefix + ".dropout_rate",
                             Tensor::scalar(ffn.dropout_rate));
        scalars.emplace_back(prefix + ".l2", Tensor::scalar(ffn.l2));
    };
    add_ffn_hyper("meta", bundle.meta);
    add_ffn_hyper("head_weather", bundle.head_weather);
    add_ffn_hyper("head_vision", bundle.head_vision);
    add_ffn_hyper("head_ground", bundle.head_ground);
    scalars.emplace_back(
        "feature_norm.mean",
        Tensor({kStackedFeatures},
               std::vector<double>(bundle.feature_norm.mean.begin(),
                                   bundle.feature_norm.mean.end())));
    scalars.emplace_back(
        "feature_norm.sd",
        Tensor({kStackedFeatures},
               std::vector<double>(bundle.feature_norm.sd.begin(),
                                   bundle.feature_norm.sd.end())));
    for (std::size_t r = 0; r < bundle.forecasters.stats.size(); ++r) {
        const RegionStats& stats = bundle.forecasters.stats[r];
        scalars.emplace_back(
            "region" + std::to_string(r) + ".norm_mean",
            Tensor({kWeatherDims},
                   std::vector<double>(stats.mean.begin(), stats.mean.end())));
        scalars.emplace_back(
            "region" + std::to_string(r) + ".norm_sd",
            Tensor({kWeatherDims},
                   std::vector<double>(stats.sd.begin(), stats.sd.end())));
    }

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (const auto& [name, tensor] : scalars) {
        tensors.emplace_back(name, &tensor);
    }
    collect_tensors(bundle, tensors);

    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) {
        throw IoError("cannot write bundle manifest in " + dir.string());
    }
    manifest << kBundleMagic << ' ' << kBundleVersion << ' '
             << hex64(bundle.fingerprint) << ' ' << to_string(bundle.mode) << ' '
             << bundle.window << ' ' << bundle.forecasters.by_region.size()
             << '\n';
    for (const auto& [name, tensor] : tensors) {
        const std::string file = name + ".wftn";
        manifest << name << ' ';
        const auto& shape = tensor->shape();
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i > 0) manifest << 'x';
            manifest << shape[i];
        }
        manifest << ' ' << file << '\n';
        save_tensor(dir / file, *tensor);
    }
    manifest.flush();
    if (!manifest) {
        throw IoError("failed to write bundle manifest in " + dir.string());
    }
}

namespace {
Tensor take_tensor(std::map<std::string, Tensor>& tensors, const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
        throw FormatError("bundle manifest is missing tensor \"" + name + "\"");
    }
    Tensor t = std::move(it->second);
    tensors.erase(it);
    return t;
}

double take_scalar(std::map<std::string, Tensor>& tensors, const std::string& name) {
    const Tensor t = take_tensor(tensors, name);
    if (t.size() != 1) {
        throw FormatError("bundle tensor \"" + name + "\" is not a scalar");
    }
    return t[0];
}

Parameter take_param(std::map<std::string, Tensor>& tensors,
                     const std::string& name) {
    return Parameter(name, take_tensor(tensors, name));
}
}  // namespace

EnsembleBundle load_bundle(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) {
        throw IoError("cannot open bundle manifest in " + dir.string());
    }
    std::string header;
    if (!std::getline(manifest, header)) {
        throw FormatError("bundle manifest is empty");
    }
    std::istringstream head(header);
    std::string magic, fingerprint_hex, mode_name;
    int version = 0;
    std::size_t window = 0, regions = 0;
    if (!(head >> magic >> version >> fingerprint_hex >> mode_name >> window >>
          regions) ||
        magic != kBundleMagic) {
        throw FormatError("bad bundle manifest header: expected \"" +
                          std::string(kBundleMagic) + "\"");
    }
    if (version != kBundleVersion) {
        throw FormatError("unsupported bundle version " + std::to_string(version));
    }
    if (fingerprint_hex.size() != 16) {
        throw FormatError("bad bundle fingerprint field");
    }

    EnsembleBundle bundle;
    bundle.fingerprint = std::stoull(fingerprint_hex, nullptr, 16);
    bundle.mode = ensemble_mode_from_string(mode_name);
    bundle.window = window;

    std::map<std::string, Tensor> tensors;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string name, shape, file;
        if (!(row >> name >> shape >> file)) {
            throw FormatError("bad bundle manifest line: \"" + line + "\"");
        }
        tensors[name] = load_tensor(dir / file);
    }

    bundle.rf_radius = take_scalar(tensors, "rf_radius");
    bundle.feature_norm = FeatureNorm();
    {
        const Tensor mean = take_tensor(tensors, "feature_norm.mean");
        const Tensor sd = take_tensor(tensors, "feature_norm.sd");
        if (mean.size() != kStackedFeatures || sd.size() != kStackedFeatures) {
            throw FormatError("feature_norm tensors have wrong width");
        }
        for (std::size_t i = 0; i < kStackedFeatures; ++i) {
            bundle.feature_norm.mean[i] = mean[i];
            bundle.feature_norm.sd[i] = sd[i];
        }
    }

    bundle.forecasters.window = window;
    bundle.forecasters.by_region.resize(regions);
    bundle.forecasters.stats.resize(regions);
    for (std::size_t r = 0; r < regions; ++r) {
        const std::string prefix = "region" + std::to_string(r);
        const Tensor mean = take_tensor(tensors, prefix + ".norm_mean");
        const Tensor sd = take_tensor(tensors, prefix + ".norm_sd");
        if (mean.size() != kWeatherDims || sd.size() != kWeatherDims) {
            throw FormatError(prefix + " normalization tensors have wrong width");
        }
        for (std::size_t d = 0; d < kWeatherDims; ++d) {
            bundle.forecasters.stats[r].mean[d] = mean[d];
            bundle.forecasters.stats[r].sd[d] = sd[d];
        }

        LstmParams& lstm = bundle.forecasters.by_region[r];
        lstm.w_i = take_param(tensors, prefix + ".lstm.w_i");
        lstm.w_f = take_param(tensors, prefix + ".lstm.w_f");
        lstm.w_o = take_param(tensors, prefix + ".lstm.w_o");
        lstm.w_g = take_param(tensors, prefix + ".lstm.w_g");
        lstm.b_i = take_param(tensors, prefix + ".lstm.b_i");
        lstm.b_f = take_param(tensors, prefix + ".lstm.b_f");
        lstm.b_o = take_param(tensors, prefix + ".lstm.b_o");
        lstm.b_g = take_param(tensors, prefix + ".lstm.b_g");
        lstm.w_out = take_param(tensors, prefix + ".lstm.w_out");
        lstm.b_out = take_param(tensors, prefix + ".lstm.b_out");
        if (lstm.w_i.value.rank() != 2) {
            throw FormatError(prefix + ".lstm.w_i has wrong rank");
        }
        lstm.hidden = lstm.w_i.value.dim(0);
        if (lstm.w_i.value.dim(1) <= lstm.hidden) {
            throw FormatError(prefix + ".lstm.w_i has implausible shape");
        }
        lstm.input_dim = lstm.w_i.value.dim(1) - lstm.hidden;
    }

    bundle.detector.conv1_k = take_param(tensors, "detector.conv1_k");
    bundle.detector.conv1_b = take_param(tensors, "detector.conv1_b");
    bundle.detector.conv2_k = take_param(tensors, "detector.conv2_k");
    bundle.detector.conv2_b = take_param(tensors, "detector.conv2_b");
    bundle.detector.dense_w = take_param(tensors, "detector.dense_w");
    bundle.detector.dense_b = take_param(tensors, "detector.dense_b");

    const auto load_ffn = [&tensors](const std::string& prefix) {
        FfnParams ffn;
        ffn.d1_w = take_param(tensors, prefix + ".d1_w");
        ffn.d1_b = take_param(tensors, prefix + ".d1_b");
        ffn.d2_w = take_param(tensors, prefix + ".d2_w");
        ffn.d2_b = take_param(tensors, prefix + ".d2_b");
        if (ffn.d1_w.value.rank() != 2) {
            throw FormatError(prefix + ".d1_w has wrong rank");
        }
        ffn.input_dim = ffn.d1_w.value.dim(0);
        ffn.dropout_rate = take_scalar(tensors, prefix + ".dropout_rate");
        ffn.l2 = take_scalar(tensors, prefix + ".l2");
        return ffn;
    };
    bundle.meta = load_ffn("meta");
    bundle.head_weather = load_ffn("head_weather");
    bundle.head_vision = load_ffn("head_vision");
    bundle.head_ground = load_ffn("head_ground");

    return bundle;
}

}  // namespace firecast
