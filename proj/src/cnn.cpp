#include "firecast/cnn.hpp"

#include <algorithm>
#include <cmath>

#include "firecast/errors.hpp"
#include "firecast/metrics.hpp"

namespace firecast {

namespace {
constexpr std::size_t kConv1Filters = 8;
constexpr std::size_t kConv2Filters = 16;
constexpr std::size_t kKernel = 3;

Tensor he_init(std::vector<std::size_t> shape, std::size_t fan_in, RngState& rng) {
    Tensor t(std::move(shape));
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = sd * rng.next_normal();
    }
    return t;
}
}  // namespace

CnnParams::CnnParams(RngState& rng, const std::string& prefix) {
    conv1_k = Parameter(prefix + ".conv1_k",
                        he_init({kConv1Filters, 1, kKernel, kKernel},
                                kKernel * kKernel, rng));
    conv1_b = Parameter(prefix + ".conv1_b", Tensor({kConv1Filters}));
    conv2_k = Parameter(prefix + ".conv2_k",
                        he_init({kConv2Filters, kConv1Filters, kKernel, kKernel},
                                kConv1Filters * kKernel * kKernel, rng));
    conv2_b = Parameter(prefix + ".conv2_b", Tensor({kConv2Filters}));
    dense_w = Parameter(prefix + ".dense_w",
                        he_init({kConv2Filters, 1}, kConv2Filters, rng));
    dense_b = Parameter(prefix + ".dense_b", Tensor({1}));
}

ParamRefs CnnParams::params() {
    return {&conv1_k, &conv1_b, &conv2_k, &conv2_b, &dense_w, &dense_b};
}

ConstParamRefs CnnParams::params() const {
    return {&conv1_k, &conv1_b, &conv2_k, &conv2_b, &dense_w, &dense_b};
}

ParamRefs CnnParams::conv_params() {
    return {&conv1_k, &conv1_b, &conv2_k, &conv2_b};
}

ParamRefs CnnParams::head_params() { return {&dense_w, &dense_b}; }

CnnForwardCache detect_activity_forward(const Tensor& patch,
                                        const CnnParams& params) {
    if (patch.rank() != 3 || patch.dim(0) != 1) {
        throw DimensionError("detector patch must be [1 x h x w], got " +
                             patch.shape_string());
    }
    CnnForwardCache cache;
    cache.patch = patch;
    cache.conv1_pre =
        add_channel_bias(conv2d(patch, params.conv1_k.value, 1, 0),
                         params.conv1_b.value);
    cache.conv1_act = relu(cache.conv1_pre);
    cache.pooled = maxpool2(cache.conv1_act);
    cache.conv2_pre =
        add_channel_bias(conv2d(cache.pooled, params.conv2_k.value, 1, 0),
                         params.conv2_b.value);
    cache.conv2_act = relu(cache.conv2_pre);
    cache.gap = global_avg_pool(cache.conv2_act);
    const Tensor logits =
        dense(cache.gap, params.dense_w.value, params.dense_b.value);
    cache.logit = logits[0];
    cache.score = sigmoid(cache.logit);
    cache.recorded = true;
    return cache;
}

double detect_activity(const Tensor& patch, const CnnParams& params) {
    return detect_activity_forward(patch, params).score;
}

void detect_activity_backward(CnnParams& params, const CnnForwardCache& cache,
                              double d_score) {
    if (!cache.recorded) {
        throw StateError("detect_activity_backward called before forward");
    }
    const double d_logit = d_score * cache.score * (1.0 - cache.score);

    const Tensor d_logits({1}, {d_logit});
    DenseGrads dg = dense_backward(cache.gap, params.dense_w.value, d_logits);
    for (std::size_t i = 0; i < dg.w_grad.size(); ++i) {
        params.dense_w.grad[i] += dg.w_grad[i];
    }
    params.dense_b.grad[0] += dg.b_grad[0];

    Tensor d_act2 = global_avg_pool_backward(cache.conv2_act.shape(), dg.x_grad);
    Tensor d_pre2 = relu_backward(cache.conv2_pre, d_act2);
    const Tensor d_b2 = channel_bias_backward(d_pre2);
    for (std::size_t i = 0; i < d_b2.size(); ++i) {
        params.conv2_b.grad[i] += d_b2[i];
    }
    Conv2dGrads c2 = conv2d_backward(cache.pooled, params.conv2_k.value, 1, 0, d_pre2);
    for (std::size_t i = 0; i < c2.kernel_grad.size(); ++i) {
        params.conv2_k.grad[i] += c2.kernel_grad[i];
    }

    Tensor d_pool = maxpool2_backward(cache.conv1_act, c2.input_grad);
    Tensor d_pre1 = relu_backward(cache.conv1_pre, d_pool);
    const Tensor d_b1 = channel_bias_backward(d_pre1);
    for (std::size_t i = 0; i < d_b1.size(); ++i) {
        params.conv1_b.grad[i] += d_b1[i];
    }
    Conv2dGrads c1 = conv2d_backward(cache.patch, params.conv1_k.value, 1, 0, d_pre1);
    for (std::size_t i = 0; i < c1.kernel_grad.size(); ++i) {
        params.conv1_k.grad[i] += c1.kernel_grad[i];
    }
}

DetectorData sample_detector_patches(const WorldDataset& ds,
                                     const std::vector<std::size_t>& ts,
                                     std::size_t per_tile, RngState& rng,
                                     const TileList* tiles) {
    if (ts.empty() || per_tile == 0) {
        throw ArgumentError("detector sampling needs a non-empty time range");
    }
    TileList all;
    if (!tiles) {
        all.reserve(ds.config.rows * ds.config.cols);
        for (std::size_t row = 0; row < ds.config.rows; ++row) {
            for (std::size_t col = 0; col < ds.config.cols; ++col) {
                all.emplace_back(row, col);
            }
        }
        tiles = &all;
    }
    DetectorData data;
    data.record_indices.reserve(tiles->size() * per_tile);
    data.labels.reserve(tiles->size() * per_tile);
    for (const auto& [row, col] : *tiles) {
        for (std::size_t k = 0; k < per_tile; ++k) {
            const std::size_t t = ts[rng.next_below(ts.size())];
            data.record_indices.push_back(ds.record_index(row, col, t));
            data.labels.push_back(ds.activity_truth[ds.tile_index(row, col)]);
        }
    }
    return data;
}

CnnParams train_detector(const WorldDataset& ds, const SplitIndices& split,
                         const TrainConfig& config, TrainHistory* history,
                         std::size_t per_tile_train, const TileList* tiles) {
    config.validate();

    const RngState root(config.seed);
    RngState sample_rng = root.substream("detector-sample");
    const DetectorData train_data = sample_detector_patches(
        ds, split.train_ts(), per_tile_train, sample_rng, tiles);
    const DetectorData val_data =
        sample_detector_patches(ds, split.val_ts(), 1, sample_rng, tiles);

    const bool has_pos = std::find(train_data.labels.begin(),
                                   train_data.labels.end(),
                                   std::uint8_t{1}) != train_data.labels.end();
    const bool has_neg = std::find(train_data.labels.begin(),
                                   train_data.labels.end(),
                                   std::uint8_t{0}) != train_data.labels.end();
    if (!has_pos || !has_neg) {
        throw TrainingError("detector training set contains a single class");
    }

    RngState init_rng = root.substream("detector-init");
    CnnParams params(init_rng, "detector");
    CnnParams best = params;
    RngState shuffle_rng = root.substream("detector-shuffle");

    auto score_all = [&](const DetectorData& data) {
        std::vector<double> scores;
        scores.reserve(data.record_indices.size());
        for (const std::size_t idx : data.record_indices) {
            scores.push_back(
                detect_activity(ds.records[idx].activity_patch, params));
        }
        return scores;
    };

    FitHooks hooks;
    hooks.run_train_epoch = [&](std::size_t) {
        std::vector<std::size_t> order =
            config.oversample
                ? oversample_indices(train_data.labels, shuffle_rng)
                : [&] {
                      std::vector<std::size_t> all(train_data.labels.size());
                      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
                      shuffle_indices(all, shuffle_rng);
                      return all;
                  }();
        for (std::size_t start = 0; start < order.size();
             start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            const double batch_n = static_cast<double>(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t ex = order[k];
                const CnnForwardCache cache = detect_activity_forward(
                    ds.records[train_data.record_indices[ex]].activity_patch,
                    params);
                const double d_score =
                    bce_loss_grad(cache.score,
                                  static_cast<double>(train_data.labels[ex])) /
                    batch_n;
                detect_activity_backward(params, cache, d_score);
            }
            if (config.lr > 0.0) {
                sgd_step(params.params(), config.lr, config.momentum, config.l2);
            } else {
                zero_grads(params.params());
            }
        }
    };
    hooks.train_loss = [&] {
        return bce_loss_mean(score_all(train_data), train_data.labels);
    };
    hooks.val_loss = [&] {
        return bce_loss_mean(score_all(val_data), val_data.labels);
    };
    hooks.val_auc = [&] { return auc_roc(score_all(val_data), val_data.labels); };
    hooks.snapshot_best = [&] { best = params; };
    hooks.restore_best = [&] { params = best; };

    const TrainHistory h = fit(config, hooks);
    if (history) *history = h;
    return params;
}

}  // namespace firecast
