#include "firecast/lstm.hpp"

#include <cmath>
#include <limits>

#include "firecast/errors.hpp"
#include "firecast/ops.hpp"

namespace firecast {

namespace {
Tensor uniform_init(std::vector<std::size_t> shape, double bound, RngState& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = rng.next_uniform(-bound, bound);
    }
    return t;
}
}  // namespace

LstmParams::LstmParams(std::size_t input_dim_, std::size_t hidden_, RngState& rng,
                       const std::string& prefix)
    : input_dim(input_dim_), hidden(hidden_) {
    const std::size_t z = input_dim + hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(z));
    w_i = Parameter(prefix + ".w_i", uniform_init({hidden, z}, bound, rng));
    w_f = Parameter(prefix + ".w_f", uniform_init({hidden, z}, bound, rng));
    w_o = Parameter(prefix + ".w_o", uniform_init({hidden, z}, bound, rng));
    w_g = Parameter(prefix + ".w_g", uniform_init({hidden, z}, bound, rng));
    b_i = Parameter(prefix + ".b_i", Tensor({hidden}));
    b_f = Parameter(prefix + ".b_f", Tensor::full({hidden}, 1.0));
    b_o = Parameter(prefix + ".b_o", Tensor({hidden}));
    b_g = Parameter(prefix + ".b_g", Tensor({hidden}));
    const double out_bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    w_out = Parameter(prefix + ".w_out",
                      uniform_init({hidden, input_dim}, out_bound, rng));
    b_out = Parameter(prefix + ".b_out", Tensor({input_dim}));
}

ParamRefs LstmParams::params() {
    return {&w_i, &w_f, &w_o, &w_g, &b_i, &b_f, &b_o, &b_g, &w_out, &b_out};
}

ConstParamRefs LstmParams::params() const {
    return {&w_i, &w_f, &w_o, &w_g, &b_i, &b_f, &b_o, &b_g, &w_out, &b_out};
}

ParamRefs LstmParams::gate_params() {
    return {&w_i, &w_f, &w_o, &w_g, &b_i, &b_f, &b_o, &b_g};
}

ParamRefs LstmParams::head_params() { return {&w_out, &b_out}; }

void lstm_cell_forward(const LstmParams& params, const std::vector<double>& x,
                       const std::vector<double>& h_prev,
                       const std::vector<double>& c_prev, LstmStep& step) {
    const std::size_t p = params.input_dim;
    const std::size_t h = params.hidden;
    if (x.size() != p || h_prev.size() != h || c_prev.size() != h) {
        throw DimensionError("lstm_cell_forward: input sizes (" +
                             std::to_string(x.size()) + "," +
                             std::to_string(h_prev.size()) + "," +
                             std::to_string(c_prev.size()) +
                             ") do not match params (P=" + std::to_string(p) +
                             ", H=" + std::to_string(h) + ")");
    }
    step.x = x;
    step.h_prev = h_prev;
    step.c_prev = c_prev;
    step.i.assign(h, 0.0);
    step.f.assign(h, 0.0);
    step.o.assign(h, 0.0);
    step.g.assign(h, 0.0);
    step.c.assign(h, 0.0);
    step.tanh_c.assign(h, 0.0);
    step.h.assign(h, 0.0);

    const std::size_t z = p + h;
    const double* wi = params.w_i.value.data();
    const double* wf = params.w_f.value.data();
    const double* wo = params.w_o.value.data();
    const double* wg = params.w_g.value.data();
    for (std::size_t u = 0; u < h; ++u) {
        double acc_i = params.b_i.value[u];
        double acc_f = params.b_f.value[u];
        double acc_o = params.b_o.value[u];
        double acc_g = params.b_g.value[u];
        const std::size_t row = u * z;
        for (std::size_t k = 0; k < p; ++k) {
            acc_i += wi[row + k] * x[k];
            acc_f += wf[row + k] * x[k];
            acc_o += wo[row + k] * x[k];
            acc_g += wg[row + k] * x[k];
        }
        for (std::size_t k = 0; k < h; ++k) {
            acc_i += wi[row + p + k] * h_prev[k];
            acc_f += wf[row + p + k] * h_prev[k];
            acc_o += wo[row + p + k] * h_prev[k];
            acc_g += wg[row + p + k] * h_prev[k];
        }
        step.i[u] = sigmoid(acc_i);
        step.f[u] = sigmoid(acc_f);
        step.o[u] = sigmoid(acc_o);
        step.g[u] = std::tanh(acc_g);
        step.c[u] = step.f[u] * c_prev[u] + step.i[u] * step.g[u];
        step.tanh_c[u] = std::tanh(step.c[u]);
        step.h[u] = step.o[u] * step.tanh_c[u];
    }
    step.recorded = true;
}

void lstm_cell_backward(LstmParams& params, const LstmStep& step,
                        const std::vector<double>& dh,
                        const std::vector<double>& dc, std::vector<double>& dx,
                        std::vector<double>& dh_prev,
                        std::vector<double>& dc_prev) {
    if (!step.recorded) {
        throw StateError("lstm_cell_backward called before forward");
    }
    const std::size_t p = params.input_dim;
    const std::size_t h = params.hidden;
    const std::size_t z = p + h;
    dx.assign(p, 0.0);
    dh_prev.assign(h, 0.0);
    dc_prev.assign(h, 0.0);

    const double* wi = params.w_i.value.data();
    const double* wf = params.w_f.value.data();
    const double* wo = params.w_o.value.data();
    const double* wg = params.w_g.value.data();
    double* gwi = params.w_i.grad.data();
    double* gwf = params.w_f.grad.data();
    double* gwo = params.w_o.grad.data();
    double* gwg = params.w_g.grad.data();

    for (std::size_t u = 0; u < h; ++u) {
        const double d_o = dh[u] * step.tanh_c[u];
        const double dc_total =
            dc[u] + dh[u] * step.o[u] * (1.0 - step.tanh_c[u] * step.tanh_c[u]);
        const double d_f = dc_total * step.c_prev[u];
        const double d_i = dc_total * step.g[u];
        const double d_g = dc_total * step.i[u];
        dc_prev[u] = dc_total * step.f[u];

        const double dpre_i = d_i * step.i[u] * (1.0 - step.i[u]);
        const double dpre_f = d_f * step.f[u] * (1.0 - step.f[u]);
        const double dpre_o = d_o * step.o[u] * (1.0 - step.o[u]);
        const double dpre_g = d_g * (1.0 - step.g[u] * step.g[u]);

        params.b_i.grad[u] += dpre_i;
        params.b_f.grad[u] += dpre_f;
        params.b_o.grad[u] += dpre_o;
        params.b_g.grad[u] += dpre_g;

        const std::size_t row = u * z;
        for (std::size_t k = 0; k < p; ++k) {
            gwi[row + k] += dpre_i * step.x[k];
            gwf[row + k] += dpre_f * step.x[k];
            gwo[row + k] += dpre_o * step.x[k];
            gwg[row + k] += dpre_g * step.x[k];
            dx[k] += wi[row + k] * dpre_i + wf[row + k] * dpre_f +
                     wo[row + k] * dpre_o + wg[row + k] * dpre_g;
        }
        for (std::size_t k = 0; k < h; ++k) {
            gwi[row + p + k] += dpre_i * step.h_prev[k];
            gwf[row + p + k] += dpre_f * step.h_prev[k];
            gwo[row + p + k] += dpre_o * step.h_prev[k];
            gwg[row + p + k] += dpre_g * step.h_prev[k];
            dh_prev[k] += wi[row + p + k] * dpre_i + wf[row + p + k] * dpre_f +
                          wo[row + p + k] * dpre_o + wg[row + p + k] * dpre_g;
        }
    }
}

ForecastCache forecast_forward(const std::vector<std::vector<double>>& window,
                               const LstmParams& params) {
    if (window.empty()) {
        throw ArgumentError("forecast requires a non-empty window");
    }
    ForecastCache cache;
    cache.steps.resize(window.size());
    std::vector<double> h(params.hidden, 0.0);
    std::vector<double> c(params.hidden, 0.0);
    for (std::size_t s = 0; s < window.size(); ++s) {
        lstm_cell_forward(params, window[s], h, c, cache.steps[s]);
        h = cache.steps[s].h;
        c = cache.steps[s].c;
    }
    cache.final_h = h;

    cache.output.assign(params.input_dim, 0.0);
    const double* w = params.w_out.value.data();
    for (std::size_t d = 0; d < params.input_dim; ++d) {
        double acc = params.b_out.value[d];
        for (std::size_t u = 0; u < params.hidden; ++u) {
            acc += h[u] * w[u * params.input_dim + d];
        }
        cache.output[d] = acc;
    }
    cache.recorded = true;
    return cache;
}

std::vector<double> forecast(const std::vector<std::vector<double>>& window,
                             const LstmParams& params) {
    return forecast_forward(window, params).output;
}

void forecast_backward(LstmParams& params, const ForecastCache& cache,
                       const std::vector<double>& d_output) {
    if (!cache.recorded) {
        throw StateError("forecast_backward called before forward");
    }
    if (d_output.size() != params.input_dim) {
        throw DimensionError("forecast_backward upstream has wrong width");
    }
    const std::size_t p = params.input_dim;
    const std::size_t h = params.hidden;

    std::vector<double> dh(h, 0.0);
    const double* w = params.w_out.value.data();
    double* gw = params.w_out.grad.data();
    for (std::size_t d = 0; d < p; ++d) {
        params.b_out.grad[d] += d_output[d];
        for (std::size_t u = 0; u < h; ++u) {
            gw[u * p + d] += d_output[d] * cache.final_h[u];
            dh[u] += d_output[d] * w[u * p + d];
        }
    }

    std::vector<double> dc(h, 0.0);
    std::vector<double> dx, dh_prev, dc_prev;
    for (std::size_t s = cache.steps.size(); s-- > 0;) {
        lstm_cell_backward(params, cache.steps[s], dh, dc, dx, dh_prev, dc_prev);
        dh = dh_prev;
        dc = dc_prev;
    }
}

std::vector<double> normalize_weather(const std::array<double, kWeatherDims>& w,
                                      const RegionStats& stats) {
    std::vector<double> out(kWeatherDims);
    for (std::size_t d = 0; d < kWeatherDims; ++d) {
        out[d] = (w[d] - stats.mean[d]) / stats.sd[d];
    }
    return out;
}

std::array<double, kWeatherDims> denormalize_weather(const std::vector<double>& w,
                                                     const RegionStats& stats) {
    if (w.size() != kWeatherDims) {
        throw DimensionError("denormalize_weather expects a P-wide vector");
    }
    std::array<double, kWeatherDims> out{};
    for (std::size_t d = 0; d < kWeatherDims; ++d) {
        out[d] = w[d] * stats.sd[d] + stats.mean[d];
    }
    return out;
}

namespace {
RegionStats train_stats(
    const std::vector<std::array<double, kWeatherDims>>& series,
    std::size_t train_end) {
    RegionStats stats;
    const auto n = static_cast<double>(train_end);
    for (std::size_t d = 0; d < kWeatherDims; ++d) {
        double mean = 0.0;
        for (std::size_t t = 0; t < train_end; ++t) mean += series[t][d];
        mean /= n;
        double var = 0.0;
        for (std::size_t t = 0; t < train_end; ++t) {
            const double diff = series[t][d] - mean;
            var += diff * diff;
        }
        stats.mean[d] = mean;
        stats.sd[d] = std::max(std::sqrt(var / n), 1e-8);
    }
    return stats;
}

std::vector<std::vector<double>> normalize_series(
    const std::vector<std::array<double, kWeatherDims>>& series,
    const RegionStats& stats) {
    std::vector<std::vector<double>> out(series.size());
    for (std::size_t t = 0; t < series.size(); ++t) {
        out[t] = normalize_weather(series[t], stats);
    }
    return out;
}

std::vector<std::vector<double>> window_of(
    const std::vector<std::vector<double>>& series, std::size_t t,
    std::size_t window) {
    return {series.begin() + static_cast<std::ptrdiff_t>(t - window),
            series.begin() + static_cast<std::ptrdiff_t>(t)};
}
}  // namespace

double persistence_mse(const std::vector<std::vector<double>>& series,
                       std::size_t window, std::size_t t_begin, std::size_t t_end) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t t = std::max(t_begin, window); t < t_end; ++t) {
        for (std::size_t d = 0; d < kWeatherDims; ++d) {
            const double diff = series[t][d] - series[t - 1][d];
            total += diff * diff;
        }
        ++n;
    }
    if (n == 0) {
        throw ArgumentError("persistence_mse: empty evaluation range");
    }
    return total / (static_cast<double>(n) * kWeatherDims);
}

double forecaster_mse(const LstmParams& params,
                      const std::vector<std::vector<double>>& series,
                      std::size_t window, std::size_t t_begin, std::size_t t_end) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t t = std::max(t_begin, window); t < t_end; ++t) {
        const std::vector<double> pred = forecast(window_of(series, t, window), params);
        for (std::size_t d = 0; d < kWeatherDims; ++d) {
            const double diff = pred[d] - series[t][d];
            total += diff * diff;
        }
        ++n;
    }
    if (n == 0) {
        throw ArgumentError("forecaster_mse: empty evaluation range");
    }
    return total / (static_cast<double>(n) * kWeatherDims);
}

RegionForecasterSet train_region_forecasters(
    const WorldDataset& ds, const SplitIndices& split, const TrainConfig& config,
    std::size_t window, std::vector<TrainHistory>* histories,
    const WorldDataset::TileProbe& probe, std::optional<std::size_t> only_region) {
    config.validate();
    if (window == 0) {
        throw ConfigError("forecast window must be positive");
    }
    if (only_region && *only_region >= ds.config.regions) {
        throw ArgumentError("unknown region " + std::to_string(*only_region));
    }

    RegionForecasterSet set;
    set.window = window;
    set.by_region.resize(ds.config.regions);
    set.stats.reserve(ds.config.regions);

    const RngState root(config.seed);
    for (std::size_t region = 0; region < ds.config.regions; ++region) {
        const auto raw = ds.region_weather_series(region, probe);
        const RegionStats stats = train_stats(raw, split.train_end);
        set.stats.push_back(stats);
        if (only_region && region != *only_region) continue;
        const auto series = normalize_series(raw, stats);

        if (split.train_end <= window) {
            throw TrainingError("region " + std::to_string(region) +
                                ": train split shorter than forecast window");
        }

        std::vector<std::size_t> train_targets;
        for (std::size_t t = window; t < split.train_end; ++t) {
            train_targets.push_back(t);
        }

        RngState init_rng = root.substream("lstm-init", region);
        LstmParams params(kWeatherDims, kDefaultLstmHidden, init_rng,
                          "region" + std::to_string(region) + ".lstm");
        RngState shuffle_rng = root.substream("lstm-shuffle", region);

        // Plain fixed-epoch BPTT loop. Unlike the classifier stages this
        // keeps the final model: the forecaster must fit its region's series,
        // and one-step validation MSE on a later season plateaus long before
        // the fit is done.
        TrainHistory history;
        for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
            std::vector<std::size_t> order = train_targets;
            shuffle_indices(order, shuffle_rng);
            for (std::size_t start = 0; start < order.size();
                 start += config.batch_size) {
                const std::size_t end =
                    std::min(start + config.batch_size, order.size());
                const double batch_n = static_cast<double>(end - start);
                for (std::size_t k = start; k < end; ++k) {
                    const std::size_t t = order[k];
                    const ForecastCache cache =
                        forecast_forward(window_of(series, t, window), params);
                    std::vector<double> d_out(kWeatherDims);
                    for (std::size_t d = 0; d < kWeatherDims; ++d) {
                        d_out[d] = 2.0 * (cache.output[d] - series[t][d]) /
                                   (kWeatherDims * batch_n);
                    }
                    forecast_backward(params, cache, d_out);
                }
                if (config.lr > 0.0) {
                    sgd_step(params.params(), config.lr, config.momentum, config.l2);
                } else {
                    zero_grads(params.params());
                }
            }
            EpochRow row;
            row.epoch = epoch;
            row.train_loss =
                forecaster_mse(params, series, window, window, split.train_end);
            row.val_loss = forecaster_mse(params, series, window, split.train_end,
                                          split.val_end);
            row.val_auc = std::numeric_limits<double>::quiet_NaN();
            history.rows.push_back(row);
            history.stopped_epoch = epoch;
            if (history.best_epoch == 0 ||
                row.val_loss < history.rows[history.best_epoch - 1].val_loss) {
                history.best_epoch = epoch;
            }
        }
        if (histories) histories->push_back(history);

        set.by_region[region] = std::move(params);
    }

    if (only_region) {
        // Single-context training: every slot carries the trained region's
        // parameters, so the bundle can be applied to any region and
        // fine-tuned there.
        for (std::size_t region = 0; region < ds.config.regions; ++region) {
            if (region != *only_region) {
                set.by_region[region] = set.by_region[*only_region];
            }
        }
    }
    return set;
}

}  // namespace firecast
