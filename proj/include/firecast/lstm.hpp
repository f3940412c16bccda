#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "firecast/optim.hpp"
#include "firecast/rng.hpp"
#include "firecast/train.hpp"
#include "firecast/world.hpp"

namespace firecast {

inline constexpr std::size_t kDefaultLstmHidden = 16;
inline constexpr std::size_t kDefaultForecastWindow = 8;

// Standard LSTM cell with a linear projection head:
//   i,f,o = sigmoid(W.[x;h] + b),  g = tanh(W_g.[x;h] + b_g)
//   c = f*c_prev + i*g,  h = o*tanh(c),  y = h.w_out + b_out
// Forget-gate bias starts at 1.0.
struct LstmParams {
    std::size_t input_dim = 0;
    std::size_t hidden = 0;
    Parameter w_i, w_f, w_o, w_g;  // [H x (P+H)]
    Parameter b_i, b_f, b_o, b_g;  // [H]
    Parameter w_out;               // [H x P]
    Parameter b_out;               // [P]

    LstmParams() = default;
    LstmParams(std::size_t input_dim_, std::size_t hidden_, RngState& rng,
               const std::string& prefix);

    ParamRefs params();
    ConstParamRefs params() const;
    // Gate weights and biases: the frozen set under transfer learning.
    ParamRefs gate_params();
    // The projection head, which stays tunable.
    ParamRefs head_params();
};

// Per-step cache holding what the analytic gradients need.
struct LstmStep {
    std::vector<double> x, h_prev, c_prev;
    std::vector<double> i, f, o, g, c, tanh_c, h;
    bool recorded = false;
};

void lstm_cell_forward(const LstmParams& params, const std::vector<double>& x,
                       const std::vector<double>& h_prev,
                       const std::vector<double>& c_prev, LstmStep& step);

// Consumes dh/dc for this step, emits dx and the gradients w.r.t. the
// previous state; parameter gradients accumulate into params.*.grad.
void lstm_cell_backward(LstmParams& params, const LstmStep& step,
                        const std::vector<double>& dh,
                        const std::vector<double>& dc, std::vector<double>& dx,
                        std::vector<double>& dh_prev, std::vector<double>& dc_prev);

struct ForecastCache {
    std::vector<LstmStep> steps;
    std::vector<double> final_h;
    std::vector<double> output;
    bool recorded = false;
};

// Unrolls the cell over the window from zero state and projects the final
// hidden vector to an input_dim-wide prediction.
std::vector<double> forecast(const std::vector<std::vector<double>>& window,
                             const LstmParams& params);
ForecastCache forecast_forward(const std::vector<std::vector<double>>& window,
                               const LstmParams& params);
// Backpropagation through time from d(output); accumulates into grads.
void forecast_backward(LstmParams& params, const ForecastCache& cache,
                       const std::vector<double>& d_output);

// Per-region z-normalization statistics from the train split.
struct RegionStats {
    std::array<double, kWeatherDims> mean{};
    std::array<double, kWeatherDims> sd{};
    bool operator==(const RegionStats&) const = default;
};

std::vector<double> normalize_weather(const std::array<double, kWeatherDims>& w,
                                      const RegionStats& stats);
std::array<double, kWeatherDims> denormalize_weather(
    const std::vector<double>& w, const RegionStats& stats);

struct RegionForecasterSet {
    std::size_t window = kDefaultForecastWindow;
    std::vector<LstmParams> by_region;
    std::vector<RegionStats> stats;
};

// Mean squared error of the predict-previous-value baseline over the same
// normalized one-step-ahead task; the trained model has to beat this.
double persistence_mse(const std::vector<std::vector<double>>& normalized_series,
                       std::size_t window, std::size_t t_begin, std::size_t t_end);

double forecaster_mse(const LstmParams& params,
                      const std::vector<std::vector<double>>& normalized_series,
                      std::size_t window, std::size_t t_begin, std::size_t t_end);

// Trains one LSTM per region on that region's weather series only,
// one-step-ahead MSE via BPTT. The optional probe observes which tiles the
// data assembly touches. With only_region set, a single LSTM is trained on
// that region and its parameters are replicated into every slot (stats stay
// per-region); that is how single-context bundles for transfer are built.
RegionForecasterSet train_region_forecasters(
    const WorldDataset& ds, const SplitIndices& split, const TrainConfig& config,
    std::size_t window = kDefaultForecastWindow,
    std::vector<TrainHistory>* histories = nullptr,
    const WorldDataset::TileProbe& probe = nullptr,
    std::optional<std::size_t> only_region = std::nullopt);

}  // namespace firecast
