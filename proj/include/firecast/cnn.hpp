#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "firecast/ops.hpp"
#include "firecast/optim.hpp"
#include "firecast/train.hpp"
#include "firecast/world.hpp"

namespace firecast {

// Fixed detector architecture:
//   conv(8,3x3)-relu-maxpool(2)-conv(16,3x3)-relu-gap-dense(1)-sigmoid
// No padding; a 9x9 patch shrinks 9 -> 7 -> 3 -> 1.
struct CnnParams {
    Parameter conv1_k, conv1_b;  // [8x1x3x3], [8]
    Parameter conv2_k, conv2_b;  // [16x8x3x3], [16]
    Parameter dense_w, dense_b;  // [16x1], [1]

    CnnParams() = default;
    CnnParams(RngState& rng, const std::string& prefix);

    ParamRefs params();
    ConstParamRefs params() const;
    // Convolution stages: frozen under transfer learning.
    ParamRefs conv_params();
    ParamRefs head_params();
};

struct CnnForwardCache {
    Tensor patch;
    Tensor conv1_pre, conv1_act, pooled;
    Tensor conv2_pre, conv2_act, gap;
    double logit = 0.0;
    double score = 0.0;
    bool recorded = false;
};

// Activity score in [0,1] for one patch. Pure function of (patch, params).
double detect_activity(const Tensor& patch, const CnnParams& params);

CnnForwardCache detect_activity_forward(const Tensor& patch,
                                        const CnnParams& params);
// d_score is dLoss/d(score); parameter gradients accumulate.
void detect_activity_backward(CnnParams& params, const CnnForwardCache& cache,
                              double d_score);

// Trains against the generator's planted-activity flag with BCE. Patches are
// subsampled per tile: `per_tile_train` random train-split timesteps and one
// validation timestep each.
struct DetectorData {
    std::vector<std::size_t> record_indices;
    std::vector<std::uint8_t> labels;
};
using TileList = std::vector<std::pair<std::size_t, std::size_t>>;
DetectorData sample_detector_patches(const WorldDataset& ds,
                                     const std::vector<std::size_t>& ts,
                                     std::size_t per_tile, RngState& rng,
                                     const TileList* tiles = nullptr);

CnnParams train_detector(const WorldDataset& ds, const SplitIndices& split,
                         const TrainConfig& config,
                         TrainHistory* history = nullptr,
                         std::size_t per_tile_train = 3,
                         const TileList* tiles = nullptr);

}  // namespace firecast
