#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "firecast/world.hpp"

namespace firecast {

// Feature rasters derived from RF event counts and the infrastructure mask.

// Gaussian kernel smoothing of event counts:
//   density(u) = sum_v counts(v) * exp(-d(u,v)^2 / (2*radius^2))
// over Euclidean grid distance, truncated at d <= 3*radius.
double rf_density_at(const std::vector<std::uint32_t>& counts, std::size_t rows,
                     std::size_t cols, double radius, std::size_t row,
                     std::size_t col);
std::vector<double> rf_density(const std::vector<std::uint32_t>& counts,
                               std::size_t rows, std::size_t cols, double radius);

// Exact Euclidean distance to the nearest mask cell via exhaustive scan;
// an empty mask yields the sentinel 1e9 everywhere.
inline constexpr double kEmptyMaskSentinel = 1e9;
std::vector<double> infrastructure_distance(const std::vector<std::uint8_t>& mask,
                                            std::size_t rows, std::size_t cols);

struct GroundFeatures {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double radius = 0.0;
    std::vector<std::vector<double>> rf_density_by_t;  // [T][rows*cols]
    std::vector<double> infra_distance;                // static grid
};

inline constexpr double kDefaultRfRadius = 0.8;

GroundFeatures compute_ground_features(const WorldDataset& ds,
                                       double radius = kDefaultRfRadius);

// [rf_density, 1/(1 + infra_distance)] for one tile at one time step.
std::array<double, 2> ground_feature_vector(std::size_t row, std::size_t col,
                                            std::size_t t,
                                            const GroundFeatures& features);

}  // namespace firecast
