#include "firecast/ground.hpp"

#include <cmath>
#include <limits>

#include "firecast/errors.hpp"

namespace firecast {

double rf_density_at(const std::vector<std::uint32_t>& counts, std::size_t rows,
                     std::size_t cols, double radius, std::size_t row,
                     std::size_t col) {
    if (radius <= 0.0) {
        throw ConfigError("rf_density radius must be positive");
    }
    if (counts.size() != rows * cols) {
        throw DimensionError("rf_density counts grid has wrong size");
    }
    if (row >= rows || col >= cols) {
        throw ArgumentError("rf_density query outside grid");
    }
    const double cutoff = 3.0 * radius;
    const double cutoff_sq = cutoff * cutoff;
    const auto reach = static_cast<std::ptrdiff_t>(std::ceil(cutoff));
    const auto r0 = static_cast<std::ptrdiff_t>(row);
    const auto c0 = static_cast<std::ptrdiff_t>(col);
    double density = 0.0;
    for (std::ptrdiff_t dr = -reach; dr <= reach; ++dr) {
        const std::ptrdiff_t r = r0 + dr;
        if (r < 0 || r >= static_cast<std::ptrdiff_t>(rows)) continue;
        for (std::ptrdiff_t dc = -reach; dc <= reach; ++dc) {
            const std::ptrdiff_t c = c0 + dc;
            if (c < 0 || c >= static_cast<std::ptrdiff_t>(cols)) continue;
            const auto count = counts[static_cast<std::size_t>(r) * cols +
                                      static_cast<std::size_t>(c)];
            if (count == 0) continue;
            const double dist_sq = static_cast<double>(dr * dr + dc * dc);
            if (dist_sq > cutoff_sq) continue;
            density += static_cast<double>(count) *
                       std::exp(-dist_sq / (2.0 * radius * radius));
        }
    }
    return density;
}

std::vector<double> rf_density(const std::vector<std::uint32_t>& counts,
                               std::size_t rows, std::size_t cols, double radius) {
    std::vector<double> grid(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            grid[r * cols + c] = rf_density_at(counts, rows, cols, radius, r, c);
        }
    }
    return grid;
}

std::vector<double> infrastructure_distance(const std::vector<std::uint8_t>& mask,
                                            std::size_t rows, std::size_t cols) {
    if (mask.size() != rows * cols) {
        throw DimensionError("infrastructure mask has wrong size");
    }
    std::vector<std::pair<std::size_t, std::size_t>> sites;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (mask[r * cols + c]) sites.emplace_back(r, c);
        }
    }
    std::vector<double> dist(rows * cols, kEmptyMaskSentinel);
    if (sites.empty()) return dist;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& [sr, sc] : sites) {
                const double dr = static_cast<double>(r) - static_cast<double>(sr);
                const double dc = static_cast<double>(c) - static_cast<double>(sc);
                best = std::min(best, dr * dr + dc * dc);
            }
            dist[r * cols + c] = std::sqrt(best);
        }
    }
    return dist;
}

GroundFeatures compute_ground_features(const WorldDataset& ds, double radius) {
    GroundFeatures features;
    features.rows = ds.config.rows;
    features.cols = ds.config.cols;
    features.radius = radius;
    features.infra_distance =
        infrastructure_distance(ds.infra_mask, ds.config.rows, ds.config.cols);
    features.rf_density_by_t.resize(ds.config.timesteps);
    for (std::size_t t = 0; t < ds.config.timesteps; ++t) {
        features.rf_density_by_t[t] =
            rf_density(ds.rf_counts_at(t), ds.config.rows, ds.config.cols, radius);
    }
    return features;
}

std::array<double, 2> ground_feature_vector(std::size_t row, std::size_t col,
                                            std::size_t t,
                                            const GroundFeatures& features) {
    if (row >= features.rows || col >= features.cols) {
        throw ArgumentError("tile (" + std::to_string(row) + "," +
                            std::to_string(col) + ") outside grid");
    }
    if (t >= features.rf_density_by_t.size()) {
        throw ArgumentError("time index " + std::to_string(t) + " out of range");
    }
    const std::size_t idx = row * features.cols + col;
    return {features.rf_density_by_t[t][idx],
            1.0 / (1.0 + features.infra_distance[idx])};
}

}  // namespace firecast
