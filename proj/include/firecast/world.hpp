#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "firecast/tensor.hpp"

namespace firecast {

// Weather vector layout, fixed at four dimensions.
inline constexpr std::size_t kWeatherDims = 4;
enum WeatherDim : std::size_t {
    kTemperature = 0,  // degC
    kHumidity = 1,     // percent
    kWind = 2,         // m/s
    kPrecip = 3,       // mm
};

struct WorldConfig {
    std::size_t rows = 32;
    std::size_t cols = 32;
    std::size_t regions = 4;
    std::size_t timesteps = 200;
    std::uint64_t seed = 42;
    std::size_t patch_size = 9;  // odd

    void validate() const;
    // FNV-1a over the serialized config block; ties bundles to datasets.
    std::uint64_t fingerprint() const;
    bool operator==(const WorldConfig&) const = default;
};

// Fixed logistic ignition rule. These coefficients are part of the dataset
// format: a saved world carries them, and verification code treats them as
// ground truth.
struct IgnitionParams {
    double dryness_w = 3.0;
    double wind_w = 0.08;
    double activity_w = 1.5;
    double infra_w = 1.0;      // applied to 1/(1 + infra_distance)
    double humidity_w = -0.03;
    double precip_w = -0.4;
    double bias = -4.0;
    bool operator==(const IgnitionParams&) const = default;
};

double ignition_probability(double dryness, double wind, double humidity,
                            double precip, double activity_density,
                            double infra_distance,
                            const IgnitionParams& params = {});

struct TileRecord {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    std::uint32_t t = 0;
    std::array<double, kWeatherDims> weather{};
    double dryness = 0.0;
    Tensor activity_patch;  // [1 x patch x patch], values in [0,1]
    std::uint32_t rf_count = 0;
    double infra_distance = 0.0;
    std::uint8_t fire = 0;

    bool operator==(const TileRecord&) const = default;
};

class WorldDataset {
public:
    WorldConfig config;
    IgnitionParams oracle;

    // Static per-tile state, row-major rows*cols.
    std::vector<double> activity_intensity;   // 0 for inactive tiles
    std::vector<std::uint8_t> activity_truth; // planted-pattern flag
    std::vector<std::uint8_t> infra_mask;
    std::vector<double> infra_distance;

    // One record per (tile, t), stored in (t, row, col) order.
    std::vector<TileRecord> records;

    std::size_t tile_index(std::size_t row, std::size_t col) const {
        return row * config.cols + col;
    }
    std::size_t record_index(std::size_t row, std::size_t col, std::size_t t) const;
    const TileRecord& at(std::size_t row, std::size_t col, std::size_t t) const;

    // Contiguous rectangular block partition; see region_blocks().
    std::size_t region_of(std::size_t row, std::size_t col) const;
    std::vector<std::pair<std::size_t, std::size_t>> region_tiles(
        std::size_t region) const;

    // Weather series of a region (shared by all its tiles), [T][P]. The
    // optional probe reports every tile actually touched, so tests can verify
    // per-region training reads nothing else.
    using TileProbe = std::function<void(std::size_t row, std::size_t col)>;
    std::vector<std::array<double, kWeatherDims>> region_weather_series(
        std::size_t region, const TileProbe& probe = nullptr) const;

    // RF counts of every tile at one time step, row-major.
    std::vector<std::uint32_t> rf_counts_at(std::size_t t) const;

    bool operator==(const WorldDataset&) const = default;
};

// The grid splits into a blocks_down x blocks_across arrangement with
// blocks_down * blocks_across == regions; band sizes differ by at most one.
struct RegionBlocks {
    std::size_t blocks_down = 1;
    std::size_t blocks_across = 1;
};
RegionBlocks region_blocks(const WorldConfig& config);

WorldDataset generate_world(const WorldConfig& config);

// Temporal split: train on t < train_end, validation on [train_end, val_end),
// test on [val_end, T).
struct SplitIndices {
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    std::size_t timesteps = 0;

    std::vector<std::size_t> train_ts() const;
    std::vector<std::size_t> val_ts() const;
    std::vector<std::size_t> test_ts() const;
};
SplitIndices split_dataset(const WorldDataset& ds, double train_frac,
                           double val_frac);

// Shannon entropy (bits) of the empirical distribution of a binary sequence.
double tile_entropy(const std::vector<std::uint8_t>& labels);

// Dataset container: magic "WFDS", version byte, config block, oracle
// coefficients, static per-tile grids, then records in (t, row, col) order
// with activity patches as inline "WFTN" blobs.
inline constexpr char kDatasetMagic[] = "WFDS";
inline constexpr std::uint8_t kDatasetVersion = 1;

void save_dataset(const std::filesystem::path& path, const WorldDataset& ds);
WorldDataset load_dataset(const std::filesystem::path& path);

// Mean ignition probability and empirical fire rate over all records, with
// the binomial standard error of the gap; the two must agree by construction.
struct OracleCalibration {
    double mean_probability = 0.0;
    double fire_rate = 0.0;
    double standard_error = 0.0;
};
OracleCalibration oracle_calibration(const WorldDataset& ds);

}  // namespace firecast
