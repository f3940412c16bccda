#include "firecast/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "firecast/errors.hpp"
#include "firecast/ops.hpp"
#include "firecast/rng.hpp"
#include "firecast/serialize.hpp"

namespace firecast {

namespace {

// Generator constants. Together with the RNG stream layout these define the
// world bit-for-bit; changing any of them changes every downstream artifact.
namespace gen {
constexpr double kSeasonPeriod = 50.0;
constexpr double kArCoefficient = 0.8;
constexpr double kArNoiseSd = 1.0;

// Per-dimension seasonal profile: value = base + amp*sin(2*pi*t/period + phase)
// + AR(1) noise. Humidity and precipitation share temperature's phase with a
// negative amplitude (dry heat, wet winters). Wind gets its own phase.
constexpr double kTempBase = 18.0, kTempBaseJitter = 4.0, kTempAmp = 8.0;
constexpr double kHumidityBase = 68.0, kHumidityBaseJitter = 8.0, kHumidityAmp = -22.0;
constexpr double kWindBase = 4.0, kWindBaseJitter = 1.5, kWindAmp = 3.0;
constexpr double kPrecipBase = 1.0, kPrecipBaseJitter = 0.4, kPrecipAmp = -2.2;

// Dryness integrates temperature-driven drying minus precipitation. Rates are
// sized so a tile traverses most of [0,1] across one 50-step season: deep
// summer dries at ~0.1/step, the wet season drains at ~0.08/step.
constexpr double kDryingRate = 0.010;   // per degC above the threshold, per step
constexpr double kDryingTempRef = 17.0;
constexpr double kWettingRate = 0.035;  // per mm precipitation
constexpr double kDrynessInitLo = 0.2, kDrynessInitHi = 0.6;
// Per-tile drying efficiency (soil/vegetation proxy): keeps mid-season
// dryness spread across tiles instead of saturating everywhere at once.
constexpr double kDryEffLo = 0.25, kDryEffHi = 1.25;

// Planted human activity. Intensity can exceed 1: patch pixel values clamp
// at 1, but RF rates and the ignition term keep the full value.
constexpr double kActiveTileProb = 0.25;
constexpr double kIntensityLo = 0.5, kIntensityHi = 2.2;
constexpr double kRoadHalfWidth = 0.8;        // cells
constexpr double kRoadOffsetRange = 2.0;      // cells from patch center
constexpr double kVehicleRate = 1.2;          // Poisson rate factor
constexpr double kPatchNoise = 0.08;          // uniform background level
constexpr double kRfBaseRate = 0.1;           // Poisson baseline
constexpr double kRfActivityRate = 3.0;       // added per unit intensity

constexpr double kInfraCellFraction = 0.03;   // of the grid, at least 2 cells
constexpr double kEmptyMaskDistance = 1e9;
}  // namespace gen

struct DimProfile {
    double base;
    double amp;
    double phase;
    bool clamp_nonneg;
};

std::array<DimProfile, kWeatherDims> region_profiles(const WorldConfig& config,
                                                     std::size_t region) {
    RngState rng = RngState(config.seed).substream("region-params", region);
    const double temp_phase = rng.next_uniform(0.0, 2.0 * std::numbers::pi);
    const double wind_phase = rng.next_uniform(0.0, 2.0 * std::numbers::pi);
    std::array<DimProfile, kWeatherDims> profiles{};
    profiles[kTemperature] = {
        gen::kTempBase + rng.next_uniform(-gen::kTempBaseJitter, gen::kTempBaseJitter),
        gen::kTempAmp, temp_phase, false};
    profiles[kHumidity] = {
        gen::kHumidityBase +
            rng.next_uniform(-gen::kHumidityBaseJitter, gen::kHumidityBaseJitter),
        gen::kHumidityAmp, temp_phase, false};
    profiles[kWind] = {
        gen::kWindBase + rng.next_uniform(-gen::kWindBaseJitter, gen::kWindBaseJitter),
        gen::kWindAmp, wind_phase, true};
    profiles[kPrecip] = {
        gen::kPrecipBase + rng.next_uniform(0.0, gen::kPrecipBaseJitter),
        gen::kPrecipAmp, temp_phase, true};
    return profiles;
}

std::vector<std::array<double, kWeatherDims>> generate_region_weather(
    const WorldConfig& config, std::size_t region) {
    const auto profiles = region_profiles(config, region);
    std::vector<std::array<double, kWeatherDims>> series(config.timesteps);
    for (std::size_t d = 0; d < kWeatherDims; ++d) {
        RngState rng = RngState(config.seed).substream("weather-path", region, d);
        double ar = 0.0;
        for (std::size_t t = 0; t < config.timesteps; ++t) {
            ar = gen::kArCoefficient * ar + gen::kArNoiseSd * rng.next_normal();
            const double season =
                profiles[d].base +
                profiles[d].amp *
                    std::sin(2.0 * std::numbers::pi *
                                 (static_cast<double>(t) / gen::kSeasonPeriod) +
                             profiles[d].phase);
            double value = season + ar;
            if (profiles[d].clamp_nonneg) value = std::max(value, 0.0);
            series[t][d] = value;
        }
    }
    return series;
}

struct TileStatic {
    double dryness0 = 0.0;
    double dry_efficiency = 1.0;
    bool active = false;
    double intensity = 0.0;
    double road_angle = 0.0;
    double road_offset = 0.0;
};

TileStatic tile_static(const WorldConfig& config, std::size_t tile_idx) {
    RngState rng = RngState(config.seed).substream("tile-static", tile_idx);
    TileStatic s;
    s.dryness0 = rng.next_uniform(gen::kDrynessInitLo, gen::kDrynessInitHi);
    s.dry_efficiency = rng.next_uniform(gen::kDryEffLo, gen::kDryEffHi);
    s.active = rng.next_bernoulli(gen::kActiveTileProb);
    s.intensity = s.active ? rng.next_uniform(gen::kIntensityLo, gen::kIntensityHi) : 0.0;
    s.road_angle = rng.next_uniform(0.0, std::numbers::pi);
    s.road_offset = rng.next_uniform(-gen::kRoadOffsetRange, gen::kRoadOffsetRange);
    return s;
}

Tensor render_patch(const WorldConfig& config, const TileStatic& s,
                    std::size_t tile_idx, std::size_t t) {
    const std::size_t n = config.patch_size;
    RngState rng = RngState(config.seed).substream("patch", tile_idx, t);
    Tensor patch({1, n, n});
    for (std::size_t i = 0; i < n * n; ++i) {
        patch[i] = rng.next_uniform(0.0, gen::kPatchNoise);
    }
    if (s.active) {
        // Road: a line through the patch at the tile's fixed angle/offset.
        const double center = (static_cast<double>(n) - 1.0) / 2.0;
        const double nx = -std::sin(s.road_angle);
        const double ny = std::cos(s.road_angle);
        for (std::size_t y = 0; y < n; ++y) {
            for (std::size_t x = 0; x < n; ++x) {
                const double dist = std::abs(
                    (static_cast<double>(y) - center) * ny +
                    (static_cast<double>(x) - center) * nx - s.road_offset);
                if (dist <= gen::kRoadHalfWidth) {
                    const double v = s.intensity * rng.next_uniform(0.75, 1.05);
                    patch[y * n + x] = std::max(patch[y * n + x], v);
                }
            }
        }
        // Vehicles: transient 2x2 blobs, count scales with intensity.
        const std::uint32_t vehicles =
            rng.next_poisson(gen::kVehicleRate * s.intensity);
        for (std::uint32_t v = 0; v < vehicles; ++v) {
            const std::size_t vy = rng.next_below(n - 1);
            const std::size_t vx = rng.next_below(n - 1);
            const double value = s.intensity * rng.next_uniform(0.8, 1.2);
            for (std::size_t dy = 0; dy < 2; ++dy) {
                for (std::size_t dx = 0; dx < 2; ++dx) {
                    patch[(vy + dy) * n + vx + dx] =
                        std::max(patch[(vy + dy) * n + vx + dx], value);
                }
            }
        }
    }
    for (std::size_t i = 0; i < n * n; ++i) {
        patch[i] = std::clamp(patch[i], 0.0, 1.0);
    }
    return patch;
}

std::vector<std::uint8_t> sample_infra_mask(const WorldConfig& config) {
    const std::size_t cells = config.rows * config.cols;
    const std::size_t want = std::max<std::size_t>(
        2, static_cast<std::size_t>(
               std::llround(gen::kInfraCellFraction * static_cast<double>(cells))));
    RngState rng = RngState(config.seed).substream("infra");
    std::set<std::size_t> chosen;
    while (chosen.size() < want) {
        chosen.insert(rng.next_below(cells));
    }
    std::vector<std::uint8_t> mask(cells, 0);
    for (const std::size_t idx : chosen) mask[idx] = 1;
    return mask;
}

std::vector<double> exact_distance_grid(const std::vector<std::uint8_t>& mask,
                                        std::size_t rows, std::size_t cols) {
    std::vector<std::pair<std::size_t, std::size_t>> sites;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (mask[r * cols + c]) sites.emplace_back(r, c);
        }
    }
    std::vector<double> dist(rows * cols, gen::kEmptyMaskDistance);
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

void write_config_block(std::ostream& out, const WorldConfig& config) {
    write_u32(out, static_cast<std::uint32_t>(config.rows));
    write_u32(out, static_cast<std::uint32_t>(config.cols));
    write_u32(out, static_cast<std::uint32_t>(config.regions));
    write_u32(out, static_cast<std::uint32_t>(config.timesteps));
    write_u64(out, config.seed);
    write_u32(out, static_cast<std::uint32_t>(config.patch_size));
}

WorldConfig read_config_block(std::istream& in) {
    WorldConfig config;
    config.rows = read_u32(in, "config rows");
    config.cols = read_u32(in, "config cols");
    config.regions = read_u32(in, "config regions");
    config.timesteps = read_u32(in, "config timesteps");
    config.seed = read_u64(in, "config seed");
    config.patch_size = read_u32(in, "config patch_size");
    return config;
}

}  // namespace

void WorldConfig::validate() const {
    if (rows == 0 || cols == 0 || regions == 0 || timesteps == 0) {
        throw ConfigError("world dimensions must be positive");
    }
    if (timesteps < 2) {
        throw ConfigError("world needs at least 2 timesteps");
    }
    if (regions > rows * cols) {
        throw ConfigError("more regions than tiles");
    }
    if (patch_size == 0 || patch_size % 2 == 0) {
        throw ConfigError("patch_size must be an odd positive integer");
    }
    if (rows < patch_size || cols < patch_size) {
        throw ConfigError("grid must be at least patch_size in both dimensions");
    }
    // The block partition must fit the grid.
    const RegionBlocks blocks = region_blocks(*this);
    if (blocks.blocks_down > rows || blocks.blocks_across > cols) {
        throw ConfigError("region count " + std::to_string(regions) +
                          " does not factor into blocks fitting a " +
                          std::to_string(rows) + "x" + std::to_string(cols) +
                          " grid");
    }
}

std::uint64_t WorldConfig::fingerprint() const {
    std::ostringstream buf(std::ios::binary);
    write_config_block(buf, *this);
    const std::string bytes = buf.str();
    return fnv1a64(bytes.data(), bytes.size());
}

double ignition_probability(double dryness, double wind, double humidity,
                            double precip, double activity_density,
                            double infra_distance, const IgnitionParams& params) {
    const double logit = params.dryness_w * dryness + params.wind_w * wind +
                         params.activity_w * activity_density +
                         params.infra_w / (1.0 + infra_distance) +
                         params.humidity_w * humidity +
                         params.precip_w * precip + params.bias;
    return sigmoid(logit);
}

RegionBlocks region_blocks(const WorldConfig& config) {
    // Largest divisor not above sqrt(regions) becomes the vertical count, so
    // blocks are as close to square as the factorization allows.
    std::size_t down = 1;
    for (std::size_t d = 1; d * d <= config.regions; ++d) {
        if (config.regions % d == 0) down = d;
    }
    return RegionBlocks{down, config.regions / down};
}

std::size_t WorldDataset::record_index(std::size_t row, std::size_t col,
                                       std::size_t t) const {
    if (row >= config.rows || col >= config.cols || t >= config.timesteps) {
        throw ArgumentError("record index (" + std::to_string(row) + "," +
                            std::to_string(col) + "," + std::to_string(t) +
                            ") outside world bounds");
    }
    return (t * config.rows + row) * config.cols + col;
}

const TileRecord& WorldDataset::at(std::size_t row, std::size_t col,
                                   std::size_t t) const {
    return records[record_index(row, col, t)];
}

namespace {
std::size_t band_of(std::size_t pos, std::size_t extent, std::size_t bands) {
    const std::size_t base = extent / bands;
    const std::size_t extra = extent % bands;
    const std::size_t wide = extra * (base + 1);
    if (pos < wide) return pos / (base + 1);
    return extra + (pos - wide) / base;
}
}  // namespace

std::size_t WorldDataset::region_of(std::size_t row, std::size_t col) const {
    const RegionBlocks blocks = region_blocks(config);
    const std::size_t br = band_of(row, config.rows, blocks.blocks_down);
    const std::size_t bc = band_of(col, config.cols, blocks.blocks_across);
    return br * blocks.blocks_across + bc;
}

std::vector<std::pair<std::size_t, std::size_t>> WorldDataset::region_tiles(
    std::size_t region) const {
    if (region >= config.regions) {
        throw ArgumentError("unknown region " + std::to_string(region));
    }
    std::vector<std::pair<std::size_t, std::size_t>> tiles;
    for (std::size_t r = 0; r < config.rows; ++r) {
        for (std::size_t c = 0; c < config.cols; ++c) {
            if (region_of(r, c) == region) tiles.emplace_back(r, c);
        }
    }
    return tiles;
}

std::vector<std::array<double, kWeatherDims>> WorldDataset::region_weather_series(
    std::size_t region, const TileProbe& probe) const {
    if (region >= config.regions) {
        throw ArgumentError("unknown region " + std::to_string(region));
    }
    // All tiles of a region share one weather series; read the first tile.
    for (std::size_t r = 0; r < config.rows; ++r) {
        for (std::size_t c = 0; c < config.cols; ++c) {
            if (region_of(r, c) != region) continue;
            if (probe) probe(r, c);
            std::vector<std::array<double, kWeatherDims>> series(config.timesteps);
            for (std::size_t t = 0; t < config.timesteps; ++t) {
                series[t] = at(r, c, t).weather;
            }
            return series;
        }
    }
    throw TrainingError("region " + std::to_string(region) + " has no tiles");
}

std::vector<std::uint32_t> WorldDataset::rf_counts_at(std::size_t t) const {
    if (t >= config.timesteps) {
        throw ArgumentError("time index " + std::to_string(t) + " out of range");
    }
    std::vector<std::uint32_t> counts(config.rows * config.cols);
    const std::size_t base = t * counts.size();
    for (std::size_t i = 0; i < counts.size(); ++i) {
        counts[i] = records[base + i].rf_count;
    }
    return counts;
}

WorldDataset generate_world(const WorldConfig& config) {
    config.validate();
    WorldDataset ds;
    ds.config = config;

    const std::size_t cells = config.rows * config.cols;

    std::vector<std::vector<std::array<double, kWeatherDims>>> weather(config.regions);
    for (std::size_t region = 0; region < config.regions; ++region) {
        weather[region] = generate_region_weather(config, region);
    }

    std::vector<TileStatic> statics(cells);
    ds.activity_intensity.resize(cells);
    ds.activity_truth.resize(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        statics[i] = tile_static(config, i);
        ds.activity_intensity[i] = statics[i].intensity;
        ds.activity_truth[i] = statics[i].active ? 1 : 0;
    }

    ds.infra_mask = sample_infra_mask(config);
    ds.infra_distance = exact_distance_grid(ds.infra_mask, config.rows, config.cols);

    std::vector<double> dryness(cells);
    for (std::size_t i = 0; i < cells; ++i) dryness[i] = statics[i].dryness0;

    const RngState root(config.seed);
    ds.records.reserve(cells * config.timesteps);
    for (std::size_t t = 0; t < config.timesteps; ++t) {
        for (std::size_t row = 0; row < config.rows; ++row) {
            for (std::size_t col = 0; col < config.cols; ++col) {
                const std::size_t idx = row * config.cols + col;
                const std::size_t region = ds.region_of(row, col);
                const auto& w = weather[region][t];

                dryness[idx] = std::clamp(
                    dryness[idx] +
                        statics[idx].dry_efficiency *
                            (gen::kDryingRate *
                                 std::max(w[kTemperature] - gen::kDryingTempRef,
                                          0.0) -
                             gen::kWettingRate * w[kPrecip]),
                    0.0, 1.0);

                TileRecord rec;
                rec.row = static_cast<std::uint32_t>(row);
                rec.col = static_cast<std::uint32_t>(col);
                rec.t = static_cast<std::uint32_t>(t);
                rec.weather = w;
                rec.dryness = dryness[idx];
                rec.activity_patch = render_patch(config, statics[idx], idx, t);
                rec.rf_count = root.substream("rf", idx, t)
                                   .next_poisson(gen::kRfBaseRate +
                                                 gen::kRfActivityRate *
                                                     statics[idx].intensity);
                rec.infra_distance = ds.infra_distance[idx];

                const double p = ignition_probability(
                    rec.dryness, w[kWind], w[kHumidity], w[kPrecip],
                    statics[idx].intensity, rec.infra_distance, ds.oracle);
                RngState fire_rng = root.substream("fire", idx, t);
                rec.fire = fire_rng.next_bernoulli(p) ? 1 : 0;

                ds.records.push_back(std::move(rec));
            }
        }
    }
    return ds;
}

SplitIndices split_dataset(const WorldDataset& ds, double train_frac,
                           double val_frac) {
    if (train_frac <= 0.0 || val_frac <= 0.0 || train_frac + val_frac >= 1.0) {
        throw ConfigError("split fractions must be positive and sum below 1");
    }
    const auto T = static_cast<double>(ds.config.timesteps);
    SplitIndices split;
    split.timesteps = ds.config.timesteps;
    split.train_end = static_cast<std::size_t>(std::floor(T * train_frac));
    split.val_end = static_cast<std::size_t>(std::floor(T * (train_frac + val_frac)));
    if (split.train_end < 1 || split.val_end <= split.train_end ||
        split.val_end >= ds.config.timesteps) {
        throw ConfigError("degenerate split: empty train, validation, or test part");
    }
    return split;
}

namespace {
std::vector<std::size_t> iota_range(std::size_t begin, std::size_t end) {
    std::vector<std::size_t> out;
    out.reserve(end - begin);
    for (std::size_t t = begin; t < end; ++t) out.push_back(t);
    return out;
}
}  // namespace

std::vector<std::size_t> SplitIndices::train_ts() const {
    return iota_range(0, train_end);
}
std::vector<std::size_t> SplitIndices::val_ts() const {
    return iota_range(train_end, val_end);
}
std::vector<std::size_t> SplitIndices::test_ts() const {
    return iota_range(val_end, timesteps);
}

double tile_entropy(const std::vector<std::uint8_t>& labels) {
    if (labels.empty()) {
        throw ArgumentError("tile_entropy requires a non-empty sequence");
    }
    std::size_t ones = 0;
    for (const auto v : labels) ones += v ? 1 : 0;
    const double q = static_cast<double>(ones) / static_cast<double>(labels.size());
    double bits = 0.0;
    if (q > 0.0) bits -= q * std::log2(q);
    if (q < 1.0) bits -= (1.0 - q) * std::log2(1.0 - q);
    return bits;
}

void save_dataset(const std::filesystem::path& path, const WorldDataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(kDatasetMagic, 4);
    write_u8(out, kDatasetVersion);
    write_config_block(out, ds.config);

    write_f64(out, ds.oracle.dryness_w);
    write_f64(out, ds.oracle.wind_w);
    write_f64(out, ds.oracle.activity_w);
    write_f64(out, ds.oracle.infra_w);
    write_f64(out, ds.oracle.humidity_w);
    write_f64(out, ds.oracle.precip_w);
    write_f64(out, ds.oracle.bias);

    for (const double v : ds.activity_intensity) write_f64(out, v);
    for (const auto v : ds.activity_truth) write_u8(out, v);
    for (const auto v : ds.infra_mask) write_u8(out, v);
    for (const double v : ds.infra_distance) write_f64(out, v);

    write_u64(out, ds.records.size());
    for (const TileRecord& rec : ds.records) {
        write_u32(out, rec.t);
        write_u32(out, rec.row);
        write_u32(out, rec.col);
        for (const double v : rec.weather) write_f64(out, v);
        write_f64(out, rec.dryness);
        write_tensor_blob(out, rec.activity_patch);
        write_u32(out, rec.rf_count);
        write_f64(out, rec.infra_distance);
        write_u8(out, rec.fire);
    }
    out.flush();
    if (!out) {
        throw IoError("failed to write " + path.string());
    }
}

WorldDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string() + " for reading");
    }
    expect_magic(in, kDatasetMagic);
    const std::uint8_t version = read_u8(in, "dataset version");
    if (version != kDatasetVersion) {
        throw FormatError("unsupported dataset version " + std::to_string(version));
    }
    WorldDataset ds;
    ds.config = read_config_block(in);
    ds.config.validate();

    ds.oracle.dryness_w = read_f64(in, "oracle dryness_w");
    ds.oracle.wind_w = read_f64(in, "oracle wind_w");
    ds.oracle.activity_w = read_f64(in, "oracle activity_w");
    ds.oracle.infra_w = read_f64(in, "oracle infra_w");
    ds.oracle.humidity_w = read_f64(in, "oracle humidity_w");
    ds.oracle.precip_w = read_f64(in, "oracle precip_w");
    ds.oracle.bias = read_f64(in, "oracle bias");

    const std::size_t cells = ds.config.rows * ds.config.cols;
    ds.activity_intensity.resize(cells);
    for (auto& v : ds.activity_intensity) v = read_f64(in, "activity intensity");
    ds.activity_truth.resize(cells);
    for (auto& v : ds.activity_truth) v = read_u8(in, "activity truth");
    ds.infra_mask.resize(cells);
    for (auto& v : ds.infra_mask) v = read_u8(in, "infra mask");
    ds.infra_distance.resize(cells);
    for (auto& v : ds.infra_distance) v = read_f64(in, "infra distance");

    const std::uint64_t count = read_u64(in, "record count");
    if (count != cells * ds.config.timesteps) {
        throw FormatError("record count " + std::to_string(count) +
                          " does not match config");
    }
    ds.records.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        TileRecord& rec = ds.records[i];
        rec.t = read_u32(in, "record t");
        rec.row = read_u32(in, "record row");
        rec.col = read_u32(in, "record col");
        const std::size_t expected =
            (static_cast<std::size_t>(rec.t) * ds.config.rows + rec.row) *
                ds.config.cols +
            rec.col;
        if (rec.row >= ds.config.rows || rec.col >= ds.config.cols ||
            rec.t >= ds.config.timesteps || expected != i) {
            throw FormatError("record " + std::to_string(i) +
                              " out of (t,row,col) order");
        }
        for (auto& v : rec.weather) v = read_f64(in, "record weather");
        rec.dryness = read_f64(in, "record dryness");
        rec.activity_patch = read_tensor_blob(in);
        if (rec.activity_patch.rank() != 3 || rec.activity_patch.dim(0) != 1 ||
            rec.activity_patch.dim(1) != ds.config.patch_size ||
            rec.activity_patch.dim(2) != ds.config.patch_size) {
            throw FormatError("record " + std::to_string(i) +
                              " patch shape does not match config");
        }
        rec.rf_count = read_u32(in, "record rf_count");
        rec.infra_distance = read_f64(in, "record infra_distance");
        rec.fire = read_u8(in, "record fire");
        if (rec.fire > 1) {
            throw FormatError("record " + std::to_string(i) + " fire flag not 0/1");
        }
    }
    return ds;
}

OracleCalibration oracle_calibration(const WorldDataset& ds) {
    OracleCalibration cal;
    double variance_sum = 0.0;
    std::size_t fires = 0;
    for (const TileRecord& rec : ds.records) {
        const double p = ignition_probability(
            rec.dryness, rec.weather[kWind], rec.weather[kHumidity],
            rec.weather[kPrecip],
            ds.activity_intensity[ds.tile_index(rec.row, rec.col)],
            rec.infra_distance, ds.oracle);
        cal.mean_probability += p;
        variance_sum += p * (1.0 - p);
        fires += rec.fire;
    }
    const auto n = static_cast<double>(ds.records.size());
    cal.mean_probability /= n;
    cal.fire_rate = static_cast<double>(fires) / n;
    cal.standard_error = std::sqrt(variance_sum) / n;
    return cal;
}

}  // namespace firecast
