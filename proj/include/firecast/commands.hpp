#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "firecast/ensemble.hpp"

namespace firecast {

// Stable exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitFormat = 3;
inline constexpr int kExitConsistency = 4;

// Flat key=value run configuration. Unknown keys are rejected; command-line
// flags override file values. Every command prints the fully resolved config
// before doing work.
struct RunConfig {
    // world
    std::size_t rows = 32;
    std::size_t cols = 32;
    std::size_t regions = 4;
    std::size_t timesteps = 200;
    std::uint64_t seed = 42;
    std::size_t patch_size = 9;
    double train_frac = 0.6;
    double val_frac = 0.2;

    // meta-learner training (trainer defaults)
    std::size_t epochs = 20;
    double lr = 0.05;
    double momentum = 0.9;
    double l2 = 1e-4;
    double dropout = 0.5;
    std::size_t batch_size = 32;
    std::size_t patience = 1;
    bool oversample = true;

    // component stages
    std::size_t window = 8;
    std::size_t forecaster_epochs = 80;
    double forecaster_lr = 0.05;
    std::size_t detector_epochs = 10;
    double detector_lr = 0.05;
    std::size_t detector_per_tile = 3;

    // ensemble
    std::string ensemble = "stacked";
    double rf_radius = 0.8;
    double threshold = 0.5;
    bool ablations = false;

    // transfer
    std::size_t source_region = 0;
    std::size_t target_region = 1;
    std::size_t transfer_epochs = 3;
    double transfer_lr = 0.005;

    // predict / inspect; t defaults to the last timestep when unset
    static constexpr std::size_t kLastTimestep = static_cast<std::size_t>(-1);
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t t = kLastTimestep;

    // paths
    std::string dataset = "world.wfds";
    std::string bundle = "bundle";
    std::string out = ".";

    static RunConfig from_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    void print(std::ostream& out_stream) const;

    WorldConfig world_config() const;
    EnsembleTrainOptions train_options() const;
};

int cmd_gen(const RunConfig& config);
int cmd_train(const RunConfig& config);
int cmd_evaluate(const RunConfig& config);
int cmd_predict(const RunConfig& config);
int cmd_transfer(const RunConfig& config);
int cmd_inspect(const RunConfig& config);

}  // namespace firecast
