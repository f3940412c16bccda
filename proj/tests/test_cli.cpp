#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "firecast/commands.hpp"
#include "firecast/errors.hpp"
#include "firecast/serialize.hpp"

using namespace firecast;
namespace fs = std::filesystem;

namespace {
struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const char* child) const { return (path / child).string(); }
};

RunConfig tiny_world_config(const TempDir& dir) {
    RunConfig config;
    config.rows = 12;
    config.cols = 12;
    config.regions = 4;
    config.timesteps = 60;
    config.seed = 42;
    config.forecaster_epochs = 5;
    config.detector_epochs = 3;
    config.detector_per_tile = 2;
    config.epochs = 5;
    config.dataset = dir.str("world.wfds");
    config.bundle = dir.str("bundle");
    config.out = dir.str("out");
    return config;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::map<std::string, std::string> read_kv(const fs::path& path) {
    std::map<std::string, std::string> kv;
    std::ifstream in(path);
    REQUIRE(in);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}
}  // namespace

TEST_CASE("config file parsing accepts known keys and rejects others") {
    const TempDir dir("firecast_cli_config");
    {
        std::ofstream out(dir.path / "run.cfg");
        out << "# comment line\n";
        out << "rows=16\n";
        out << "  seed = 99  \n";
        out << "\n";
        out << "ensemble=averaging\n";
    }
    const RunConfig config = RunConfig::from_file(dir.str("run.cfg"));
    CHECK(config.rows == 16);
    CHECK(config.seed == 99);
    CHECK(config.ensemble == "averaging");

    {
        std::ofstream out(dir.path / "bad.cfg");
        out << "no_such_key=1\n";
    }
    CHECK_THROWS_AS(RunConfig::from_file(dir.str("bad.cfg")), ConfigError);

    {
        std::ofstream out(dir.path / "malformed.cfg");
        out << "rows 16\n";
    }
    CHECK_THROWS_AS(RunConfig::from_file(dir.str("malformed.cfg")), ConfigError);

    RunConfig config2;
    CHECK_THROWS_AS(config2.set("epochs", "abc"), ConfigError);
    CHECK_THROWS_AS(config2.set("lr", "fast"), ConfigError);
    CHECK_THROWS_AS(config2.set("oversample", "maybe"), ConfigError);
}

TEST_CASE("gen writes a loadable dataset and is byte-deterministic") {
    const TempDir dir("firecast_cli_gen");
    RunConfig config = tiny_world_config(dir);
    REQUIRE(cmd_gen(config) == kExitOk);

    const WorldDataset ds = load_dataset(config.dataset);
    CHECK(ds.records.size() == 12 * 12 * 60);

    const std::string first = read_file(config.dataset);
    REQUIRE(cmd_gen(config) == kExitOk);
    CHECK(read_file(config.dataset) == first);
}

TEST_CASE("gen with a missing output directory exits 2 without partial files") {
    const TempDir dir("firecast_cli_gen_missing");
    RunConfig config = tiny_world_config(dir);
    config.dataset = dir.str("no_such_subdir/world.wfds");
    CHECK(cmd_gen(config) == kExitIo);
    CHECK(!fs::exists(dir.path / "no_such_subdir"));
    CHECK(!fs::exists(config.dataset + ".tmp"));
}

TEST_CASE("train, evaluate, predict, inspect pipeline on a tiny world") {
    const TempDir dir("firecast_cli_pipeline");
    RunConfig config = tiny_world_config(dir);
    REQUIRE(cmd_gen(config) == kExitOk);
    REQUIRE(cmd_train(config) == kExitOk);

    SUBCASE("bundle and histories are written") {
        CHECK(fs::exists(fs::path(config.bundle) / "manifest.txt"));
        CHECK(fs::exists(fs::path(config.out) / "history_meta.csv"));
        CHECK(fs::exists(fs::path(config.out) / "history_region0.csv"));
        CHECK(fs::exists(fs::path(config.out) / "history_detector.csv"));
    }

    SUBCASE("train is deterministic across reruns") {
        const std::string manifest = read_file(fs::path(config.bundle) / "manifest.txt");
        std::map<std::string, std::string> blobs;
        for (const auto& entry : fs::directory_iterator(config.bundle)) {
            blobs[entry.path().filename().string()] = read_file(entry.path());
        }
        RunConfig rerun = config;
        rerun.bundle = dir.str("bundle2");
        REQUIRE(cmd_train(rerun) == kExitOk);
        CHECK(read_file(fs::path(rerun.bundle) / "manifest.txt") == manifest);
        for (const auto& entry : fs::directory_iterator(rerun.bundle)) {
            REQUIRE(blobs.at(entry.path().filename().string()) ==
                    read_file(entry.path()));
        }
    }

    SUBCASE("evaluate writes the metrics schema") {
        REQUIRE(cmd_evaluate(config) == kExitOk);
        const auto kv = read_kv(fs::path(config.out) / "metrics.kv");
        for (const char* split : {"train", "val", "test"}) {
            for (const char* metric :
                 {"precision", "recall", "f1", "accuracy", "auc_roc"}) {
                const std::string key = std::string(split) + "." + metric;
                REQUIRE(kv.count(key) == 1);
            }
        }
    }

    SUBCASE("evaluate on the train split reproduces the best history row") {
        REQUIRE(cmd_evaluate(config) == kExitOk);
        const auto kv = read_kv(fs::path(config.out) / "metrics.kv");

        // history_meta.csv: epoch,train_loss,val_loss,val_auc
        std::ifstream history(fs::path(config.out) / "history_meta.csv");
        REQUIRE(history);
        std::string line;
        std::getline(history, line);  // header
        double best_val = 1e18, best_train = 0.0;
        while (std::getline(history, line)) {
            std::stringstream row(line);
            std::string epoch, train_loss, val_loss;
            std::getline(row, epoch, ',');
            std::getline(row, train_loss, ',');
            std::getline(row, val_loss, ',');
            if (std::stod(val_loss) < best_val) {
                best_val = std::stod(val_loss);
                best_train = std::stod(train_loss);
            }
        }
        CHECK(std::stod(kv.at("train.bce")) ==
              doctest::Approx(best_train).epsilon(1e-9));
        CHECK(std::stod(kv.at("val.bce")) ==
              doctest::Approx(best_val).epsilon(1e-9));
    }

    SUBCASE("ablation mode emits one report per source") {
        RunConfig with_ablation = config;
        with_ablation.ablations = true;
        REQUIRE(cmd_evaluate(with_ablation) == kExitOk);
        for (const char* name : {"weather", "vision", "ground"}) {
            CHECK(fs::exists(fs::path(config.out) /
                             ("metrics_" + std::string(name) + ".kv")));
        }
    }

    SUBCASE("predict prints a probability and honors the threshold boundary") {
        RunConfig predict_config = config;
        predict_config.row = 3;
        predict_config.col = 4;
        predict_config.t = 50;
        REQUIRE(cmd_predict(predict_config) == kExitOk);
    }

    SUBCASE("commands leave their input files untouched") {
        const std::string dataset_before = read_file(config.dataset);
        const std::string manifest_before =
            read_file(fs::path(config.bundle) / "manifest.txt");
        REQUIRE(cmd_evaluate(config) == kExitOk);
        REQUIRE(cmd_inspect(config) == kExitOk);
        CHECK(read_file(config.dataset) == dataset_before);
        CHECK(read_file(fs::path(config.bundle) / "manifest.txt") ==
              manifest_before);
    }

    SUBCASE("inspect writes entropy and risk artifacts") {
        REQUIRE(cmd_inspect(config) == kExitOk);
        CHECK(fs::exists(fs::path(config.out) / "entropy.csv"));
        CHECK(fs::exists(fs::path(config.out) / "entropy.pgm"));
        CHECK(fs::exists(fs::path(config.out) / "rf_events.csv"));
        CHECK(fs::exists(fs::path(config.out) / "risk.csv"));

        // Risk cells equal predict() probabilities at the chosen t.
        const WorldDataset ds = load_dataset(config.dataset);
        const EnsembleBundle bundle = load_bundle(config.bundle);
        std::ifstream risk(fs::path(config.out) / "risk.csv");
        REQUIRE(risk);
        std::string risk_line;
        for (std::size_t r = 0; r < 3; ++r) {
            REQUIRE(std::getline(risk, risk_line));
            std::stringstream cells(risk_line);
            std::string cell;
            for (std::size_t c = 0; c < 3; ++c) {
                REQUIRE(std::getline(cells, cell, ','));
                const Prediction p =
                    predict(r, c, ds.config.timesteps - 1, ds, bundle);
                CHECK(std::stod(cell) ==
                      doctest::Approx(p.probability).epsilon(1e-6));
            }
        }

        // Entropy grid dims: rows lines, cols columns.
        std::ifstream grid(fs::path(config.out) / "entropy.csv");
        std::string line;
        std::size_t lines = 0, commas = 0;
        while (std::getline(grid, line)) {
            ++lines;
            commas = std::count(line.begin(), line.end(), ',');
        }
        CHECK(lines == 12);
        CHECK(commas == 11);

        // PGM header is well-formed.
        std::ifstream pgm(fs::path(config.out) / "entropy.pgm");
        std::string magic;
        pgm >> magic;
        CHECK(magic == "P2");
    }

    SUBCASE("corrupt dataset exits 3") {
        {
            std::fstream f(config.dataset,
                           std::ios::in | std::ios::out | std::ios::binary);
            f.put('X');
        }
        CHECK(cmd_train(config) == kExitFormat);
        CHECK(cmd_evaluate(config) == kExitFormat);
    }

    SUBCASE("fingerprint mismatch exits 4") {
        RunConfig other = config;
        other.seed = 43;
        other.dataset = dir.str("other.wfds");
        REQUIRE(cmd_gen(other) == kExitOk);
        RunConfig mismatched = config;
        mismatched.dataset = other.dataset;
        CHECK(cmd_evaluate(mismatched) == kExitConsistency);
    }

    SUBCASE("unknown transfer region exits 4") {
        RunConfig bad = config;
        bad.target_region = 9;
        CHECK(cmd_transfer(bad) == kExitConsistency);
    }
}

TEST_CASE("averaging flag trains the baseline combiner") {
    const TempDir dir("firecast_cli_averaging");
    RunConfig config = tiny_world_config(dir);
    config.ensemble = "averaging";
    REQUIRE(cmd_gen(config) == kExitOk);
    REQUIRE(cmd_train(config) == kExitOk);

    const EnsembleBundle bundle = load_bundle(config.bundle);
    CHECK(bundle.mode == EnsembleMode::kAveraging);
    CHECK(read_file(fs::path(config.bundle) / "manifest.txt").find("averaging") !=
          std::string::npos);

    // The baseline prediction is the mean of the three source heads.
    const WorldDataset ds = load_dataset(config.dataset);
    const Prediction p = predict(3, 3, 40, ds, bundle);
    RngState rng;
    const auto raw = stack_features(3, 3, 40, ds, bundle);
    const auto normalized = bundle.feature_norm.apply(raw);
    const auto pick = [&](const std::vector<std::size_t>& cols) {
        std::vector<double> v;
        for (const auto c : cols) v.push_back(normalized[c]);
        return v;
    };
    const double expected =
        (meta_forward(pick(weather_feature_columns()), bundle.head_weather, rng, false) +
         meta_forward(pick(vision_feature_columns()), bundle.head_vision, rng, false) +
         meta_forward(pick(ground_feature_columns()), bundle.head_ground, rng, false)) /
        3.0;
    CHECK(p.probability == doctest::Approx(expected).epsilon(1e-12));

    REQUIRE(cmd_evaluate(config) == kExitOk);
}

TEST_CASE("transfer command writes the two-column comparison report") {
    const TempDir dir("firecast_cli_transfer");
    RunConfig config = tiny_world_config(dir);
    REQUIRE(cmd_gen(config) == kExitOk);
    REQUIRE(cmd_train(config) == kExitOk);

    config.source_region = 0;
    config.target_region = 2;
    config.transfer_epochs = 1;
    REQUIRE(cmd_transfer(config) == kExitOk);

    std::ifstream report(fs::path(config.out) / "transfer_report.csv");
    REQUIRE(report);
    std::string header, row;
    std::getline(report, header);
    std::getline(report, row);
    CHECK(header == "seed,transfer_val_loss,scratch_val_loss");
    CHECK(std::count(row.begin(), row.end(), ',') == 2);
    CHECK(fs::exists(fs::path(config.out) / "adapted_bundle" / "manifest.txt"));
}

TEST_CASE("transfer with zero epochs leaves bundle blobs identical to source") {
    const TempDir dir("firecast_cli_transfer0");
    RunConfig config = tiny_world_config(dir);
    REQUIRE(cmd_gen(config) == kExitOk);
    REQUIRE(cmd_train(config) == kExitOk);

    config.transfer_epochs = 0;
    config.target_region = 1;
    REQUIRE(cmd_transfer(config) == kExitOk);

    const fs::path adapted = fs::path(config.out) / "adapted_bundle";
    for (const auto& entry : fs::directory_iterator(config.bundle)) {
        const fs::path twin = adapted / entry.path().filename();
        REQUIRE(fs::exists(twin));
        REQUIRE(read_file(entry.path()) == read_file(twin));
    }
}
