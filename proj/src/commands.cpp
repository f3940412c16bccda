#include "firecast/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "firecast/errors.hpp"
#include "firecast/ops.hpp"
#include "firecast/serialize.hpp"

namespace firecast {

namespace fs = std::filesystem;

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing chars");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " expects an unsigned integer, got \"" +
                          value + "\"");
    }
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing chars");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " expects a real number, got \"" +
                          value + "\"");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "on") return true;
    if (value == "0" || value == "false" || value == "off") return false;
    throw ConfigError("config key " + key + " expects a boolean, got \"" + value +
                      "\"");
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return kExitOk;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFormat;
    } catch (const ConsistencyError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConsistency;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

void ensure_out_dir(const RunConfig& config) {
    std::error_code ec;
    fs::create_directories(config.out, ec);
    if (ec) {
        throw IoError("cannot create output directory " + config.out + ": " +
                      ec.message());
    }
}

void write_history_csv(const fs::path& path, const TrainHistory& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    history.write_csv(out);
}

struct SplitTables {
    FeatureTable train, val, test;
};

SplitTables build_split_tables(const WorldDataset& ds,
                               const EnsembleBundle& bundle,
                               const SplitIndices& split) {
    SplitTables tables;
    tables.train =
        build_feature_table(ds, bundle.forecasters, bundle.detector,
                            bundle.rf_radius, bundle.window, split.train_end);
    tables.val =
        build_feature_table(ds, bundle.forecasters, bundle.detector,
                            bundle.rf_radius, split.train_end, split.val_end);
    tables.test =
        build_feature_table(ds, bundle.forecasters, bundle.detector,
                            bundle.rf_radius, split.val_end, split.timesteps);
    return tables;
}

void check_fingerprint(const EnsembleBundle& bundle, const WorldDataset& ds) {
    if (bundle.fingerprint != ds.config.fingerprint()) {
        throw ConsistencyError(
            "bundle fingerprint " + hex64(bundle.fingerprint) +
            " does not match dataset fingerprint " +
            hex64(ds.config.fingerprint()));
    }
}

void write_pgm(const fs::path& path, const std::vector<double>& grid,
               std::size_t rows, std::size_t cols, double max_value) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P2\n" << cols << ' ' << rows << "\n255\n";
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = std::clamp(grid[r * cols + c] / max_value, 0.0, 1.0);
            out << static_cast<int>(std::lround(v * 255.0));
            out << (c + 1 == cols ? '\n' : ' ');
        }
    }
}

void write_csv_grid(const fs::path& path, const std::vector<double>& grid,
                    std::size_t rows, std::size_t cols) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out << grid[r * cols + c] << (c + 1 == cols ? '\n' : ',');
        }
    }
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file " + path);
    }
    RunConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              " is not key=value: \"" + stripped + "\"");
        }
        config.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    }
    return config;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "rows") rows = parse_size(key, value);
    else if (key == "cols") cols = parse_size(key, value);
    else if (key == "regions") regions = parse_size(key, value);
    else if (key == "timesteps") timesteps = parse_size(key, value);
    else if (key == "seed") seed = parse_size(key, value);
    else if (key == "patch_size") patch_size = parse_size(key, value);
    else if (key == "train_frac") train_frac = parse_real(key, value);
    else if (key == "val_frac") val_frac = parse_real(key, value);
    else if (key == "epochs") epochs = parse_size(key, value);
    else if (key == "lr") lr = parse_real(key, value);
    else if (key == "momentum") momentum = parse_real(key, value);
    else if (key == "l2") l2 = parse_real(key, value);
    else if (key == "dropout") dropout = parse_real(key, value);
    else if (key == "batch_size") batch_size = parse_size(key, value);
    else if (key == "patience") patience = parse_size(key, value);
    else if (key == "oversample") oversample = parse_bool(key, value);
    else if (key == "window") window = parse_size(key, value);
    else if (key == "forecaster_epochs") forecaster_epochs = parse_size(key, value);
    else if (key == "forecaster_lr") forecaster_lr = parse_real(key, value);
    else if (key == "detector_epochs") detector_epochs = parse_size(key, value);
    else if (key == "detector_lr") detector_lr = parse_real(key, value);
    else if (key == "detector_per_tile") detector_per_tile = parse_size(key, value);
    else if (key == "ensemble") ensemble = value;
    else if (key == "rf_radius") rf_radius = parse_real(key, value);
    else if (key == "threshold") threshold = parse_real(key, value);
    else if (key == "ablations") ablations = parse_bool(key, value);
    else if (key == "source_region") source_region = parse_size(key, value);
    else if (key == "target_region") target_region = parse_size(key, value);
    else if (key == "transfer_epochs") transfer_epochs = parse_size(key, value);
    else if (key == "transfer_lr") transfer_lr = parse_real(key, value);
    else if (key == "row") row = parse_size(key, value);
    else if (key == "col") col = parse_size(key, value);
    else if (key == "t") t = parse_size(key, value);
    else if (key == "dataset") dataset = value;
    else if (key == "bundle") bundle = value;
    else if (key == "out") out = value;
    else {
        throw ConfigError("unknown config key \"" + key + "\"");
    }
}

void RunConfig::print(std::ostream& os) const {
    os << "config rows=" << rows << '\n';
    os << "config cols=" << cols << '\n';
    os << "config regions=" << regions << '\n';
    os << "config timesteps=" << timesteps << '\n';
    os << "config seed=" << seed << '\n';
    os << "config patch_size=" << patch_size << '\n';
    os << "config train_frac=" << train_frac << '\n';
    os << "config val_frac=" << val_frac << '\n';
    os << "config epochs=" << epochs << '\n';
    os << "config lr=" << lr << '\n';
    os << "config momentum=" << momentum << '\n';
    os << "config l2=" << l2 << '\n';
    os << "config dropout=" << dropout << '\n';
    os << "config batch_size=" << batch_size << '\n';
    os << "config patience=" << patience << '\n';
    os << "config oversample=" << (oversample ? 1 : 0) << '\n';
    os << "config window=" << window << '\n';
    os << "config forecaster_epochs=" << forecaster_epochs << '\n';
    os << "config forecaster_lr=" << forecaster_lr << '\n';
    os << "config detector_epochs=" << detector_epochs << '\n';
    os << "config detector_lr=" << detector_lr << '\n';
    os << "config detector_per_tile=" << detector_per_tile << '\n';
    os << "config ensemble=" << ensemble << '\n';
    os << "config rf_radius=" << rf_radius << '\n';
    os << "config threshold=" << threshold << '\n';
    os << "config ablations=" << (ablations ? 1 : 0) << '\n';
    os << "config source_region=" << source_region << '\n';
    os << "config target_region=" << target_region << '\n';
    os << "config transfer_epochs=" << transfer_epochs << '\n';
    os << "config transfer_lr=" << transfer_lr << '\n';
    os << "config row=" << row << '\n';
    os << "config col=" << col << '\n';
    if (t == kLastTimestep) {
        os << "config t=last\n";
    } else {
        os << "config t=" << t << '\n';
    }
    os << "config dataset=" << dataset << '\n';
    os << "config bundle=" << bundle << '\n';
    os << "config out=" << out << '\n';
}

WorldConfig RunConfig::world_config() const {
    WorldConfig wc;
    wc.rows = rows;
    wc.cols = cols;
    wc.regions = regions;
    wc.timesteps = timesteps;
    wc.seed = seed;
    wc.patch_size = patch_size;
    return wc;
}

EnsembleTrainOptions RunConfig::train_options() const {
    EnsembleTrainOptions options;
    options.window = window;
    options.rf_radius = rf_radius;
    options.mode = ensemble_mode_from_string(ensemble);
    options.detector_per_tile = detector_per_tile;

    options.meta.epochs = epochs;
    options.meta.lr = lr;
    options.meta.momentum = momentum;
    options.meta.l2 = l2;
    options.meta.dropout = dropout;
    options.meta.batch_size = batch_size;
    options.meta.early_stop_patience = patience;
    options.meta.oversample = oversample;
    options.meta.seed = seed;

    options.forecaster = options.meta;
    options.forecaster.epochs = forecaster_epochs;
    options.forecaster.lr = forecaster_lr;
    options.forecaster.oversample = false;
    // Regression stage: small batches and mild momentum fit the per-region
    // series much faster than the classifier defaults.
    options.forecaster.momentum = 0.5;
    options.forecaster.batch_size = 8;
    options.forecaster.l2 = 0.0;

    options.detector = options.meta;
    options.detector.epochs = detector_epochs;
    options.detector.lr = detector_lr;
    return options;
}

int cmd_gen(const RunConfig& config) {
    return run_guarded([&] {
        config.print(std::cout);
        const WorldConfig wc = config.world_config();
        const WorldDataset ds = generate_world(wc);

        const fs::path path(config.dataset);
        const fs::path parent = path.parent_path();
        if (!parent.empty() && !fs::is_directory(parent)) {
            throw IoError("output directory " + parent.string() + " does not exist");
        }
        // Write via a temporary so a failure leaves no partial file.
        const fs::path tmp = path.string() + ".tmp";
        try {
            save_dataset(tmp, ds);
            fs::rename(tmp, path);
        } catch (...) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw;
        }

        std::size_t fires = 0;
        for (const TileRecord& rec : ds.records) fires += rec.fire;
        std::cout << "records=" << ds.records.size() << '\n';
        std::cout << "fire_rate="
                  << static_cast<double>(fires) /
                         static_cast<double>(ds.records.size())
                  << '\n';
        std::cout << "dataset=" << path.string() << '\n';
    });
}

int cmd_train(const RunConfig& config) {
    return run_guarded([&] {
        config.print(std::cout);
        ensure_out_dir(config);
        const WorldDataset ds = load_dataset(config.dataset);
        const SplitIndices split =
            split_dataset(ds, config.train_frac, config.val_frac);

        EnsembleHistories histories;
        const EnsembleBundle bundle =
            train_ensemble(ds, split, config.train_options(), &histories);
        save_bundle(config.bundle, bundle);

        const fs::path out_dir(config.out);
        for (std::size_t r = 0; r < histories.forecasters.size(); ++r) {
            write_history_csv(out_dir / ("history_region" + std::to_string(r) +
                                         ".csv"),
                              histories.forecasters[r]);
        }
        write_history_csv(out_dir / "history_detector.csv", histories.detector);
        write_history_csv(out_dir / "history_meta.csv", histories.meta);
        write_history_csv(out_dir / "history_head_weather.csv",
                          histories.head_weather);
        write_history_csv(out_dir / "history_head_vision.csv",
                          histories.head_vision);
        write_history_csv(out_dir / "history_head_ground.csv",
                          histories.head_ground);

        std::cout << "bundle=" << config.bundle << '\n';
        std::cout << "meta_best_epoch=" << histories.meta.best_epoch << '\n';
        std::cout << "meta_stopped_epoch=" << histories.meta.stopped_epoch << '\n';
    });
}

int cmd_evaluate(const RunConfig& config) {
    return run_guarded([&] {
        config.print(std::cout);
        ensure_out_dir(config);
        const WorldDataset ds = load_dataset(config.dataset);
        const EnsembleBundle bundle = load_bundle(config.bundle);
        check_fingerprint(bundle, ds);
        const SplitIndices split =
            split_dataset(ds, config.train_frac, config.val_frac);

        const SplitTables tables = build_split_tables(ds, bundle, split);
        const fs::path out_dir(config.out);

        std::ofstream kv(out_dir / "metrics.kv");
        std::ofstream text(out_dir / "metrics.txt");
        if (!kv || !text) throw IoError("cannot write metrics files");

        const auto report_split = [&](const std::string& name,
                                      const FeatureTable& table) {
            const std::vector<double> scores = score_table(table, bundle);
            const MetricsReport report =
                MetricsReport::from_scores(scores, table.labels, config.threshold);
            const double bce = bce_loss_mean(scores, table.labels);
            write_metrics_kv(kv, name, report);
            kv << name << ".bce=" << bce << '\n';
            text << name << ": precision=" << report.precision
                 << " recall=" << report.recall << " f1=" << report.f1
                 << " accuracy=" << report.accuracy
                 << " auc_roc=" << report.auc_roc << " bce=" << bce << '\n';
            std::cout << name << ".auc_roc=" << report.auc_roc << '\n';
        };
        report_split("train", tables.train);
        report_split("val", tables.val);
        report_split("test", tables.test);

        if (config.ablations) {
            const auto report_head = [&](const std::string& name,
                                         const FfnParams& head,
                                         const std::vector<std::size_t>& columns) {
                std::ofstream head_kv(out_dir / ("metrics_" + name + ".kv"));
                if (!head_kv) throw IoError("cannot write ablation metrics");
                const auto run = [&](const std::string& split_name,
                                     const FeatureTable& table) {
                    const std::vector<double> scores = score_table_head(
                        table, head, columns, bundle.feature_norm);
                    const MetricsReport report = MetricsReport::from_scores(
                        scores, table.labels, config.threshold);
                    write_metrics_kv(head_kv, split_name, report);
                    std::cout << name << "." << split_name
                              << ".auc_roc=" << report.auc_roc << '\n';
                };
                run("train", tables.train);
                run("val", tables.val);
                run("test", tables.test);
            };
            report_head("weather", bundle.head_weather, weather_feature_columns());
            report_head("vision", bundle.head_vision, vision_feature_columns());
            report_head("ground", bundle.head_ground, ground_feature_columns());
        }
    });
}

int cmd_predict(const RunConfig& config) {
    return run_guarded([&] {
        config.print(std::cout);
        const WorldDataset ds = load_dataset(config.dataset);
        const EnsembleBundle bundle = load_bundle(config.bundle);
        check_fingerprint(bundle, ds);
        const std::size_t t = config.t == RunConfig::kLastTimestep
                                  ? ds.config.timesteps - 1
                                  : config.t;
        const Prediction p =
            predict(config.row, config.col, t, ds, bundle, config.threshold);
        std::cout << "probability=" << p.probability << '\n';
        std::cout << "decision=" << (p.decision ? 1 : 0) << '\n';
    });
}

int cmd_transfer(const RunConfig& config) {
    return run_guarded([&] {
        config.print(std::cout);
        ensure_out_dir(config);
        const WorldDataset ds = load_dataset(config.dataset);
        const EnsembleBundle source = load_bundle(config.bundle);
        check_fingerprint(source, ds);
        if (config.source_region >= ds.config.regions ||
            config.target_region >= ds.config.regions) {
            throw ConsistencyError("transfer regions must be below " +
                                   std::to_string(ds.config.regions));
        }
        const SplitIndices split =
            split_dataset(ds, config.train_frac, config.val_frac);

        TransferPlan plan;
        plan.source_region = config.source_region;
        plan.target_region = config.target_region;
        plan.fine_tune_epochs = config.transfer_epochs;
        plan.lr = config.transfer_lr;
        plan.seed = config.seed;

        const EnsembleBundle adapted = transfer(source, ds, split, plan);
        const fs::path out_dir(config.out);
        save_bundle(out_dir / "adapted_bundle", adapted);

        const double transfer_loss =
            region_val_loss(adapted, ds, split, plan.target_region);
        const double scratch_loss = scratch_region_val_loss(
            ds, split, plan.target_region, plan.fine_tune_epochs, plan.lr,
            plan.seed, source.window, source.rf_radius);

        std::ofstream report(out_dir / "transfer_report.csv");
        if (!report) throw IoError("cannot write transfer report");
        report << "seed,transfer_val_loss,scratch_val_loss\n";
        report << config.seed << ',' << transfer_loss << ',' << scratch_loss
               << '\n';

        std::cout << "transfer_val_loss=" << transfer_loss << '\n';
        std::cout << "scratch_val_loss=" << scratch_loss << '\n';
    });
}

int cmd_inspect(const RunConfig& config) {
    return run_guarded([&] {
        config.print(std::cout);
        ensure_out_dir(config);
        const WorldDataset ds = load_dataset(config.dataset);
        const fs::path out_dir(config.out);

        // Per-tile entropy of the fire-label history.
        std::vector<double> entropy_grid(ds.config.rows * ds.config.cols);
        for (std::size_t r = 0; r < ds.config.rows; ++r) {
            for (std::size_t c = 0; c < ds.config.cols; ++c) {
                std::vector<std::uint8_t> labels;
                labels.reserve(ds.config.timesteps);
                for (std::size_t t = 0; t < ds.config.timesteps; ++t) {
                    labels.push_back(ds.at(r, c, t).fire);
                }
                entropy_grid[r * ds.config.cols + c] = tile_entropy(labels);
            }
        }
        write_csv_grid(out_dir / "entropy.csv", entropy_grid, ds.config.rows,
                       ds.config.cols);
        write_pgm(out_dir / "entropy.pgm", entropy_grid, ds.config.rows,
                  ds.config.cols, 1.0);

        // RF events, one row per record with a positive count.
        std::ofstream rf(out_dir / "rf_events.csv");
        if (!rf) throw IoError("cannot write rf_events.csv");
        rf << "t,row,col,count\n";
        for (const TileRecord& rec : ds.records) {
            if (rec.rf_count > 0) {
                rf << rec.t << ',' << rec.row << ',' << rec.col << ','
                   << rec.rf_count << '\n';
            }
        }

        // Optional risk map when a bundle is available.
        if (fs::exists(fs::path(config.bundle) / "manifest.txt")) {
            const EnsembleBundle bundle = load_bundle(config.bundle);
            check_fingerprint(bundle, ds);
            const std::size_t t = config.t == RunConfig::kLastTimestep
                                      ? ds.config.timesteps - 1
                                      : config.t;
            std::vector<double> risk(ds.config.rows * ds.config.cols);
            for (std::size_t r = 0; r < ds.config.rows; ++r) {
                for (std::size_t c = 0; c < ds.config.cols; ++c) {
                    risk[r * ds.config.cols + c] =
                        predict(r, c, t, ds, bundle, config.threshold).probability;
                }
            }
            write_csv_grid(out_dir / "risk.csv", risk, ds.config.rows,
                           ds.config.cols);
            write_pgm(out_dir / "risk.pgm", risk, ds.config.rows, ds.config.cols,
                      1.0);
            std::cout << "risk_map_t=" << t << '\n';
        }

        double max_entropy = 0.0;
        for (const double v : entropy_grid) max_entropy = std::max(max_entropy, v);
        std::cout << "max_tile_entropy=" << max_entropy << '\n';
    });
}

}  // namespace firecast
