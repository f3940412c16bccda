#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "firecast/commands.hpp"
#include "firecast/errors.hpp"

namespace {

// Flag values are collected as key=value overrides and applied on top of the
// config file, so the precedence is: defaults < file < flags.
struct PendingOverrides {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
};

void add_shared_options(CLI::App* cmd, PendingOverrides& pending) {
    cmd->add_option("--config", pending.config_path,
                    "key=value config file (unknown keys rejected)");
    const auto track = [&pending, cmd](const std::string& key,
                                       const std::string& flag,
                                       const std::string& help) {
        auto* opt = cmd->add_option_function<std::string>(
            flag,
            [&pending, key](const std::string& value) {
                pending.overrides.emplace_back(key, value);
            },
            help);
        opt->expected(1);
    };
    track("seed", "--seed", "world / training seed");
    track("out", "--out", "output directory");
    track("dataset", "--dataset", "dataset file path");
    track("bundle", "--bundle", "bundle directory path");
    track("rows", "--rows", "grid rows");
    track("cols", "--cols", "grid cols");
    track("regions", "--regions", "region count");
    track("timesteps", "--timesteps", "world length");
    track("train_frac", "--train-frac", "train fraction of timesteps");
    track("val_frac", "--val-frac", "validation fraction of timesteps");
    track("epochs", "--epochs", "meta-learner epochs");
    track("oversample", "--oversample", "oversample minority class (0/1)");
    track("ensemble", "--ensemble", "combiner: stacked or averaging");
    track("threshold", "--threshold", "decision threshold");
    track("ablations", "--ablations", "emit per-source ablation reports (0/1)");
    track("source_region", "--source-region", "transfer source region");
    track("target_region", "--target-region", "transfer target region");
    track("transfer_epochs", "--transfer-epochs", "fine-tune epochs");
    track("transfer_lr", "--transfer-lr", "fine-tune learning rate");
    track("row", "--row", "tile row");
    track("col", "--col", "tile col");
    track("t", "--t", "time index");
    cmd->add_option_function<std::vector<std::string>>(
        "--set",
        [&pending](const std::vector<std::string>& pairs) {
            for (const std::string& pair : pairs) {
                const auto eq = pair.find('=');
                if (eq == std::string::npos) {
                    throw CLI::ValidationError("--set expects key=value, got \"" +
                                               pair + "\"");
                }
                pending.overrides.emplace_back(pair.substr(0, eq),
                                               pair.substr(eq + 1));
            }
        },
        "any config key as key=value");
}

firecast::RunConfig resolve(const PendingOverrides& pending) {
    firecast::RunConfig config;
    if (!pending.config_path.empty()) {
        config = firecast::RunConfig::from_file(pending.config_path);
    }
    for (const auto& [key, value] : pending.overrides) {
        config.set(key, value);
    }
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wildfire risk prediction pipeline"};
    app.require_subcommand(1);

    PendingOverrides pending;
    int (*selected)(const firecast::RunConfig&) = nullptr;

    const auto add_command = [&](const std::string& name, const std::string& help,
                                 int (*fn)(const firecast::RunConfig&)) {
        CLI::App* cmd = app.add_subcommand(name, help);
        add_shared_options(cmd, pending);
        cmd->callback([&selected, fn] { selected = fn; });
    };

    add_command("gen", "generate and save a synthetic world", firecast::cmd_gen);
    add_command("train", "train forecasters, detector, and the ensemble",
                firecast::cmd_train);
    add_command("evaluate", "report metrics per split", firecast::cmd_evaluate);
    add_command("predict", "score one tile at one time", firecast::cmd_predict);
    add_command("transfer", "fine-tune a bundle on a target region",
                firecast::cmd_transfer);
    add_command("inspect", "entropy and risk maps, RF event export",
                firecast::cmd_inspect);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return firecast::kExitUsage;
    }

    firecast::RunConfig config;
    try {
        config = resolve(pending);
    } catch (const firecast::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return firecast::kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return firecast::kExitUsage;
    }
    return selected(config);
}
