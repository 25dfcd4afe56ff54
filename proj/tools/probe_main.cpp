#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "probe/experiment.hpp"

namespace {

int run_command(const std::string& command, const std::string& config_path,
                std::optional<std::uint64_t> seed, const std::string& out_dir,
                const std::vector<std::string>& overrides, bool resume) {
    probe::Json config;
    try {
        std::ifstream is(config_path);
        if (!is) throw probe::ConfigError("cannot open config file: " + config_path);
        config = probe::Json::parse(is);
    } catch (const std::exception& e) {
        probe::Json err{{"status", "error"}, {"error", e.what()}, {"config_file", config_path}};
        std::cerr << err.dump() << "\n";
        return 2;
    }

    config["command"] = command;
    if (seed) config["seed"] = *seed;
    if (!out_dir.empty()) config["out"] = out_dir;
    try {
        for (const auto& ov : overrides) probe::apply_override(config, ov);
        probe::RunRecord record = probe::run_experiment(config, resume);
        std::cout << record.to_json().dump(2) << "\n";
        return 0;
    } catch (const std::exception& e) {
        probe::Json err{{"status", "error"}, {"error", e.what()}, {"command", command}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Loss-landscape probing toolkit"};
    app.require_subcommand(1);

    struct Args {
        std::string config;
        std::string out;
        std::optional<std::uint64_t> seed;
        std::vector<std::string> overrides;
        bool resume = false;
    };

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"local-minima", "Embedding and trapping experiments"},
        {"norm-bias", "Training with weight-decay / norm-bias regularizers"},
        {"ntk-sweep", "Tangent-kernel width sweeps"},
        {"rank", "Effective-rank probes and RankMin/RankMax fine-tuning"},
        {"attack", "PGD evaluation of a checkpoint"},
    };

    std::map<std::string, Args> args;
    for (const auto& [name, desc] : commands) {
        CLI::App* sub = app.add_subcommand(name, desc);
        Args& a = args[name];
        sub->add_option("--config", a.config, "Experiment config JSON")->required();
        sub->add_option("--seed", a.seed, "Override the config seed");
        sub->add_option("--out", a.out, "Output directory");
        sub->add_option("--override", a.overrides, "key.path=value overrides (repeatable)");
        sub->add_flag("--resume", a.resume, "Skip work already recorded in runs.jsonl");
    }

    CLI11_PARSE(app, argc, argv);

    for (const auto& [name, desc] : commands) {
        if (app.got_subcommand(name)) {
            const Args& a = args[name];
            return run_command(name, a.config, a.seed, a.out, a.overrides, a.resume);
        }
    }
    return 2;
}
