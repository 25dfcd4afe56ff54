#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "probe/data.hpp"
#include "probe/io.hpp"
#include "probe/train.hpp"

namespace probe {

// Parsed experiment description. `raw` is the fully resolved document that
// gets embedded in run records; validation reports every violated field in
// one ConfigError.
struct ExperimentConfig {
    std::string command;  // local-minima | norm-bias | ntk-sweep | rank | attack
    Json raw;
    std::uint64_t seed = 0;
    std::string out_dir = "probe-out";
};

ExperimentConfig parse_config(const Json& config);

// Environment variable consulted when a cifar10 dataset omits its directory.
constexpr const char* kDataDirEnv = "PROBE_DATA_DIR";

Dataset resolve_dataset(const Json& dataset_cfg, bool normalize);
NetworkSpec resolve_model(const Json& model_cfg, const TensorShape& input_shape, int classes);
TrainConfig resolve_train(const Json& config, std::uint64_t seed);
AttackConfig resolve_attack(const Json& attack_cfg);

struct RunRecord {
    std::string command;
    std::string config_hash;
    std::string started_at;
    std::string finished_at;
    std::string status;  // "ok" | "error" | "skipped"
    Json config;
    Json metrics;
    std::vector<std::string> artifacts;

    Json to_json() const;
};

// Executes the named probe, writes CSV/JSON artifacts under the config's out
// directory, and appends one record to <out>/runs.jsonl. With `resume`,
// configs whose hash already has an "ok" record are skipped.
RunRecord run_experiment(const Json& config, bool resume = false);

// Apply "key.path=value" overrides (values parsed as JSON when possible).
void apply_override(Json& config, const std::string& spec);

}  // namespace probe
