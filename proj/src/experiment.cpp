#include "probe/experiment.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "probe/landscape.hpp"
#include "probe/ntk.hpp"
#include "probe/rank.hpp"
#include "probe/spectral.hpp"

namespace probe {

namespace fs = std::filesystem;

namespace {

std::string now_iso() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc;
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

const std::vector<std::string> kCommands = {"local-minima", "norm-bias", "ntk-sweep", "rank",
                                            "attack"};

void append_record(const std::string& out_dir, const RunRecord& record) {
    fs::create_directories(out_dir);
    std::ofstream os(fs::path(out_dir) / "runs.jsonl", std::ios::app);
    os << record.to_json().dump() << "\n";
    os.flush();
}

std::optional<Json> find_ok_record(const std::string& out_dir, const std::string& hash) {
    std::ifstream is(fs::path(out_dir) / "runs.jsonl");
    if (!is) return std::nullopt;
    std::string line;
    std::optional<Json> found;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;
        if (j.value("config_hash", "") == hash && j.value("status", "") == "ok") found = j;
    }
    return found;
}

bool has_ok_record(const std::string& out_dir, const std::string& hash) {
    return find_ok_record(out_dir, hash).has_value();
}

Json spectrum_estimate_json(const SpectrumEstimate& est) {
    return Json{{"eigenvalue", est.eigenvalue},
                {"iterations", est.iterations},
                {"residual", est.residual},
                {"converged", est.converged}};
}

Json report_json(const StationarityReport& r) {
    return Json{{"loss", r.loss},
                {"grad_norm", r.grad_norm},
                {"min_ev", spectrum_estimate_json(r.min_ev)},
                {"max_ev", spectrum_estimate_json(r.max_ev)},
                {"min_activation", r.min_activation}};
}

}  // namespace

ExperimentConfig parse_config(const Json& config) {
    std::vector<std::string> errors;
    ExperimentConfig out;
    out.raw = config;

    if (!config.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    out.command = config.value("command", "");
    if (std::find(kCommands.begin(), kCommands.end(), out.command) == kCommands.end())
        errors.push_back("command: expected one of local-minima|norm-bias|ntk-sweep|rank|attack, got '" +
                         out.command + "'");
    if (!config.contains("dataset") || !config.at("dataset").is_object())
        errors.push_back("dataset: required object missing");
    else {
        const auto& d = config.at("dataset");
        const std::string kind = d.value("kind", "");
        if (kind == "cifar10") {
            std::string dir = d.value("dir", "");
            if (dir.empty()) {
                const char* env = std::getenv(kDataDirEnv);
                if (!env)
                    errors.push_back("dataset.dir: missing and PROBE_DATA_DIR is unset");
                else
                    dir = env;
            }
            if (!dir.empty() && !fs::exists(fs::path(dir) / "data_batch_1.bin"))
                errors.push_back("dataset.dir: " + dir + "/data_batch_1.bin does not exist");
        } else if (kind == "synthetic") {
            if (d.value("classes", 0) < 2) errors.push_back("dataset.classes: must be >= 2");
            if (d.value("dim", 0) < d.value("classes", 0))
                errors.push_back("dataset.dim: must be >= classes");
        } else if (kind == "synthetic-xor") {
            if (d.value("dim", 0) < 2) errors.push_back("dataset.dim: must be >= 2");
        } else {
            errors.push_back("dataset.kind: expected cifar10|synthetic|synthetic-xor, got '" + kind +
                             "'");
        }
    }
    if (out.command != "attack" && (!config.contains("model") || !config.at("model").is_object()))
        errors.push_back("model: required object missing");
    if (out.command == "attack") {
        if (!config.contains("model")) errors.push_back("model: required for attack");
        const std::string ckpt = config.value("checkpoint", "");
        if (ckpt.empty())
            errors.push_back("checkpoint: required for attack");
        else if (!fs::exists(ckpt))
            errors.push_back("checkpoint: file does not exist: " + ckpt);
        if (!config.contains("attack")) errors.push_back("attack: required config missing");
    }
    if (out.command == "ntk-sweep") {
        if (!config.contains("widths") || !config.at("widths").is_array() ||
            config.at("widths").empty())
            errors.push_back("widths: required non-empty array");
    }
    if (out.command == "rank") {
        const std::string mode = config.value("mode", "");
        if (mode != "rank-min" && mode != "rank-max")
            errors.push_back("mode: expected rank-min|rank-max, got '" + mode + "'");
    }
    if (out.command == "local-minima") {
        const std::string init = config.value("init", "default");
        const std::vector<std::string> inits = {"default", "lemma1", "zero", "bias-shift",
                                                "bias-uniform"};
        if (std::find(inits.begin(), inits.end(), init) == inits.end())
            errors.push_back("init: expected default|lemma1|zero|bias-shift|bias-uniform, got '" +
                             init + "'");
    }

    out.seed = config.value("seed", 0ULL);
    out.out_dir = config.value("out", "probe-out");

    if (!errors.empty()) {
        std::string msg = "invalid config (" + std::to_string(errors.size()) + " problems):";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return out;
}

Dataset resolve_dataset(const Json& d, bool normalize) {
    const std::string kind = d.value("kind", "");
    Dataset data;
    if (kind == "cifar10") {
        std::string dir = d.value("dir", "");
        if (dir.empty()) dir = std::getenv(kDataDirEnv) ? std::getenv(kDataDirEnv) : "";
        data = load_cifar10(dir);
        if (d.contains("train_limit")) {
            const int limit = std::min<int>(d.at("train_limit").get<int>(), data.train.size());
            data.train.inputs = data.train.inputs.topRows(limit).eval();
            data.train.labels.resize(limit);
        }
    } else if (kind == "synthetic") {
        data = synth_dataset(d.value("classes", 2), d.value("dim", 8), d.value("per_class", 100),
                             d.value("separation", 4.0), d.value("seed", 0ULL));
        if (d.contains("image_shape")) {
            const auto dims = d.at("image_shape").get<std::vector<int>>();
            if (dims.size() == 3 && dims[0] * dims[1] * dims[2] == data.shape.count())
                data.shape = TensorShape::image(dims[0], dims[1], dims[2]);
        }
    } else if (kind == "synthetic-xor") {
        data = synth_xor(d.value("dim", 8), d.value("per_quadrant", 100), d.value("separation", 6.0),
                         d.value("seed", 0ULL));
    } else {
        throw ConfigError("dataset.kind: unknown kind " + kind);
    }
    if (normalize) standardize(data);
    return data;
}

NetworkSpec resolve_model(const Json& m, const TensorShape& input_shape, int classes) {
    if (m.contains("layers")) {
        Json doc = m;
        doc["input_shape"] = input_shape.dims;
        doc["output_dim"] = classes;
        return spec_from_json(doc);
    }
    const std::string family = m.value("family", "mlp4");
    if (family == "mlp") {
        return mlp_spec(input_shape.count(), m.value("hidden", std::vector<int>{512, 512, 512}),
                        classes);
    }
    return family_spec(family_from_name(family), input_shape, classes, m.value("width", 16),
                       m.value("batchnorm", true), m.value("skip", true));
}

TrainConfig resolve_train(const Json& config, std::uint64_t seed) {
    TrainConfig tc;
    tc.seed = seed;
    const Json opt = config.value("optimizer", Json::object());
    tc.epochs = opt.value("epochs", 30);
    tc.batch_size = opt.value("kind", "sgd") == "gd" ? 0 : opt.value("batch_size", 128);
    tc.momentum = opt.value("momentum", 0.9);
    if (opt.contains("schedule")) {
        const Json& s = opt.at("schedule");
        if (s.contains("name")) {
            tc.schedule = lr_schedule(s.at("name").get<std::string>());
            if (s.contains("base")) tc.schedule.base = s.at("base").get<double>();
        } else {
            tc.schedule.base = s.value("base", 0.1);
            tc.schedule.factor = s.value("factor", 0.1);
            tc.schedule.drop_epochs = s.value("drops", std::vector<int>{});
        }
    }
    const Json reg = config.value("regularizer", Json::object());
    const std::string reg_kind = reg.value("kind", "none");
    if (reg_kind == "weight_decay")
        tc.reg = RegularizerSpec::weight_decay(reg.value("coefficient", 0.0005));
    else if (reg_kind == "norm_bias")
        tc.reg = RegularizerSpec::norm_bias(reg.value("coefficient", 0.005), reg.value("mu2", 0.0));
    else if (reg_kind != "none")
        throw ConfigError("regularizer.kind: unknown kind " + reg_kind);
    tc.augment.enabled = config.value("augment", false);
    if (config.value("adversarial", false)) {
        tc.adversarial = config.contains("attack") ? resolve_attack(config.at("attack"))
                                                   : AttackConfig::train_pgd7();
    }
    return tc;
}

AttackConfig resolve_attack(const Json& a) {
    AttackConfig cfg;
    cfg.epsilon = a.value("epsilon", 8.0 / 255.0);
    cfg.step_size = a.value("step_size", 2.0 / 255.0);
    cfg.steps = a.value("steps", 7);
    cfg.random_start = a.value("random_start", false);
    cfg.seed = a.value("seed", 0ULL);
    if (cfg.epsilon < 0 || cfg.step_size < 0 || cfg.steps < 0)
        throw ConfigError("attack: epsilon, step_size and steps must be nonnegative");
    return cfg;
}

Json RunRecord::to_json() const {
    return Json{{"command", command},     {"config_hash", config_hash},
                {"started_at", started_at}, {"finished_at", finished_at},
                {"status", status},       {"config", config},
                {"metrics", metrics},     {"artifacts", artifacts}};
}

namespace {

RunRecord run_local_minima(const ExperimentConfig& cfg, const Dataset& data);
RunRecord run_norm_bias(const ExperimentConfig& cfg, const Dataset& data);
RunRecord run_ntk_sweep(const ExperimentConfig& cfg, const Dataset& data, bool resume);
RunRecord run_rank(const ExperimentConfig& cfg, const Dataset& data);
RunRecord run_attack(const ExperimentConfig& cfg, const Dataset& data);

RunRecord run_local_minima(const ExperimentConfig& cfg, const Dataset& data) {
    RunRecord record;
    TrappingConfig tc;
    tc.spec = resolve_model(cfg.raw.at("model"), data.shape, data.classes);
    const std::string init = cfg.raw.value("init", "default");
    tc.init = init == "lemma1"         ? TrapInit::Lemma1
              : init == "zero"         ? TrapInit::Zero
              : init == "bias-shift"   ? TrapInit::BiasShift
              : init == "bias-uniform" ? TrapInit::BiasUniform
                                       : TrapInit::Default;
    const Json opt = cfg.raw.value("optimizer", Json::object());
    const std::string opt_kind = opt.value("kind", "gd");
    tc.optimizer = opt_kind == "gd"    ? TrapOptimizer::GD
                   : opt.value("momentum", 0.9) > 0 ? TrapOptimizer::SGDMomentum
                                                    : TrapOptimizer::SGD;
    tc.lr = opt.value("schedule", Json::object()).value("base", 0.1);
    tc.epochs = opt.value("epochs", 200);
    tc.batch_size = opt.value("batch_size", 128);
    tc.bias_shift = cfg.raw.value("bias_shift", 20.0);
    tc.bias_half_width = cfg.raw.value("bias_half_width", 50.0);
    tc.linear_weight_decay = cfg.raw.value("linear_weight_decay", 0.0);
    tc.power_iters = cfg.raw.value("power_iters", 500);
    tc.measure_spectrum = cfg.raw.value("measure_spectrum", true);
    tc.seed = cfg.seed;

    TrappingResult result = trapping_experiment(tc, data.train);

    std::vector<std::vector<std::string>> rows;
    for (const auto& stat : result.trace)
        rows.push_back({std::to_string(stat.epoch), format_double(stat.loss),
                        format_double(stat.grad_norm), format_double(stat.min_preactivation)});
    const std::string trace_path = (fs::path(cfg.out_dir) / "trapping_trace.csv").string();
    fs::create_directories(cfg.out_dir);
    write_csv(trace_path, {"epoch", "loss", "grad_norm", "min_preactivation"}, rows);
    record.artifacts.push_back(trace_path);

    record.metrics = Json{{"before", report_json(result.before)},
                          {"after", report_json(result.after)},
                          {"preactivations_stayed_positive", result.preactivations_stayed_positive}};
    if (tc.init == TrapInit::Lemma1) {
        record.metrics["linear_loss"] = result.linear_loss;
        record.metrics["trapped"] = result.after.loss >= 0.95 * result.linear_loss;
    }
    return record;
}

RunRecord run_norm_bias(const ExperimentConfig& cfg, const Dataset& data) {
    RunRecord record;
    NetworkSpec spec = resolve_model(cfg.raw.at("model"), data.shape, data.classes);
    Model model{spec, init_params(spec, InitScheme::HeUniform, cfg.seed), BnState::init_for(spec)};
    TrainConfig tc = resolve_train(cfg.raw, cfg.seed);

    std::optional<AttackConfig> eval_attack;
    if (cfg.raw.contains("eval_attack")) eval_attack = resolve_attack(cfg.raw.at("eval_attack"));
    auto trace = train(model, data.train, data.test, tc, eval_attack);

    fs::create_directories(cfg.out_dir);
    std::vector<std::vector<std::string>> rows;
    for (const auto& row : trace)
        rows.push_back({std::to_string(row.epoch), format_double(row.lr),
                        format_double(row.train_loss), format_double(row.clean_acc),
                        format_double(row.robust_acc), format_double(row.param_norm)});
    const std::string trace_path = (fs::path(cfg.out_dir) / "train_trace.csv").string();
    write_csv(trace_path, {"epoch", "lr", "train_loss", "clean_acc", "robust_acc", "param_norm"},
              rows);
    const std::string ckpt_path = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
    save_checkpoint(ckpt_path, model.params, model.bn.empty() ? nullptr : &model.bn);
    record.artifacts = {trace_path, ckpt_path};

    record.metrics = Json{{"final_train_loss", trace.empty() ? 0.0 : trace.back().train_loss},
                          {"final_clean_acc", trace.empty() ? 0.0 : trace.back().clean_acc},
                          {"final_robust_acc", trace.empty() ? -1.0 : trace.back().robust_acc},
                          {"final_param_norm", model.params.values.norm()},
                          {"param_norm_squared", model.params.values.squaredNorm()}};
    return record;
}

RunRecord run_ntk_sweep(const ExperimentConfig& cfg, const Dataset& data, bool resume) {
    RunRecord record;
    const Json model = cfg.raw.at("model");
    WidthSweepConfig sweep;
    sweep.family = family_from_name(model.value("family", "mlp2"));
    sweep.batchnorm = model.value("batchnorm", true);
    sweep.skip = model.value("skip", true);
    sweep.widths = cfg.raw.at("widths").get<std::vector<int>>();
    sweep.train = resolve_train(cfg.raw, cfg.seed);
    if (sweep.train.reg.kind == RegKind::None)
        sweep.train.reg = RegularizerSpec::weight_decay(0.0005);
    sweep.num_images = cfg.raw.value("images", 25);
    if (cfg.raw.contains("seeds"))
        sweep.seeds = cfg.raw.at("seeds").get<std::vector<std::uint64_t>>();
    else
        sweep.seeds = {cfg.seed};
    sweep.image_seed = cfg.raw.value("image_seed", cfg.seed);
    sweep.track_epochs = cfg.raw.value("track_epochs", false);

    fs::create_directories(cfg.out_dir);
    std::vector<std::vector<std::string>> rows;
    int failures = 0, skipped = 0;
    const std::vector<int> all_widths = sweep.widths;
    const std::vector<std::uint64_t> all_seeds = sweep.seeds;
    for (int w : all_widths) {
        for (std::uint64_t s : all_seeds) {
            Json cell_cfg = cfg.raw;
            cell_cfg["cell"] = Json{{"width", w}, {"seed", s}};
            const std::string cell_hash = config_hash(cell_cfg);

            // Completed cells persist across crashes; --resume replays their
            // stored metrics instead of recomputing the cell.
            if (resume) {
                if (auto prior = find_ok_record(cfg.out_dir, cell_hash)) {
                    const Json& m = prior->at("metrics");
                    rows.push_back({family_name(sweep.family), std::to_string(w),
                                    m.value("P", std::string("")), std::to_string(s),
                                    format_double(m.value("norm0", 0.0)),
                                    format_double(m.value("norm1", 0.0)),
                                    format_double(m.value("rel_change", 0.0)),
                                    format_double(m.value("correlation", 0.0)),
                                    format_double(m.value("test_acc", 0.0)),
                                    format_double(m.value("param_change", 0.0))});
                    ++skipped;
                    continue;
                }
            }

            WidthSweepConfig one = sweep;
            one.widths = {w};
            one.seeds = {s};
            SweepCell cell = width_sweep(one, data.train, data.test, data.shape, data.classes).at(0);
            if (!cell.ok) ++failures;
            rows.push_back({cell.family, std::to_string(cell.width),
                            std::to_string(cell.param_count), std::to_string(cell.seed),
                            format_double(cell.norm0), format_double(cell.norm1),
                            format_double(cell.rel_change), format_double(cell.correlation),
                            format_double(cell.test_acc), format_double(cell.param_change)});

            RunRecord cell_record;
            cell_record.command = "ntk-sweep-cell";
            cell_record.config = cell_cfg;
            cell_record.config_hash = cell_hash;
            cell_record.started_at = cell_record.finished_at = now_iso();
            cell_record.status = cell.ok ? "ok" : "error";
            cell_record.metrics =
                Json{{"P", std::to_string(cell.param_count)},
                     {"norm0", cell.norm0},           {"norm1", cell.norm1},
                     {"rel_change", cell.rel_change}, {"correlation", cell.correlation},
                     {"test_acc", cell.test_acc},     {"param_change", cell.param_change},
                     {"error", cell.error}};
            append_record(cfg.out_dir, cell_record);
        }
    }
    const std::string sweep_path = (fs::path(cfg.out_dir) / "ntk_sweep.csv").string();
    write_csv(sweep_path,
              {"family", "width", "P", "seed", "norm0", "norm1", "rel_change", "correlation",
               "test_acc", "param_change"},
              rows);
    record.artifacts.push_back(sweep_path);
    record.metrics = Json{{"cells", rows.size()}, {"failures", failures}, {"skipped", skipped}};
    return record;
}

RunRecord run_rank(const ExperimentConfig& cfg, const Dataset& data) {
    RunRecord record;
    NetworkSpec spec = resolve_model(cfg.raw.at("model"), data.shape, data.classes);
    Model model{spec, init_params(spec, InitScheme::HeUniform, cfg.seed), BnState::init_for(spec)};

    Json init_ranks = Json::array();
    for (const auto& s : model_spectra(model))
        init_ranks.push_back(Json{{"layer", s.layer_id}, {"effective_rank", s.effective_rank}});

    TrainConfig pre = resolve_train(cfg.raw, cfg.seed);
    pre.epochs = cfg.raw.value("pretrain_epochs", pre.epochs);
    const std::string ckpt_in = cfg.raw.value("checkpoint", "");
    if (!ckpt_in.empty()) {
        model.params = load_checkpoint(ckpt_in, spec, &model.bn);
    } else {
        train(model, data.train, data.test, pre);
    }
    const double baseline_acc = evaluate_accuracy(model, data.test);
    Json baseline_ranks = Json::array();
    for (const auto& s : model_spectra(model))
        baseline_ranks.push_back(Json{{"layer", s.layer_id}, {"effective_rank", s.effective_rank}});

    RankFinetuneConfig rf;
    rf.mode = cfg.raw.value("mode", "rank-min") == std::string("rank-max") ? RankMode::Max
                                                                           : RankMode::Min;
    rf.epochs = cfg.raw.value("finetune_epochs", 15);
    rf.clip_epochs = cfg.raw.value("clip_epochs", 6);
    rf.quantile = cfg.raw.value("quantile", 0.5);
    if (cfg.raw.contains("threshold")) rf.threshold = cfg.raw.at("threshold").get<double>();
    rf.train = resolve_train(cfg.raw, cfg.seed + 1);

    std::optional<AttackConfig> eval_attack;
    if (cfg.raw.contains("eval_attack")) eval_attack = resolve_attack(cfg.raw.at("eval_attack"));
    RankFinetuneResult result = rank_finetune(std::move(model), data.train, data.test, rf, eval_attack);

    fs::create_directories(cfg.out_dir);
    std::vector<std::vector<std::string>> rows;
    for (const auto& row : result.trace) {
        const auto& s = row.spectrum;
        rows.push_back({std::to_string(row.epoch), s.layer_id, format_double(s.effective_rank),
                        format_double(s.values.empty() ? 0.0 : s.values.front()),
                        format_double(s.values.empty() ? 0.0 : s.values.back())});
    }
    const std::string trace_path = (fs::path(cfg.out_dir) / "rank_trace.csv").string();
    write_csv(trace_path, {"epoch", "layer", "effective_rank", "sigma_max", "sigma_min"}, rows);
    const std::string ckpt_path = (fs::path(cfg.out_dir) / "rank_checkpoint.bin").string();
    save_checkpoint(ckpt_path, result.model.params,
                    result.model.bn.empty() ? nullptr : &result.model.bn);
    record.artifacts = {trace_path, ckpt_path};

    Json final_ranks = Json::array();
    for (const auto& s : model_spectra(result.model))
        final_ranks.push_back(Json{{"layer", s.layer_id}, {"effective_rank", s.effective_rank}});
    record.metrics = Json{{"baseline_clean_acc", baseline_acc},
                          {"clean_acc", result.clean_acc},
                          {"robust_acc", result.robust_acc},
                          {"init_ranks", init_ranks},
                          {"baseline_ranks", baseline_ranks},
                          {"final_ranks", final_ranks},
                          {"warnings", result.warnings}};
    return record;
}

RunRecord run_attack(const ExperimentConfig& cfg, const Dataset& data) {
    RunRecord record;
    NetworkSpec spec = resolve_model(cfg.raw.at("model"), data.shape, data.classes);
    Model model{spec, zero_params(spec), BnState::init_for(spec)};
    model.params = load_checkpoint(cfg.raw.at("checkpoint").get<std::string>(), spec, &model.bn);

    AttackConfig attack = resolve_attack(cfg.raw.at("attack"));
    const double clean = evaluate_accuracy(model, data.test);
    const double robust = evaluate_robust_accuracy(model, data.test, attack);
    record.metrics = Json{{"clean_acc", clean},
                          {"robust_acc", robust},
                          {"epsilon", attack.epsilon},
                          {"steps", attack.steps}};
    return record;
}

}  // namespace

RunRecord run_experiment(const Json& config, bool resume) {
    ExperimentConfig cfg = parse_config(config);

    RunRecord record;
    record.command = cfg.command;
    record.config = cfg.raw;
    record.config_hash = config_hash(cfg.raw);
    record.started_at = now_iso();

    if (resume && cfg.command != "ntk-sweep" && has_ok_record(cfg.out_dir, record.config_hash)) {
        record.status = "skipped";
        record.finished_at = now_iso();
        append_record(cfg.out_dir, record);
        return record;
    }

    try {
        const bool normalize = cfg.raw.value("normalize", false);
        Dataset data = resolve_dataset(cfg.raw.at("dataset"), normalize);
        RunRecord body;
        if (cfg.command == "local-minima")
            body = run_local_minima(cfg, data);
        else if (cfg.command == "norm-bias")
            body = run_norm_bias(cfg, data);
        else if (cfg.command == "ntk-sweep")
            body = run_ntk_sweep(cfg, data, resume);
        else if (cfg.command == "rank")
            body = run_rank(cfg, data);
        else
            body = run_attack(cfg, data);
        record.metrics = body.metrics;
        record.artifacts = body.artifacts;
        record.status = "ok";
    } catch (const std::exception& e) {
        record.status = "error";
        record.metrics = Json{{"error", e.what()}};
        record.finished_at = now_iso();
        append_record(cfg.out_dir, record);
        throw;
    }
    record.finished_at = now_iso();
    append_record(cfg.out_dir, record);
    return record;
}

void apply_override(Json& config, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like key.path=value: " + spec);
    std::string key = spec.substr(0, eq);
    const std::string value = spec.substr(eq + 1);
    std::string pointer = "/";
    for (char ch : key) pointer += (ch == '.') ? '/' : ch;
    Json parsed = Json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;  // plain string
    config[Json::json_pointer(pointer)] = parsed;
    Json overrides = config.value("overrides", Json::array());
    overrides.push_back(spec);
    config["overrides"] = overrides;
}

}  // namespace probe
