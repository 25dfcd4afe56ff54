#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "probe/net.hpp"

namespace probe {

enum class RegKind { None, WeightDecay, NormBias };

struct RegularizerSpec {
    RegKind kind = RegKind::None;
    double coefficient = 0.0;
    double mu2 = 0.0;  // target squared norm for norm-bias

    static RegularizerSpec none() { return {}; }
    static RegularizerSpec weight_decay(double lambda);
    static RegularizerSpec norm_bias(double coefficient, double mu2);
};

// Norm-bias regularizer: value |  ||phi||^2 - mu^2 |, gradient
// 2 sign(||phi||^2 - mu^2) phi with sign(0) = 0 (subdifferential member).
std::pair<double, Vec> norm_bias_value_grad(const Vec& params, double mu2);

// Regularizer gradient contribution added to the loss gradient. Weight decay
// is the gradient-side addition lambda * 2 phi (norm-bias with mu = 0 follows
// the identical arithmetic so the two trajectories match bitwise).
Vec regularizer_grad(const Vec& params, const RegularizerSpec& reg);
double regularizer_value(const Vec& params, const RegularizerSpec& reg);

struct SgdState {
    Vec velocity;

    static SgdState init(std::ptrdiff_t dim) { return {Vec::Zero(dim)}; }
};

// v <- momentum v + (grad + reg grad); phi <- phi - lr v.
void sgd_step(Vec& params, const Vec& grad, SgdState& state, double lr, double momentum = 0.9,
              const RegularizerSpec& reg = {});

// Piecewise-constant learning rate: base multiplied by `factor` at every
// breakpoint <= epoch.
struct LrSchedule {
    double base = 0.1;
    double factor = 0.1;
    std::vector<int> drop_epochs;

    double at(int epoch) const;

    static LrSchedule constant(double lr) { return {lr, 1.0, {}}; }
    // 300-epoch run: 0.1 dropping 10x at epochs 100, 175, 225, 275.
    static LrSchedule cifar_long() { return {0.1, 0.1, {100, 175, 225, 275}}; }
    // Rank fine-tuning: 0.001 dropping 10x at epochs 3 and 5.
    static LrSchedule finetune() { return {0.001, 0.1, {3, 5}}; }
    // 100-epoch MLP run: 0.01 dropping 10x at epochs 60, 80, 90.
    static LrSchedule mlp_natural() { return {0.01, 0.1, {60, 80, 90}}; }
};

// Named schedule lookup; throws ConfigError for unknown names.
LrSchedule lr_schedule(const std::string& name);
double lr_schedule(const std::string& name, int epoch);

// mu^2 = slack * ||phi_wd||^2, for phi_wd trained with weight decay.
double mu_heuristic(const Vec& trained_with_wd, double slack);

struct AttackConfig {
    double epsilon = 8.0 / 255.0;
    double step_size = 2.0 / 255.0;
    int steps = 7;
    bool random_start = false;
    std::uint64_t seed = 0;

    static AttackConfig train_pgd7() { return {8.0 / 255.0, 2.0 / 255.0, 7, true, 0}; }
    static AttackConfig eval_pgd20() { return {8.0 / 255.0, 2.0 / 255.0, 20, false, 0}; }
    static AttackConfig eval_pgd20_small() { return {1.0 / 255.0, 0.25 / 255.0, 20, false, 0}; }
};

// L-inf projected gradient ascent on the loss, projected onto the
// epsilon-ball around the clean batch intersected with the [0,1] pixel box.
Mat pgd_attack(const NetworkSpec& spec, const ParamVector& params, const Batch& batch,
               const AttackConfig& cfg, BnState* bn = nullptr);

struct AugmentConfig {
    bool enabled = false;
    int crop_pad = 4;       // random crop after zero-padding this many pixels
    double flip_prob = 0.5;  // horizontal flip probability
};

// Random crop + horizontal flip for image batches; deterministic per rng.
Mat augment_batch(const Mat& inputs, const TensorShape& shape, const AugmentConfig& cfg,
                  std::mt19937_64& rng);

struct TrainConfig {
    int epochs = 10;
    int batch_size = 128;  // 0 = full batch
    LrSchedule schedule = LrSchedule::constant(0.01);
    double momentum = 0.9;
    RegularizerSpec reg;
    AugmentConfig augment;
    std::optional<AttackConfig> adversarial;  // set = PGD adversarial training
    std::uint64_t seed = 0;
};

struct TraceRow {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double clean_acc = 0.0;
    double robust_acc = -1.0;  // -1 when not evaluated
    double param_norm = 0.0;
};

struct Model {
    NetworkSpec spec;
    ParamVector params;
    BnState bn;
};

// One pass over the data: shuffle, augment, optionally replace each minibatch
// by its PGD perturbation, then take SGD steps. Augmentation and attack use
// independent RNG streams so the epsilon=0 run matches natural training.
double train_epoch(Model& model, const Batch& data, const TrainConfig& cfg, SgdState& state,
                   int epoch);

// Full loop emitting one TraceRow per epoch; robust accuracy is evaluated
// with `eval_attack` when provided.
std::vector<TraceRow> train(Model& model, const Batch& train_data, const Batch& test_data,
                            const TrainConfig& cfg,
                            const std::optional<AttackConfig>& eval_attack = std::nullopt);

double evaluate_accuracy(const Model& model, const Batch& data);
double evaluate_robust_accuracy(const Model& model, const Batch& data, const AttackConfig& cfg);

}  // namespace probe
