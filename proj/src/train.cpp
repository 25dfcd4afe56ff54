#include "probe/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace probe {

RegularizerSpec RegularizerSpec::weight_decay(double lambda) {
    RegularizerSpec r;
    r.kind = RegKind::WeightDecay;
    r.coefficient = lambda;
    return r;
}

RegularizerSpec RegularizerSpec::norm_bias(double coefficient, double mu2) {
    RegularizerSpec r;
    r.kind = RegKind::NormBias;
    r.coefficient = coefficient;
    r.mu2 = mu2;
    return r;
}

std::pair<double, Vec> norm_bias_value_grad(const Vec& params, double mu2) {
    const double diff = params.squaredNorm() - mu2;
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    return {std::abs(diff), Vec((2.0 * sign) * params)};
}

double regularizer_value(const Vec& params, const RegularizerSpec& reg) {
    switch (reg.kind) {
        case RegKind::None: return 0.0;
        case RegKind::WeightDecay: return reg.coefficient * params.squaredNorm();
        case RegKind::NormBias:
            return reg.coefficient * std::abs(params.squaredNorm() - reg.mu2);
    }
    return 0.0;
}

Vec regularizer_grad(const Vec& params, const RegularizerSpec& reg) {
    switch (reg.kind) {
        case RegKind::None:
            return Vec::Zero(params.size());
        case RegKind::WeightDecay:
            return Vec((2.0 * reg.coefficient) * params);
        case RegKind::NormBias: {
            const double diff = params.squaredNorm() - reg.mu2;
            const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            return Vec(((2.0 * reg.coefficient) * sign) * params);
        }
    }
    return Vec::Zero(params.size());
}

void sgd_step(Vec& params, const Vec& grad, SgdState& state, double lr, double momentum,
              const RegularizerSpec& reg) {
    if (lr <= 0.0) throw ArgumentError("sgd_step: lr must be positive");
    if (state.velocity.size() != params.size()) state.velocity = Vec::Zero(params.size());
    state.velocity = momentum * state.velocity + (grad + regularizer_grad(params, reg));
    params -= lr * state.velocity;
    if (!params.allFinite()) throw NumericError("sgd_step produced non-finite parameters");
}

double LrSchedule::at(int epoch) const {
    if (epoch < 0) throw ArgumentError("lr schedule: epoch must be >= 0");
    double lr = base;
    for (int d : drop_epochs)
        if (epoch >= d) lr *= factor;
    return lr;
}

LrSchedule lr_schedule(const std::string& name) {
    if (name == "cifar-long" || name == "cifar_long") return LrSchedule::cifar_long();
    if (name == "finetune") return LrSchedule::finetune();
    if (name == "mlp-natural" || name == "mlp_natural") return LrSchedule::mlp_natural();
    if (name == "constant") return LrSchedule::constant(0.1);
    throw ConfigError("unknown lr schedule: " + name);
}

double lr_schedule(const std::string& name, int epoch) { return lr_schedule(name).at(epoch); }

double mu_heuristic(const Vec& trained_with_wd, double slack) {
    return slack * trained_with_wd.squaredNorm();
}

namespace {

inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

std::mt19937_64 stream_rng(std::uint64_t seed, int epoch, std::uint64_t stream) {
    return std::mt19937_64(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1) +
                           0xbf58476d1ce4e5b9ULL * stream);
}

}  // namespace

Mat pgd_attack(const NetworkSpec& spec, const ParamVector& params, const Batch& batch,
               const AttackConfig& cfg, BnState* bn) {
    if (cfg.epsilon < 0.0 || cfg.step_size < 0.0 || cfg.steps < 0)
        throw ArgumentError("pgd_attack: epsilon, step_size, steps must be nonnegative");
    if (batch.inputs.minCoeff() < -1e-12 || batch.inputs.maxCoeff() > 1.0 + 1e-12)
        throw ArgumentError("pgd_attack: inputs outside the [0,1] pixel range");

    const Mat& x0 = batch.inputs;
    Mat x = x0;
    if (cfg.random_start && cfg.epsilon > 0.0) {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> dist(-cfg.epsilon, cfg.epsilon);
        for (int i = 0; i < x.rows(); ++i)
            for (int j = 0; j < x.cols(); ++j) x(i, j) += dist(rng);
        x = x.cwiseMax(0.0).cwiseMin(1.0);
    }

    Batch attacked{x, batch.labels};
    for (int step = 0; step < cfg.steps; ++step) {
        attacked.inputs = x;
        GradResult g = loss_grad(spec, params, attacked, Mode::Eval, bn, /*want_input_grad=*/true);
        x += cfg.step_size * g.input_grad.unaryExpr([](double v) { return sgn(v); });
        x = x.array()
                .max(x0.array() - cfg.epsilon)
                .min(x0.array() + cfg.epsilon)
                .max(0.0)
                .min(1.0)
                .matrix();
    }
    return x;
}

Mat augment_batch(const Mat& inputs, const TensorShape& shape, const AugmentConfig& cfg,
                  std::mt19937_64& rng) {
    if (!cfg.enabled || !shape.is_image()) return inputs;
    const int c = shape.channels(), h = shape.height(), w = shape.width(), p = cfg.crop_pad;
    std::uniform_int_distribution<int> off(0, 2 * p);
    std::bernoulli_distribution flip(cfg.flip_prob);

    Mat out(inputs.rows(), inputs.cols());
    for (int s = 0; s < inputs.rows(); ++s) {
        const int dy = off(rng), dx = off(rng);
        const bool do_flip = flip(rng);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const int sy = y + dy - p;
                    const int sx = (do_flip ? w - 1 - x : x) + dx - p;
                    double v = 0.0;
                    if (sy >= 0 && sy < h && sx >= 0 && sx < w) v = inputs(s, (ch * h + sy) * w + sx);
                    out(s, (ch * h + y) * w + x) = v;
                }
    }
    return out;
}

double train_epoch(Model& model, const Batch& data, const TrainConfig& cfg, SgdState& state,
                   int epoch) {
    const int n = data.size();
    const int bs = cfg.batch_size > 0 ? std::min(cfg.batch_size, n) : n;
    const double lr = cfg.schedule.at(epoch);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (bs < n) {
        auto shuffle_rng = stream_rng(cfg.seed, epoch, 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
    }
    auto aug_rng = stream_rng(cfg.seed, epoch, 1);
    auto attack_rng = stream_rng(cfg.seed, epoch, 2);

    double loss_sum = 0.0;
    int sample_count = 0;
    for (int start = 0; start < n; start += bs) {
        const int count = std::min(bs, n - start);
        Batch mb;
        mb.inputs.resize(count, data.inputs.cols());
        mb.labels.resize(count);
        for (int i = 0; i < count; ++i) {
            mb.inputs.row(i) = data.inputs.row(order[start + i]);
            mb.labels[i] = data.labels[order[start + i]];
        }
        mb.inputs = augment_batch(mb.inputs, model.spec.input_shape, cfg.augment, aug_rng);
        if (cfg.adversarial) {
            AttackConfig atk = *cfg.adversarial;
            atk.seed = attack_rng();
            mb.inputs = pgd_attack(model.spec, model.params, mb, atk, &model.bn);
        }
        GradResult g = loss_grad(model.spec, model.params, mb, Mode::Train, &model.bn);
        sgd_step(model.params.values, g.grad, state, lr, cfg.momentum, cfg.reg);
        loss_sum += g.loss * count;
        sample_count += count;
    }
    return loss_sum / sample_count;
}

double evaluate_accuracy(const Model& model, const Batch& data) {
    BnState bn = model.bn;
    return accuracy(forward(model.spec, model.params, data.inputs, Mode::Eval, &bn), data.labels);
}

double evaluate_robust_accuracy(const Model& model, const Batch& data, const AttackConfig& cfg) {
    BnState bn = model.bn;
    Mat adv = pgd_attack(model.spec, model.params, data, cfg, &bn);
    return accuracy(forward(model.spec, model.params, adv, Mode::Eval, &bn), data.labels);
}

std::vector<TraceRow> train(Model& model, const Batch& train_data, const Batch& test_data,
                            const TrainConfig& cfg, const std::optional<AttackConfig>& eval_attack) {
    SgdState state = SgdState::init(model.params.size());
    std::vector<TraceRow> trace;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        TraceRow row;
        row.epoch = epoch;
        row.lr = cfg.schedule.at(epoch);
        row.train_loss = train_epoch(model, train_data, cfg, state, epoch);
        row.clean_acc = evaluate_accuracy(model, test_data);
        if (eval_attack && epoch == cfg.epochs - 1)
            row.robust_acc = evaluate_robust_accuracy(model, test_data, *eval_attack);
        row.param_norm = model.params.values.norm();
        trace.push_back(row);
    }
    return trace;
}

}  // namespace probe
