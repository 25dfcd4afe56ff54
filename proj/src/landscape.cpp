#include "probe/landscape.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <random>

#include "probe/train.hpp"

namespace probe {

AffineMap::AffineMap(Mat a_in, Vec b_in) : a(std::move(a_in)), b(std::move(b_in)) {
    if (a.rows() != b.size()) throw ShapeError("affine map: A rows != b length");
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& sv = svd.singularValues();
    const double tol = sv.size() > 0 ? 1e-10 * sv(0) : 0.0;
    int s = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > tol && sv(i) > 0.0) ++s;

    if (s == 0) {
        // Pure-bias map: keep a single zero column so the construction below
        // stays uniform.
        rank = 1;
        u = Mat::Zero(a.rows(), 1);
        sigma = Vec::Zero(1);
        v = Mat::Zero(1, a.cols());
    } else {
        rank = s;
        u = svd.matrixU().leftCols(s);
        sigma = sv.head(s);
        v = svd.matrixV().leftCols(s).transpose();
    }
}

Mat AffineMap::apply(const Mat& points) const {
    Mat out = points * a.transpose();
    out.rowwise() += b.transpose();
    return out;
}

ParamVector embed_affine(const AffineMap& affine, const NetworkSpec& spec, const Mat& omega,
                         double safety) {
    if (omega.rows() < 1) throw ArgumentError("embed_affine: omega is empty");
    if (!spec.is_relu_mlp()) throw ArgumentError("embed_affine: spec is not a ReLU MLP");
    if (omega.cols() != spec.input_shape.count())
        throw ShapeError("embed_affine: omega width != network input width");
    if (affine.a.cols() != omega.cols())
        throw ShapeError("embed_affine: affine map input dim != omega width");
    if (affine.a.rows() != spec.output_dim)
        throw ShapeError("embed_affine: affine map output dim != network output dim");

    const int s = affine.rank;
    const int s_min = spec.min_hidden_width();
    if (s_min < s)
        throw CapacityError("embed_affine: rank " + std::to_string(s) + " exceeds minimum hidden width " +
                            std::to_string(s_min));

    std::vector<std::size_t> dense_idx;
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
        if (spec.layers[i].kind == LayerKind::Dense) dense_idx.push_back(i);
    const std::size_t depth = dense_idx.size();
    if (depth < 2) throw ArgumentError("embed_affine: need at least one hidden layer");

    ParamVector params = zero_params(spec);
    const Mat sigma_v = affine.sigma.asDiagonal() * affine.v;  // s x m

    // Bias constant: activations never drop below c - max|(Sigma V x)_j| >= 1.
    const double c = safety * ((omega * sigma_v.transpose()).array().abs().maxCoeff() + 1.0);

    using RowMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    auto layer_at = [&](std::size_t di) -> const LayerSpec& { return spec.layers[dense_idx[di]]; };
    auto weight_at = [&](std::size_t di) {
        const LayerSpec& l = layer_at(di);
        const ParamSegment& seg = params.segment(std::to_string(dense_idx[di]), ParamRole::Weight);
        return RowMap(params.values.data() + seg.offset, l.out, l.in);
    };
    auto bias_at = [&](std::size_t di) {
        const ParamSegment& seg = params.segment(std::to_string(dense_idx[di]), ParamRole::Bias);
        return Eigen::Map<Vec>(params.values.data() + seg.offset, seg.length);
    };

    {  // first layer: [Sigma V; 0], bias c * 1
        weight_at(0).topRows(s) = sigma_v;
        bias_at(0).setConstant(c);
    }
    for (std::size_t di = 1; di + 1 < depth; ++di) {  // identity carriers
        weight_at(di).topLeftCorner(s, s).setIdentity();
        auto bias = bias_at(di);
        bias.setZero();
        bias.tail(layer_at(di).out - s).setConstant(c);
    }
    {  // last layer: [U 0], bias -c A_L 1 + b
        RowMap w = weight_at(depth - 1);
        w.leftCols(s) = affine.u;
        bias_at(depth - 1) = -c * (w * Vec::Ones(layer_at(depth - 1).in)) + affine.b;
    }
    return params;
}

LinearTrainResult train_linear(const Batch& dataset, int classes, double weight_decay,
                               std::optional<int> rank_cap, int max_iters, double grad_tol) {
    if (weight_decay < 0.0) throw ArgumentError("train_linear: weight_decay must be >= 0");
    const int m = static_cast<int>(dataset.inputs.cols());
    const int n = classes;
    const bool project = rank_cap.has_value() && *rank_cap < std::min(n, m);

    Mat a = Mat::Zero(n, m);
    Vec b = Vec::Zero(n);
    const Mat& x = dataset.inputs;
    const double inv_n = 1.0 / static_cast<double>(dataset.size());

    auto objective = [&](const Mat& a_, const Vec& b_) {
        Mat logits = x * a_.transpose();
        logits.rowwise() += b_.transpose();
        return loss_value(logits, dataset.labels) + weight_decay * a_.squaredNorm();
    };
    auto gradient = [&](const Mat& a_, const Vec& b_, Mat& ga, Vec& gb) {
        Mat logits = x * a_.transpose();
        logits.rowwise() += b_.transpose();
        Mat delta = softmax(logits);
        for (int i = 0; i < delta.rows(); ++i) delta(i, dataset.labels[i]) -= 1.0;
        delta *= inv_n;
        ga = delta.transpose() * x + 2.0 * weight_decay * a_;
        gb = delta.colwise().sum().transpose();
        return loss_value(logits, dataset.labels);
    };
    auto truncate = [&](Mat& a_) {
        Eigen::JacobiSVD<Mat> svd(a_, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Vec sv = svd.singularValues();
        for (int i = *rank_cap; i < sv.size(); ++i) sv(i) = 0.0;
        a_ = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
    };

    LinearTrainResult result;
    double step = 1.0;
    Mat ga;
    Vec gb;
    for (int it = 0; it < max_iters; ++it) {
        const double plain_loss = gradient(a, b, ga, gb);
        const double gnorm = std::sqrt(ga.squaredNorm() + gb.squaredNorm());
        result.iterations = it;
        result.grad_norm = gnorm;
        result.loss = plain_loss;
        if (gnorm <= grad_tol) {
            result.converged = true;
            break;
        }
        const double f0 = plain_loss + weight_decay * a.squaredNorm();
        // Backtracking line search with Armijo decrease on the full gradient.
        step = std::min(step * 2.0, 1e6);
        Mat a_next;
        Vec b_next;
        for (int half = 0; half < 80; ++half) {
            a_next = a - step * ga;
            b_next = b - step * gb;
            if (project) truncate(a_next);
            if (objective(a_next, b_next) <= f0 - 0.25 * step * gnorm * gnorm) break;
            step *= 0.5;
        }
        const double moved = std::sqrt((a_next - a).squaredNorm() + (b_next - b).squaredNorm());
        a = a_next;
        b = b_next;
        if (project && moved <= 1e-14 * (1.0 + a.norm())) {
            result.converged = true;
            break;
        }
    }
    result.map = AffineMap(a, b);
    {
        Mat logits = x * a.transpose();
        logits.rowwise() += b.transpose();
        result.loss = loss_value(logits, dataset.labels);
    }
    return result;
}

ParamVector bias_shift_init(const ParamVector& params, double shift) {
    ParamVector out = params;
    for (const auto& seg : out.segments)
        if (seg.role == ParamRole::Bias)
            out.values.segment(seg.offset, seg.length).array() += shift;
    return out;
}

ParamVector bias_uniform_init(const ParamVector& params, double half_width, std::uint64_t seed) {
    if (half_width < 0.0) throw ArgumentError("bias_uniform_init: half_width must be >= 0");
    ParamVector out = params;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-half_width, half_width);
    for (const auto& seg : out.segments)
        if (seg.role == ParamRole::Bias)
            for (std::ptrdiff_t i = 0; i < seg.length; ++i) out.values(seg.offset + i) = dist(rng);
    return out;
}

StationarityReport measure_stationarity(const NetworkSpec& spec, const ParamVector& params,
                                        const Batch& dataset, int power_iters, std::uint64_t seed,
                                        BnState* bn) {
    if (dataset.size() < 1) throw ArgumentError("measure_stationarity: dataset is empty");
    StationarityReport report;

    GradResult g = loss_grad(spec, params, dataset, Mode::Eval, bn);
    report.loss = g.loss;
    report.grad_norm = g.grad.norm();

    ForwardDetails details;
    BnState bn_copy = bn ? *bn : BnState{};
    forward(spec, params, dataset.inputs, Mode::Eval, bn ? &bn_copy : nullptr, &details);
    report.min_activation = details.preactivations.empty() ? 0.0 : details.min_preactivation;

    HvpFn op = make_loss_hvp(spec, params, dataset, 1e-4, bn);
    report.max_ev = power_max(op, params.size(), power_iters, 1e-7, seed);
    report.min_ev = power_min_shifted(op, params.size(), power_iters, 1e-7, seed);
    return report;
}

TrappingResult trapping_experiment(const TrappingConfig& config, const Batch& dataset) {
    const NetworkSpec& spec = config.spec;
    dataset.validate(spec.input_shape.count(), spec.output_dim);

    TrappingResult result;
    ParamVector params;
    switch (config.init) {
        case TrapInit::Default:
            params = init_params(spec, InitScheme::Default, config.seed);
            break;
        case TrapInit::Zero:
            params = init_params(spec, InitScheme::Zero);
            break;
        case TrapInit::BiasShift:
            params = bias_shift_init(init_params(spec, InitScheme::Default, config.seed),
                                     config.bias_shift);
            break;
        case TrapInit::BiasUniform:
            params = bias_uniform_init(init_params(spec, InitScheme::Default, config.seed),
                                       config.bias_half_width, config.seed + 1);
            break;
        case TrapInit::Lemma1: {
            const int s_min = spec.min_hidden_width();
            std::optional<int> cap;
            if (s_min < std::min(spec.output_dim, spec.input_shape.count())) cap = s_min;
            LinearTrainResult linear =
                train_linear(dataset, spec.output_dim, config.linear_weight_decay, cap);
            result.linear_loss = linear.loss;
            params = embed_affine(linear.map, spec, dataset.inputs);
            break;
        }
    }

    auto measure = [&](const ParamVector& p) {
        if (config.measure_spectrum)
            return measure_stationarity(spec, p, dataset, config.power_iters, config.seed);
        StationarityReport r;
        GradResult g = loss_grad(spec, p, dataset, Mode::Eval);
        r.loss = g.loss;
        r.grad_norm = g.grad.norm();
        ForwardDetails details;
        forward(spec, p, dataset.inputs, Mode::Eval, nullptr, &details);
        r.min_activation = details.preactivations.empty() ? 0.0 : details.min_preactivation;
        return r;
    };

    result.before = measure(params);

    Model model{spec, params, BnState::init_for(spec)};
    TrainConfig tc;
    tc.epochs = config.epochs;
    tc.batch_size = config.optimizer == TrapOptimizer::GD ? 0 : config.batch_size;
    tc.schedule = LrSchedule::constant(config.lr);
    tc.momentum = config.optimizer == TrapOptimizer::SGDMomentum ? 0.9 : 0.0;
    tc.seed = config.seed;

    SgdState state = SgdState::init(model.params.size());
    bool positive = result.before.min_activation > 0.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double loss = train_epoch(model, dataset, tc, state, epoch);
        GradResult g = loss_grad(spec, model.params, dataset, Mode::Eval);
        ForwardDetails details;
        forward(spec, model.params, dataset.inputs, Mode::Eval, nullptr, &details);
        const double min_pre = details.preactivations.empty() ? 0.0 : details.min_preactivation;
        positive = positive && min_pre > 0.0;
        result.trace.push_back(EpochStat{epoch, loss, g.grad.norm(), min_pre});
    }

    result.after = measure(model.params);
    result.preactivations_stayed_positive = positive;
    result.final_params = std::move(model.params);
    return result;
}

}  // namespace probe
