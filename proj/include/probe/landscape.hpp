#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "probe/net.hpp"
#include "probe/spectral.hpp"

namespace probe {

// Affine map G(x) = A x + b with its cached singular value decomposition
// A = U diag(sigma) V, U: n x s, V: s x m, sigma_1 >= ... >= sigma_s > 0.
struct AffineMap {
    Mat a;  // n x m
    Vec b;  // n
    Mat u;  // n x s
    Vec sigma;
    Mat v;  // s x m
    int rank = 0;

    AffineMap() = default;
    // Computes the SVD; rank is the numerical rank at tolerance
    // 1e-10 * sigma_1, at least 1 (the pure-bias path keeps a single
    // zero column in U).
    AffineMap(Mat a_in, Vec b_in);

    Mat apply(const Mat& points) const;  // rows of points -> rows of A x + b
};

struct StationarityReport {
    double loss = 0.0;
    double grad_norm = 0.0;
    SpectrumEstimate min_ev;
    SpectrumEstimate max_ev;
    double min_activation = 0.0;  // smallest pre-ReLU value over the dataset
};

// Lemma-1 construction: MLP parameters replicating `affine` on every point of
// `omega` (rows), with every pre-activation >= 1. `safety` scales the bias
// constant c above the proof's max+1 formula (1 = proof-faithful).
ParamVector embed_affine(const AffineMap& affine, const NetworkSpec& spec, const Mat& omega,
                         double safety = 1.0);

struct LinearTrainResult {
    AffineMap map;
    bool converged = false;
    double grad_norm = 0.0;
    int iterations = 0;
    double loss = 0.0;  // unregularized cross-entropy at the returned point
};

// Full-batch gradient descent with backtracking step size on the regularized
// cross-entropy of G(x) = A x + b. Weight decay applies to A. When rank_cap
// is set below min(n, m), each step projects A onto rank-cap matrices by
// truncated SVD.
LinearTrainResult train_linear(const Batch& dataset, int classes, double weight_decay,
                               std::optional<int> rank_cap = std::nullopt, int max_iters = 5000,
                               double grad_tol = 1e-6);

// Every bias coordinate increased by `shift`; weights untouched.
ParamVector bias_shift_init(const ParamVector& params, double shift);

// Biases drawn i.i.d. from U(-half_width, half_width).
ParamVector bias_uniform_init(const ParamVector& params, double half_width, std::uint64_t seed);

StationarityReport measure_stationarity(const NetworkSpec& spec, const ParamVector& params,
                                        const Batch& dataset, int power_iters = 500,
                                        std::uint64_t seed = 0, BnState* bn = nullptr);

enum class TrapInit { Default, Lemma1, Zero, BiasShift, BiasUniform };
enum class TrapOptimizer { GD, SGD, SGDMomentum };

struct TrappingConfig {
    NetworkSpec spec;
    TrapInit init = TrapInit::Default;
    TrapOptimizer optimizer = TrapOptimizer::GD;
    double lr = 0.1;
    int epochs = 200;
    int batch_size = 0;  // 0 = full batch
    double bias_shift = 20.0;
    double bias_half_width = 50.0;
    double linear_weight_decay = 0.0;
    int power_iters = 500;
    std::uint64_t seed = 0;
    bool measure_spectrum = true;
};

struct EpochStat {
    int epoch = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double min_preactivation = 0.0;
};

struct TrappingResult {
    StationarityReport before;
    StationarityReport after;
    std::vector<EpochStat> trace;
    bool preactivations_stayed_positive = false;
    double linear_loss = 0.0;  // filled for the lemma1 init
    ParamVector final_params;
};

TrappingResult trapping_experiment(const TrappingConfig& config, const Batch& dataset);

}  // namespace probe
