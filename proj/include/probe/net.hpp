#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "probe/errors.hpp"

namespace probe {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Activation shape: either {features} for flat data or {channels, height,
// width} for image data. Activations travel through the net as one flattened
// row per sample, channel-major (c, then h, then w).
struct TensorShape {
    std::vector<int> dims;

    static TensorShape flat(int features) { return {{features}}; }
    static TensorShape image(int c, int h, int w) { return {{c, h, w}}; }

    bool is_image() const { return dims.size() == 3; }
    int channels() const { return dims[0]; }
    int height() const { return dims[1]; }
    int width() const { return dims[2]; }

    int count() const {
        int n = 1;
        for (int d : dims) n *= d;
        return n;
    }
    bool operator==(const TensorShape& o) const { return dims == o.dims; }
    std::string str() const;
};

enum class LayerKind { Dense, ReLU, Conv2d, BatchNorm, MaxPool, Flatten, Residual };

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;

    // Dense
    int in = 0, out = 0;
    // Conv2d: stride-`stride` convolution with `pad` rows/cols of zero padding
    int in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;
    // BatchNorm
    int features = 0;
    double eps = 1e-5;
    double momentum = 0.1;
    // MaxPool: non-overlapping `window` x `window` pooling
    int window = 0;
    // Residual: inner layer list, identity skip
    std::vector<LayerSpec> inner;

    static LayerSpec dense(int in, int out);
    static LayerSpec relu();
    static LayerSpec conv2d(int in_ch, int out_ch, int kernel, int stride = 1, int pad = 0);
    static LayerSpec batchnorm(int features, double eps = 1e-5, double momentum = 0.1);
    static LayerSpec maxpool(int window);
    static LayerSpec flatten();
    static LayerSpec residual(std::vector<LayerSpec> inner);

    bool has_params() const {
        return kind == LayerKind::Dense || kind == LayerKind::Conv2d ||
               kind == LayerKind::BatchNorm || kind == LayerKind::Residual;
    }
    std::string kind_name() const;
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    TensorShape input_shape;
    int output_dim = 0;

    // Computes every intermediate shape, throwing ShapeError (naming the
    // offending layer) on any incompatibility.
    std::vector<TensorShape> infer_shapes() const;
    void validate() const { infer_shapes(); }

    // Minimum hidden width s for a pure Dense/ReLU MLP.
    int min_hidden_width() const;
    bool is_relu_mlp() const;
};

// Convenience builders used across probes.
NetworkSpec mlp_spec(int input_dim, const std::vector<int>& hidden_widths, int classes);

enum class ParamRole { Weight, Bias, BnScale, BnShift };

std::string role_name(ParamRole role);
ParamRole role_from_name(const std::string& name);

struct ParamSegment {
    std::string layer;  // layer path, e.g. "0" or "4.1" for residual inner
    ParamRole role = ParamRole::Weight;
    std::ptrdiff_t offset = 0;
    std::ptrdiff_t length = 0;
};

// Flat 64-bit parameter vector with named segments.
struct ParamVector {
    Vec values;
    std::vector<ParamSegment> segments;

    std::ptrdiff_t size() const { return values.size(); }
    const ParamSegment& segment(const std::string& layer, ParamRole role) const;
    const ParamSegment* find(const std::string& layer, ParamRole role) const;
    Eigen::VectorBlock<Vec> slice(const ParamSegment& s) { return values.segment(s.offset, s.length); }
    Eigen::VectorBlock<const Vec> slice(const ParamSegment& s) const {
        return values.segment(s.offset, s.length);
    }
};

// Segment table for a spec (zero values). Walk order is depth-first over the
// layer list; per layer: weight, bias (Dense/Conv) or bn-scale, bn-shift.
ParamVector zero_params(const NetworkSpec& spec);

struct Batch {
    Mat inputs;               // N x input_shape.count(), one row per sample
    std::vector<int> labels;  // class indices in [0, output_dim)

    int size() const { return static_cast<int>(inputs.rows()); }
    void validate(int input_dim, int classes) const;
};

enum class Mode { Train, Eval };

// Per-BatchNorm-layer running statistics, keyed by layer path.
struct BnState {
    struct Stats {
        Vec mean;
        Vec var;
    };
    std::map<std::string, Stats> stats;

    bool empty() const { return stats.empty(); }
    static BnState init_for(const NetworkSpec& spec);
};

// Collected on request by forward(): the input to every ReLU.
struct ForwardDetails {
    std::vector<Mat> preactivations;
    double min_preactivation = 0.0;
};

// Batched forward pass. Train mode uses batch statistics for BatchNorm and,
// when `bn` is non-null, folds them into the running statistics; eval mode
// reads the stored running statistics (identity stats if `bn` is null).
Mat forward(const NetworkSpec& spec, const ParamVector& params, const Mat& inputs, Mode mode,
            BnState* bn = nullptr, ForwardDetails* details = nullptr);

// Mean softmax cross-entropy.
double loss_value(const Mat& logits, const std::vector<int>& labels);

Mat softmax(const Mat& logits);

double accuracy(const Mat& logits, const std::vector<int>& labels);

struct GradResult {
    double loss = 0.0;
    Vec grad;        // d(mean loss)/d(params)
    Mat input_grad;  // d(mean loss)/d(inputs), filled when requested
};

// Reverse-mode gradient of the mean cross-entropy loss. ReLU subgradient at 0
// is taken as 0.
GradResult loss_grad(const NetworkSpec& spec, const ParamVector& params, const Batch& batch,
                     Mode mode = Mode::Train, BnState* bn = nullptr, bool want_input_grad = false);

// Row k = gradient of logit k w.r.t. params, for a single input x.
// BatchNorm runs in eval mode.
Mat per_output_param_jacobian(const NetworkSpec& spec, const ParamVector& params, const Vec& x,
                              const BnState* bn = nullptr);

// Depth-first walk over every layer (residual blocks are entered, not
// visited themselves) with each layer's path and input shape.
void visit_layers(
    const NetworkSpec& spec,
    const std::function<void(const LayerSpec&, const std::string&, const TensorShape&)>& fn);

enum class InitScheme { HeUniform, Zero, Default };

// he_uniform: weights U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases 0.
// zero: everything 0. default: torch-style U(-1/sqrt(fan_in), +1/sqrt(fan_in))
// for weights and biases. BatchNorm scale is 1 (0 for zero scheme), shift 0.
ParamVector init_params(const NetworkSpec& spec, InitScheme scheme, std::uint64_t seed = 0);

}  // namespace probe
