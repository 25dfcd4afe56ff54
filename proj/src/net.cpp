#include "probe/net.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

namespace probe {

namespace {

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMajorMat>;

std::string path_of(const std::string& base, std::size_t idx) {
    return base.empty() ? std::to_string(idx) : base + "." + std::to_string(idx);
}

void walk(const std::vector<LayerSpec>& layers, const std::string& base,
          const std::function<void(const LayerSpec&, const std::string&)>& fn) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& layer = layers[i];
        const std::string path = path_of(base, i);
        if (layer.kind == LayerKind::Residual) {
            walk(layer.inner, path, fn);
        } else {
            fn(layer, path);
        }
    }
}

TensorShape layer_output_shape(const LayerSpec& layer, const TensorShape& in, const std::string& path);

TensorShape chain_output_shape(const std::vector<LayerSpec>& layers, const std::string& base,
                               const TensorShape& input) {
    TensorShape shape = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        shape = layer_output_shape(layers[i], shape, path_of(base, i));
    }
    return shape;
}

[[noreturn]] void shape_fail(const std::string& path, const LayerSpec& layer, const std::string& what) {
    throw ShapeError("layer " + path + " (" + layer.kind_name() + "): " + what);
}

TensorShape layer_output_shape(const LayerSpec& layer, const TensorShape& in, const std::string& path) {
    switch (layer.kind) {
        case LayerKind::Dense: {
            if (in.is_image())
                shape_fail(path, layer, "expects flat input, got " + in.str() + " (missing flatten?)");
            if (in.count() != layer.in)
                shape_fail(path, layer,
                           "input width " + std::to_string(in.count()) + " != declared in=" +
                               std::to_string(layer.in));
            return TensorShape::flat(layer.out);
        }
        case LayerKind::ReLU:
            return in;
        case LayerKind::Conv2d: {
            if (!in.is_image()) shape_fail(path, layer, "expects image input, got " + in.str());
            if (in.channels() != layer.in_ch)
                shape_fail(path, layer,
                           "input channels " + std::to_string(in.channels()) + " != declared in_ch=" +
                               std::to_string(layer.in_ch));
            const int oh = (in.height() + 2 * layer.pad - layer.kernel) / layer.stride + 1;
            const int ow = (in.width() + 2 * layer.pad - layer.kernel) / layer.stride + 1;
            if (in.height() + 2 * layer.pad < layer.kernel || in.width() + 2 * layer.pad < layer.kernel)
                shape_fail(path, layer, "kernel larger than padded input " + in.str());
            return TensorShape::image(layer.out_ch, oh, ow);
        }
        case LayerKind::BatchNorm: {
            const int f = in.is_image() ? in.channels() : in.count();
            if (f != layer.features)
                shape_fail(path, layer,
                           "input features " + std::to_string(f) + " != declared features=" +
                               std::to_string(layer.features));
            return in;
        }
        case LayerKind::MaxPool: {
            if (!in.is_image()) shape_fail(path, layer, "expects image input, got " + in.str());
            if (in.height() % layer.window != 0 || in.width() % layer.window != 0)
                shape_fail(path, layer,
                           "input " + in.str() + " not divisible by window " + std::to_string(layer.window));
            return TensorShape::image(in.channels(), in.height() / layer.window,
                                      in.width() / layer.window);
        }
        case LayerKind::Flatten:
            return TensorShape::flat(in.count());
        case LayerKind::Residual: {
            const TensorShape out = chain_output_shape(layer.inner, path, in);
            if (!(out == in))
                shape_fail(path, layer, "inner output " + out.str() + " != block input " + in.str());
            return in;
        }
    }
    throw Error("unreachable layer kind");
}

struct SegRef {
    std::ptrdiff_t offset = -1;
    std::ptrdiff_t length = 0;
};

// Per-layer view into the flat parameter vector, keyed by layer path.
struct Layout {
    std::map<std::string, std::array<SegRef, 4>> refs;
    std::ptrdiff_t total = 0;

    SegRef ref(const std::string& path, ParamRole role) const {
        return refs.at(path)[static_cast<int>(role)];
    }
};

Layout build_layout(const NetworkSpec& spec, std::vector<ParamSegment>* segments_out) {
    Layout layout;
    std::ptrdiff_t offset = 0;
    auto add = [&](const std::string& path, ParamRole role, std::ptrdiff_t len) {
        layout.refs[path][static_cast<int>(role)] = SegRef{offset, len};
        if (segments_out) segments_out->push_back(ParamSegment{path, role, offset, len});
        offset += len;
    };
    walk(spec.layers, "", [&](const LayerSpec& layer, const std::string& path) {
        switch (layer.kind) {
            case LayerKind::Dense:
                add(path, ParamRole::Weight, static_cast<std::ptrdiff_t>(layer.in) * layer.out);
                add(path, ParamRole::Bias, layer.out);
                break;
            case LayerKind::Conv2d:
                add(path, ParamRole::Weight,
                    static_cast<std::ptrdiff_t>(layer.out_ch) * layer.in_ch * layer.kernel * layer.kernel);
                add(path, ParamRole::Bias, layer.out_ch);
                break;
            case LayerKind::BatchNorm:
                add(path, ParamRole::BnScale, layer.features);
                add(path, ParamRole::BnShift, layer.features);
                break;
            default:
                break;
        }
    });
    layout.total = offset;
    return layout;
}

// ---------------------------------------------------------------------------
// Forward / backward evaluator

struct LayerCache {
    Mat input;
    Eigen::MatrixXi argmax;  // maxpool: winning input column per output element
    Vec bn_mean, bn_var;     // statistics used in forward (batch or running)
    std::vector<LayerCache> inner;
};

struct EvalContext {
    const NetworkSpec& spec;
    const Layout& layout;
    const Vec& params;
    Mode mode;
    BnState* bn;
    ForwardDetails* details;
};

Mat conv_forward(const LayerSpec& l, const Mat& x, const TensorShape& in_shape,
                 const TensorShape& out_shape, const Vec& params, SegRef wseg, SegRef bseg) {
    const int N = static_cast<int>(x.rows());
    const int h = in_shape.height(), w = in_shape.width();
    const int oh = out_shape.height(), ow = out_shape.width();
    const int patch = l.in_ch * l.kernel * l.kernel;
    ConstRowMap wmat(params.data() + wseg.offset, l.out_ch, patch);
    Eigen::Map<const Vec> bias(params.data() + bseg.offset, bseg.length);

    Mat y(N, out_shape.count());
    Mat cols(patch, oh * ow);
    for (int s = 0; s < N; ++s) {
        cols.setZero();
        for (int ic = 0; ic < l.in_ch; ++ic) {
            for (int kh = 0; kh < l.kernel; ++kh) {
                for (int kw = 0; kw < l.kernel; ++kw) {
                    const int r = (ic * l.kernel + kh) * l.kernel + kw;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * l.stride + kh - l.pad;
                        if (iy < 0 || iy >= h) continue;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * l.stride + kw - l.pad;
                            if (ix < 0 || ix >= w) continue;
                            cols(r, oy * ow + ox) = x(s, (ic * h + iy) * w + ix);
                        }
                    }
                }
            }
        }
        Mat prod = wmat * cols;  // out_ch x (oh*ow)
        prod.colwise() += bias;
        for (int oc = 0; oc < l.out_ch; ++oc)
            for (int j = 0; j < oh * ow; ++j) y(s, oc * oh * ow + j) = prod(oc, j);
    }
    return y;
}

void conv_backward(const LayerSpec& l, const Mat& x, const Mat& gy, const TensorShape& in_shape,
                   const TensorShape& out_shape, const Vec& params, SegRef wseg, SegRef bseg,
                   Vec* gparams, Mat* gx) {
    const int N = static_cast<int>(x.rows());
    const int h = in_shape.height(), w = in_shape.width();
    const int oh = out_shape.height(), ow = out_shape.width();
    const int patch = l.in_ch * l.kernel * l.kernel;
    ConstRowMap wmat(params.data() + wseg.offset, l.out_ch, patch);

    Mat gw = Mat::Zero(l.out_ch, patch);
    Vec gb = Vec::Zero(l.out_ch);
    Mat cols(patch, oh * ow);
    Mat gys(l.out_ch, oh * ow);
    for (int s = 0; s < N; ++s) {
        for (int oc = 0; oc < l.out_ch; ++oc)
            for (int j = 0; j < oh * ow; ++j) gys(oc, j) = gy(s, oc * oh * ow + j);
        gb += gys.rowwise().sum();

        cols.setZero();
        for (int ic = 0; ic < l.in_ch; ++ic)
            for (int kh = 0; kh < l.kernel; ++kh)
                for (int kw = 0; kw < l.kernel; ++kw) {
                    const int r = (ic * l.kernel + kh) * l.kernel + kw;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * l.stride + kh - l.pad;
                        if (iy < 0 || iy >= h) continue;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * l.stride + kw - l.pad;
                            if (ix < 0 || ix >= w) continue;
                            cols(r, oy * ow + ox) = x(s, (ic * h + iy) * w + ix);
                        }
                    }
                }
        gw.noalias() += gys * cols.transpose();

        if (gx) {
            Mat gcols = wmat.transpose() * gys;  // patch x (oh*ow)
            for (int ic = 0; ic < l.in_ch; ++ic)
                for (int kh = 0; kh < l.kernel; ++kh)
                    for (int kw = 0; kw < l.kernel; ++kw) {
                        const int r = (ic * l.kernel + kh) * l.kernel + kw;
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * l.stride + kh - l.pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * l.stride + kw - l.pad;
                                if (ix < 0 || ix >= w) continue;
                                (*gx)(s, (ic * h + iy) * w + ix) += gcols(r, oy * ow + ox);
                            }
                        }
                    }
        }
    }
    if (gparams) {
        for (int oc = 0; oc < l.out_ch; ++oc)
            for (int c = 0; c < patch; ++c) (*gparams)(wseg.offset + oc * patch + c) += gw(oc, c);
        gparams->segment(bseg.offset, bseg.length) += gb;
    }
}

Mat eval_chain(EvalContext& ctx, const std::vector<LayerSpec>& layers, const std::string& base,
               const Mat& input, const TensorShape& in_shape, std::vector<LayerCache>* caches);

Mat eval_layer(EvalContext& ctx, const LayerSpec& l, const std::string& path, const Mat& x,
               const TensorShape& in_shape, const TensorShape& out_shape, LayerCache* cache) {
    switch (l.kind) {
        case LayerKind::Dense: {
            const SegRef wseg = ctx.layout.ref(path, ParamRole::Weight);
            const SegRef bseg = ctx.layout.ref(path, ParamRole::Bias);
            ConstRowMap wmat(ctx.params.data() + wseg.offset, l.out, l.in);
            Eigen::Map<const Vec> bias(ctx.params.data() + bseg.offset, bseg.length);
            Mat y = x * wmat.transpose();
            y.rowwise() += bias.transpose();
            return y;
        }
        case LayerKind::ReLU: {
            if (ctx.details) {
                ctx.details->preactivations.push_back(x);
                if (x.size() > 0)
                    ctx.details->min_preactivation =
                        std::min(ctx.details->min_preactivation, x.minCoeff());
            }
            return x.cwiseMax(0.0);
        }
        case LayerKind::Conv2d:
            return conv_forward(l, x, in_shape, out_shape, ctx.params,
                                ctx.layout.ref(path, ParamRole::Weight),
                                ctx.layout.ref(path, ParamRole::Bias));
        case LayerKind::BatchNorm: {
            const SegRef sseg = ctx.layout.ref(path, ParamRole::BnScale);
            const SegRef hseg = ctx.layout.ref(path, ParamRole::BnShift);
            Eigen::Map<const Vec> gamma(ctx.params.data() + sseg.offset, sseg.length);
            Eigen::Map<const Vec> beta(ctx.params.data() + hseg.offset, hseg.length);
            const int spatial = in_shape.is_image() ? in_shape.height() * in_shape.width() : 1;
            Vec mean(l.features), var(l.features);
            if (ctx.mode == Mode::Train) {
                for (int c = 0; c < l.features; ++c) {
                    auto block = x.middleCols(static_cast<std::ptrdiff_t>(c) * spatial, spatial);
                    mean(c) = block.mean();
                    var(c) = (block.array() - mean(c)).square().mean();
                }
                if (ctx.bn) {
                    auto& st = ctx.bn->stats[path];
                    st.mean = (1.0 - l.momentum) * st.mean + l.momentum * mean;
                    st.var = (1.0 - l.momentum) * st.var + l.momentum * var;
                }
            } else if (ctx.bn && ctx.bn->stats.count(path)) {
                mean = ctx.bn->stats.at(path).mean;
                var = ctx.bn->stats.at(path).var;
            } else {
                mean.setZero();
                var.setOnes();
            }
            if (cache) {
                cache->bn_mean = mean;
                cache->bn_var = var;
            }
            Mat y(x.rows(), x.cols());
            for (int c = 0; c < l.features; ++c) {
                const double inv = 1.0 / std::sqrt(var(c) + l.eps);
                auto block = x.middleCols(static_cast<std::ptrdiff_t>(c) * spatial, spatial);
                y.middleCols(static_cast<std::ptrdiff_t>(c) * spatial, spatial) =
                    ((block.array() - mean(c)) * inv * gamma(c) + beta(c)).matrix();
            }
            return y;
        }
        case LayerKind::MaxPool: {
            const int N = static_cast<int>(x.rows());
            const int c = in_shape.channels(), h = in_shape.height(), w = in_shape.width();
            const int oh = out_shape.height(), ow = out_shape.width(), win = l.window;
            Mat y(N, out_shape.count());
            if (cache) cache->argmax.resize(N, out_shape.count());
            for (int s = 0; s < N; ++s)
                for (int ch = 0; ch < c; ++ch)
                    for (int oy = 0; oy < oh; ++oy)
                        for (int ox = 0; ox < ow; ++ox) {
                            double best = -std::numeric_limits<double>::infinity();
                            int best_idx = -1;
                            for (int dy = 0; dy < win; ++dy)
                                for (int dx = 0; dx < win; ++dx) {
                                    const int idx = (ch * h + oy * win + dy) * w + ox * win + dx;
                                    if (x(s, idx) > best) {
                                        best = x(s, idx);
                                        best_idx = idx;
                                    }
                                }
                            const int oidx = (ch * oh + oy) * ow + ox;
                            y(s, oidx) = best;
                            if (cache) cache->argmax(s, oidx) = best_idx;
                        }
            return y;
        }
        case LayerKind::Flatten:
            return x;
        case LayerKind::Residual: {
            std::vector<LayerCache>* inner_caches = nullptr;
            if (cache) {
                inner_caches = &cache->inner;
            }
            Mat y = eval_chain(ctx, l.inner, path, x, in_shape, inner_caches);
            return y + x;
        }
    }
    throw Error("unreachable layer kind");
}

Mat eval_chain(EvalContext& ctx, const std::vector<LayerSpec>& layers, const std::string& base,
               const Mat& input, const TensorShape& in_shape, std::vector<LayerCache>* caches) {
    Mat x = input;
    TensorShape shape = in_shape;
    if (caches) caches->resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string path = path_of(base, i);
        const TensorShape out_shape = layer_output_shape(layers[i], shape, path);
        LayerCache* cache = caches ? &(*caches)[i] : nullptr;
        if (cache) cache->input = x;
        x = eval_layer(ctx, layers[i], path, x, shape, out_shape, cache);
        shape = out_shape;
    }
    return x;
}

Mat backward_chain(EvalContext& ctx, const std::vector<LayerSpec>& layers, const std::string& base,
                   const TensorShape& in_shape, const std::vector<LayerCache>& caches, const Mat& gout,
                   Vec* gparams, bool need_gin);

Mat backward_layer(EvalContext& ctx, const LayerSpec& l, const std::string& path,
                   const TensorShape& in_shape, const TensorShape& out_shape, const LayerCache& cache,
                   const Mat& gy, Vec* gparams, bool need_gin) {
    switch (l.kind) {
        case LayerKind::Dense: {
            const SegRef wseg = ctx.layout.ref(path, ParamRole::Weight);
            const SegRef bseg = ctx.layout.ref(path, ParamRole::Bias);
            ConstRowMap wmat(ctx.params.data() + wseg.offset, l.out, l.in);
            if (gparams) {
                Mat gw = gy.transpose() * cache.input;  // out x in
                for (int r = 0; r < l.out; ++r)
                    for (int c = 0; c < l.in; ++c) (*gparams)(wseg.offset + r * l.in + c) += gw(r, c);
                gparams->segment(bseg.offset, bseg.length) += gy.colwise().sum().transpose();
            }
            if (!need_gin) return Mat();
            return gy * wmat;
        }
        case LayerKind::ReLU: {
            if (!need_gin) return Mat();
            return ((cache.input.array() > 0.0).cast<double>() * gy.array()).matrix();
        }
        case LayerKind::Conv2d: {
            Mat gx;
            if (need_gin) gx = Mat::Zero(cache.input.rows(), cache.input.cols());
            conv_backward(l, cache.input, gy, in_shape, out_shape, ctx.params,
                          ctx.layout.ref(path, ParamRole::Weight), ctx.layout.ref(path, ParamRole::Bias),
                          gparams, need_gin ? &gx : nullptr);
            return gx;
        }
        case LayerKind::BatchNorm: {
            const SegRef sseg = ctx.layout.ref(path, ParamRole::BnScale);
            const SegRef hseg = ctx.layout.ref(path, ParamRole::BnShift);
            Eigen::Map<const Vec> gamma(ctx.params.data() + sseg.offset, sseg.length);
            const int spatial = in_shape.is_image() ? in_shape.height() * in_shape.width() : 1;
            const double m_count = static_cast<double>(cache.input.rows()) * spatial;
            Mat gx;
            if (need_gin) gx.resize(cache.input.rows(), cache.input.cols());
            for (int c = 0; c < l.features; ++c) {
                const double inv = 1.0 / std::sqrt(cache.bn_var(c) + l.eps);
                auto xb = cache.input.middleCols(static_cast<std::ptrdiff_t>(c) * spatial, spatial);
                auto gyb = gy.middleCols(static_cast<std::ptrdiff_t>(c) * spatial, spatial);
                Eigen::ArrayXXd xhat = (xb.array() - cache.bn_mean(c)) * inv;
                const double sum_gy = gyb.sum();
                const double sum_gy_xhat = (gyb.array() * xhat).sum();
                if (gparams) {
                    (*gparams)(sseg.offset + c) += sum_gy_xhat;
                    (*gparams)(hseg.offset + c) += sum_gy;
                }
                if (need_gin) {
                    if (ctx.mode == Mode::Train) {
                        gx.middleCols(static_cast<std::ptrdiff_t>(c) * spatial, spatial) =
                            (gamma(c) * inv *
                             (gyb.array() - sum_gy / m_count - xhat * (sum_gy_xhat / m_count)))
                                .matrix();
                    } else {
                        gx.middleCols(static_cast<std::ptrdiff_t>(c) * spatial, spatial) =
                            (gyb.array() * gamma(c) * inv).matrix();
                    }
                }
            }
            return gx;
        }
        case LayerKind::MaxPool: {
            if (!need_gin) return Mat();
            Mat gx = Mat::Zero(cache.input.rows(), cache.input.cols());
            for (int s = 0; s < gy.rows(); ++s)
                for (int j = 0; j < gy.cols(); ++j) gx(s, cache.argmax(s, j)) += gy(s, j);
            return gx;
        }
        case LayerKind::Flatten:
            return gy;
        case LayerKind::Residual: {
            Mat ginner =
                backward_chain(ctx, l.inner, path, in_shape, cache.inner, gy, gparams, need_gin);
            if (!need_gin) return Mat();
            return ginner + gy;
        }
    }
    throw Error("unreachable layer kind");
}

Mat backward_chain(EvalContext& ctx, const std::vector<LayerSpec>& layers, const std::string& base,
                   const TensorShape& in_shape, const std::vector<LayerCache>& caches, const Mat& gout,
                   Vec* gparams, bool need_gin) {
    std::vector<TensorShape> in_shapes(layers.size());
    TensorShape shape = in_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        in_shapes[i] = shape;
        shape = layer_output_shape(layers[i], shape, path_of(base, i));
    }
    Mat g = gout;
    for (std::size_t i = layers.size(); i-- > 0;) {
        const std::string path = path_of(base, i);
        const TensorShape out_shape = layer_output_shape(layers[i], in_shapes[i], path);
        const bool gin_here = need_gin || i > 0;
        g = backward_layer(ctx, layers[i], path, in_shapes[i], out_shape, caches[i], g, gparams,
                           gin_here);
    }
    return g;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string TensorShape::str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
    os << ")";
    return os.str();
}

LayerSpec LayerSpec::dense(int in, int out) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.in = in;
    l.out = out;
    return l;
}
LayerSpec LayerSpec::relu() {
    LayerSpec l;
    l.kind = LayerKind::ReLU;
    return l;
}
LayerSpec LayerSpec::conv2d(int in_ch, int out_ch, int kernel, int stride, int pad) {
    LayerSpec l;
    l.kind = LayerKind::Conv2d;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.kernel = kernel;
    l.stride = stride;
    l.pad = pad;
    return l;
}
LayerSpec LayerSpec::batchnorm(int features, double eps, double momentum) {
    LayerSpec l;
    l.kind = LayerKind::BatchNorm;
    l.features = features;
    l.eps = eps;
    l.momentum = momentum;
    return l;
}
LayerSpec LayerSpec::maxpool(int window) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.window = window;
    return l;
}
LayerSpec LayerSpec::flatten() {
    LayerSpec l;
    l.kind = LayerKind::Flatten;
    return l;
}
LayerSpec LayerSpec::residual(std::vector<LayerSpec> inner) {
    LayerSpec l;
    l.kind = LayerKind::Residual;
    l.inner = std::move(inner);
    return l;
}

std::string LayerSpec::kind_name() const {
    switch (kind) {
        case LayerKind::Dense: return "dense";
        case LayerKind::ReLU: return "relu";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::BatchNorm: return "batchnorm";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Residual: return "residual";
    }
    return "?";
}

std::vector<TensorShape> NetworkSpec::infer_shapes() const {
    std::vector<TensorShape> shapes;
    TensorShape shape = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        shape = layer_output_shape(layers[i], shape, std::to_string(i));
        shapes.push_back(shape);
    }
    if (shape.is_image() || shape.count() != output_dim)
        throw ShapeError("network output " + shape.str() + " != declared output_dim=" +
                         std::to_string(output_dim));
    return shapes;
}

bool NetworkSpec::is_relu_mlp() const {
    if (input_shape.is_image()) return false;
    bool expect_dense = true;
    for (const auto& l : layers) {
        if (expect_dense && l.kind != LayerKind::Dense) return false;
        if (!expect_dense && l.kind != LayerKind::ReLU) return false;
        expect_dense = !expect_dense;
    }
    return !layers.empty() && layers.back().kind == LayerKind::Dense;
}

int NetworkSpec::min_hidden_width() const {
    int s = -1;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        if (layers[i].kind != LayerKind::Dense) continue;
        if (s < 0 || layers[i].out < s) s = layers[i].out;
    }
    if (s < 1) throw ArgumentError("network has no hidden layer; minimum hidden width undefined");
    return s;
}

NetworkSpec mlp_spec(int input_dim, const std::vector<int>& hidden_widths, int classes) {
    NetworkSpec spec;
    spec.input_shape = TensorShape::flat(input_dim);
    spec.output_dim = classes;
    int prev = input_dim;
    for (int w : hidden_widths) {
        spec.layers.push_back(LayerSpec::dense(prev, w));
        spec.layers.push_back(LayerSpec::relu());
        prev = w;
    }
    spec.layers.push_back(LayerSpec::dense(prev, classes));
    return spec;
}

std::string role_name(ParamRole role) {
    switch (role) {
        case ParamRole::Weight: return "weight";
        case ParamRole::Bias: return "bias";
        case ParamRole::BnScale: return "bn-scale";
        case ParamRole::BnShift: return "bn-shift";
    }
    return "?";
}

ParamRole role_from_name(const std::string& name) {
    if (name == "weight") return ParamRole::Weight;
    if (name == "bias") return ParamRole::Bias;
    if (name == "bn-scale") return ParamRole::BnScale;
    if (name == "bn-shift") return ParamRole::BnShift;
    throw ArgumentError("unknown parameter role: " + name);
}

const ParamSegment* ParamVector::find(const std::string& layer, ParamRole role) const {
    for (const auto& s : segments)
        if (s.layer == layer && s.role == role) return &s;
    return nullptr;
}

const ParamSegment& ParamVector::segment(const std::string& layer, ParamRole role) const {
    const ParamSegment* s = find(layer, role);
    if (!s) throw ArgumentError("no segment " + layer + "/" + role_name(role));
    return *s;
}

ParamVector zero_params(const NetworkSpec& spec) {
    ParamVector pv;
    Layout layout = build_layout(spec, &pv.segments);
    pv.values = Vec::Zero(layout.total);
    return pv;
}

void Batch::validate(int input_dim, int classes) const {
    if (inputs.rows() < 1) throw ArgumentError("batch is empty");
    if (inputs.cols() != input_dim)
        throw ShapeError("batch input width " + std::to_string(inputs.cols()) + " != network input " +
                         std::to_string(input_dim));
    if (static_cast<int>(labels.size()) != inputs.rows())
        throw ArgumentError("label count != sample count");
    for (int y : labels)
        if (y < 0 || y >= classes) throw ArgumentError("label " + std::to_string(y) + " out of range");
}

namespace {

void visit_chain(const std::vector<LayerSpec>& layers, const std::string& base, TensorShape shape,
                 const std::function<void(const LayerSpec&, const std::string&, const TensorShape&)>& fn) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string path = path_of(base, i);
        if (layers[i].kind == LayerKind::Residual) {
            visit_chain(layers[i].inner, path, shape, fn);
        } else {
            fn(layers[i], path, shape);
        }
        shape = layer_output_shape(layers[i], shape, path);
    }
}

}  // namespace

void visit_layers(
    const NetworkSpec& spec,
    const std::function<void(const LayerSpec&, const std::string&, const TensorShape&)>& fn) {
    visit_chain(spec.layers, "", spec.input_shape, fn);
}

BnState BnState::init_for(const NetworkSpec& spec) {
    BnState state;
    walk(spec.layers, "", [&](const LayerSpec& l, const std::string& path) {
        if (l.kind == LayerKind::BatchNorm) {
            state.stats[path] = Stats{Vec::Zero(l.features), Vec::Ones(l.features)};
        }
    });
    return state;
}

Mat forward(const NetworkSpec& spec, const ParamVector& params, const Mat& inputs, Mode mode,
            BnState* bn, ForwardDetails* details) {
    if (inputs.cols() != spec.input_shape.count())
        throw ShapeError("input width " + std::to_string(inputs.cols()) + " != network input " +
                         std::to_string(spec.input_shape.count()));
    Layout layout = build_layout(spec, nullptr);
    if (params.values.size() != layout.total)
        throw ShapeError("parameter vector length " + std::to_string(params.values.size()) +
                         " != expected " + std::to_string(layout.total));
    if (details) details->min_preactivation = std::numeric_limits<double>::infinity();
    EvalContext ctx{spec, layout, params.values, mode, bn, details};
    return eval_chain(ctx, spec.layers, "", inputs, spec.input_shape, nullptr);
}

Mat softmax(const Mat& logits) {
    Mat p(logits.rows(), logits.cols());
    for (int i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.row(i).array() - m).exp();
        p.row(i) = (e / e.sum()).matrix();
    }
    return p;
}

double loss_value(const Mat& logits, const std::vector<int>& labels) {
    if (!logits.allFinite()) throw NumericError("non-finite logits in loss_value");
    if (static_cast<int>(labels.size()) != logits.rows())
        throw ArgumentError("label count != logit rows");
    double total = 0.0;
    for (int i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
        total += lse - logits(i, labels[i]);
    }
    return total / static_cast<double>(logits.rows());
}

double accuracy(const Mat& logits, const std::vector<int>& labels) {
    int hits = 0;
    for (int i = 0; i < logits.rows(); ++i) {
        int arg = 0;
        logits.row(i).maxCoeff(&arg);
        if (arg == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

GradResult loss_grad(const NetworkSpec& spec, const ParamVector& params, const Batch& batch,
                     Mode mode, BnState* bn, bool want_input_grad) {
    batch.validate(spec.input_shape.count(), spec.output_dim);
    Layout layout = build_layout(spec, nullptr);
    if (params.values.size() != layout.total)
        throw ShapeError("parameter vector length " + std::to_string(params.values.size()) +
                         " != expected " + std::to_string(layout.total));

    EvalContext ctx{spec, layout, params.values, mode, bn, nullptr};
    std::vector<LayerCache> caches;
    Mat logits = eval_chain(ctx, spec.layers, "", batch.inputs, spec.input_shape, &caches);

    GradResult result;
    result.loss = loss_value(logits, batch.labels);

    const double n = static_cast<double>(batch.size());
    Mat seed = softmax(logits);
    for (int i = 0; i < seed.rows(); ++i) seed(i, batch.labels[i]) -= 1.0;
    seed /= n;

    result.grad = Vec::Zero(layout.total);
    Mat gin = backward_chain(ctx, spec.layers, "", spec.input_shape, caches, seed, &result.grad,
                             want_input_grad);
    if (want_input_grad) result.input_grad = std::move(gin);
    if (!result.grad.allFinite()) throw NumericError("non-finite gradient");
    return result;
}

Mat per_output_param_jacobian(const NetworkSpec& spec, const ParamVector& params, const Vec& x,
                              const BnState* bn) {
    Layout layout = build_layout(spec, nullptr);
    if (params.values.size() != layout.total)
        throw ShapeError("parameter vector length " + std::to_string(params.values.size()) +
                         " != expected " + std::to_string(layout.total));
    EvalContext ctx{spec, layout, params.values, Mode::Eval, const_cast<BnState*>(bn), nullptr};
    std::vector<LayerCache> caches;
    Mat input = x.transpose();
    eval_chain(ctx, spec.layers, "", input, spec.input_shape, &caches);

    Mat jac(spec.output_dim, layout.total);
    for (int k = 0; k < spec.output_dim; ++k) {
        Mat seed = Mat::Zero(1, spec.output_dim);
        seed(0, k) = 1.0;
        Vec grad = Vec::Zero(layout.total);
        backward_chain(ctx, spec.layers, "", spec.input_shape, caches, seed, &grad, false);
        jac.row(k) = grad.transpose();
    }
    return jac;
}

ParamVector init_params(const NetworkSpec& spec, InitScheme scheme, std::uint64_t seed) {
    ParamVector pv = zero_params(spec);
    if (scheme == InitScheme::Zero) return pv;

    std::mt19937_64 rng(seed);
    walk(spec.layers, "", [&](const LayerSpec& l, const std::string& path) {
        if (l.kind == LayerKind::BatchNorm) {
            pv.values.segment(pv.segment(path, ParamRole::BnScale).offset, l.features).setOnes();
            return;
        }
        if (l.kind != LayerKind::Dense && l.kind != LayerKind::Conv2d) return;
        const int fan_in =
            l.kind == LayerKind::Dense ? l.in : l.in_ch * l.kernel * l.kernel;
        const double bound = scheme == InitScheme::HeUniform ? std::sqrt(6.0 / fan_in)
                                                             : 1.0 / std::sqrt(double(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        const ParamSegment& wseg = pv.segment(path, ParamRole::Weight);
        for (std::ptrdiff_t i = 0; i < wseg.length; ++i) pv.values(wseg.offset + i) = dist(rng);
        if (scheme == InitScheme::Default) {
            const ParamSegment& bseg = pv.segment(path, ParamRole::Bias);
            for (std::ptrdiff_t i = 0; i < bseg.length; ++i) pv.values(bseg.offset + i) = dist(rng);
        }
    });
    return pv;
}

}  // namespace probe
