#include "probe/rank.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <sstream>

namespace probe {

namespace {

using CMat = Eigen::MatrixXcd;

CMat dft_matrix(int n) {
    CMat f(n, n);
    const double w = -2.0 * M_PI / n;
    for (int u = 0; u < n; ++u)
        for (int t = 0; t < n; ++t)
            f(u, t) = std::complex<double>(std::cos(w * u * t), std::sin(w * u * t));
    return f;
}

// Frequency-domain matrices of the circular operator: freq[u*n+v](oc, ic).
std::vector<CMat> kernel_frequencies(const ConvKernel& kernel, int n) {
    if (n < kernel.k) throw ArgumentError("conv spectrum: input size n < kernel size k");
    const CMat f = dft_matrix(n);
    const int off = (n - kernel.k) / 2;  // centered placement, matching the pruning window

    std::vector<CMat> freq(static_cast<std::size_t>(n) * n, CMat(kernel.out_ch, kernel.in_ch));
    CMat padded = CMat::Zero(n, n);
    for (int oc = 0; oc < kernel.out_ch; ++oc)
        for (int ic = 0; ic < kernel.in_ch; ++ic) {
            padded.setZero();
            for (int kh = 0; kh < kernel.k; ++kh)
                for (int kw = 0; kw < kernel.k; ++kw)
                    padded(off + kh, off + kw) = kernel.at(oc, ic, kh, kw);
            CMat d = f * padded * f.transpose();
            for (int u = 0; u < n; ++u)
                for (int v = 0; v < n; ++v) freq[static_cast<std::size_t>(u) * n + v](oc, ic) = d(u, v);
        }
    return freq;
}

ConvKernel kernel_from_frequencies(const std::vector<CMat>& freq, int n, int out_ch, int in_ch,
                                   int k) {
    const CMat f = dft_matrix(n);
    const CMat f_inv = f.conjugate() / static_cast<double>(n);  // F is symmetric
    const int off = (n - k) / 2;

    ConvKernel out = ConvKernel::zero(out_ch, in_ch, k);
    CMat d(n, n);
    for (int oc = 0; oc < out_ch; ++oc)
        for (int ic = 0; ic < in_ch; ++ic) {
            for (int u = 0; u < n; ++u)
                for (int v = 0; v < n; ++v) d(u, v) = freq[static_cast<std::size_t>(u) * n + v](oc, ic);
            CMat spatial = f_inv * d * f_inv.transpose();
            for (int kh = 0; kh < k; ++kh)
                for (int kw = 0; kw < k; ++kw)
                    out.at(oc, ic, kh, kw) = spatial(off + kh, off + kw).real();
        }
    return out;
}

ConvKernel clip_conv(const ConvKernel& kernel, int n, double bound, bool low) {
    if (bound < 0.0) throw ArgumentError("clip: threshold must be >= 0");
    auto freq = kernel_frequencies(kernel, n);
    for (auto& m : freq) {
        Eigen::JacobiSVD<CMat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Vec sv = svd.singularValues();
        for (int i = 0; i < sv.size(); ++i)
            sv(i) = low ? (sv(i) < bound ? 0.0 : sv(i)) : std::min(bound, sv(i));
        m = svd.matrixU() * sv.cast<std::complex<double>>().asDiagonal() * svd.matrixV().adjoint();
    }
    return kernel_from_frequencies(freq, n, kernel.out_ch, kernel.in_ch, kernel.k);
}

Mat clip_dense(const Mat& w, double bound, bool low) {
    if (bound < 0.0) throw ArgumentError("clip: threshold must be >= 0");
    Eigen::JacobiSVD<Mat> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vec sv = svd.singularValues();
    for (int i = 0; i < sv.size(); ++i)
        sv(i) = low ? (sv(i) < bound ? 0.0 : sv(i)) : std::min(bound, sv(i));
    return svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
}

double spectrum_quantile(const std::vector<double>& desc_values, double q) {
    if (desc_values.empty()) throw ArgumentError("quantile of empty spectrum");
    std::vector<double> asc(desc_values.rbegin(), desc_values.rend());
    const double pos = q * static_cast<double>(asc.size() - 1);
    const std::size_t idx = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(idx);
    if (idx + 1 < asc.size()) return asc[idx] * (1.0 - frac) + asc[idx + 1] * frac;
    return asc.back();
}

}  // namespace

ConvKernel ConvKernel::zero(int out_ch, int in_ch, int k) {
    ConvKernel kern;
    kern.out_ch = out_ch;
    kern.in_ch = in_ch;
    kern.k = k;
    kern.values = Vec::Zero(static_cast<std::ptrdiff_t>(out_ch) * in_ch * k * k);
    return kern;
}

double effective_rank(const std::vector<double>& singular_values) {
    double sum = 0.0, sum_sq = 0.0;
    for (double s : singular_values) {
        sum += s;
        sum_sq += s * s;
    }
    if (sum_sq <= 0.0) throw UndefinedMetricError("effective rank of an all-zero operator");
    return sum / std::sqrt(sum_sq);
}

SingularSpectrum dense_singular_values(const Mat& w, const std::string& layer_id) {
    Eigen::JacobiSVD<Mat> svd(w);
    SingularSpectrum spec;
    spec.layer_id = layer_id;
    spec.kind = "dense";
    spec.values.assign(svd.singularValues().data(),
                       svd.singularValues().data() + svd.singularValues().size());
    spec.effective_rank = effective_rank(spec.values);
    return spec;
}

SingularSpectrum conv_singular_values(const ConvKernel& kernel, int n, const std::string& layer_id) {
    auto freq = kernel_frequencies(kernel, n);
    SingularSpectrum spec;
    spec.layer_id = layer_id;
    {
        std::ostringstream os;
        os << "conv(n=" << n << ",k=" << kernel.k << ",cin=" << kernel.in_ch
           << ",cout=" << kernel.out_ch << ")";
        spec.kind = os.str();
    }
    spec.values.reserve(freq.size() * std::min(kernel.in_ch, kernel.out_ch));
    for (const auto& m : freq) {
        Eigen::JacobiSVD<CMat> svd(m);
        for (int i = 0; i < svd.singularValues().size(); ++i)
            spec.values.push_back(svd.singularValues()(i));
    }
    std::sort(spec.values.begin(), spec.values.end(), std::greater<>());
    spec.effective_rank = effective_rank(spec.values);
    return spec;
}

Mat clip_low(const Mat& w, double tau) { return clip_dense(w, tau, true); }
Mat clip_high(const Mat& w, double c) {
    if (c <= 0.0) throw ArgumentError("clip_high: cap must be positive");
    return clip_dense(w, c, false);
}
ConvKernel clip_low(const ConvKernel& kernel, int n, double tau) {
    return clip_conv(kernel, n, tau, true);
}
ConvKernel clip_high(const ConvKernel& kernel, int n, double c) {
    if (c <= 0.0) throw ArgumentError("clip_high: cap must be positive");
    return clip_conv(kernel, n, c, false);
}

namespace {

struct OperatorRef {
    const LayerSpec* layer;
    std::string path;
    TensorShape in_shape;
};

std::vector<OperatorRef> operator_layers(const NetworkSpec& spec) {
    std::vector<OperatorRef> refs;
    visit_layers(spec, [&](const LayerSpec& l, const std::string& path, const TensorShape& in) {
        if (l.kind == LayerKind::Dense || l.kind == LayerKind::Conv2d)
            refs.push_back({&l, path, in});
    });
    return refs;
}

SingularSpectrum layer_spectrum(const Model& model, const OperatorRef& ref) {
    const ParamSegment& seg = model.params.segment(ref.path, ParamRole::Weight);
    if (ref.layer->kind == LayerKind::Dense) {
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
            model.params.values.data() + seg.offset, ref.layer->out, ref.layer->in);
        return dense_singular_values(w, ref.path);
    }
    ConvKernel kern = ConvKernel::zero(ref.layer->out_ch, ref.layer->in_ch, ref.layer->kernel);
    kern.values = model.params.values.segment(seg.offset, seg.length);
    SingularSpectrum spec = conv_singular_values(kern, ref.in_shape.height(), ref.path);
    if (ref.layer->stride != 1 || ref.layer->pad != 0) {
        std::ostringstream os;
        os << "circular stride-1 model for a stride-" << ref.layer->stride << " zero-pad-"
           << ref.layer->pad << " layer";
        spec.approx_note = os.str();
    }
    return spec;
}

void clip_model(Model& model, RankMode mode, double quantile, std::optional<double> threshold) {
    for (const auto& ref : operator_layers(model.spec)) {
        const ParamSegment& seg = model.params.segment(ref.path, ParamRole::Weight);
        const SingularSpectrum spec = layer_spectrum(model, ref);
        const double bound = threshold ? *threshold : spectrum_quantile(spec.values, quantile);
        if (mode == RankMode::Max && bound <= 0.0) continue;
        if (ref.layer->kind == LayerKind::Dense) {
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
                w(model.params.values.data() + seg.offset, ref.layer->out, ref.layer->in);
            Mat clipped = mode == RankMode::Min ? clip_low(Mat(w), bound) : clip_high(Mat(w), bound);
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> out(
                model.params.values.data() + seg.offset, ref.layer->out, ref.layer->in);
            out = clipped;
        } else {
            ConvKernel kern = ConvKernel::zero(ref.layer->out_ch, ref.layer->in_ch, ref.layer->kernel);
            kern.values = model.params.values.segment(seg.offset, seg.length);
            const int n = ref.in_shape.height();
            ConvKernel clipped =
                mode == RankMode::Min ? clip_low(kern, n, bound) : clip_high(kern, n, bound);
            model.params.values.segment(seg.offset, seg.length) = clipped.values;
        }
    }
}

double eval_train_loss(const Model& model, const Batch& data) {
    BnState bn = model.bn;
    return loss_value(forward(model.spec, model.params, data.inputs, Mode::Eval, &bn), data.labels);
}

}  // namespace

std::vector<SingularSpectrum> model_spectra(const Model& model) {
    std::vector<SingularSpectrum> spectra;
    for (const auto& ref : operator_layers(model.spec)) spectra.push_back(layer_spectrum(model, ref));
    return spectra;
}

RankFinetuneResult rank_finetune(Model model, const Batch& train_data, const Batch& test_data,
                                 const RankFinetuneConfig& cfg,
                                 const std::optional<AttackConfig>& eval_attack) {
    RankFinetuneResult result;
    for (const auto& s : model_spectra(model)) result.trace.push_back({0, s});

    TrainConfig tc = cfg.train;
    tc.schedule = LrSchedule::finetune();
    SgdState state = SgdState::init(model.params.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double pre_clip_loss = eval_train_loss(model, train_data);
        if (epoch < cfg.clip_epochs) clip_model(model, cfg.mode, cfg.quantile, cfg.threshold);
        train_epoch(model, train_data, tc, state, epoch);
        const double end_loss = eval_train_loss(model, train_data);
        if (end_loss > 2.0 * pre_clip_loss) {
            std::ostringstream os;
            os << "loss diverged at epoch " << epoch << ": " << end_loss << " > 2 x "
               << pre_clip_loss;
            result.warnings.push_back(os.str());
        }
        for (const auto& s : model_spectra(model)) result.trace.push_back({epoch + 1, s});
    }

    result.clean_acc = evaluate_accuracy(model, test_data);
    if (eval_attack) result.robust_acc = evaluate_robust_accuracy(model, test_data, *eval_attack);
    result.model = std::move(model);
    return result;
}

}  // namespace probe
