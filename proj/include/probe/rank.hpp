#pragma once

#include <optional>
#include <string>
#include <vector>

#include "probe/net.hpp"
#include "probe/train.hpp"

namespace probe {

// Conv filter bank with the same memory layout as netcore conv weights:
// values[((oc * in_ch + ic) * k + kh) * k + kw].
struct ConvKernel {
    Vec values;
    int out_ch = 0, in_ch = 0, k = 0;

    double at(int oc, int ic, int kh, int kw) const {
        return values(((static_cast<std::ptrdiff_t>(oc) * in_ch + ic) * k + kh) * k + kw);
    }
    double& at(int oc, int ic, int kh, int kw) {
        return values(((static_cast<std::ptrdiff_t>(oc) * in_ch + ic) * k + kh) * k + kw);
    }
    static ConvKernel zero(int out_ch, int in_ch, int k);
};

struct SingularSpectrum {
    std::string layer_id;
    std::vector<double> values;  // descending, nonnegative
    double effective_rank = 0.0;
    std::string kind;            // "dense" or "conv(n=..,k=..,cin=..,cout=..)"
    std::string approx_note;     // set when the circular model approximates the layer
};

// r = (sum sigma_i) / sqrt(sum sigma_i^2); UndefinedMetricError on an
// all-zero spectrum.
double effective_rank(const std::vector<double>& singular_values);

SingularSpectrum dense_singular_values(const Mat& w, const std::string& layer_id = "");

// Singular values of the stride-1 circular convolution operator on n x n
// inputs: 2-D DFT of the centered zero-padded kernel per channel pair, then
// an SVD of each of the n^2 frequency-indexed c_out x c_in matrices.
SingularSpectrum conv_singular_values(const ConvKernel& kernel, int n,
                                      const std::string& layer_id = "");

// RankMin step: singular values below tau set to zero.
Mat clip_low(const Mat& w, double tau);
// RankMax step: singular values capped at c.
Mat clip_high(const Mat& w, double c);

// Conv variants clip per frequency, inverse-transform, and prune the filter
// back to its k x k support (central window of the padded grid).
ConvKernel clip_low(const ConvKernel& kernel, int n, double tau);
ConvKernel clip_high(const ConvKernel& kernel, int n, double c);

enum class RankMode { Min, Max };

// Per-layer spectra for every Dense/Conv2d layer of a model; conv layers use
// the circular model at their input spatial size and carry an approximation
// note.
std::vector<SingularSpectrum> model_spectra(const Model& model);

struct RankFinetuneConfig {
    RankMode mode = RankMode::Min;
    int epochs = 15;
    int clip_epochs = 6;  // clip at the start of each of the first N epochs
    double quantile = 0.5;
    std::optional<double> threshold;  // explicit tau (Min) / cap (Max)
    TrainConfig train;
};

struct SpectrumTraceRow {
    int epoch = 0;  // 0 = before fine-tuning, e+1 = after epoch e
    SingularSpectrum spectrum;
};

struct RankFinetuneResult {
    Model model;
    std::vector<SpectrumTraceRow> trace;
    double clean_acc = 0.0;
    double robust_acc = -1.0;
    std::vector<std::string> warnings;
};

// Alternates clipping and retraining on the fine-tune schedule; emits the
// per-layer effective-rank trace and final clean/robust accuracies.
RankFinetuneResult rank_finetune(Model model, const Batch& train_data, const Batch& test_data,
                                 const RankFinetuneConfig& cfg,
                                 const std::optional<AttackConfig>& eval_attack = std::nullopt);

}  // namespace probe
