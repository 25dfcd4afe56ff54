#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "probe/net.hpp"
#include "probe/train.hpp"

namespace probe {

// Sampled tangent-kernel tensor Phi_{ijkl} over N fixed inputs, stored as the
// flattened (N n) x (N n) Gram matrix M[(i,k),(j,l)] = Phi_{ijkl}.
struct NTKSlice {
    Mat gram;  // (N*n) x (N*n), symmetric by construction
    int num_images = 0;
    int outputs = 0;
    std::ptrdiff_t param_count = 0;
    std::string fingerprint;

    double at(int i, int j, int k, int l) const {
        return gram(static_cast<std::ptrdiff_t>(i) * outputs + k,
                    static_cast<std::ptrdiff_t>(j) * outputs + l);
    }
    double frobenius_norm() const { return gram.norm(); }
};

// Phi_{ijkl} = sum_p J_i[k,p] J_j[l,p] from stacked per-output parameter
// Jacobians; eval-mode forward throughout.
NTKSlice sample_ntk(const NetworkSpec& spec, const ParamVector& params, const Mat& images,
                    const BnState* bn = nullptr);

// || Phi1 - Phi0 ||_F / || Phi0 ||_F.
double relative_change(const NTKSlice& phi0, const NTKSlice& phi1);

// Pearson correlation of the flattened tensors (population variance).
double correlation(const NTKSlice& phi0, const NTKSlice& phi1);

enum class NetFamily { Mlp2, Mlp4, Convnet6, Residual };

NetFamily family_from_name(const std::string& name);
std::string family_name(NetFamily family);

// Desk-scale architecture builders. `width` is the hidden width for MLPs and
// the base filter count for the convolutional families. The residual family
// is a 4-block conv net with identity skips and optional BatchNorm.
NetworkSpec family_spec(NetFamily family, const TensorShape& input_shape, int classes, int width,
                        bool batchnorm = true, bool skip = true);

struct SweepCell {
    std::string family;
    int width = 0;
    std::ptrdiff_t param_count = 0;
    std::uint64_t seed = 0;
    double norm0 = 0.0;
    double norm1 = 0.0;
    double rel_change = 0.0;
    double correlation = 0.0;
    double test_acc = 0.0;
    double param_change = 0.0;
    bool ok = false;
    std::string error;
    std::vector<std::pair<int, double>> epoch_correlations;  // when tracking per-epoch slices
};

struct WidthSweepConfig {
    NetFamily family = NetFamily::Mlp2;
    bool batchnorm = true;
    bool skip = true;
    std::vector<int> widths;
    TrainConfig train;
    int num_images = 25;       // paper samples 25 fixed images
    std::vector<std::uint64_t> seeds = {0};
    std::uint64_t image_seed = 0;
    bool track_epochs = false;  // store per-epoch correlation with Phi0
};

// Per (width, seed): Phi0 at He-uniform init, training to budget, Phi1 after
// training. The image sample is drawn once per sweep and reused. Failed cells
// are recorded, not fatal.
std::vector<SweepCell> width_sweep(const WidthSweepConfig& cfg, const Batch& train_data,
                                   const Batch& test_data, const TensorShape& input_shape,
                                   int classes);

}  // namespace probe
