#include "probe/ntk.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "probe/io.hpp"

namespace probe {

NTKSlice sample_ntk(const NetworkSpec& spec, const ParamVector& params, const Mat& images,
                    const BnState* bn) {
    const int n_imgs = static_cast<int>(images.rows());
    if (n_imgs < 2) throw ArgumentError("sample_ntk: need at least 2 images");
    const int n_out = spec.output_dim;
    const std::ptrdiff_t p = params.size();

    Mat stacked(static_cast<std::ptrdiff_t>(n_imgs) * n_out, p);
    for (int i = 0; i < n_imgs; ++i)
        stacked.middleRows(static_cast<std::ptrdiff_t>(i) * n_out, n_out) =
            per_output_param_jacobian(spec, params, images.row(i).transpose(), bn);

    NTKSlice slice;
    slice.num_images = n_imgs;
    slice.outputs = n_out;
    slice.param_count = p;
    slice.fingerprint = param_fingerprint(params);
    slice.gram = Mat::Zero(stacked.rows(), stacked.rows());
    slice.gram.selfadjointView<Eigen::Lower>().rankUpdate(stacked);
    slice.gram.triangularView<Eigen::StrictlyUpper>() =
        slice.gram.triangularView<Eigen::StrictlyLower>().transpose();
    return slice;
}

double relative_change(const NTKSlice& phi0, const NTKSlice& phi1) {
    if (phi0.gram.rows() != phi1.gram.rows() || phi0.outputs != phi1.outputs)
        throw ShapeError("relative_change: slice shapes differ");
    const double denom = phi0.frobenius_norm();
    if (denom <= 0.0) throw UndefinedMetricError("relative_change: ||Phi0|| is zero");
    return (phi1.gram - phi0.gram).norm() / denom;
}

double correlation(const NTKSlice& phi0, const NTKSlice& phi1) {
    if (phi0.gram.rows() != phi1.gram.rows() || phi0.outputs != phi1.outputs)
        throw ShapeError("correlation: slice shapes differ");
    const double n = static_cast<double>(phi0.gram.size());
    const double m0 = phi0.gram.mean();
    const double m1 = phi1.gram.mean();
    const double var0 = (phi0.gram.array() - m0).square().sum() / n;
    const double var1 = (phi1.gram.array() - m1).square().sum() / n;
    if (var0 <= 0.0 || var1 <= 0.0)
        throw UndefinedMetricError("correlation: a slice has zero variance");
    const double cov = ((phi0.gram.array() - m0) * (phi1.gram.array() - m1)).sum() / n;
    return cov / std::sqrt(var0) / std::sqrt(var1);
}

NetFamily family_from_name(const std::string& name) {
    if (name == "mlp2") return NetFamily::Mlp2;
    if (name == "mlp4") return NetFamily::Mlp4;
    if (name == "convnet6") return NetFamily::Convnet6;
    if (name == "residual") return NetFamily::Residual;
    throw ConfigError("unknown network family: " + name);
}

std::string family_name(NetFamily family) {
    switch (family) {
        case NetFamily::Mlp2: return "mlp2";
        case NetFamily::Mlp4: return "mlp4";
        case NetFamily::Convnet6: return "convnet6";
        case NetFamily::Residual: return "residual";
    }
    return "?";
}

namespace {

std::vector<LayerSpec> conv_block(int channels, bool batchnorm) {
    std::vector<LayerSpec> block;
    block.push_back(LayerSpec::conv2d(channels, channels, 3, 1, 1));
    if (batchnorm) block.push_back(LayerSpec::batchnorm(channels));
    block.push_back(LayerSpec::relu());
    block.push_back(LayerSpec::conv2d(channels, channels, 3, 1, 1));
    if (batchnorm) block.push_back(LayerSpec::batchnorm(channels));
    return block;
}

}  // namespace

NetworkSpec family_spec(NetFamily family, const TensorShape& input_shape, int classes, int width,
                        bool batchnorm, bool skip) {
    if (width < 1) throw ArgumentError("family_spec: width must be >= 1");
    switch (family) {
        case NetFamily::Mlp2:
            return mlp_spec(input_shape.count(), {width}, classes);
        case NetFamily::Mlp4:
            return mlp_spec(input_shape.count(), {width, width, width}, classes);
        case NetFamily::Convnet6: {
            if (!input_shape.is_image()) throw ArgumentError("convnet6 needs image input");
            NetworkSpec spec;
            spec.input_shape = input_shape;
            spec.output_dim = classes;
            const int c = input_shape.channels();
            spec.layers = {
                LayerSpec::conv2d(c, width, 3, 1, 1),
                LayerSpec::relu(),
                LayerSpec::conv2d(width, width, 3, 1, 1),
                LayerSpec::relu(),
                LayerSpec::maxpool(2),
                LayerSpec::conv2d(width, 2 * width, 3, 1, 1),
                LayerSpec::relu(),
                LayerSpec::conv2d(2 * width, 2 * width, 3, 1, 1),
                LayerSpec::relu(),
                LayerSpec::maxpool(2),
                LayerSpec::flatten(),
                LayerSpec::dense(2 * width * (input_shape.height() / 4) * (input_shape.width() / 4),
                                 classes),
            };
            return spec;
        }
        case NetFamily::Residual: {
            if (!input_shape.is_image()) throw ArgumentError("residual family needs image input");
            NetworkSpec spec;
            spec.input_shape = input_shape;
            spec.output_dim = classes;
            const int c = input_shape.channels();
            spec.layers.push_back(LayerSpec::conv2d(c, width, 3, 1, 1));
            if (batchnorm) spec.layers.push_back(LayerSpec::batchnorm(width));
            spec.layers.push_back(LayerSpec::relu());
            for (int b = 0; b < 4; ++b) {
                auto block = conv_block(width, batchnorm);
                if (skip) {
                    spec.layers.push_back(LayerSpec::residual(std::move(block)));
                } else {
                    for (auto& l : block) spec.layers.push_back(std::move(l));
                }
                spec.layers.push_back(LayerSpec::relu());
            }
            spec.layers.push_back(LayerSpec::flatten());
            spec.layers.push_back(
                LayerSpec::dense(width * input_shape.height() * input_shape.width(), classes));
            return spec;
        }
    }
    throw Error("unreachable family");
}

std::vector<SweepCell> width_sweep(const WidthSweepConfig& cfg, const Batch& train_data,
                                   const Batch& test_data, const TensorShape& input_shape,
                                   int classes) {
    if (cfg.widths.empty()) throw ArgumentError("width_sweep: widths are empty");
    if (!std::is_sorted(cfg.widths.begin(), cfg.widths.end()))
        throw ArgumentError("width_sweep: widths must be ascending");
    if (cfg.num_images < 2 || cfg.num_images > train_data.size())
        throw ArgumentError("width_sweep: num_images out of range");

    // One image sample per sweep, reused for Phi0 and Phi1.
    std::vector<int> pool(train_data.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
    std::mt19937_64 img_rng(cfg.image_seed);
    std::shuffle(pool.begin(), pool.end(), img_rng);
    Mat images(cfg.num_images, train_data.inputs.cols());
    for (int i = 0; i < cfg.num_images; ++i) images.row(i) = train_data.inputs.row(pool[i]);

    std::vector<SweepCell> cells;
    for (int width : cfg.widths) {
        for (std::uint64_t seed : cfg.seeds) {
            SweepCell cell;
            cell.family = family_name(cfg.family);
            cell.width = width;
            cell.seed = seed;
            try {
                NetworkSpec spec =
                    family_spec(cfg.family, input_shape, classes, width, cfg.batchnorm, cfg.skip);
                Model model{spec, init_params(spec, InitScheme::HeUniform, seed),
                            BnState::init_for(spec)};
                cell.param_count = model.params.size();
                const Vec initial = model.params.values;

                NTKSlice phi0 = sample_ntk(spec, model.params, images, &model.bn);
                cell.norm0 = phi0.frobenius_norm();

                TrainConfig tc = cfg.train;
                tc.seed = seed;
                SgdState state = SgdState::init(model.params.size());
                for (int epoch = 0; epoch < tc.epochs; ++epoch) {
                    train_epoch(model, train_data, tc, state, epoch);
                    if (cfg.track_epochs) {
                        NTKSlice phi_t = sample_ntk(spec, model.params, images, &model.bn);
                        cell.epoch_correlations.emplace_back(epoch, correlation(phi0, phi_t));
                    }
                }

                NTKSlice phi1 = sample_ntk(spec, model.params, images, &model.bn);
                cell.norm1 = phi1.frobenius_norm();
                cell.rel_change = relative_change(phi0, phi1);
                cell.correlation = correlation(phi0, phi1);
                cell.test_acc = evaluate_accuracy(model, test_data);
                cell.param_change = (model.params.values - initial).norm();
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

}  // namespace probe
