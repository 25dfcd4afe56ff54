#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "probe/data.hpp"
#include "probe/io.hpp"
#include "probe/landscape.hpp"
#include "probe/net.hpp"
#include "probe/ntk.hpp"
#include "probe/rank.hpp"
#include "probe/spectral.hpp"
#include "probe/train.hpp"

namespace py = pybind11;
using namespace probe;

namespace {

NetworkSpec spec_from_json_str(const std::string& text) {
    return spec_from_json(Json::parse(text));
}

Batch make_batch(const Mat& inputs, const std::vector<int>& labels) { return Batch{inputs, labels}; }

py::array_t<double> ntk_tensor(const NTKSlice& slice) {
    const int n_img = slice.num_images, n_out = slice.outputs;
    py::array_t<double> out({n_img, n_img, n_out, n_out});
    auto view = out.mutable_unchecked<4>();
    for (int i = 0; i < n_img; ++i)
        for (int j = 0; j < n_img; ++j)
            for (int k = 0; k < n_out; ++k)
                for (int l = 0; l < n_out; ++l) view(i, j, k, l) = slice.at(i, j, k, l);
    return out;
}

ConvKernel kernel_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 4) throw ArgumentError("conv kernel must be (out_ch, in_ch, k, k)");
    const auto view = arr.unchecked<4>();
    if (view.shape(2) != view.shape(3)) throw ArgumentError("conv kernel must be square");
    ConvKernel kern = ConvKernel::zero(static_cast<int>(view.shape(0)),
                                       static_cast<int>(view.shape(1)),
                                       static_cast<int>(view.shape(2)));
    for (int oc = 0; oc < kern.out_ch; ++oc)
        for (int ic = 0; ic < kern.in_ch; ++ic)
            for (int kh = 0; kh < kern.k; ++kh)
                for (int kw = 0; kw < kern.k; ++kw) kern.at(oc, ic, kh, kw) = view(oc, ic, kh, kw);
    return kern;
}

py::array_t<double> kernel_to_array(const ConvKernel& kern) {
    py::array_t<double> out({kern.out_ch, kern.in_ch, kern.k, kern.k});
    auto view = out.mutable_unchecked<4>();
    for (int oc = 0; oc < kern.out_ch; ++oc)
        for (int ic = 0; ic < kern.in_ch; ++ic)
            for (int kh = 0; kh < kern.k; ++kh)
                for (int kw = 0; kw < kern.k; ++kw) view(oc, ic, kh, kw) = kern.at(oc, ic, kh, kw);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Loss-landscape probing toolkit: exact constructions, spectral and "
              "tangent-kernel probes, rank manipulation, and PGD harnesses.";

    py::register_exception<ShapeError>(m, "ShapeError");
    py::register_exception<NumericError>(m, "NumericError");
    py::register_exception<CapacityError>(m, "CapacityError");
    py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError");

    py::class_<TensorShape>(m, "TensorShape")
        .def_static("flat", &TensorShape::flat)
        .def_static("image", &TensorShape::image)
        .def_property_readonly("dims", [](const TensorShape& s) { return s.dims; })
        .def("count", &TensorShape::count)
        .def("__repr__", &TensorShape::str);

    py::class_<NetworkSpec>(m, "NetworkSpec")
        .def_property_readonly("output_dim", [](const NetworkSpec& s) { return s.output_dim; })
        .def_property_readonly("input_shape", [](const NetworkSpec& s) { return s.input_shape; })
        .def("min_hidden_width", &NetworkSpec::min_hidden_width)
        .def("to_json", [](const NetworkSpec& s) { return spec_to_json(s).dump(); })
        .def("__repr__",
             [](const NetworkSpec& s) { return "NetworkSpec(" + spec_to_json(s).dump() + ")"; });

    py::class_<ParamVector>(m, "ParamVector")
        .def_property_readonly("values", [](const ParamVector& p) { return p.values; })
        .def("set_values",
             [](ParamVector& p, const Vec& v) {
                 if (v.size() != p.values.size()) throw ArgumentError("length mismatch");
                 p.values = v;
             })
        .def("__len__", [](const ParamVector& p) { return p.values.size(); })
        .def("segments", [](const ParamVector& p) {
            std::vector<std::tuple<std::string, std::string, std::ptrdiff_t, std::ptrdiff_t>> out;
            for (const auto& s : p.segments)
                out.emplace_back(s.layer, role_name(s.role), s.offset, s.length);
            return out;
        });

    py::class_<Batch>(m, "Batch")
        .def(py::init(&make_batch), py::arg("inputs"), py::arg("labels"))
        .def_property_readonly("inputs", [](const Batch& b) { return b.inputs; })
        .def_property_readonly("labels", [](const Batch& b) { return b.labels; })
        .def("__len__", &Batch::size);

    py::class_<BnState>(m, "BnState").def_static("init_for", &BnState::init_for);

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("train", [](const Dataset& d) { return d.train; })
        .def_property_readonly("test", [](const Dataset& d) { return d.test; })
        .def_property_readonly("classes", [](const Dataset& d) { return d.classes; })
        .def_property_readonly("shape", [](const Dataset& d) { return d.shape; });

    // Specs and parameters
    m.def("mlp_spec", &mlp_spec, py::arg("input_dim"), py::arg("hidden_widths"),
          py::arg("classes"));
    m.def(
        "family_spec",
        [](const std::string& family, const TensorShape& input_shape, int classes, int width,
           bool batchnorm, bool skip) {
            return family_spec(family_from_name(family), input_shape, classes, width, batchnorm,
                               skip);
        },
        py::arg("family"), py::arg("input_shape"), py::arg("classes"), py::arg("width"),
        py::arg("batchnorm") = true, py::arg("skip") = true);
    m.def("spec_from_json", &spec_from_json_str);
    m.def(
        "init_params",
        [](const NetworkSpec& spec, const std::string& scheme, std::uint64_t seed) {
            InitScheme s = scheme == "he_uniform" ? InitScheme::HeUniform
                           : scheme == "zero"     ? InitScheme::Zero
                           : scheme == "default"  ? InitScheme::Default
                                                  : throw ArgumentError("unknown scheme " + scheme);
            return init_params(spec, s, seed);
        },
        py::arg("spec"), py::arg("scheme") = "he_uniform", py::arg("seed") = 0);

    // Core evaluation
    m.def(
        "forward",
        [](const NetworkSpec& spec, const ParamVector& params, const Mat& inputs, bool train_mode) {
            BnState bn = BnState::init_for(spec);
            return forward(spec, params, inputs, train_mode ? Mode::Train : Mode::Eval, &bn);
        },
        py::arg("spec"), py::arg("params"), py::arg("inputs"), py::arg("train_mode") = false);
    m.def("loss_value", &loss_value);
    m.def(
        "loss_grad",
        [](const NetworkSpec& spec, const ParamVector& params, const Batch& batch) {
            GradResult g = loss_grad(spec, params, batch, Mode::Eval);
            return py::make_tuple(g.loss, g.grad);
        },
        py::arg("spec"), py::arg("params"), py::arg("batch"));
    m.def("per_output_param_jacobian",
          [](const NetworkSpec& spec, const ParamVector& params, const Vec& x) {
              return per_output_param_jacobian(spec, params, x);
          });

    // Landscape
    py::class_<AffineMap>(m, "AffineMap")
        .def(py::init<Mat, Vec>(), py::arg("a"), py::arg("b"))
        .def_property_readonly("a", [](const AffineMap& g) { return g.a; })
        .def_property_readonly("b", [](const AffineMap& g) { return g.b; })
        .def_property_readonly("rank", [](const AffineMap& g) { return g.rank; })
        .def("apply", &AffineMap::apply);
    m.def("embed_affine", &embed_affine, py::arg("affine"), py::arg("spec"), py::arg("omega"),
          py::arg("safety") = 1.0);
    m.def(
        "train_linear",
        [](const Batch& data, int classes, double weight_decay, int rank_cap, int max_iters) {
            auto result = train_linear(data, classes, weight_decay,
                                       rank_cap > 0 ? std::optional<int>(rank_cap) : std::nullopt,
                                       max_iters);
            return py::make_tuple(result.map, result.loss, result.grad_norm, result.converged);
        },
        py::arg("data"), py::arg("classes"), py::arg("weight_decay") = 0.0,
        py::arg("rank_cap") = 0, py::arg("max_iters") = 5000);
    m.def("bias_shift_init", &bias_shift_init);
    m.def("bias_uniform_init", &bias_uniform_init);

    // Spectral
    py::class_<SpectrumEstimate>(m, "SpectrumEstimate")
        .def_readonly("eigenvalue", &SpectrumEstimate::eigenvalue)
        .def_readonly("iterations", &SpectrumEstimate::iterations)
        .def_readonly("residual", &SpectrumEstimate::residual)
        .def_readonly("converged", &SpectrumEstimate::converged)
        .def("__repr__", [](const SpectrumEstimate& e) {
            return "SpectrumEstimate(" + std::to_string(e.eigenvalue) + ")";
        });
    m.def(
        "hessian_extremes",
        [](const NetworkSpec& spec, const ParamVector& params, const Batch& data, int iters,
           std::uint64_t seed) {
            HvpFn op = make_loss_hvp(spec, params, data);
            return py::make_tuple(power_min_shifted(op, params.values.size(), iters, 1e-7, seed),
                                  power_max(op, params.values.size(), iters, 1e-7, seed));
        },
        py::arg("spec"), py::arg("params"), py::arg("data"), py::arg("iters") = 500,
        py::arg("seed") = 0);

    // NTK
    py::class_<NTKSlice>(m, "NTKSlice")
        .def_property_readonly("gram", [](const NTKSlice& s) { return s.gram; })
        .def_property_readonly("tensor", &ntk_tensor)
        .def_readonly("num_images", &NTKSlice::num_images)
        .def_readonly("outputs", &NTKSlice::outputs)
        .def_readonly("param_count", &NTKSlice::param_count)
        .def("frobenius_norm", &NTKSlice::frobenius_norm);
    m.def(
        "sample_ntk",
        [](const NetworkSpec& spec, const ParamVector& params, const Mat& images) {
            return sample_ntk(spec, params, images);
        },
        py::arg("spec"), py::arg("params"), py::arg("images"));
    m.def("relative_change", &relative_change);
    m.def("correlation", &correlation);

    // Rank
    m.def(
        "conv_singular_values",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> kernel, int n) {
            return conv_singular_values(kernel_from_array(kernel), n).values;
        },
        py::arg("kernel"), py::arg("n"));
    m.def("effective_rank", static_cast<double (*)(const std::vector<double>&)>(&effective_rank));
    m.def("dense_singular_values",
          [](const Mat& w) { return dense_singular_values(w).values; });
    m.def("clip_low", [](const Mat& w, double tau) { return clip_low(w, tau); });
    m.def("clip_high", [](const Mat& w, double c) { return clip_high(w, c); });
    m.def("conv_clip_low",
          [](py::array_t<double, py::array::c_style | py::array::forcecast> kernel, int n,
             double tau) { return kernel_to_array(clip_low(kernel_from_array(kernel), n, tau)); });
    m.def("conv_clip_high",
          [](py::array_t<double, py::array::c_style | py::array::forcecast> kernel, int n,
             double c) { return kernel_to_array(clip_high(kernel_from_array(kernel), n, c)); });

    // Regularizers / attacks
    m.def("norm_bias_value_grad", &norm_bias_value_grad);
    m.def("mu_heuristic", &mu_heuristic);
    m.def("lr_schedule", static_cast<double (*)(const std::string&, int)>(&lr_schedule));
    py::class_<AttackConfig>(m, "AttackConfig")
        .def(py::init([](double epsilon, double step_size, int steps, bool random_start,
                         std::uint64_t seed) {
                 return AttackConfig{epsilon, step_size, steps, random_start, seed};
             }),
             py::arg("epsilon") = 8.0 / 255.0, py::arg("step_size") = 2.0 / 255.0,
             py::arg("steps") = 7, py::arg("random_start") = false, py::arg("seed") = 0)
        .def_readonly("epsilon", &AttackConfig::epsilon)
        .def_readonly("steps", &AttackConfig::steps);
    m.def(
        "pgd_attack",
        [](const NetworkSpec& spec, const ParamVector& params, const Batch& batch,
           const AttackConfig& cfg) { return pgd_attack(spec, params, batch, cfg); },
        py::arg("spec"), py::arg("params"), py::arg("batch"), py::arg("cfg"));

    // Datasets
    m.def("load_cifar10", &load_cifar10);
    m.def("synth_dataset", &synth_dataset, py::arg("classes"), py::arg("dim"),
          py::arg("per_class"), py::arg("separation"), py::arg("seed") = 0);
    m.def("synth_xor", &synth_xor, py::arg("dim"), py::arg("per_quadrant"), py::arg("separation"),
          py::arg("seed") = 0);
}
