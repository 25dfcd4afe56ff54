#include "probe/spectral.hpp"

#include <cmath>
#include <random>

namespace probe {

Vec fd_hvp(const GradFn& grad_fn, const Vec& phi, const Vec& v, double h_scale) {
    const double vnorm = v.norm();
    if (vnorm <= 0.0) throw ArgumentError("hvp: probe vector has zero norm");
    const Vec u = v / vnorm;
    const double h = h_scale * (1.0 + phi.norm());

    Vec gp = grad_fn(phi + h * u);
    Vec gm = grad_fn(phi - h * u);
    Vec result = (gp - gm) * (vnorm / (2.0 * h));
    if (!result.allFinite())
        throw NumericError("hvp: non-finite result (h=" + std::to_string(h) + ")");
    return result;
}

Vec hvp(const NetworkSpec& spec, const ParamVector& params, const Batch& dataset, const Vec& v,
        double h_scale, BnState* bn) {
    GradFn grad_fn = [&](const Vec& phi) {
        ParamVector shifted = params;
        shifted.values = phi;
        return loss_grad(spec, shifted, dataset, Mode::Eval, bn).grad;
    };
    return fd_hvp(grad_fn, params.values, v, h_scale);
}

HvpFn make_loss_hvp(const NetworkSpec& spec, const ParamVector& params, const Batch& dataset,
                    double h_scale, BnState* bn) {
    return [=, &dataset](const Vec& v) { return hvp(spec, params, dataset, v, h_scale, bn); };
}

namespace {

SpectrumEstimate power_iterate(const HvpFn& op, std::ptrdiff_t dim, int iters, double tol,
                               std::uint64_t seed) {
    if (dim < 1) throw ArgumentError("power iteration needs dim >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec v(dim);
    for (std::ptrdiff_t i = 0; i < dim; ++i) v(i) = gauss(rng);
    v.normalize();

    SpectrumEstimate est;
    Vec w;
    for (int it = 0; it < iters; ++it) {
        w = op(v);
        est.eigenvalue = v.dot(w);  // Rayleigh quotient, v is unit
        est.residual = (w - est.eigenvalue * v).norm();
        est.iterations = it + 1;
        if (est.residual <= tol) {
            est.converged = true;
            break;
        }
        const double wnorm = w.norm();
        if (wnorm == 0.0) {
            // v is in the kernel; eigenvalue 0 is exact.
            est.eigenvalue = 0.0;
            est.residual = 0.0;
            est.converged = true;
            break;
        }
        v = w / wnorm;
    }
    return est;
}

}  // namespace

SpectrumEstimate power_max(const HvpFn& op, std::ptrdiff_t dim, int iters, double tol,
                           std::uint64_t seed) {
    return power_iterate(op, dim, iters, tol, seed);
}

SpectrumEstimate power_min_shifted(const HvpFn& op, std::ptrdiff_t dim, int iters, double tol,
                                   std::uint64_t seed) {
    SpectrumEstimate dominant = power_iterate(op, dim, iters, tol, seed);
    const double sigma = 1.01 * std::abs(dominant.eigenvalue);
    HvpFn shifted = [&](const Vec& v) { return Vec(sigma * v - op(v)); };
    SpectrumEstimate top = power_iterate(shifted, dim, iters, tol, seed + 1);
    SpectrumEstimate est;
    est.eigenvalue = sigma - top.eigenvalue;
    est.iterations = dominant.iterations + top.iterations;
    est.residual = top.residual;  // ||(sigma I - H)v - mu v|| == ||Hv - (sigma-mu) v||
    est.converged = top.converged;
    return est;
}

Mat dense_hessian(const HvpFn& op, std::ptrdiff_t dim) {
    if (dim > 2000)
        throw ArgumentError("dense_hessian guarded to P <= 2000, got P=" + std::to_string(dim));
    Mat h(dim, dim);
    Vec e = Vec::Zero(dim);
    for (std::ptrdiff_t j = 0; j < dim; ++j) {
        e(j) = 1.0;
        h.col(j) = op(e);
        e(j) = 0.0;
    }
    return 0.5 * (h + h.transpose());
}

Mat dense_hessian(const NetworkSpec& spec, const ParamVector& params, const Batch& dataset,
                  double h_scale, BnState* bn) {
    return dense_hessian(make_loss_hvp(spec, params, dataset, h_scale, bn), params.values.size());
}

}  // namespace probe
