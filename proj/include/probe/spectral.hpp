#pragma once

#include <cstdint>
#include <functional>

#include "probe/net.hpp"

namespace probe {

struct SpectrumEstimate {
    double eigenvalue = 0.0;
    int iterations = 0;
    double residual = 0.0;  // ||Hv - lambda v|| / ||v||
    bool converged = false;
};

// Action of a symmetric operator on a vector.
using HvpFn = std::function<Vec(const Vec&)>;
using GradFn = std::function<Vec(const Vec&)>;

// Central finite difference of a gradient function:
// (grad(phi + h u) - grad(phi - h u)) / (2h) * ||v|| with u = v/||v|| and
// h = h_scale * (1 + ||phi||).
Vec fd_hvp(const GradFn& grad_fn, const Vec& phi, const Vec& v, double h_scale = 1e-4);

// Hessian-vector product of the mean training loss over the full dataset.
Vec hvp(const NetworkSpec& spec, const ParamVector& params, const Batch& dataset, const Vec& v,
        double h_scale = 1e-4, BnState* bn = nullptr);

// Closure over (spec, params, dataset) for the power methods below.
HvpFn make_loss_hvp(const NetworkSpec& spec, const ParamVector& params, const Batch& dataset,
                    double h_scale = 1e-4, BnState* bn = nullptr);

// Dominant-|lambda| eigenvalue by normalized power iteration from a seeded
// random start; sign recovered from the Rayleigh quotient.
SpectrumEstimate power_max(const HvpFn& op, std::ptrdiff_t dim, int iters = 500, double tol = 1e-7,
                           std::uint64_t seed = 0);

// Minimum eigenvalue via the shifted power method: estimates the dominant
// eigenvalue, shifts by sigma = 1.01 |lambda_dom|, and runs power iteration
// on (sigma I - H).
SpectrumEstimate power_min_shifted(const HvpFn& op, std::ptrdiff_t dim, int iters = 500,
                                   double tol = 1e-7, std::uint64_t seed = 0);

// Test oracle: full P x P Hessian from hvp columns, symmetrized as
// (H + H^T)/2. Guarded to P <= 2000.
Mat dense_hessian(const HvpFn& op, std::ptrdiff_t dim);
Mat dense_hessian(const NetworkSpec& spec, const ParamVector& params, const Batch& dataset,
                  double h_scale = 1e-4, BnState* bn = nullptr);

}  // namespace probe
