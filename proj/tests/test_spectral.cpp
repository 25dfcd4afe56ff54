#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "probe/spectral.hpp"

using namespace probe;

namespace {

HvpFn matrix_op(const Mat& m) {
    return [m](const Vec& v) { return Vec(m * v); };
}

// Small MLP problem shared by the oracle comparisons.
struct TinyProblem {
    NetworkSpec spec = mlp_spec(4, {6}, 3);
    ParamVector params = init_params(spec, InitScheme::Default, 17);
    Batch data = oracles::random_batch(30, 4, 3, 18);
};

}  // namespace

TEST_CASE("fd_hvp on a quadratic loss reproduces the matrix exactly") {
    Mat m(3, 3);
    m << 4.0, 1.0, 0.0, 1.0, -2.0, 0.5, 0.0, 0.5, 7.0;
    GradFn grad = [&](const Vec& phi) { return Vec(m * phi); };
    Vec phi(3), v(3);
    phi << 0.3, -1.0, 2.0;
    v << 1.0, 2.0, -0.5;
    CHECK((fd_hvp(grad, phi, v) - m * v).norm() < 1e-8);
}

TEST_CASE("hvp is linear in its probe vector") {
    TinyProblem prob;
    Vec v = Vec::Random(prob.params.size());
    Vec h1 = hvp(prob.spec, prob.params, prob.data, v);
    Vec h3 = hvp(prob.spec, prob.params, prob.data, Vec(3.0 * v));
    CHECK((h3 - 3.0 * h1).norm() / h1.norm() < 1e-6);
}

TEST_CASE("hvp rejects a zero probe vector") {
    TinyProblem prob;
    CHECK_THROWS_AS(hvp(prob.spec, prob.params, prob.data, Vec::Zero(prob.params.size())),
                    ArgumentError);
}

TEST_CASE("hvp matches the dense oracle on a width-6 MLP") {
    TinyProblem prob;
    Mat dense = dense_hessian(prob.spec, prob.params, prob.data);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    Vec v(prob.params.size());
    for (std::ptrdiff_t i = 0; i < v.size(); ++i) v(i) = gauss(rng);
    Vec via_op = hvp(prob.spec, prob.params, prob.data, v);
    Vec via_dense = dense * v;
    CHECK((via_op - via_dense).norm() / via_dense.norm() < 1e-4);
}

TEST_CASE("power_max finds the dominant eigenvalue with its sign") {
    SUBCASE("diag(3,1,-2) -> 3") {
        Vec d(3);
        d << 3.0, 1.0, -2.0;
        SpectrumEstimate est = power_max(matrix_op(d.asDiagonal()), 3, 500, 1e-10, 1);
        CHECK(est.eigenvalue == doctest::Approx(3.0).epsilon(1e-7));
        CHECK(est.converged);
        CHECK(est.residual <= 1e-10);
    }
    SUBCASE("diag(2,-5) -> -5, dominant magnitude negative") {
        Vec d(2);
        d << 2.0, -5.0;
        SpectrumEstimate est = power_max(matrix_op(d.asDiagonal()), 2, 500, 1e-10, 1);
        CHECK(est.eigenvalue == doctest::Approx(-5.0).epsilon(1e-7));
    }
}

TEST_CASE("power_min_shifted recovers the minimum eigenvalue") {
    SUBCASE("diag(3,1,-2) -> -2") {
        Vec d(3);
        d << 3.0, 1.0, -2.0;
        SpectrumEstimate est = power_min_shifted(matrix_op(d.asDiagonal()), 3, 500, 1e-10, 2);
        CHECK(est.eigenvalue == doctest::Approx(-2.0).epsilon(1e-7));
    }
    SUBCASE("PSD quadratic stays nonnegative") {
        Mat root = Mat::Random(4, 4);
        Mat psd = root.transpose() * root;
        SpectrumEstimate est = power_min_shifted(matrix_op(psd), 4, 2000, 1e-12, 3);
        CHECK(est.eigenvalue >= -1e-8);
    }
}

TEST_CASE("power methods agree with a dense eigendecomposition on a tiny MLP") {
    TinyProblem prob;
    HvpFn op = make_loss_hvp(prob.spec, prob.params, prob.data);
    Mat dense = dense_hessian(op, prob.params.size());
    Eigen::SelfAdjointEigenSolver<Mat> eig(dense);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    const double dominant = std::abs(lo) > std::abs(hi) ? lo : hi;

    SpectrumEstimate max_est = power_max(op, prob.params.size(), 3000, 1e-10, 4);
    SpectrumEstimate min_est = power_min_shifted(op, prob.params.size(), 3000, 1e-10, 4);
    CHECK(std::abs(max_est.eigenvalue - dominant) <= 1e-3 * std::abs(dominant));
    CHECK(std::abs(min_est.eigenvalue - lo) <= 1e-3 * std::max(std::abs(lo), 1e-6));
}

TEST_CASE("dense_hessian") {
    SUBCASE("returns the matrix of a quadratic within 1e-8") {
        Mat m(4, 4);
        m.setRandom();
        m = ((m + m.transpose()) / 2.0).eval();
        Mat rebuilt = dense_hessian(matrix_op(m), 4);
        CHECK((rebuilt - m).cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("symmetry defect before symmetrization is small on a tiny MLP") {
        TinyProblem prob;
        HvpFn op = make_loss_hvp(prob.spec, prob.params, prob.data);
        Mat raw(prob.params.size(), prob.params.size());
        Vec e = Vec::Zero(prob.params.size());
        for (std::ptrdiff_t j = 0; j < prob.params.size(); ++j) {
            e(j) = 1.0;
            raw.col(j) = op(e);
            e(j) = 0.0;
        }
        CHECK((raw - raw.transpose()).norm() / raw.norm() <= 1e-4);
    }
    SUBCASE("trace equals the sum of hvp(e_j) . e_j") {
        TinyProblem prob;
        HvpFn op = make_loss_hvp(prob.spec, prob.params, prob.data);
        Mat dense = dense_hessian(op, prob.params.size());
        double trace = 0.0;
        Vec e = Vec::Zero(prob.params.size());
        for (std::ptrdiff_t j = 0; j < prob.params.size(); ++j) {
            e(j) = 1.0;
            trace += op(e)(j);
            e(j) = 0.0;
        }
        CHECK(dense.trace() == doctest::Approx(trace).epsilon(1e-10));
    }
    SUBCASE("refuses P beyond the guard") {
        CHECK_THROWS_AS(dense_hessian(matrix_op(Mat::Identity(2, 2)), 2001), ArgumentError);
    }
}

TEST_CASE("extreme eigenvalues bound Rayleigh quotients of random probes") {
    TinyProblem prob;
    HvpFn op = make_loss_hvp(prob.spec, prob.params, prob.data);
    SpectrumEstimate max_est = power_max(op, prob.params.size(), 3000, 1e-10, 5);
    SpectrumEstimate min_est = power_min_shifted(op, prob.params.size(), 3000, 1e-10, 5);

    std::mt19937_64 rng(6);
    std::normal_distribution<double> gauss;
    const double slack = 1e-6 * (std::abs(max_est.eigenvalue) + std::abs(min_est.eigenvalue));
    for (int probe_i = 0; probe_i < 10; ++probe_i) {
        Vec v(prob.params.size());
        for (std::ptrdiff_t i = 0; i < v.size(); ++i) v(i) = gauss(rng);
        v.normalize();
        const double rayleigh = v.dot(op(v));
        CHECK(rayleigh <= max_est.eigenvalue + slack);
        CHECK(rayleigh >= min_est.eigenvalue - slack);
    }
}
