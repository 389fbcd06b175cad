#pragma once

// Dense linear MMSE reference for  x = A s + n,  y = H x + m,  s ~ N(0, sigma_s^2 I).
//
//   s_hat = [I/sigma_s^2 + G^H S^-1 G]^-1 G^H S^-1 y,   G = H A,
//   S     = sigma_n^2 H H^H + sigma_m^2 I.
//
// Used as the correctness oracle for GBP and, with H = I and sigma_m^2 = 0,
// as the estimator that sees the measurements directly.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/SVD>

#include "crangbp/factor_graph.hpp"
#include "crangbp/gaussian.hpp"

namespace crangbp {

class IllConditioned : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <FieldScalar Scalar>
struct DenseModel {
    Matrix<Scalar> A;  // M x N
    Matrix<Scalar> H;  // L x M
    Vector<Scalar> y;  // L
    double sigma_n_sq = 0.0;
    double sigma_m_sq = 0.0;
    double sigma_s_sq = 1e4;

    void check() const {
        if (H.cols() != A.rows() || y.size() != H.rows()) {
            throw std::invalid_argument("inconsistent model dimensions");
        }
        if (!(sigma_n_sq >= 0.0) || !(sigma_m_sq >= 0.0) || !(sigma_s_sq > 0.0)) {
            throw std::invalid_argument("variances must be non-negative (prior positive)");
        }
    }
};

template <FieldScalar Scalar>
struct Posterior {
    Vector<Scalar> mean;
    Eigen::VectorXd variances;
};

struct RankInfo {
    bool observable = false;
    Index rank = 0;
};

/// Numerical rank by singular-value thresholding:
///   tol = max(rows, cols) * eps * sigma_max * threshold_scale.
/// Observable iff the rank equals the number of columns.
template <typename Derived>
RankInfo is_observable(const Eigen::MatrixBase<Derived>& G, double threshold_scale = 1e3) {
    using MatrixType = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    RankInfo info;
    if (G.rows() == 0 || G.cols() == 0) return info;
    Eigen::BDCSVD<MatrixType> svd(G.eval());
    const auto& sv = svd.singularValues();
    const double largest = sv.size() > 0 ? sv(0) : 0.0;
    const double tol = static_cast<double>(std::max(G.rows(), G.cols())) *
                       std::numeric_limits<double>::epsilon() * largest * threshold_scale;
    for (Index k = 0; k < sv.size(); ++k) {
        if (sv(k) > tol) ++info.rank;
    }
    info.observable = info.rank == G.cols();
    return info;
}

namespace detail {

template <FieldScalar Scalar>
Posterior<Scalar> information_form(const Matrix<Scalar>& G, const Matrix<Scalar>& noise_cov,
                                   const Vector<Scalar>& y, double sigma_s_sq) {
    const Index N = G.cols();
    Eigen::LLT<Matrix<Scalar>> noise(noise_cov);
    if (noise.info() != Eigen::Success || noise.rcond() < 1e-14) {
        throw IllConditioned("received-noise covariance is numerically singular");
    }
    const Matrix<Scalar> whitened = noise.solve(G);  // S^-1 G
    Matrix<Scalar> info = G.adjoint() * whitened;
    info.diagonal().array() += Scalar(1.0 / sigma_s_sq);
    const Vector<Scalar> rhs = whitened.adjoint() * y;
    Eigen::LLT<Matrix<Scalar>> chol(info);
    if (chol.info() != Eigen::Success) throw IllConditioned("posterior information matrix is not positive definite");
    Posterior<Scalar> post;
    post.mean = chol.solve(rhs);
    const Matrix<Scalar> cov = chol.solve(Matrix<Scalar>::Identity(N, N));
    post.variances = cov.diagonal().real();
    return post;
}

}  // namespace detail

/// Posterior mean and per-state variances, information (normal-equation) form.
template <FieldScalar Scalar>
Posterior<Scalar> mmse_posterior(const DenseModel<Scalar>& model) {
    model.check();
    const Matrix<Scalar> G = model.H * model.A;
    Matrix<Scalar> noise_cov = model.sigma_n_sq * (model.H * model.H.adjoint());
    noise_cov.diagonal().array() += Scalar(model.sigma_m_sq);
    return detail::information_form<Scalar>(G, noise_cov, model.y, model.sigma_s_sq);
}

template <FieldScalar Scalar>
Vector<Scalar> mmse_estimate(const DenseModel<Scalar>& model) {
    return mmse_posterior(model).mean;
}

/// Same estimator through Gaussian conditioning on the joint (s, y):
///   s_hat = sigma_s^2 G^H (sigma_s^2 G G^H + S)^-1 y.
template <FieldScalar Scalar>
Vector<Scalar> mmse_estimate_conditioning(const DenseModel<Scalar>& model) {
    model.check();
    const Matrix<Scalar> G = model.H * model.A;
    Matrix<Scalar> cov = model.sigma_s_sq * (G * G.adjoint()) +
                         model.sigma_n_sq * (model.H * model.H.adjoint());
    cov.diagonal().array() += Scalar(model.sigma_m_sq);
    Eigen::LDLT<Matrix<Scalar>> ldlt(cov);
    if (ldlt.info() != Eigen::Success) throw IllConditioned("observation covariance is singular");
    return model.sigma_s_sq * (G.adjoint() * ldlt.solve(model.y));
}

/// Estimate from measurements delivered exactly (H = I, no channel noise).
template <FieldScalar Scalar>
Posterior<Scalar> baseline_posterior(const Matrix<Scalar>& A, const Vector<Scalar>& x_noisy,
                                     double sigma_n_sq, double sigma_s_sq) {
    if (x_noisy.size() != A.rows()) throw std::invalid_argument("x has the wrong length");
    if (!(sigma_n_sq > 0.0) || !(sigma_s_sq > 0.0)) {
        throw std::invalid_argument("variances must be positive");
    }
    const Index M = A.rows();
    Matrix<Scalar> noise_cov = Matrix<Scalar>::Identity(M, M) * Scalar(sigma_n_sq);
    return detail::information_form<Scalar>(A, noise_cov, x_noisy, sigma_s_sq);
}

template <FieldScalar Scalar>
Vector<Scalar> baseline_estimate_no_cran(const Matrix<Scalar>& A, const Vector<Scalar>& x_noisy,
                                         double sigma_n_sq, double sigma_s_sq) {
    return baseline_posterior<Scalar>(A, x_noisy, sigma_n_sq, sigma_s_sq).mean;
}

/// The dense model a graph encodes (F_x factors are assumed uninformative).
template <FieldScalar Scalar>
DenseModel<Scalar> to_dense_model(const FactorGraph<Scalar>& graph) {
    return {Matrix<Scalar>(graph.measurement_matrix()), Matrix<Scalar>(graph.channel_matrix()),
            graph.observations(), graph.params().sigma_n_sq, graph.params().sigma_m_sq,
            graph.params().sigma_s_sq};
}

}  // namespace crangbp
