#pragma once

#include <Eigen/Dense>

namespace dpd::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd symmetrize(const MatrixXd& a);

// Inverse of a symmetric positive definite matrix; throws NumericalError if not PD.
MatrixXd spd_inverse(const MatrixXd& a, const char* what = "matrix");

// Symmetric square root of a PSD matrix (negative eigenvalues clipped to zero).
MatrixXd psd_sqrt(const MatrixXd& a);

// Moore-Penrose pseudo-inverse of the PSD square root, eigenvalues below rel_tol * max dropped.
MatrixXd psd_pinv_sqrt(const MatrixXd& a, double rel_tol = 1e-10);

// Orthonormal basis of the orthogonal complement of span(L); L is p x r of full column rank.
MatrixXd null_space_basis(const MatrixXd& l);

// Numerical rank with relative tolerance on the pivoted QR diagonal.
int numerical_rank(const MatrixXd& a, double rel_tol = 1e-10);

double condition_number(const MatrixXd& a);

// Central finite-difference Jacobian of f: R^d -> R^m.
template <class F>
MatrixXd fd_jacobian(const F& f, const VectorXd& x, double rel_step = 1e-5) {
    const VectorXd f0 = f(x);
    MatrixXd jac(f0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = rel_step * std::max(1.0, std::abs(x(j)));
        VectorXd xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        jac.col(j) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return jac;
}

// Central finite-difference gradient of a scalar function.
template <class F>
VectorXd fd_gradient(const F& f, const VectorXd& x, double rel_step = 1e-5) {
    VectorXd g(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = rel_step * std::max(1.0, std::abs(x(j)));
        VectorXd xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        g(j) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

}  // namespace dpd::linalg
