#pragma once

#include <optional>

#include <Eigen/Dense>

#include "dpd/estimate.hpp"

namespace dpd {

enum class ScaleRole { Free, Fixed, Absent };

// H0: L' beta = l0, L p x r of full column rank.
struct LinearConstraint {
    Eigen::MatrixXd L;
    Eigen::VectorXd l0;
    ScaleRole scale_role = ScaleRole::Free;

    int r() const { return static_cast<int>(L.cols()); }
    // Checks dimensions, rank, and that the scale role fits the model.
    void validate(const Model& m, int p) const;

    static LinearConstraint pin(const Eigen::VectorXd& beta0, ScaleRole role);      // L = I_p
    static LinearConstraint none(int p, ScaleRole role);                             // r = 0
    static ScaleRole role_for(const Model& m);
};

enum class HessianMode { Expected, Observed };

struct RmdpdeFit {
    ParamVector theta_tilde;
    double tau = 0.0;
    double objective_value = 0.0;
    double gradient_norm = 0.0;   // reduced gradient (B' grad_beta, grad_scale)
    Eigen::MatrixXd pn_matrix;
    Eigen::MatrixXd psi_n;
    Eigen::MatrixXd omega_n;
    Eigen::MatrixXd cov;          // P Omega P
    bool converged = false;
    int starts_used = 0;
};

RmdpdeFit fit_rmdpde(const Model& m, const Dataset& d, double tau, const LinearConstraint& c,
                     const std::optional<ParamVector>& init = {}, const FitOptions& opts = {},
                     HessianMode mode = HessianMode::Expected);

// Upsilon = d(L'beta - l0)/d theta, a dim x r matrix ([L; 0] when the scale is free).
Eigen::MatrixXd upsilon_matrix(const Model& m, const LinearConstraint& c);
// Orthonormal basis of the constraint tangent space in theta coordinates, dim x (dim - r).
Eigen::MatrixXd tangent_basis(const Model& m, const LinearConstraint& c);

// P_n at theta. Expected mode replaces the Hessian of H_n by (1+tau) Psi_n.
Eigen::MatrixXd pn_matrix_at(const Model& m, const Dataset& d, const ParamVector& theta, double tau,
                             const LinearConstraint& c, HessianMode mode = HessianMode::Expected);
// Expected-Hessian P_n from the design alone.
Eigen::MatrixXd pn_matrix_expected(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double tau,
                                   const LinearConstraint& c);
Eigen::MatrixXd pn_matrix(const Model& m, const Dataset& d, const RmdpdeFit& fit, const LinearConstraint& c,
                          HessianMode mode = HessianMode::Expected);

// Asymptotic variance of the (restricted or unrestricted) estimator of sigma^2 under the normal model.
double rmdpde_scale_variance(double tau, double sigma);

// Normal-regression projections: I - L {L'(X'X)^-1 L}^-1 L'(X'X)^-1, and
// L [L' Sx^-1 L]^-1 L' Sx^-1 with Sx = X'X/n.
Eigen::MatrixXd restricted_projection(const Eigen::MatrixXd& X, const Eigen::MatrixXd& L);
Eigen::MatrixXd composite_projection(const Eigen::MatrixXd& X, const Eigen::MatrixXd& L);

}  // namespace dpd
