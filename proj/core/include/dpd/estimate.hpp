#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Dense>

#include "dpd/dataset.hpp"
#include "dpd/model.hpp"
#include "dpd/optimize.hpp"

namespace dpd {

struct FitOptions {
    int restarts = 5;                 // random perturbation restarts
    bool continuation = true;         // warm starts along a tau grid from tau = 0
    double continuation_step = 0.1;
    double restart_spread = 3.0;      // perturbation size in asymptotic standard errors
    std::uint64_t seed = 0x5eed5eedULL;
    OptimOptions optim;
};

struct MdpdeFit {
    ParamVector theta_hat;
    double tau = 0.0;
    double objective_value = 0.0;
    double gradient_norm = 0.0;
    Eigen::MatrixXd psi_n;
    Eigen::MatrixXd omega_n;
    Eigen::MatrixXd cov;   // asymptotic covariance of sqrt(n)(theta_hat - theta): psi^-1 omega psi^-1
    bool converged = false;
    int starts_used = 0;
    int iterations = 0;

    Eigen::VectorXd std_errors(int n) const;
};

struct Sandwich {
    Eigen::MatrixXd psi;
    Eigen::MatrixXd omega;
    Eigen::MatrixXd cov;
};

// H_n(theta); at tau = 0 the likelihood form -(1/n) sum log f_i(Y_i).
double hn_objective(const Model& m, const Dataset& d, const ParamVector& theta, double tau);
Eigen::VectorXd hn_gradient(const Model& m, const Dataset& d, const ParamVector& theta, double tau);
// Objective and gradient in one pass.
double hn_value_gradient(const Model& m, const Dataset& d, const ParamVector& theta, double tau,
                         Eigen::VectorXd* grad);
// Observed Hessian of H_n by central differences of the analytic gradient.
Eigen::MatrixXd hn_hessian(const Model& m, const Dataset& d, const ParamVector& theta, double tau);

// The tau = 0 estimate: least squares (sigma^2 = RSS/n) or IRLS.
ParamVector likelihood_start(const Model& m, const Dataset& d);

MdpdeFit fit_mdpde(const Model& m, const Dataset& d, double tau, const std::optional<ParamVector>& init = {},
                   const FitOptions& opts = {});

// Psi_n, Omega_n and the sandwich at any theta under the model-trusted plug-in.
Sandwich sandwich_at(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double tau);
Sandwich sandwich(const Model& m, const Dataset& d, const MdpdeFit& fit);

// Per-observation estimating function D_i(t) = f_i(t)^tau u_i(t) - xi_i at theta.
Eigen::VectorXd estimating_function(const Model& m, const Eigen::Ref<const Eigen::RowVectorXd>& x, double t,
                                    const ParamVector& theta, double tau);

}  // namespace dpd
