#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace dpd {

struct OptimOptions {
    int max_iter = 500;
    double grad_tol = 1e-8;   // relative to 1 + |f|
    double step_tol = 1e-10;
};

struct OptimResult {
    Eigen::VectorXd x;
    double f = 0.0;
    Eigen::VectorXd grad;
    double criterion = 0.0;  // norm used for the convergence test
    int iterations = 0;
    bool converged = false;
    std::string message;
};

// Objective returning f(x) and filling grad when non-null. Non-finite values are treated as +inf.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;
// Maps (x, grad) to the norm compared against grad_tol; defaults to the Euclidean gradient norm.
using Criterion = std::function<double(const Eigen::VectorXd& x, const Eigen::VectorXd& grad)>;

// BFGS with Armijo backtracking. h0_inverse seeds the inverse-Hessian approximation (identity
// when empty). When the line search stalls before the gradient test passes, Newton steps on a
// finite-difference Hessian of the gradient are attempted before giving up.
OptimResult bfgs_minimize(const Objective& f, const Eigen::VectorXd& x0, const Eigen::MatrixXd& h0_inverse,
                          const OptimOptions& opts = {}, const Criterion& crit = {});

}  // namespace dpd
