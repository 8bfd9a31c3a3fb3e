#pragma once

// Shared driver for the unrestricted and restricted fits: H_n minimized over
// theta(z) = (offset + B z_beta, exp(z_scale)).

#include <vector>

#include "dpd/estimate.hpp"

namespace dpd::detail {

struct Reparam {
    Eigen::VectorXd offset;   // p
    Eigen::MatrixXd basis;    // p x k, orthonormal columns
    bool free_scale = false;

    static Reparam identity(const Model& m, int p);
    int zdim() const { return static_cast<int>(basis.cols()) + (free_scale ? 1 : 0); }
    ParamVector theta(const Eigen::VectorXd& z) const;
    Eigen::VectorXd z_of(const ParamVector& theta) const;
    // d theta / d z at z.
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const;
};

struct EngineResult {
    ParamVector theta;
    double objective = 0.0;
    double criterion = 0.0;   // norm of (B' grad_beta, grad_scale)
    bool converged = false;
    int starts = 0;
    int iterations = 0;
};

EngineResult minimize_from(const Model& m, const Dataset& d, double tau, const Reparam& rp,
                           const Eigen::VectorXd& z0, const OptimOptions& opts);

// Multi-start: the tau = 0 start, an optional user start, the tau-continuation path and random
// perturbations. Returns the converged candidate with the smallest objective.
EngineResult multistart(const Model& m, const Dataset& d, double tau, const Reparam& rp, const ParamVector& start0,
                        const std::optional<ParamVector>& init, const FitOptions& opts);

}  // namespace dpd::detail
