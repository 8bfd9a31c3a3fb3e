#include "dpd/restrict.hpp"

#include <cmath>

#include "dpd/error.hpp"
#include "dpd/linalg.hpp"
#include "fit_engine.hpp"

namespace dpd {

namespace {

detail::Reparam reparam_for(const Model& m, const LinearConstraint& c) {
    detail::Reparam rp;
    const auto p = c.L.rows();
    if (c.r() == 0) {
        rp.offset = Eigen::VectorXd::Zero(p);
    } else {
        rp.offset = c.L * (c.L.transpose() * c.L).ldlt().solve(c.l0);
    }
    rp.basis = linalg::null_space_basis(c.L);
    rp.free_scale = m.free_scale();
    return rp;
}

// Likelihood (tau = 0) restricted estimate, used as the anchor start.
ParamVector restricted_start(const Model& m, const Dataset& d, const LinearConstraint& c, const detail::Reparam& rp,
                             const OptimOptions& opts) {
    const ParamVector un = likelihood_start(m, d);
    if (m.family() == Family::NormalLinear) {
        ParamVector t{un.beta, std::nullopt};
        if (c.r() > 0) {
            const Eigen::MatrixXd xtx_inv = linalg::spd_inverse(d.X.transpose() * d.X, "X'X");
            const Eigen::MatrixXd lxl = c.L.transpose() * xtx_inv * c.L;
            t.beta = un.beta - xtx_inv * c.L * lxl.ldlt().solve(c.L.transpose() * un.beta - c.l0);
            // Remove rounding drift off the constraint surface.
            t.beta = rp.offset + rp.basis * (rp.basis.transpose() * (t.beta - rp.offset));
        }
        if (m.free_scale()) {
            const double rss = (d.y - d.X * t.beta).squaredNorm();
            t.scale = std::max(std::sqrt(rss / d.n()), 1e-8 * (1.0 + d.y.cwiseAbs().maxCoeff()));
        }
        return t;
    }
    ParamVector proj{rp.offset + rp.basis * (rp.basis.transpose() * (un.beta - rp.offset)), std::nullopt};
    const detail::EngineResult r = detail::minimize_from(m, d, 0.0, rp, rp.z_of(proj), opts);
    return r.theta;
}

}  // namespace

void LinearConstraint::validate(const Model& m, int p) const {
    require(L.rows() == p, "constraint matrix L must have one row per coefficient");
    require(l0.size() == L.cols(), "l0 must have one entry per constraint column");
    require(L.allFinite() && l0.allFinite(), "constraint entries must be finite");
    if (r() > 0) require(linalg::numerical_rank(L) == r(), "constraint matrix L is not of full column rank");
    switch (scale_role) {
        case ScaleRole::Free: require(m.free_scale(), "scale role 'free' needs a normal model with unknown sigma"); break;
        case ScaleRole::Fixed:
            require(m.family() == Family::NormalLinear && m.known_sigma().has_value(),
                    "scale role 'fixed' needs a normal model with known sigma");
            break;
        case ScaleRole::Absent:
            require(m.family() != Family::NormalLinear, "scale role 'absent' applies to discrete families");
            break;
    }
}

LinearConstraint LinearConstraint::pin(const Eigen::VectorXd& beta0, ScaleRole role) {
    const auto p = beta0.size();
    return LinearConstraint{Eigen::MatrixXd::Identity(p, p), beta0, role};
}

LinearConstraint LinearConstraint::none(int p, ScaleRole role) {
    return LinearConstraint{Eigen::MatrixXd(p, 0), Eigen::VectorXd(0), role};
}

ScaleRole LinearConstraint::role_for(const Model& m) {
    if (m.family() != Family::NormalLinear) return ScaleRole::Absent;
    return m.free_scale() ? ScaleRole::Free : ScaleRole::Fixed;
}

Eigen::MatrixXd upsilon_matrix(const Model& m, const LinearConstraint& c) {
    const auto p = c.L.rows();
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(m.dim(static_cast<int>(p)), c.r());
    u.topRows(p) = c.L;
    return u;
}

Eigen::MatrixXd tangent_basis(const Model& m, const LinearConstraint& c) {
    const auto p = c.L.rows();
    const Eigen::MatrixXd b = linalg::null_space_basis(c.L);
    const int extra = m.free_scale() ? 1 : 0;
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(p + extra, b.cols() + extra);
    t.topLeftCorner(p, b.cols()) = b;
    if (extra) t(p, b.cols()) = 1.0;
    return t;
}

namespace {

// H^-1 [I - U (U' H^-1 U)^-1 U' H^-1] written as T (T' H T)^-1 T' with T spanning the tangent
// space, so only the restriction of H to the constraint surface has to be positive definite.
Eigen::MatrixXd pn_from_hessian(const Model& m, const Eigen::MatrixXd& h, double tau, const LinearConstraint& c) {
    const Eigen::MatrixXd t = tangent_basis(m, c);
    if (t.cols() == 0) return Eigen::MatrixXd::Zero(h.rows(), h.cols());
    const Eigen::MatrixXd ht = linalg::spd_inverse(t.transpose() * h * t, "Hessian of H_n on the constraint surface");
    return (1.0 + tau) * t * ht * t.transpose();
}

}  // namespace

Eigen::MatrixXd pn_matrix_expected(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double tau,
                                   const LinearConstraint& c) {
    return linalg::symmetrize(pn_from_hessian(m, (1.0 + tau) * j_matrix_n(m, X, theta, tau), tau, c));
}

Eigen::MatrixXd pn_matrix_at(const Model& m, const Dataset& d, const ParamVector& theta, double tau,
                             const LinearConstraint& c, HessianMode mode) {
    if (mode == HessianMode::Expected) return pn_matrix_expected(m, d.X, theta, tau, c);
    return pn_from_hessian(m, hn_hessian(m, d, theta, tau), tau, c);
}

Eigen::MatrixXd pn_matrix(const Model& m, const Dataset& d, const RmdpdeFit& fit, const LinearConstraint& c,
                          HessianMode mode) {
    return pn_matrix_at(m, d, fit.theta_tilde, fit.tau, c, mode);
}

RmdpdeFit fit_rmdpde(const Model& m, const Dataset& d, double tau, const LinearConstraint& c,
                     const std::optional<ParamVector>& init, const FitOptions& opts, HessianMode mode) {
    require(std::isfinite(tau) && tau >= 0.0, "tau must be non-negative");
    require_full_rank(d);
    c.validate(m, d.p());
    for (int i = 0; i < d.n(); ++i) m.check_response(d.y(i));
    const detail::Reparam rp = reparam_for(m, c);
    std::optional<ParamVector> start_init;
    if (init) {
        m.validate(*init, d.p());
        ParamVector proj = *init;
        proj.beta = rp.offset + rp.basis * (rp.basis.transpose() * (init->beta - rp.offset));
        start_init = proj;
    }
    const ParamVector start0 = restricted_start(m, d, c, rp, opts.optim);
    const detail::EngineResult r = detail::multistart(m, d, tau, rp, start0, start_init, opts);

    RmdpdeFit fit;
    fit.theta_tilde = r.theta;
    fit.tau = tau;
    fit.objective_value = r.objective;
    fit.gradient_norm = r.criterion;
    fit.converged = r.converged;
    fit.starts_used = r.starts;
    const Sandwich s = sandwich_at(m, d.X, fit.theta_tilde, tau);
    fit.psi_n = s.psi;
    fit.omega_n = s.omega;
    fit.pn_matrix = pn_matrix_at(m, d, fit.theta_tilde, tau, c, mode);
    fit.cov = linalg::symmetrize(fit.pn_matrix * fit.omega_n * fit.pn_matrix.transpose());
    return fit;
}

double rmdpde_scale_variance(double tau, double sigma) {
    require(tau >= 0.0 && sigma > 0.0, "need tau >= 0 and sigma > 0");
    return upsilon_sigma2(tau, sigma);
}

Eigen::MatrixXd restricted_projection(const Eigen::MatrixXd& X, const Eigen::MatrixXd& L) {
    const auto p = X.cols();
    const Eigen::MatrixXd xtx_inv = linalg::spd_inverse(X.transpose() * X, "X'X");
    if (L.cols() == 0) return Eigen::MatrixXd::Identity(p, p);
    const Eigen::MatrixXd lxl = L.transpose() * xtx_inv * L;
    return Eigen::MatrixXd::Identity(p, p) - L * lxl.ldlt().solve(L.transpose() * xtx_inv);
}

Eigen::MatrixXd composite_projection(const Eigen::MatrixXd& X, const Eigen::MatrixXd& L) {
    const double n = static_cast<double>(X.rows());
    const Eigen::MatrixXd sx_inv = linalg::spd_inverse(X.transpose() * X / n, "Sigma_x");
    if (L.cols() == 0) return Eigen::MatrixXd::Zero(X.cols(), X.cols());
    const Eigen::MatrixXd lsl = L.transpose() * sx_inv * L;
    return L * lsl.ldlt().solve(L.transpose() * sx_inv);
}

}  // namespace dpd
