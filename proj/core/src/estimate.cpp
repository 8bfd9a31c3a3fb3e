#include "dpd/estimate.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "dpd/error.hpp"
#include "dpd/linalg.hpp"
#include "fit_engine.hpp"

namespace dpd {

namespace {

void check_inputs(const Model& m, const Dataset& d, double tau) {
    require(std::isfinite(tau) && tau >= 0.0, "tau must be non-negative");
    require(d.n() > 0 && d.y.size() == d.n(), "dataset is empty or inconsistent");
    for (int i = 0; i < d.n(); ++i) m.check_response(d.y(i));
}

ParamVector irls(const Model& m, const Dataset& d) {
    const int n = d.n(), p = d.p();
    Eigen::VectorXd mu(n), eta(n);
    for (int i = 0; i < n; ++i) {
        const double y = d.y(i);
        mu(i) = m.family() == Family::PoissonLog ? y + 0.5 : (y + 0.5) / 2.0;
        eta(i) = m.family() == Family::PoissonLog ? std::log(mu(i)) : std::log(mu(i) / (1.0 - mu(i)));
    }
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (int it = 0; it < 100; ++it) {
        Eigen::VectorXd w(n), z(n);
        for (int i = 0; i < n; ++i) {
            const double var = m.family() == Family::PoissonLog ? mu(i) : mu(i) * (1.0 - mu(i));
            w(i) = std::max(var, 1e-12);
            z(i) = eta(i) + (d.y(i) - mu(i)) / w(i);
        }
        const Eigen::MatrixXd xw = d.X.transpose() * w.asDiagonal();
        const Eigen::VectorXd next = (xw * d.X).ldlt().solve(xw * z);
        if (!next.allFinite()) break;
        const double change = (next - beta).norm();
        beta = next;
        eta = d.X * beta;
        for (int i = 0; i < n; ++i) {
            eta(i) = std::clamp(eta(i), -30.0, 30.0);
            mu(i) = m.inverse_link(eta(i));
        }
        if (change <= 1e-12 * (1.0 + beta.norm())) break;
    }
    return ParamVector{beta, std::nullopt};
}

}  // namespace

Eigen::VectorXd MdpdeFit::std_errors(int n) const { return (cov.diagonal() / static_cast<double>(n)).cwiseSqrt(); }

double hn_value_gradient(const Model& m, const Dataset& d, const ParamVector& theta, double tau,
                         Eigen::VectorXd* grad) {
    m.validate(theta, d.p());
    const int n = d.n(), p = d.p();
    const double sc = m.scale_of(theta);
    const Eigen::VectorXd eta = d.X * theta.beta;
    double obj = 0.0;
    Eigen::VectorXd coef_s(n);
    double gv = 0.0;
    const double k = tau > 0.0 ? 1.0 + 1.0 / tau : 0.0;
    for (int i = 0; i < n; ++i) {
        const double y = d.y(i);
        const double lf = m.log_density(y, eta(i), sc);
        const ScoreParts u = m.score(y, eta(i), sc);
        if (tau == 0.0) {
            obj -= lf;
            coef_s(i) = -u.s;
            gv -= u.v;
        } else {
            const Moments mo = m.moments(eta(i), sc, tau);
            const double ft = std::exp(tau * lf);
            obj += mo.m0 - k * ft;
            coef_s(i) = -(1.0 + tau) * (ft * u.s - mo.s);
            gv += -(1.0 + tau) * (ft * u.v - mo.v);
        }
    }
    if (grad) {
        grad->resize(m.dim(p));
        grad->head(p) = d.X.transpose() * coef_s / static_cast<double>(n);
        if (m.free_scale()) (*grad)(p) = gv / n;
    }
    return obj / n;
}

double hn_objective(const Model& m, const Dataset& d, const ParamVector& theta, double tau) {
    check_inputs(m, d, tau);
    return hn_value_gradient(m, d, theta, tau, nullptr);
}

Eigen::VectorXd hn_gradient(const Model& m, const Dataset& d, const ParamVector& theta, double tau) {
    check_inputs(m, d, tau);
    Eigen::VectorXd g;
    hn_value_gradient(m, d, theta, tau, &g);
    return g;
}

Eigen::MatrixXd hn_hessian(const Model& m, const Dataset& d, const ParamVector& theta, double tau) {
    check_inputs(m, d, tau);
    auto g = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd out;
        hn_value_gradient(m, d, m.unflatten(v), tau, &out);
        return out;
    };
    return linalg::symmetrize(linalg::fd_jacobian(g, m.flatten(theta), 1e-5));
}

ParamVector likelihood_start(const Model& m, const Dataset& d) {
    require_full_rank(d);
    if (m.family() != Family::NormalLinear) return irls(m, d);
    const Eigen::VectorXd beta = d.X.colPivHouseholderQr().solve(d.y);
    ParamVector t{beta, std::nullopt};
    if (m.free_scale()) {
        const double rss = (d.y - d.X * beta).squaredNorm();
        t.scale = std::max(std::sqrt(rss / d.n()), 1e-8 * (1.0 + d.y.cwiseAbs().maxCoeff()));
    }
    return t;
}

Sandwich sandwich_at(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double tau) {
    const int p = static_cast<int>(X.cols());
    m.validate(theta, p);
    const int dim = m.dim(p);
    const double sc = m.scale_of(theta);
    const Eigen::VectorXd eta = X * theta.beta;
    Sandwich s;
    s.psi = j_matrix_n(m, X, theta, tau);
    Eigen::MatrixXd xixi = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const Moments mo = m.moments(eta(i), sc, tau);
        const Eigen::VectorXd xi = assemble_vector(m, X.row(i), mo.s, mo.v);
        xixi.noalias() += xi * xi.transpose();
    }
    s.omega = linalg::symmetrize(j_matrix_n(m, X, theta, 2.0 * tau) - xixi / static_cast<double>(X.rows()));
    Eigen::MatrixXd pinv;
    try {
        pinv = linalg::spd_inverse(s.psi, "Psi_n");
    } catch (const NumericalError&) {
        std::ostringstream msg;
        msg << "singular Psi_n (condition number " << linalg::condition_number(s.psi) << ")";
        throw NumericalError(msg.str());
    }
    s.cov = linalg::symmetrize(pinv * s.omega * pinv);
    return s;
}

Sandwich sandwich(const Model& m, const Dataset& d, const MdpdeFit& fit) {
    return sandwich_at(m, d.X, fit.theta_hat, fit.tau);
}

Eigen::VectorXd estimating_function(const Model& m, const Eigen::Ref<const Eigen::RowVectorXd>& x, double t,
                                    const ParamVector& theta, double tau) {
    m.check_response(t);
    const double eta = x.dot(theta.beta);
    const double sc = m.scale_of(theta);
    const Moments mo = m.moments(eta, sc, tau);
    const ScoreParts u = m.score(t, eta, sc);
    const double ft = tau == 0.0 ? 1.0 : std::exp(tau * m.log_density(t, eta, sc));
    return assemble_vector(m, x, ft * u.s - mo.s, ft * u.v - mo.v);
}

MdpdeFit fit_mdpde(const Model& m, const Dataset& d, double tau, const std::optional<ParamVector>& init,
                   const FitOptions& opts) {
    check_inputs(m, d, tau);
    require_full_rank(d);
    if (init) m.validate(*init, d.p());
    const ParamVector start0 = likelihood_start(m, d);
    const auto rp = detail::Reparam::identity(m, d.p());
    const detail::EngineResult r = detail::multistart(m, d, tau, rp, start0, init, opts);

    MdpdeFit fit;
    fit.theta_hat = r.theta;
    fit.tau = tau;
    fit.objective_value = r.objective;
    fit.gradient_norm = r.criterion;
    fit.converged = r.converged;
    fit.starts_used = r.starts;
    fit.iterations = r.iterations;
    const Sandwich s = sandwich_at(m, d.X, fit.theta_hat, tau);
    fit.psi_n = s.psi;
    fit.omega_n = s.omega;
    fit.cov = s.cov;
    return fit;
}

namespace detail {

Reparam Reparam::identity(const Model& m, int p) {
    Reparam rp;
    rp.offset = Eigen::VectorXd::Zero(p);
    rp.basis = Eigen::MatrixXd::Identity(p, p);
    rp.free_scale = m.free_scale();
    return rp;
}

ParamVector Reparam::theta(const Eigen::VectorXd& z) const {
    const auto k = basis.cols();
    ParamVector t;
    t.beta = offset + basis * z.head(k);
    if (free_scale) t.scale = std::exp(z(k));
    return t;
}

Eigen::VectorXd Reparam::z_of(const ParamVector& theta) const {
    const auto k = basis.cols();
    Eigen::VectorXd z(zdim());
    z.head(k) = basis.transpose() * (theta.beta - offset);
    if (free_scale) z(k) = std::log(*theta.scale);
    return z;
}

Eigen::MatrixXd Reparam::jacobian(const Eigen::VectorXd& z) const {
    const auto p = basis.rows(), k = basis.cols();
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(p + (free_scale ? 1 : 0), zdim());
    j.topLeftCorner(p, k) = basis;
    if (free_scale) j(p, k) = std::exp(z(k));
    return j;
}

EngineResult minimize_from(const Model& m, const Dataset& d, double tau, const Reparam& rp,
                           const Eigen::VectorXd& z0, const OptimOptions& opts) {
    EngineResult out;
    out.starts = 1;
    const auto k = rp.basis.cols();
    if (rp.zdim() == 0) {
        out.theta = rp.theta(z0);
        out.objective = hn_value_gradient(m, d, out.theta, tau, nullptr);
        out.converged = true;
        return out;
    }
    Objective f = [&](const Eigen::VectorXd& z, Eigen::VectorXd* gz) -> double {
        const ParamVector t = rp.theta(z);
        if (rp.free_scale && !(std::isfinite(*t.scale) && *t.scale > 0.0))
            return std::numeric_limits<double>::infinity();
        Eigen::VectorXd g;
        const double v = hn_value_gradient(m, d, t, tau, gz ? &g : nullptr);
        if (gz) *gz = rp.jacobian(z).transpose() * g;
        return v;
    };
    Criterion crit = [&](const Eigen::VectorXd& z, const Eigen::VectorXd& gz) {
        if (!rp.free_scale) return gz.norm();
        Eigen::VectorXd nat = gz;
        nat(k) /= std::exp(z(k));
        return nat.norm();
    };
    Eigen::MatrixXd h0inv;
    try {
        const ParamVector t0 = rp.theta(z0);
        const Eigen::MatrixXd j = rp.jacobian(z0);
        const Eigen::MatrixXd hz = j.transpose() * ((1.0 + tau) * j_matrix_n(m, d.X, t0, tau)) * j;
        h0inv = linalg::spd_inverse(hz, "initial Hessian");
    } catch (const std::exception&) {
        h0inv.resize(0, 0);
    }
    const OptimResult r = bfgs_minimize(f, z0, h0inv, opts, crit);
    out.theta = rp.theta(r.x);
    out.objective = r.f;
    out.criterion = r.criterion;
    out.converged = r.converged && std::isfinite(r.f);
    out.iterations = r.iterations;
    return out;
}

EngineResult multistart(const Model& m, const Dataset& d, double tau, const Reparam& rp, const ParamVector& start0,
                        const std::optional<ParamVector>& init, const FitOptions& opts) {
    std::vector<Eigen::VectorXd> starts;
    const Eigen::VectorXd z0 = rp.z_of(start0);
    starts.push_back(z0);
    if (init) starts.push_back(rp.z_of(*init));

    // The likelihood objective is convex for all three families; extra starts only matter for tau > 0.
    if (tau > 0.0 && rp.zdim() > 0) {
        if (opts.continuation) {
            Eigen::VectorXd z = z0;
            const int steps = static_cast<int>(std::ceil(tau / opts.continuation_step - 1e-12));
            for (int s = 1; s < steps; ++s) {
                const EngineResult r = minimize_from(m, d, tau * s / steps, rp, z, opts.optim);
                if (std::isfinite(r.objective)) z = rp.z_of(r.theta);
            }
            if (steps > 1) starts.push_back(z);
        }
        if (opts.restarts > 0) {
            Eigen::VectorXd se = Eigen::VectorXd::Ones(rp.zdim());
            try {
                const Eigen::MatrixXd j = rp.jacobian(z0);
                const Eigen::MatrixXd info = j.transpose() * j_matrix_n(m, d.X, start0, 0.0) * j;
                se = (linalg::spd_inverse(info).diagonal() / d.n()).cwiseSqrt();
            } catch (const std::exception&) {
            }
            if (rp.free_scale) se(rp.zdim() - 1) = std::max(se(rp.zdim() - 1), 0.25);
            std::mt19937_64 rng(opts.seed);
            std::normal_distribution<double> z(0.0, 1.0);
            for (int k = 0; k < opts.restarts; ++k) {
                Eigen::VectorXd s = z0;
                for (Eigen::Index j = 0; j < s.size(); ++j) s(j) += opts.restart_spread * se(j) * z(rng);
                starts.push_back(s);
            }
        }
    }

    EngineResult best;
    best.objective = std::numeric_limits<double>::infinity();
    bool have = false;
    int iters = 0;
    for (const auto& s : starts) {
        const EngineResult r = minimize_from(m, d, tau, rp, s, opts.optim);
        iters += r.iterations;
        const bool better = !have || (r.converged && !best.converged) ||
                            (r.converged == best.converged && r.objective < best.objective);
        if (better && std::isfinite(r.objective)) {
            best = r;
            have = true;
        }
    }
    if (!have) throw NumericalError("MDPDE optimization failed from every start");
    best.starts = static_cast<int>(starts.size());
    best.iterations = iters;
    return best;
}

}  // namespace detail

}  // namespace dpd
