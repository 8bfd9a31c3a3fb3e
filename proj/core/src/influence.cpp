#include "dpd/influence.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dpd/error.hpp"
#include "dpd/linalg.hpp"

namespace dpd {

namespace {

bool is_simple(const Hypothesis& h) { return std::holds_alternative<SimpleHypothesis>(h); }

const LinearConstraint& constraint_of(const Hypothesis& h) { return std::get<CompositeHypothesis>(h).constraint; }

// Integrand kernels for the divergence gradients at one observation:
// first argument: (1+1/g) int g u_g (g^gamma - f^gamma); gamma = 0: int g u_g log(g/f).
// second argument: (1+gamma) int f^gamma u_f (f - g).
Eigen::VectorXd divergence_gradient_row(const Model& m, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                        const ParamVector& t1, const ParamVector& t2, double gamma, bool wrt_first) {
    const double e1 = x.dot(t1.beta), e2 = x.dot(t2.beta);
    const double s1 = m.scale_of(t1), s2 = m.scale_of(t2);
    const double etas[2] = {e1, e2}, scales[2] = {s1, s2};
    double as = 0.0, av = 0.0;
    for (const QuadNode& q : m.quadrature(etas, scales)) {
        const double lg = m.log_density(q.y, e1, s1), lf = m.log_density(q.y, e2, s2);
        if (lg < -745.0 && lf < -745.0) continue;
        const double g = std::exp(lg), f = std::exp(lf);
        double k = 0.0;
        ScoreParts u;
        if (wrt_first) {
            u = m.score(q.y, e1, s1);
            if (gamma == 0.0) {
                k = g * (lg - lf);
            } else {
                k = (1.0 + 1.0 / gamma) * g * (std::exp(gamma * lg) - std::exp(gamma * lf));
            }
        } else {
            u = m.score(q.y, e2, s2);
            k = (1.0 + gamma) * std::exp(gamma * lf) * (f - g);
        }
        as += q.w * k * u.s;
        av += q.w * k * u.v;
    }
    return assemble_vector(m, x, as, av);
}

Eigen::VectorXd divergence_gradient(const Model& m, const Eigen::MatrixXd& X, const ParamVector& t1,
                                    const ParamVector& t2, double gamma, bool wrt_first) {
    require(gamma >= 0.0, "gamma must be non-negative");
    m.validate(t1, static_cast<int>(X.cols()));
    m.validate(t2, static_cast<int>(X.cols()));
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(m.dim(static_cast<int>(X.cols())));
    for (Eigen::Index i = 0; i < X.rows(); ++i) acc += divergence_gradient_row(m, X.row(i), t1, t2, gamma, wrt_first);
    return acc;
}

Eigen::VectorXd if_estimator_or_restricted(const Model& m, const Eigen::MatrixXd& X, const Hypothesis& h,
                                           const ParamVector& null, double tau, const ContaminationSpec& spec,
                                           bool restricted) {
    if (!restricted) return if_mdpde(m, X, null, tau, spec);
    return if_rmdpde(m, X, null, tau, constraint_of(h), spec);
}

}  // namespace

ContaminationSpec ContaminationSpec::single(int index, double t, double epsilon) {
    ContaminationSpec s;
    s.direction = index;
    s.points = Eigen::VectorXd::Constant(1, t);
    s.epsilon = epsilon;
    return s;
}

ContaminationSpec ContaminationSpec::all(const Eigen::VectorXd& t, double epsilon) {
    ContaminationSpec s;
    s.points = t;
    s.epsilon = epsilon;
    return s;
}

void ContaminationSpec::validate(int n) const {
    require(points.allFinite(), "contamination points must be finite");
    require(std::isfinite(epsilon) && epsilon >= 0.0 && epsilon <= 1.0, "epsilon must lie in [0, 1]");
    if (direction) {
        require(*direction >= 1 && *direction <= n, "contamination index must lie in 1..n");
        require(points.size() == 1, "single-direction contamination takes one point");
    } else {
        require(points.size() == n, "all-direction contamination takes one point per observation");
    }
}

std::string to_string(IFOrder o) { return o == IFOrder::First ? "first" : "second"; }

std::string to_string(IFTarget t) {
    switch (t) {
        case IFTarget::Estimator: return "estimator";
        case IFTarget::RestrictedEstimator: return "restricted-estimator";
        case IFTarget::SimpleTest: return "simple-test";
        case IFTarget::CompositeTest: return "composite-test";
    }
    return "unknown";
}

Eigen::VectorXd contaminated_score(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double tau,
                                   const ContaminationSpec& spec) {
    spec.validate(static_cast<int>(X.rows()));
    if (spec.direction) return estimating_function(m, X.row(*spec.direction - 1), spec.points(0), theta, tau);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(m.dim(static_cast<int>(X.cols())));
    for (Eigen::Index i = 0; i < X.rows(); ++i) acc += estimating_function(m, X.row(i), spec.points(i), theta, tau);
    return acc;
}

Eigen::VectorXd if_mdpde(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double tau,
                         const ContaminationSpec& spec) {
    const Eigen::MatrixXd psi = j_matrix_n(m, X, theta, tau);
    const Eigen::VectorXd dsum = contaminated_score(m, X, theta, tau, spec);
    const Eigen::LLT<Eigen::MatrixXd> llt(psi);
    if (llt.info() != Eigen::Success) throw NumericalError("Psi_n is singular; the influence function is undefined");
    return llt.solve(dsum) / static_cast<double>(X.rows());
}

Eigen::VectorXd if_mdpde(const Model& m, const Dataset& d, const MdpdeFit& fit, const ContaminationSpec& spec) {
    return if_mdpde(m, d.X, fit.theta_hat, fit.tau, spec);
}

Eigen::VectorXd if_rmdpde(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double tau,
                          const LinearConstraint& c, const ContaminationSpec& spec) {
    c.validate(m, static_cast<int>(X.cols()));
    const Eigen::MatrixXd psi = j_matrix_n(m, X, theta, tau);
    const Eigen::MatrixXd t = tangent_basis(m, c);
    const Eigen::MatrixXd proj = t * t.transpose();
    const Eigen::MatrixXd psi0 = proj * psi * proj;
    const Eigen::MatrixXd u = upsilon_matrix(m, c);
    const Eigen::MatrixXd q = psi0.transpose() * psi0 + u * u.transpose();
    const Eigen::VectorXd d0 = proj * contaminated_score(m, X, theta, tau, spec);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(q);
    if (ldlt.info() != Eigen::Success || linalg::numerical_rank(q) < q.rows()) {
        throw NumericalError("Q is singular; the restricted influence function is undefined");
    }
    return ldlt.solve(psi0.transpose() * d0) / static_cast<double>(X.rows());
}

Eigen::VectorXd if_rmdpde(const Model& m, const Dataset& d, const RmdpdeFit& fit, const LinearConstraint& c,
                          const ContaminationSpec& spec) {
    return if_rmdpde(m, d.X, fit.theta_tilde, fit.tau, c, spec);
}

Eigen::VectorXd divergence_gradient_first(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta1,
                                          const ParamVector& theta2, double gamma) {
    return divergence_gradient(m, X, theta1, theta2, gamma, true);
}

Eigen::VectorXd divergence_gradient_second(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta1,
                                           const ParamVector& theta2, double gamma) {
    return divergence_gradient(m, X, theta1, theta2, gamma, false);
}

double if1_test(const Model& m, const Eigen::MatrixXd& X, const Hypothesis& h, double tau, double gamma,
                const ContaminationSpec& spec) {
    validate_hypothesis(m, static_cast<int>(X.cols()), h);
    const ParamVector null = null_point_of(m, h);
    const Eigen::VectorXd iu = if_mdpde(m, X, null, tau, spec);
    double val = divergence_gradient_first(m, X, null, null, gamma).dot(iu);
    if (!is_simple(h)) {
        const Eigen::VectorXd ir = if_estimator_or_restricted(m, X, h, null, tau, spec, true);
        val += divergence_gradient_second(m, X, null, null, gamma).dot(ir);
    }
    return val;
}

double if2_test(const Model& m, const Eigen::MatrixXd& X, const Hypothesis& h, double tau, double gamma,
                const ContaminationSpec& spec) {
    validate_hypothesis(m, static_cast<int>(X.cols()), h);
    const ParamVector null = null_point_of(m, h);
    const Eigen::MatrixXd a = a_matrix_n(m, X, null, gamma);
    const double n = static_cast<double>(X.rows());
    Eigen::VectorXd w = if_mdpde(m, X, null, tau, spec);
    if (!is_simple(h)) w -= if_rmdpde(m, X, null, tau, constraint_of(h), spec);
    // n W'AW equals (1/n) D' Psi^-1 A Psi^-1 D in the simple case.
    return std::max(0.0, n * w.dot(a * w));
}

double normal_if2_simple(const Eigen::MatrixXd& X, int index, double t, const Eigen::VectorXd& beta0, double sigma0,
                         double tau, double gamma) {
    require(index >= 1 && index <= X.rows(), "contamination index must lie in 1..n");
    require(sigma0 > 0.0, "sigma0 must be positive");
    const Eigen::RowVectorXd x = X.row(index - 1);
    const double lev = x.dot(linalg::spd_inverse(X.transpose() * X, "X'X") * x.transpose());
    const double r = t - x.dot(beta0);
    const double zeta_g = zeta_tau(gamma, sigma0);
    return (1.0 + gamma) * zeta_g * std::pow(1.0 + tau, 3.0) * static_cast<double>(X.rows()) * lev * r * r *
           std::exp(-tau * r * r / (sigma0 * sigma0));
}

Eigen::VectorXd power_mean_gradient(const NullStructure& ns, double critical_value, const Eigen::VectorXd& mean,
                                    const SeriesControl& series, double rel_step) {
    Eigen::VectorXd k(mean.size());
    for (Eigen::Index j = 0; j < mean.size(); ++j) {
        const double h = rel_step * std::max(1.0, std::abs(mean(j)));
        Eigen::VectorXd up = mean, dn = mean;
        up(j) += h;
        dn(j) -= h;
        const double pu = qf_upper_tail(ns.shifted(up), critical_value, series).probability;
        const double pd = qf_upper_tail(ns.shifted(dn), critical_value, series).probability;
        k(j) = (pu - pd) / (2.0 * h);
    }
    return k;
}

PifLif pif_lif(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h, const Eigen::VectorXd& delta,
               const ContaminationSpec& spec, double tau, double gamma, double alpha, const TestOptions& opts) {
    const int p = static_cast<int>(design.cols());
    validate_hypothesis(m, p, h);
    spec.validate(static_cast<int>(design.rows()));
    require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    SeriesControl series = opts.series;
    series.target_error = std::min(series.target_error, 1e-13);

    const ParamVector null = null_point_of(m, h);
    const NullStructure ns = is_simple(h) ? null_structure_simple(m, design, null, tau, gamma, opts.rank_tol)
                                          : null_structure_composite(m, design, null, tau, gamma, constraint_of(h),
                                                                     opts.rank_tol);
    require(ns.dist.rank() > 0, "the null distribution is degenerate (rank 0)");
    const double crit = qf_quantile(ns.dist, 1.0 - alpha, series);
    const Eigen::VectorXd zero_t = Eigen::VectorXd::Zero(design.rows());
    const Eigen::VectorXd base_delta = mean_shift(m, design, h, ns, delta, 0.0, zero_t, tau);
    const Eigen::VectorXd base_null = Eigen::VectorXd::Zero(base_delta.size());

    // Mean-shift direction per unit epsilon.
    Eigen::VectorXd dir = if_mdpde(m, design, null, tau, spec);
    if (!is_simple(h)) dir -= if_rmdpde(m, design, null, tau, constraint_of(h), spec);

    auto power_at = [&](const Eigen::VectorXd& mean) {
        return qf_upper_tail(ns.shifted(mean), crit, series).probability;
    };
    // One-sided second-order difference in epsilon from 0.
    auto eps_derivative = [&](const Eigen::VectorXd& base) {
        const double e = 1e-4;
        return (-3.0 * power_at(base) + 4.0 * power_at(base + e * dir) - power_at(base + 2.0 * e * dir)) / (2.0 * e);
    };

    PifLif out;
    out.pif_numeric = eps_derivative(base_delta);
    out.lif_numeric = eps_derivative(base_null);
    if (is_simple(h)) {
        out.k_vector = power_mean_gradient(ns, crit, base_delta, series);
        out.pif = dir.dot(out.k_vector);
        out.lif = dir.dot(power_mean_gradient(ns, crit, base_null, series));
        out.stable = std::abs(out.pif - out.pif_numeric) <= 1e-3 && std::abs(out.lif - out.lif_numeric) <= 1e-3;
    } else {
        out.pif = out.pif_numeric;
        out.lif = out.lif_numeric;
    }
    return out;
}

GridScan scan_grid(const std::function<double(double)>& f, double center, double scale, double half_width,
                   int points) {
    require(points >= 3 && scale > 0.0 && half_width > 0.0, "grid needs at least 3 points and a positive width");
    GridScan g;
    g.t.resize(points);
    g.value.resize(points);
    const double lo = center - half_width * scale, step = 2.0 * half_width * scale / (points - 1);
    for (int k = 0; k < points; ++k) {
        g.t(k) = lo + k * step;
        g.value(k) = f(g.t(k));
        if (std::abs(g.value(k)) > g.max_abs) {
            g.max_abs = std::abs(g.value(k));
            g.argmax = g.t(k);
        }
    }
    const double wlo = center - 2.0 * half_width * scale, wstep = 2.0 * step;
    g.max_abs_wide = g.max_abs;
    for (int k = 0; k < points; ++k) {
        g.max_abs_wide = std::max(g.max_abs_wide, std::abs(f(wlo + k * wstep)));
    }
    g.bounded = g.max_abs_wide <= 1.01 * g.max_abs + 1e-300;
    return g;
}

}  // namespace dpd
