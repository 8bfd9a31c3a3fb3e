#include "dpd/dpdtest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/normal.hpp>

#include "dpd/error.hpp"
#include "dpd/linalg.hpp"
#include "fit_engine.hpp"

namespace dpd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool closed_simple_applies(const Model& m) { return m.family() == Family::NormalLinear && !m.free_scale(); }

double normal_cdf(double z) { return boost::math::cdf(boost::math::normal_distribution<double>(), z); }

// Fills spectrum, eigenvectors and the central law from A and Sigma.
void decompose(NullStructure& ns, double rank_tol) {
    ns.sigma = linalg::symmetrize(ns.sigma);
    ns.sigma_sqrt = linalg::psd_sqrt(ns.sigma);
    ns.sigma_pinv_sqrt = linalg::psd_pinv_sqrt(ns.sigma, rank_tol);
    const Eigen::MatrixXd sym = linalg::symmetrize(ns.sigma_sqrt * ns.a * ns.sigma_sqrt);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericalError("eigen-decomposition of the null product failed");
    const auto k = sym.rows();
    ns.spectrum = es.eigenvalues().reverse();
    const Eigen::MatrixXd vecs = es.eigenvectors().rowwise().reverse();
    const double cut = rank_tol * std::max(0.0, ns.spectrum.cwiseAbs().maxCoeff());
    std::vector<double> w;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < k; ++i) {
        if (ns.spectrum(i) > cut && ns.spectrum(i) > 0.0) {
            w.push_back(ns.spectrum(i));
            keep.push_back(i);
        }
    }
    ns.eigenvectors.resize(k, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) ns.eigenvectors.col(static_cast<Eigen::Index>(j)) = vecs.col(keep[j]);
    ns.dist = QuadFormDist(std::move(w));
}

void fill_tail(TestReport& rep, const TestOptions& opts) {
    if (rep.null_dist.rank() == 0) {
        rep.p_value = 1.0;
        rep.p_value_residual = 0.0;
        rep.critical_value = opts.compute_critical_value ? 0.0 : kNaN;
        return;
    }
    const TailResult tr = qf_upper_tail(rep.null_dist, rep.statistic, opts.series);
    rep.p_value = tr.probability;
    rep.p_value_residual = tr.residual_bound;
    rep.critical_value = opts.compute_critical_value ? qf_quantile(rep.null_dist, 1.0 - rep.alpha, opts.series) : kNaN;
}

void check_levels(double gamma, double alpha) {
    require(std::isfinite(gamma) && gamma >= 0.0, "gamma must be non-negative");
    require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
}

Eigen::VectorXd pad_delta(const Model& m, int p, const Eigen::VectorXd& delta) {
    const int dim = m.dim(p);
    require(delta.allFinite(), "delta must be finite");
    if (delta.size() == dim) return delta;
    require(delta.size() == p, "delta must have p or dim entries");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
    out.head(p) = delta;
    return out;
}

NullStructure structure_for(const Model& m, const Eigen::MatrixXd& X, const Hypothesis& h, double tau, double gamma,
                            double rank_tol) {
    const ParamVector null = null_point_of(m, h);
    if (const auto* s = std::get_if<SimpleHypothesis>(&h)) {
        return null_structure_simple(m, X, s->theta0, tau, gamma, rank_tol);
    }
    return null_structure_composite(m, X, null, tau, gamma, std::get<CompositeHypothesis>(h).constraint, rank_tol);
}

double mean_divergence(const Model& m, const Eigen::MatrixXd& X, const ParamVector& a, const ParamVector& b,
                       double gamma) {
    return dpd_divergence_sum(m, X, a, b, gamma) / static_cast<double>(X.rows());
}

// argmin over the null set of the average d_tau(f(theta_star), f(theta)).
ParamVector divergence_projection(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta_star,
                                  const LinearConstraint& c, double tau) {
    detail::Reparam rp;
    rp.offset = c.r() == 0 ? Eigen::VectorXd::Zero(X.cols())
                           : Eigen::VectorXd(c.L * (c.L.transpose() * c.L).ldlt().solve(c.l0));
    rp.basis = linalg::null_space_basis(c.L);
    rp.free_scale = m.free_scale();
    auto value = [&](const Eigen::VectorXd& z) { return mean_divergence(m, X, theta_star, rp.theta(z), tau); };
    const Objective obj = [&](const Eigen::VectorXd& z, Eigen::VectorXd* g) {
        if (g) *g = linalg::fd_gradient(value, z, 1e-6);
        return value(z);
    };
    OptimOptions oo;
    oo.grad_tol = 1e-9;
    const OptimResult r = bfgs_minimize(obj, rp.z_of(theta_star), Eigen::MatrixXd(), oo);
    if (!r.x.allFinite()) throw NumericalError("projection of the alternative onto the null set failed");
    return rp.theta(r.x);
}

void check_on_null(const LinearConstraint& c, const ParamVector& theta) {
    if (c.r() == 0) return;
    const double err = (c.L.transpose() * theta.beta - c.l0).cwiseAbs().maxCoeff();
    require(err <= 1e-8 * (1.0 + c.l0.cwiseAbs().maxCoeff()), "null point does not satisfy the constraint");
}

}  // namespace

void validate_hypothesis(const Model& m, int p, const Hypothesis& h) {
    if (const auto* s = std::get_if<SimpleHypothesis>(&h)) {
        m.validate(s->theta0, p);
        return;
    }
    const auto& ch = std::get<CompositeHypothesis>(h);
    ch.constraint.validate(m, p);
    if (ch.null_point) {
        m.validate(*ch.null_point, p);
        check_on_null(ch.constraint, *ch.null_point);
    }
}

std::string to_string(TestMethod m) {
    switch (m) {
        case TestMethod::GenericEigen: return "generic-eigen";
        case TestMethod::NormalSimpleClosed: return "normal-simple-closed";
        case TestMethod::NormalCompositeClosed: return "normal-composite-closed";
    }
    return "unknown";
}

TestMethod test_method_from_string(const std::string& s) {
    if (s == "generic-eigen") return TestMethod::GenericEigen;
    if (s == "normal-simple-closed") return TestMethod::NormalSimpleClosed;
    if (s == "normal-composite-closed") return TestMethod::NormalCompositeClosed;
    throw DomainError("unknown test method '" + s + "'");
}

QuadFormDist NullStructure::shifted(const Eigen::VectorXd& mean) const {
    require(mean.size() == sigma.rows(), "mean shift has the wrong dimension");
    const Eigen::VectorXd proj = eigenvectors.transpose() * (sigma_pinv_sqrt * mean);
    std::vector<double> delta(dist.weights.size());
    for (std::size_t j = 0; j < delta.size(); ++j) delta[j] = proj(static_cast<Eigen::Index>(j)) * proj(static_cast<Eigen::Index>(j));
    return QuadFormDist(dist.weights, std::move(delta));
}

NullStructure null_structure_simple(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta0, double tau,
                                    double gamma, double rank_tol) {
    NullStructure ns;
    ns.a = a_matrix_n(m, X, theta0, gamma);
    const Sandwich sw = sandwich_at(m, X, theta0, tau);
    ns.sigma = sw.cov;
    ns.psi = sw.psi;
    decompose(ns, rank_tol);
    return ns;
}

NullStructure null_structure_composite(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta_null,
                                       double tau, double gamma, const LinearConstraint& c, double rank_tol) {
    NullStructure ns;
    ns.a = a_matrix_n(m, X, theta_null, gamma);
    const Sandwich sw = sandwich_at(m, X, theta_null, tau);
    ns.psi = sw.psi;
    ns.pn = pn_matrix_expected(m, X, theta_null, tau, c);
    const Eigen::MatrixXd diff = linalg::spd_inverse(sw.psi, "Psi_n") - ns.pn;
    ns.sigma = diff * sw.omega * diff.transpose();
    decompose(ns, rank_tol);
    return ns;
}

double normal_simple_statistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta_hat,
                               const Eigen::VectorXd& beta0, double sigma0, double gamma) {
    require(sigma0 > 0.0, "sigma0 must be positive");
    const Eigen::VectorXd r = X * (beta_hat - beta0);
    if (gamma == 0.0) return r.squaredNorm() / (sigma0 * sigma0);
    const double n = static_cast<double>(X.rows());
    const double k = 2.0 * std::sqrt(1.0 + gamma) /
                     (gamma * std::pow(std::sqrt(2.0 * std::numbers::pi) * sigma0, gamma));
    double s = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i)
        s += std::exp(-gamma * r(i) * r(i) / (2.0 * (1.0 + gamma) * sigma0 * sigma0));
    return k * (n - s);
}

double normal_composite_statistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta_hat, double sigma_hat,
                                  const Eigen::VectorXd& beta_tilde, double sigma_tilde, double gamma) {
    require(sigma_hat > 0.0 && sigma_tilde > 0.0, "scales must be positive");
    const double n = static_cast<double>(X.rows());
    const Eigen::VectorXd r = X * (beta_hat - beta_tilde);
    const double sh2 = sigma_hat * sigma_hat, st2 = sigma_tilde * sigma_tilde;
    if (gamma == 0.0) return n * (std::log(st2 / sh2) - 1.0 + sh2 / st2) + r.squaredNorm() / st2;
    const double k = 2.0 * std::sqrt(1.0 + gamma) /
                     (gamma * std::pow(std::sqrt(2.0 * std::numbers::pi) * sigma_tilde, gamma));
    const double c1 = (gamma * std::pow(sigma_hat, gamma) + std::pow(sigma_tilde, gamma)) / (1.0 + gamma) *
                      std::pow(sigma_hat, -gamma);
    const double q = gamma * sh2 + st2;
    const double c2 = sigma_tilde * std::sqrt(1.0 + gamma) / std::sqrt(q);
    double s = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) s += std::exp(-gamma * r(i) * r(i) / (2.0 * q));
    return k * (n * c1 - c2 * s);
}

TestReport dpdts_simple(const Model& m, const Dataset& d, const ParamVector& theta0, double tau, double gamma,
                        double alpha, const TestOptions& opts) {
    m.validate(theta0, d.p());
    check_levels(gamma, alpha);
    const MdpdeFit fit = fit_mdpde(m, d, tau, std::nullopt, opts.fit);
    return dpdts_simple(m, d, fit, theta0, gamma, alpha, opts);
}

TestReport dpdts_simple(const Model& m, const Dataset& d, const MdpdeFit& fit, const ParamVector& theta0,
                        double gamma, double alpha, const TestOptions& opts) {
    m.validate(theta0, d.p());
    check_levels(gamma, alpha);
    TestReport rep;
    rep.tau = fit.tau;
    rep.gamma = gamma;
    rep.alpha = alpha;
    rep.theta_hat = fit.theta_hat;
    rep.converged = fit.converged;
    if (opts.prefer_closed_form && closed_simple_applies(m)) {
        const double s0 = *m.known_sigma();
        rep.method = TestMethod::NormalSimpleClosed;
        rep.statistic = normal_simple_statistic(d.X, fit.theta_hat.beta, theta0.beta, s0, gamma);
        const double w = zeta1(gamma, fit.tau, s0);
        rep.spectrum = Eigen::VectorXd::Constant(d.p(), w);
        rep.null_dist = QuadFormDist(std::vector<double>(d.p(), w));
    } else {
        rep.method = TestMethod::GenericEigen;
        rep.statistic = 2.0 * dpd_divergence_sum(m, d.X, fit.theta_hat, theta0, gamma);
        NullStructure ns = null_structure_simple(m, d.X, theta0, fit.tau, gamma, opts.rank_tol);
        rep.spectrum = ns.spectrum;
        rep.null_dist = std::move(ns.dist);
    }
    fill_tail(rep, opts);
    return rep;
}

TestReport dpdts_composite(const Model& m, const Dataset& d, const LinearConstraint& c, double tau, double gamma,
                           double alpha, const TestOptions& opts) {
    c.validate(m, d.p());
    check_levels(gamma, alpha);
    const MdpdeFit fit = fit_mdpde(m, d, tau, std::nullopt, opts.fit);
    const RmdpdeFit rfit = fit_rmdpde(m, d, tau, c, std::nullopt, opts.fit, opts.hessian);
    return dpdts_composite(m, d, fit, rfit, c, gamma, alpha, opts);
}

TestReport dpdts_composite(const Model& m, const Dataset& d, const MdpdeFit& fit, const RmdpdeFit& rfit,
                           const LinearConstraint& c, double gamma, double alpha, const TestOptions& opts) {
    c.validate(m, d.p());
    check_levels(gamma, alpha);
    require(std::abs(fit.tau - rfit.tau) < 1e-15, "unrestricted and restricted fits use different tau");
    TestReport rep;
    rep.tau = fit.tau;
    rep.gamma = gamma;
    rep.alpha = alpha;
    rep.theta_hat = fit.theta_hat;
    rep.theta_tilde = rfit.theta_tilde;
    rep.converged = fit.converged && rfit.converged;
    if (opts.prefer_closed_form && m.family() == Family::NormalLinear) {
        const double sh = m.scale_of(fit.theta_hat), st = m.scale_of(rfit.theta_tilde);
        rep.method = TestMethod::NormalCompositeClosed;
        rep.statistic = normal_composite_statistic(d.X, fit.theta_hat.beta, sh, rfit.theta_tilde.beta, st, gamma);
        const double w = zeta1(gamma, fit.tau, st);
        rep.spectrum = Eigen::VectorXd::Constant(c.r(), w);
        rep.null_dist = QuadFormDist(std::vector<double>(static_cast<std::size_t>(c.r()), w));
    } else {
        rep.method = TestMethod::GenericEigen;
        rep.statistic = 2.0 * dpd_divergence_sum(m, d.X, fit.theta_hat, rfit.theta_tilde, gamma);
        NullStructure ns = null_structure_composite(m, d.X, rfit.theta_tilde, fit.tau, gamma, c, opts.rank_tol);
        rep.spectrum = ns.spectrum;
        rep.null_dist = std::move(ns.dist);
    }
    fill_tail(rep, opts);
    return rep;
}

TestReport dpd_test(const Model& m, const Dataset& d, const Hypothesis& h, double tau, double gamma, double alpha,
                    const TestOptions& opts) {
    if (const auto* s = std::get_if<SimpleHypothesis>(&h)) return dpdts_simple(m, d, s->theta0, tau, gamma, alpha, opts);
    return dpdts_composite(m, d, std::get<CompositeHypothesis>(h).constraint, tau, gamma, alpha, opts);
}

ParamVector null_point_of(const Model& m, const Hypothesis& h) {
    (void)m;
    if (const auto* s = std::get_if<SimpleHypothesis>(&h)) return s->theta0;
    const auto& ch = std::get<CompositeHypothesis>(h);
    require(ch.null_point.has_value(), "composite power calculations need a null point");
    check_on_null(ch.constraint, *ch.null_point);
    return *ch.null_point;
}

Eigen::VectorXd mean_estimating_function(const Model& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& t,
                                         const ParamVector& theta, double tau) {
    require(t.size() == X.rows(), "contamination points must have one entry per design row");
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(m.dim(static_cast<int>(X.cols())));
    for (Eigen::Index i = 0; i < X.rows(); ++i) acc += estimating_function(m, X.row(i), t(i), theta, tau);
    return acc / static_cast<double>(X.rows());
}

Eigen::VectorXd mean_shift(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h,
                           const NullStructure& ns, const Eigen::VectorXd& delta, double epsilon,
                           const Eigen::VectorXd& t, double tau) {
    const int p = static_cast<int>(design.cols());
    const Eigen::VectorXd dl = pad_delta(m, p, delta);
    const ParamVector null = null_point_of(m, h);
    const bool composite = std::holds_alternative<CompositeHypothesis>(h);
    const Eigen::MatrixXd psi_inv = linalg::spd_inverse(ns.psi, "Psi_n");
    Eigen::VectorXd mean = composite ? Eigen::VectorXd(dl - ns.pn * (ns.psi * dl)) : dl;
    if (epsilon != 0.0) {
        const Eigen::VectorXd dbar = mean_estimating_function(m, design, t, null, tau);
        mean += epsilon * (composite ? Eigen::VectorXd((psi_inv - ns.pn) * dbar) : Eigen::VectorXd(psi_inv * dbar));
    }
    return mean;
}

double contiguous_power(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h,
                        const Eigen::VectorXd& delta, double tau, double gamma, double alpha,
                        const TestOptions& opts) {
    return contaminated_power(m, design, h, delta, 0.0, Eigen::VectorXd::Zero(design.rows()), tau, gamma, alpha,
                              opts);
}

double contaminated_power(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h,
                          const Eigen::VectorXd& delta, double epsilon, const Eigen::VectorXd& t, double tau,
                          double gamma, double alpha, const TestOptions& opts) {
    const int p = static_cast<int>(design.cols());
    validate_hypothesis(m, p, h);
    check_levels(gamma, alpha);
    require(std::isfinite(epsilon) && epsilon >= 0.0, "epsilon must be non-negative");
    if (epsilon == 0.0 && opts.prefer_closed_form && closed_simple_applies(m) &&
        std::holds_alternative<SimpleHypothesis>(h)) {
        const Eigen::VectorXd dl = pad_delta(m, p, delta);
        const double tq = dl.dot(design.transpose() * design * dl) / static_cast<double>(design.rows());
        return normal_contiguous_power(p, tq, tau, *m.known_sigma(), alpha);
    }
    const NullStructure ns = structure_for(m, design, h, tau, gamma, opts.rank_tol);
    require(ns.dist.rank() > 0, "the null distribution is degenerate (rank 0)");
    const double crit = qf_quantile(ns.dist, 1.0 - alpha, opts.series);
    const Eigen::VectorXd mean = mean_shift(m, design, h, ns, delta, epsilon, t, tau);
    const TailResult tr = qf_upper_tail(ns.shifted(mean), crit, opts.series);
    if (!tr.converged) throw NumericalError("quadratic-form series did not reach its target error");
    return tr.probability;
}

double normal_contiguous_power(int p, double t, double tau, double sigma, double alpha) {
    require(p >= 1, "p must be positive");
    require(std::isfinite(t) && t >= 0.0, "t must be non-negative");
    require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    const double crit = chisq_quantile(1.0 - alpha, p);
    return chisq_sf(crit, p, t / upsilon_beta(tau, sigma));
}

namespace {

Eigen::MatrixXd cross_moment(const Model& m, const Eigen::MatrixXd& X, const ParamVector& ts, const ParamVector& t0,
                             double tau) {
    const int p = static_cast<int>(X.cols());
    const int dim = m.dim(p);
    const double ss = m.scale_of(ts), s0 = m.scale_of(t0);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double es = X.row(i).dot(ts.beta), e0 = X.row(i).dot(t0.beta);
        const double etas[2] = {es, e0}, scales[2] = {ss, s0};
        const auto nodes = m.quadrature(etas, scales);
        Eigen::MatrixXd eab = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd eb = Eigen::VectorXd::Zero(dim);
        for (const QuadNode& q : nodes) {
            const double ls = m.log_density(q.y, es, ss);
            if (ls < -745.0) continue;
            const double wf = q.w * std::exp(ls);
            const ScoreParts us = m.score(q.y, es, ss), u0 = m.score(q.y, e0, s0);
            const Eigen::VectorXd a = assemble_vector(m, X.row(i), us.s, us.v) * std::exp(tau * ls);
            const Eigen::VectorXd b =
                assemble_vector(m, X.row(i), u0.s, u0.v) * std::exp(tau * m.log_density(q.y, e0, s0));
            eab.noalias() += wf * a * b.transpose();
            eb += wf * b;
        }
        const Moments mo = m.moments(es, ss, tau);
        const Eigen::VectorXd xi = assemble_vector(m, X.row(i), mo.s, mo.v);
        acc += eab - xi * eb.transpose();
    }
    return acc / static_cast<double>(X.rows());
}

}  // namespace

Eigen::MatrixXd composite_cross_covariance(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta_star,
                                           const ParamVector& theta_null, double tau, const LinearConstraint& c) {
    const Sandwich sw = sandwich_at(m, X, theta_star, tau);
    const Eigen::MatrixXd pn = pn_matrix_expected(m, X, theta_null, tau, c);
    return linalg::spd_inverse(sw.psi, "Psi_n") * cross_moment(m, X, theta_star, theta_null, tau) * pn.transpose();
}

PowerCurve::PowerCurve(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h,
                       const ParamVector& theta_star, double tau, double gamma, double alpha,
                       const TestOptions& opts) {
    const int p = static_cast<int>(design.cols());
    require(design.rows() > 0, "design has no rows");
    validate_hypothesis(m, p, h);
    m.validate(theta_star, p);
    check_levels(gamma, alpha);

    const Eigen::VectorXd vstar = m.flatten(theta_star);
    auto grad_first = [&](const ParamVector& other) {
        auto f = [&](const Eigen::VectorXd& v) { return mean_divergence(m, design, m.unflatten(v), other, gamma); };
        return linalg::fd_gradient(f, vstar, 1e-5);
    };

    if (const auto* s = std::get_if<SimpleHypothesis>(&h)) {
        base_.null_point = s->theta0;
        base_.mean_divergence = mean_divergence(m, design, theta_star, s->theta0, gamma);
        const Eigen::VectorXd mvec = grad_first(s->theta0);
        const Sandwich sw = sandwich_at(m, design, theta_star, tau);
        base_.sigma = std::sqrt(std::max(0.0, mvec.dot(sw.cov * mvec)));
        if (base_.mean_divergence <= 1e-12 && base_.sigma <= 1e-7) {
            throw DomainError("alternative coincides with the null; the power approximation is undefined there");
        }
        const NullStructure ns = null_structure_simple(m, design, s->theta0, tau, gamma, opts.rank_tol);
        base_.critical_value = qf_quantile(ns.dist, 1.0 - alpha, opts.series);
    } else {
        const auto& ch = std::get<CompositeHypothesis>(h);
        const ParamVector t0 = divergence_projection(m, design, theta_star, ch.constraint, tau);
        base_.null_point = t0;
        base_.mean_divergence = mean_divergence(m, design, theta_star, t0, gamma);
        const Eigen::VectorXd m1 = grad_first(t0);
        auto f2 = [&](const Eigen::VectorXd& v) { return mean_divergence(m, design, theta_star, m.unflatten(v), gamma); };
        const Eigen::VectorXd m2 = linalg::fd_gradient(f2, m.flatten(t0), 1e-5);
        const Sandwich sws = sandwich_at(m, design, theta_star, tau);
        const Sandwich sw0 = sandwich_at(m, design, t0, tau);
        const Eigen::MatrixXd pn = pn_matrix_expected(m, design, t0, tau, ch.constraint);
        const Eigen::MatrixXd a12 = composite_cross_covariance(m, design, theta_star, t0, tau, ch.constraint);
        const double var = m1.dot(sws.cov * m1) + 2.0 * m1.dot(a12 * m2) + m2.dot(pn * sw0.omega * pn.transpose() * m2);
        base_.sigma = std::sqrt(std::max(0.0, var));
        const NullStructure ns = null_structure_composite(m, design, t0, tau, gamma, ch.constraint, opts.rank_tol);
        if (ns.dist.rank() == 0) throw DomainError("the null distribution is degenerate (rank 0)");
        base_.critical_value = qf_quantile(ns.dist, 1.0 - alpha, opts.series);
        if (base_.mean_divergence <= 1e-12 && base_.sigma <= 1e-7) {
            base_.degenerate = true;
            base_.power = alpha;
        }
    }
}

PowerResult PowerCurve::evaluate(double n) const {
    require(std::isfinite(n) && n >= 1.0, "sample size must be at least 1");
    PowerResult r = base_;
    if (r.degenerate) return r;
    const double excess = r.critical_value / 2.0 - n * r.mean_divergence;
    if (r.sigma <= 0.0) {
        r.power = excess < 0.0 ? 1.0 : 0.0;
    } else {
        r.power = 1.0 - normal_cdf(excess / (std::sqrt(n) * r.sigma));
    }
    return r;
}

PowerResult approx_power(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h,
                         const ParamVector& theta_star, double n, double tau, double gamma, double alpha,
                         const TestOptions& opts) {
    return PowerCurve(m, design, h, theta_star, tau, gamma, alpha, opts).evaluate(n);
}

long required_sample_size(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h,
                          const ParamVector& theta_star, double eta, double tau, double gamma, double alpha,
                          const TestOptions& opts) {
    require(alpha < eta && eta < 1.0, "target power must lie in (alpha, 1)");
    const PowerCurve curve(m, design, h, theta_star, tau, gamma, alpha, opts);
    constexpr long cap = 10'000'000;
    auto reaches = [&](long n) { return curve.evaluate(static_cast<double>(n)).power >= eta; };
    if (reaches(1)) return 1;
    long lo = 1, hi = 2;
    while (!reaches(hi)) {
        if (hi >= cap) throw DomainError("target power is not reached for any sample size up to 10^7");
        lo = hi;
        hi = std::min(cap, hi * 2);
    }
    while (hi - lo > 1) {
        const long mid = lo + (hi - lo) / 2;
        (reaches(mid) ? hi : lo) = mid;
    }
    return hi;
}

}  // namespace dpd
