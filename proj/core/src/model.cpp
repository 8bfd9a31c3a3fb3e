#include "dpd/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>

#include "dpd/error.hpp"

namespace dpd {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;
constexpr double kLogTailTarget = -32.236191301916641;  // log(1e-14)
constexpr long kMaxSupport = 5'000'000;

double logistic(double eta) { return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta)); }

// log P(Y >= k) for k > mu, log P(Y <= k) for k < mu (Chernoff), padded by a polynomial factor
// so that moments up to order four are covered too.
double poisson_log_tail_bound(double mu, double k) {
    const double ch = k <= 0.0 ? -mu : -mu + k * (1.0 + std::log(mu) - std::log(k));
    return ch + 4.0 * std::log(2.0 + k + mu);
}

struct Range {
    long lo, hi;
};

Range poisson_range(double mu) {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw NumericalError("Poisson mean is not finite and positive");
    long hi = static_cast<long>(std::ceil(mu)) + 1;
    {
        double step = 1.0;
        while (poisson_log_tail_bound(mu, static_cast<double>(hi)) > kLogTailTarget) {
            hi += static_cast<long>(step);
            step *= 1.5;
            if (hi > kMaxSupport + static_cast<long>(mu))
                throw NumericalError("Poisson truncation failure: tail bound not reached");
        }
    }
    long lo = 0;
    if (mu > 1.0) {
        long k = static_cast<long>(std::floor(mu)) - 1;
        double step = 1.0;
        while (k > 0 && poisson_log_tail_bound(mu, static_cast<double>(k)) > kLogTailTarget) {
            k -= static_cast<long>(step);
            step *= 1.5;
        }
        lo = std::max(0L, k);
    }
    if (hi - lo > kMaxSupport) throw NumericalError("Poisson truncation failure: support too large");
    return {lo, hi};
}

// Calls visit(y, log f(y)) over the truncated support.
template <class F>
void poisson_walk(double eta, Range r, const F& visit) {
    const double mu = std::exp(eta);
    double lf = static_cast<double>(r.lo) * eta - mu - std::lgamma(static_cast<double>(r.lo) + 1.0);
    for (long y = r.lo; y <= r.hi; ++y) {
        visit(static_cast<double>(y), lf);
        lf += eta - std::log(static_cast<double>(y) + 1.0);
    }
}

Range merge(Range a, Range b) { return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

double kl_normal(double mu1, double s1, double mu2, double s2) {
    const double d = mu1 - mu2;
    return std::log(s2 / s1) + (s1 * s1 + d * d) / (2.0 * s2 * s2) - 0.5;
}

}  // namespace

std::string to_string(Family f) {
    switch (f) {
        case Family::NormalLinear: return "normal";
        case Family::PoissonLog: return "poisson";
        case Family::BernoulliLogit: return "bernoulli";
    }
    return "unknown";
}

Family family_from_string(const std::string& s) {
    if (s == "normal" || s == "normal-linear" || s == "gaussian") return Family::NormalLinear;
    if (s == "poisson" || s == "poisson-log") return Family::PoissonLog;
    if (s == "bernoulli" || s == "bernoulli-logit" || s == "logistic") return Family::BernoulliLogit;
    throw DomainError("unknown model family: " + s);
}

Model Model::normal() { return Model{}; }

Model Model::normal_known_sigma(double sigma) {
    require(std::isfinite(sigma) && sigma > 0.0, "known sigma must be positive");
    Model m;
    m.fixed_sigma_ = sigma;
    return m;
}

Model Model::poisson() {
    Model m;
    m.family_ = Family::PoissonLog;
    return m;
}

Model Model::bernoulli() {
    Model m;
    m.family_ = Family::BernoulliLogit;
    return m;
}

std::string Model::name() const {
    if (family_ == Family::NormalLinear && fixed_sigma_) return "normal (known sigma)";
    return to_string(family_);
}

double Model::scale_of(const ParamVector& theta) const {
    if (family_ != Family::NormalLinear) return 1.0;
    if (fixed_sigma_) return *fixed_sigma_;
    require(theta.scale.has_value(), "normal model with free scale needs sigma");
    return *theta.scale;
}

void Model::validate(const ParamVector& theta, int p) const {
    require(theta.beta.size() == p, "beta has " + std::to_string(theta.beta.size()) + " entries, design has " +
                                        std::to_string(p) + " columns");
    require(theta.beta.allFinite(), "beta must be finite");
    if (free_scale()) {
        require(theta.scale.has_value(), "sigma is required for the normal model");
        require(std::isfinite(*theta.scale) && *theta.scale > 0.0, "sigma must be positive");
    }
}

Eigen::VectorXd Model::flatten(const ParamVector& theta) const {
    const auto p = theta.beta.size();
    Eigen::VectorXd v(dim(static_cast<int>(p)));
    v.head(p) = theta.beta;
    if (free_scale()) v(p) = scale_of(theta);
    return v;
}

ParamVector Model::unflatten(const Eigen::VectorXd& v) const {
    ParamVector t;
    if (free_scale()) {
        t.beta = v.head(v.size() - 1);
        t.scale = v(v.size() - 1);
    } else {
        t.beta = v;
    }
    return t;
}

double Model::inverse_link(double eta) const {
    switch (family_) {
        case Family::NormalLinear: return eta;
        case Family::PoissonLog: return std::exp(eta);
        case Family::BernoulliLogit: return logistic(eta);
    }
    return eta;
}

double Model::canonical(double eta) const { return eta; }  // all three links are canonical

double Model::cumulant(double th) const {
    switch (family_) {
        case Family::NormalLinear: return 0.5 * th * th;
        case Family::PoissonLog: return std::exp(th);
        case Family::BernoulliLogit: return th > 0 ? th + std::log1p(std::exp(-th)) : std::log1p(std::exp(th));
    }
    return 0.0;
}

double Model::dispersion(double scale) const { return family_ == Family::NormalLinear ? scale * scale : 1.0; }

double Model::base_measure(double y, double scale) const {
    switch (family_) {
        case Family::NormalLinear: return -y * y / (2.0 * scale * scale) - 0.5 * kLogTwoPi - std::log(scale);
        case Family::PoissonLog: return -std::lgamma(y + 1.0);
        case Family::BernoulliLogit: return 0.0;
    }
    return 0.0;
}

bool Model::valid_response(double y) const {
    if (!std::isfinite(y)) return false;
    switch (family_) {
        case Family::NormalLinear: return true;
        case Family::PoissonLog: return y >= 0.0 && y == std::floor(y);
        case Family::BernoulliLogit: return y == 0.0 || y == 1.0;
    }
    return false;
}

void Model::check_response(double y) const {
    if (!valid_response(y))
        throw DomainError("response value " + std::to_string(y) + " is not valid for the " + name() + " family");
}

double Model::log_density(double y, double eta, double scale) const {
    check_response(y);
    const double th = canonical(eta);
    return (y * th - cumulant(th)) / dispersion(scale) + base_measure(y, scale);
}

ScoreParts Model::score(double y, double eta, double scale) const {
    switch (family_) {
        case Family::NormalLinear: {
            const double r = y - eta;
            const double s2 = scale * scale;
            return {r / s2, (r * r - s2) / (s2 * scale)};
        }
        case Family::PoissonLog: return {y - std::exp(eta), 0.0};
        case Family::BernoulliLogit: return {y - logistic(eta), 0.0};
    }
    return {};
}

Moments Model::moments(double eta, double scale, double a) const {
    require(a >= 0.0, "integral exponent must be non-negative");
    Moments m;
    switch (family_) {
        case Family::NormalLinear: {
            const double c = normal_power_integral(scale, a);
            const double s2 = scale * scale;
            m.m0 = c;
            m.v = -c * a / ((1.0 + a) * scale);
            m.ss = c / ((1.0 + a) * s2);
            m.vv = c * (2.0 + a * a) / ((1.0 + a) * (1.0 + a) * s2);
            return m;
        }
        case Family::PoissonLog: {
            const double mu = std::exp(eta);
            poisson_walk(eta, poisson_range(mu), [&](double y, double lf) {
                const double w = std::exp((1.0 + a) * lf);
                const double s = y - mu;
                m.m0 += w;
                m.s += s * w;
                m.ss += s * s * w;
            });
            return m;
        }
        case Family::BernoulliLogit: {
            const double p = logistic(eta);
            const double w1 = std::pow(p, 1.0 + a), w0 = std::pow(1.0 - p, 1.0 + a);
            m.m0 = w1 + w0;
            m.s = (1.0 - p) * w1 - p * w0;
            m.ss = (1.0 - p) * (1.0 - p) * w1 + p * p * w0;
            return m;
        }
    }
    return m;
}

double Model::divergence(double eta1, double scale1, double eta2, double scale2, double gamma) const {
    require(gamma >= 0.0, "divergence tuning parameter must be non-negative");
    switch (family_) {
        case Family::NormalLinear: {
            if (gamma == 0.0) return kl_normal(eta1, scale1, eta2, scale2);
            const double d = eta1 - eta2;
            const double q = scale2 * scale2 + gamma * scale1 * scale1;
            const double cross = std::pow(2.0 * std::numbers::pi * scale2 * scale2, -0.5 * gamma) * scale2 /
                                 std::sqrt(q) * std::exp(-gamma * d * d / (2.0 * q));
            const double val = normal_power_integral(scale2, gamma) - (1.0 + 1.0 / gamma) * cross +
                               normal_power_integral(scale1, gamma) / gamma;
            return std::max(0.0, val);
        }
        case Family::PoissonLog: {
            const double mu1 = std::exp(eta1), mu2 = std::exp(eta2);
            if (gamma == 0.0) return std::max(0.0, mu1 * (eta1 - eta2) - mu1 + mu2);
            double val = 0.0;
            const Range r = merge(poisson_range(mu1), poisson_range(mu2));
            const double shift = eta1 - eta2, dmu = mu1 - mu2;
            poisson_walk(eta2, r, [&](double y, double lf2) {
                const double lf1 = lf2 + y * shift - dmu;
                const double f1 = std::exp(lf1);
                const double f2g = std::exp(gamma * lf2);
                val += f2g * std::exp(lf2) - (1.0 + 1.0 / gamma) * f2g * f1 + std::exp((1.0 + gamma) * lf1) / gamma;
            });
            return std::max(0.0, val);
        }
        case Family::BernoulliLogit: {
            const double p1 = logistic(eta1), p2 = logistic(eta2);
            auto term = [gamma](double f1, double f2) {
                if (gamma == 0.0) return f1 > 0.0 ? f1 * std::log(f1 / f2) : 0.0;
                return std::pow(f2, 1.0 + gamma) - (1.0 + 1.0 / gamma) * std::pow(f2, gamma) * f1 +
                       std::pow(f1, 1.0 + gamma) / gamma;
            };
            return std::max(0.0, term(p1, p2) + term(1.0 - p1, 1.0 - p2));
        }
    }
    return 0.0;
}

std::vector<QuadNode> Model::quadrature(std::span<const double> eta, std::span<const double> scale) const {
    require(!eta.empty() && eta.size() == scale.size(), "quadrature needs matching eta and scale lists");
    std::vector<QuadNode> nodes;
    if (family_ == Family::BernoulliLogit) return {{0.0, 1.0}, {1.0, 1.0}};
    if (family_ == Family::PoissonLog) {
        Range r = poisson_range(std::exp(eta[0]));
        for (std::size_t k = 1; k < eta.size(); ++k) r = merge(r, poisson_range(std::exp(eta[k])));
        for (long y = r.lo; y <= r.hi; ++y) nodes.push_back({static_cast<double>(y), 1.0});
        return nodes;
    }
    double lo = eta[0] - 40.0 * scale[0], hi = eta[0] + 40.0 * scale[0], smin = scale[0];
    for (std::size_t k = 1; k < eta.size(); ++k) {
        lo = std::min(lo, eta[k] - 40.0 * scale[k]);
        hi = std::max(hi, eta[k] + 40.0 * scale[k]);
        smin = std::min(smin, scale[k]);
    }
    using Rule = boost::math::quadrature::gauss<double, 20>;
    const auto& xs = Rule::abscissa();
    const auto& ws = Rule::weights();
    const int panels = static_cast<int>(std::ceil((hi - lo) / (0.5 * smin)));
    const double h = (hi - lo) / panels;
    nodes.reserve(static_cast<std::size_t>(panels) * 2 * xs.size());
    for (int k = 0; k < panels; ++k) {
        const double c = lo + (k + 0.5) * h;
        for (std::size_t j = 0; j < xs.size(); ++j) {
            nodes.push_back({c - 0.5 * h * xs[j], 0.5 * h * ws[j]});
            nodes.push_back({c + 0.5 * h * xs[j], 0.5 * h * ws[j]});
        }
    }
    return nodes;
}

Eigen::VectorXd assemble_vector(const Model& m, const Eigen::Ref<const Eigen::RowVectorXd>& x, double s, double v) {
    const auto p = x.size();
    Eigen::VectorXd out(m.dim(static_cast<int>(p)));
    out.head(p) = s * x.transpose();
    if (m.free_scale()) out(p) = v;
    return out;
}

Eigen::MatrixXd assemble_matrix(const Model& m, const Eigen::Ref<const Eigen::RowVectorXd>& x, double ss,
                                double sv, double vv) {
    const auto p = x.size();
    const auto d = m.dim(static_cast<int>(p));
    Eigen::MatrixXd out(d, d);
    out.topLeftCorner(p, p) = ss * x.transpose() * x;
    if (m.free_scale()) {
        out.block(0, p, p, 1) = sv * x.transpose();
        out.block(p, 0, 1, p) = sv * x;
        out(p, p) = vv;
    }
    return out;
}

double log_density(const Model& m, const Dataset& d, int i, double y, const ParamVector& theta) {
    m.validate(theta, d.p());
    return m.log_density(y, d.row(i).dot(theta.beta), m.scale_of(theta));
}

Eigen::VectorXd score(const Model& m, const Dataset& d, int i, double y, const ParamVector& theta) {
    m.validate(theta, d.p());
    m.check_response(y);
    const ScoreParts u = m.score(y, d.row(i).dot(theta.beta), m.scale_of(theta));
    return assemble_vector(m, d.row(i), u.s, u.v);
}

double power_integral(const Model& m, const Dataset& d, int i, const ParamVector& theta, double a) {
    m.validate(theta, d.p());
    return m.moments(d.row(i).dot(theta.beta), m.scale_of(theta), a).m0;
}

Eigen::VectorXd xi_vector(const Model& m, const Dataset& d, int i, const ParamVector& theta, double tau) {
    m.validate(theta, d.p());
    const Moments mo = m.moments(d.row(i).dot(theta.beta), m.scale_of(theta), tau);
    return assemble_vector(m, d.row(i), mo.s, mo.v);
}

Eigen::MatrixXd j_matrix(const Model& m, const Dataset& d, int i, const ParamVector& theta, double tau) {
    m.validate(theta, d.p());
    const Moments mo = m.moments(d.row(i).dot(theta.beta), m.scale_of(theta), tau);
    return assemble_matrix(m, d.row(i), mo.ss, mo.sv, mo.vv);
}

Eigen::MatrixXd a_matrix(const Model& m, const Dataset& d, int i, const ParamVector& theta, double gamma) {
    return (1.0 + gamma) * j_matrix(m, d, i, theta, gamma);
}

double dpd_divergence(const Model& m, const Dataset& d, int i, const ParamVector& theta1, const ParamVector& theta2,
                      double gamma) {
    m.validate(theta1, d.p());
    m.validate(theta2, d.p());
    return m.divergence(d.row(i).dot(theta1.beta), m.scale_of(theta1), d.row(i).dot(theta2.beta),
                        m.scale_of(theta2), gamma);
}

Eigen::MatrixXd j_matrix_n(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double tau) {
    m.validate(theta, static_cast<int>(X.cols()));
    const int p = static_cast<int>(X.cols());
    const int d = m.dim(p);
    const double sc = m.scale_of(theta);
    const Eigen::VectorXd eta = X * theta.beta;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const Moments mo = m.moments(eta(i), sc, tau);
        acc.topLeftCorner(p, p).noalias() += mo.ss * X.row(i).transpose() * X.row(i);
        if (m.free_scale()) {
            acc.block(0, p, p, 1) += mo.sv * X.row(i).transpose();
            acc(p, p) += mo.vv;
        }
    }
    if (m.free_scale()) acc.block(p, 0, 1, p) = acc.block(0, p, p, 1).transpose();
    return acc / static_cast<double>(X.rows());
}

Eigen::MatrixXd a_matrix_n(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double gamma) {
    return (1.0 + gamma) * j_matrix_n(m, X, theta, gamma);
}

double dpd_divergence_sum(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta1,
                          const ParamVector& theta2, double gamma) {
    m.validate(theta1, static_cast<int>(X.cols()));
    m.validate(theta2, static_cast<int>(X.cols()));
    const Eigen::VectorXd e1 = X * theta1.beta, e2 = X * theta2.beta;
    const double s1 = m.scale_of(theta1), s2 = m.scale_of(theta2);
    double total = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) total += m.divergence(e1(i), s1, e2(i), s2, gamma);
    return total;
}

double normal_power_integral(double sigma, double a) {
    return std::pow(std::sqrt(2.0 * std::numbers::pi) * sigma, -a) / std::sqrt(1.0 + a);
}

double zeta_tau(double tau, double sigma) {
    return std::pow(2.0 * std::numbers::pi, -0.5 * tau) * std::pow(sigma, -(tau + 2.0)) * std::pow(1.0 + tau, -1.5);
}

double upsilon_beta(double tau, double sigma) {
    return sigma * sigma * std::pow(1.0 + tau * tau / (1.0 + 2.0 * tau), 1.5);
}

double upsilon_sigma2(double tau, double sigma) {
    const double t2 = tau * tau;
    const double s4 = std::pow(sigma, 4);
    return 4.0 * s4 / ((2.0 + t2) * (2.0 + t2)) *
           (2.0 * (1.0 + 2.0 * t2) * std::pow(1.0 + t2 / (1.0 + 2.0 * tau), 2.5) - t2 * (1.0 + tau) * (1.0 + tau));
}

double zeta1(double gamma, double tau, double sigma) {
    return std::pow(std::sqrt(2.0 * std::numbers::pi) * sigma, -gamma) / std::sqrt(1.0 + gamma) *
           std::pow(1.0 + tau * tau / (1.0 + 2.0 * tau), 1.5);
}

}  // namespace dpd
