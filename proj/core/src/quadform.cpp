#include "dpd/quadform.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/special_functions/gamma.hpp>

#include "dpd/error.hpp"

namespace dpd {

namespace {

constexpr double kPoissonTail = 1e-14;

double log_poisson_pmf(int k, double mu) {
    return k * std::log(mu) - mu - std::lgamma(k + 1.0);
}

double central_cdf(double x, double df) {
    if (x <= 0.0) return 0.0;
    return boost::math::gamma_p(0.5 * df, 0.5 * x);
}

double central_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

// Poisson(ncp/2) mixture of central chi-squares, summed outward from the mode.
template <class F>
double poisson_mixture(double ncp, int df, const F& central) {
    const double mu = 0.5 * ncp;
    const int mode = static_cast<int>(std::floor(mu));
    double total = 0.0;
    for (int k = mode;; ++k) {
        const double w = std::exp(log_poisson_pmf(k, mu));
        total += w * central(df + 2.0 * k);
        const double ratio = mu / (k + 1.0);
        if (ratio < 1.0 && w * ratio / (1.0 - ratio) < kPoissonTail) break;
        if (k - mode > 100000) throw NumericalError("non-central chi-square series did not converge");
    }
    for (int k = mode - 1; k >= 0; --k) {
        const double w = std::exp(log_poisson_pmf(k, mu));
        total += w * central(df + 2.0 * k);
        const double ratio = k / mu;
        if (w * ratio / (1.0 - ratio) < kPoissonTail) break;
    }
    return std::clamp(total, 0.0, 1.0);
}

void check_chisq_args(double x, int df, double ncp) {
    require(std::isfinite(x) && x >= 0.0, "chi-square argument must be non-negative");
    require(df >= 1, "chi-square degrees of freedom must be >= 1");
    require(std::isfinite(ncp) && ncp >= 0.0, "non-centrality must be non-negative");
}

// Walks the mixture weights c_v of sum_j w_j chi2_1(d_j) = sum_v c_v * beta * chi2_{r+2v},
// beta = min w. Calls visit(v, c_v) and stops when visit returns false or the mass is exhausted.
template <class Visit>
TailResult walk_series(const QuadFormDist& dist, const SeriesControl& ctl, const Visit& visit) {
    require(ctl.max_terms >= 1, "max_terms must be positive");
    require(ctl.target_error > 0.0, "target_error must be positive");
    const int r = dist.rank();
    require(r >= 1, "quadratic form has no retained weights");
    const double beta = dist.min_weight();

    std::vector<double> a(r), d(r), apow(r, 1.0);
    double log_c0 = 0.0;
    for (int j = 0; j < r; ++j) {
        a[j] = 1.0 - beta / dist.weights[j];
        d[j] = dist.noncentralities[j];
        log_c0 += 0.5 * std::log(beta / dist.weights[j]) - 0.5 * d[j];
    }

    std::vector<double> g;        // g[m-1] = G_m
    std::vector<double> scaled;   // c_v * exp(-log_factor)
    double log_factor = log_c0;
    scaled.push_back(1.0);

    TailResult out;
    double mass = std::exp(log_factor);
    out.terms = 1;
    if (!visit(0, mass)) {
        out.residual_bound = std::max(0.0, 1.0 - mass);
        return out;
    }
    for (int v = 1;; ++v) {
        if (1.0 - mass <= ctl.target_error) break;
        if (v > ctl.max_terms) {
            out.converged = false;
            break;
        }
        double gm = 0.0;
        for (int j = 0; j < r; ++j) {
            gm += apow[j] * a[j] + v * d[j] * (1.0 - a[j]) * apow[j];
            apow[j] *= a[j];
        }
        g.push_back(gm);
        double acc = 0.0;
        for (int k = 0; k < v; ++k) acc += g[v - k - 1] * scaled[k];
        double cv = acc / (2.0 * v);
        scaled.push_back(cv);
        if (cv > 1e200) {
            for (double& s : scaled) s *= 1e-200;
            log_factor += 200.0 * std::log(10.0);
            cv = scaled.back();
        }
        const double c = cv * std::exp(log_factor);
        mass += c;
        out.terms = v + 1;
        if (!visit(v, c)) break;
    }
    out.residual_bound = std::max(0.0, 1.0 - mass);
    return out;
}

}  // namespace

QuadFormDist::QuadFormDist(std::vector<double> w, std::vector<double> delta)
    : weights(std::move(w)), noncentralities(std::move(delta)) {
    require(weights.size() == noncentralities.size(), "weights and noncentralities differ in length");
    for (double x : weights) require(std::isfinite(x) && x > 0.0, "quadratic-form weights must be positive");
    for (double x : noncentralities)
        require(std::isfinite(x) && x >= 0.0, "noncentralities must be non-negative");
}

QuadFormDist::QuadFormDist(std::vector<double> w)
    : QuadFormDist(w, std::vector<double>(w.size(), 0.0)) {}

QuadFormDist QuadFormDist::from_spectrum(const Eigen::VectorXd& eigenvalues,
                                         const Eigen::VectorXd& noncentralities, double rel_tol) {
    require(eigenvalues.size() == noncentralities.size(), "spectrum and noncentralities differ in length");
    require(eigenvalues.size() > 0, "empty spectrum");
    const double cut = rel_tol * eigenvalues.cwiseAbs().maxCoeff();
    std::vector<double> w, d;
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
        if (eigenvalues(i) > cut) {
            w.push_back(eigenvalues(i));
            d.push_back(std::max(0.0, noncentralities(i)));
        }
    }
    return QuadFormDist(std::move(w), std::move(d));
}

QuadFormDist QuadFormDist::from_spectrum(const Eigen::VectorXd& eigenvalues, double rel_tol) {
    return from_spectrum(eigenvalues, Eigen::VectorXd::Zero(eigenvalues.size()), rel_tol);
}

double QuadFormDist::min_weight() const {
    require(!weights.empty(), "empty quadratic form");
    return *std::min_element(weights.begin(), weights.end());
}

double QuadFormDist::mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) m += weights[i] * (1.0 + noncentralities[i]);
    return m;
}

double QuadFormDist::variance() const {
    double v = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i)
        v += 2.0 * weights[i] * weights[i] * (1.0 + 2.0 * noncentralities[i]);
    return v;
}

double chisq_cdf(double x, int df, double ncp) {
    check_chisq_args(x, df, ncp);
    if (x == 0.0) return 0.0;
    if (ncp == 0.0) return central_cdf(x, df);
    return poisson_mixture(ncp, df, [x](double k) { return central_cdf(x, k); });
}

double chisq_sf(double x, int df, double ncp) {
    check_chisq_args(x, df, ncp);
    if (x == 0.0) return 1.0;
    if (ncp == 0.0) return central_sf(x, df);
    return poisson_mixture(ncp, df, [x](double k) { return central_sf(x, k); });
}

double chisq_quantile(double p, int df, double ncp) {
    require(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
    check_chisq_args(0.0, df, ncp);
    if (ncp == 0.0) return 2.0 * boost::math::gamma_p_inv(0.5 * df, p);
    double lo = 0.0, hi = df + ncp + 10.0 * std::sqrt(2.0 * (df + 2.0 * ncp));
    while (chisq_cdf(hi, df, ncp) < p) {
        lo = hi;
        hi *= 2.0;
    }
    for (int it = 0; it < 300 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (chisq_cdf(mid, df, ncp) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<double> qf_mixture_weights(const QuadFormDist& dist, const SeriesControl& ctl) {
    std::vector<double> c;
    walk_series(dist, ctl, [&c](int, double cv) {
        c.push_back(cv);
        return true;
    });
    return c;
}

TailResult qf_upper_tail(const QuadFormDist& dist, double x, const SeriesControl& ctl) {
    require(std::isfinite(x), "tail argument must be finite");
    require(dist.rank() >= 1, "quadratic form has no retained weights");
    if (x <= 0.0) return TailResult{1.0, 0.0, 0, true};

    const int r = dist.rank();
    const double y = x / dist.min_weight();
    const double half = 0.5 * y;
    double tail = central_sf(y, r);
    double log_step = 0.5 * r * std::log(half) - half - std::lgamma(0.5 * r + 1.0);
    double prob = 0.0;
    int last = -1;
    TailResult out = walk_series(dist, ctl, [&](int v, double cv) {
        while (last < v - 1) {
            tail += std::exp(log_step);
            ++last;
            log_step += std::log(half) - std::log(0.5 * r + last + 1.0);
        }
        prob += cv * std::min(1.0, tail);
        return true;
    });
    out.probability = std::clamp(prob, 0.0, 1.0);
    return out;
}

double qf_quantile(const QuadFormDist& dist, double p, const SeriesControl& ctl) {
    require(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
    const double target = 1.0 - p;
    double lo = 0.0;
    double hi = dist.mean() + 6.0 * std::sqrt(dist.variance()) + 1e-12;
    int grow = 0;
    while (qf_upper_tail(dist, hi, ctl).probability > target) {
        lo = hi;
        hi *= 2.0;
        if (++grow > 200) throw NumericalError("quadratic-form quantile bracket failed");
    }
    for (int it = 0; it < 200; ++it) {
        if (hi - lo <= 1e-13 * std::max(1e-300, hi)) return 0.5 * (lo + hi);
        const double mid = 0.5 * (lo + hi);
        (qf_upper_tail(dist, mid, ctl).probability > target ? lo : hi) = mid;
    }
    throw NumericalError("quadratic-form quantile bisection did not converge");
}

McTail qf_mc_tail(const QuadFormDist& dist, double x, std::int64_t n_draws, std::uint64_t seed) {
    require(n_draws >= 1000, "Monte Carlo oracle needs at least 1000 draws");
    require(dist.rank() >= 1, "quadratic form has no retained weights");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    const int r = dist.rank();
    std::vector<double> shift(r);
    for (int j = 0; j < r; ++j) shift[j] = std::sqrt(dist.noncentralities[j]);
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < n_draws; ++i) {
        double q = 0.0;
        for (int j = 0; j < r; ++j) {
            const double e = z(rng) + shift[j];
            q += dist.weights[j] * e * e;
        }
        if (q > x) ++hits;
    }
    const double p = static_cast<double>(hits) / static_cast<double>(n_draws);
    return McTail{p, std::sqrt(p * (1.0 - p) / static_cast<double>(n_draws))};
}

}  // namespace dpd
