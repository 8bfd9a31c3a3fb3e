#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace dpd {

// Law of Q = sum_i w_i * chi2_1(delta_i) with w_i > 0, delta_i >= 0.
struct QuadFormDist {
    std::vector<double> weights;
    std::vector<double> noncentralities;

    QuadFormDist() = default;
    // Validates: equal lengths, weights > 0, noncentralities >= 0.
    QuadFormDist(std::vector<double> w, std::vector<double> delta);
    // Central law with the given weights.
    explicit QuadFormDist(std::vector<double> w);

    // Drops weights with |w| <= rel_tol * max|w| (and their noncentralities).
    static QuadFormDist from_spectrum(const Eigen::VectorXd& eigenvalues,
                                      const Eigen::VectorXd& noncentralities,
                                      double rel_tol = 1e-10);
    static QuadFormDist from_spectrum(const Eigen::VectorXd& eigenvalues, double rel_tol = 1e-10);

    int rank() const { return static_cast<int>(weights.size()); }
    double min_weight() const;
    double mean() const;
    double variance() const;
};

struct SeriesControl {
    int max_terms = 10000;
    double target_error = 1e-8;
};

struct TailResult {
    double probability = 0.0;
    double residual_bound = 0.0;  // 1 - sum of the mixture weights used
    int terms = 0;
    bool converged = true;
};

struct McTail {
    double probability = 0.0;
    double std_error = 0.0;
};

// P(chi2_{df}(ncp) <= x).
double chisq_cdf(double x, int df, double ncp = 0.0);
double chisq_sf(double x, int df, double ncp = 0.0);
double chisq_quantile(double p, int df, double ncp = 0.0);

// Mixture weights c_0..c_{N} of the central chi-square expansion (r + 2v degrees of freedom,
// scale min weight). Stops when 1 - sum <= target_error or at max_terms.
std::vector<double> qf_mixture_weights(const QuadFormDist& dist, const SeriesControl& ctl = {});

TailResult qf_upper_tail(const QuadFormDist& dist, double x, const SeriesControl& ctl = {});
double qf_quantile(const QuadFormDist& dist, double p, const SeriesControl& ctl = {});
McTail qf_mc_tail(const QuadFormDist& dist, double x, std::int64_t n_draws, std::uint64_t seed);

}  // namespace dpd
