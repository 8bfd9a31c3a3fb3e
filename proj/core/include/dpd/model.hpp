#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpd/dataset.hpp"

namespace dpd {

enum class Family { NormalLinear, PoissonLog, BernoulliLogit };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

// theta = (beta, scale). scale is sigma for the normal family; it is absent when the model
// fixes it (discrete families, or a normal model with known sigma).
struct ParamVector {
    Eigen::VectorXd beta;
    std::optional<double> scale;
};

// Score of one observation splits as u_beta = s * x_i and u_scale = v.
struct ScoreParts {
    double s = 0.0;
    double v = 0.0;
};

// Integrals of {1, s, v, s^2, s v, v^2} against f^{1+a}.
struct Moments {
    double m0 = 0.0, s = 0.0, v = 0.0, ss = 0.0, sv = 0.0, vv = 0.0;
};

struct QuadNode {
    double y;
    double w;
};

class Model {
public:
    static Model normal();                        // sigma estimated
    static Model normal_known_sigma(double sigma);
    static Model poisson();
    static Model bernoulli();

    Family family() const { return family_; }
    bool free_scale() const { return family_ == Family::NormalLinear && !fixed_sigma_; }
    std::optional<double> known_sigma() const { return fixed_sigma_; }
    int dim(int p) const { return p + (free_scale() ? 1 : 0); }
    std::string name() const;

    // Scale used in evaluations: theta.scale when free, otherwise the fixed value (1 for discrete).
    double scale_of(const ParamVector& theta) const;
    void validate(const ParamVector& theta, int p) const;
    Eigen::VectorXd flatten(const ParamVector& theta) const;
    ParamVector unflatten(const Eigen::VectorXd& v) const;

    // Exponential-family pieces: log f = (y*th - b(th)) / a(phi) + c(y, phi), th = canonical(eta).
    double inverse_link(double eta) const;
    double canonical(double eta) const;
    double cumulant(double th) const;
    double dispersion(double scale) const;
    double base_measure(double y, double scale) const;

    bool valid_response(double y) const;
    void check_response(double y) const;

    // Per-observation kernels in terms of the linear predictor.
    double log_density(double y, double eta, double scale) const;
    ScoreParts score(double y, double eta, double scale) const;
    Moments moments(double eta, double scale, double a) const;
    double divergence(double eta1, double scale1, double eta2, double scale2, double gamma) const;

    // Nodes and weights such that sum w * h(y) approximates the integral (or sum) of smooth h
    // that is dominated by any of the listed densities.
    std::vector<QuadNode> quadrature(std::span<const double> eta, std::span<const double> scale) const;

private:
    Family family_ = Family::NormalLinear;
    std::optional<double> fixed_sigma_;
};

// Operations on observation i of a dataset; vectors and matrices are in theta coordinates
// (beta first, then the scale when it is free).
double log_density(const Model& m, const Dataset& d, int i, double y, const ParamVector& theta);
Eigen::VectorXd score(const Model& m, const Dataset& d, int i, double y, const ParamVector& theta);
double power_integral(const Model& m, const Dataset& d, int i, const ParamVector& theta, double a);
Eigen::VectorXd xi_vector(const Model& m, const Dataset& d, int i, const ParamVector& theta, double tau);
Eigen::MatrixXd j_matrix(const Model& m, const Dataset& d, int i, const ParamVector& theta, double tau);
Eigen::MatrixXd a_matrix(const Model& m, const Dataset& d, int i, const ParamVector& theta, double gamma);
double dpd_divergence(const Model& m, const Dataset& d, int i, const ParamVector& theta1,
                      const ParamVector& theta2, double gamma);

// Averages over the observations.
Eigen::MatrixXd j_matrix_n(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double tau);
Eigen::MatrixXd a_matrix_n(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double gamma);
double dpd_divergence_sum(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta1,
                          const ParamVector& theta2, double gamma);

// Building blocks from scalar moments.
Eigen::VectorXd assemble_vector(const Model& m, const Eigen::Ref<const Eigen::RowVectorXd>& x, double s, double v);
Eigen::MatrixXd assemble_matrix(const Model& m, const Eigen::Ref<const Eigen::RowVectorXd>& x, double ss,
                                double sv, double vv);

// Normal-family constants.
double normal_power_integral(double sigma, double a);        // (sqrt(2 pi) sigma)^{-a} (1+a)^{-1/2}
double zeta_tau(double tau, double sigma);                   // beta-block scale of J under the normal model
double upsilon_beta(double tau, double sigma);               // beta-block asymptotic variance factor
double upsilon_sigma2(double tau, double sigma);             // asymptotic variance of sigma^2 (restricted and not)
double zeta1(double gamma, double tau, double sigma);        // null weight of the normal DPD statistic

}  // namespace dpd
