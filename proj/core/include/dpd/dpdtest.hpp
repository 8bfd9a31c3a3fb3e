#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dpd/estimate.hpp"
#include "dpd/quadform.hpp"
#include "dpd/restrict.hpp"

namespace dpd {

struct SimpleHypothesis {
    ParamVector theta0;
};

// L' beta = l0. null_point is a member of the null set, needed only by the power tools.
struct CompositeHypothesis {
    LinearConstraint constraint;
    std::optional<ParamVector> null_point;
};

using Hypothesis = std::variant<SimpleHypothesis, CompositeHypothesis>;

void validate_hypothesis(const Model& m, int p, const Hypothesis& h);

enum class TestMethod { GenericEigen, NormalSimpleClosed, NormalCompositeClosed };
std::string to_string(TestMethod m);
TestMethod test_method_from_string(const std::string& s);

struct TestOptions {
    SeriesControl series;
    double rank_tol = 1e-10;
    bool compute_critical_value = true;
    // Closed normal-regression forms when the model allows them; otherwise the eigenvalue path.
    bool prefer_closed_form = false;
    FitOptions fit;
    HessianMode hessian = HessianMode::Expected;
};

struct TestReport {
    double statistic = 0.0;
    double tau = 0.0;
    double gamma = 0.0;
    double alpha = 0.05;
    QuadFormDist null_dist;
    Eigen::VectorXd spectrum;          // all eigenvalues of the symmetrized product, descending
    double critical_value = 0.0;       // NaN when not requested
    double p_value = 1.0;
    double p_value_residual = 0.0;
    TestMethod method = TestMethod::GenericEigen;
    ParamVector theta_hat;
    std::optional<ParamVector> theta_tilde;
    bool converged = true;
};

// Null law of the statistic: A = A_n^gamma at the null point, Sigma the limiting covariance of
// sqrt(n)(theta_hat - theta_null) (composite: of sqrt(n)(theta_hat - theta_tilde)).
struct NullStructure {
    Eigen::MatrixXd a;
    Eigen::MatrixXd sigma;
    Eigen::MatrixXd sigma_sqrt;
    Eigen::MatrixXd sigma_pinv_sqrt;
    Eigen::VectorXd spectrum;
    Eigen::MatrixXd eigenvectors;   // columns for the retained eigenvalues
    QuadFormDist dist;
    // Composite only: P_n and Psi_n at the null point.
    Eigen::MatrixXd pn;
    Eigen::MatrixXd psi;

    // Non-central law of W'AW when W ~ N(mean, sigma).
    QuadFormDist shifted(const Eigen::VectorXd& mean) const;
};

NullStructure null_structure_simple(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta0, double tau,
                                    double gamma, double rank_tol = 1e-10);
NullStructure null_structure_composite(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta_null,
                                       double tau, double gamma, const LinearConstraint& c,
                                       double rank_tol = 1e-10);

TestReport dpdts_simple(const Model& m, const Dataset& d, const ParamVector& theta0, double tau, double gamma,
                        double alpha, const TestOptions& opts = {});
TestReport dpdts_simple(const Model& m, const Dataset& d, const MdpdeFit& fit, const ParamVector& theta0,
                        double gamma, double alpha, const TestOptions& opts = {});
TestReport dpdts_composite(const Model& m, const Dataset& d, const LinearConstraint& c, double tau, double gamma,
                           double alpha, const TestOptions& opts = {});
TestReport dpdts_composite(const Model& m, const Dataset& d, const MdpdeFit& fit, const RmdpdeFit& rfit,
                           const LinearConstraint& c, double gamma, double alpha, const TestOptions& opts = {});
TestReport dpd_test(const Model& m, const Dataset& d, const Hypothesis& h, double tau, double gamma, double alpha,
                    const TestOptions& opts = {});

// Normal-regression closed forms.
double normal_simple_statistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta_hat,
                               const Eigen::VectorXd& beta0, double sigma0, double gamma);
double normal_composite_statistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta_hat, double sigma_hat,
                                  const Eigen::VectorXd& beta_tilde, double sigma_tilde, double gamma);

struct PowerResult {
    double power = 0.0;
    bool degenerate = false;
    double critical_value = 0.0;
    double sigma = 0.0;              // sigma_{tau,gamma}
    double mean_divergence = 0.0;    // average divergence between the alternative and the null point
    ParamVector null_point;
};

// Precomputed pieces of the power approximation; evaluate(n) is cheap.
class PowerCurve {
public:
    PowerCurve(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h, const ParamVector& theta_star,
               double tau, double gamma, double alpha, const TestOptions& opts = {});
    PowerResult evaluate(double n) const;

private:
    PowerResult base_;
};

// The design's row averages stand in for the limits of the design sums.
PowerResult approx_power(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h,
                         const ParamVector& theta_star, double n, double tau, double gamma, double alpha,
                         const TestOptions& opts = {});
long required_sample_size(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h,
                          const ParamVector& theta_star, double eta, double tau, double gamma, double alpha,
                          const TestOptions& opts = {});

// Asymptotic power at theta_null + delta / sqrt(n). delta has p entries (beta shift) or dim entries.
double contiguous_power(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h,
                        const Eigen::VectorXd& delta, double tau, double gamma, double alpha,
                        const TestOptions& opts = {});
// As above with contamination of mass epsilon at t_i in every direction i (t has one entry per row).
double contaminated_power(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h,
                          const Eigen::VectorXd& delta, double epsilon, const Eigen::VectorXd& t, double tau,
                          double gamma, double alpha, const TestOptions& opts = {});
// Normal simple test with known sigma: 1 - G_{p,delta}(chi2_{p,alpha}), delta = t / upsilon_beta.
double normal_contiguous_power(int p, double t, double tau, double sigma, double alpha);

// The point of the null set used by the power tools.
ParamVector null_point_of(const Model& m, const Hypothesis& h);
// Mean shift of sqrt(n)(theta_hat - theta_null) (composite: of sqrt(n)(theta_hat - theta_tilde)).
Eigen::VectorXd mean_shift(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h,
                           const NullStructure& ns, const Eigen::VectorXd& delta, double epsilon,
                           const Eigen::VectorXd& t, double tau);
// Limiting covariance of sqrt(n)(theta_hat - theta_star) with sqrt(n)(theta_tilde - theta_null) when
// theta_star is true and theta_null is the projection of theta_star onto the null set.
Eigen::MatrixXd composite_cross_covariance(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta_star,
                                           const ParamVector& theta_null, double tau, const LinearConstraint& c);
// (1/n) sum_i D_i(t_i) at theta: the all-direction estimating-function average.
Eigen::VectorXd mean_estimating_function(const Model& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& t,
                                         const ParamVector& theta, double tau);

}  // namespace dpd
