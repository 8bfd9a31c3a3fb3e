#pragma once

#include <functional>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "dpd/dpdtest.hpp"

namespace dpd {

// Point contamination: a single observation (1-based index) or every observation at once.
struct ContaminationSpec {
    std::optional<int> direction;   // 1..n; empty means all directions
    Eigen::VectorXd points;         // one value for a single direction, n values otherwise
    double epsilon = 0.0;

    static ContaminationSpec single(int index, double t, double epsilon = 0.0);
    static ContaminationSpec all(const Eigen::VectorXd& t, double epsilon = 0.0);
    void validate(int n) const;
};

enum class IFOrder { First, Second };
enum class IFTarget { Estimator, RestrictedEstimator, SimpleTest, CompositeTest };
std::string to_string(IFOrder o);
std::string to_string(IFTarget t);

struct IFReport {
    IFOrder order = IFOrder::First;
    IFTarget target = IFTarget::Estimator;
    Eigen::VectorXd value;               // length 1 for the test targets
    std::optional<bool> bounded_in_t;    // set when a grid scan was run
};

// Contaminated estimating-function sum: D_{i0}(t) or sum_i D_i(t_i), at theta.
Eigen::VectorXd contaminated_score(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double tau,
                                   const ContaminationSpec& spec);

// (1/n) Psi_n^-1 D.
Eigen::VectorXd if_mdpde(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double tau,
                         const ContaminationSpec& spec);
Eigen::VectorXd if_mdpde(const Model& m, const Dataset& d, const MdpdeFit& fit, const ContaminationSpec& spec);

// (1/n) Q^-1 Psi0' D0 with Psi0 and D0 projected on the constraint tangent space and
// Q = Psi0' Psi0 + Upsilon Upsilon'.
Eigen::VectorXd if_rmdpde(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta, double tau,
                          const LinearConstraint& c, const ContaminationSpec& spec);
Eigen::VectorXd if_rmdpde(const Model& m, const Dataset& d, const RmdpdeFit& fit, const LinearConstraint& c,
                          const ContaminationSpec& spec);

// Gradients of sum_i d_gamma(f_i(theta1), f_i(theta2)) in theta1 and in theta2, by quadrature.
Eigen::VectorXd divergence_gradient_first(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta1,
                                          const ParamVector& theta2, double gamma);
Eigen::VectorXd divergence_gradient_second(const Model& m, const Eigen::MatrixXd& X, const ParamVector& theta1,
                                           const ParamVector& theta2, double gamma);

// First-order IF of the functional sum_i d_gamma at the null point (simple: theta0; composite: the
// supplied null point). The test statistic is twice this functional.
double if1_test(const Model& m, const Eigen::MatrixXd& X, const Hypothesis& h, double tau, double gamma,
                const ContaminationSpec& spec);
// Second-order IF at the null: simple (1/n) D' Psi^-1 A Psi^-1 D; composite n W' A W with
// W = IF(theta_hat) - IF(theta_tilde).
double if2_test(const Model& m, const Eigen::MatrixXd& X, const Hypothesis& h, double tau, double gamma,
                const ContaminationSpec& spec);
// Closed form for the normal simple test with known sigma0 at a single direction.
double normal_if2_simple(const Eigen::MatrixXd& X, int index, double t, const Eigen::VectorXd& beta0, double sigma0,
                         double tau, double gamma);

struct PifLif {
    double pif = 0.0;            // from the K vector (simple) or the epsilon derivative (composite)
    double lif = 0.0;
    double pif_numeric = 0.0;    // epsilon derivative of the contaminated power
    double lif_numeric = 0.0;
    bool stable = true;          // the two routes agree within 1e-3
    Eigen::VectorXd k_vector;    // d power / d mean at delta (simple only)
};

// Gradient of the non-central tail at the critical value with respect to the mean shift.
Eigen::VectorXd power_mean_gradient(const NullStructure& ns, double critical_value, const Eigen::VectorXd& mean,
                                    const SeriesControl& series, double rel_step = 1e-4);

PifLif pif_lif(const Model& m, const Eigen::MatrixXd& design, const Hypothesis& h, const Eigen::VectorXd& delta,
               const ContaminationSpec& spec, double tau, double gamma, double alpha, const TestOptions& opts = {});

struct GridScan {
    Eigen::VectorXd t;
    Eigen::VectorXd value;
    double max_abs = 0.0;
    double argmax = 0.0;
    double max_abs_wide = 0.0;   // on the doubled grid
    bool bounded = false;
};

// Scans f over center +/- half_width * scale with `points` points, and over twice that range;
// bounded when the wider maximum does not exceed the narrower one by more than 1%.
GridScan scan_grid(const std::function<double(double)>& f, double center, double scale, double half_width = 20.0,
                   int points = 401);

}  // namespace dpd
