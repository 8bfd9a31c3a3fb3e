#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dpd/dataset.hpp"
#include "dpd/dpdtest.hpp"
#include "dpd/estimate.hpp"
#include "dpd/model.hpp"

namespace dpd {

enum class TestKind { Simple, Composite };
enum class SimPurpose { Size, Power };
// Covariate: shifted covariates enter the linear predictor (contaminated covariate distribution).
// Leverage: responses come from the unshifted covariates (bad leverage points).
enum class XPlacement { Covariate, Leverage };
std::string to_string(TestKind k);
std::string to_string(SimPurpose p);
std::string to_string(XPlacement x);

struct Scenario {
    Family family = Family::NormalLinear;
    bool known_sigma = false;
    int n = 100;
    bool intercept = true;
    int covariates = 1;                       // random N(0, sigma_x^2) columns
    Eigen::VectorXd beta = Eigen::VectorXd::Ones(2);   // true coefficients, intercept first
    double sigma = 1.0;
    double sigma_x = 1.0;
    // Contamination: ceil(e_x n) rows get every random covariate shifted by k_x sigma_x, placed per
    // x_placement; ceil(e_err n) rows (drawn independently) get the error shifted by k_e sigma.
    double e_x = 0.0;
    double e_err = 0.0;
    double k_x = 5.0;
    double k_e = 8.0;
    XPlacement x_placement = XPlacement::Covariate;
    TestKind test = TestKind::Composite;
    std::optional<Eigen::MatrixXd> L;         // composite constraint matrix; identity when empty
    std::optional<Eigen::VectorXd> null_beta; // hypothesized coefficients; beta when empty
    SimPurpose purpose = SimPurpose::Size;
    std::vector<std::pair<double, double>> grid{{0.0, 0.0}};   // (tau, gamma)
    double alpha = 0.05;
    int replicates = 1000;
    std::uint64_t base_seed = 1;
    int threads = 0;                          // 0: DPD_THREADS or hardware concurrency
    FitOptions fit;

    int p() const { return covariates + (intercept ? 1 : 0); }
    void validate() const;
    Model model() const;
    Hypothesis hypothesis() const;
};

// Seed of replicate i (0-based): splitmix64 of base_seed + (i + 1) * golden gamma.
std::uint64_t replicate_seed(std::uint64_t base_seed, std::uint64_t index);

Dataset generate_dataset(const Scenario& s, std::uint64_t replicate_index);

struct SimCell {
    double tau = 0.0;
    double gamma = 0.0;
    int n = 0;
    int replicates = 0;
    int used = 0;          // replicates entering the rate
    int rejections = 0;
    int failures = 0;
    double rate = 0.0;
    double std_error = 0.0;
    bool flagged = false;  // more than 5% failures
};

struct SimResult {
    Scenario scenario;
    std::uint64_t seed = 0;
    std::vector<SimCell> cells;
};

SimResult run_size_power(const Scenario& s);

struct ConvergenceRow {
    int n = 0;
    double tau = 0.0;
    double gamma = 0.0;
    double empirical = 0.0;
    double std_error = 0.0;
    double asymptotic = 0.0;
    double gap = 0.0;
    int failures = 0;
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
    double max_gap = 0.0;
};

// Data generated at beta + delta / sqrt(n), tested against beta, for each n; compared with the
// contiguous power at the covariate law's limiting design.
ConvergenceTable run_power_convergence(const Scenario& base, const std::vector<int>& sizes,
                                       const Eigen::VectorXd& delta);

// Asymptotic contiguous power for the scenario's covariate law.
double scenario_contiguous_power(const Scenario& s, const Eigen::VectorXd& delta, double tau, double gamma);

int default_thread_count();

}  // namespace dpd
