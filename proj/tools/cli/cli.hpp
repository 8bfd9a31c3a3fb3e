#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dpd::cli {

struct RunConfig {
    std::string command;                 // fit, test, power, samplesize, influence, simulate, diagnostics
    std::string family = "normal";
    std::optional<double> known_sigma;   // normal model with sigma fixed at this value
    std::string data_path;
    std::string response;
    bool intercept = true;
    std::vector<std::string> covariates;
    std::vector<int> drop_rows;          // 1-based

    // Hypothesis: beta0 (simple, or pinned composite) or constraint rows with l0.
    std::vector<double> beta0;
    std::optional<double> sigma0;        // simple test with sigma estimated: the hypothesized sigma
    std::vector<std::vector<double>> constraint_rows;   // each row c_k: c_k' beta = l0_k
    std::vector<double> l0;
    std::string scale = "auto";          // auto, free, fixed
    std::string hypothesis_kind = "auto";   // auto, simple, composite

    std::vector<double> tau{0.0};
    std::vector<double> gamma;           // empty: paired with tau
    double alpha = 0.05;
    std::string method = "generic";      // generic or closed
    std::string hessian = "expected";

    // power / samplesize
    std::vector<double> theta_star;      // beta*; the scale* is appended via sigma_star
    std::optional<double> sigma_star;
    double n_power = 0.0;                // 0: the data size
    double eta = 0.8;
    std::vector<double> delta;           // contiguous alternative
    double epsilon = 0.0;
    std::optional<double> contamination_point;

    // influence
    std::string if_target = "estimator";
    std::string if_order = "first";
    int if_index = 1;
    std::optional<double> if_t;
    double grid_half_width = 20.0;
    int grid_points = 401;
    bool pif = false;

    // simulate
    std::string scenario_path;
    std::vector<int> convergence_sizes;

    std::string output_path;             // JSON; stdout when empty
    std::string csv_path;
    std::uint64_t seed = 0x5eed5eedULL;
    int restarts = 5;
    int max_terms = 10000;
    double target_error = 1e-8;
    bool strict = false;
};

// Parses argv; throws dpd::DomainError on malformed arguments. Returns nullopt after --help.
std::optional<RunConfig> parse_args(int argc, const char* const* argv, std::ostream& out);

// Executes the command. Returns 0 on success, 2 on validation errors, 3 on numerical failures.
int run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// parse_args + run with the same exit-code mapping.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dpd::cli
