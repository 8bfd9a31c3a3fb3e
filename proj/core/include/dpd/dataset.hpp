#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dpd {

struct Dataset {
    Eigen::MatrixXd X;  // n x p fixed design
    Eigen::VectorXd y;
    std::vector<std::string> column_names;  // p names, "(Intercept)" when added
    std::string response_name;

    Dataset() = default;
    Dataset(Eigen::MatrixXd x, Eigen::VectorXd response);

    int n() const { return static_cast<int>(X.rows()); }
    int p() const { return static_cast<int>(X.cols()); }
    auto row(int i) const { return X.row(i); }

    // Copy without the given 0-based rows.
    Dataset without_rows(const std::vector<int>& rows) const;
};

struct CsvOptions {
    std::string response;           // response column name; empty means the last column
    bool add_intercept = true;
    std::vector<std::string> covariates;  // empty means every non-response column
    std::vector<int> drop_rows;     // 1-based data rows, header excluded
};

// Reads a header-first CSV. Non-numeric or missing cells raise DomainError naming row and column.
Dataset read_csv_dataset(const std::string& path, const CsvOptions& opts = {});
Dataset parse_csv_dataset(const std::string& text, const CsvOptions& opts = {});

struct DesignReport {
    int n = 0;
    int p = 0;
    int rank = 0;
    bool rank_deficient = false;
    double min_eigen_xtx_n = 0.0;   // smallest eigenvalue of X'X/n
    double max_leverage_n = 0.0;    // n * max_i x_i'(X'X)^+ x_i
    double max_abs_entry = 0.0;
    double condition_number = 0.0;
    std::vector<std::string> warnings;
};

DesignReport design_diagnostics(const Dataset& data);

// Throws DomainError when the design is rank deficient or has fewer rows than columns.
void require_full_rank(const Dataset& data);

}  // namespace dpd
