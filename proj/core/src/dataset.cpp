#include "dpd/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dpd/error.hpp"
#include "dpd/linalg.hpp"

namespace dpd {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

// RFC 4180 records: quoted fields may contain commas, doubled quotes and newlines.
std::vector<std::vector<std::string>> split_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(trim(field));
            field.clear();
            any = true;
        } else if (c == '\n') {
            if (any || !field.empty()) {
                row.push_back(trim(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
        }
    }
    if (quoted) throw DomainError("CSV: unterminated quoted field");
    if (any || !trim(field).empty()) {
        row.push_back(trim(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    double v = 0.0;
    const char* b = cell.data();
    const char* e = b + cell.size();
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (cell.empty() || ec != std::errc() || ptr != e || !std::isfinite(v)) {
        std::ostringstream msg;
        msg << "CSV: non-numeric or missing value '" << cell << "' at data row " << row << ", column '"
            << column << "'";
        throw DomainError(msg.str());
    }
    return v;
}

}  // namespace

Dataset::Dataset(Eigen::MatrixXd x, Eigen::VectorXd response) : X(std::move(x)), y(std::move(response)) {
    require(X.rows() == y.size(), "design and response have different row counts");
    column_names.resize(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) column_names[j] = "x" + std::to_string(j + 1);
    response_name = "y";
}

Dataset Dataset::without_rows(const std::vector<int>& rows) const {
    std::set<int> drop(rows.begin(), rows.end());
    for (int r : drop) require(r >= 0 && r < n(), "row index out of range: " + std::to_string(r));
    const int keep = n() - static_cast<int>(drop.size());
    Dataset out;
    out.X.resize(keep, p());
    out.y.resize(keep);
    int k = 0;
    for (int i = 0; i < n(); ++i) {
        if (drop.count(i)) continue;
        out.X.row(k) = X.row(i);
        out.y(k) = y(i);
        ++k;
    }
    out.column_names = column_names;
    out.response_name = response_name;
    return out;
}

Dataset parse_csv_dataset(const std::string& text, const CsvOptions& opts) {
    auto rows = split_csv(text);
    require(!rows.empty(), "CSV: empty input");
    const auto header = rows.front();
    const std::size_t ncol = header.size();
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != ncol)
            throw DomainError("CSV: data row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                              " fields, header has " + std::to_string(ncol));
    }
    auto find_col = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DomainError("CSV: no column named '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ycol = opts.response.empty() ? ncol - 1 : find_col(opts.response);
    std::vector<std::size_t> xcols;
    if (opts.covariates.empty()) {
        for (std::size_t j = 0; j < ncol; ++j)
            if (j != ycol) xcols.push_back(j);
    } else {
        for (const auto& c : opts.covariates) xcols.push_back(find_col(c));
    }

    std::set<int> drop;
    const int ndata = static_cast<int>(rows.size()) - 1;
    for (int r : opts.drop_rows) {
        require(r >= 1 && r <= ndata, "drop-rows index " + std::to_string(r) + " outside 1.." + std::to_string(ndata));
        drop.insert(r);
    }
    const int n = ndata - static_cast<int>(drop.size());
    const int off = opts.add_intercept ? 1 : 0;
    Dataset d;
    d.X.resize(n, static_cast<Eigen::Index>(xcols.size()) + off);
    d.y.resize(n);
    int k = 0;
    for (int r = 1; r <= ndata; ++r) {
        const auto& row = rows[r];
        // Validate every row, including dropped ones, so that bad files fail loudly.
        const double yv = parse_cell(row[ycol], r, header[ycol]);
        std::vector<double> xv(xcols.size());
        for (std::size_t j = 0; j < xcols.size(); ++j) xv[j] = parse_cell(row[xcols[j]], r, header[xcols[j]]);
        if (drop.count(r)) continue;
        if (off) d.X(k, 0) = 1.0;
        for (std::size_t j = 0; j < xcols.size(); ++j) d.X(k, static_cast<Eigen::Index>(j) + off) = xv[j];
        d.y(k) = yv;
        ++k;
    }
    if (off) d.column_names.push_back("(Intercept)");
    for (auto j : xcols) d.column_names.push_back(header[j]);
    d.response_name = header[ycol];
    return d;
}

Dataset read_csv_dataset(const std::string& path, const CsvOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot open data file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv_dataset(ss.str(), opts);
}

DesignReport design_diagnostics(const Dataset& data) {
    DesignReport rep;
    rep.n = data.n();
    rep.p = data.p();
    if (rep.n == 0 || rep.p == 0) {
        rep.rank_deficient = true;
        rep.warnings.push_back("empty design");
        return rep;
    }
    rep.rank = linalg::numerical_rank(data.X);
    rep.rank_deficient = rep.rank < rep.p;
    const Eigen::MatrixXd xtx = data.X.transpose() * data.X;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(xtx / rep.n);
    rep.min_eigen_xtx_n = std::max(0.0, es.eigenvalues()(0));
    rep.condition_number = linalg::condition_number(data.X);
    rep.max_abs_entry = data.X.cwiseAbs().maxCoeff();

    // (X'X)^+ through the eigen-decomposition so rank-deficient designs still report finite leverage.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> full(xtx);
    const double cut = 1e-10 * full.eigenvalues().cwiseAbs().maxCoeff();
    Eigen::VectorXd inv(rep.p);
    for (int j = 0; j < rep.p; ++j) inv(j) = full.eigenvalues()(j) > cut ? 1.0 / full.eigenvalues()(j) : 0.0;
    const Eigen::MatrixXd pinv = full.eigenvectors() * inv.asDiagonal() * full.eigenvectors().transpose();
    double lev = 0.0;
    for (int i = 0; i < rep.n; ++i) lev = std::max(lev, data.X.row(i).dot(pinv * data.X.row(i).transpose()));
    rep.max_leverage_n = rep.n * lev;

    if (rep.rank_deficient) rep.warnings.push_back("design is rank deficient (rank " + std::to_string(rep.rank) + " < " + std::to_string(rep.p) + ")");
    if (rep.n < rep.p) rep.warnings.push_back("fewer observations than columns");
    if (!rep.rank_deficient && rep.min_eigen_xtx_n < 1e-8) rep.warnings.push_back("X'X/n is nearly singular");
    return rep;
}

void require_full_rank(const Dataset& data) {
    require(data.n() >= data.p(), "design has fewer rows than columns");
    require(linalg::numerical_rank(data.X) == data.p(), "singular design: X does not have full column rank");
}

}  // namespace dpd
