#include "dpd/simharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <random>
#include <thread>

#include "dpd/error.hpp"
#include "dpd/restrict.hpp"

namespace dpd {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

int contaminated_count(double frac, int n) {
    return static_cast<int>(std::ceil(frac * n - 1e-9));
}

std::vector<int> pick_rows(std::mt19937_64& rng, int n, int k) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int j = 0; j < k; ++j) {
        std::uniform_int_distribution<int> u(j, n - 1);
        std::swap(idx[j], idx[u(rng)]);
    }
    idx.resize(k);
    return idx;
}

// Outcome codes per replicate and grid cell.
enum : std::uint8_t { kAccept = 0, kReject = 1, kFail = 2 };

std::vector<std::uint8_t> run_replicate(const Scenario& s, const Model& m, const Hypothesis& h, std::uint64_t index) {
    std::vector<std::uint8_t> out(s.grid.size(), kFail);
    const Dataset d = generate_dataset(s, index);
    TestOptions topts;
    topts.compute_critical_value = false;
    topts.fit = s.fit;
    std::map<double, std::vector<std::size_t>> by_tau;
    for (std::size_t k = 0; k < s.grid.size(); ++k) by_tau[s.grid[k].first].push_back(k);
    for (const auto& [tau, cells] : by_tau) {
        try {
            const MdpdeFit fit = fit_mdpde(m, d, tau, std::nullopt, s.fit);
            if (!fit.converged) continue;
            std::optional<RmdpdeFit> rfit;
            if (s.test == TestKind::Composite) {
                const auto& c = std::get<CompositeHypothesis>(h).constraint;
                rfit = fit_rmdpde(m, d, tau, c, std::nullopt, s.fit);
                if (!rfit->converged) continue;
            }
            for (std::size_t k : cells) {
                const double gamma = s.grid[k].second;
                try {
                    const TestReport rep =
                        rfit ? dpdts_composite(m, d, fit, *rfit, std::get<CompositeHypothesis>(h).constraint, gamma,
                                               s.alpha, topts)
                             : dpdts_simple(m, d, fit, std::get<SimpleHypothesis>(h).theta0, gamma, s.alpha, topts);
                    out[k] = rep.p_value < s.alpha ? kReject : kAccept;
                } catch (const std::exception&) {
                    out[k] = kFail;
                }
            }
        } catch (const std::exception&) {
            // cells stay marked as failures
        }
    }
    return out;
}

// Order-independent parallel map over replicates; results are stored by index.
std::vector<std::vector<std::uint8_t>> run_all(const Scenario& s) {
    const Model m = s.model();
    const Hypothesis h = s.hypothesis();
    std::vector<std::vector<std::uint8_t>> results(static_cast<std::size_t>(s.replicates));
    const int workers = std::max(1, std::min(s.threads > 0 ? s.threads : default_thread_count(), s.replicates));
    std::atomic<int> next{0};
    auto work = [&] {
        for (int i = next++; i < s.replicates; i = next++) {
            results[static_cast<std::size_t>(i)] = run_replicate(s, m, h, static_cast<std::uint64_t>(i));
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return results;
}

Eigen::MatrixXd limiting_design(const Scenario& s) {
    const int p = s.p();
    if (s.family == Family::NormalLinear) {
        // Location family: only X'X/n matters, so any X with X'X/p = E[x x'] will do.
        Eigen::MatrixXd sx = Eigen::MatrixXd::Zero(p, p);
        const int off = s.intercept ? 1 : 0;
        if (s.intercept) sx(0, 0) = 1.0;
        for (int j = 0; j < s.covariates; ++j) sx(off + j, off + j) = s.sigma_x * s.sigma_x;
        const Eigen::MatrixXd u = sx.llt().matrixU();
        return std::sqrt(static_cast<double>(p)) * u;
    }
    Scenario big = s;
    big.n = 4000;
    big.e_x = big.e_err = 0.0;
    return generate_dataset(big, 0xD1E5EULL).X;
}

}  // namespace

std::string to_string(TestKind k) { return k == TestKind::Simple ? "simple" : "composite"; }
std::string to_string(SimPurpose p) { return p == SimPurpose::Size ? "size" : "power"; }
std::string to_string(XPlacement x) { return x == XPlacement::Covariate ? "covariate" : "leverage"; }

void Scenario::validate() const {
    require(n >= 2, "scenario n must be at least 2");
    require(covariates >= 0 && p() >= 1, "scenario needs at least one coefficient");
    require(beta.size() == p(), "scenario beta must have one entry per coefficient");
    require(beta.allFinite(), "scenario beta must be finite");
    require(sigma > 0.0 && sigma_x > 0.0, "scenario sigma and sigma_x must be positive");
    require(e_x >= 0.0 && e_x <= 1.0 && e_err >= 0.0 && e_err <= 1.0, "contamination fractions must lie in [0, 1]");
    require(std::isfinite(k_x) && std::isfinite(k_e), "contamination magnitudes must be finite");
    require(replicates >= 1, "replicates must be at least 1");
    require(!grid.empty(), "tuning grid must not be empty");
    for (const auto& [t, g] : grid) require(t >= 0.0 && g >= 0.0, "tuning parameters must be non-negative");
    require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    if (null_beta) require(null_beta->size() == p(), "null_beta must have one entry per coefficient");
    if (L) require(L->rows() == p() && L->cols() >= 1, "L must be p x r with r >= 1");
    if (known_sigma) require(family == Family::NormalLinear, "known sigma applies to the normal model");
    validate_hypothesis(model(), p(), hypothesis());
}

Model Scenario::model() const {
    switch (family) {
        case Family::NormalLinear: return known_sigma ? Model::normal_known_sigma(sigma) : Model::normal();
        case Family::PoissonLog: return Model::poisson();
        case Family::BernoulliLogit: return Model::bernoulli();
    }
    return Model::normal();
}

Hypothesis Scenario::hypothesis() const {
    const Model m = model();
    const Eigen::VectorXd b0 = null_beta ? *null_beta : beta;
    if (test == TestKind::Simple) {
        ParamVector t{b0, std::nullopt};
        if (m.free_scale()) t.scale = sigma;
        return SimpleHypothesis{t};
    }
    const Eigen::MatrixXd l = L ? *L : Eigen::MatrixXd::Identity(p(), p());
    LinearConstraint c{l, l.transpose() * b0, LinearConstraint::role_for(m)};
    ParamVector null{b0, std::nullopt};
    if (m.free_scale()) null.scale = sigma;
    return CompositeHypothesis{c, null};
}

std::uint64_t replicate_seed(std::uint64_t base_seed, std::uint64_t index) {
    return splitmix64(base_seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

Dataset generate_dataset(const Scenario& s, std::uint64_t replicate_index) {
    std::mt19937_64 rng(replicate_seed(s.base_seed, replicate_index));
    std::normal_distribution<double> z(0.0, 1.0);
    const int n = s.n, p = s.p(), off = s.intercept ? 1 : 0;
    Dataset d;
    d.X.resize(n, p);
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
        if (s.intercept) d.X(i, 0) = 1.0;
        for (int j = 0; j < s.covariates; ++j) d.X(i, off + j) = s.sigma_x * z(rng);
    }
    const std::vector<int> x_rows = pick_rows(rng, n, contaminated_count(s.e_x, n));
    auto shift_covariates = [&] {
        for (int i : x_rows) {
            for (int j = 0; j < s.covariates; ++j) d.X(i, off + j) += s.k_x * s.sigma_x;
        }
    };
    if (s.x_placement == XPlacement::Covariate) shift_covariates();
    const Eigen::VectorXd eta = d.X * s.beta;
    for (int i = 0; i < n; ++i) {
        switch (s.family) {
            case Family::NormalLinear: d.y(i) = eta(i) + s.sigma * z(rng); break;
            case Family::PoissonLog: {
                std::poisson_distribution<long> pd(std::exp(eta(i)));
                d.y(i) = static_cast<double>(pd(rng));
                break;
            }
            case Family::BernoulliLogit: {
                std::bernoulli_distribution bd(1.0 / (1.0 + std::exp(-eta(i))));
                d.y(i) = bd(rng) ? 1.0 : 0.0;
                break;
            }
        }
    }
    if (s.x_placement == XPlacement::Leverage) shift_covariates();
    for (int i : pick_rows(rng, n, contaminated_count(s.e_err, n))) {
        switch (s.family) {
            case Family::NormalLinear: d.y(i) += s.k_e * s.sigma; break;
            case Family::PoissonLog:
                d.y(i) += std::round(s.k_e * std::sqrt(std::max(1.0, std::exp(eta(i)))));
                break;
            case Family::BernoulliLogit: d.y(i) = 1.0 - d.y(i); break;
        }
    }
    d.column_names.reserve(p);
    if (s.intercept) d.column_names.push_back("(intercept)");
    for (int j = 0; j < s.covariates; ++j) d.column_names.push_back("x" + std::to_string(j + 1));
    d.response_name = "y";
    return d;
}

int default_thread_count() {
    if (const char* env = std::getenv("DPD_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

SimResult run_size_power(const Scenario& s) {
    s.validate();
    const auto results = run_all(s);
    SimResult out;
    out.scenario = s;
    out.seed = s.base_seed;
    for (std::size_t k = 0; k < s.grid.size(); ++k) {
        SimCell c;
        c.tau = s.grid[k].first;
        c.gamma = s.grid[k].second;
        c.n = s.n;
        c.replicates = s.replicates;
        for (const auto& r : results) {
            if (r[k] == kReject) ++c.rejections;
            if (r[k] == kFail) ++c.failures;
        }
        // Failures count as non-rejections for size and are excluded for power.
        c.used = s.purpose == SimPurpose::Size ? c.replicates : c.replicates - c.failures;
        c.rate = c.used > 0 ? static_cast<double>(c.rejections) / c.used : 0.0;
        c.std_error = c.used > 0 ? std::sqrt(c.rate * (1.0 - c.rate) / c.used) : 0.0;
        c.flagged = c.failures > 0.05 * c.replicates;
        out.cells.push_back(c);
    }
    return out;
}

double scenario_contiguous_power(const Scenario& s, const Eigen::VectorXd& delta, double tau, double gamma) {
    const Model m = s.model();
    const Eigen::MatrixXd design = limiting_design(s);
    TestOptions opts;
    opts.prefer_closed_form = true;
    Scenario at_null = s;
    at_null.null_beta.reset();
    if (s.null_beta) at_null.beta = *s.null_beta;
    return contiguous_power(m, design, at_null.hypothesis(), delta, tau, gamma, s.alpha, opts);
}

ConvergenceTable run_power_convergence(const Scenario& base, const std::vector<int>& sizes,
                                       const Eigen::VectorXd& delta) {
    require(!sizes.empty(), "convergence run needs at least one sample size");
    require(delta.size() == base.p(), "delta must have one entry per coefficient");
    ConvergenceTable table;
    for (int n : sizes) {
        Scenario s = base;
        s.n = n;
        s.null_beta = base.beta;
        s.beta = base.beta + delta / std::sqrt(static_cast<double>(n));
        s.purpose = SimPurpose::Power;
        const SimResult r = run_size_power(s);
        for (const SimCell& c : r.cells) {
            ConvergenceRow row;
            row.n = n;
            row.tau = c.tau;
            row.gamma = c.gamma;
            row.empirical = c.rate;
            row.std_error = c.std_error;
            row.failures = c.failures;
            row.asymptotic = scenario_contiguous_power(s, delta, c.tau, c.gamma);
            row.gap = std::abs(row.empirical - row.asymptotic);
            table.max_gap = std::max(table.max_gap, row.gap);
            table.rows.push_back(row);
        }
    }
    return table;
}

}  // namespace dpd
