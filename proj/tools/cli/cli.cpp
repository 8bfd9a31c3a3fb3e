#include "cli.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dpd/dataset.hpp"
#include "dpd/dpdtest.hpp"
#include "dpd/error.hpp"
#include "dpd/estimate.hpp"
#include "dpd/influence.hpp"
#include "dpd/json_io.hpp"
#include "dpd/restrict.hpp"
#include "dpd/simharness.hpp"

#ifndef DPDKIT_DEFAULT_DATA_DIR
#define DPDKIT_DEFAULT_DATA_DIR "data"
#endif

namespace dpd::cli {

namespace {

Eigen::VectorXd to_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string resolve_data_path(const std::string& p) {
    if (p == "salinity") return std::string(DPDKIT_DEFAULT_DATA_DIR) + "/salinity.csv";
    return p;
}

Model make_model(const RunConfig& c) {
    const Family f = family_from_string(c.family);
    if (f != Family::NormalLinear) {
        require(!c.known_sigma, "--sigma applies to the normal family only");
        require(c.scale == "auto" || c.scale == "absent", "--scale: discrete families have no scale");
        return f == Family::PoissonLog ? Model::poisson() : Model::bernoulli();
    }
    if (c.scale == "fixed") {
        const auto s = c.known_sigma ? c.known_sigma : c.sigma0;
        require(s.has_value(), "--scale fixed needs --sigma");
        return Model::normal_known_sigma(*s);
    }
    if (c.scale == "free") {
        require(!c.known_sigma, "--scale free conflicts with --sigma");
        return Model::normal();
    }
    require(c.scale == "auto", "--scale: expected auto, free or fixed");
    return c.known_sigma ? Model::normal_known_sigma(*c.known_sigma) : Model::normal();
}

Dataset load_data(const RunConfig& c) {
    require(!c.data_path.empty(), "--data is required for '" + c.command + "'");
    CsvOptions o;
    o.response = c.response;
    o.add_intercept = c.intercept;
    o.covariates = c.covariates;
    o.drop_rows = c.drop_rows;
    return read_csv_dataset(resolve_data_path(c.data_path), o);
}

FitOptions fit_options(const RunConfig& c) {
    FitOptions o;
    o.seed = c.seed;
    o.restarts = c.restarts;
    return o;
}

TestOptions test_options(const RunConfig& c) {
    TestOptions o;
    o.series.max_terms = c.max_terms;
    o.series.target_error = c.target_error;
    o.fit = fit_options(c);
    require(c.method == "generic" || c.method == "closed", "--method: expected generic or closed");
    o.prefer_closed_form = c.method == "closed";
    require(c.hessian == "expected" || c.hessian == "observed", "--hessian: expected expected or observed");
    o.hessian = c.hessian == "expected" ? HessianMode::Expected : HessianMode::Observed;
    return o;
}

// (tau, gamma) cells: paired when --gamma is absent, otherwise the Cartesian product.
std::vector<std::pair<double, double>> tuning_grid(const RunConfig& c) {
    require(!c.tau.empty(), "--tau: grid must not be empty");
    std::vector<std::pair<double, double>> g;
    for (double t : c.tau) {
        require(std::isfinite(t) && t >= 0.0, "--tau: values must be non-negative");
        if (c.gamma.empty()) {
            g.emplace_back(t, t);
        } else {
            for (double gm : c.gamma) {
                require(std::isfinite(gm) && gm >= 0.0, "--gamma: values must be non-negative");
                g.emplace_back(t, gm);
            }
        }
    }
    return g;
}

bool wants_simple(const RunConfig& c, const Model& m) {
    if (c.hypothesis_kind == "simple") return true;
    if (c.hypothesis_kind == "composite") return false;
    require(c.hypothesis_kind == "auto", "--hypothesis: expected auto, simple or composite");
    return c.constraint_rows.empty() && (!m.free_scale() || c.sigma0.has_value());
}

Hypothesis make_hypothesis(const RunConfig& c, const Model& m, int p) {
    const bool has_beta0 = !c.beta0.empty();
    const bool has_rows = !c.constraint_rows.empty();
    require(has_beta0 != has_rows, "give exactly one hypothesis block: --beta0, or --constraint with --l0");
    Hypothesis h;
    if (has_beta0) {
        require(static_cast<int>(c.beta0.size()) == p, "--beta0: expected " + std::to_string(p) + " values");
        if (wants_simple(c, m)) {
            ParamVector t{to_vec(c.beta0), std::nullopt};
            if (m.free_scale()) {
                require(c.sigma0.has_value(), "--sigma0 is required for a simple test with sigma estimated");
                t.scale = *c.sigma0;
            }
            h = SimpleHypothesis{t};
        } else {
            h = CompositeHypothesis{LinearConstraint::pin(to_vec(c.beta0), LinearConstraint::role_for(m)), std::nullopt};
        }
    } else {
        require(c.hypothesis_kind != "simple", "--hypothesis simple needs --beta0");
        const int r = static_cast<int>(c.constraint_rows.size());
        require(static_cast<int>(c.l0.size()) == r, "--l0: expected one value per --constraint row");
        Eigen::MatrixXd L(p, r);
        for (int k = 0; k < r; ++k) {
            require(static_cast<int>(c.constraint_rows[k].size()) == p,
                    "--constraint[" + std::to_string(k + 1) + "]: expected " + std::to_string(p) + " values");
            L.col(k) = to_vec(c.constraint_rows[k]);
        }
        h = CompositeHypothesis{LinearConstraint{L, to_vec(c.l0), LinearConstraint::role_for(m)}, std::nullopt};
    }
    validate_hypothesis(m, p, h);
    return h;
}

json data_json(const RunConfig& c, const Dataset& d) {
    return json{{"path", c.data_path}, {"n", d.n()}, {"p", d.p()}, {"columns", d.column_names},
                {"response", d.response_name}, {"dropped_rows", c.drop_rows}};
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw DomainError("cannot open output file '" + path + "'");
    f << text;
}

std::string csv_num(double x) {
    if (!std::isfinite(x)) return "";
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

json cmd_fit(const RunConfig& c, const Model& m, const Dataset& d, std::string& csv) {
    json fits = json::array();
    csv = "tau,status,objective,converged\n";
    for (double tau : c.tau) {
        json cell{{"tau", tau}};
        try {
            const MdpdeFit f = fit_mdpde(m, d, tau, std::nullopt, fit_options(c));
            cell["status"] = "ok";
            cell["fit"] = f;
            cell["std_errors"] = vector_to_json(f.std_errors(d.n()));
            csv += csv_num(tau) + ",ok," + csv_num(f.objective_value) + "," + (f.converged ? "true" : "false") + "\n";
        } catch (const std::exception& e) {
            cell["status"] = "failed";
            cell["error"] = e.what();
            csv += csv_num(tau) + ",failed,,\n";
        }
        fits.push_back(cell);
    }
    return json{{"fits", fits}};
}

json cmd_test(const RunConfig& c, const Model& m, const Dataset& d, std::string& csv) {
    const Hypothesis h = make_hypothesis(c, m, d.p());
    const TestOptions opts = test_options(c);
    json cells = json::array();
    csv = "tau,gamma,status,statistic,p_value,critical_value,method\n";
    for (const auto& [tau, gamma] : tuning_grid(c)) {
        json cell{{"tau", tau}, {"gamma", gamma}};
        try {
            const TestReport r = dpd_test(m, d, h, tau, gamma, c.alpha, opts);
            cell["status"] = "ok";
            cell["report"] = r;
            cell["reject"] = r.p_value < c.alpha;
            csv += csv_num(tau) + "," + csv_num(gamma) + ",ok," + csv_num(r.statistic) + "," + csv_num(r.p_value) +
                   "," + csv_num(r.critical_value) + "," + to_string(r.method) + "\n";
        } catch (const std::exception& e) {
            cell["status"] = "failed";
            cell["error"] = e.what();
            csv += csv_num(tau) + "," + csv_num(gamma) + ",failed,,,,\n";
        }
        cells.push_back(cell);
    }
    return json{{"hypothesis", std::holds_alternative<SimpleHypothesis>(h) ? "simple" : "composite"},
                {"tests", cells}};
}

ParamVector theta_star_for(const RunConfig& c, const Model& m, const Dataset& d, double tau) {
    require(static_cast<int>(c.theta_star.size()) == d.p(),
            "--theta-star: expected " + std::to_string(d.p()) + " values");
    ParamVector t{to_vec(c.theta_star), std::nullopt};
    if (m.free_scale()) {
        t.scale = c.sigma_star ? *c.sigma_star : *fit_mdpde(m, d, tau, std::nullopt, fit_options(c)).theta_hat.scale;
    }
    return t;
}

// Composite power tools need a point of the null set; the restricted fit supplies it.
Hypothesis with_null_point(const RunConfig& c, const Model& m, const Dataset& d, Hypothesis h, double tau) {
    if (auto* ch = std::get_if<CompositeHypothesis>(&h)) {
        ch->null_point = fit_rmdpde(m, d, tau, ch->constraint, std::nullopt, fit_options(c)).theta_tilde;
    }
    return h;
}

json cmd_power(const RunConfig& c, const Model& m, const Dataset& d, std::string& csv, bool sample_size) {
    const Hypothesis h0 = make_hypothesis(c, m, d.p());
    const TestOptions opts = test_options(c);
    json cells = json::array();
    csv = sample_size ? "tau,gamma,status,n_required\n" : "tau,gamma,status,power\n";
    for (const auto& [tau, gamma] : tuning_grid(c)) {
        json cell{{"tau", tau}, {"gamma", gamma}};
        try {
            double value = 0.0;
            if (sample_size) {
                const long n = required_sample_size(m, d.X, h0, theta_star_for(c, m, d, tau), c.eta, tau, gamma,
                                                    c.alpha, opts);
                cell["n_required"] = n;
                value = static_cast<double>(n);
            } else if (!c.delta.empty()) {
                const Hypothesis h = with_null_point(c, m, d, h0, tau);
                const Eigen::VectorXd t =
                    Eigen::VectorXd::Constant(d.n(), c.contamination_point ? *c.contamination_point : 0.0);
                require(c.epsilon == 0.0 || c.contamination_point.has_value(), "--epsilon needs --contamination-point");
                value = contaminated_power(m, d.X, h, to_vec(c.delta), c.epsilon, t, tau, gamma, c.alpha, opts);
                cell["power"] = value;
                cell["kind"] = c.epsilon > 0.0 ? "contaminated" : "contiguous";
            } else {
                const double n = c.n_power > 0.0 ? c.n_power : static_cast<double>(d.n());
                const PowerResult r = approx_power(m, d.X, h0, theta_star_for(c, m, d, tau), n, tau, gamma, c.alpha, opts);
                cell["result"] = r;
                cell["power"] = r.power;
                cell["kind"] = "approximate";
                value = r.power;
            }
            cell["status"] = "ok";
            csv += csv_num(tau) + "," + csv_num(gamma) + ",ok," + csv_num(value) + "\n";
        } catch (const std::exception& e) {
            cell["status"] = "failed";
            cell["error"] = e.what();
            csv += csv_num(tau) + "," + csv_num(gamma) + ",failed,\n";
        }
        cells.push_back(cell);
    }
    return json{{sample_size ? "sample_sizes" : "power", cells}};
}

json cmd_influence(const RunConfig& c, const Model& m, const Dataset& d) {
    const double tau = c.tau.front();
    const double gamma = c.gamma.empty() ? tau : c.gamma.front();
    require(c.if_index >= 1 && c.if_index <= d.n(), "--index: must lie in 1.." + std::to_string(d.n()));
    require(c.if_order == "first" || c.if_order == "second", "--order: expected first or second");
    const bool second = c.if_order == "second";

    IFReport rep;
    rep.order = second ? IFOrder::Second : IFOrder::First;
    std::function<Eigen::VectorXd(double)> eval;
    ParamVector at;
    json extra = json::object();

    if (c.if_target == "estimator") {
        rep.target = IFTarget::Estimator;
        const MdpdeFit f = fit_mdpde(m, d, tau, std::nullopt, fit_options(c));
        at = f.theta_hat;
        eval = [&, at](double t) { return if_mdpde(m, d.X, at, tau, ContaminationSpec::single(c.if_index, t)); };
    } else if (c.if_target == "restricted") {
        rep.target = IFTarget::RestrictedEstimator;
        const Hypothesis h = make_hypothesis(c, m, d.p());
        require(std::holds_alternative<CompositeHypothesis>(h), "--target restricted needs a composite hypothesis");
        const LinearConstraint lc = std::get<CompositeHypothesis>(h).constraint;
        at = fit_rmdpde(m, d, tau, lc, std::nullopt, fit_options(c)).theta_tilde;
        eval = [&, at, lc](double t) {
            return if_rmdpde(m, d.X, at, tau, lc, ContaminationSpec::single(c.if_index, t));
        };
    } else if (c.if_target == "simple-test" || c.if_target == "composite-test") {
        const Hypothesis h = with_null_point(c, m, d, make_hypothesis(c, m, d.p()), tau);
        rep.target = std::holds_alternative<SimpleHypothesis>(h) ? IFTarget::SimpleTest : IFTarget::CompositeTest;
        at = null_point_of(m, h);
        eval = [&, h, second](double t) {
            const auto spec = ContaminationSpec::single(c.if_index, t);
            const double v = second ? if2_test(m, d.X, h, tau, gamma, spec) : if1_test(m, d.X, h, tau, gamma, spec);
            return Eigen::VectorXd::Constant(1, v);
        };
        if (c.pif) {
            require(c.if_t.has_value(), "--pif needs --t");
            const Eigen::VectorXd delta = c.delta.empty() ? Eigen::VectorXd::Zero(d.p()) : to_vec(c.delta);
            extra["pif_lif"] = pif_lif(m, d.X, h, delta, ContaminationSpec::single(c.if_index, *c.if_t), tau, gamma,
                                       c.alpha, test_options(c));
        }
    } else {
        throw DomainError("--target: expected estimator, restricted, simple-test or composite-test");
    }

    const double center = d.row(c.if_index - 1).dot(at.beta);
    if (c.if_t) {
        rep.value = eval(*c.if_t);
    } else {
        // Grid scan over the response value in residual-scale units.
        double scale = 1.0;
        if (m.family() == Family::NormalLinear) scale = m.scale_of(at);
        if (m.family() == Family::PoissonLog) scale = std::sqrt(std::max(1.0, std::exp(center)));
        std::function<double(double)> f;
        double mid = center;
        if (m.family() == Family::NormalLinear) {
            f = [&](double t) { return eval(t).norm(); };
        } else {
            // Discrete responses: evaluate at the nearest admissible value.
            mid = m.family() == Family::PoissonLog ? std::exp(center) : 0.5;
            f = [&](double t) {
                double y = std::max(0.0, std::round(t));
                if (m.family() == Family::BernoulliLogit) y = t < 0.5 ? 0.0 : 1.0;
                return eval(y).norm();
            };
        }
        const GridScan g = scan_grid(f, mid, scale, c.grid_half_width, c.grid_points);
        rep.value = Eigen::VectorXd::Constant(1, g.max_abs);
        rep.bounded_in_t = g.bounded;
        extra["grid"] = g;
    }
    json out{{"order", to_string(rep.order)},
             {"target", to_string(rep.target)},
             {"index", c.if_index},
             {"tau", tau},
             {"gamma", gamma},
             {"theta", at},
             {"value", vector_to_json(rep.value)},
             {"bounded_in_t", rep.bounded_in_t ? json(*rep.bounded_in_t) : json(nullptr)}};
    out.update(extra);
    return out;
}

json cmd_simulate(const RunConfig& c, std::string& csv) {
    require(!c.scenario_path.empty(), "--scenario is required for 'simulate'");
    const Scenario s = read_scenario_file(c.scenario_path);
    if (!c.convergence_sizes.empty()) {
        require(static_cast<int>(c.delta.size()) == s.p(), "--delta: expected " + std::to_string(s.p()) + " values");
        const ConvergenceTable t = run_power_convergence(s, c.convergence_sizes, to_vec(c.delta));
        csv = convergence_csv(t);
        return json{{"convergence", t}, {"scenario", s}};
    }
    const SimResult r = run_size_power(s);
    csv = sim_cells_csv(r);
    return json{{"simulation", r}};
}

}  // namespace

std::optional<RunConfig> parse_args(int argc, const char* const* argv, std::ostream& out) {
    RunConfig c;
    CLI::App app{"Robust density power divergence estimation and testing"};
    app.require_subcommand(1);
    for (const char* name : {"fit", "test", "power", "samplesize", "influence", "simulate", "diagnostics"}) {
        app.add_subcommand(name)->fallthrough();
    }
    app.get_subcommand("fit")->description("Minimum DPD estimates over a tau grid");
    app.get_subcommand("test")->description("DPD test statistics, null laws and p-values");
    app.get_subcommand("power")->description("Approximate, contiguous or contaminated power");
    app.get_subcommand("samplesize")->description("Smallest n reaching a target power");
    app.get_subcommand("influence")->description("Influence functions of estimators and tests");
    app.get_subcommand("simulate")->description("Monte Carlo size/power from a scenario file");
    app.get_subcommand("diagnostics")->description("Design-matrix diagnostics");

    std::vector<std::string> constraint_text;
    app.add_option("--family", c.family, "normal, poisson or bernoulli");
    app.add_option("--sigma", c.known_sigma, "known sigma of the normal model");
    app.add_option("--data", c.data_path, "CSV file with a header row ('salinity' selects the bundled file)");
    app.add_option("--response", c.response, "response column (default: last column)");
    app.add_flag("!--no-intercept", c.intercept, "do not add an intercept column");
    app.add_option("--covariates", c.covariates, "covariate columns (default: all others)")->delimiter(',');
    app.add_option("--drop-rows", c.drop_rows, "1-based data rows to drop")->delimiter(',');
    app.add_option("--beta0", c.beta0, "hypothesized coefficients")->delimiter(',');
    app.add_option("--sigma0", c.sigma0, "hypothesized sigma for a simple test with sigma estimated");
    app.add_option("--constraint", constraint_text, "constraint row c (c'beta = l0), repeatable");
    app.add_option("--l0", c.l0, "constraint right-hand sides")->delimiter(',');
    app.add_option("--scale", c.scale, "auto, free or fixed");
    app.add_option("--hypothesis", c.hypothesis_kind, "auto, simple or composite");
    app.add_option("--tau", c.tau, "estimator tuning values")->delimiter(',');
    app.add_option("--gamma", c.gamma, "statistic tuning values (default: paired with tau)")->delimiter(',');
    app.add_option("--alpha", c.alpha, "test level");
    app.add_option("--method", c.method, "generic or closed (normal-regression closed forms)");
    app.add_option("--hessian", c.hessian, "expected or observed Hessian in P_n");
    app.add_option("--theta-star", c.theta_star, "alternative coefficients")->delimiter(',');
    app.add_option("--sigma-star", c.sigma_star, "alternative sigma");
    app.add_option("--n", c.n_power, "sample size for approximate power");
    app.add_option("--eta", c.eta, "target power for samplesize");
    app.add_option("--delta", c.delta, "contiguous alternative direction")->delimiter(',');
    app.add_option("--epsilon", c.epsilon, "contamination fraction for contaminated power");
    app.add_option("--contamination-point", c.contamination_point, "contamination point t for every row");
    app.add_option("--target", c.if_target, "estimator, restricted, simple-test or composite-test");
    app.add_option("--order", c.if_order, "first or second");
    app.add_option("--index", c.if_index, "1-based contaminated observation");
    app.add_option("--t", c.if_t, "contamination point (omit for a grid scan)");
    app.add_option("--grid-width", c.grid_half_width, "grid half-width in scale units");
    app.add_option("--grid-points", c.grid_points, "grid size");
    app.add_flag("--pif", c.pif, "also compute power and level influence functions");
    app.add_option("--scenario", c.scenario_path, "scenario JSON file");
    app.add_option("--convergence", c.convergence_sizes, "sample sizes for a power-convergence run")->delimiter(',');
    app.add_option("-o,--output", c.output_path, "JSON output file (default: stdout)");
    app.add_option("--csv", c.csv_path, "CSV table output file");
    app.add_option("--seed", c.seed, "seed for optimizer restarts");
    app.add_option("--restarts", c.restarts, "random optimizer restarts");
    app.add_option("--max-terms", c.max_terms, "series term cap");
    app.add_option("--target-error", c.target_error, "series truncation target");
    app.add_flag("--strict", c.strict, "diagnostics: fail on any warning");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return std::nullopt;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return std::nullopt;
    } catch (const CLI::ParseError& e) {
        throw DomainError(std::string("command line: ") + e.what());
    }
    c.command = app.get_subcommands().front()->get_name();
    for (const auto& row : constraint_text) {
        std::vector<double> vals;
        std::stringstream ss(row);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                std::size_t used = 0;
                vals.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw DomainError("--constraint: '" + tok + "' is not a number");
            }
        }
        c.constraint_rows.push_back(vals);
    }
    return c;
}

int run(const RunConfig& c, std::ostream& out, std::ostream& err) {
    try {
        json doc{{"command", c.command}};
        std::string csv;
        int status = 0;
        if (c.command == "simulate") {
            doc.update(cmd_simulate(c, csv));
        } else {
            const Model m = make_model(c);
            const Dataset d = load_data(c);
            doc["model"] = m.name();
            doc["data"] = data_json(c, d);
            if (c.command == "diagnostics") {
                const DesignReport r = design_diagnostics(d);
                doc["diagnostics"] = r;
                if (c.strict && (r.rank_deficient || !r.warnings.empty())) {
                    doc["status"] = "rejected";
                    status = 2;
                }
            } else if (c.command == "fit") {
                doc.update(cmd_fit(c, m, d, csv));
            } else if (c.command == "test") {
                doc.update(cmd_test(c, m, d, csv));
            } else if (c.command == "power") {
                doc.update(cmd_power(c, m, d, csv, false));
            } else if (c.command == "samplesize") {
                doc.update(cmd_power(c, m, d, csv, true));
            } else if (c.command == "influence") {
                doc["influence"] = cmd_influence(c, m, d);
            } else {
                throw DomainError("unknown command '" + c.command + "'");
            }
        }
        if (!doc.contains("status")) doc["status"] = "ok";
        const std::string text = doc.dump(2) + "\n";
        if (c.output_path.empty()) {
            out << text;
        } else {
            write_text(c.output_path, text);
        }
        if (!c.csv_path.empty() && !csv.empty()) write_text(c.csv_path, csv);
        if (status == 2) err << "error: design diagnostics raised warnings under --strict\n";
        return status;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << '\n';
        return 3;
    }
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::optional<RunConfig> cfg;
    try {
        cfg = parse_args(argc, argv, out);
    } catch (const DomainError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    if (!cfg) return 0;
    return run(*cfg, out, err);
}

}  // namespace dpd::cli
