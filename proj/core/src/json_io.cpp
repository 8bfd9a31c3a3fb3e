#include "dpd/json_io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "dpd/error.hpp"

namespace dpd {

namespace {

double num(const json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (!j.is_number()) throw DomainError("expected a number, got " + j.dump());
    return j.get<double>();
}

json num_json(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

template <class T>
T field(const json& j, const char* key) {
    if (!j.contains(key)) throw DomainError(std::string("missing field '") + key + "'");
    return j.at(key).get<T>();
}

std::string csv_num(double x) {
    if (!std::isfinite(x)) return "";
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

}  // namespace

json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num_json(v(i)));
    return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
    if (!j.is_array()) throw DomainError("expected an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = num(j[i]);
    return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vector_to_json(m.row(r).transpose()));
    return a;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    if (!j.is_array()) throw DomainError("expected an array of rows");
    if (j.empty()) return Eigen::MatrixXd(0, 0);
    const auto cols = j[0].size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
        if (j[r].size() != cols) throw DomainError("matrix rows differ in length");
        m.row(static_cast<Eigen::Index>(r)) = vector_from_json(j[r]).transpose();
    }
    return m;
}

void to_json(json& j, const ParamVector& t) {
    j = json{{"beta", vector_to_json(t.beta)}, {"scale", t.scale ? json(*t.scale) : json(nullptr)}};
}

void from_json(const json& j, ParamVector& t) {
    t.beta = vector_from_json(j.at("beta"));
    if (j.contains("scale") && !j.at("scale").is_null()) {
        t.scale = num(j.at("scale"));
    } else {
        t.scale.reset();
    }
}

void to_json(json& j, const QuadFormDist& d) {
    j = json{{"weights", d.weights}, {"noncentralities", d.noncentralities}};
}

void from_json(const json& j, QuadFormDist& d) {
    d = QuadFormDist(j.at("weights").get<std::vector<double>>(), j.at("noncentralities").get<std::vector<double>>());
}

void to_json(json& j, const MdpdeFit& f) {
    j = json{{"theta_hat", f.theta_hat},
             {"tau", f.tau},
             {"objective_value", num_json(f.objective_value)},
             {"gradient_norm", num_json(f.gradient_norm)},
             {"psi_n", matrix_to_json(f.psi_n)},
             {"omega_n", matrix_to_json(f.omega_n)},
             {"cov", matrix_to_json(f.cov)},
             {"converged", f.converged},
             {"starts_used", f.starts_used},
             {"iterations", f.iterations}};
}

void from_json(const json& j, MdpdeFit& f) {
    f.theta_hat = j.at("theta_hat").get<ParamVector>();
    f.tau = num(j.at("tau"));
    f.objective_value = num(j.at("objective_value"));
    f.gradient_norm = num(j.at("gradient_norm"));
    f.psi_n = matrix_from_json(j.at("psi_n"));
    f.omega_n = matrix_from_json(j.at("omega_n"));
    f.cov = matrix_from_json(j.at("cov"));
    f.converged = field<bool>(j, "converged");
    f.starts_used = field<int>(j, "starts_used");
    f.iterations = field<int>(j, "iterations");
}

void to_json(json& j, const RmdpdeFit& f) {
    j = json{{"theta_tilde", f.theta_tilde},
             {"tau", f.tau},
             {"objective_value", num_json(f.objective_value)},
             {"gradient_norm", num_json(f.gradient_norm)},
             {"pn_matrix", matrix_to_json(f.pn_matrix)},
             {"psi_n", matrix_to_json(f.psi_n)},
             {"omega_n", matrix_to_json(f.omega_n)},
             {"cov", matrix_to_json(f.cov)},
             {"converged", f.converged},
             {"starts_used", f.starts_used}};
}

void from_json(const json& j, RmdpdeFit& f) {
    f.theta_tilde = j.at("theta_tilde").get<ParamVector>();
    f.tau = num(j.at("tau"));
    f.objective_value = num(j.at("objective_value"));
    f.gradient_norm = num(j.at("gradient_norm"));
    f.pn_matrix = matrix_from_json(j.at("pn_matrix"));
    f.psi_n = matrix_from_json(j.at("psi_n"));
    f.omega_n = matrix_from_json(j.at("omega_n"));
    f.cov = matrix_from_json(j.at("cov"));
    f.converged = field<bool>(j, "converged");
    f.starts_used = field<int>(j, "starts_used");
}

void to_json(json& j, const TestReport& r) {
    j = json{{"statistic", num_json(r.statistic)},
             {"tau", r.tau},
             {"gamma", r.gamma},
             {"alpha", r.alpha},
             {"null_dist", r.null_dist},
             {"spectrum", vector_to_json(r.spectrum)},
             {"critical_value", num_json(r.critical_value)},
             {"p_value", num_json(r.p_value)},
             {"p_value_residual", num_json(r.p_value_residual)},
             {"method", to_string(r.method)},
             {"theta_hat", r.theta_hat},
             {"theta_tilde", r.theta_tilde ? json(*r.theta_tilde) : json(nullptr)},
             {"converged", r.converged}};
}

void from_json(const json& j, TestReport& r) {
    r.statistic = num(j.at("statistic"));
    r.tau = num(j.at("tau"));
    r.gamma = num(j.at("gamma"));
    r.alpha = num(j.at("alpha"));
    r.null_dist = j.at("null_dist").get<QuadFormDist>();
    r.spectrum = vector_from_json(j.at("spectrum"));
    r.critical_value = num(j.at("critical_value"));
    r.p_value = num(j.at("p_value"));
    r.p_value_residual = num(j.at("p_value_residual"));
    r.method = test_method_from_string(field<std::string>(j, "method"));
    r.theta_hat = j.at("theta_hat").get<ParamVector>();
    if (j.contains("theta_tilde") && !j.at("theta_tilde").is_null()) {
        r.theta_tilde = j.at("theta_tilde").get<ParamVector>();
    } else {
        r.theta_tilde.reset();
    }
    r.converged = field<bool>(j, "converged");
}

void to_json(json& j, const PowerResult& r) {
    j = json{{"power", num_json(r.power)},
             {"degenerate", r.degenerate},
             {"critical_value", num_json(r.critical_value)},
             {"sigma", num_json(r.sigma)},
             {"mean_divergence", num_json(r.mean_divergence)},
             {"null_point", r.null_point}};
}

void from_json(const json& j, PowerResult& r) {
    r.power = num(j.at("power"));
    r.degenerate = field<bool>(j, "degenerate");
    r.critical_value = num(j.at("critical_value"));
    r.sigma = num(j.at("sigma"));
    r.mean_divergence = num(j.at("mean_divergence"));
    r.null_point = j.at("null_point").get<ParamVector>();
}

void to_json(json& j, const PifLif& r) {
    j = json{{"pif", num_json(r.pif)},
             {"lif", num_json(r.lif)},
             {"pif_numeric", num_json(r.pif_numeric)},
             {"lif_numeric", num_json(r.lif_numeric)},
             {"stable", r.stable},
             {"k_vector", vector_to_json(r.k_vector)}};
}

void to_json(json& j, const GridScan& g) {
    j = json{{"t", vector_to_json(g.t)},
             {"value", vector_to_json(g.value)},
             {"max_abs", num_json(g.max_abs)},
             {"argmax", num_json(g.argmax)},
             {"max_abs_wide", num_json(g.max_abs_wide)},
             {"bounded", g.bounded}};
}

void to_json(json& j, const DesignReport& r) {
    j = json{{"n", r.n},
             {"p", r.p},
             {"rank", r.rank},
             {"rank_deficient", r.rank_deficient},
             {"min_eigen_xtx_n", num_json(r.min_eigen_xtx_n)},
             {"max_leverage_n", num_json(r.max_leverage_n)},
             {"max_abs_entry", num_json(r.max_abs_entry)},
             {"condition_number", num_json(r.condition_number)},
             {"warnings", r.warnings}};
}

void to_json(json& j, const SimCell& c) {
    j = json{{"tau", c.tau},           {"gamma", c.gamma},         {"n", c.n},
             {"replicates", c.replicates}, {"used", c.used},       {"rejections", c.rejections},
             {"failures", c.failures}, {"rate", c.rate},           {"std_error", c.std_error},
             {"flagged", c.flagged},   {"status", c.flagged ? "flagged" : "ok"}};
}

void from_json(const json& j, SimCell& c) {
    c.tau = num(j.at("tau"));
    c.gamma = num(j.at("gamma"));
    c.n = field<int>(j, "n");
    c.replicates = field<int>(j, "replicates");
    c.used = field<int>(j, "used");
    c.rejections = field<int>(j, "rejections");
    c.failures = field<int>(j, "failures");
    c.rate = num(j.at("rate"));
    c.std_error = num(j.at("std_error"));
    c.flagged = field<bool>(j, "flagged");
}

void to_json(json& j, const SimResult& r) {
    j = json{{"scenario", r.scenario}, {"seed", r.seed}, {"cells", r.cells}};
}

void to_json(json& j, const ConvergenceTable& t) {
    json rows = json::array();
    for (const auto& r : t.rows) {
        rows.push_back(json{{"n", r.n},
                            {"tau", r.tau},
                            {"gamma", r.gamma},
                            {"empirical", r.empirical},
                            {"std_error", r.std_error},
                            {"asymptotic", num_json(r.asymptotic)},
                            {"gap", num_json(r.gap)},
                            {"failures", r.failures}});
    }
    j = json{{"rows", rows}, {"max_gap", num_json(t.max_gap)}};
}

void to_json(json& j, const Scenario& s) {
    json grid = json::array();
    for (const auto& [t, g] : s.grid) grid.push_back(json::array({t, g}));
    j = json{{"family", to_string(s.family)},
             {"known_sigma", s.known_sigma},
             {"n", s.n},
             {"intercept", s.intercept},
             {"covariates", s.covariates},
             {"beta", vector_to_json(s.beta)},
             {"sigma", s.sigma},
             {"sigma_x", s.sigma_x},
             {"e_x", s.e_x},
             {"e_err", s.e_err},
             {"k_x", s.k_x},
             {"k_e", s.k_e},
             {"x_placement", to_string(s.x_placement)},
             {"test", to_string(s.test)},
             {"L", s.L ? matrix_to_json(*s.L) : json(nullptr)},
             {"null_beta", s.null_beta ? vector_to_json(*s.null_beta) : json(nullptr)},
             {"purpose", to_string(s.purpose)},
             {"grid", grid},
             {"alpha", s.alpha},
             {"replicates", s.replicates},
             {"base_seed", s.base_seed},
             {"threads", s.threads},
             {"fit", json{{"restarts", s.fit.restarts}, {"continuation", s.fit.continuation}}}};
}

void from_json(const json& j, Scenario& s) {
    static const std::set<std::string> known{
        "family", "known_sigma", "n",     "intercept", "covariates", "beta",  "sigma",      "sigma_x",
        "e_x",    "e_err",       "k_x",   "k_e",       "x_placement", "test",       "L",     "null_beta",  "purpose",
        "grid",   "tau",         "gamma", "alpha",     "replicates", "base_seed", "threads", "fit"};
    if (!j.is_object()) throw DomainError("scenario: expected a JSON object");
    for (const auto& [key, val] : j.items()) {
        if (!known.count(key)) throw DomainError("scenario." + key + ": unknown field");
    }
    auto at = [&](const char* key, auto setter) {
        if (!j.contains(key) || j.at(key).is_null()) return;
        try {
            setter(j.at(key));
        } catch (const DomainError& e) {
            throw DomainError(std::string("scenario.") + key + ": " + e.what());
        } catch (const json::exception& e) {
            throw DomainError(std::string("scenario.") + key + ": " + e.what());
        }
    };
    at("family", [&](const json& v) { s.family = family_from_string(v.get<std::string>()); });
    at("known_sigma", [&](const json& v) { s.known_sigma = v.get<bool>(); });
    at("n", [&](const json& v) { s.n = v.get<int>(); });
    at("intercept", [&](const json& v) { s.intercept = v.get<bool>(); });
    at("covariates", [&](const json& v) { s.covariates = v.get<int>(); });
    at("beta", [&](const json& v) { s.beta = vector_from_json(v); });
    at("sigma", [&](const json& v) { s.sigma = num(v); });
    at("sigma_x", [&](const json& v) { s.sigma_x = num(v); });
    at("e_x", [&](const json& v) { s.e_x = num(v); });
    at("e_err", [&](const json& v) { s.e_err = num(v); });
    at("k_x", [&](const json& v) { s.k_x = num(v); });
    at("k_e", [&](const json& v) { s.k_e = num(v); });
    at("x_placement", [&](const json& v) {
        const auto t = v.get<std::string>();
        if (t != "covariate" && t != "leverage") throw DomainError("expected 'covariate' or 'leverage'");
        s.x_placement = t == "covariate" ? XPlacement::Covariate : XPlacement::Leverage;
    });
    at("test", [&](const json& v) {
        const auto t = v.get<std::string>();
        if (t != "simple" && t != "composite") throw DomainError("expected 'simple' or 'composite'");
        s.test = t == "simple" ? TestKind::Simple : TestKind::Composite;
    });
    at("L", [&](const json& v) { s.L = matrix_from_json(v); });
    at("null_beta", [&](const json& v) { s.null_beta = vector_from_json(v); });
    at("purpose", [&](const json& v) {
        const auto t = v.get<std::string>();
        if (t != "size" && t != "power") throw DomainError("expected 'size' or 'power'");
        s.purpose = t == "size" ? SimPurpose::Size : SimPurpose::Power;
    });
    at("grid", [&](const json& v) {
        s.grid.clear();
        for (const auto& cell : v) {
            if (!cell.is_array() || cell.size() != 2) throw DomainError("grid entries must be [tau, gamma] pairs");
            s.grid.emplace_back(num(cell[0]), num(cell[1]));
        }
    });
    if (j.contains("tau") || j.contains("gamma")) {
        if (j.contains("grid")) throw DomainError("scenario: give either grid or tau/gamma lists, not both");
        const Eigen::VectorXd taus = j.contains("tau") ? vector_from_json(j.at("tau")) : Eigen::VectorXd::Zero(1);
        const Eigen::VectorXd gammas = j.contains("gamma") ? vector_from_json(j.at("gamma")) : taus;
        s.grid.clear();
        for (double t : taus) {
            for (double g : gammas) s.grid.emplace_back(t, g);
        }
    }
    at("alpha", [&](const json& v) { s.alpha = num(v); });
    at("replicates", [&](const json& v) { s.replicates = v.get<int>(); });
    at("base_seed", [&](const json& v) { s.base_seed = v.get<std::uint64_t>(); });
    at("threads", [&](const json& v) { s.threads = v.get<int>(); });
    at("fit", [&](const json& v) {
        for (const auto& [key, val] : v.items()) {
            if (key == "restarts") {
                s.fit.restarts = val.get<int>();
            } else if (key == "continuation") {
                s.fit.continuation = val.get<bool>();
            } else {
                throw DomainError("unknown field '" + key + "'");
            }
        }
    });
}

Scenario read_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open scenario file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DomainError("scenario file '" + path + "' is not valid JSON: " + e.what());
    }
    Scenario s;
    from_json(j, s);
    s.validate();
    return s;
}

std::string sim_cells_csv(const SimResult& r) {
    std::ostringstream os;
    os << "tau,gamma,n,replicates,used,rejections,failures,rate,std_error,status\n";
    for (const auto& c : r.cells) {
        os << csv_num(c.tau) << ',' << csv_num(c.gamma) << ',' << c.n << ',' << c.replicates << ',' << c.used << ','
           << c.rejections << ',' << c.failures << ',' << csv_num(c.rate) << ',' << csv_num(c.std_error) << ','
           << (c.flagged ? "flagged" : "ok") << '\n';
    }
    return os.str();
}

std::string convergence_csv(const ConvergenceTable& t) {
    std::ostringstream os;
    os << "n,tau,gamma,empirical,std_error,asymptotic,gap,failures\n";
    for (const auto& r : t.rows) {
        os << r.n << ',' << csv_num(r.tau) << ',' << csv_num(r.gamma) << ',' << csv_num(r.empirical) << ','
           << csv_num(r.std_error) << ',' << csv_num(r.asymptotic) << ',' << csv_num(r.gap) << ',' << r.failures
           << '\n';
    }
    return os.str();
}

}  // namespace dpd
