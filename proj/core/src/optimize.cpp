#include "dpd/optimize.hpp"

#include <cmath>
#include <limits>

#include "dpd/linalg.hpp"

namespace dpd {

namespace {

constexpr double kArmijo = 1e-4;

struct Eval {
    double f;
    Eigen::VectorXd g;
};

Eval evaluate(const Objective& obj, const Eigen::VectorXd& x) {
    Eval e{0.0, Eigen::VectorXd::Zero(x.size())};
    e.f = obj(x, &e.g);
    if (!std::isfinite(e.f) || !e.g.allFinite()) e.f = std::numeric_limits<double>::infinity();
    return e;
}

// Backtracking along d; returns the accepted step length or 0.
double line_search(const Objective& obj, const Eigen::VectorXd& x, const Eval& cur, const Eigen::VectorXd& d,
                   Eval& next) {
    const double slope = cur.g.dot(d);
    double t = 1.0;
    for (int k = 0; k < 60; ++k) {
        next = evaluate(obj, x + t * d);
        if (next.f <= cur.f + kArmijo * t * slope) return t;
        t *= 0.5;
    }
    return 0.0;
}

bool newton_direction(const Objective& obj, const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                      Eigen::VectorXd& d) {
    auto grad_fn = [&obj](const Eigen::VectorXd& z) {
        Eigen::VectorXd gz(z.size());
        obj(z, &gz);
        return gz;
    };
    const Eigen::MatrixXd h = linalg::symmetrize(linalg::fd_jacobian(grad_fn, x, 1e-6));
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) return false;
    d = -llt.solve(g);
    return d.allFinite() && g.dot(d) < 0.0;
}

}  // namespace

OptimResult bfgs_minimize(const Objective& obj, const Eigen::VectorXd& x0, const Eigen::MatrixXd& h0_inverse,
                          const OptimOptions& opts, const Criterion& crit) {
    const auto n = x0.size();
    const Eigen::MatrixXd h0 = h0_inverse.size() == n * n ? h0_inverse : Eigen::MatrixXd::Identity(n, n);
    auto norm_of = [&crit](const Eigen::VectorXd& x, const Eigen::VectorXd& g) { return crit ? crit(x, g) : g.norm(); };

    OptimResult res;
    res.x = x0;
    Eval cur = evaluate(obj, x0);
    if (!std::isfinite(cur.f)) {
        res.f = cur.f;
        res.grad = cur.g;
        res.criterion = std::numeric_limits<double>::infinity();
        res.message = "objective not finite at the starting point";
        return res;
    }
    Eigen::MatrixXd h = h0;
    int newton_tries = 0;
    for (int it = 0; it < opts.max_iter; ++it) {
        res.iterations = it;
        const double c = norm_of(res.x, cur.g);
        if (c <= opts.grad_tol * (1.0 + std::abs(cur.f))) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd d = -h * cur.g;
        if (!(cur.g.dot(d) < 0.0)) {
            h = h0;
            d = -h * cur.g;
        }
        Eval next;
        double t = line_search(obj, res.x, cur, d, next);
        if (t == 0.0 || (t * d).norm() <= opts.step_tol) {
            // Quasi-Newton direction exhausted: retry with a Newton step, then steepest descent.
            Eigen::VectorXd dn;
            if (newton_tries < 20 && newton_direction(obj, res.x, cur.g, dn)) {
                ++newton_tries;
                t = line_search(obj, res.x, cur, dn, next);
                d = dn;
            }
            if (t == 0.0) {
                h = h0;
                d = -h * cur.g;
                t = line_search(obj, res.x, cur, d, next);
            }
            if (t == 0.0) {
                res.message = "line search failed";
                break;
            }
        }
        const Eigen::VectorXd s = t * d;
        const Eigen::VectorXd y = next.g - cur.g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
            h = (eye - rho * s * y.transpose()) * h * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        res.x += s;
        cur = std::move(next);
        if (s.norm() <= opts.step_tol && norm_of(res.x, cur.g) > opts.grad_tol * (1.0 + std::abs(cur.f)) &&
            newton_tries >= 20) {
            res.message = "step below tolerance";
            break;
        }
        res.iterations = it + 1;
    }
    res.f = cur.f;
    res.grad = cur.g;
    res.criterion = norm_of(res.x, cur.g);
    if (!res.converged && res.criterion <= opts.grad_tol * (1.0 + std::abs(cur.f))) res.converged = true;
    if (!res.converged && res.message.empty()) res.message = "iteration cap reached";
    return res;
}

}  // namespace dpd
