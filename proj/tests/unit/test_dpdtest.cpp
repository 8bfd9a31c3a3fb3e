#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dpd/dpdtest.hpp"
#include "dpd/error.hpp"
#include "oracles.hpp"

using namespace dpd;

namespace {

const std::vector<double> kGrid{0.0, 0.25, 0.5, 1.0};

LinearConstraint slope_zero(int p) {
    LinearConstraint c;
    c.L = Eigen::MatrixXd::Zero(p, 1);
    c.L(p - 1, 0) = 1.0;
    c.l0 = Eigen::VectorXd::Zero(1);
    return c;
}

LinearConstraint two_constraints(int p) {
    LinearConstraint c;
    c.L = Eigen::MatrixXd::Zero(p, 2);
    c.L(1, 0) = 1.0;
    c.L(2, 1) = 1.0;
    c.L(0, 1) = -0.5;
    c.l0 = Eigen::Vector2d(1.5, 1.5);
    return c;
}

FitOptions quick_fit() {
    FitOptions f;
    f.restarts = 0;
    f.continuation = false;
    return f;
}

}  // namespace

TEST(DpdTest, SimpleLikelihoodRatioEquivalence) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto nd = oracle::normal_data(40, 3, seed, 1.4);
        const Model m = Model::normal_known_sigma(1.4);
        const Eigen::Vector3d b0(0.8, 1.7, 1.9);
        const TestReport rep = dpdts_simple(m, nd.data, ParamVector{b0, {}}, 0.0, 0.0, 0.05);
        const Eigen::MatrixXd& X = nd.data.X;
        const Eigen::VectorXd bh = (X.transpose() * X).ldlt().solve(X.transpose() * nd.data.y);
        const double lrt = (bh - b0).dot(X.transpose() * X * (bh - b0)) / (1.4 * 1.4);
        EXPECT_NEAR(rep.statistic, lrt, 1e-8 * (1 + lrt));
        for (int j = 0; j < rep.null_dist.rank(); ++j) EXPECT_NEAR(rep.null_dist.weights[j], 1.0, 1e-10);
    }
    EXPECT_EQ(zeta1(0.0, 0.0, 3.7), 1.0);
}

TEST(DpdTest, CompositeLikelihoodRatioEquivalence) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto nd = oracle::normal_data(50, 3, seed + 10, 0.9);
        const LinearConstraint c = slope_zero(3);
        const TestReport rep = dpdts_composite(Model::normal(), nd.data, c, 0.0, 0.0, 0.05);
        const Eigen::MatrixXd& X = nd.data.X;
        const double n = 50;
        const Eigen::MatrixXd G = (X.transpose() * X).inverse();
        const Eigen::VectorXd bh = G * X.transpose() * nd.data.y;
        const Eigen::VectorXd bt = bh - G * c.L * (c.L.transpose() * G * c.L).inverse() * (c.L.transpose() * bh - c.l0);
        const double sh2 = (nd.data.y - X * bh).squaredNorm() / n, st2 = (nd.data.y - X * bt).squaredNorm() / n;
        const double s0 = n * (std::log(st2 / sh2) - 1 + sh2 / st2) + (bh - bt).dot(X.transpose() * X * (bh - bt)) / st2;
        EXPECT_NEAR(rep.statistic, s0, 1e-8 * (1 + s0));
        ASSERT_TRUE(rep.theta_tilde.has_value());
        EXPECT_LT((rep.theta_tilde->beta - bt).norm(), 1e-8);
    }
}

TEST(DpdTest, KnownSigmaNullWeightsAreZetaOne) {
    const auto nd = oracle::normal_data(30, 3, 4, 1.2);
    const Eigen::Vector3d b0(1.0, 1.5, 2.0);
    for (double s0 : {0.7, 1.2}) {
        for (double tau : kGrid) {
            for (double gamma : kGrid) {
                const NullStructure ns =
                    null_structure_simple(Model::normal_known_sigma(s0), nd.data.X, ParamVector{b0, {}}, tau, gamma);
                ASSERT_EQ(ns.dist.rank(), 3);
                for (double w : ns.dist.weights) EXPECT_NEAR(w, zeta1(gamma, tau, s0), 1e-8);
            }
        }
    }
}

TEST(DpdTest, CompositeNullWeightsAreZetaOneWithRankR) {
    const auto nd = oracle::normal_data(40, 4, 5);
    for (const LinearConstraint& c : {slope_zero(4), two_constraints(4)}) {
        const ParamVector null{Eigen::Vector4d(c.r() == 2 ? 0.0 : 1.0, 1.5, 1.5, 0.0), 1.3};
        for (double tau : kGrid) {
            for (double gamma : kGrid) {
                const NullStructure ns = null_structure_composite(Model::normal(), nd.data.X, null, tau, gamma, c);
                ASSERT_EQ(ns.dist.rank(), c.r()) << tau << " " << gamma;
                for (double w : ns.dist.weights) EXPECT_NEAR(w, zeta1(gamma, tau, 1.3), 1e-8);
            }
        }
    }
}

TEST(DpdTest, ClosedFormsMatchGenericStatistics) {
    const auto nd = oracle::normal_data(45, 3, 6, 1.1);
    TestOptions closed;
    closed.prefer_closed_form = true;
    for (double tau : {0.0, 0.5}) {
        for (double gamma : {0.0, 0.3, 1.0}) {
            const Model mk = Model::normal_known_sigma(1.1);
            const ParamVector t0{Eigen::Vector3d(0.9, 1.4, 2.1), {}};
            const TestReport g = dpdts_simple(mk, nd.data, t0, tau, gamma, 0.05);
            const TestReport f = dpdts_simple(mk, nd.data, t0, tau, gamma, 0.05, closed);
            EXPECT_EQ(f.method, TestMethod::NormalSimpleClosed);
            EXPECT_NEAR(f.statistic, g.statistic, 1e-9 * (1 + g.statistic));
            EXPECT_NEAR(f.p_value, g.p_value, 1e-7);
            const TestReport gc = dpdts_composite(Model::normal(), nd.data, slope_zero(3), tau, gamma, 0.05);
            const TestReport fc = dpdts_composite(Model::normal(), nd.data, slope_zero(3), tau, gamma, 0.05, closed);
            EXPECT_EQ(fc.method, TestMethod::NormalCompositeClosed);
            EXPECT_NEAR(fc.statistic, gc.statistic, 1e-9 * (1 + gc.statistic));
            EXPECT_NEAR(fc.p_value, gc.p_value, 1e-7);
        }
    }
}

TEST(DpdTest, ZeroStatisticGivesUnitPValue) {
    const auto nd = oracle::normal_data(30, 2, 7);
    const MdpdeFit fit = fit_mdpde(Model::normal(), nd.data, 0.5);
    const TestReport rep = dpdts_simple(Model::normal(), nd.data, fit, fit.theta_hat, 0.5, 0.05);
    EXPECT_NEAR(rep.statistic, 0.0, 1e-12);
    EXPECT_NEAR(rep.p_value, 1.0, 1e-12);
    LinearConstraint c = slope_zero(2);
    c.l0(0) = fit.theta_hat.beta(1);
    const TestReport rc = dpdts_composite(Model::normal(), nd.data, c, 0.5, 0.5, 0.05);
    EXPECT_NEAR(rc.statistic, 0.0, 1e-9);
}

TEST(DpdTest, PValueMatchesTailOfReportedLaw) {
    const auto nd = oracle::normal_data(60, 3, 8);
    const TestReport rep = dpdts_simple(Model::normal(), nd.data, ParamVector{Eigen::Vector3d(1.1, 1.5, 1.8), 1.1}, 0.5,
                                        0.5, 0.05);
    const TailResult tr = qf_upper_tail(rep.null_dist, rep.statistic);
    EXPECT_NEAR(rep.p_value, tr.probability, std::max(tr.residual_bound, 1e-12));
    EXPECT_NEAR(qf_upper_tail(rep.null_dist, rep.critical_value).probability, 0.05, 1e-8);
    EXPECT_GE(rep.statistic, 0.0);
}

TEST(DpdTest, KnownSigmaStatisticDependsOnlyOnEstimate) {
    const auto nd = oracle::normal_data(40, 3, 9);
    const Eigen::MatrixXd& X = nd.data.X;
    const Eigen::VectorXd bh = (X.transpose() * X).ldlt().solve(X.transpose() * nd.data.y);
    // A different residual vector orthogonal to the columns of X keeps the least-squares fit.
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd e(40);
    for (auto& v : e) v = z(rng);
    e -= X * (X.transpose() * X).ldlt().solve(X.transpose() * e);
    const Dataset other(X, X * bh + e);
    const Model mk = Model::normal_known_sigma(1.0);
    const ParamVector t0{Eigen::Vector3d(1.0, 1.4, 2.2), {}};
    for (double gamma : {0.0, 0.5}) {
        const double a = dpdts_simple(mk, nd.data, t0, 0.0, gamma, 0.05).statistic;
        const double b = dpdts_simple(mk, other, t0, 0.0, gamma, 0.05).statistic;
        EXPECT_NEAR(a, b, 1e-10);
    }
}

TEST(DpdTest, ContiguousPowerAtZeroIsAlpha) {
    const auto nd = oracle::normal_data(50, 3, 10);
    const Eigen::Vector3d zero = Eigen::Vector3d::Zero();
    const Hypothesis hs = SimpleHypothesis{ParamVector{Eigen::Vector3d(1, 1.5, 2), {}}};
    const Hypothesis hc = CompositeHypothesis{slope_zero(3), ParamVector{Eigen::Vector3d(1, 1.5, 0), 1.0}};
    TestOptions closed;
    closed.prefer_closed_form = true;
    for (double tau : {0.0, 0.5}) {
        EXPECT_NEAR(contiguous_power(Model::normal_known_sigma(1.0), nd.data.X, hs, zero, tau, 0.5, 0.05), 0.05, 1e-8);
        EXPECT_NEAR(contiguous_power(Model::normal_known_sigma(1.0), nd.data.X, hs, zero, tau, 0.5, 0.05, closed), 0.05,
                    1e-10);
        EXPECT_NEAR(contiguous_power(Model::normal(), nd.data.X, hc, zero, tau, 0.5, 0.05), 0.05, 1e-8);
        EXPECT_NEAR(contaminated_power(Model::normal(), nd.data.X, hc, zero, 0.0, Eigen::VectorXd::Zero(50), tau, 0.5,
                                       0.05),
                    0.05, 1e-8);
    }
}

TEST(DpdTest, ContiguousGenericMatchesFastPath) {
    const auto nd = oracle::normal_data(60, 3, 11, 1.0, 1.5);
    const Hypothesis h = SimpleHypothesis{ParamVector{Eigen::Vector3d(1, 1.5, 2), {}}};
    TestOptions closed;
    closed.prefer_closed_form = true;
    for (double tau : {0.0, 0.3, 1.0}) {
        for (double gamma : {0.0, 0.5}) {
            for (const Eigen::Vector3d& d : {Eigen::Vector3d(0.5, 0.2, -0.3), Eigen::Vector3d(1.0, -1.0, 0.5)}) {
                const Model mk = Model::normal_known_sigma(1.3);
                const double g = contiguous_power(mk, nd.data.X, h, d, tau, gamma, 0.05);
                const double f = contiguous_power(mk, nd.data.X, h, d, tau, gamma, 0.05, closed);
                EXPECT_NEAR(g, f, 1e-4) << tau << " " << gamma;
            }
        }
    }
}

TEST(DpdTest, NormalContiguousPowerShape) {
    for (double tau : {0.0, 0.5, 1.0}) {
        EXPECT_NEAR(normal_contiguous_power(3, 0.0, tau, 1.0, 0.05), 0.05, 1e-12);
        for (int p : {1, 2, 5}) {
            double prev = 0.0;
            for (double t = 0.0; t <= 20.0; t += 1.0) {
                const double v = normal_contiguous_power(p, t, tau, 1.0, 0.05);
                EXPECT_GT(v, prev - 1e-15);
                if (t > 0) EXPECT_GT(v, prev);
                prev = v;
            }
        }
        for (double t : {1.0, 5.0, 10.0}) {
            for (int p = 1; p < 8; ++p) {
                EXPECT_GT(normal_contiguous_power(p, t, tau, 1.0, 0.05), normal_contiguous_power(p + 1, t, tau, 1.0, 0.05));
            }
        }
    }
    for (double t : {1.0, 5.0}) {
        EXPECT_GT(normal_contiguous_power(2, t, 0.0, 1.0, 0.05), normal_contiguous_power(2, t, 0.5, 1.0, 0.05));
        EXPECT_GT(normal_contiguous_power(2, t, 0.5, 1.0, 0.05), normal_contiguous_power(2, t, 1.0, 1.0, 0.05));
    }
}

TEST(DpdTest, ContaminatedPowerReducesAtZeroEpsilon) {
    const auto nd = oracle::normal_data(40, 2, 12);
    const Hypothesis h = SimpleHypothesis{ParamVector{Eigen::Vector2d(1, 1.5), 1.0}};
    const Eigen::VectorXd d = Eigen::Vector3d(0.3, -0.2, 0.1);
    Eigen::VectorXd t = Eigen::VectorXd::Constant(40, 25.0);
    for (double tau : {0.0, 0.5}) {
        EXPECT_EQ(contaminated_power(Model::normal(), nd.data.X, h, d, 0.0, t, tau, 0.5, 0.05),
                  contiguous_power(Model::normal(), nd.data.X, h, d, tau, 0.5, 0.05));
    }
}

TEST(DpdTest, ContaminatedLevelBoundedOnlyForPositiveTau) {
    const auto nd = oracle::normal_data(40, 2, 13);
    const Eigen::Vector2d b0(1, 1.5);
    const Hypothesis h = SimpleHypothesis{ParamVector{b0, {}}};
    const Model mk = Model::normal_known_sigma(1.0);
    const Eigen::Vector2d zero = Eigen::Vector2d::Zero();
    double robust_max = 0.0, lrt_prev = 0.0;
    for (double shift : {1.0, 3.0, 6.0, 12.0, 24.0}) {
        const Eigen::VectorXd t = nd.data.X * b0 + Eigen::VectorXd::Constant(40, shift);
        const double lrt = contaminated_power(mk, nd.data.X, h, zero, 0.5, t, 0.0, 0.0, 0.05);
        const double rob = contaminated_power(mk, nd.data.X, h, zero, 0.5, t, 0.5, 0.5, 0.05);
        EXPECT_GE(lrt, lrt_prev);
        lrt_prev = lrt;
        robust_max = std::max(robust_max, std::abs(rob - 0.05));
    }
    EXPECT_GT(lrt_prev, 0.99);
    EXPECT_LT(robust_max, 0.2);
}

TEST(DpdTest, ApproxPowerConsistentAndSampleSizeRoundTrip) {
    const auto nd = oracle::normal_data(50, 2, 14);
    const Model m = Model::normal_known_sigma(1.0);
    const Hypothesis h = SimpleHypothesis{ParamVector{Eigen::Vector2d(1, 1.5), {}}};
    const ParamVector alt{Eigen::Vector2d(1.15, 1.6), {}};
    double prev = 0.0;
    for (double n : {10.0, 100.0, 1000.0, 1e5}) {
        const double v = approx_power(m, nd.data.X, h, alt, n, 0.5, 0.5, 0.05).power;
        EXPECT_GE(v, prev);
        prev = v;
    }
    EXPECT_GT(prev, 0.999999);
    const long ns = required_sample_size(m, nd.data.X, h, alt, 0.8, 0.5, 0.5, 0.05);
    EXPECT_GE(approx_power(m, nd.data.X, h, alt, ns, 0.5, 0.5, 0.05).power, 0.8);
    EXPECT_LT(approx_power(m, nd.data.X, h, alt, ns - 1, 0.5, 0.5, 0.05).power, 0.8);
    const ParamVector far{Eigen::Vector2d(1.3, 1.7), {}};
    EXPECT_LT(required_sample_size(m, nd.data.X, h, far, 0.8, 0.5, 0.5, 0.05), ns);
    // Near-level targets: the approximation starts below alpha at small n, so only the crossing is checked.
    const long nl = required_sample_size(m, nd.data.X, h, alt, 0.0501, 0.5, 0.5, 0.05);
    EXPECT_GE(approx_power(m, nd.data.X, h, alt, nl, 0.5, 0.5, 0.05).power, 0.0501);
    EXPECT_LT(approx_power(m, nd.data.X, h, alt, nl - 1, 0.5, 0.5, 0.05).power, 0.0501);
    EXPECT_THROW(required_sample_size(m, nd.data.X, h, alt, 0.04, 0.5, 0.5, 0.05), DomainError);
}

TEST(DpdTest, DegenerateAlternatives) {
    const auto nd = oracle::normal_data(30, 2, 15);
    const ParamVector t0{Eigen::Vector2d(1, 1.5), 1.0};
    EXPECT_THROW(approx_power(Model::normal(), nd.data.X, SimpleHypothesis{t0}, t0, 100, 0.5, 0.5, 0.05), DomainError);
    LinearConstraint c = slope_zero(2);
    c.l0(0) = 1.5;
    const PowerResult r =
        approx_power(Model::normal(), nd.data.X, CompositeHypothesis{c, std::nullopt}, t0, 100, 0.5, 0.5, 0.05);
    EXPECT_TRUE(r.degenerate);
    EXPECT_DOUBLE_EQ(r.power, 0.05);
}

TEST(DpdTest, CompositePowerTendsToOne) {
    const auto nd = oracle::normal_data(40, 2, 16);
    const ParamVector alt{Eigen::Vector2d(1, 0.3), 1.0};
    const Hypothesis h = CompositeHypothesis{slope_zero(2), std::nullopt};
    const PowerResult a = approx_power(Model::normal(), nd.data.X, h, alt, 20, 0.5, 0.5, 0.05);
    const PowerResult b = approx_power(Model::normal(), nd.data.X, h, alt, 2000, 0.5, 0.5, 0.05);
    EXPECT_FALSE(a.degenerate);
    EXPECT_NEAR(a.null_point.beta(1), 0.0, 1e-12);
    EXPECT_GT(b.power, a.power);
    EXPECT_GT(b.power, 0.999);
}

// The approximation rests on sqrt(n) (T / 2n - mean divergence) -> N(0, sigma^2); both moments are
// checked against simulated statistics at a fixed alternative.
TEST(DpdTest, ApproxPowerMomentsAgreeWithSimulation) {
    const int n = 200, reps = 2000;
    const auto nd = oracle::normal_data(n, 2, 17);
    const Eigen::MatrixXd& X = nd.data.X;
    const Model m = Model::normal_known_sigma(1.0);
    const ParamVector t0{Eigen::Vector2d(1, 1.5), {}};
    const ParamVector alt{Eigen::Vector2d(1.3, 1.8), {}};
    TestOptions opts;
    opts.fit = quick_fit();
    opts.compute_critical_value = false;
    for (double tau : {0.0, 0.5}) {
        const PowerResult pr = approx_power(m, X, SimpleHypothesis{t0}, alt, n, tau, tau, 0.05);
        std::mt19937_64 rng(99);
        std::normal_distribution<double> z(0.0, 1.0);
        Eigen::VectorXd dhat(reps);
        for (int r = 0; r < reps; ++r) {
            Eigen::VectorXd y = X * alt.beta;
            for (auto& v : y) v += z(rng);
            dhat(r) = dpdts_simple(m, Dataset(X, y), t0, tau, tau, 0.05, opts).statistic / (2.0 * n);
        }
        const double mean = dhat.mean();
        const double sd = std::sqrt((dhat.array() - mean).square().sum() / (reps - 1.0));
        // Mean: MC error plus the O(1/n) bias of the plug-in divergence (p / 2n at tau = 0).
        EXPECT_NEAR(mean, pr.mean_divergence, 4.0 * sd / std::sqrt(double(reps)) + 2.0 / n) << tau;
        // Spread: sd of a sample sd is about sd / sqrt(2 reps); finite-n excess is about 1 / (2 delta).
        EXPECT_NEAR(std::sqrt(double(n)) * sd / pr.sigma, 1.0, 0.06) << tau;
    }
}

TEST(DpdTest, CrossCovarianceMatchesSimulation) {
    const int n = 200, reps = 600;
    const auto nd = oracle::normal_data(n, 2, 18);
    const Eigen::MatrixXd& X = nd.data.X;
    const Model m = Model::normal();
    const LinearConstraint c = slope_zero(2);
    const ParamVector star{Eigen::Vector2d(1.0, 0.0), 1.0};  // on the null, so theta_tilde targets star as well
    const double tau = 0.5;
    const Eigen::MatrixXd a12 = composite_cross_covariance(m, X, star, star, tau, c);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd u(reps, 3), v(reps, 3);
    for (int r = 0; r < reps; ++r) {
        Eigen::VectorXd y = X * star.beta;
        for (auto& e : y) e += z(rng);
        const Dataset d(X, y);
        const MdpdeFit f = fit_mdpde(m, d, tau, std::nullopt, quick_fit());
        const RmdpdeFit g = fit_rmdpde(m, d, tau, c, std::nullopt, quick_fit());
        u.row(r) = std::sqrt(double(n)) * (m.flatten(f.theta_hat) - m.flatten(star)).transpose();
        v.row(r) = std::sqrt(double(n)) * (m.flatten(g.theta_tilde) - m.flatten(star)).transpose();
    }
    const Eigen::RowVectorXd mu = u.colwise().mean(), mv = v.colwise().mean();
    const Eigen::MatrixXd emp = (u.rowwise() - mu).transpose() * (v.rowwise() - mv) / (reps - 1.0);
    // Entry-wise MC standard error is at most sqrt(2 var_u var_v / reps).
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const double su = (u.col(i).array() - mu(i)).matrix().norm() / std::sqrt(reps - 1.0);
            const double sv = (v.col(j).array() - mv(j)).matrix().norm() / std::sqrt(reps - 1.0);
            // The pinned restricted coordinate is constant, so its column is zero up to rounding.
            EXPECT_NEAR(emp(i, j), a12(i, j), 4.0 * std::sqrt(2.0) * su * sv / std::sqrt(double(reps)) + 1e-12)
                << i << " " << j << "\n" << emp << "\n" << a12;
        }
    }
}

TEST(DpdTest, HypothesisValidation) {
    const auto nd = oracle::normal_data(20, 2, 19);
    EXPECT_THROW(dpdts_simple(Model::normal(), nd.data, ParamVector{Eigen::Vector3d::Zero(), 1.0}, 0.5, 0.5, 0.05),
                 DomainError);
    EXPECT_THROW(dpdts_simple(Model::normal(), nd.data, ParamVector{Eigen::Vector2d::Zero(), 1.0}, 0.5, -0.5, 0.05),
                 DomainError);
    EXPECT_THROW(dpdts_simple(Model::normal(), nd.data, ParamVector{Eigen::Vector2d::Zero(), 1.0}, 0.5, 0.5, 1.5),
                 DomainError);
    const Hypothesis bad = CompositeHypothesis{slope_zero(2), ParamVector{Eigen::Vector2d(1, 1), 1.0}};
    EXPECT_THROW(validate_hypothesis(Model::normal(), 2, bad), DomainError);
    EXPECT_EQ(test_method_from_string(to_string(TestMethod::NormalCompositeClosed)), TestMethod::NormalCompositeClosed);
    EXPECT_THROW(test_method_from_string("nope"), DomainError);
}
