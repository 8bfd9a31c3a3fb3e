#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dpd/error.hpp"
#include "dpd/restrict.hpp"
#include "oracles.hpp"

using namespace dpd;

namespace {

int numeric_rank(const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) r += s(i) > 1e-10 * s(0);
    return r;
}

LinearConstraint first_coefficient_zero(int p) {
    LinearConstraint c;
    c.L = Eigen::MatrixXd::Zero(p, 1);
    c.L(1, 0) = 1.0;
    c.l0 = Eigen::VectorXd::Zero(1);
    return c;
}

LinearConstraint two_rows(int p) {
    LinearConstraint c;
    c.L = Eigen::MatrixXd::Zero(p, 2);
    c.L(1, 0) = 1.0;
    c.L(2, 0) = -1.0;
    c.L(0, 1) = 1.0;
    c.L(3, 1) = 2.0;
    c.l0 = Eigen::Vector2d(0.2, 1.5);
    return c;
}

}  // namespace

TEST(Restrict, TauZeroIsRestrictedLeastSquares) {
    const auto nd = oracle::normal_data(60, 4, 7, 1.2);
    const Eigen::MatrixXd& X = nd.data.X;
    const Eigen::MatrixXd G = (X.transpose() * X).inverse();
    const Eigen::VectorXd b = G * X.transpose() * nd.data.y;
    for (const LinearConstraint& c : {first_coefficient_zero(4), two_rows(4)}) {
        const Eigen::VectorXd br =
            b - G * c.L * (c.L.transpose() * G * c.L).inverse() * (c.L.transpose() * b - c.l0);
        const double rss = (nd.data.y - X * br).squaredNorm();
        const RmdpdeFit fit = fit_rmdpde(Model::normal(), nd.data, 0.0, c);
        EXPECT_TRUE(fit.converged);
        EXPECT_LT((fit.theta_tilde.beta - br).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_NEAR(*fit.theta_tilde.scale * *fit.theta_tilde.scale, rss / 60, 1e-8);
        EXPECT_LT((c.L.transpose() * fit.theta_tilde.beta - c.l0).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Restrict, ConstraintHoldsAtEveryTau) {
    const auto nd = oracle::normal_data(50, 4, 8);
    const LinearConstraint c = two_rows(4);
    for (double tau : {0.25, 0.5, 1.0}) {
        const RmdpdeFit fit = fit_rmdpde(Model::normal(), nd.data, tau, c);
        EXPECT_TRUE(fit.converged);
        EXPECT_LT((c.L.transpose() * fit.theta_tilde.beta - c.l0).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Restrict, EmptyConstraintMatchesUnrestricted) {
    const auto nd = oracle::normal_data(40, 3, 9);
    for (double tau : {0.0, 0.5}) {
        const MdpdeFit u = fit_mdpde(Model::normal(), nd.data, tau);
        const LinearConstraint none = LinearConstraint::none(3, ScaleRole::Free);
        const RmdpdeFit r = fit_rmdpde(Model::normal(), nd.data, tau, none);
        EXPECT_LT((u.theta_hat.beta - r.theta_tilde.beta).norm(), 1e-7);
        EXPECT_NEAR(*u.theta_hat.scale, *r.theta_tilde.scale, 1e-7);
        EXPECT_NEAR(u.objective_value, r.objective_value, 1e-12);
        const Eigen::MatrixXd pn = pn_matrix(Model::normal(), nd.data, r, none);
        EXPECT_LT((pn - r.psi_n.inverse()).norm(), 1e-9 * pn.norm());
    }
}

TEST(Restrict, PinnedBetaOptimizesScaleOnly) {
    const auto nd = oracle::normal_data(40, 3, 10);
    const Eigen::Vector3d b0(0.9, 1.6, 2.1);
    const LinearConstraint c = LinearConstraint::pin(b0, ScaleRole::Free);
    for (double tau : {0.0, 0.5}) {
        const RmdpdeFit fit = fit_rmdpde(Model::normal(), nd.data, tau, c);
        EXPECT_LT((fit.theta_tilde.beta - b0).norm(), 1e-12);
        // Scale derivative of the objective vanishes at the restricted scale.
        EXPECT_NEAR(hn_gradient(Model::normal(), nd.data, fit.theta_tilde, tau)(3), 0.0, 1e-8);
        EXPECT_LT(fit.cov.topLeftCorner(3, 3).norm(), 1e-10);
        if (tau == 0.0) {
            const double s2 = (nd.data.y - nd.data.X * b0).squaredNorm() / 40;
            EXPECT_NEAR(*fit.theta_tilde.scale, std::sqrt(s2), 1e-8);
        }
    }
}

TEST(Restrict, RestrictedObjectiveNotBelowUnrestricted) {
    const auto nd = oracle::normal_data(50, 4, 11);
    for (double tau : {0.0, 0.3, 1.0}) {
        const MdpdeFit u = fit_mdpde(Model::normal(), nd.data, tau);
        const RmdpdeFit r = fit_rmdpde(Model::normal(), nd.data, tau, two_rows(4));
        EXPECT_GE(r.objective_value, u.objective_value - 1e-12);
        LinearConstraint at_fit = first_coefficient_zero(4);
        at_fit.l0(0) = u.theta_hat.beta(1);
        const RmdpdeFit same = fit_rmdpde(Model::normal(), nd.data, tau, at_fit);
        EXPECT_NEAR(same.objective_value, u.objective_value, 1e-10);
    }
}

TEST(Restrict, PnIsTangentToConstraint) {
    const auto nd = oracle::normal_data(60, 4, 12);
    const LinearConstraint c = two_rows(4);
    for (HessianMode mode : {HessianMode::Expected, HessianMode::Observed}) {
        const RmdpdeFit fit = fit_rmdpde(Model::normal(), nd.data, 0.5, c, {}, {}, mode);
        const Eigen::MatrixXd ups = upsilon_matrix(Model::normal(), c);
        EXPECT_LT((ups.transpose() * fit.pn_matrix).norm(), 1e-8 * fit.pn_matrix.norm());
        EXPECT_LT((ups.transpose() * fit.cov).norm(), 1e-8 * fit.cov.norm());
    }
}

TEST(Restrict, NormalBetaBlockMatchesProjectionForm) {
    const auto nd = oracle::normal_data(80, 4, 13, 0.8);
    const Eigen::MatrixXd& X = nd.data.X;
    const int n = 80;
    for (const LinearConstraint& c : {first_coefficient_zero(4), two_rows(4)}) {
        for (double tau : {0.0, 0.5, 1.0}) {
            const RmdpdeFit fit = fit_rmdpde(Model::normal(), nd.data, tau, c);
            const Eigen::MatrixXd pt = restricted_projection(X, c.L);
            const Eigen::MatrixXd expect =
                upsilon_beta(tau, *fit.theta_tilde.scale) * n * (X.transpose() * X).inverse() * pt;
            EXPECT_LT((fit.cov.topLeftCorner(4, 4) - expect).norm(), 1e-9 * expect.norm());
            // Beta and sigma are asymptotically uncorrelated.
            EXPECT_LT(fit.cov.block(0, 4, 4, 1).norm(), 1e-10);
            EXPECT_LT((pt * pt - pt).norm(), 1e-10);
            EXPECT_EQ(numeric_rank(pt), 4 - c.r());
        }
    }
}

TEST(Restrict, CompositeProjectionIsIdempotentWithRankR) {
    const auto nd = oracle::normal_data(30, 5, 14);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int r = 1; r <= 4; ++r) {
        Eigen::MatrixXd L(5, r);
        for (Eigen::Index i = 0; i < L.size(); ++i) L.data()[i] = z(rng);
        const Eigen::MatrixXd q = composite_projection(nd.data.X, L);
        EXPECT_LT((q * q - q).norm(), 1e-10);
        EXPECT_EQ(numeric_rank(q), r);
        EXPECT_LT((restricted_projection(nd.data.X, L) + q - Eigen::MatrixXd::Identity(5, 5)).norm(), 1e-10);
    }
}

TEST(Restrict, ScaleVariance) {
    EXPECT_NEAR(rmdpde_scale_variance(0.0, 1.7), 2 * std::pow(1.7, 4), 1e-12);
    EXPECT_NEAR(rmdpde_scale_variance(1.0, 1.0), 4.0 / 9.0 * (6.0 * std::pow(4.0 / 3.0, 2.5) - 4.0), 1e-12);
    for (double tau : {0.2, 0.7}) {
        EXPECT_NEAR(rmdpde_scale_variance(tau, 2.0), 16.0 * rmdpde_scale_variance(tau, 1.0), 1e-12);
    }
    EXPECT_THROW(rmdpde_scale_variance(-0.1, 1.0), DomainError);
}

TEST(Restrict, RestrictedScaleUsesUnrestrictedUpdateAtRestrictedBeta) {
    const auto nd = oracle::normal_data(50, 3, 15);
    const LinearConstraint c = first_coefficient_zero(3);
    for (double tau : {0.3, 0.8}) {
        const RmdpdeFit r = fit_rmdpde(Model::normal(), nd.data, tau, c);
        // Minimizing over sigma alone with beta fixed at the restricted value returns the same sigma.
        const RmdpdeFit pinned =
            fit_rmdpde(Model::normal(), nd.data, tau, LinearConstraint::pin(r.theta_tilde.beta, ScaleRole::Free));
        EXPECT_NEAR(*pinned.theta_tilde.scale, *r.theta_tilde.scale, 1e-7);
    }
}

TEST(Restrict, ValidationRejectsBadConstraints) {
    LinearConstraint c;
    c.L = Eigen::MatrixXd::Zero(3, 2);
    c.L(0, 0) = 1.0;
    c.L(0, 1) = 2.0;  // rank 1
    c.l0 = Eigen::Vector2d::Zero();
    EXPECT_THROW(c.validate(Model::normal(), 3), DomainError);
    LinearConstraint wrong = first_coefficient_zero(3);
    EXPECT_THROW(wrong.validate(Model::normal(), 4), DomainError);
}
