#include "dpd/linalg.hpp"

#include <cmath>
#include <string>

#include "dpd/error.hpp"

namespace dpd::linalg {

MatrixXd symmetrize(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

MatrixXd spd_inverse(const MatrixXd& a, const char* what) {
    Eigen::LLT<MatrixXd> llt(symmetrize(a));
    if (llt.info() != Eigen::Success)
        throw NumericalError(std::string(what) + " is not positive definite");
    MatrixXd inv = llt.solve(MatrixXd::Identity(a.rows(), a.cols()));
    if (!inv.allFinite()) throw NumericalError(std::string(what) + " inverse is not finite");
    return symmetrize(inv);
}

MatrixXd psd_sqrt(const MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a));
    VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd psd_pinv_sqrt(const MatrixXd& a, double rel_tol) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a));
    const VectorXd& ev = es.eigenvalues();
    const double cut = rel_tol * std::max(ev.cwiseAbs().maxCoeff(), 0.0);
    VectorXd d(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) d(i) = ev(i) > cut ? 1.0 / std::sqrt(ev(i)) : 0.0;
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd null_space_basis(const MatrixXd& l) {
    const Eigen::Index p = l.rows(), r = l.cols();
    if (r == 0) return MatrixXd::Identity(p, p);
    require(r <= p, "constraint matrix has more columns than rows");
    require(numerical_rank(l) == r, "constraint matrix is not of full column rank");
    Eigen::HouseholderQR<MatrixXd> qr(l);
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(p, p);
    return q.rightCols(p - r);
}

int numerical_rank(const MatrixXd& a, double rel_tol) {
    if (a.size() == 0) return 0;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
    qr.setThreshold(rel_tol);
    return static_cast<int>(qr.rank());
}

double condition_number(const MatrixXd& a) {
    Eigen::JacobiSVD<MatrixXd> svd(a);
    const VectorXd& s = svd.singularValues();
    if (s.size() == 0) return 1.0;
    const double smin = s(s.size() - 1);
    return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

}  // namespace dpd::linalg
