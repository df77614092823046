#include "netgsa/linalg.hpp"

#include <cmath>
#include <limits>

namespace netgsa::linalg {

CholeskyFactor::CholeskyFactor(Eigen::MatrixXd upper) : upper_(std::move(upper)) {
    if (upper_.rows() != upper_.cols())
        throw std::invalid_argument("CholeskyFactor: factor must be square");
    for (Eigen::Index i = 0; i < upper_.rows(); ++i) {
        if (!(upper_(i, i) > 0.0))
            throw NotPositiveDefinite("CholeskyFactor: non-positive diagonal entry");
    }
}

CholeskyFactor cholesky(const Eigen::MatrixXd& s) {
    if (s.rows() != s.cols())
        throw std::invalid_argument("cholesky: matrix must be square");
    Eigen::MatrixXd sym = 0.5 * (s + s.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(sym);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefinite("cholesky: matrix is not positive definite");
    return CholeskyFactor(llt.matrixU());
}

double logdet(const CholeskyFactor& f) {
    return 2.0 * f.upper().diagonal().array().log().sum();
}

Eigen::MatrixXd invert_spd(const CholeskyFactor& f) {
    const Eigen::Index p = f.dim();
    Eigen::MatrixXd uinv = f.upper().triangularView<Eigen::Upper>().solve(
        Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd inv = uinv * uinv.transpose();
    return 0.5 * (inv + inv.transpose());
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a) {
    if (a.size() == 0) return a;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double tol = std::max(a.rows(), a.cols()) *
                       std::numeric_limits<double>::epsilon() *
                       (sv.size() > 0 ? sv(0) : 0.0);
    Eigen::VectorXd inv_sv = Eigen::VectorXd::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > tol) inv_sv(i) = 1.0 / sv(i);
    return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace netgsa::linalg
