#ifndef NETGSA_LINALG_HPP
#define NETGSA_LINALG_HPP

#include <Eigen/Dense>
#include <stdexcept>

namespace netgsa::linalg {

// A Cholesky pivot was non-positive: the matrix is not (numerically) positive
// definite, which in this code base means a degenerate covariance somewhere.
class NotPositiveDefinite : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Upper-triangular factor U with positive diagonal, Uᵀ U = source matrix.
class CholeskyFactor {
  public:
    explicit CholeskyFactor(Eigen::MatrixXd upper);

    const Eigen::MatrixXd& upper() const { return upper_; }
    Eigen::Index dim() const { return upper_.rows(); }

  private:
    Eigen::MatrixXd upper_;
};

// Factor a symmetric positive definite matrix. The input is symmetrized as
// (S + Sᵀ)/2 first so floating-point drift in callers cannot poison the factor.
CholeskyFactor cholesky(const Eigen::MatrixXd& s);

// log det S = 2 Σ log Uᵢᵢ.
double logdet(const CholeskyFactor& f);

// S⁻¹ = U⁻¹ (U⁻¹)ᵀ via triangular inversion; result symmetrized.
Eigen::MatrixXd invert_spd(const CholeskyFactor& f);

// Moore-Penrose pseudo-inverse by SVD. Singular values below
// max(rows, cols) · eps · s_max are treated as zero.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a);

}  // namespace netgsa::linalg

#endif
