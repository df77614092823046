#ifndef NETGSA_ESTIMATOR_HPP
#define NETGSA_ESTIMATOR_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "netgsa/graph.hpp"

namespace netgsa::estimator {

class ConstantColumn : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class NoConvergence : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class TooFewSamples : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class EmptyGrid : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class MissingFit : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Data with every column centered and scaled to Euclidean norm 1.
// Original means/norms are kept so estimates can be reported on raw scale.
struct StandardizedData {
    Eigen::MatrixXd columns;       // m x p
    Eigen::VectorXd column_means;  // length p
    Eigen::VectorXd column_norms;  // length p, norms of the centered columns

    Eigen::Index m() const { return columns.rows(); }
    Eigen::Index p() const { return columns.cols(); }
};

StandardizedData standardize(const Eigen::MatrixXd& raw);

// One node's penalized neighborhood regression. coefficients has length p with
// a structural zero at `node`; entries for known non-neighbors are exactly zero.
struct NeighborhoodFit {
    int node = -1;
    Eigen::VectorXd coefficients;
    double lambda = 0.0;
};

// Solves argmin_θ (1/m)‖Z_i − Z_{−i}θ‖² + 2λ Σ t_{i′}|θ_{i′}| with penalty
// weight 0 on known neighbors, 1 on free nodes; known non-neighbors are
// excluded from the design (the ∞-weight limit).
NeighborhoodFit weighted_lasso(const StandardizedData& z, int node,
                               const graph::EdgeConstraints& constraints, double lambda);

// Sum over nodes of K-fold held-out squared prediction error at one λ.
double cv_score(const StandardizedData& z, const graph::EdgeConstraints& constraints,
                double lambda, int folds, std::uint64_t seed);

// Grid element minimizing the CV score; exact ties go to the larger λ.
double select_lambda(const StandardizedData& z, const graph::EdgeConstraints& constraints,
                     const std::vector<double>& grid, int folds, std::uint64_t seed,
                     int threads = 1);

// Default grid: `count` log-spaced points on [0.01, 1] · λ_max where
// λ_max = max_{i≠i′} |Σ̂_{ii′}| / m is the smallest λ with an all-zero fit.
std::vector<double> default_lambda_grid(const StandardizedData& z, int count = 20);

// OR rule over directed coefficients, then known edges are added and known
// non-edges removed (the latter is a no-op: their coefficients are exact zeros).
graph::EdgeSet assemble_edges(const std::vector<NeighborhoodFit>& fits,
                              const graph::EdgeConstraints& constraints);

// Support-constrained Gaussian MLE  argmin_{A ≻ 0, A_{ii′}=0 off support}
// tr(Σ̂A) − logdet A.
struct PrecisionEstimate {
    Eigen::MatrixXd matrix;  // p x p, positive definite, exact zeros off support
    graph::EdgeSet support;
    double kkt_residual = 0.0;  // max |(A⁻¹ − Σ̂)| over support ∪ diagonal
    int sweeps = 0;
};

struct ConstrainedMleOptions {
    int max_sweeps = 500;
    double entry_tol = 1e-7;  // max entry change per sweep
    double kkt_tol = 1e-6;
    std::vector<double>* objective_trace = nullptr;  // per-sweep tr(Σ̂A) − logdet A
};

PrecisionEstimate constrained_mle(const Eigen::MatrixXd& sigma_hat,
                                  const graph::EdgeSet& support,
                                  const ConstrainedMleOptions& options = {});

// The full two-step estimator: standardize → CV λ → per-node lasso → edge
// assembly → constrained MLE on Σ̂ = ZᵀZ. With complete constraints (r = 1)
// the first step is skipped and the support is E1.
struct NetworkEstimate {
    PrecisionEstimate precision;
    double lambda_star = 0.0;  // 0 when the lasso step was skipped
    double information_ratio = 0.0;
};

NetworkEstimate estimate_network(const Eigen::MatrixXd& raw,
                                 const graph::EdgeConstraints& constraints,
                                 const std::vector<double>& grid, int folds,
                                 std::uint64_t seed, int threads = 1);

namespace detail {

// Cyclic coordinate descent with residual updates for
//   (1/m)‖y − Xθ‖² + 2λ Σ_j w_j |θ_j|.
// col_sq_over_m(j) = ‖X_j‖²/m. residual must enter as y − Xθ and is kept in
// sync. Returns sweeps used; throws NoConvergence past max_sweeps.
int coordinate_descent(const Eigen::MatrixXd& x, double m, double lambda,
                       const Eigen::VectorXd& weights,
                       const Eigen::VectorXd& col_sq_over_m, Eigen::VectorXd& theta,
                       Eigen::VectorXd& residual, double tol = 1e-8,
                       int max_sweeps = 10000);

}  // namespace detail

}  // namespace netgsa::estimator

#endif
