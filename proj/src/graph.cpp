#include "netgsa/graph.hpp"

#include <algorithm>
#include <cmath>

#include "netgsa/linalg.hpp"

namespace netgsa::graph {

EdgeConstraints::EdgeConstraints(int dim) : dim_(dim), j1_(dim), j0_(dim) {
    if (dim < 1) throw std::invalid_argument("EdgeConstraints: dim must be positive");
}

void EdgeConstraints::check_pair(int i, int j) const {
    if (i < 0 || i >= dim_ || j < 0 || j >= dim_)
        throw IndexOutOfRange("EdgeConstraints: node index out of range");
    if (i == j) throw std::invalid_argument("EdgeConstraints: self-pairs are not allowed");
}

void EdgeConstraints::add_known_edge(int i, int j) {
    check_pair(i, j);
    auto pr = ordered_pair(i, j);
    if (e0_.count(pr))
        throw ConstraintConflict("EdgeConstraints: pair already marked as known non-edge");
    if (e1_.insert(pr).second) {
        j1_[i].insert(std::lower_bound(j1_[i].begin(), j1_[i].end(), j), j);
        j1_[j].insert(std::lower_bound(j1_[j].begin(), j1_[j].end(), i), i);
    }
}

void EdgeConstraints::add_known_non_edge(int i, int j) {
    check_pair(i, j);
    auto pr = ordered_pair(i, j);
    if (e1_.count(pr))
        throw ConstraintConflict("EdgeConstraints: pair already marked as known edge");
    if (e0_.insert(pr).second) {
        j0_[i].insert(std::lower_bound(j0_[i].begin(), j0_[i].end(), j), j);
        j0_[j].insert(std::lower_bound(j0_[j].begin(), j0_[j].end(), i), i);
    }
}

bool EdgeConstraints::is_known_edge(int i, int j) const {
    check_pair(i, j);
    return e1_.count(ordered_pair(i, j)) > 0;
}

bool EdgeConstraints::is_known_non_edge(int i, int j) const {
    check_pair(i, j);
    return e0_.count(ordered_pair(i, j)) > 0;
}

double EdgeConstraints::information_ratio() const {
    const double n_pairs = 0.5 * dim_ * (dim_ - 1);
    return static_cast<double>(e0_.size() + e1_.size()) / n_pairs;
}

bool EdgeConstraints::complete() const {
    return e0_.size() + e1_.size() ==
           static_cast<std::size_t>(dim_) * (dim_ - 1) / 2;
}

EdgeConstraints::NodeConstraints EdgeConstraints::per_node(int i) const {
    if (i < 0 || i >= dim_)
        throw IndexOutOfRange("EdgeConstraints: node index out of range");
    return NodeConstraints{j1_[i], j0_[i]};
}

Eigen::MatrixXd normalize_adjacency(const Eigen::MatrixXd& adjacency, double zeta) {
    if (adjacency.rows() != adjacency.cols())
        throw std::invalid_argument("normalize_adjacency: matrix must be square");
    if (zeta < 0.0) throw std::invalid_argument("normalize_adjacency: zeta must be >= 0");
    for (Eigen::Index i = 0; i < adjacency.rows(); ++i)
        if (adjacency(i, i) != 0.0)
            throw NonZeroDiagonal("normalize_adjacency: adjacency diagonal must be zero");

    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(adjacency.rows(), adjacency.cols());
    for (Eigen::Index i = 0; i < adjacency.rows(); ++i) {
        const double denom = adjacency.row(i).cwiseAbs().sum() + zeta;
        if (denom > 0.0) out.row(i) = adjacency.row(i) / denom;
    }
    return out;
}

Eigen::MatrixXd influence_matrix(const Eigen::MatrixXd& normalized_adjacency) {
    const Eigen::Index p = normalized_adjacency.rows();
    if (normalized_adjacency.isZero(0.0)) return Eigen::MatrixXd::Identity(p, p);
    return linalg::pseudo_inverse(Eigen::MatrixXd::Identity(p, p) - normalized_adjacency);
}

}  // namespace netgsa::graph
