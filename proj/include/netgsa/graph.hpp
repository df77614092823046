#ifndef NETGSA_GRAPH_HPP
#define NETGSA_GRAPH_HPP

#include <Eigen/Dense>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

namespace netgsa::graph {

class NonZeroDiagonal : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IndexOutOfRange : public std::out_of_range {
  public:
    using std::out_of_range::out_of_range;
};

class ConstraintConflict : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

using EdgeSet = std::set<std::pair<int, int>>;

inline std::pair<int, int> ordered_pair(int i, int j) {
    return i < j ? std::make_pair(i, j) : std::make_pair(j, i);
}

// External edge knowledge over p nodes: E1 = pairs known to be edges,
// E0 = pairs known to be non-edges. Pairs are unordered; E1 and E0 disjoint.
class EdgeConstraints {
  public:
    explicit EdgeConstraints(int dim);

    void add_known_edge(int i, int j);
    void add_known_non_edge(int i, int j);

    bool is_known_edge(int i, int j) const;
    bool is_known_non_edge(int i, int j) const;

    const EdgeSet& known_edges() const { return e1_; }
    const EdgeSet& known_non_edges() const { return e0_; }

    int dim() const { return dim_; }

    // r = (|E0| + |E1|) / (p(p-1)/2), the fraction of pairs with known status.
    double information_ratio() const;
    bool complete() const;  // every pair has known status

    // J1ⁱ = known neighbours of i, J0ⁱ = known non-neighbours of i.
    struct NodeConstraints {
        std::vector<int> known_neighbors;      // J1ⁱ
        std::vector<int> known_non_neighbors;  // J0ⁱ
    };
    NodeConstraints per_node(int i) const;

  private:
    void check_pair(int i, int j) const;

    int dim_;
    EdgeSet e1_, e0_;
    std::vector<std::vector<int>> j1_, j0_;  // per-node views, kept sorted
};

// Row-normalized adjacency 𝒜(ζ): entry (i,i') = A_{ii'} / (Σ_{i'} |A_{ii'}| + ζ).
// Rows with no off-diagonal weight stay zero (also when ζ = 0).
Eigen::MatrixXd normalize_adjacency(const Eigen::MatrixXd& adjacency, double zeta);

// Influence matrix Λ = (I − 𝒜)⁺ of a row-normalized adjacency.
Eigen::MatrixXd influence_matrix(const Eigen::MatrixXd& normalized_adjacency);

}  // namespace netgsa::graph

#endif
