#include "netgsa/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "netgsa/linalg.hpp"
#include "netgsa/parallel.hpp"
#include "netgsa/rng.hpp"

namespace netgsa::estimator {

namespace {

double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

// Predictor layout for one node: known non-neighbors removed from the design,
// known neighbors carry penalty weight 0, everyone else weight 1.
struct NodeDesign {
    std::vector<int> cols;   // predictor node ids
    Eigen::VectorXd weight;  // penalty weight per predictor
};

NodeDesign node_design(int node, int p, const graph::EdgeConstraints& constraints) {
    auto nc = constraints.per_node(node);
    std::vector<bool> in_j1(p, false), in_j0(p, false);
    for (int j : nc.known_neighbors) in_j1[j] = true;
    for (int j : nc.known_non_neighbors) in_j0[j] = true;

    NodeDesign d;
    d.cols.reserve(p - 1);
    for (int j = 0; j < p; ++j) {
        if (j == node || in_j0[j]) continue;
        d.cols.push_back(j);
    }
    d.weight.resize(static_cast<Eigen::Index>(d.cols.size()));
    for (std::size_t k = 0; k < d.cols.size(); ++k)
        d.weight(static_cast<Eigen::Index>(k)) = in_j1[d.cols[k]] ? 0.0 : 1.0;
    return d;
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& z, const std::vector<int>& rows,
                               const std::vector<int>& cols) {
    Eigen::MatrixXd out(rows.size(), cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c)
        for (std::size_t r = 0; r < rows.size(); ++r)
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                z(rows[r], cols[c]);
    return out;
}

Eigen::VectorXd gather_vector(const Eigen::MatrixXd& z, const std::vector<int>& rows,
                              int col) {
    Eigen::VectorXd out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        out(static_cast<Eigen::Index>(r)) = z(rows[r], col);
    return out;
}

// Deterministic K-fold assignment: a seeded shuffle dealt round-robin.
std::vector<std::vector<int>> fold_rows(int m, int folds, std::uint64_t seed) {
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    auto eng = make_engine(seed, /*stream=*/0x6f6c64u);
    std::shuffle(perm.begin(), perm.end(), eng);
    std::vector<std::vector<int>> out(folds);
    for (int j = 0; j < m; ++j) out[j % folds].push_back(perm[j]);
    return out;
}

// Held-out squared error per grid λ for one node on one fold, warm-starting
// down the (descending) path.
void node_fold_errors(const StandardizedData& z, int node, const NodeDesign& design,
                      const std::vector<int>& train, const std::vector<int>& test,
                      const std::vector<double>& desc_grid, Eigen::VectorXd& errors) {
    const double mt = static_cast<double>(train.size());
    Eigen::MatrixXd xtr = gather_columns(z.columns, train, design.cols);
    Eigen::VectorXd ytr = gather_vector(z.columns, train, node);
    Eigen::MatrixXd xte = gather_columns(z.columns, test, design.cols);
    Eigen::VectorXd yte = gather_vector(z.columns, test, node);

    Eigen::VectorXd col_sq = xtr.colwise().squaredNorm() / mt;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(xtr.cols());
    Eigen::VectorXd residual = ytr;
    for (std::size_t g = 0; g < desc_grid.size(); ++g) {
        detail::coordinate_descent(xtr, mt, desc_grid[g], design.weight, col_sq, theta,
                                   residual);
        errors(static_cast<Eigen::Index>(g)) += (yte - xte * theta).squaredNorm();
    }
}

std::vector<double> descending(const std::vector<double>& grid) {
    std::vector<double> g = grid;
    std::sort(g.begin(), g.end(), std::greater<double>());
    return g;
}

// CV(λ) for every grid element; order matches `grid`.
std::vector<double> cv_scores(const StandardizedData& z,
                              const graph::EdgeConstraints& constraints,
                              const std::vector<double>& grid, int folds,
                              std::uint64_t seed, int threads) {
    if (grid.empty()) throw EmptyGrid("cv: empty lambda grid");
    for (double l : grid)
        if (!(l > 0.0)) throw std::invalid_argument("cv: lambda must be positive");
    if (folds < 2) throw TooFewSamples("cv: fold count must be at least 2");
    const int m = static_cast<int>(z.m());
    if (m < folds) throw TooFewSamples("cv: need at least one sample per fold");

    const int p = static_cast<int>(z.p());
    const auto test_rows = fold_rows(m, folds, seed);
    const auto desc = descending(grid);

    std::vector<Eigen::VectorXd> per_node(p, Eigen::VectorXd::Zero(desc.size()));
    parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t i) {
        const int node = static_cast<int>(i);
        const NodeDesign design = node_design(node, p, constraints);
        for (int f = 0; f < folds; ++f) {
            std::vector<int> train;
            train.reserve(m - test_rows[f].size());
            for (int j = 0; j < m; ++j) train.push_back(j);
            for (int t : test_rows[f])
                train.erase(std::find(train.begin(), train.end(), t));
            node_fold_errors(z, node, design, train, test_rows[f], desc, per_node[i]);
        }
    });

    Eigen::VectorXd total = Eigen::VectorXd::Zero(desc.size());
    for (const auto& v : per_node) total += v;

    std::vector<double> out(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        auto it = std::find(desc.begin(), desc.end(), grid[g]);
        out[g] = total(static_cast<Eigen::Index>(it - desc.begin()));
    }
    return out;
}

}  // namespace

namespace detail {

int coordinate_descent(const Eigen::MatrixXd& x, double m, double lambda,
                       const Eigen::VectorXd& weights,
                       const Eigen::VectorXd& col_sq_over_m, Eigen::VectorXd& theta,
                       Eigen::VectorXd& residual, double tol, int max_sweeps) {
    const Eigen::Index n_pred = x.cols();
    if (n_pred == 0) return 0;

    auto update = [&](Eigen::Index j) -> double {
        const double a = col_sq_over_m(j);
        if (a <= 0.0) return 0.0;
        const double old = theta(j);
        const double rho = x.col(j).dot(residual) / m + a * old;
        const double next = soft_threshold(rho, lambda * weights(j)) / a;
        if (next != old) {
            residual += x.col(j) * (old - next);
            theta(j) = next;
        }
        return std::abs(next - old);
    };

    bool full_pass = true;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_change = 0.0;
        if (full_pass) {
            for (Eigen::Index j = 0; j < n_pred; ++j)
                max_change = std::max(max_change, update(j));
        } else {
            for (Eigen::Index j = 0; j < n_pred; ++j) {
                if (theta(j) != 0.0 || weights(j) == 0.0)
                    max_change = std::max(max_change, update(j));
            }
        }
        if (max_change < tol) {
            if (full_pass) return sweep + 1;
            full_pass = true;  // confirm with a sweep over all coordinates
        } else {
            full_pass = false;
        }
    }
    throw NoConvergence("coordinate descent: sweep cap reached");
}

}  // namespace detail

StandardizedData standardize(const Eigen::MatrixXd& raw) {
    const Eigen::Index m = raw.rows(), p = raw.cols();
    if (m < 2) throw std::invalid_argument("standardize: need at least two samples");

    StandardizedData out;
    out.columns = raw;
    out.column_means.resize(p);
    out.column_norms.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double mean = out.columns.col(j).mean();
        out.columns.col(j).array() -= mean;
        const double norm = out.columns.col(j).norm();
        const double scale = std::max(1.0, raw.col(j).cwiseAbs().maxCoeff());
        if (norm <= 1e-12 * std::sqrt(static_cast<double>(m)) * scale)
            throw ConstantColumn("standardize: column " + std::to_string(j) +
                                 " is constant");
        out.columns.col(j) /= norm;
        out.column_means(j) = mean;
        out.column_norms(j) = norm;
    }
    return out;
}

NeighborhoodFit weighted_lasso(const StandardizedData& z, int node,
                               const graph::EdgeConstraints& constraints,
                               double lambda) {
    const int p = static_cast<int>(z.p());
    if (node < 0 || node >= p)
        throw graph::IndexOutOfRange("weighted_lasso: node out of range");
    if (!(lambda > 0.0)) throw std::invalid_argument("weighted_lasso: lambda must be > 0");
    if (constraints.dim() != p)
        throw std::invalid_argument("weighted_lasso: constraint dimension mismatch");

    const NodeDesign design = node_design(node, p, constraints);
    Eigen::MatrixXd x(z.m(), static_cast<Eigen::Index>(design.cols.size()));
    for (std::size_t k = 0; k < design.cols.size(); ++k)
        x.col(static_cast<Eigen::Index>(k)) = z.columns.col(design.cols[k]);
    Eigen::VectorXd y = z.columns.col(node);

    const double m = static_cast<double>(z.m());
    Eigen::VectorXd col_sq = x.colwise().squaredNorm() / m;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(x.cols());
    Eigen::VectorXd residual = y;
    detail::coordinate_descent(x, m, lambda, design.weight, col_sq, theta, residual);

    NeighborhoodFit fit;
    fit.node = node;
    fit.lambda = lambda;
    fit.coefficients = Eigen::VectorXd::Zero(p);
    for (std::size_t k = 0; k < design.cols.size(); ++k)
        fit.coefficients(design.cols[k]) = theta(static_cast<Eigen::Index>(k));
    return fit;
}

double cv_score(const StandardizedData& z, const graph::EdgeConstraints& constraints,
                double lambda, int folds, std::uint64_t seed) {
    return cv_scores(z, constraints, {lambda}, folds, seed, 1)[0];
}

double select_lambda(const StandardizedData& z, const graph::EdgeConstraints& constraints,
                     const std::vector<double>& grid, int folds, std::uint64_t seed,
                     int threads) {
    const auto scores = cv_scores(z, constraints, grid, folds, seed, threads);
    double best_lambda = grid[0];
    double best_score = scores[0];
    for (std::size_t g = 1; g < grid.size(); ++g) {
        if (scores[g] < best_score ||
            (scores[g] == best_score && grid[g] > best_lambda)) {
            best_score = scores[g];
            best_lambda = grid[g];
        }
    }
    return best_lambda;
}

std::vector<double> default_lambda_grid(const StandardizedData& z, int count) {
    if (count < 1) throw EmptyGrid("default_lambda_grid: count must be positive");
    const Eigen::MatrixXd s = z.columns.transpose() * z.columns;
    double max_off = 0.0;
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index j = 0; j < s.cols(); ++j)
            if (i != j) max_off = std::max(max_off, std::abs(s(i, j)));
    const double lambda_max = max_off / static_cast<double>(z.m());
    if (!(lambda_max > 0.0)) return {1e-8};

    std::vector<double> grid(count);
    if (count == 1) {
        grid[0] = lambda_max;
        return grid;
    }
    const double lo = std::log(0.01), hi = std::log(1.0);
    for (int g = 0; g < count; ++g)
        grid[g] = lambda_max * std::exp(lo + (hi - lo) * g / (count - 1));
    return grid;
}

graph::EdgeSet assemble_edges(const std::vector<NeighborhoodFit>& fits,
                              const graph::EdgeConstraints& constraints) {
    const int p = constraints.dim();
    if (fits.size() != static_cast<std::size_t>(p))
        throw MissingFit("assemble_edges: need exactly one fit per node");
    std::vector<const NeighborhoodFit*> by_node(p, nullptr);
    for (const auto& f : fits) {
        if (f.node < 0 || f.node >= p || by_node[f.node])
            throw MissingFit("assemble_edges: fits must cover each node exactly once");
        by_node[f.node] = &f;
    }

    graph::EdgeSet edges;
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j)
            if (by_node[i]->coefficients(j) != 0.0 || by_node[j]->coefficients(i) != 0.0)
                edges.insert({i, j});
    for (const auto& e : constraints.known_edges()) edges.insert(e);
    for (const auto& e : constraints.known_non_edges()) edges.erase(e);
    return edges;
}

PrecisionEstimate constrained_mle(const Eigen::MatrixXd& sigma_hat,
                                  const graph::EdgeSet& support,
                                  const ConstrainedMleOptions& options) {
    const int p = static_cast<int>(sigma_hat.rows());
    if (sigma_hat.cols() != p)
        throw std::invalid_argument("constrained_mle: matrix must be square");
    if (!sigma_hat.isApprox(sigma_hat.transpose(), 1e-10))
        throw std::invalid_argument("constrained_mle: matrix must be symmetric");
    for (int i = 0; i < p; ++i)
        if (std::abs(sigma_hat(i, i) - 1.0) > 1e-8)
            throw std::invalid_argument("constrained_mle: expected unit diagonal");

    std::vector<std::vector<int>> neighbors(p);
    for (const auto& [i, j] : support) {
        if (i < 0 || j < 0 || i >= p || j >= p)
            throw graph::IndexOutOfRange("constrained_mle: support index out of range");
        if (i == j) throw std::invalid_argument("constrained_mle: support has a self-pair");
        neighbors[i].push_back(j);
        neighbors[j].push_back(i);
    }

    // Block coordinate ascent on the covariance completion W: column j's free
    // entries are set to W₁₁β with W[J,J] β = Σ̂[J,j]; at the fixed point
    // W = Â⁻¹ with Â zero off support (Dempster's covariance selection).
    Eigen::MatrixXd w = sigma_hat;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    auto kkt_residual = [&](const Eigen::MatrixXd& prec) {
        Eigen::MatrixXd inv = linalg::invert_spd(linalg::cholesky(prec));
        double r = 0.0;
        for (int i = 0; i < p; ++i) r = std::max(r, std::abs(inv(i, i) - sigma_hat(i, i)));
        for (const auto& [i, j] : support)
            r = std::max(r, std::abs(inv(i, j) - sigma_hat(i, j)));
        return r;
    };

    PrecisionEstimate out;
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (int j = 0; j < p; ++j) {
            const auto& nbr = neighbors[j];
            Eigen::VectorXd beta;
            double quad = 0.0;
            if (!nbr.empty()) {
                Eigen::MatrixXd wjj(nbr.size(), nbr.size());
                Eigen::VectorXd sj(nbr.size());
                for (std::size_t r = 0; r < nbr.size(); ++r) {
                    sj(static_cast<Eigen::Index>(r)) = sigma_hat(nbr[r], j);
                    for (std::size_t c = 0; c < nbr.size(); ++c)
                        wjj(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                            w(nbr[r], nbr[c]);
                }
                Eigen::LLT<Eigen::MatrixXd> llt(wjj);
                if (llt.info() != Eigen::Success)
                    throw linalg::NotPositiveDefinite(
                        "constrained_mle: support block lost positive definiteness");
                beta = llt.solve(sj);
                quad = beta.dot(sj);

                Eigen::VectorXd w12 = Eigen::VectorXd::Zero(p);
                for (std::size_t r = 0; r < nbr.size(); ++r)
                    w12 += w.col(nbr[r]) * beta(static_cast<Eigen::Index>(r));
                w12(j) = sigma_hat(j, j);
                for (int i = 0; i < p; ++i) {
                    if (i == j) continue;
                    max_change = std::max(max_change, std::abs(w(i, j) - w12(i)));
                    w(i, j) = w12(i);
                    w(j, i) = w12(i);
                }
            } else {
                for (int i = 0; i < p; ++i) {
                    if (i == j) continue;
                    max_change = std::max(max_change, std::abs(w(i, j)));
                    w(i, j) = 0.0;
                    w(j, i) = 0.0;
                }
            }

            const double gamma = sigma_hat(j, j) - quad;
            if (!(gamma > 0.0))
                throw linalg::NotPositiveDefinite(
                    "constrained_mle: no positive definite completion");
            const double ajj = 1.0 / gamma;
            a.col(j).setZero();
            a.row(j).setZero();
            a(j, j) = ajj;
            for (std::size_t r = 0; r < nbr.size(); ++r) {
                a(nbr[r], j) = -beta(static_cast<Eigen::Index>(r)) * ajj;
                a(j, nbr[r]) = a(nbr[r], j);
            }
        }

        if (options.objective_trace) {
            double obj = std::numeric_limits<double>::infinity();
            try {
                obj = (sigma_hat.cwiseProduct(a)).sum() - linalg::logdet(linalg::cholesky(a));
            } catch (const linalg::NotPositiveDefinite&) {
            }
            options.objective_trace->push_back(obj);
        }

        if (max_change < options.entry_tol) {
            const double kkt = kkt_residual(a);
            if (kkt <= options.kkt_tol) {
                out.matrix = 0.5 * (a + a.transpose());
                out.support = support;
                out.kkt_residual = kkt;
                out.sweeps = sweep + 1;
                return out;
            }
        }
    }
    throw NoConvergence("constrained_mle: sweep cap reached before KKT tolerance");
}

NetworkEstimate estimate_network(const Eigen::MatrixXd& raw,
                                 const graph::EdgeConstraints& constraints,
                                 const std::vector<double>& grid, int folds,
                                 std::uint64_t seed, int threads) {
    StandardizedData z = standardize(raw);
    const int p = static_cast<int>(z.p());
    if (constraints.dim() != p)
        throw std::invalid_argument("estimate_network: constraint dimension mismatch");

    NetworkEstimate out;
    out.information_ratio = constraints.information_ratio();

    graph::EdgeSet support;
    if (constraints.complete()) {
        support = constraints.known_edges();
    } else {
        out.lambda_star = select_lambda(z, constraints, grid, folds, seed, threads);
        std::vector<NeighborhoodFit> fits(p);
        parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t i) {
            fits[i] = weighted_lasso(z, static_cast<int>(i), constraints, out.lambda_star);
        });
        support = assemble_edges(fits, constraints);
    }

    Eigen::MatrixXd sigma = z.columns.transpose() * z.columns;
    sigma.diagonal().setOnes();
    sigma = 0.5 * (sigma + sigma.transpose());
    out.precision = constrained_mle(sigma, support);
    return out;
}

}  // namespace netgsa::estimator
