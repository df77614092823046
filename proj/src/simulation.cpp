#include "netgsa/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "netgsa/estimator.hpp"
#include "netgsa/linalg.hpp"
#include "netgsa/parallel.hpp"
#include "netgsa/rng.hpp"

namespace netgsa::sim {

namespace {

using Edge = std::pair<int, int>;

// Scale-free subgraph: preferential-attachment tree, then extra edges drawn
// with degree-proportional endpoints until n_edges is reached.
std::vector<Edge> scale_free_graph(int n, int n_edges, std::mt19937_64& eng) {
    std::vector<double> degree(n, 0.0);
    std::set<Edge> edges;
    auto add = [&](int a, int b) {
        edges.insert(graph::ordered_pair(a, b));
        degree[a] += 1.0;
        degree[b] += 1.0;
    };
    add(0, 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int v = 2; v < n; ++v) {
        double total = std::accumulate(degree.begin(), degree.begin() + v, 0.0);
        double pick = unif(eng) * total;
        int target = 0;
        for (int u = 0; u < v; ++u) {
            pick -= degree[u];
            if (pick <= 0.0) {
                target = u;
                break;
            }
        }
        add(target, v);
    }
    const int max_edges = n * (n - 1) / 2;
    int wanted = std::min(n_edges, max_edges);
    int guard = 0;
    while (static_cast<int>(edges.size()) < wanted && guard++ < 100000) {
        double total = std::accumulate(degree.begin(), degree.end(), 0.0);
        auto draw = [&]() {
            double pick = unif(eng) * total;
            for (int u = 0; u < n; ++u) {
                pick -= degree[u];
                if (pick <= 0.0) return u;
            }
            return n - 1;
        };
        int a = draw(), b = draw();
        if (a == b || edges.count(graph::ordered_pair(a, b))) continue;
        add(a, b);
    }
    return {edges.begin(), edges.end()};
}

double min_eigenvalue_of(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

Eigen::MatrixXd weights_to_matrix(int p, const std::map<Edge, double>& weights) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p, p);
    for (const auto& [e, w] : weights) {
        b(e.first, e.second) = w;
        b(e.second, e.first) = w;
    }
    return b;
}

Eigen::MatrixXd gaussian_matrix(int rows, int cols, std::mt19937_64& eng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd out(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out(i, j) = normal(eng);
    return out;
}

// m samples from N(0, precision⁻¹), rows are samples.
Eigen::MatrixXd ggm_sample(const Eigen::MatrixXd& precision, int m,
                           std::mt19937_64& eng) {
    const int p = static_cast<int>(precision.rows());
    Eigen::MatrixXd cov = linalg::invert_spd(linalg::cholesky(precision));
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    Eigen::MatrixXd lower = llt.matrixL();
    return gaussian_matrix(m, p, eng) * lower.transpose();
}

struct ReplicateResult {
    std::vector<char> rejected;
    std::vector<double> p_values;
};

}  // namespace

void ExperimentConfig::validate() const {
    if (p < 2 || subnetworks < 1 || subnetwork_size < 2)
        throw InvalidConfig("config: need p >= 2 and subnetworks of size >= 2");
    if (p != subnetworks * subnetwork_size)
        throw InvalidConfig("config: subnetworks must partition the p nodes");
    if (edges_per_subnetwork < 0 ||
        resolved_edges_per_subnetwork() < subnetwork_size - 1 ||
        resolved_edges_per_subnetwork() > subnetwork_size * (subnetwork_size - 1) / 2)
        throw InvalidConfig("config: edges_per_subnetwork out of range");
    if (inter_connect_prob < 0.0 || inter_connect_prob > 1.0)
        throw InvalidConfig("config: inter_connect_prob must be in [0,1]");
    if (!mean_change_props.empty() &&
        mean_change_props.size() != static_cast<std::size_t>(subnetworks))
        throw InvalidConfig("config: mean_change_props must have one entry per subnetwork");
    for (double f : mean_change_props)
        if (f < 0.0 || f > 1.0) throw InvalidConfig("config: mean-change fractions in [0,1]");
    if (structure_change_frac < 0.0 || structure_change_frac > 1.0)
        throw InvalidConfig("config: structure_change_frac must be in [0,1]");
    for (int s : structure_changed_subnetworks)
        if (s < 1 || s > subnetworks)
            throw InvalidConfig("config: structure_changed_subnetworks ids are 1-based");
    if (!(sigma_gamma >= 0.0) || !(sigma_eps > 0.0))
        throw InvalidConfig("config: sigma_gamma >= 0 and sigma_eps > 0 required");
    if (m < 2 || n1 < 1 || n2 < 1 || replicates < 1)
        throw InvalidConfig("config: m >= 2, n1,n2 >= 1, replicates >= 1 required");
    if (cv_folds < 2 || cv_folds > m)
        throw InvalidConfig("config: cv_folds must be in [2, m]");
    if (lambda_grid_size < 1) throw InvalidConfig("config: lambda_grid_size must be >= 1");
    if (!(q_star > 0.0 && q_star < 1.0)) throw InvalidConfig("config: q_star in (0,1)");
    if (zeta < 0.0) throw InvalidConfig("config: zeta must be >= 0");
    for (double r : r_values)
        if (r < 0.0 || r > 1.0) throw InvalidConfig("config: r values must be in [0,1]");
    if (!(weight_low > 0.0) || weight_low > weight_high)
        throw InvalidConfig("config: weight range must satisfy 0 < low <= high");
    if (!(min_eigenvalue > 0.0)) throw InvalidConfig("config: min_eigenvalue must be > 0");
}

NetworkPair generate_network_pair(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    auto eng = make_engine(seed, 0x6e6574u);
    const int size = cfg.subnetwork_size;

    // One subgraph topology, replicated across subnetworks (identical under
    // the null), plus Bernoulli inter-subnetwork links.
    std::vector<Edge> sub = scale_free_graph(size, cfg.resolved_edges_per_subnetwork(), eng);
    std::set<Edge> null_edges;
    for (int s = 0; s < cfg.subnetworks; ++s) {
        const int off = s * size;
        for (const auto& [a, b] : sub) null_edges.insert({a + off, b + off});
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> node(0, size - 1);
    for (int s1 = 0; s1 < cfg.subnetworks; ++s1) {
        for (int s2 = s1 + 1; s2 < cfg.subnetworks; ++s2) {
            if (unif(eng) < cfg.inter_connect_prob) {
                int a = s1 * size + node(eng);
                int b = s2 * size + node(eng);
                null_edges.insert(graph::ordered_pair(a, b));
            }
        }
    }

    std::map<Edge, double> null_weights;
    std::uniform_real_distribution<double> magnitude(cfg.weight_low, cfg.weight_high);
    for (const auto& e : null_edges) {
        const double sign = unif(eng) < 0.5 ? 1.0 : -1.0;
        null_weights[e] = sign * magnitude(eng);
    }

    // Alternative: rewire (or remove) a fraction of within-subnetwork edges in
    // the designated subnetworks; a moved edge keeps its weight.
    std::map<Edge, double> alt_weights = null_weights;
    for (int s1 : cfg.structure_changed_subnetworks) {
        const int off = (s1 - 1) * size;
        std::vector<Edge> within;
        for (const auto& [e, w] : alt_weights)
            if (e.first >= off && e.first < off + size && e.second >= off &&
                e.second < off + size)
                within.push_back(e);
        const int k = static_cast<int>(
            std::llround(cfg.structure_change_frac * static_cast<double>(within.size())));
        if (k == 0) continue;

        std::vector<Edge> removed;
        std::sample(within.begin(), within.end(), std::back_inserter(removed),
                    static_cast<std::size_t>(k), eng);
        if (cfg.structure_change_mode == StructureChangeMode::remove) {
            for (const auto& e : removed) alt_weights.erase(e);
            continue;
        }
        std::vector<Edge> candidates;
        for (int a = off; a < off + size; ++a)
            for (int b = a + 1; b < off + size; ++b)
                if (!alt_weights.count({a, b})) candidates.push_back({a, b});
        std::vector<Edge> added;
        std::sample(candidates.begin(), candidates.end(), std::back_inserter(added),
                    std::min<std::size_t>(removed.size(), candidates.size()), eng);
        for (std::size_t i = 0; i < added.size(); ++i) {
            alt_weights[added[i]] = alt_weights.at(removed[i]);
            alt_weights.erase(removed[i]);
        }
    }

    Eigen::MatrixXd b1 = weights_to_matrix(cfg.p, null_weights);
    Eigen::MatrixXd b2 = weights_to_matrix(cfg.p, alt_weights);

    // One shared diagonal shift keeps the untouched blocks of the two
    // conditions identical; A = I + B/δ has unit diagonal by construction.
    const double delta = std::max(
        {cfg.min_eigenvalue, cfg.min_eigenvalue - min_eigenvalue_of(b1),
         cfg.min_eigenvalue - min_eigenvalue_of(b2)});
    NetworkPair out;
    out.null_precision = Eigen::MatrixXd::Identity(cfg.p, cfg.p) + b1 / delta;
    out.alt_precision = Eigen::MatrixXd::Identity(cfg.p, cfg.p) + b2 / delta;
    return out;
}

Eigen::MatrixXd generate_network(const ExperimentConfig& cfg, Condition condition,
                                 std::uint64_t seed) {
    NetworkPair pair = generate_network_pair(cfg, seed);
    return condition == Condition::null_model ? pair.null_precision : pair.alt_precision;
}

Eigen::VectorXd alternative_means(const ExperimentConfig& cfg, std::uint64_t seed) {
    auto eng = make_engine(seed, 0x6d75u);
    Eigen::VectorXd mu = Eigen::VectorXd::Constant(cfg.p, cfg.base_mean);
    if (cfg.mean_change_props.empty()) return mu;
    for (int s = 0; s < cfg.subnetworks; ++s) {
        const int k = static_cast<int>(
            std::llround(cfg.mean_change_props[s] * cfg.subnetwork_size));
        if (k == 0) continue;
        std::vector<int> nodes(cfg.subnetwork_size);
        std::iota(nodes.begin(), nodes.end(), s * cfg.subnetwork_size);
        std::shuffle(nodes.begin(), nodes.end(), eng);
        for (int i = 0; i < k; ++i) mu(nodes[i]) += cfg.mean_change_magnitude;
    }
    return mu;
}

Eigen::MatrixXd influence_of_precision(const Eigen::MatrixXd& precision, double zeta) {
    Eigen::MatrixXd adjacency = precision;
    adjacency.diagonal().setZero();
    return graph::influence_matrix(graph::normalize_adjacency(adjacency, zeta));
}

ReplicateData generate_data(const Eigen::MatrixXd& precision1,
                            const Eigen::MatrixXd& precision2,
                            const Eigen::VectorXd& mu1, const Eigen::VectorXd& mu2,
                            double sigma_gamma, double sigma_eps, int n1, int n2,
                            int m, double zeta, std::uint64_t seed) {
    const int p = static_cast<int>(precision1.rows());
    auto eng = make_engine(seed, 0x64617461u);

    Eigen::MatrixXd lambda1 = influence_of_precision(precision1, zeta);
    Eigen::MatrixXd lambda2 = influence_of_precision(precision2, zeta);

    Eigen::MatrixXd expression(p, n1 + n2);
    const Eigen::MatrixXd* lambdas[2] = {&lambda1, &lambda2};
    const Eigen::VectorXd* mus[2] = {&mu1, &mu2};
    for (int k = 0; k < 2; ++k) {
        const int nk = k == 0 ? n1 : n2;
        const int offset = k == 0 ? 0 : n1;
        Eigen::MatrixXd latent =
            (*mus[k]).replicate(1, nk) + sigma_gamma * gaussian_matrix(p, nk, eng);
        Eigen::MatrixXd noise = sigma_eps * gaussian_matrix(p, nk, eng);
        expression.middleCols(offset, nk) = (*lambdas[k]) * latent + noise;
    }

    Eigen::MatrixXd learning1 = ggm_sample(precision1, m, eng);
    Eigen::MatrixXd learning2 = ggm_sample(precision2, m, eng);

    return ReplicateData{
        mlm::TwoConditionDesign(std::move(lambda1), std::move(lambda2),
                                std::move(expression), n1, n2),
        std::move(learning1), std::move(learning2), mu1, mu2};
}

graph::EdgeConstraints sample_constraints(const Eigen::MatrixXd& truth, double r,
                                          std::uint64_t seed) {
    if (r < 0.0 || r > 1.0)
        throw std::invalid_argument("sample_constraints: r must be in [0,1]");
    const int p = static_cast<int>(truth.rows());
    std::vector<Edge> pairs;
    pairs.reserve(p * (p - 1) / 2);
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j) pairs.push_back({i, j});

    auto eng = make_engine(seed, 0x636f6eu);
    std::shuffle(pairs.begin(), pairs.end(), eng);
    const auto count = static_cast<std::size_t>(
        std::llround(r * static_cast<double>(pairs.size())));

    graph::EdgeConstraints out(p);
    for (std::size_t t = 0; t < count; ++t) {
        const auto& [i, j] = pairs[t];
        if (truth(i, j) != 0.0)
            out.add_known_edge(i, j);
        else
            out.add_known_non_edge(i, j);
    }
    return out;
}

DevianceReport deviance(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth) {
    if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
        throw std::invalid_argument("deviance: dimension mismatch");
    const int p = static_cast<int>(truth.rows());
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (int i = 0; i < p; ++i) {
        for (int j = i + 1; j < p; ++j) {
            const bool is_true = truth(i, j) != 0.0;
            const bool is_est = estimate(i, j) != 0.0;
            tp += is_true && is_est;
            fp += !is_true && is_est;
            fn += is_true && !is_est;
            tn += !is_true && !is_est;
        }
    }
    DevianceReport out;
    out.fpr = (fp + tn) > 0 ? fp / (fp + tn) : 0.0;
    out.fnr = (fn + tp) > 0 ? fn / (fn + tp) : 0.0;
    const double denom =
        std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    out.mcc = denom > 0.0 ? (tp * tn - fp * fn) / denom : 0.0;
    out.frobenius = (estimate - truth).norm() / truth.norm();
    return out;
}

std::vector<mlm::NamedPathway> subnetwork_pathways(const ExperimentConfig& cfg) {
    std::vector<mlm::NamedPathway> out;
    out.reserve(cfg.subnetworks);
    for (int s = 0; s < cfg.subnetworks; ++s) {
        Eigen::VectorXd ind = Eigen::VectorXd::Zero(cfg.p);
        ind.segment(s * cfg.subnetwork_size, cfg.subnetwork_size).setOnes();
        out.push_back({"pathway_" + std::to_string(s + 1), std::move(ind)});
    }
    return out;
}

DevianceStudy deviance_study(const ExperimentConfig& cfg, Condition condition, double r,
                             int threads) {
    cfg.validate();
    std::vector<DevianceReport> reports(cfg.replicates);
    parallel_for(static_cast<std::size_t>(cfg.replicates), threads, [&](std::size_t rep) {
        const std::uint64_t rep_seed = derive_seed(cfg.seed, rep);
        const Eigen::MatrixXd truth = generate_network(cfg, condition, derive_seed(rep_seed, 1));

        auto eng = make_engine(rep_seed, condition == Condition::null_model ? 0x676131u
                                                                            : 0x676132u);
        Eigen::MatrixXd learning = ggm_sample(truth, cfg.m, eng);

        auto constraints = sample_constraints(
            truth, r,
            derive_seed(rep_seed, condition == Condition::null_model ? 4 : 5));
        auto z = estimator::standardize(learning);
        auto grid = estimator::default_lambda_grid(z, cfg.lambda_grid_size);
        auto est = estimator::estimate_network(learning, constraints, grid, cfg.cv_folds,
                                               derive_seed(rep_seed, 6), 1);
        reports[rep] = deviance(est.precision.matrix, truth);
    });

    DevianceStudy out;
    out.r = r;
    out.condition = condition;
    out.replicates = cfg.replicates;
    for (const auto& rep : reports) {
        out.mean_fpr += rep.fpr;
        out.mean_fnr += rep.fnr;
        out.mean_mcc += rep.mcc;
        out.mean_frobenius += rep.frobenius;
    }
    out.mean_fpr /= cfg.replicates;
    out.mean_fnr /= cfg.replicates;
    out.mean_mcc /= cfg.replicates;
    out.mean_frobenius /= cfg.replicates;
    double ss = 0.0;
    for (const auto& rep : reports) ss += (rep.mcc - out.mean_mcc) * (rep.mcc - out.mean_mcc);
    out.sd_mcc = cfg.replicates > 1 ? std::sqrt(ss / (cfg.replicates - 1)) : 0.0;
    return out;
}

PowerStudy estimate_power(const ExperimentConfig& cfg, NetworkMode mode, double r,
                          int threads) {
    cfg.validate();
    const auto pathways = subnetwork_pathways(cfg);
    const int n_path = static_cast<int>(pathways.size());

    PowerStudy out;
    out.mode = mode;
    out.r = r;
    out.replicates = cfg.replicates;
    out.rejection_rate.assign(n_path, 0.0);
    out.p_values.resize(cfg.replicates, n_path);

    std::vector<ReplicateResult> results(cfg.replicates);
    parallel_for(static_cast<std::size_t>(cfg.replicates), threads, [&](std::size_t rep) {
        const std::uint64_t rep_seed = derive_seed(cfg.seed, rep);
        NetworkPair pair = generate_network_pair(cfg, derive_seed(rep_seed, 1));
        Eigen::VectorXd mu1 = Eigen::VectorXd::Constant(cfg.p, cfg.base_mean);
        Eigen::VectorXd mu2 = alternative_means(cfg, derive_seed(rep_seed, 2));
        ReplicateData data = generate_data(pair.null_precision, pair.alt_precision, mu1,
                                           mu2, cfg.sigma_gamma, cfg.sigma_eps, cfg.n1,
                                           cfg.n2, cfg.m, cfg.zeta,
                                           derive_seed(rep_seed, 3));

        std::vector<mlm::PathwayTestResult> tests;
        if (mode == NetworkMode::true_parameters) {
            // Known Λ and variance components: only β̂ comes from the data and
            // the reference distribution is normal.
            mlm::VarianceEstimate known;
            known.tau = cfg.sigma_gamma * cfg.sigma_gamma /
                        (cfg.sigma_eps * cfg.sigma_eps);
            known.sigma2_eps = cfg.sigma_eps * cfg.sigma_eps;
            known.sigma2_gamma = cfg.sigma_gamma * cfg.sigma_gamma;
            mlm::MixedModelFit fit = mlm::estimate_beta(data.design, known);
            tests.resize(pathways.size());
            for (std::size_t i = 0; i < pathways.size(); ++i) {
                Eigen::VectorXd l = mlm::contrast_vector(
                    pathways[i].indicator, data.design.influence1, data.design.influence2);
                const int p = data.design.p();
                const double var = l.head(p).dot(fit.cov_block1 * l.head(p)) +
                                   l.tail(p).dot(fit.cov_block2 * l.tail(p));
                tests[i].pathway = pathways[i].name;
                tests[i].statistic = l.dot(fit.beta) / std::sqrt(var);
                tests[i].df = std::numeric_limits<double>::infinity();
                tests[i].p_value = mlm::normal_two_sided(tests[i].statistic);
            }
            mlm::fdr_adjust(tests, cfg.q_star);
        } else if (mode == NetworkMode::exact) {
            tests = mlm::run_netgsa(data.design, pathways, cfg.q_star);
        } else {
            const Eigen::MatrixXd* truths[2] = {&pair.null_precision, &pair.alt_precision};
            const Eigen::MatrixXd* learning[2] = {&data.learning1, &data.learning2};
            Eigen::MatrixXd lambdas[2];
            for (int k = 0; k < 2; ++k) {
                auto constraints =
                    sample_constraints(*truths[k], r, derive_seed(rep_seed, 4 + k));
                auto z = estimator::standardize(*learning[k]);
                auto grid = estimator::default_lambda_grid(z, cfg.lambda_grid_size);
                auto est = estimator::estimate_network(*learning[k], constraints, grid,
                                                       cfg.cv_folds,
                                                       derive_seed(rep_seed, 6 + k), 1);
                lambdas[k] = influence_of_precision(est.precision.matrix, cfg.zeta);
            }
            mlm::TwoConditionDesign estimated(lambdas[0], lambdas[1],
                                              data.design.expression, cfg.n1, cfg.n2);
            tests = mlm::run_netgsa(estimated, pathways, cfg.q_star);
        }

        ReplicateResult rr;
        rr.rejected.resize(n_path);
        rr.p_values.resize(n_path);
        for (int i = 0; i < n_path; ++i) {
            rr.rejected[i] = tests[i].reject ? 1 : 0;
            rr.p_values[i] = tests[i].p_value;
        }
        results[rep] = std::move(rr);
    });

    for (int rep = 0; rep < cfg.replicates; ++rep) {
        for (int i = 0; i < n_path; ++i) {
            out.rejection_rate[i] += results[rep].rejected[i];
            out.p_values(rep, i) = results[rep].p_values[i];
        }
    }
    for (double& v : out.rejection_rate) v /= cfg.replicates;
    return out;
}

}  // namespace netgsa::sim
