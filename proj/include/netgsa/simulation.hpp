#ifndef NETGSA_SIMULATION_HPP
#define NETGSA_SIMULATION_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "netgsa/graph.hpp"
#include "netgsa/mixed_model.hpp"

namespace netgsa::sim {

class InvalidConfig : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

enum class StructureChangeMode { rewire, remove };
enum class Condition { null_model, alternative };
enum class NetworkMode { estimated, exact, true_parameters };

// One benchmark scenario: subnetworks partition the p nodes; each subnetwork
// is a scale-free subgraph and doubles as a tested pathway.
struct ExperimentConfig {
    int p = 64;
    int subnetworks = 8;
    int subnetwork_size = 8;
    int edges_per_subnetwork = 0;  // 0 -> subnetwork_size
    double inter_connect_prob = 0.2;

    std::vector<double> mean_change_props;  // per subnetwork, alternative only
    double mean_change_magnitude = 1.0;
    double base_mean = 1.0;

    double structure_change_frac = 0.0;
    std::vector<int> structure_changed_subnetworks;  // 1-based ids
    StructureChangeMode structure_change_mode = StructureChangeMode::rewire;

    double sigma_gamma = 1.0, sigma_eps = 1.0;
    int m = 40;       // network-learning samples per condition
    int n1 = 16, n2 = 16;
    int replicates = 200;
    std::uint64_t seed = 1;

    std::vector<double> r_values{0.0, 0.2, 0.8};
    double q_star = 0.05;
    double zeta = 0.01;
    int cv_folds = 5;
    int lambda_grid_size = 20;

    double weight_low = 0.3, weight_high = 0.7;
    double min_eigenvalue = 0.1;

    void validate() const;
    int resolved_edges_per_subnetwork() const {
        return edges_per_subnetwork > 0 ? edges_per_subnetwork : subnetwork_size;
    }
};

// Ground-truth precision matrices for the two conditions: unit diagonal,
// positive definite, shared entries outside the rewired subnetworks.
struct NetworkPair {
    Eigen::MatrixXd null_precision, alt_precision;
};

NetworkPair generate_network_pair(const ExperimentConfig& cfg, std::uint64_t seed);
Eigen::MatrixXd generate_network(const ExperimentConfig& cfg, Condition condition,
                                 std::uint64_t seed);

// Condition-2 mean vector under the alternative; condition 1 keeps base_mean.
Eigen::VectorXd alternative_means(const ExperimentConfig& cfg, std::uint64_t seed);

// Latent-model draw Y = Λγ + ε for the enrichment design, plus an independent
// m-sample Gaussian graphical model draw per condition for network learning.
struct ReplicateData {
    mlm::TwoConditionDesign design;
    Eigen::MatrixXd learning1, learning2;  // m x p each
    Eigen::VectorXd mu1, mu2;
};

ReplicateData generate_data(const Eigen::MatrixXd& precision1,
                            const Eigen::MatrixXd& precision2,
                            const Eigen::VectorXd& mu1, const Eigen::VectorXd& mu2,
                            double sigma_gamma, double sigma_eps, int n1, int n2,
                            int m, double zeta, std::uint64_t seed);

// Influence matrix of a precision matrix's off-diagonal graph.
Eigen::MatrixXd influence_of_precision(const Eigen::MatrixXd& precision, double zeta);

// A uniform sample of round(r · p(p−1)/2) node pairs; true edges of the given
// network go to E1, the rest to E0.
graph::EdgeConstraints sample_constraints(const Eigen::MatrixXd& truth, double r,
                                          std::uint64_t seed);

struct DevianceReport {
    double fpr = 0.0, fnr = 0.0;
    double mcc = 0.0;
    double frobenius = 0.0;  // ‖Â − A₀‖_F / ‖A₀‖_F
};

DevianceReport deviance(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth);

// Table-1 style study: repeated network estimation against the ground truth.
struct DevianceStudy {
    double r = 0.0;
    Condition condition = Condition::null_model;
    double mean_fpr = 0.0, mean_fnr = 0.0, mean_mcc = 0.0, mean_frobenius = 0.0;
    double sd_mcc = 0.0;
    int replicates = 0;
};

DevianceStudy deviance_study(const ExperimentConfig& cfg, Condition condition, double r,
                             int threads = 1);

// Table-2 style study: per-pathway rejection frequency of the full pipeline.
struct PowerStudy {
    NetworkMode mode = NetworkMode::exact;
    double r = 0.0;  // meaningful for NetworkMode::estimated
    std::vector<double> rejection_rate;      // per pathway
    Eigen::MatrixXd p_values;                // replicates x pathways
    int replicates = 0;
};

PowerStudy estimate_power(const ExperimentConfig& cfg, NetworkMode mode, double r = 0.0,
                          int threads = 1);

std::vector<mlm::NamedPathway> subnetwork_pathways(const ExperimentConfig& cfg);

}  // namespace netgsa::sim

#endif
