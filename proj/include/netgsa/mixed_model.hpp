#ifndef NETGSA_MIXED_MODEL_HPP
#define NETGSA_MIXED_MODEL_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace netgsa::mlm {

class SingularInformation : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class DegenerateResiduals : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class EmptyPathway : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Two-condition expression data with per-condition influence matrices.
// Columns of `expression` are samples; the first n1 belong to condition 1.
struct TwoConditionDesign {
    Eigen::MatrixXd influence1, influence2;  // p x p
    Eigen::MatrixXd expression;              // p x n
    int n1 = 0, n2 = 0;

    TwoConditionDesign(Eigen::MatrixXd lambda1, Eigen::MatrixXd lambda2,
                       Eigen::MatrixXd data, int n1_in, int n2_in);

    int p() const { return static_cast<int>(influence1.rows()); }
    int n() const { return n1 + n2; }
    int total_obs() const { return n() * p(); }  // N = np
    const Eigen::MatrixXd& influence(int condition) const {
        return condition == 1 ? influence1 : influence2;
    }
};

// Block descriptors of the mixed-model design matrices. Ψ (np x 2p) stacks a
// [Λ⁽ᵏ⁾ 0] or [0 Λ⁽ᵏ⁾] row block per sample and Π is block-diagonal in Λ⁽ᵏ⁾;
// neither is ever materialized. W = var(𝒴) is n diagonal blocks σ²_ε Σ⁽ᵏ⁾.
struct DesignDescriptor {
    int p = 0, n1 = 0, n2 = 0;
    const Eigen::MatrixXd* lambda1 = nullptr;
    const Eigen::MatrixXd* lambda2 = nullptr;

    int condition_of(int sample) const { return sample < n1 ? 1 : 2; }
    const Eigen::MatrixXd& lambda_of(int sample) const {
        return condition_of(sample) == 1 ? *lambda1 : *lambda2;
    }
    // Condition index of each diagonal block of W, in sample order.
    std::vector<int> w_block_conditions() const;
};

DesignDescriptor build_design(const TwoConditionDesign& d);

enum class LikelihoodKind { reml, ml };

// Nonconstant part of the profile log-likelihood p_R(τ) (or p_F for ML) at
// fixed residuals, evaluated with Cholesky-based log-determinants and inverses
// of Σ⁽ᵏ⁾ = I + τ Λ⁽ᵏ⁾(Λ⁽ᵏ⁾)ᵀ.
double profile_likelihood(double tau, const TwoConditionDesign& d,
                          const Eigen::MatrixXd& residuals,
                          LikelihoodKind kind = LikelihoodKind::reml);

// Analytic first and second τ-derivative of the profile log-likelihood at
// fixed residuals, using H⁽ᵏ⁾ = (Λ⁽ᵏ⁾)ᵀ(Σ⁽ᵏ⁾)⁻¹Λ⁽ᵏ⁾:
//   d logdet Σ⁽ᵏ⁾/dτ = tr H⁽ᵏ⁾,  d² = −tr(H⁽ᵏ⁾H⁽ᵏ⁾),
// and the matching quadratic-form derivatives of the residual term.
struct ProfileDerivatives {
    double gradient = 0.0;
    double hessian = 0.0;
};
ProfileDerivatives profile_derivatives(double tau, const TwoConditionDesign& d,
                                       const Eigen::MatrixXd& residuals,
                                       LikelihoodKind kind = LikelihoodKind::reml);

// Method-of-moments starting point: σ̃²_ε = min_j var(R_j), σ̃²_γ = mean of the
// remaining var(R_j) − σ̃²_ε clamped at 0, τ₀ = max(σ̃²_γ/σ̃²_ε, 1e-4).
double mom_initial_tau(const Eigen::MatrixXd& residuals);

struct VarianceEstimate {
    double tau = 0.0;
    double sigma2_eps = 1.0;
    double sigma2_gamma = 0.0;
    int newton_iterations = 0;
    bool converged = true;
};

struct NewtonOptions {
    int max_iterations = 50;
    double gradient_tol = 1e-8;       // on dp/dθ, θ = log τ
    double sufficient_increase = 0.3; // backtracking acceptance slope
    double shrink = 0.5;              // backtracking step multiplier
    double min_log_tau = -30.0;
    double max_step = 5.0;            // cap on |Δθ|
};

// Newton in θ = log τ with backtracking line search; β̂ and the residuals are
// re-solved at the current τ after every accepted step (true profiling).
// Returns the best iterate flagged unconverged instead of throwing.
VarianceEstimate fit_variance(const TwoConditionDesign& d, double tau0,
                              LikelihoodKind kind = LikelihoodKind::reml,
                              const NewtonOptions& options = {});

struct MixedModelFit {
    Eigen::VectorXd beta;                     // length 2p: μ̂¹ then μ̂²
    Eigen::MatrixXd cov_block1, cov_block2;   // diagonal blocks of C = (ΨᵀW⁻¹Ψ)⁻¹
    Eigen::MatrixXd residuals;                // p x n, columns R_j
    VarianceEstimate variance;

    Eigen::MatrixXd full_cov() const;  // assembled 2p x 2p C
};

// GLS fixed effects computed blockwise:
//   ΨᵀW⁻¹Ψ = σ_ε⁻² diag(n₁ H⁽¹⁾, n₂ H⁽²⁾),  μ̂⁽ᵏ⁾ = (n_k H⁽ᵏ⁾)⁻¹ Λᵀ Σ⁻¹ Σ_j Y_j.
MixedModelFit estimate_beta(const TwoConditionDesign& d, const VarianceEstimate& variance);

// Contrast l = (−(bΛ¹)∘b, (bΛ²)∘b): nonzero only inside the pathway, sign
// convention so positive statistics mean higher activity under condition 2.
Eigen::VectorXd contrast_vector(const Eigen::VectorXd& pathway_indicator,
                                const Eigen::MatrixXd& influence1,
                                const Eigen::MatrixXd& influence2);

struct PathwayTestResult {
    std::string pathway;
    double statistic = 0.0;  // TS
    double df = 0.0;         // Satterthwaite ν
    double p_value = 1.0;
    double q_value = 1.0;
    bool reject = false;
    bool df_fallback = false;  // ν fell back to N − 2p
};

// Wald test TS = lβ̂ / √(lĈlᵀ) with Satterthwaite df
// ν = 2(lĈlᵀ)² / (ωᵀV̂ω); ω by central differences of lClᵀ in
// η = (σ²_γ, σ²_ε) and V̂ the inverse negative Hessian of the restricted
// log-likelihood in η.
PathwayTestResult wald_test(const Eigen::VectorXd& contrast, const MixedModelFit& fit,
                            const TwoConditionDesign& d,
                            LikelihoodKind kind = LikelihoodKind::reml);

// Benjamini-Hochberg step-up at level q_star; fills q_value (monotone-adjusted
// p·n/rank, capped at 1) and reject flags in place.
void fdr_adjust(std::vector<PathwayTestResult>& results, double q_star);

struct NamedPathway {
    std::string name;
    Eigen::VectorXd indicator;  // length p, entries 0/1
};

// Full engine: moment initialization → Newton REML (β̂ re-solved each
// iteration) → per-pathway contrasts and Wald tests → BH adjustment.
std::vector<PathwayTestResult> run_netgsa(const TwoConditionDesign& d,
                                          const std::vector<NamedPathway>& pathways,
                                          double q_star,
                                          LikelihoodKind kind = LikelihoodKind::reml,
                                          int threads = 1);

// Two-sided tail probabilities used by the tests.
double student_t_two_sided(double statistic, double df);
double normal_two_sided(double statistic);

}  // namespace netgsa::mlm

#endif
