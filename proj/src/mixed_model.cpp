#include "netgsa/mixed_model.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>

#include "netgsa/linalg.hpp"
#include "netgsa/parallel.hpp"

namespace netgsa::mlm {

namespace {

// Per-condition quantities at a given τ.
struct ConditionState {
    Eigen::MatrixXd sigma_inv;   // (I + τΛΛᵀ)⁻¹
    Eigen::MatrixXd lt_sigma_inv;  // ΛᵀΣ⁻¹
    Eigen::MatrixXd h;           // ΛᵀΣ⁻¹Λ
    double logdet_sigma = 0.0;
    double logdet_h = 0.0;
    double trace_h = 0.0;
    double trace_h_sq = 0.0;
};

ConditionState condition_state(const Eigen::MatrixXd& lambda, double tau) {
    const Eigen::Index p = lambda.rows();
    Eigen::MatrixXd sigma =
        Eigen::MatrixXd::Identity(p, p) + tau * (lambda * lambda.transpose());
    auto factor = linalg::cholesky(sigma);

    ConditionState s;
    s.logdet_sigma = linalg::logdet(factor);
    s.sigma_inv = linalg::invert_spd(factor);
    s.lt_sigma_inv = lambda.transpose() * s.sigma_inv;
    s.h = s.lt_sigma_inv * lambda;
    s.h = 0.5 * (s.h + s.h.transpose());
    s.logdet_h = linalg::logdet(linalg::cholesky(s.h));
    s.trace_h = s.h.trace();
    s.trace_h_sq = s.h.cwiseProduct(s.h.transpose()).sum();
    return s;
}

struct ResidualTerms {
    double q = 0.0;        // Σ_j RⱼᵀΣ⁻¹Rⱼ
    double q_prime = 0.0;  // −Σ_j ‖ΛᵀΣ⁻¹Rⱼ‖²
    double q_second = 0.0; // 2 Σ_j (ΛᵀΣ⁻¹Rⱼ)ᵀ H (ΛᵀΣ⁻¹Rⱼ)
};

ResidualTerms residual_terms(const TwoConditionDesign& d, const ConditionState s[2],
                             const Eigen::MatrixXd& residuals, bool with_derivatives) {
    ResidualTerms t;
    for (int k = 0; k < 2; ++k) {
        const int offset = k == 0 ? 0 : d.n1;
        const int nk = k == 0 ? d.n1 : d.n2;
        const auto block = residuals.middleCols(offset, nk);
        t.q += (s[k].sigma_inv * block).cwiseProduct(block).sum();
        if (with_derivatives) {
            Eigen::MatrixXd v = s[k].lt_sigma_inv * block;  // p x nk
            t.q_prime -= v.squaredNorm();
            t.q_second += 2.0 * (s[k].h * v).cwiseProduct(v).sum();
        }
    }
    return t;
}

void check_residual_shape(const TwoConditionDesign& d, const Eigen::MatrixXd& residuals) {
    if (residuals.rows() != d.p() || residuals.cols() != d.n())
        throw std::invalid_argument("profile likelihood: residual matrix must be p x n");
}

// μ̂ and residuals at a given τ (β̂ does not depend on σ²_ε).
struct BetaSolve {
    Eigen::VectorXd mu[2];
    Eigen::MatrixXd residuals;  // p x n
    Eigen::MatrixXd info_inv[2];  // (n_k H⁽ᵏ⁾)⁻¹
};

BetaSolve solve_beta(const TwoConditionDesign& d, const ConditionState s[2]) {
    const int p = d.p();
    BetaSolve out;
    out.residuals.resize(p, d.n());
    for (int k = 0; k < 2; ++k) {
        const int offset = k == 0 ? 0 : d.n1;
        const int nk = k == 0 ? d.n1 : d.n2;
        const auto& lambda = d.influence(k + 1);
        Eigen::VectorXd ysum = d.expression.middleCols(offset, nk).rowwise().sum();
        Eigen::MatrixXd info = static_cast<double>(nk) * s[k].h;
        Eigen::LLT<Eigen::MatrixXd> llt(info);
        if (llt.info() != Eigen::Success)
            throw SingularInformation("estimate_beta: ΨᵀW⁻¹Ψ block is singular");
        out.mu[k] = llt.solve(s[k].lt_sigma_inv * ysum);
        out.info_inv[k] = llt.solve(Eigen::MatrixXd::Identity(p, p));
        out.info_inv[k] = 0.5 * (out.info_inv[k] + out.info_inv[k].transpose());
        const Eigen::VectorXd fitted = lambda * out.mu[k];
        out.residuals.middleCols(offset, nk) =
            d.expression.middleCols(offset, nk).colwise() - fitted;
    }
    return out;
}

double profile_value(const TwoConditionDesign& d, const ConditionState s[2],
                     double q, LikelihoodKind kind) {
    const double n1 = d.n1, n2 = d.n2;
    const double big_n = d.total_obs();
    const double p = d.p();
    double out = -0.5 * (n1 * s[0].logdet_sigma + n2 * s[1].logdet_sigma);
    if (kind == LikelihoodKind::reml) {
        out -= 0.5 * (big_n - 2.0 * p) * std::log(q);
        out -= 0.5 * (p * std::log(n1) + s[0].logdet_h);
        out -= 0.5 * (p * std::log(n2) + s[1].logdet_h);
    } else {
        out -= 0.5 * big_n * std::log(q);
    }
    return out;
}

// Restricted (or full) log-likelihood in η = (σ²_γ, σ²_ε) with residuals
// re-solved at τ(η); gradient uses the analytic τ-derivatives mapped through
// the reparameterization τ = σ²_γ/σ²_ε.
Eigen::Vector2d eta_gradient(const TwoConditionDesign& d, double sigma2_gamma,
                             double sigma2_eps, LikelihoodKind kind) {
    const double tau = sigma2_gamma / sigma2_eps;
    ConditionState s[2] = {condition_state(d.influence1, tau),
                           condition_state(d.influence2, tau)};
    BetaSolve beta = solve_beta(d, s);
    ResidualTerms t = residual_terms(d, s, beta.residuals, true);

    const double big_n = d.total_obs();
    const double dof = kind == LikelihoodKind::reml ? big_n - 2.0 * d.p() : big_n;
    const double trace_term = -0.5 * (d.n1 * s[0].trace_h + d.n2 * s[1].trace_h);
    double g_tau = trace_term - 0.5 * t.q_prime / sigma2_eps;
    if (kind == LikelihoodKind::reml)
        g_tau += 0.5 * (s[0].trace_h + s[1].trace_h);
    const double g_eps_given_tau =
        -0.5 * dof / sigma2_eps + 0.5 * t.q / (sigma2_eps * sigma2_eps);

    Eigen::Vector2d grad;
    grad(0) = g_tau / sigma2_eps;
    grad(1) = g_eps_given_tau - (tau / sigma2_eps) * g_tau;
    return grad;
}

}  // namespace

TwoConditionDesign::TwoConditionDesign(Eigen::MatrixXd lambda1, Eigen::MatrixXd lambda2,
                                       Eigen::MatrixXd data, int n1_in, int n2_in)
    : influence1(std::move(lambda1)),
      influence2(std::move(lambda2)),
      expression(std::move(data)),
      n1(n1_in),
      n2(n2_in) {
    const int p_ = static_cast<int>(influence1.rows());
    if (p_ < 2 || influence1.cols() != p_ || influence2.rows() != p_ ||
        influence2.cols() != p_)
        throw std::invalid_argument("TwoConditionDesign: influence matrices must be p x p, p >= 2");
    if (n1 < 1 || n2 < 1)
        throw std::invalid_argument("TwoConditionDesign: need samples in both conditions");
    if (expression.rows() != p_ || expression.cols() != n1 + n2)
        throw std::invalid_argument("TwoConditionDesign: expression must be p x (n1+n2)");
    if (total_obs() - 2 * p_ <= 0)
        throw std::invalid_argument(
            "TwoConditionDesign: N - 2p must be positive (need n > 2 samples total)");
}

std::vector<int> DesignDescriptor::w_block_conditions() const {
    std::vector<int> out(n1 + n2);
    for (int j = 0; j < n1 + n2; ++j) out[j] = condition_of(j);
    return out;
}

DesignDescriptor build_design(const TwoConditionDesign& d) {
    DesignDescriptor out;
    out.p = d.p();
    out.n1 = d.n1;
    out.n2 = d.n2;
    out.lambda1 = &d.influence1;
    out.lambda2 = &d.influence2;
    return out;
}

double profile_likelihood(double tau, const TwoConditionDesign& d,
                          const Eigen::MatrixXd& residuals, LikelihoodKind kind) {
    if (tau < 0.0) throw std::invalid_argument("profile_likelihood: tau must be >= 0");
    check_residual_shape(d, residuals);
    ConditionState s[2] = {condition_state(d.influence1, tau),
                           condition_state(d.influence2, tau)};
    ResidualTerms t = residual_terms(d, s, residuals, false);
    return profile_value(d, s, t.q, kind);
}

ProfileDerivatives profile_derivatives(double tau, const TwoConditionDesign& d,
                                       const Eigen::MatrixXd& residuals,
                                       LikelihoodKind kind) {
    if (tau < 0.0) throw std::invalid_argument("profile_derivatives: tau must be >= 0");
    check_residual_shape(d, residuals);
    ConditionState s[2] = {condition_state(d.influence1, tau),
                           condition_state(d.influence2, tau)};
    ResidualTerms t = residual_terms(d, s, residuals, true);

    const double big_n = d.total_obs();
    const double dof = kind == LikelihoodKind::reml ? big_n - 2.0 * d.p() : big_n;
    const double ratio = t.q_prime / t.q;

    ProfileDerivatives out;
    out.gradient = -0.5 * (d.n1 * s[0].trace_h + d.n2 * s[1].trace_h) - 0.5 * dof * ratio;
    out.hessian = 0.5 * (d.n1 * s[0].trace_h_sq + d.n2 * s[1].trace_h_sq) -
                  0.5 * dof * (t.q_second / t.q - ratio * ratio);
    if (kind == LikelihoodKind::reml) {
        out.gradient += 0.5 * (s[0].trace_h + s[1].trace_h);
        out.hessian -= 0.5 * (s[0].trace_h_sq + s[1].trace_h_sq);
    }
    return out;
}

double mom_initial_tau(const Eigen::MatrixXd& residuals) {
    const Eigen::Index p = residuals.rows(), n = residuals.cols();
    if (n < 2) throw std::invalid_argument("mom_initial_tau: need at least two samples");
    if (p < 2) throw std::invalid_argument("mom_initial_tau: need at least two variables");

    Eigen::VectorXd variances(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double mean = residuals.col(j).mean();
        variances(j) =
            (residuals.col(j).array() - mean).matrix().squaredNorm() / (p - 1.0);
    }
    Eigen::Index argmin;
    const double sigma2_eps = variances.minCoeff(&argmin);
    if (sigma2_eps <= 0.0)
        throw DegenerateResiduals("mom_initial_tau: zero-variance residual vector");

    double sum = 0.0;
    int count = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == argmin) continue;
        sum += std::max(variances(j) - sigma2_eps, 0.0);
        ++count;
    }
    const double sigma2_gamma = count > 0 ? sum / count : 0.0;
    return std::max(sigma2_gamma / sigma2_eps, 1e-4);
}

MixedModelFit estimate_beta(const TwoConditionDesign& d, const VarianceEstimate& variance) {
    if (!(std::isfinite(variance.tau) && std::isfinite(variance.sigma2_eps)))
        throw std::invalid_argument("estimate_beta: variance estimate must be finite");
    ConditionState s[2] = {condition_state(d.influence1, variance.tau),
                           condition_state(d.influence2, variance.tau)};
    BetaSolve solved = solve_beta(d, s);

    MixedModelFit fit;
    fit.variance = variance;
    fit.beta.resize(2 * d.p());
    fit.beta.head(d.p()) = solved.mu[0];
    fit.beta.tail(d.p()) = solved.mu[1];
    fit.cov_block1 = variance.sigma2_eps * solved.info_inv[0];
    fit.cov_block2 = variance.sigma2_eps * solved.info_inv[1];
    fit.residuals = std::move(solved.residuals);
    return fit;
}

Eigen::MatrixXd MixedModelFit::full_cov() const {
    const Eigen::Index p = cov_block1.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * p, 2 * p);
    out.topLeftCorner(p, p) = cov_block1;
    out.bottomRightCorner(p, p) = cov_block2;
    return out;
}

VarianceEstimate fit_variance(const TwoConditionDesign& d, double tau0,
                              LikelihoodKind kind, const NewtonOptions& options) {
    if (!(tau0 > 0.0)) throw std::invalid_argument("fit_variance: tau0 must be positive");

    double theta = std::max(std::log(tau0), options.min_log_tau);

    auto residuals_at = [&](double tau) {
        ConditionState s[2] = {condition_state(d.influence1, tau),
                               condition_state(d.influence2, tau)};
        return solve_beta(d, s).residuals;
    };

    double tau = std::exp(theta);
    Eigen::MatrixXd residuals = residuals_at(tau);
    double value = profile_likelihood(tau, d, residuals, kind);

    VarianceEstimate est;
    est.converged = false;
    int iter = 0;
    for (; iter < options.max_iterations; ++iter) {
        ProfileDerivatives der = profile_derivatives(tau, d, residuals, kind);
        const double g = der.gradient * tau;                       // dp/dθ
        const double h = der.hessian * tau * tau + der.gradient * tau;  // d²p/dθ²
        if (std::abs(g) < options.gradient_tol) {
            est.converged = true;
            break;
        }

        double step = h < 0.0 ? -g / h : (g > 0.0 ? 1.0 : -1.0);
        step = std::clamp(step, -options.max_step, options.max_step);

        // Backtracking on p evaluated at the current residuals; re-solving β̂
        // afterwards can only increase the profiled objective.
        double t = 1.0;
        double candidate_theta = theta;
        bool accepted = false;
        while (t >= 1e-13) {
            const double trial_theta =
                std::max(theta + t * step, options.min_log_tau);
            const double trial_value =
                profile_likelihood(std::exp(trial_theta), d, residuals, kind);
            if (trial_value >=
                value + options.sufficient_increase * t * g * step) {
                candidate_theta = trial_theta;
                accepted = true;
                break;
            }
            t *= options.shrink;
        }
        if (!accepted) break;  // no usable ascent step at this scale

        theta = candidate_theta;
        tau = std::exp(theta);
        residuals = residuals_at(tau);
        value = profile_likelihood(tau, d, residuals, kind);
    }

    ConditionState s[2] = {condition_state(d.influence1, tau),
                           condition_state(d.influence2, tau)};
    ResidualTerms t = residual_terms(d, s, residuals, false);
    const double dof = kind == LikelihoodKind::reml
                           ? d.total_obs() - 2.0 * d.p()
                           : static_cast<double>(d.total_obs());
    est.tau = tau;
    est.sigma2_eps = t.q / dof;
    est.sigma2_gamma = est.sigma2_eps * tau;
    est.newton_iterations = iter;
    return est;
}

Eigen::VectorXd contrast_vector(const Eigen::VectorXd& pathway_indicator,
                                const Eigen::MatrixXd& influence1,
                                const Eigen::MatrixXd& influence2) {
    const Eigen::Index p = influence1.rows();
    if (pathway_indicator.size() != p)
        throw std::invalid_argument("contrast_vector: indicator length mismatch");
    if ((pathway_indicator.array() != 0.0).count() == 0)
        throw EmptyPathway("contrast_vector: pathway has no members");

    Eigen::VectorXd l(2 * p);
    l.head(p) = -(influence1.transpose() * pathway_indicator)
                     .cwiseProduct(pathway_indicator);
    l.tail(p) =
        (influence2.transpose() * pathway_indicator).cwiseProduct(pathway_indicator);
    return l;
}

double student_t_two_sided(double statistic, double df) {
    boost::math::students_t_distribution<double> dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(statistic)));
}

double normal_two_sided(double statistic) {
    boost::math::normal_distribution<double> dist;
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(statistic)));
}

PathwayTestResult wald_test(const Eigen::VectorXd& contrast, const MixedModelFit& fit,
                            const TwoConditionDesign& d, LikelihoodKind kind) {
    const int p = d.p();
    if (contrast.size() != 2 * p)
        throw std::invalid_argument("wald_test: contrast length must be 2p");

    const Eigen::VectorXd l1 = contrast.head(p), l2 = contrast.tail(p);
    const double var_now =
        l1.dot(fit.cov_block1 * l1) + l2.dot(fit.cov_block2 * l2);
    if (!(var_now > 0.0))
        throw SingularInformation("wald_test: contrast variance is not positive");

    PathwayTestResult res;
    res.statistic = contrast.dot(fit.beta) / std::sqrt(var_now);

    // lC(η)lᵀ as a function of η = (σ²_γ, σ²_ε).
    auto contrast_var = [&](double s2g, double s2e) {
        const double tau = s2g / s2e;
        ConditionState s[2] = {condition_state(d.influence1, tau),
                               condition_state(d.influence2, tau)};
        Eigen::MatrixXd info1 = static_cast<double>(d.n1) * s[0].h;
        Eigen::MatrixXd info2 = static_cast<double>(d.n2) * s[1].h;
        const Eigen::VectorXd v1 = info1.llt().solve(l1);
        const Eigen::VectorXd v2 = info2.llt().solve(l2);
        return s2e * (l1.dot(v1) + l2.dot(v2));
    };

    const double s2g = fit.variance.sigma2_gamma, s2e = fit.variance.sigma2_eps;
    const double h_g = 1e-5 * (1.0 + std::abs(s2g));
    const double h_e = 1e-5 * (1.0 + std::abs(s2e));

    Eigen::Vector2d omega;
    omega(0) = (contrast_var(s2g + h_g, s2e) - contrast_var(std::max(s2g - h_g, 0.0), s2e)) /
               (h_g + std::min(s2g, h_g));
    omega(1) = (contrast_var(s2g, s2e + h_e) - contrast_var(s2g, s2e - h_e)) / (2.0 * h_e);

    // Hessian of the restricted log-likelihood in η by central differences of
    // the analytic gradient; V̂ = (−Hessian)⁻¹.
    Eigen::Matrix2d hess;
    {
        const Eigen::Vector2d gp_g = eta_gradient(d, s2g + h_g, s2e, kind);
        const Eigen::Vector2d gm_g =
            eta_gradient(d, std::max(s2g - h_g, 0.0), s2e, kind);
        const Eigen::Vector2d gp_e = eta_gradient(d, s2g, s2e + h_e, kind);
        const Eigen::Vector2d gm_e = eta_gradient(d, s2g, s2e - h_e, kind);
        hess.col(0) = (gp_g - gm_g) / (h_g + std::min(s2g, h_g));
        hess.col(1) = (gp_e - gm_e) / (2.0 * h_e);
        hess = 0.5 * (hess + hess.transpose()).eval();
    }

    const double big_n = d.total_obs();
    double nu = big_n - 2.0 * p;
    bool fallback = true;
    const double det = hess(0, 0) * hess(1, 1) - hess(0, 1) * hess(1, 0);
    if (std::isfinite(det) && det > 0.0 && hess(0, 0) < 0.0) {
        Eigen::Matrix2d vhat;
        vhat << -hess(1, 1), hess(0, 1), hess(1, 0), -hess(0, 0);
        vhat /= det;
        const double denom = omega.dot(vhat * omega);
        if (std::isfinite(denom) && denom > 0.0) {
            const double candidate = 2.0 * var_now * var_now / denom;
            if (std::isfinite(candidate) && candidate > 0.0) {
                nu = candidate;
                fallback = false;
            }
        }
    }
    res.df = nu;
    res.df_fallback = fallback;
    res.p_value = contrast.dot(fit.beta) == 0.0
                      ? 1.0
                      : student_t_two_sided(res.statistic, res.df);
    return res;
}

void fdr_adjust(std::vector<PathwayTestResult>& results, double q_star) {
    const std::size_t n = results.size();
    if (n == 0) return;
    if (!(q_star > 0.0 && q_star < 1.0))
        throw std::invalid_argument("fdr_adjust: q* must be in (0,1)");
    for (const auto& r : results)
        if (!(r.p_value >= 0.0 && r.p_value <= 1.0))
            throw std::invalid_argument("fdr_adjust: p-values must lie in [0,1]");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return results[a].p_value < results[b].p_value;
    });

    std::size_t reject_up_to = 0;  // largest k with p(k) <= k q*/n
    for (std::size_t k = 1; k <= n; ++k)
        if (results[order[k - 1]].p_value <= static_cast<double>(k) * q_star / n)
            reject_up_to = k;

    double running = 1.0;
    for (std::size_t k = n; k >= 1; --k) {
        const double raw =
            results[order[k - 1]].p_value * static_cast<double>(n) / static_cast<double>(k);
        running = std::min(running, std::min(raw, 1.0));
        results[order[k - 1]].q_value = running;
        results[order[k - 1]].reject = k <= reject_up_to;
    }
}

std::vector<PathwayTestResult> run_netgsa(const TwoConditionDesign& d,
                                          const std::vector<NamedPathway>& pathways,
                                          double q_star, LikelihoodKind kind,
                                          int threads) {
    if (pathways.empty())
        throw std::invalid_argument("run_netgsa: need at least one pathway");

    VarianceEstimate initial;
    initial.tau = 0.0;
    initial.sigma2_eps = 1.0;
    MixedModelFit ols = estimate_beta(d, initial);
    const double tau0 = mom_initial_tau(ols.residuals);
    VarianceEstimate variance = fit_variance(d, tau0, kind);
    MixedModelFit fit = estimate_beta(d, variance);

    std::vector<PathwayTestResult> results(pathways.size());
    parallel_for(pathways.size(), threads, [&](std::size_t i) {
        Eigen::VectorXd l =
            contrast_vector(pathways[i].indicator, d.influence1, d.influence2);
        results[i] = wald_test(l, fit, d, kind);
        results[i].pathway = pathways[i].name;
    });
    fdr_adjust(results, q_star);
    return results;
}

}  // namespace netgsa::mlm
