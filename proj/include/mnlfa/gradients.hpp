#pragma once

#include "mnlfa/likelihood.hpp"
#include "mnlfa/model.hpp"
#include "mnlfa/penalty.hpp"

#include <Eigen/Dense>

#include <array>

namespace mnlfa {

/// Per-person quantities shared by every gradient block. Vectors and matrices
/// are full item length; unobserved coordinates hold zeros.
struct GradWorkspace {
    Eigen::VectorXd resid;      // y - mu
    Eigen::VectorXd inv_resid;  // Sigma^{-1} (y - mu)
    Eigen::MatrixXd inv_Sigma;
    Eigen::MatrixXd Qsr;        // Sigma^{-1} r r^T Sigma^{-1} - Sigma^{-1}

    /// `row` is a full response row with NaN for missing entries; `full` are the
    /// person's moments over all items.
    [[nodiscard]] static GradWorkspace make(const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                            const ImpliedMoments& full);
};

/// d log L / d nu.
[[nodiscard]] Eigen::VectorXd grad_nu(const GradWorkspace& ws);

/// d log L / d lambda(item, factor): mean part plus covariance part.
[[nodiscard]] double grad_lambda(Index item, Index factor, const GradWorkspace& ws, const PersonParams& pp,
                                 const Eigen::MatrixXd& phi);
/// All loadings at once, I x M.
[[nodiscard]] Eigen::MatrixXd grad_lambda_all(const GradWorkspace& ws, const PersonParams& pp,
                                              const Eigen::MatrixXd& phi);

/// d log L / d log theta(item).
[[nodiscard]] double grad_theta(Index item, const GradWorkspace& ws, const PersonParams& pp);

/// d log L / d alpha.
[[nodiscard]] Eigen::VectorXd grad_alpha(const GradWorkspace& ws, const PersonParams& pp);

/// d log L / d log phi(factor), through Phi = D^{1/2} R D^{1/2}.
[[nodiscard]] double grad_phi_diag(Index factor, const GradWorkspace& ws, const PersonParams& pp,
                                   const Eigen::MatrixXd& phi);

/// Central difference of the person log-likelihood in the unconstrained
/// correlation coordinate `k`. Steps grow as eps * (1 + |gamma|) once |gamma| > 4;
/// a failed factorization at a perturbed point retries with eps / 10.
[[nodiscard]] double grad_gamma_fd(Index k, const PersonParams& pp, const Eigen::VectorXd& mu,
                                   const Eigen::Ref<const Eigen::RowVectorXd>& row, CorrParam param,
                                   double eps = 1e-6);

/// Closed form for two factors under the partial-correlation map:
/// (1 - rho^2) * sqrt(phi_1 phi_2) * (Lambda^T Q Lambda)_{21}.
[[nodiscard]] double grad_gamma_analytic_m2(const GradWorkspace& ws, const PersonParams& pp);

/// Gradient of a moderation effect from the gradient of the parameter it moderates.
[[nodiscard]] inline double grad_delta(double base_grad, double x_j) { return x_j * base_grad; }

/// Person gradient with respect to person-resolved parameters, stored like the
/// baseline blocks of a ParameterSet (log scale for variances).
struct BaseGradient {
    std::array<Eigen::VectorXd, kNumFamilies> family;
};

struct GradientOptions {
    double fd_eps = 1e-6;
    double jitter = 0.0;
    int threads = 0;
};

struct PersonEvaluation {
    double loglik = 0.0;
    BaseGradient grad;
};

[[nodiscard]] PersonEvaluation evaluate_person(const PersonParams& pp, const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                               const ModelSpec& spec, const GradientOptions& opts = {});

/// Maps a person's base gradient onto the packed coordinates, applying the
/// covariate chain rule to moderation effects.
void scatter_gradient(const BaseGradient& base, const Eigen::Ref<const Eigen::VectorXd>& x,
                      const ParameterLayout& layout, Eigen::Ref<Eigen::VectorXd> out);

/// Log-likelihood and its packed gradient summed over persons.
struct LoglikGradient {
    double loglik = 0.0;
    Eigen::VectorXd gradient;
};

[[nodiscard]] LoglikGradient loglik_gradient(const ParameterSet& params, const Dataset& data, const ModelSpec& spec,
                                             const ParameterLayout& layout, const GradientOptions& opts = {});

/// N x K matrix of per-person packed scores of the unpenalized likelihood.
[[nodiscard]] Eigen::MatrixXd person_gradients(const ParameterSet& params, const Dataset& data,
                                               const ModelSpec& spec, const ParameterLayout& layout,
                                               const GradientOptions& opts = {});

/// Composite objective and gradient: (1 - w0) * L - w0 * P.
struct ObjectiveValue {
    double loglik = 0.0;
    double penalty = 0.0;
    double objective = 0.0;
    Eigen::VectorXd gradient;
};

[[nodiscard]] ObjectiveValue evaluate_objective(const Eigen::VectorXd& packed, const Dataset& data,
                                                const ModelSpec& spec, const ParameterLayout& layout,
                                                const PenaltyConfig& cfg, const GradientOptions& opts = {});

[[nodiscard]] Eigen::VectorXd full_gradient(const ParameterSet& params, const Dataset& data, const ModelSpec& spec,
                                            const PenaltyConfig& cfg, const GradientOptions& opts = {});

}  // namespace mnlfa
