#pragma once

#include "mnlfa/gradients.hpp"
#include "mnlfa/likelihood.hpp"
#include "mnlfa/model.hpp"
#include "mnlfa/penalty.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mnlfa {

struct FitConfig {
    int max_iter = 500;
    double grad_tol = 1e-5;
    double obj_rel_tol = 1e-8;
    int n_starts = 1;
    double start_jitter = 0.1;
    std::uint64_t seed = 1;
    int threads = 0;
    double fd_eps = 1e-6;
    double jitter = 0.0;
    bool compute_se = true;

    void validate() const;
    [[nodiscard]] GradientOptions gradient_options() const { return {fd_eps, jitter, threads}; }
};

struct StartRecord {
    int start = 0;
    double objective = 0.0;
    double loglik = 0.0;
    bool converged = false;
    int n_iter = 0;
    double grad_norm = 0.0;
    std::string message;
};

struct FitResult {
    ParameterSet params_hat;
    Eigen::VectorXd estimates;   // packed
    Eigen::VectorXd std_errors;  // packed; NaN where unavailable
    std::vector<bool> se_caveat; // penalized coordinates shrunk to near equality
    double loglik = 0.0;
    double penalty = 0.0;
    double penalized_obj = 0.0;
    bool converged = false;
    int n_iter = 0;
    double grad_norm = 0.0;
    std::string message;
    std::vector<StartRecord> per_start_records;
};

/// Item means for intercepts, half the item variance for residual variances and
/// loadings scaled to the other half; correlations and moderation effects at zero.
[[nodiscard]] Eigen::VectorXd default_start(const Dataset& data, const ModelSpec& spec, const ParameterLayout& layout);

/// Maximizes (1 - w0) L - w0 P by L-BFGS from the default (or given) start plus
/// n_starts - 1 jittered restarts; the best objective wins.
[[nodiscard]] FitResult fit(const Dataset& data, const ModelSpec& spec, const PenaltyConfig& pen,
                            const FitConfig& cfg, const std::optional<Eigen::VectorXd>& start = std::nullopt);

struct HessianResult {
    Eigen::MatrixXd H;           // symmetrized
    double asymmetry = 0.0;      // max |H - H^T| before symmetrization
    Eigen::VectorXd eigenvalues; // ascending
    [[nodiscard]] bool negative_definite() const { return eigenvalues.size() > 0 && eigenvalues.maxCoeff() < 0.0; }
};

/// Central differences of a gradient function with per-coordinate step
/// rel_step * max(1, |x_k|).
[[nodiscard]] HessianResult numerical_hessian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                                              const Eigen::VectorXd& x, double rel_step = 1e-5);

/// Hessian of the composite objective at `packed`.
[[nodiscard]] HessianResult numerical_hessian(const Eigen::VectorXd& packed, const Dataset& data,
                                              const ModelSpec& spec, const PenaltyConfig& pen,
                                              const GradientOptions& opts = {});

/// sqrt(diag(H^{-1} B H^{-1})) with B = sum_n g_n g_n^T. Coordinates touched by
/// the null space of a singular H get NaN.
[[nodiscard]] Eigen::VectorXd sandwich_se(const Eigen::MatrixXd& H, const Eigen::MatrixXd& person_grads);

/// sqrt(diag(-H^{-1})); NaN where H is singular or the variance is not positive.
[[nodiscard]] Eigen::VectorXd inverse_information_se(const Eigen::MatrixXd& H);

/// Fills fit.std_errors and fit.se_caveat from a Hessian at the estimate.
void attach_standard_errors(FitResult& fit, const Dataset& data, const ModelSpec& spec, const PenaltyConfig& pen,
                            const GradientOptions& opts = {});

struct PathPoint {
    double w0 = 0.0;
    FitResult fit;
    double bic = 0.0;
    Index active_deltas = 0;
    std::string status;  // "ok", "not_converged", or the failure message
};

/// Moderation effects that stand apart from their penalty group: distance from
/// the group median above `threshold`.
[[nodiscard]] Index count_active_deltas(const Eigen::VectorXd& packed, const PenaltyConfig& pen,
                                        double threshold = 0.01);

/// -2 L + k log N with k = free baselines + sum over groups of min(size, 1 + active).
[[nodiscard]] double path_bic(double loglik, Index n_persons, const ParameterLayout& layout,
                              const Eigen::VectorXd& packed, const PenaltyConfig& pen, double threshold = 0.01);

/// Sequential fits over an ascending w0 grid, each warm-started from the previous
/// estimate. Failures are recorded and the path continues.
[[nodiscard]] std::vector<PathPoint> penalty_path(const Dataset& data, const ModelSpec& spec,
                                                  const PenaltyConfig& base, const std::vector<double>& w0_grid,
                                                  const FitConfig& cfg, double threshold = 0.01);

}  // namespace mnlfa
