#pragma once

#include "mnlfa/likelihood.hpp"
#include "mnlfa/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace mnlfa {

enum class CovariateDistribution { normal, uniform, bernoulli };

/// How one covariate column is drawn: normal(a = mean, b = sd),
/// uniform(a = min, b = max) or bernoulli(a = p).
struct CovariateSpec {
    std::string name;
    CovariateDistribution distribution = CovariateDistribution::normal;
    double a = 0.0;
    double b = 1.0;
};

[[nodiscard]] DesignMatrix simulate_design(const std::vector<CovariateSpec>& covariates, Index n_persons,
                                           std::uint64_t seed);

/// Draws y_n = nu_n + Lambda_n eta_n + eps_n with eta_n ~ N(alpha_n, Phi_n) and
/// eps_n ~ N(0, diag(theta_n)). Each row has its own seeded stream, so output
/// does not depend on the thread count.
[[nodiscard]] Dataset simulate_data(const ParameterSet& truth, const ModelSpec& spec, const DesignMatrix& X,
                                    std::uint64_t seed, int threads = 0);

/// Also returns the latent draws (N x M), for checks on the structural part.
[[nodiscard]] Dataset simulate_data(const ParameterSet& truth, const ModelSpec& spec, const DesignMatrix& X,
                                    std::uint64_t seed, Eigen::MatrixXd& factors, int threads = 0);

struct CurveRow {
    double x = 0.0;
    Eigen::VectorXd correlations;  // strictly lower triangle, row-major
};

/// Model correlations along a single moderator: gamma(x) = gamma0 + delta * x.
[[nodiscard]] std::vector<CurveRow> correlation_curves(const Eigen::VectorXd& gamma0, const Eigen::VectorXd& delta_gamma,
                                                       const std::vector<double>& x_grid, CorrParam param);

/// `steps` evenly spaced points from lo to hi (a single point at lo when steps == 1).
[[nodiscard]] std::vector<double> linspace(double lo, double hi, int steps);

}  // namespace mnlfa
