#pragma once

#include "mnlfa/model.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace mnlfa {

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Lower-triangular Cholesky factor of a correlation matrix. Rows have unit norm.
struct CholeskyFactor {
    Eigen::MatrixXd L;
};

/// Factor covariance assembled from correlations and variances.
struct FactorCov {
    Eigen::MatrixXd Phi;    // D^{1/2} R D^{1/2}
    Eigen::MatrixXd R;      // L L^T
    Eigen::MatrixXd L;      // correlation Cholesky factor
    Eigen::VectorXd D;      // factor variances
};

/// Unconstrained real -> partial correlation in (-1, 1). Saturated values are
/// pulled back to the largest double below 1 in magnitude.
[[nodiscard]] double tanh_map(double gamma);

/// Unconstrained real -> angle in (0, pi) via pi * logistic(gamma).
[[nodiscard]] double angle_map(double gamma);

/// Row-by-row construction from partial correlations, ordered (2,1), (3,1), (3,2), ...
[[nodiscard]] CholeskyFactor chol_from_partial_corrs(const Eigen::Ref<const Eigen::VectorXd>& pcorr);

/// Same construction from hypersphere angles: cos for the leading term, products
/// of sines for the remainder.
[[nodiscard]] CholeskyFactor chol_from_angles(const Eigen::Ref<const Eigen::VectorXd>& angles);

/// Correlation factor for an unconstrained gamma vector under the chosen map.
[[nodiscard]] CholeskyFactor chol_from_gamma(const Eigen::Ref<const Eigen::VectorXd>& gamma, CorrParam param);

[[nodiscard]] FactorCov factor_cov(const Eigen::Ref<const Eigen::VectorXd>& gamma,
                                   const Eigen::Ref<const Eigen::VectorXd>& phi_diag, CorrParam param);

/// M recovered from M(M-1)/2; throws DomainError when the length is not triangular.
[[nodiscard]] Index factors_from_corr_count(Index n_corr);

}  // namespace mnlfa
