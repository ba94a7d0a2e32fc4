#pragma once

#include "mnlfa/corr_struct.hpp"
#include "mnlfa/model.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace mnlfa {

/// Raised when an implied covariance cannot be factored. Carries the 0-based
/// person index when the failure happened inside a sample loop (-1 otherwise);
/// the message names the person 1-based.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, Index person = -1);
    [[nodiscard]] Index person() const { return person_; }

private:
    Index person_;
};

/// Indicator matrix (NaN marks a missing response) plus person covariates.
struct Dataset {
    Eigen::MatrixXd Y;
    DesignMatrix X;
    std::vector<std::string> item_names;

    [[nodiscard]] Index n_persons() const { return Y.rows(); }
    [[nodiscard]] Index n_items() const { return Y.cols(); }
    /// Every row has an observed item, X is complete and the shapes agree.
    void validate() const;
};

/// Rows with every item observed.
[[nodiscard]] Dataset listwise_complete(const Dataset& data);

/// Column indices of the observed entries of one response row.
[[nodiscard]] std::vector<Index> observed_indices(const Eigen::Ref<const Eigen::RowVectorXd>& row);

/// Model-implied mean and covariance with cached factorization. Caches are
/// filled on construction and the object is immutable afterwards.
class ImpliedMoments {
public:
    ImpliedMoments(Eigen::VectorXd mu, Eigen::MatrixXd sigma, double jitter = 0.0);

    [[nodiscard]] const Eigen::VectorXd& mu() const { return mu_; }
    [[nodiscard]] const Eigen::MatrixXd& Sigma() const { return sigma_; }
    [[nodiscard]] const Eigen::MatrixXd& chol_Sigma() const { return chol_; }
    [[nodiscard]] const Eigen::MatrixXd& inv_Sigma() const { return inv_; }
    [[nodiscard]] double logdet() const { return logdet_; }
    [[nodiscard]] Index dim() const { return mu_.size(); }

    /// Moments of the sub-vector at `idx` (marginal of the normal).
    [[nodiscard]] ImpliedMoments subset(const std::vector<Index>& idx, double jitter = 0.0) const;

private:
    Eigen::VectorXd mu_;
    Eigen::MatrixXd sigma_;
    Eigen::MatrixXd chol_;
    Eigen::MatrixXd inv_;
    double logdet_ = 0.0;
};

struct LikelihoodOptions {
    double jitter = 0.0;  // added to the implied covariance diagonal; 0 disables
    int threads = 0;      // 0: default_thread_count()
};

/// Covariance of the latent factors for a resolved person.
[[nodiscard]] FactorCov person_factor_cov(const PersonParams& pp, const ModelSpec& spec);

/// Unfactored implied covariance Lambda Phi Lambda^T + diag(theta).
[[nodiscard]] Eigen::MatrixXd implied_sigma(const PersonParams& pp, const Eigen::MatrixXd& phi);

[[nodiscard]] ImpliedMoments implied_moments(const PersonParams& pp, const ModelSpec& spec, double jitter = 0.0);

/// Multivariate normal log-density of y under cached moments of the same dimension.
[[nodiscard]] double person_loglik(const Eigen::Ref<const Eigen::VectorXd>& y_obs, const ImpliedMoments& m);

/// Direct evaluation without caches; used for consistency checks.
[[nodiscard]] double person_loglik(const Eigen::Ref<const Eigen::VectorXd>& y_obs,
                                   const Eigen::Ref<const Eigen::VectorXd>& mu,
                                   const Eigen::Ref<const Eigen::MatrixXd>& sigma);

/// Log-likelihood of one full response row (NaN = missing) under full-length moments.
[[nodiscard]] double row_loglik(const Eigen::Ref<const Eigen::RowVectorXd>& row, const ImpliedMoments& full);

[[nodiscard]] double total_loglik(const ParameterSet& params, const Dataset& data, const ModelSpec& spec,
                                  const LikelihoodOptions& opts = {});

/// Per-person contributions, in row order.
[[nodiscard]] Eigen::VectorXd person_logliks(const ParameterSet& params, const Dataset& data,
                                             const ModelSpec& spec, const LikelihoodOptions& opts = {});

}  // namespace mnlfa
