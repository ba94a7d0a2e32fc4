#pragma once

// Reference implementations used only by the tests. They avoid the library's
// code paths: plain loops, Gauss-Jordan elimination and GSL minimization.

#include "mnlfa/config.hpp"
#include "mnlfa/likelihood.hpp"
#include "mnlfa/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using mnlfa::Index;

/// Inverse and log-determinant by Gauss-Jordan with partial pivoting.
struct InverseLogdet {
    MatrixXd inverse;
    double logdet = 0.0;
};
InverseLogdet gauss_jordan(const MatrixXd& a);

/// Textbook multivariate normal log-density.
double mvn_logpdf(const VectorXd& y, const VectorXd& mu, const MatrixXd& sigma);

/// Lambda Phi Lambda^T + diag(theta) with explicit triple loops.
MatrixXd brute_sigma(const MatrixXd& lambda, const MatrixXd& phi, const VectorXd& theta);

/// Central difference gradient of f at x with step h * max(1, |x_k|).
VectorXd central_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h = 1e-6);

/// Richardson-extrapolated central difference of a scalar function.
double richardson_derivative(const std::function<double(double)>& f, double x, double h = 1e-3);

/// Random model of the given shape with every family moderated by every covariate.
struct RandomModel {
    mnlfa::ModelSpec spec;
    mnlfa::ParameterSet params;
    mnlfa::Dataset data;
};
RandomModel random_model(Index n_items, Index n_factors, Index n_covariates, Index n_persons, std::uint64_t seed,
                         double missing_rate = 0.0, mnlfa::CorrParam param = mnlfa::CorrParam::partial_correlation,
                         bool moderate_everything = true);

/// Maximum-likelihood confirmatory factor analysis from sufficient statistics
/// (sample mean and biased covariance) of complete data. Factor variances are
/// fixed at 1, factor means at 0; correlations are parameterized as tanh(z)
/// per pair with non-PD candidates rejected.
struct CfaFit {
    VectorXd nu;
    MatrixXd lambda;  // I x M, zeros where the pattern is fixed at zero
    VectorXd theta;
    MatrixXd R;       // factor correlations
    double loglik = 0.0;
    bool converged = false;
};
/// Log-likelihood of complete data under mean mu and covariance sigma, from sufficient statistics.
double cfa_loglik(const MatrixXd& Y, const VectorXd& mu, const MatrixXd& sigma);
/// Derivatives of cfa_loglik with respect to mu and to each entry of sigma,
/// treating the entries as independent (the sigma part is symmetric).
struct CfaScore {
    VectorXd d_mu;
    MatrixXd d_sigma;
};
CfaScore cfa_score(const MatrixXd& Y, const VectorXd& mu, const MatrixXd& sigma);
CfaFit cfa_fit(const MatrixXd& Y, const mnlfa::BoolMatrix& free_pattern);

}  // namespace oracle
