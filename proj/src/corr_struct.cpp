#include "mnlfa/corr_struct.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace mnlfa {

namespace {

const double kBelowOne = std::nextafter(1.0, 0.0);

// Shared row recursion: entry (i, j) is lead(i, j) times the running product of
// tails over k < j; the diagonal is the full product of tails.
template <typename Lead, typename Tail>
CholeskyFactor build_rows(Index n_corr, Lead lead, Tail tail) {
    const Index m = factors_from_corr_count(n_corr);
    CholeskyFactor out{Eigen::MatrixXd::Zero(m, m)};
    out.L(0, 0) = 1.0;
    Index k = 0;
    for (Index i = 1; i < m; ++i) {
        double prod = 1.0;
        for (Index j = 0; j < i; ++j, ++k) {
            out.L(i, j) = lead(k) * prod;
            prod *= tail(k);
        }
        out.L(i, i) = prod;
    }
    return out;
}

}  // namespace

Index factors_from_corr_count(Index n_corr) {
    Index m = 1;
    while (n_corr_params(m) < n_corr) {
        ++m;
    }
    if (n_corr_params(m) != n_corr) {
        throw DomainError("correlation vector length " + std::to_string(n_corr) + " is not M(M-1)/2");
    }
    return m;
}

double tanh_map(double gamma) {
    const double t = std::tanh(gamma);
    if (t >= 1.0) {
        return kBelowOne;
    }
    if (t <= -1.0) {
        return -kBelowOne;
    }
    return t;
}

double angle_map(double gamma) {
    constexpr double pi = std::numbers::pi;
    const double s = 1.0 / (1.0 + std::exp(-gamma));
    double angle = pi * s;
    if (angle >= pi) {
        angle = std::nextafter(pi, 0.0);
    }
    if (angle <= 0.0) {
        angle = std::numeric_limits<double>::denorm_min();
    }
    return angle;
}

CholeskyFactor chol_from_partial_corrs(const Eigen::Ref<const Eigen::VectorXd>& pcorr) {
    for (Index k = 0; k < pcorr.size(); ++k) {
        if (!(std::abs(pcorr(k)) < 1.0)) {
            throw DomainError("partial correlation " + std::to_string(pcorr(k)) + " outside (-1, 1)");
        }
    }
    return build_rows(
        pcorr.size(), [&](Index k) { return pcorr(k); },
        [&](Index k) { return std::sqrt(1.0 - pcorr(k) * pcorr(k)); });
}

CholeskyFactor chol_from_angles(const Eigen::Ref<const Eigen::VectorXd>& angles) {
    for (Index k = 0; k < angles.size(); ++k) {
        if (!(angles(k) > 0.0 && angles(k) < std::numbers::pi)) {
            throw DomainError("angle " + std::to_string(angles(k)) + " outside (0, pi)");
        }
    }
    return build_rows(
        angles.size(), [&](Index k) { return std::cos(angles(k)); },
        [&](Index k) { return std::sin(angles(k)); });
}

CholeskyFactor chol_from_gamma(const Eigen::Ref<const Eigen::VectorXd>& gamma, CorrParam param) {
    Eigen::VectorXd mapped(gamma.size());
    for (Index k = 0; k < gamma.size(); ++k) {
        if (!std::isfinite(gamma(k))) {
            throw DomainError("non-finite correlation parameter");
        }
        mapped(k) = param == CorrParam::partial_correlation ? tanh_map(gamma(k)) : angle_map(gamma(k));
    }
    return param == CorrParam::partial_correlation ? chol_from_partial_corrs(mapped) : chol_from_angles(mapped);
}

FactorCov factor_cov(const Eigen::Ref<const Eigen::VectorXd>& gamma,
                     const Eigen::Ref<const Eigen::VectorXd>& phi_diag, CorrParam param) {
    if (!(phi_diag.array() > 0.0).all()) {
        throw DomainError("factor variances must be positive");
    }
    FactorCov fc;
    fc.L = chol_from_gamma(gamma, param).L;
    if (fc.L.rows() != phi_diag.size()) {
        throw DomainError("correlation parameters do not match the number of factor variances");
    }
    fc.R = fc.L * fc.L.transpose();
    fc.D = phi_diag;
    const Eigen::VectorXd sd = phi_diag.array().sqrt().matrix();
    fc.Phi = sd.asDiagonal() * fc.R * sd.asDiagonal();
    return fc;
}

}  // namespace mnlfa
