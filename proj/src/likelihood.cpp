#include "mnlfa/likelihood.hpp"

#include "mnlfa/parallel.hpp"

#include <cmath>
#include <numbers>

namespace mnlfa {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

NumericalError::NumericalError(const std::string& what, Index person)
    : std::runtime_error(person >= 0 ? what + " (person " + std::to_string(person + 1) + ")" : what),
      person_(person) {}

void Dataset::validate() const {
    X.validate();
    if (Y.rows() != X.n_persons()) {
        throw SpecError("response and covariate matrices have different row counts");
    }
    if (static_cast<Index>(item_names.size()) != Y.cols()) {
        throw SpecError("item names do not match the response matrix width");
    }
    for (Index n = 0; n < Y.rows(); ++n) {
        if (observed_indices(Y.row(n)).empty()) {
            throw SpecError("person " + std::to_string(n) + " has no observed items");
        }
    }
}

Dataset listwise_complete(const Dataset& data) {
    std::vector<Index> keep;
    for (Index n = 0; n < data.n_persons(); ++n) {
        if (data.Y.row(n).allFinite()) {
            keep.push_back(n);
        }
    }
    Dataset out;
    out.item_names = data.item_names;
    out.X.column_names = data.X.column_names;
    out.Y.resize(static_cast<Index>(keep.size()), data.Y.cols());
    out.X.rows.resize(static_cast<Index>(keep.size()), data.X.rows.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        out.Y.row(static_cast<Index>(k)) = data.Y.row(keep[k]);
        out.X.rows.row(static_cast<Index>(k)) = data.X.rows.row(keep[k]);
    }
    return out;
}

std::vector<Index> observed_indices(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    std::vector<Index> idx;
    idx.reserve(static_cast<std::size_t>(row.size()));
    for (Index i = 0; i < row.size(); ++i) {
        if (!std::isnan(row(i))) {
            idx.push_back(i);
        }
    }
    return idx;
}

ImpliedMoments::ImpliedMoments(Eigen::VectorXd mu, Eigen::MatrixXd sigma, double jitter)
    : mu_(std::move(mu)), sigma_(std::move(sigma)) {
    if (jitter > 0.0) {
        sigma_.diagonal().array() += jitter;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sigma_);
    if (llt.info() != Eigen::Success || !sigma_.allFinite()) {
        throw NumericalError("implied covariance is not positive definite");
    }
    chol_ = llt.matrixL();
    logdet_ = 2.0 * chol_.diagonal().array().log().sum();
    inv_ = llt.solve(Eigen::MatrixXd::Identity(sigma_.rows(), sigma_.cols()));
}

ImpliedMoments ImpliedMoments::subset(const std::vector<Index>& idx, double jitter) const {
    const auto p = static_cast<Index>(idx.size());
    Eigen::VectorXd mu(p);
    Eigen::MatrixXd sigma(p, p);
    for (Index a = 0; a < p; ++a) {
        mu(a) = mu_(idx[static_cast<std::size_t>(a)]);
        for (Index b = 0; b < p; ++b) {
            sigma(a, b) = sigma_(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
        }
    }
    return {std::move(mu), std::move(sigma), jitter};
}

FactorCov person_factor_cov(const PersonParams& pp, const ModelSpec& spec) {
    return factor_cov(pp.gamma, pp.phi_diag, spec.corr_param);
}

Eigen::MatrixXd implied_sigma(const PersonParams& pp, const Eigen::MatrixXd& phi) {
    Eigen::MatrixXd sigma = pp.lambda * phi * pp.lambda.transpose();
    sigma.diagonal() += pp.theta;
    return sigma;
}

ImpliedMoments implied_moments(const PersonParams& pp, const ModelSpec& spec, double jitter) {
    const FactorCov fc = person_factor_cov(pp, spec);
    return {pp.nu + pp.lambda * pp.alpha, implied_sigma(pp, fc.Phi), jitter};
}

double person_loglik(const Eigen::Ref<const Eigen::VectorXd>& y_obs, const ImpliedMoments& m) {
    const Eigen::VectorXd r = y_obs - m.mu();
    const Eigen::VectorXd z = m.chol_Sigma().triangularView<Eigen::Lower>().solve(r);
    const auto p = static_cast<double>(y_obs.size());
    return -0.5 * p * kLog2Pi - 0.5 * m.logdet() - 0.5 * z.squaredNorm();
}

double person_loglik(const Eigen::Ref<const Eigen::VectorXd>& y_obs, const Eigen::Ref<const Eigen::VectorXd>& mu,
                     const Eigen::Ref<const Eigen::MatrixXd>& sigma) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        throw NumericalError("covariance is not positive definite");
    }
    const Eigen::VectorXd r = y_obs - mu;
    const double quad = r.dot(ldlt.solve(r));
    const double logdet = ldlt.vectorD().array().log().sum();
    const auto p = static_cast<double>(y_obs.size());
    return -0.5 * p * kLog2Pi - 0.5 * logdet - 0.5 * quad;
}

double row_loglik(const Eigen::Ref<const Eigen::RowVectorXd>& row, const ImpliedMoments& full) {
    const auto idx = observed_indices(row);
    if (static_cast<Index>(idx.size()) == row.size()) {
        return person_loglik(row.transpose(), full);
    }
    const ImpliedMoments sub = full.subset(idx);
    Eigen::VectorXd y(static_cast<Index>(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a) {
        y(static_cast<Index>(a)) = row(idx[a]);
    }
    return person_loglik(y, sub);
}

Eigen::VectorXd person_logliks(const ParameterSet& params, const Dataset& data, const ModelSpec& spec,
                               const LikelihoodOptions& opts) {
    Eigen::VectorXd out(data.n_persons());
    parallel_chunks(data.n_persons(), opts.threads, [&](std::ptrdiff_t begin, std::ptrdiff_t end, std::ptrdiff_t) {
        for (auto n = begin; n < end; ++n) {
            try {
                const PersonParams pp = resolve_person(params, data.X.rows.row(n).transpose());
                const ImpliedMoments m = implied_moments(pp, spec, opts.jitter);
                out(n) = row_loglik(data.Y.row(n), m);
            } catch (const NumericalError& e) {
                throw NumericalError(e.what(), n);
            } catch (const DomainError& e) {
                throw NumericalError(e.what(), n);
            }
        }
    });
    return out;
}

double total_loglik(const ParameterSet& params, const Dataset& data, const ModelSpec& spec,
                    const LikelihoodOptions& opts) {
    const Eigen::VectorXd per = person_logliks(params, data, spec, opts);
    // chunk-wise partial sums keep the reduction order fixed
    double total = 0.0;
    for (std::ptrdiff_t c = 0; c < chunk_count(per.size()); ++c) {
        const std::ptrdiff_t begin = c * kChunkSize;
        total += per.segment(begin, std::min<std::ptrdiff_t>(kChunkSize, per.size() - begin)).sum();
    }
    return total;
}

}  // namespace mnlfa
