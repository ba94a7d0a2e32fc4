#include "mnlfa/simulate.hpp"

#include "mnlfa/corr_struct.hpp"
#include "mnlfa/parallel.hpp"

#include <cmath>
#include <random>

namespace mnlfa {

namespace {

constexpr std::uint32_t kDesignStream = 0x44455349u;
constexpr std::uint32_t kDataStream = 0x44415441u;

std::mt19937_64 row_engine(std::uint64_t seed, std::uint32_t stream, Index row) {
    const auto r = static_cast<std::uint64_t>(row);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream,
                      static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace

DesignMatrix simulate_design(const std::vector<CovariateSpec>& covariates, Index n_persons, std::uint64_t seed) {
    if (n_persons < 1) {
        throw SpecError("simulation needs at least one person");
    }
    DesignMatrix X;
    X.rows.resize(n_persons, static_cast<Index>(covariates.size()));
    for (const auto& c : covariates) {
        X.column_names.push_back(c.name);
    }
    for (Index n = 0; n < n_persons; ++n) {
        auto eng = row_engine(seed, kDesignStream, n);
        for (std::size_t j = 0; j < covariates.size(); ++j) {
            const auto& c = covariates[j];
            double v = 0.0;
            switch (c.distribution) {
                case CovariateDistribution::normal:
                    v = std::normal_distribution<double>(c.a, c.b)(eng);
                    break;
                case CovariateDistribution::uniform:
                    v = std::uniform_real_distribution<double>(c.a, c.b)(eng);
                    break;
                case CovariateDistribution::bernoulli:
                    v = std::bernoulli_distribution(c.a)(eng) ? 1.0 : 0.0;
                    break;
            }
            X.rows(n, static_cast<Index>(j)) = v;
        }
    }
    return X;
}

Dataset simulate_data(const ParameterSet& truth, const ModelSpec& spec, const DesignMatrix& X, std::uint64_t seed,
                      Eigen::MatrixXd& factors, int threads) {
    spec.validate();
    check_consistent(truth, spec);
    X.validate();
    if (X.n_covariates() != spec.n_covariates) {
        throw SpecError("design matrix width does not match the model covariates");
    }
    const Index n_persons = X.n_persons();
    Dataset data;
    data.X = X;
    data.item_names = spec.item_names;
    data.Y.resize(n_persons, spec.n_items);
    factors.resize(n_persons, spec.n_factors);

    parallel_chunks(n_persons, threads, [&](std::ptrdiff_t begin, std::ptrdiff_t end, std::ptrdiff_t) {
        for (auto n = begin; n < end; ++n) {
            auto eng = row_engine(seed, kDataStream, n);
            std::normal_distribution<double> z(0.0, 1.0);
            const PersonParams pp = resolve_person(truth, X.rows.row(n).transpose());
            const FactorCov fc = person_factor_cov(pp, spec);

            Eigen::VectorXd u(spec.n_factors);
            for (Index m = 0; m < spec.n_factors; ++m) {
                u(m) = z(eng);
            }
            // Phi = (D^{1/2} L)(D^{1/2} L)^T, so the correlation factor doubles as the sampling factor
            const Eigen::VectorXd eta = pp.alpha + fc.D.array().sqrt().matrix().asDiagonal() * (fc.L * u);
            Eigen::VectorXd y = pp.nu + pp.lambda * eta;
            for (Index i = 0; i < spec.n_items; ++i) {
                y(i) += std::sqrt(pp.theta(i)) * z(eng);
            }
            data.Y.row(n) = y.transpose();
            factors.row(n) = eta.transpose();
        }
    });
    return data;
}

Dataset simulate_data(const ParameterSet& truth, const ModelSpec& spec, const DesignMatrix& X, std::uint64_t seed,
                      int threads) {
    Eigen::MatrixXd factors;
    return simulate_data(truth, spec, X, seed, factors, threads);
}

std::vector<CurveRow> correlation_curves(const Eigen::VectorXd& gamma0, const Eigen::VectorXd& delta_gamma,
                                         const std::vector<double>& x_grid, CorrParam param) {
    if (gamma0.size() != delta_gamma.size()) {
        throw SpecError("baseline and moderation correlation vectors differ in length");
    }
    const Index m = factors_from_corr_count(gamma0.size());
    std::vector<CurveRow> out;
    out.reserve(x_grid.size());
    for (double x : x_grid) {
        if (!std::isfinite(x)) {
            throw SpecError("curve grid must be finite");
        }
        const Eigen::MatrixXd L = chol_from_gamma(gamma0 + delta_gamma * x, param).L;
        const Eigen::MatrixXd R = L * L.transpose();
        CurveRow row;
        row.x = x;
        row.correlations.resize(gamma0.size());
        Index k = 0;
        for (Index i = 1; i < m; ++i) {
            for (Index j = 0; j < i; ++j) {
                row.correlations(k++) = R(i, j);
            }
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<double> linspace(double lo, double hi, int steps) {
    if (steps < 1) {
        throw SpecError("grid needs at least one step");
    }
    std::vector<double> out(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) {
        out[static_cast<std::size_t>(k)] = steps == 1 ? lo : lo + (hi - lo) * k / (steps - 1);
    }
    return out;
}

}  // namespace mnlfa
