#include <doctest.h>

#include "oracles.hpp"

#include "mnlfa/likelihood.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace mnlfa;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_spd(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    MatrixXd a(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            a(i, j) = z(rng);
        }
    }
    return a * a.transpose() + MatrixXd::Identity(n, n) * 0.5;
}

}  // namespace

TEST_CASE("implied moments by hand") {
    ModelSpec spec = ModelSpec::make(3, 1, 0);
    spec.identification = Identification::anchor_loading;
    PersonParams pp;
    pp.nu = VectorXd::Zero(3);
    pp.lambda = MatrixXd::Ones(3, 1);
    pp.theta = VectorXd::Ones(3);
    pp.alpha = VectorXd::Constant(1, 2.0);
    pp.phi_diag = VectorXd::Ones(1);
    pp.gamma = VectorXd::Zero(0);
    const ImpliedMoments m = implied_moments(pp, spec);
    CHECK(m.mu() == VectorXd::Constant(3, 2.0));
    MatrixXd expected = MatrixXd::Ones(3, 3) + MatrixXd::Identity(3, 3);
    CHECK(m.Sigma().isApprox(expected, 1e-15));

    pp.lambda.setZero();
    const ImpliedMoments m0 = implied_moments(pp, spec);
    CHECK(m0.mu() == pp.nu);
    CHECK(m0.Sigma().isApprox(MatrixXd(pp.theta.asDiagonal()), 1e-15));
}

TEST_CASE("implied covariance matches a brute-force product") {
    auto rm = oracle::random_model(8, 3, 2, 5, 31);
    for (Index n = 0; n < 5; ++n) {
        const PersonParams pp = resolve_person(rm.params, rm.data.X.rows.row(n).transpose());
        const FactorCov fc = person_factor_cov(pp, rm.spec);
        const ImpliedMoments m = implied_moments(pp, rm.spec);
        const MatrixXd brute = oracle::brute_sigma(pp.lambda, fc.Phi, pp.theta);
        CHECK((m.Sigma() - brute).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((m.mu() - (pp.nu + pp.lambda * pp.alpha)).cwiseAbs().maxCoeff() <= 1e-14);
    }
}

TEST_CASE("person log-likelihood examples") {
    const ImpliedMoments one(VectorXd::Zero(1), MatrixXd::Identity(1, 1));
    CHECK(person_loglik(VectorXd::Zero(1), one) == doctest::Approx(-0.918938533204673).epsilon(1e-14));
    const ImpliedMoments two(VectorXd::Zero(2), MatrixXd::Identity(2, 2));
    CHECK(person_loglik(VectorXd::Zero(2), two) == doctest::Approx(-std::log(2 * std::numbers::pi)).epsilon(1e-14));
    CHECK(-std::log(2 * std::numbers::pi) == doctest::Approx(-1.837877).epsilon(1e-6));
}

TEST_CASE("person log-likelihood agrees with a textbook density") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        const Index p = 1 + rep % 7;
        const MatrixXd s = random_spd(p, rng);
        VectorXd mu(p), y(p);
        for (Index i = 0; i < p; ++i) {
            mu(i) = z(rng);
            y(i) = z(rng);
        }
        const ImpliedMoments m(mu, s);
        const double ref = oracle::mvn_logpdf(y, mu, s);
        CHECK(std::abs(person_loglik(y, m) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
        // cached and uncached evaluations agree
        CHECK(std::abs(person_loglik(y, m) - person_loglik(y, mu, s)) <= 1e-13 * std::max(1.0, std::abs(ref)));
    }
}

TEST_CASE("subsetting moments equals the marginal") {
    std::mt19937_64 rng(8);
    const MatrixXd s = random_spd(5, rng);
    VectorXd mu(5);
    mu << 0.1, 0.2, -0.3, 0.4, 1.0;
    const ImpliedMoments full(mu, s);
    const std::vector<Index> idx{0, 2, 4};
    const ImpliedMoments sub = full.subset(idx);
    MatrixXd s_sub(3, 3);
    VectorXd mu_sub(3);
    for (Index a = 0; a < 3; ++a) {
        mu_sub(a) = mu(idx[static_cast<std::size_t>(a)]);
        for (Index b = 0; b < 3; ++b) {
            s_sub(a, b) = s(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
        }
    }
    CHECK(sub.Sigma() == s_sub);
    CHECK(sub.mu() == mu_sub);
    VectorXd y(3);
    y << 0.5, -0.5, 2.0;
    CHECK(person_loglik(y, sub) == doctest::Approx(oracle::mvn_logpdf(y, mu_sub, s_sub)).epsilon(1e-12));

    Eigen::RowVectorXd row(5);
    row << 0.5, std::nan(""), -0.5, std::nan(""), 2.0;
    CHECK(row_loglik(row, full) == doctest::Approx(oracle::mvn_logpdf(y, mu_sub, s_sub)).epsilon(1e-12));
}

TEST_CASE("dropping an item column equals FIML with that item missing") {
    auto rm = oracle::random_model(6, 2, 1, 20, 44);
    Dataset missing = rm.data;
    missing.Y.col(3).setConstant(std::nan(""));

    const double with_missing = total_loglik(rm.params, missing, rm.spec);
    double by_hand = 0.0;
    for (Index n = 0; n < 20; ++n) {
        const PersonParams pp = resolve_person(rm.params, rm.data.X.rows.row(n).transpose());
        const ImpliedMoments m = implied_moments(pp, rm.spec);
        const std::vector<Index> keep{0, 1, 2, 4, 5};
        VectorXd y(5);
        for (Index a = 0; a < 5; ++a) {
            y(a) = rm.data.Y(n, keep[static_cast<std::size_t>(a)]);
        }
        MatrixXd s(5, 5);
        VectorXd mu(5);
        for (Index a = 0; a < 5; ++a) {
            mu(a) = m.mu()(keep[static_cast<std::size_t>(a)]);
            for (Index b = 0; b < 5; ++b) {
                s(a, b) = m.Sigma()(keep[static_cast<std::size_t>(a)], keep[static_cast<std::size_t>(b)]);
            }
        }
        by_hand += oracle::mvn_logpdf(y, mu, s);
    }
    CHECK(with_missing == doctest::Approx(by_hand).epsilon(1e-12));
}

TEST_CASE("total log-likelihood properties") {
    auto rm = oracle::random_model(5, 2, 2, 30, 7, 0.1);
    const double total = total_loglik(rm.params, rm.data, rm.spec);

    SUBCASE("single person") {
        Dataset one = rm.data;
        one.Y = rm.data.Y.topRows(1);
        one.X.rows = rm.data.X.rows.topRows(1);
        const PersonParams pp = resolve_person(rm.params, one.X.rows.row(0).transpose());
        const double direct = row_loglik(one.Y.row(0), implied_moments(pp, rm.spec));
        CHECK(total_loglik(rm.params, one, rm.spec) == direct);
    }
    SUBCASE("duplicating rows doubles the total") {
        Dataset twice = rm.data;
        twice.Y.resize(60, 5);
        twice.Y << rm.data.Y, rm.data.Y;
        twice.X.rows.resize(60, 2);
        twice.X.rows << rm.data.X.rows, rm.data.X.rows;
        CHECK(total_loglik(rm.params, twice, rm.spec) == doctest::Approx(2.0 * total).epsilon(1e-13));
    }
    SUBCASE("translation of an item and its intercept") {
        Dataset shifted = rm.data;
        shifted.Y.col(2).array() += 3.7;
        ParameterSet p = rm.params;
        p.nu0()(2) += 3.7;
        CHECK(std::abs(total_loglik(p, shifted, rm.spec) - total) <= 1e-10 * std::abs(total));
    }
    SUBCASE("thread count does not change the sum") {
        auto big = oracle::random_model(5, 2, 1, 700, 8, 0.1);
        const double one = total_loglik(big.params, big.data, big.spec, {0.0, 1});
        const double four = total_loglik(big.params, big.data, big.spec, {0.0, 4});
        CHECK(one == four);
        CHECK(person_logliks(big.params, big.data, big.spec).sum() == doctest::Approx(one).epsilon(1e-12));
    }
}

TEST_CASE("without moderation the likelihood is a plain factor model likelihood") {
    auto rm = oracle::random_model(6, 2, 1, 300, 12, 0.0, CorrParam::partial_correlation, false);
    const double ours = total_loglik(rm.params, rm.data, rm.spec);
    const PersonParams pp = resolve_person(rm.params, VectorXd::Zero(1));
    const FactorCov fc = person_factor_cov(pp, rm.spec);
    const MatrixXd sigma = oracle::brute_sigma(pp.lambda, fc.Phi, pp.theta);
    const double ref = oracle::cfa_loglik(rm.data.Y, pp.nu, sigma);
    CHECK(std::abs(ours - ref) <= 1e-8 * std::abs(ref));
}

TEST_CASE("data validation and failures") {
    Dataset d;
    d.Y.resize(2, 2);
    d.Y << 1.0, std::nan(""), std::nan(""), std::nan("");
    d.X.rows.resize(2, 0);
    d.item_names = {"a", "b"};
    CHECK_THROWS_AS(d.validate(), SpecError);

    const Dataset complete = [] {
        Dataset c;
        c.Y.resize(3, 2);
        c.Y << 1.0, 2.0, std::nan(""), 1.0, 3.0, 4.0;
        c.X.rows.resize(3, 0);
        c.item_names = {"a", "b"};
        return c;
    }();
    CHECK(listwise_complete(complete).n_persons() == 2);

    MatrixXd bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(ImpliedMoments(VectorXd::Zero(2), bad), NumericalError);
    CHECK_NOTHROW(ImpliedMoments(VectorXd::Zero(2), MatrixXd::Zero(2, 2), 1e-6));
}

TEST_CASE("numerical failures name the person") {
    auto rm = oracle::random_model(3, 1, 1, 10, 5, 0.0, CorrParam::partial_correlation, false);
    rm.spec.moderate_all(Family::theta, 0);
    rm.params.delta_of(Family::theta) = MatrixXd::Zero(3, 1);
    rm.params.delta_of(Family::theta)(0, 0) = -2000.0;
    rm.params.delta_of(Family::theta)(1, 0) = -2000.0;
    rm.params.delta_of(Family::theta)(2, 0) = -2000.0;
    rm.params.lambda0().setZero();
    rm.data.X.rows.setZero();
    rm.data.X.rows(6, 0) = 1.0;
    try {
        (void)total_loglik(rm.params, rm.data, rm.spec);
        FAIL("expected a numerical failure");
    } catch (const NumericalError& e) {
        CHECK(e.person() == 6);
    }
}
