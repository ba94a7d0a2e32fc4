#include "mnlfa/gradients.hpp"

#include "mnlfa/corr_struct.hpp"
#include "mnlfa/parallel.hpp"

#include <cmath>
#include <numbers>

namespace mnlfa {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Log-density of the observed part of `row` without forming an inverse.
double observed_loglik(const Eigen::Ref<const Eigen::RowVectorXd>& row, const Eigen::VectorXd& mu,
                       const Eigen::MatrixXd& sigma) {
    const auto idx = observed_indices(row);
    const auto p = static_cast<Index>(idx.size());
    Eigen::VectorXd r(p);
    Eigen::MatrixXd s(p, p);
    for (Index a = 0; a < p; ++a) {
        const Index ia = idx[static_cast<std::size_t>(a)];
        r(a) = row(ia) - mu(ia);
        for (Index b = 0; b < p; ++b) {
            s(a, b) = sigma(ia, idx[static_cast<std::size_t>(b)]);
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("implied covariance is not positive definite");
    }
    const Eigen::MatrixXd L = llt.matrixL();
    const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(r);
    return -0.5 * static_cast<double>(p) * kLog2Pi - L.diagonal().array().log().sum() - 0.5 * z.squaredNorm();
}

double loglik_at_gamma(const PersonParams& pp, const Eigen::VectorXd& gamma, const Eigen::VectorXd& mu,
                       const Eigen::Ref<const Eigen::RowVectorXd>& row, CorrParam param, double jitter) {
    const FactorCov fc = factor_cov(gamma, pp.phi_diag, param);
    Eigen::MatrixXd sigma = implied_sigma(pp, fc.Phi);
    if (jitter > 0.0) {
        sigma.diagonal().array() += jitter;
    }
    return observed_loglik(row, mu, sigma);
}

double gamma_central_difference(Index k, const PersonParams& pp, const Eigen::VectorXd& mu,
                                const Eigen::Ref<const Eigen::RowVectorXd>& row, CorrParam param, double eps,
                                double jitter) {
    const double g = pp.gamma(k);
    const double h = std::abs(g) > 4.0 ? eps * (1.0 + std::abs(g)) : eps;
    Eigen::VectorXd up = pp.gamma;
    Eigen::VectorXd down = pp.gamma;
    up(k) = g + h;
    down(k) = g - h;
    return (loglik_at_gamma(pp, up, mu, row, param, jitter) - loglik_at_gamma(pp, down, mu, row, param, jitter)) /
           ((g + h) - (g - h));
}

double gamma_fd_with_retry(Index k, const PersonParams& pp, const Eigen::VectorXd& mu,
                           const Eigen::Ref<const Eigen::RowVectorXd>& row, CorrParam param, double eps,
                           double jitter) {
    try {
        return gamma_central_difference(k, pp, mu, row, param, eps, jitter);
    } catch (const NumericalError&) {
    } catch (const DomainError&) {
    }
    try {
        return gamma_central_difference(k, pp, mu, row, param, eps / 10.0, jitter);
    } catch (const DomainError& e) {
        throw NumericalError(e.what());
    }
}

}  // namespace

GradWorkspace GradWorkspace::make(const Eigen::Ref<const Eigen::RowVectorXd>& row, const ImpliedMoments& full) {
    const Index n = full.dim();
    GradWorkspace ws;
    ws.resid = Eigen::VectorXd::Zero(n);
    ws.inv_resid = Eigen::VectorXd::Zero(n);
    ws.inv_Sigma = Eigen::MatrixXd::Zero(n, n);

    const auto idx = observed_indices(row);
    if (static_cast<Index>(idx.size()) == n) {
        ws.resid = row.transpose() - full.mu();
        ws.inv_Sigma = full.inv_Sigma();
        ws.inv_resid = ws.inv_Sigma * ws.resid;
    } else {
        const ImpliedMoments sub = full.subset(idx);
        const auto p = static_cast<Index>(idx.size());
        Eigen::VectorXd r(p);
        for (Index a = 0; a < p; ++a) {
            r(a) = row(idx[static_cast<std::size_t>(a)]) - sub.mu()(a);
        }
        const Eigen::VectorXd ir = sub.inv_Sigma() * r;
        for (Index a = 0; a < p; ++a) {
            const Index ia = idx[static_cast<std::size_t>(a)];
            ws.resid(ia) = r(a);
            ws.inv_resid(ia) = ir(a);
            for (Index b = 0; b < p; ++b) {
                ws.inv_Sigma(ia, idx[static_cast<std::size_t>(b)]) = sub.inv_Sigma()(a, b);
            }
        }
    }
    ws.Qsr = ws.inv_resid * ws.inv_resid.transpose() - ws.inv_Sigma;
    return ws;
}

Eigen::VectorXd grad_nu(const GradWorkspace& ws) { return ws.inv_resid; }

Eigen::MatrixXd grad_lambda_all(const GradWorkspace& ws, const PersonParams& pp, const Eigen::MatrixXd& phi) {
    // covariance part: 0.5 tr[Q (e_i v^T + v e_i^T)] = (Q v)_i with v = (Lambda Phi)_{.f}
    return ws.inv_resid * pp.alpha.transpose() + ws.Qsr * (pp.lambda * phi);
}

double grad_lambda(Index item, Index factor, const GradWorkspace& ws, const PersonParams& pp,
                   const Eigen::MatrixXd& phi) {
    const Eigen::VectorXd v = pp.lambda * phi.col(factor);
    return ws.inv_resid(item) * pp.alpha(factor) + ws.Qsr.row(item).dot(v);
}

double grad_theta(Index item, const GradWorkspace& ws, const PersonParams& pp) {
    return 0.5 * pp.theta(item) * ws.Qsr(item, item);
}

Eigen::VectorXd grad_alpha(const GradWorkspace& ws, const PersonParams& pp) {
    return pp.lambda.transpose() * ws.inv_resid;
}

double grad_phi_diag(Index factor, const GradWorkspace& ws, const PersonParams& pp, const Eigen::MatrixXd& phi) {
    // d Phi / d log phi_m = (E_m Phi + Phi E_m) / 2, so the trace collapses to (G Phi)_mm / 2
    const Eigen::MatrixXd G = pp.lambda.transpose() * ws.Qsr * pp.lambda;
    return 0.5 * G.row(factor).dot(phi.col(factor));
}

double grad_gamma_fd(Index k, const PersonParams& pp, const Eigen::VectorXd& mu,
                     const Eigen::Ref<const Eigen::RowVectorXd>& row, CorrParam param, double eps) {
    return gamma_fd_with_retry(k, pp, mu, row, param, eps, 0.0);
}

double grad_gamma_analytic_m2(const GradWorkspace& ws, const PersonParams& pp) {
    if (pp.gamma.size() != 1) {
        throw DomainError("analytic correlation gradient is only available for two factors");
    }
    const double rho = tanh_map(pp.gamma(0));
    const Eigen::MatrixXd G = pp.lambda.transpose() * ws.Qsr * pp.lambda;
    return (1.0 - rho * rho) * std::sqrt(pp.phi_diag(0) * pp.phi_diag(1)) * G(1, 0);
}

PersonEvaluation evaluate_person(const PersonParams& pp, const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                 const ModelSpec& spec, const GradientOptions& opts) {
    const FactorCov fc = person_factor_cov(pp, spec);
    const Eigen::VectorXd mu = pp.nu + pp.lambda * pp.alpha;
    const ImpliedMoments full(mu, implied_sigma(pp, fc.Phi), opts.jitter);
    const GradWorkspace ws = GradWorkspace::make(row, full);

    PersonEvaluation out;
    out.loglik = row_loglik(row, full);

    const Index n_items = pp.nu.size();
    const Index n_factors = pp.alpha.size();
    auto& g = out.grad.family;
    g[family_slot(Family::nu)] = grad_nu(ws);

    const Eigen::MatrixXd gl = grad_lambda_all(ws, pp, fc.Phi);
    g[family_slot(Family::lambda)].resize(n_items * n_factors);
    Eigen::Map<RowMatrix>(g[family_slot(Family::lambda)].data(), n_items, n_factors) = gl;

    g[family_slot(Family::theta)] = 0.5 * pp.theta.cwiseProduct(ws.Qsr.diagonal());
    g[family_slot(Family::alpha)] = grad_alpha(ws, pp);

    const Eigen::MatrixXd G = pp.lambda.transpose() * ws.Qsr * pp.lambda;
    g[family_slot(Family::phi)] = 0.5 * (G * fc.Phi).diagonal();

    auto& gg = g[family_slot(Family::gamma)];
    gg.resize(pp.gamma.size());
    for (Index k = 0; k < pp.gamma.size(); ++k) {
        gg(k) = gamma_fd_with_retry(k, pp, mu, row, spec.corr_param, opts.fd_eps, opts.jitter);
    }
    return out;
}

void scatter_gradient(const BaseGradient& base, const Eigen::Ref<const Eigen::VectorXd>& x,
                      const ParameterLayout& layout, Eigen::Ref<Eigen::VectorXd> out) {
    for (Index k = 0; k < layout.size(); ++k) {
        const auto& e = layout[k];
        const double g = base.family[family_slot(e.family)](e.row);
        out(k) += e.is_delta ? grad_delta(g, x(e.covariate)) : g;
    }
}

LoglikGradient loglik_gradient(const ParameterSet& params, const Dataset& data, const ModelSpec& spec,
                               const ParameterLayout& layout, const GradientOptions& opts) {
    const std::ptrdiff_t chunks = chunk_count(data.n_persons());
    Eigen::MatrixXd partial_grad = Eigen::MatrixXd::Zero(layout.size(), chunks);
    Eigen::VectorXd partial_ll = Eigen::VectorXd::Zero(chunks);

    parallel_chunks(data.n_persons(), opts.threads, [&](std::ptrdiff_t begin, std::ptrdiff_t end, std::ptrdiff_t c) {
        for (auto n = begin; n < end; ++n) {
            try {
                const Eigen::VectorXd x = data.X.rows.row(n).transpose();
                const PersonParams pp = resolve_person(params, x);
                const PersonEvaluation ev = evaluate_person(pp, data.Y.row(n), spec, opts);
                partial_ll(c) += ev.loglik;
                scatter_gradient(ev.grad, x, layout, partial_grad.col(c));
            } catch (const NumericalError& e) {
                throw NumericalError(e.what(), n);
            } catch (const DomainError& e) {
                throw NumericalError(e.what(), n);
            }
        }
    });

    LoglikGradient out;
    out.gradient = Eigen::VectorXd::Zero(layout.size());
    for (std::ptrdiff_t c = 0; c < chunks; ++c) {
        out.loglik += partial_ll(c);
        out.gradient += partial_grad.col(c);
    }
    return out;
}

Eigen::MatrixXd person_gradients(const ParameterSet& params, const Dataset& data, const ModelSpec& spec,
                                 const ParameterLayout& layout, const GradientOptions& opts) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(data.n_persons(), layout.size());
    parallel_chunks(data.n_persons(), opts.threads, [&](std::ptrdiff_t begin, std::ptrdiff_t end, std::ptrdiff_t) {
        Eigen::VectorXd g(layout.size());
        for (auto n = begin; n < end; ++n) {
            try {
                const Eigen::VectorXd x = data.X.rows.row(n).transpose();
                const PersonParams pp = resolve_person(params, x);
                const PersonEvaluation ev = evaluate_person(pp, data.Y.row(n), spec, opts);
                g.setZero();
                scatter_gradient(ev.grad, x, layout, g);
                out.row(n) = g.transpose();
            } catch (const NumericalError& e) {
                throw NumericalError(e.what(), n);
            } catch (const DomainError& e) {
                throw NumericalError(e.what(), n);
            }
        }
    });
    return out;
}

ObjectiveValue evaluate_objective(const Eigen::VectorXd& packed, const Dataset& data, const ModelSpec& spec,
                                  const ParameterLayout& layout, const PenaltyConfig& cfg,
                                  const GradientOptions& opts) {
    const ParameterSet params = unpack(packed, spec, layout);
    const LoglikGradient lg = loglik_gradient(params, data, spec, layout, opts);
    ObjectiveValue out;
    out.loglik = lg.loglik;
    out.penalty = penalty_value(packed, cfg);
    out.objective = composite_objective(out.loglik, out.penalty, cfg.w0);
    out.gradient = (1.0 - cfg.w0) * lg.gradient;
    if (cfg.kind != PenaltyKind::none && cfg.w0 > 0.0) {
        out.gradient -= cfg.w0 * penalty_gradient(packed, cfg);
    }
    return out;
}

Eigen::VectorXd full_gradient(const ParameterSet& params, const Dataset& data, const ModelSpec& spec,
                              const PenaltyConfig& cfg, const GradientOptions& opts) {
    const ParameterLayout layout(spec);
    return evaluate_objective(pack(params, layout), data, spec, layout, cfg, opts).gradient;
}

}  // namespace mnlfa
