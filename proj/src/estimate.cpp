#include "mnlfa/estimate.hpp"

#include "mnlfa/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace mnlfa {

void FitConfig::validate() const {
    if (max_iter < 1 || n_starts < 1) {
        throw SpecError("max_iter and n_starts must be at least 1");
    }
    if (!(grad_tol > 0.0) || !(obj_rel_tol > 0.0) || !(fd_eps > 0.0)) {
        throw SpecError("optimizer tolerances must be positive");
    }
    if (!(start_jitter >= 0.0) || !(jitter >= 0.0)) {
        throw SpecError("jitter values must be nonnegative");
    }
}

Eigen::VectorXd default_start(const Dataset& data, const ModelSpec& spec, const ParameterLayout& layout) {
    const Index n_items = spec.n_items;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n_items);
    Eigen::VectorXd var = Eigen::VectorXd::Ones(n_items);
    for (Index i = 0; i < n_items; ++i) {
        double sum = 0.0;
        double sq = 0.0;
        Index count = 0;
        for (Index n = 0; n < data.n_persons(); ++n) {
            const double y = data.Y(n, i);
            if (!std::isnan(y)) {
                sum += y;
                sq += y * y;
                ++count;
            }
        }
        if (count > 0) {
            mean(i) = sum / static_cast<double>(count);
        }
        if (count > 1) {
            const double v = (sq - sum * mean(i)) / static_cast<double>(count - 1);
            if (v > 1e-8) {
                var(i) = v;
            }
        }
    }

    ParameterSet p = ParameterSet::zeros(spec);
    p.nu0() = mean;
    p.log_theta0() = (0.5 * var).array().log().matrix();
    auto lambda = p.lambda0();
    for (Index i = 0; i < n_items; ++i) {
        const Index n_free = spec.loading_free.row(i).count();
        for (Index m = 0; m < spec.n_factors; ++m) {
            if (!spec.loading_free(i, m)) {
                continue;
            }
            lambda(i, m) = spec.identification == Identification::anchor_loading
                               ? 1.0
                               : std::sqrt(0.5 * var(i)) / static_cast<double>(n_free);
        }
    }
    if (spec.identification == Identification::anchor_loading) {
        for (Index m = 0; m < spec.n_factors; ++m) {
            for (Index i = 0; i < n_items; ++i) {
                if (!spec.loading_free(i, m) && spec.loading_value(i, m) == 1.0) {
                    p.log_phi0()(m) = std::log(0.5 * var(i));
                }
            }
        }
    }
    return pack(p, layout);
}

namespace {

double safe_negative_objective(const Eigen::VectorXd& x, Eigen::VectorXd& grad, const Dataset& data,
                               const ModelSpec& spec, const ParameterLayout& layout, const PenaltyConfig& pen,
                               const GradientOptions& gopts) {
    try {
        const ObjectiveValue v = evaluate_objective(x, data, spec, layout, pen, gopts);
        grad = -v.gradient;
        return -v.objective;
    } catch (const NumericalError&) {
        grad.setConstant(std::numeric_limits<double>::quiet_NaN());
        return std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
        grad.setConstant(std::numeric_limits<double>::quiet_NaN());
        return std::numeric_limits<double>::infinity();
    }
}

// Newton steps on the gradient with the FD Hessian, accepted while the gradient
// norm falls. Used when L-BFGS stalls where the objective no longer resolves
// progress (heavily fused penalty groups).
bool newton_polish(LbfgsResult& r, const ObjectiveFn& fn, double grad_tol, int max_steps = 20) {
    auto grad_of = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd g(x.size());
        (void)fn(x, g);
        return g;
    };
    for (int it = 0; it < max_steps; ++it) {
        const double gnorm = r.grad.lpNorm<Eigen::Infinity>();
        if (gnorm <= grad_tol) {
            return true;
        }
        const HessianResult h = numerical_hessian(grad_of, r.x);
        if (!h.H.allFinite()) {
            return false;
        }
        const Eigen::VectorXd step = h.H.ldlt().solve(-r.grad);
        if (!step.allFinite()) {
            return false;
        }
        bool accepted = false;
        for (double t = 1.0; t > 1e-3; t *= 0.5) {
            Eigen::VectorXd g(r.x.size());
            const Eigen::VectorXd x = r.x + t * step;
            const double f = fn(x, g);
            if (std::isfinite(f) && g.allFinite() && g.lpNorm<Eigen::Infinity>() < gnorm &&
                f <= r.f + 1e-10 * std::abs(r.f)) {
                r.x = x;
                r.f = f;
                r.grad = g;
                ++r.n_iter;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            return false;
        }
    }
    return r.grad.lpNorm<Eigen::Infinity>() <= grad_tol;
}

}  // namespace

FitResult fit(const Dataset& data, const ModelSpec& spec, const PenaltyConfig& pen, const FitConfig& cfg,
              const std::optional<Eigen::VectorXd>& start) {
    spec.validate();
    data.validate();
    cfg.validate();
    const ParameterLayout layout(spec);
    pen.validate(layout);
    const GradientOptions gopts = cfg.gradient_options();

    const Eigen::VectorXd base = start ? *start : default_start(data, spec, layout);
    if (base.size() != layout.size()) {
        throw SpecError("starting vector does not match the model");
    }

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto jittered = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd out = x;
        for (Index k = 0; k < out.size(); ++k) {
            out(k) += cfg.start_jitter * normal(rng);
        }
        return out;
    };

    LbfgsOptions lopts;
    lopts.max_iter = cfg.max_iter;
    lopts.grad_tol = cfg.grad_tol;
    lopts.obj_rel_tol = cfg.obj_rel_tol;
    const ObjectiveFn fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        return safe_negative_objective(x, g, data, spec, layout, pen, gopts);
    };

    FitResult best;
    bool have_best = false;
    for (int s = 0; s < cfg.n_starts; ++s) {
        Eigen::VectorXd x0 = s == 0 ? base : jittered(base);
        // a start whose implied covariance fails is re-jittered up to five times
        for (int attempt = 0;; ++attempt) {
            try {
                (void)evaluate_objective(x0, data, spec, layout, pen, gopts);
                break;
            } catch (const NumericalError&) {
                if (attempt >= 5) {
                    throw;
                }
            } catch (const DomainError& e) {
                if (attempt >= 5) {
                    throw NumericalError(e.what());
                }
            }
            x0 = jittered(base);
        }

        LbfgsResult r = minimize_lbfgs(fn, x0, lopts);
        if (!r.converged && r.n_iter < cfg.max_iter && newton_polish(r, fn, cfg.grad_tol)) {
            r.converged = true;
            r.message = "gradient tolerance reached after Newton polish";
        }
        StartRecord rec;
        rec.start = s;
        rec.objective = -r.f;
        rec.converged = r.converged;
        rec.n_iter = r.n_iter;
        rec.grad_norm = r.grad.lpNorm<Eigen::Infinity>();
        rec.message = r.message;
        const ObjectiveValue v = evaluate_objective(r.x, data, spec, layout, pen, gopts);
        rec.loglik = v.loglik;
        best.per_start_records.push_back(rec);

        if (!have_best || rec.objective > best.penalized_obj) {
            have_best = true;
            best.estimates = r.x;
            best.loglik = v.loglik;
            best.penalty = v.penalty;
            best.penalized_obj = v.objective;
            best.converged = r.converged;
            best.n_iter = r.n_iter;
            best.grad_norm = rec.grad_norm;
            best.message = r.message;
        }
    }

    best.params_hat = unpack(best.estimates, spec, layout);
    best.std_errors = Eigen::VectorXd::Constant(layout.size(), std::numeric_limits<double>::quiet_NaN());
    best.se_caveat.assign(static_cast<std::size_t>(layout.size()), false);
    if (cfg.compute_se) {
        try {
            attach_standard_errors(best, data, spec, pen, gopts);
        } catch (const NumericalError&) {
            // estimates stand; standard errors stay NaN
        }
    }
    return best;
}

HessianResult numerical_hessian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                                const Eigen::VectorXd& x, double rel_step) {
    const Index k = x.size();
    HessianResult out;
    out.H.resize(k, k);
    for (Index j = 0; j < k; ++j) {
        const double h = rel_step * std::max(1.0, std::abs(x(j)));
        Eigen::VectorXd up = x;
        Eigen::VectorXd down = x;
        up(j) += h;
        down(j) -= h;
        out.H.col(j) = (grad(up) - grad(down)) / (up(j) - down(j));
    }
    out.asymmetry = k > 0 ? (out.H - out.H.transpose()).cwiseAbs().maxCoeff() : 0.0;
    out.H = 0.5 * (out.H + out.H.transpose()).eval();
    if (k > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.H, Eigen::EigenvaluesOnly);
        out.eigenvalues = eig.eigenvalues();
    }
    return out;
}

HessianResult numerical_hessian(const Eigen::VectorXd& packed, const Dataset& data, const ModelSpec& spec,
                                const PenaltyConfig& pen, const GradientOptions& opts) {
    const ParameterLayout layout(spec);
    return numerical_hessian(
        [&](const Eigen::VectorXd& x) { return evaluate_objective(x, data, spec, layout, pen, opts).gradient; },
        packed);
}

namespace {

struct PseudoInverse {
    Eigen::MatrixXd inverse;
    std::vector<bool> singular;
};

PseudoInverse symmetric_pseudo_inverse(const Eigen::MatrixXd& H) {
    const Index k = H.rows();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
    const Eigen::VectorXd& lam = eig.eigenvalues();
    const Eigen::MatrixXd& V = eig.eigenvectors();
    const double scale = k > 0 ? lam.cwiseAbs().maxCoeff() : 0.0;
    const double tol = 1e-10 * scale;

    PseudoInverse out;
    out.inverse = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd null_weight = Eigen::VectorXd::Zero(k);
    for (Index j = 0; j < k; ++j) {
        if (std::abs(lam(j)) > tol && scale > 0.0) {
            out.inverse += V.col(j) * V.col(j).transpose() / lam(j);
        } else {
            null_weight += V.col(j).cwiseAbs2();
        }
    }
    out.singular.resize(static_cast<std::size_t>(k));
    for (Index j = 0; j < k; ++j) {
        out.singular[static_cast<std::size_t>(j)] = null_weight(j) > 1e-6;
    }
    return out;
}

}  // namespace

Eigen::VectorXd sandwich_se(const Eigen::MatrixXd& H, const Eigen::MatrixXd& person_grads) {
    if (H.rows() != H.cols() || person_grads.cols() != H.rows()) {
        throw SpecError("Hessian and score matrix dimensions disagree");
    }
    const PseudoInverse pinv = symmetric_pseudo_inverse(H);
    const Eigen::MatrixXd B = person_grads.transpose() * person_grads;
    const Eigen::MatrixXd cov = pinv.inverse * B * pinv.inverse;
    Eigen::VectorXd se(H.rows());
    for (Index j = 0; j < H.rows(); ++j) {
        se(j) = pinv.singular[static_cast<std::size_t>(j)] || !(cov(j, j) >= 0.0)
                    ? std::numeric_limits<double>::quiet_NaN()
                    : std::sqrt(cov(j, j));
    }
    return se;
}

Eigen::VectorXd inverse_information_se(const Eigen::MatrixXd& H) {
    const PseudoInverse pinv = symmetric_pseudo_inverse(H);
    Eigen::VectorXd se(H.rows());
    for (Index j = 0; j < H.rows(); ++j) {
        const double v = -pinv.inverse(j, j);
        se(j) = pinv.singular[static_cast<std::size_t>(j)] || !(v > 0.0) ? std::numeric_limits<double>::quiet_NaN()
                                                                         : std::sqrt(v);
    }
    return se;
}

void attach_standard_errors(FitResult& fit, const Dataset& data, const ModelSpec& spec, const PenaltyConfig& pen,
                            const GradientOptions& opts) {
    const ParameterLayout layout(spec);
    // information and scores both come from the unpenalized likelihood
    const PenaltyConfig none;
    const HessianResult hess = numerical_hessian(fit.estimates, data, spec, none, opts);
    const Eigen::MatrixXd scores = person_gradients(fit.params_hat, data, spec, layout, opts);
    fit.std_errors = sandwich_se(hess.H, scores);

    fit.se_caveat.assign(static_cast<std::size_t>(layout.size()), false);
    if (pen.kind == PenaltyKind::none || pen.w0 <= 0.0) {
        return;
    }
    for (const auto& block : pen.blocks) {
        for (Index a : block) {
            for (Index b : block) {
                if (a != b && std::abs(fit.estimates(a) - fit.estimates(b)) < 1e-3) {
                    fit.se_caveat[static_cast<std::size_t>(a)] = true;
                }
            }
        }
    }
}

Index count_active_deltas(const Eigen::VectorXd& packed, const PenaltyConfig& pen, double threshold) {
    Index active = 0;
    for (const auto& block : pen.blocks) {
        if (block.empty()) {
            continue;
        }
        std::vector<double> v;
        v.reserve(block.size());
        for (Index k : block) {
            v.push_back(packed(k));
        }
        std::vector<double> sorted = v;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t mid = sorted.size() / 2;
        const double median = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
        for (double value : v) {
            if (std::abs(value - median) > threshold) {
                ++active;
            }
        }
    }
    return active;
}

double path_bic(double loglik, Index n_persons, const ParameterLayout& layout, const Eigen::VectorXd& packed,
                const PenaltyConfig& pen, double threshold) {
    Index k = layout.n_baseline();
    if (pen.blocks.empty()) {
        k = layout.size();
    } else {
        for (const auto& block : pen.blocks) {
            PenaltyConfig single;
            single.blocks = {block};
            const Index active = count_active_deltas(packed, single, threshold);
            k += std::min(static_cast<Index>(block.size()), 1 + active);
        }
    }
    return -2.0 * loglik + static_cast<double>(k) * std::log(static_cast<double>(n_persons));
}

std::vector<PathPoint> penalty_path(const Dataset& data, const ModelSpec& spec, const PenaltyConfig& base,
                                    const std::vector<double>& w0_grid, const FitConfig& cfg, double threshold) {
    if (w0_grid.empty()) {
        throw SpecError("penalty path needs at least one w0 value");
    }
    for (std::size_t k = 0; k < w0_grid.size(); ++k) {
        if (!(w0_grid[k] >= 0.0 && w0_grid[k] < 1.0) || (k > 0 && !(w0_grid[k] > w0_grid[k - 1]))) {
            throw SpecError("w0 grid must be strictly ascending within [0, 1)");
        }
    }
    const ParameterLayout layout(spec);
    FitConfig path_cfg = cfg;
    path_cfg.compute_se = false;

    std::vector<PathPoint> out;
    std::optional<Eigen::VectorXd> warm;
    for (double w0 : w0_grid) {
        PathPoint pt;
        pt.w0 = w0;
        PenaltyConfig pen = base;
        pen.w0 = w0;
        try {
            pt.fit = fit(data, spec, pen, path_cfg, warm);
            warm = pt.fit.estimates;
            pt.active_deltas = count_active_deltas(pt.fit.estimates, pen, threshold);
            pt.bic = path_bic(pt.fit.loglik, data.n_persons(), layout, pt.fit.estimates, pen, threshold);
            pt.status = pt.fit.converged ? "ok" : "not_converged";
        } catch (const std::exception& e) {
            pt.status = std::string("failed: ") + e.what();
            pt.bic = std::numeric_limits<double>::quiet_NaN();
        }
        out.push_back(std::move(pt));
    }
    return out;
}

}  // namespace mnlfa
