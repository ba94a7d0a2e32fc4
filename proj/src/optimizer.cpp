#include "mnlfa/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <vector>
#include <stdexcept>

namespace mnlfa {

namespace {

struct LinePoint {
    double step = 0.0;
    double f = 0.0;
    double slope = 0.0;  // directional derivative
    Eigen::VectorXd grad;
    bool finite = true;
};

class LineSearch {
public:
    LineSearch(const ObjectiveFn& fn, const Eigen::VectorXd& x, const Eigen::VectorXd& dir, const LinePoint& origin,
               const LbfgsOptions& opts, int& evals)
        : fn_(fn), x_(x), dir_(dir), origin_(origin), opts_(opts), evals_(evals) {}

    // Returns true and fills `out` when a strong-Wolfe point (or at least a
    // sufficient-decrease point) is found.
    bool run(double initial_step, LinePoint& out) {
        LinePoint prev = origin_;
        double step = initial_step;
        for (int i = 0; i < opts_.max_line_search; ++i) {
            LinePoint cur = evaluate(step);
            if (approximate_wolfe(cur)) {
                out = std::move(cur);
                return true;
            }
            if (!cur.finite || cur.f > origin_.f + opts_.c1 * step * origin_.slope || (i > 0 && cur.f >= prev.f)) {
                return zoom(prev, cur, out);
            }
            if (std::abs(cur.slope) <= -opts_.c2 * origin_.slope) {
                out = std::move(cur);
                return true;
            }
            if (cur.slope >= 0.0) {
                return zoom(cur, prev, out);
            }
            prev = std::move(cur);
            step *= 2.0;
        }
        return accept_best(out);
    }

private:
    LinePoint evaluate(double step) {
        LinePoint p;
        p.step = step;
        p.grad.resize(x_.size());
        ++evals_;
        p.f = fn_(x_ + step * dir_, p.grad);
        p.finite = std::isfinite(p.f) && p.grad.allFinite();
        if (!p.finite) {
            p.f = std::numeric_limits<double>::infinity();
            p.slope = 0.0;
        } else {
            p.slope = p.grad.dot(dir_);
            if (p.f < origin_.f + opts_.c1 * step * origin_.slope && (!best_ || p.f < best_->f)) {
                best_ = p;
            }
        }
        return p;
    }

    bool sufficient(const LinePoint& p) const {
        return p.finite && p.f <= origin_.f + opts_.c1 * p.step * origin_.slope;
    }

    // Hager-Zhang approximate Wolfe conditions: near the optimum the decrease in
    // f drops below rounding, so only a small relative increase is tolerated and
    // the slope must shrink.
    bool approximate_wolfe(const LinePoint& p) const {
        return p.finite && p.f <= origin_.f + opts_.approx_wolfe_eps * std::abs(origin_.f) &&
               std::abs(p.slope) <= -opts_.c2 * origin_.slope;
    }

    bool zoom(LinePoint lo, LinePoint hi, LinePoint& out) {
        for (int i = 0; i < opts_.max_line_search; ++i) {
            const double a = lo.step;
            const double b = hi.step;
            double trial = 0.5 * (a + b);
            if (hi.finite) {
                // quadratic through (a, f_lo, slope_lo) and (b, f_hi)
                const double d = b - a;
                const double denom = 2.0 * (hi.f - lo.f - lo.slope * d);
                if (denom > 0.0) {
                    trial = a - lo.slope * d * d / denom;
                }
            }
            const double lower = std::min(a, b);
            const double upper = std::max(a, b);
            const double margin = 0.1 * (upper - lower);
            trial = std::clamp(trial, lower + margin, upper - margin);
            if (upper - lower < 1e-16 * std::max(1.0, upper)) {
                break;
            }

            LinePoint cur = evaluate(trial);
            if (approximate_wolfe(cur)) {
                out = std::move(cur);
                return true;
            }
            if (!sufficient(cur) || cur.f >= lo.f) {
                hi = std::move(cur);
            } else {
                if (std::abs(cur.slope) <= -opts_.c2 * origin_.slope) {
                    out = std::move(cur);
                    return true;
                }
                if (cur.slope * (hi.step - lo.step) >= 0.0) {
                    hi = lo;
                }
                lo = std::move(cur);
            }
        }
        return accept_best(out);
    }

    bool accept_best(LinePoint& out) {
        if (best_) {
            out = *best_;
            return true;
        }
        return false;
    }

    const ObjectiveFn& fn_;
    const Eigen::VectorXd& x_;
    const Eigen::VectorXd& dir_;
    const LinePoint& origin_;
    const LbfgsOptions& opts_;
    int& evals_;
    std::optional<LinePoint> best_;
};

}  // namespace

LbfgsResult minimize_lbfgs(const ObjectiveFn& fn, const Eigen::VectorXd& x0, const LbfgsOptions& opts) {
    LbfgsResult res;
    res.x = x0;
    res.grad.resize(x0.size());
    res.f = fn(res.x, res.grad);
    res.n_evals = 1;
    if (!std::isfinite(res.f) || !res.grad.allFinite()) {
        throw std::runtime_error("objective is not finite at the starting point");
    }

    std::deque<Eigen::VectorXd> s_hist;
    std::deque<Eigen::VectorXd> y_hist;
    std::deque<double> rho_hist;
    int stalled = 0;
    bool reset_once = false;
    double best_gnorm = res.grad.lpNorm<Eigen::Infinity>();

    for (res.n_iter = 0; res.n_iter < opts.max_iter; ++res.n_iter) {
        if (res.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
            res.converged = true;
            res.message = "gradient tolerance reached";
            return res;
        }

        // two-loop recursion
        Eigen::VectorXd q = res.grad;
        const auto m = static_cast<int>(s_hist.size());
        std::vector<double> alpha(static_cast<std::size_t>(m));
        for (int i = m - 1; i >= 0; --i) {
            const auto k = static_cast<std::size_t>(i);
            alpha[k] = rho_hist[k] * s_hist[k].dot(q);
            q -= alpha[k] * y_hist[k];
        }
        double initial_step = 1.0;
        if (m > 0) {
            q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        } else {
            initial_step = std::min(1.0, 1.0 / res.grad.lpNorm<Eigen::Infinity>());
        }
        for (int i = 0; i < m; ++i) {
            const auto k = static_cast<std::size_t>(i);
            const double beta = rho_hist[k] * y_hist[k].dot(q);
            q += (alpha[k] - beta) * s_hist[k];
        }
        Eigen::VectorXd dir = -q;
        LinePoint origin;
        origin.f = res.f;
        origin.slope = res.grad.dot(dir);
        if (!(origin.slope < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = -res.grad;
            origin.slope = res.grad.dot(dir);
            initial_step = std::min(1.0, 1.0 / res.grad.lpNorm<Eigen::Infinity>());
        }

        LinePoint next;
        LineSearch ls(fn, res.x, dir, origin, opts, res.n_evals);
        if (!ls.run(initial_step, next)) {
            if (!reset_once && !s_hist.empty()) {
                // retry once from steepest descent
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
                reset_once = true;
                continue;
            }
            res.message = "line search failed";
            res.converged = res.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol;
            return res;
        }
        reset_once = false;

        Eigen::VectorXd s = next.step * dir;
        Eigen::VectorXd y = next.grad - res.grad;
        const double sy = s.dot(y);
        const double f_prev = res.f;
        res.x += s;
        res.f = next.f;
        res.grad = next.grad;

        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opts.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }

        // small objective changes count as a stall only while the gradient stops improving
        const double gnorm = res.grad.lpNorm<Eigen::Infinity>();
        const bool grad_progress = gnorm < 0.5 * best_gnorm;
        best_gnorm = std::min(best_gnorm, gnorm);
        if (std::abs(f_prev - res.f) <= opts.obj_rel_tol * std::max(1.0, std::abs(res.f)) && !grad_progress) {
            if (++stalled >= opts.stall_window) {
                res.converged = res.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol;
                res.message = "objective change below tolerance";
                ++res.n_iter;
                return res;
            }
        } else {
            stalled = 0;
        }
    }
    res.converged = res.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol;
    res.message = res.converged ? "gradient tolerance reached" : "iteration limit reached";
    return res;
}

}  // namespace mnlfa
