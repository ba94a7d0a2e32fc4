#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace mnlfa {

/// Objective for minimization: returns f(x) and writes its gradient. Returning a
/// non-finite value marks x as infeasible; the line search then backs off.
using ObjectiveFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct LbfgsOptions {
    int max_iter = 500;
    int memory = 10;
    double grad_tol = 1e-5;       // infinity norm
    double obj_rel_tol = 1e-8;
    int stall_window = 10;        // iterations under obj_rel_tol without the gradient halving
    double c1 = 1e-4;
    double c2 = 0.9;
    int max_line_search = 40;
    double approx_wolfe_eps = 1e-10;  // relative increase of f tolerated by approximate Wolfe steps
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double f = 0.0;
    Eigen::VectorXd grad;
    int n_iter = 0;
    int n_evals = 0;
    bool converged = false;
    std::string message;
};

/// Limited-memory BFGS with a strong-Wolfe line search. Requires f(x0) finite.
[[nodiscard]] LbfgsResult minimize_lbfgs(const ObjectiveFn& fn, const Eigen::VectorXd& x0,
                                         const LbfgsOptions& opts = {});

}  // namespace mnlfa
