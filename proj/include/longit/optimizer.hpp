#ifndef LONGIT_OPTIMIZER_HPP
#define LONGIT_OPTIMIZER_HPP

#include <Eigen/Dense>

#include <functional>

namespace longit {

// Objective for minimization: returns f(x) and, when grad != nullptr, fills
// the gradient. May return +inf outside the feasible region; the line
// search backtracks out of such points.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd* grad)>;

struct OptimOptions {
    int max_iterations = 500;
    double grad_tol = 1e-6;  // infinity norm on the working (transformed) scale
    double f_tol = 1e-12;    // relative function decrease counted as a stall
    double initial_step = 1.0;
    double max_step = 2.0;  // cap on the infinity norm of a single move
};

struct OptimResult {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd grad;
    int iterations = 0;
    bool converged = false;
};

// Dense BFGS with backtracking Armijo line search.
[[nodiscard]] OptimResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0,
                                        const OptimOptions& opts = {});

// Central finite-difference gradient, for checking analytic gradients.
[[nodiscard]] Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x,
                                          double h = 1e-5);

}  // namespace longit

#endif
