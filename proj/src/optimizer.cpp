#include "longit/optimizer.hpp"

#include <cmath>
#include <limits>

namespace longit {

namespace {

bool finite(double v) { return std::isfinite(v); }

}  // namespace

OptimResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0, const OptimOptions& opts) {
    const int n = static_cast<int>(x0.size());
    OptimResult res;
    res.x = x0;
    res.grad.resize(n);

    Eigen::VectorXd g(n);
    double fx = f(res.x, &g);
    if (!finite(fx)) {
        // Infeasible start: shrink toward the origin a few times.
        for (int k = 0; k < 30 && !finite(fx); ++k) {
            res.x *= 0.5;
            fx = f(res.x, &g);
        }
        if (!finite(fx)) {
            res.value = fx;
            res.grad = g;
            return res;
        }
    }

    Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
    double step0 = opts.initial_step;
    bool scaled = false;
    int stalls = 0;

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        res.iterations = iter;
        if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
            res.converged = true;
            break;
        }

        Eigen::VectorXd dir = -(h_inv * g);
        double slope = g.dot(dir);
        if (!finite(slope) || slope >= 0.0) {
            // Reset curvature estimate if the direction is not a descent.
            h_inv.setIdentity();
            scaled = false;
            dir = -g;
            slope = g.dot(dir);
        }

        // Backtracking Armijo search, with the move capped so one iteration
        // cannot jump across the parameter space (the transformed scales are
        // logs and atanh's, where a step of max_step is already enormous).
        double step = step0;
        const double dir_max = dir.lpNorm<Eigen::Infinity>();
        if (finite(dir_max) && step * dir_max > opts.max_step) step = opts.max_step / dir_max;
        const double c1 = 1e-4;
        Eigen::VectorXd x_new;
        double f_new = std::numeric_limits<double>::infinity();
        bool ok = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = res.x + step * dir;
            f_new = f(x_new, nullptr);
            if (finite(f_new) && f_new <= fx + c1 * step * slope) {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if (!ok) {
            // No further progress possible along any tried step.
            break;
        }

        Eigen::VectorXd g_new(n);
        f(x_new, &g_new);

        // Near the optimum the Armijo threshold can underflow against |f|,
        // letting numerically null steps through; treat repeated negligible
        // decreases as termination rather than burning the iteration budget.
        if (fx - f_new <= opts.f_tol * (std::abs(fx) + 1.0)) {
            if (++stalls >= 3) {
                res.x = x_new;
                fx = f_new;
                g = g_new;
                // Achievable gradient precision scales with |f|; judge the
                // stalled point by a relative gradient criterion.
                res.converged = g.lpNorm<Eigen::Infinity>() <
                                std::max(opts.grad_tol, 1e-6 * (std::abs(fx) + 1.0));
                break;
            }
        } else {
            stalls = 0;
        }

        Eigen::VectorXd s = x_new - res.x;
        Eigen::VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        if (finite(sy) && sy > 1e-12 * s.norm() * yv.norm()) {
            if (!scaled) {
                // Shanno scaling of the initial inverse Hessian.
                h_inv *= sy / yv.squaredNorm();
                scaled = true;
            }
            const double rho = 1.0 / sy;
            Eigen::MatrixXd i = Eigen::MatrixXd::Identity(n, n);
            h_inv = (i - rho * s * yv.transpose()) * h_inv * (i - rho * yv * s.transpose()) +
                    rho * s * s.transpose();
        }

        res.x = x_new;
        fx = f_new;
        g = g_new;
        step0 = 1.0;
    }

    res.value = fx;
    res.grad = g;
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) res.converged = true;
    return res;
}

Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x, double h) {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd g(n);
    for (int k = 0; k < n; ++k) {
        Eigen::VectorXd xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        g[k] = (f(xp, nullptr) - f(xm, nullptr)) / (2.0 * h);
    }
    return g;
}

}  // namespace longit
