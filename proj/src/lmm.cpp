#include "longit/lmm.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "longit/rng.hpp"

namespace longit {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double FitResult::fixed_by_name(const std::string& name) const {
    for (std::size_t k = 0; k < fixed_names.size(); ++k) {
        if (fixed_names[k] == name) return fixed[static_cast<int>(k)];
    }
    throw std::invalid_argument("no fixed effect named " + name);
}

double FitResult::var_by_name(const std::string& name) const {
    for (std::size_t k = 0; k < var_names.size(); ++k) {
        if (var_names[k] == name) return var_values[static_cast<int>(k)];
    }
    throw std::invalid_argument("no variance parameter named " + name);
}

double lmm_loglik(const LongitudinalDataset& ds, const LmmSpec& spec, const Eigen::VectorXd& beta,
                  const Eigen::MatrixXd& psi, double sigma_eps) {
    const double s2 = sigma_eps * sigma_eps;
    double ll = 0.0;
    for (const auto& subj : ds.subjects) {
        const int n = subj.n_visits();
        Eigen::MatrixXd x = build_design(spec.fixed, subj);
        Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(subj.y.data(), n);
        Eigen::VectorXd r = y - x * beta;
        Eigen::MatrixXd v = s2 * Eigen::MatrixXd::Identity(n, n);
        if (psi.rows() > 0) {
            Eigen::MatrixXd z = build_design(spec.random, subj);
            v += z * psi * z.transpose();
        }
        Eigen::LLT<Eigen::MatrixXd> llt(v);
        if (llt.info() != Eigen::Success) return -kInf;
        double logdet = 0.0;
        for (int j = 0; j < n; ++j) logdet += 2.0 * std::log(llt.matrixL()(j, j));
        Eigen::VectorXd q = llt.solve(r);
        ll += -0.5 * (n * kLog2Pi + logdet + r.dot(q));
    }
    return ll;
}

namespace detail {

LmmProfileObjective::LmmProfileObjective(const LongitudinalDataset& ds, const LmmSpec& spec) {
    q_ = static_cast<int>(spec.random.size());
    p_ = static_cast<int>(spec.fixed.size());
    corr_ = CorrStructure::full(q_);
    designs_.reserve(ds.subjects.size());
    for (const auto& subj : ds.subjects) {
        SubjectDesign d;
        d.x = build_design(spec.fixed, subj);
        d.z = q_ > 0 ? build_design(spec.random, subj)
                     : Eigen::MatrixXd(subj.n_visits(), 0);
        d.y = Eigen::Map<const Eigen::VectorXd>(subj.y.data(), subj.n_visits());
        n_total_ += subj.n_visits();
        designs_.push_back(std::move(d));
    }
    // Identifiability: the stacked fixed design must have full column rank.
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p_, p_);
    for (const auto& d : designs_) xtx += d.x.transpose() * d.x;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
    if (lu.rank() < p_) {
        throw std::invalid_argument("fit_lmm: rank-deficient fixed-effect design");
    }
}

void LmmProfileObjective::unpack(const Eigen::VectorXd& theta, Eigen::MatrixXd& psi,
                                 double& sigma_eps) const {
    Eigen::VectorXd sds = theta.head(q_).array().exp();
    Eigen::MatrixXd c = corr_.build(theta.segment(q_, corr_.n_free()));
    psi = sds.asDiagonal() * c * sds.asDiagonal();
    sigma_eps = std::exp(theta[n_params() - 1]);
}

bool LmmProfileObjective::assemble(const Eigen::VectorXd& theta, Eigen::MatrixXd& psi,
                                   double& sigma2, Eigen::MatrixXd& xvx, Eigen::VectorXd& xvy,
                                   double& yvy, double& logdet) const {
    double sigma_eps = 0.0;
    unpack(theta, psi, sigma_eps);
    sigma2 = sigma_eps * sigma_eps;
    xvx = Eigen::MatrixXd::Zero(p_, p_);
    xvy = Eigen::VectorXd::Zero(p_);
    yvy = 0.0;
    logdet = 0.0;
    for (const auto& d : designs_) {
        const int n = static_cast<int>(d.y.size());
        Eigen::MatrixXd v = sigma2 * Eigen::MatrixXd::Identity(n, n);
        if (q_ > 0) v += d.z * psi * d.z.transpose();
        Eigen::LLT<Eigen::MatrixXd> llt(v);
        if (llt.info() != Eigen::Success) return false;
        for (int j = 0; j < n; ++j) logdet += 2.0 * std::log(llt.matrixL()(j, j));
        Eigen::MatrixXd vix = llt.solve(d.x);
        Eigen::VectorXd viy = llt.solve(d.y);
        xvx.noalias() += d.x.transpose() * vix;
        xvy.noalias() += d.x.transpose() * viy;
        yvy += d.y.dot(viy);
    }
    return true;
}

Eigen::VectorXd LmmProfileObjective::beta_at(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd psi, xvx;
    Eigen::VectorXd xvy;
    double sigma2 = 0.0, yvy = 0.0, logdet = 0.0;
    if (!assemble(theta, psi, sigma2, xvx, xvy, yvy, logdet)) {
        throw std::runtime_error("beta_at: covariance not positive definite");
    }
    return xvx.ldlt().solve(xvy);
}

Eigen::MatrixXd LmmProfileObjective::beta_cov_at(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd psi, xvx;
    Eigen::VectorXd xvy;
    double sigma2 = 0.0, yvy = 0.0, logdet = 0.0;
    if (!assemble(theta, psi, sigma2, xvx, xvy, yvy, logdet)) {
        throw std::runtime_error("beta_cov_at: covariance not positive definite");
    }
    return xvx.ldlt().solve(Eigen::MatrixXd::Identity(p_, p_));
}

double LmmProfileObjective::operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
    Eigen::MatrixXd psi, xvx;
    Eigen::VectorXd xvy;
    double sigma2 = 0.0, yvy = 0.0, logdet = 0.0;
    if (!assemble(theta, psi, sigma2, xvx, xvy, yvy, logdet)) return kInf;

    Eigen::VectorXd beta = xvx.ldlt().solve(xvy);
    const double quad = yvy - 2.0 * beta.dot(xvy) + beta.dot(xvx * beta);
    const double nll = 0.5 * (logdet + quad + static_cast<double>(n_total_) * kLog2Pi);

    if (grad != nullptr) {
        // Envelope theorem: d/dtheta of the profiled objective equals the
        // partial derivative at beta-hat.
        const int np = n_params();
        grad->setZero(np);
        Eigen::VectorXd sds = theta.head(q_).array().exp();
        const int nc = corr_.n_free();
        for (const auto& d : designs_) {
            const int n = static_cast<int>(d.y.size());
            Eigen::MatrixXd v = sigma2 * Eigen::MatrixXd::Identity(n, n);
            if (q_ > 0) v += d.z * psi * d.z.transpose();
            Eigen::LLT<Eigen::MatrixXd> llt(v);
            Eigen::VectorXd r = d.y - d.x * beta;
            Eigen::VectorXd q = llt.solve(r);
            Eigen::MatrixXd vinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
            if (q_ > 0) {
                Eigen::MatrixXd viz = llt.solve(d.z);
                Eigen::MatrixXd p = d.z.transpose() * viz;  // Z' V^-1 Z
                Eigen::VectorXd v1 = d.z.transpose() * q;   // Z' V^-1 r
                // log-sd parameters: dPsi = E_k Psi + Psi E_k
                for (int k = 0; k < q_; ++k) {
                    double tr = 2.0 * p.row(k).dot(psi.row(k));
                    double qd = 2.0 * v1[k] * psi.row(k).dot(v1);
                    (*grad)[k] += 0.5 * tr - 0.5 * qd;
                }
                // correlation parameters: dPsi = (1-rho^2) sd_a sd_b (E_ab + E_ba)
                for (int m = 0; m < nc; ++m) {
                    const auto [a, b] = corr_.free_pairs[m];
                    const double rho = std::tanh(theta[q_ + m]);
                    const double scale = (1.0 - rho * rho) * sds[a] * sds[b];
                    double tr = 2.0 * scale * p(a, b);
                    double qd = 2.0 * scale * v1[a] * v1[b];
                    (*grad)[q_ + m] += 0.5 * tr - 0.5 * qd;
                }
            }
            // log sigma_eps: dV = 2 sigma^2 I
            (*grad)[np - 1] += 0.5 * 2.0 * sigma2 * vinv.trace() - 0.5 * 2.0 * sigma2 * q.dot(q);
        }
    }
    return nll;
}

}  // namespace detail

namespace {

Eigen::VectorXd lmm_start_theta(const detail::LmmProfileObjective& obj,
                                const LongitudinalDataset& ds, const LmmSpec& spec) {
    // Moment start: OLS residual variance split evenly between the random
    // intercept scale and the residual.
    const int p = static_cast<int>(spec.fixed.size());
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
    double yty = 0.0;
    long n_total = 0;
    for (const auto& subj : ds.subjects) {
        Eigen::MatrixXd x = build_design(spec.fixed, subj);
        Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(subj.y.data(), subj.n_visits());
        xtx += x.transpose() * x;
        xty += x.transpose() * y;
        yty += y.dot(y);
        n_total += subj.n_visits();
    }
    Eigen::VectorXd beta = xtx.ldlt().solve(xty);
    double rss = yty - beta.dot(xty);
    double var = std::max(rss / std::max<long>(n_total - p, 1), 1e-6);

    const int q = obj.n_random();
    Eigen::VectorXd theta(obj.n_params());
    theta.setZero();
    // Scale each random term by the spread of its design column.
    std::vector<double> col_ms(q, 0.0);
    for (const auto& subj : ds.subjects) {
        Eigen::MatrixXd z = q > 0 ? build_design(spec.random, subj) : Eigen::MatrixXd();
        for (int k = 0; k < q; ++k) col_ms[k] += z.col(k).squaredNorm();
    }
    for (int k = 0; k < q; ++k) {
        double rms = std::sqrt(std::max(col_ms[k] / std::max<long>(n_total, 1), 1e-8));
        theta[k] = 0.5 * std::log(var / 2.0) - std::log(rms);
    }
    theta[obj.n_params() - 1] = 0.5 * std::log(var / 2.0);
    return theta;
}

}  // namespace

FitResult fit_lmm(const LongitudinalDataset& ds, const LmmSpec& spec, const FitOptions& opts) {
    if (ds.subjects.size() < 2) throw std::invalid_argument("fit_lmm: need at least 2 subjects");
    detail::LmmProfileObjective obj(ds, spec);
    Objective f = [&obj](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return obj(x, g); };

    Eigen::VectorXd theta0 = lmm_start_theta(obj, ds, spec);
    OptimResult best;
    best.value = kInf;
    auto rng = make_stream(opts.jitter_seed, 0);
    std::normal_distribution<double> jitter(0.0, opts.start_jitter);
    for (int s = 0; s < std::max(opts.n_starts, 1); ++s) {
        Eigen::VectorXd start = theta0;
        if (s > 0) {
            for (int k = 0; k < start.size(); ++k) start[k] += jitter(rng);
        }
        OptimResult r = minimize_bfgs(f, start, opts.optim);
        const bool better = (r.converged && !best.converged) ||
                            (r.converged == best.converged && r.value < best.value);
        if (better) best = r;
    }

    FitResult fit;
    const int q = obj.n_random();
    const int np = obj.n_params();
    obj.unpack(best.x, fit.psi, fit.sigma_eps);
    fit.loglik = -best.value;
    fit.converged = best.converged;
    fit.iterations = best.iterations;
    fit.grad_norm = best.grad.size() > 0 ? best.grad.lpNorm<Eigen::Infinity>() : kInf;

    fit.fixed_names = term_labels(spec.fixed);
    fit.fixed = obj.beta_at(best.x);
    Eigen::MatrixXd bcov = obj.beta_cov_at(best.x);
    fit.fixed_se = bcov.diagonal().array().max(0.0).sqrt();

    // Natural-scale variance parameters with delta-method SEs from the
    // numeric observed information of the profiled likelihood.
    const auto& cs = obj.corr_structure();
    fit.var_names.clear();
    auto rlabels = term_labels(spec.random);
    for (int k = 0; k < q; ++k) fit.var_names.push_back("sd(" + rlabels[k] + ")");
    for (const auto& [a, b] : cs.free_pairs) {
        fit.var_names.push_back("corr(" + rlabels[a] + "," + rlabels[b] + ")");
    }
    fit.var_names.push_back("sigma_eps");
    fit.var_values.resize(np);
    for (int k = 0; k < q; ++k) fit.var_values[k] = std::exp(best.x[k]);
    for (int m = 0; m < cs.n_free(); ++m) fit.var_values[q + m] = std::tanh(best.x[q + m]);
    fit.var_values[np - 1] = fit.sigma_eps;

    fit.var_se = Eigen::VectorXd::Constant(np, std::numeric_limits<double>::quiet_NaN());
    if (opts.compute_se && fit.converged) {
        const double h = 1e-4;
        Eigen::MatrixXd hess(np, np);
        for (int k = 0; k < np; ++k) {
            Eigen::VectorXd xp = best.x, xm = best.x;
            xp[k] += h;
            xm[k] -= h;
            Eigen::VectorXd gp(np), gm(np);
            obj(xp, &gp);
            obj(xm, &gm);
            hess.col(k) = (gp - gm) / (2.0 * h);
        }
        hess = ((hess + hess.transpose()) / 2.0).eval();
        Eigen::MatrixXd cov = hess.ldlt().solve(Eigen::MatrixXd::Identity(np, np));
        Eigen::VectorXd se_t = cov.diagonal().array().max(0.0).sqrt();
        for (int k = 0; k < q; ++k) fit.var_se[k] = fit.var_values[k] * se_t[k];
        for (int m = 0; m < cs.n_free(); ++m) {
            const double rho = fit.var_values[q + m];
            fit.var_se[q + m] = (1.0 - rho * rho) * se_t[q + m];
        }
        fit.var_se[np - 1] = fit.sigma_eps * se_t[np - 1];
    }
    return fit;
}

Eigen::MatrixXd predict_blups(const FitResult& fit, const LongitudinalDataset& ds,
                              const LmmSpec& spec) {
    const int q = static_cast<int>(spec.random.size());
    const double s2 = fit.sigma_eps * fit.sigma_eps;
    Eigen::MatrixXd out(static_cast<int>(ds.subjects.size()), q);
    for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
        const auto& subj = ds.subjects[i];
        const int n = subj.n_visits();
        Eigen::MatrixXd x = build_design(spec.fixed, subj);
        Eigen::MatrixXd z = build_design(spec.random, subj);
        Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(subj.y.data(), n);
        Eigen::VectorXd r = y - x * fit.fixed;
        Eigen::MatrixXd v = z * fit.psi * z.transpose() + s2 * Eigen::MatrixXd::Identity(n, n);
        out.row(static_cast<int>(i)) = (fit.psi * z.transpose() * v.llt().solve(r)).transpose();
    }
    return out;
}

double icc(const FitResult& fit, const LmmSpec& spec) {
    if (spec.random.empty() || spec.random.front().kind != TermKind::Intercept) {
        throw std::invalid_argument("icc: model has no random intercept");
    }
    const double vb = fit.psi(0, 0);
    return vb / (vb + fit.sigma_eps * fit.sigma_eps);
}

}  // namespace longit
