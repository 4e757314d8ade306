#include "longit/joint.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "longit/rng.hpp"

namespace longit {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogDLo = -6.907755278982137;  // log 1e-3
constexpr double kLogDHi = 4.605170185988092;   // log 1e2
constexpr double kC0Max = 0.95;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

double range_from_phi(double phi) {
    return std::exp(kLogDLo + (kLogDHi - kLogDLo) * sigmoid(phi));
}
double phi_from_range(double d) {
    double u = (std::log(d) - kLogDLo) / (kLogDHi - kLogDLo);
    u = std::min(std::max(u, 1e-9), 1.0 - 1e-9);
    return logit(u);
}
double nugget_from_phi(double phi) { return kC0Max * sigmoid(phi); }
double phi_from_nugget(double c0) {
    double u = std::min(std::max(c0 / kC0Max, 1e-9), 1.0 - 1e-9);
    return logit(u);
}

Eigen::MatrixXd omega_from_gaps(const Eigen::MatrixXd& gaps, const ResidualSpec& resid) {
    const int n = static_cast<int>(gaps.rows());
    if (resid.family == CorrFamily::iid) return Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd omega(n, n);
    for (int i = 0; i < n; ++i) {
        omega(i, i) = 1.0;
        for (int j = 0; j < i; ++j) {
            omega(i, j) = omega(j, i) =
                (1.0 - resid.nugget_c0) * std::exp(-gaps(i, j) / resid.range_d);
        }
    }
    return omega;
}

}  // namespace

Eigen::MatrixXd omega_exponential(const std::vector<double>& times, double d, double c0) {
    if (!(d > 0.0)) throw std::invalid_argument("omega_exponential: range d must be positive");
    if (!(c0 >= 0.0 && c0 < 1.0)) throw std::invalid_argument("omega_exponential: c0 must lie in [0, 1)");
    const int n = static_cast<int>(times.size());
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(times[i])) throw std::invalid_argument("omega_exponential: non-finite time");
        for (int j = 0; j < i; ++j) {
            if (c0 == 0.0 && times[i] == times[j]) {
                std::ostringstream ss;
                ss << "omega_exponential: duplicate times at indices (" << j << "," << i
                   << ") make the matrix singular with c0 = 0";
                throw std::invalid_argument(ss.str());
            }
        }
    }
    Eigen::MatrixXd omega(n, n);
    for (int i = 0; i < n; ++i) {
        omega(i, i) = 1.0;
        for (int j = 0; j < i; ++j) {
            omega(i, j) = omega(j, i) = (1.0 - c0) * std::exp(-std::abs(times[i] - times[j]) / d);
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(omega);
    if (llt.info() != Eigen::Success) {
        throw std::invalid_argument("omega_exponential: matrix not positive definite");
    }
    return omega;
}

Eigen::MatrixXd assemble_sigma(const Eigen::Matrix2d& lambda, const Eigen::MatrixXd& omega) {
    const int n = static_cast<int>(omega.rows());
    if (omega.cols() != n) throw std::invalid_argument("assemble_sigma: omega must be square");
    Eigen::MatrixXd sigma(2 * n, 2 * n);
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            sigma.block(a * n, b * n, n, n) = lambda(a, b) * omega;
        }
    }
    return sigma;
}

double joint_loglik(const LongitudinalDataset& ds, const JointSpec& spec,
                    const Eigen::VectorXd& beta, const Eigen::VectorXd& alpha,
                    const Eigen::MatrixXd& psi, const ResidualSpec& residual) {
    residual.validate();
    const Eigen::Matrix2d lambda = residual.lambda();
    const int qy = static_cast<int>(spec.y_random.size());
    const int qr = static_cast<int>(spec.r_random.size());
    double ll = 0.0;
    for (const auto& subj : ds.subjects) {
        const int n = subj.n_visits();
        if (static_cast<int>(subj.r.size()) != n) {
            throw std::invalid_argument("joint_loglik: subject lacks matched R values");
        }
        Eigen::MatrixXd x = build_design(spec.y_fixed, subj);
        Eigen::MatrixXd g = build_design(spec.r_fixed, subj);
        Eigen::MatrixXd z = build_design(spec.y_random, subj);
        Eigen::MatrixXd lm = build_design(spec.r_random, subj);
        Eigen::VectorXd resp(2 * n);
        resp.head(n) = Eigen::Map<const Eigen::VectorXd>(subj.y.data(), n);
        resp.tail(n) = Eigen::Map<const Eigen::VectorXd>(subj.r.data(), n);
        Eigen::VectorXd mean(2 * n);
        mean.head(n) = x * beta;
        mean.tail(n) = g * alpha;
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2 * n, qy + qr);
        w.topLeftCorner(n, qy) = z;
        w.bottomRightCorner(n, qr) = lm;
        Eigen::MatrixXd omega;
        if (residual.family == CorrFamily::exponential) {
            omega = omega_exponential(subj.visit_times, residual.range_d, residual.nugget_c0);
        } else {
            omega = Eigen::MatrixXd::Identity(n, n);
        }
        Eigen::MatrixXd v = w * psi * w.transpose() + assemble_sigma(lambda, omega);
        Eigen::LLT<Eigen::MatrixXd> llt(v);
        if (llt.info() != Eigen::Success) return -kInf;
        double logdet = 0.0;
        for (int j = 0; j < 2 * n; ++j) logdet += 2.0 * std::log(llt.matrixL()(j, j));
        Eigen::VectorXd r = resp - mean;
        ll += -0.5 * (2 * n * kLog2Pi + logdet + r.dot(llt.solve(r)));
    }
    return ll;
}

namespace detail {

JointProfileObjective::JointProfileObjective(const LongitudinalDataset& ds, const JointSpec& spec) {
    qy_ = static_cast<int>(spec.y_random.size());
    q_ = spec.n_random();
    py_ = static_cast<int>(spec.y_fixed.size());
    p_ = py_ + static_cast<int>(spec.r_fixed.size());
    corr_ = spec.corr_structure();
    family_ = spec.family;

    designs_.reserve(ds.subjects.size());
    for (const auto& subj : ds.subjects) {
        const int n = subj.n_visits();
        if (static_cast<int>(subj.r.size()) != n) {
            throw std::invalid_argument(
                "fit_joint: recommended intervals missing; use the univariate fit instead");
        }
        SubjectDesign d;
        d.n = n;
        Eigen::MatrixXd x = build_design(spec.y_fixed, subj);
        Eigen::MatrixXd g = build_design(spec.r_fixed, subj);
        d.a = Eigen::MatrixXd::Zero(2 * n, p_);
        d.a.topLeftCorner(n, py_) = x;
        d.a.bottomRightCorner(n, p_ - py_) = g;
        d.w = Eigen::MatrixXd::Zero(2 * n, q_);
        d.w.topLeftCorner(n, qy_) = build_design(spec.y_random, subj);
        d.w.bottomRightCorner(n, q_ - qy_) = build_design(spec.r_random, subj);
        d.y.resize(2 * n);
        d.y.head(n) = Eigen::Map<const Eigen::VectorXd>(subj.y.data(), n);
        d.y.tail(n) = Eigen::Map<const Eigen::VectorXd>(subj.r.data(), n);
        d.gaps.resize(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                d.gaps(i, j) = std::abs(subj.visit_times[i] - subj.visit_times[j]);
            }
        }
        n_total_ += 2 * n;
        designs_.push_back(std::move(d));
    }

    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(p_, p_);
    for (const auto& d : designs_) ata += d.a.transpose() * d.a;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(ata);
    if (lu.rank() < p_) throw std::invalid_argument("fit_joint: rank-deficient fixed-effect design");
}

int JointProfileObjective::n_params() const {
    return q_ + corr_.n_free() + 3 + (family_ == CorrFamily::exponential ? 2 : 0);
}

void JointProfileObjective::unpack(const Eigen::VectorXd& theta, Eigen::MatrixXd& psi,
                                   ResidualSpec& resid) const {
    Eigen::VectorXd sds = theta.head(q_).array().exp();
    Eigen::MatrixXd c = corr_.build(theta.segment(q_, corr_.n_free()));
    psi = sds.asDiagonal() * c * sds.asDiagonal();
    const int base = q_ + corr_.n_free();
    resid.sigma_eps = std::exp(theta[base]);
    resid.sigma_zeta = std::exp(theta[base + 1]);
    resid.rho_eps = std::tanh(theta[base + 2]);
    resid.family = family_;
    if (family_ == CorrFamily::exponential) {
        resid.range_d = range_from_phi(theta[base + 3]);
        resid.nugget_c0 = nugget_from_phi(theta[base + 4]);
    } else {
        resid.range_d = 1.0;
        resid.nugget_c0 = 0.0;
    }
}

Eigen::VectorXd JointProfileObjective::pack(const Eigen::MatrixXd& psi,
                                            const ResidualSpec& resid) const {
    Eigen::VectorXd theta(n_params());
    Eigen::VectorXd sds = psi.diagonal().array().sqrt();
    for (int k = 0; k < q_; ++k) theta[k] = std::log(std::max(sds[k], 1e-8));
    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(q_, q_);
    for (int i = 0; i < q_; ++i) {
        for (int j = 0; j < q_; ++j) {
            if (sds[i] > 0 && sds[j] > 0) corr(i, j) = psi(i, j) / (sds[i] * sds[j]);
        }
    }
    theta.segment(q_, corr_.n_free()) = corr_.pack(corr);
    const int base = q_ + corr_.n_free();
    theta[base] = std::log(resid.sigma_eps);
    theta[base + 1] = std::log(resid.sigma_zeta);
    theta[base + 2] = std::atanh(resid.rho_eps);
    if (family_ == CorrFamily::exponential) {
        theta[base + 3] = phi_from_range(resid.range_d);
        theta[base + 4] = phi_from_nugget(resid.nugget_c0);
    }
    return theta;
}

bool JointProfileObjective::assemble(const Eigen::VectorXd& theta, Eigen::MatrixXd& psi,
                                     ResidualSpec& resid, Eigen::MatrixXd& ava,
                                     Eigen::VectorXd& avy, double& yvy, double& logdet) const {
    unpack(theta, psi, resid);
    const Eigen::Matrix2d lambda = resid.lambda();
    ava = Eigen::MatrixXd::Zero(p_, p_);
    avy = Eigen::VectorXd::Zero(p_);
    yvy = 0.0;
    logdet = 0.0;
    for (const auto& d : designs_) {
        const int n = d.n;
        Eigen::MatrixXd omega = omega_from_gaps(d.gaps, resid);
        Eigen::MatrixXd v = d.w * psi * d.w.transpose() + assemble_sigma(lambda, omega);
        Eigen::LLT<Eigen::MatrixXd> llt(v);
        if (llt.info() != Eigen::Success) return false;
        for (int j = 0; j < 2 * n; ++j) logdet += 2.0 * std::log(llt.matrixL()(j, j));
        Eigen::MatrixXd via = llt.solve(d.a);
        Eigen::VectorXd viy = llt.solve(d.y);
        ava.noalias() += d.a.transpose() * via;
        avy.noalias() += d.a.transpose() * viy;
        yvy += d.y.dot(viy);
    }
    return true;
}

Eigen::VectorXd JointProfileObjective::fixed_at(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd psi, ava;
    Eigen::VectorXd avy;
    ResidualSpec resid;
    double yvy = 0.0, logdet = 0.0;
    if (!assemble(theta, psi, resid, ava, avy, yvy, logdet)) {
        throw std::runtime_error("fixed_at: covariance not positive definite");
    }
    return ava.ldlt().solve(avy);
}

Eigen::MatrixXd JointProfileObjective::fixed_cov_at(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd psi, ava;
    Eigen::VectorXd avy;
    ResidualSpec resid;
    double yvy = 0.0, logdet = 0.0;
    if (!assemble(theta, psi, resid, ava, avy, yvy, logdet)) {
        throw std::runtime_error("fixed_cov_at: covariance not positive definite");
    }
    return ava.ldlt().solve(Eigen::MatrixXd::Identity(p_, p_));
}

double JointProfileObjective::operator()(const Eigen::VectorXd& theta,
                                         Eigen::VectorXd* grad) const {
    Eigen::MatrixXd psi, ava;
    Eigen::VectorXd avy;
    ResidualSpec resid;
    double yvy = 0.0, logdet = 0.0;
    if (!assemble(theta, psi, resid, ava, avy, yvy, logdet)) return kInf;

    Eigen::VectorXd fixed = ava.ldlt().solve(avy);
    const double quad = yvy - 2.0 * fixed.dot(avy) + fixed.dot(ava * fixed);
    const double nll = 0.5 * (logdet + quad + static_cast<double>(n_total_) * kLog2Pi);

    if (grad == nullptr) return nll;

    const int np = n_params();
    grad->setZero(np);
    const Eigen::Matrix2d lambda = resid.lambda();
    Eigen::VectorXd sds = theta.head(q_).array().exp();
    const int nc = corr_.n_free();
    const int base = q_ + nc;

    // Natural-parameter derivatives of Lambda.
    Eigen::Matrix2d dl_eps, dl_zeta, dl_rho;
    const double cov = resid.rho_eps * resid.sigma_eps * resid.sigma_zeta;
    dl_eps << 2.0 * lambda(0, 0), cov, cov, 0.0;
    dl_zeta << 0.0, cov, cov, 2.0 * lambda(1, 1);
    const double drho = (1.0 - resid.rho_eps * resid.rho_eps) * resid.sigma_eps * resid.sigma_zeta;
    dl_rho << 0.0, drho, drho, 0.0;

    double dd_dphi = 0.0, dc0_dphi = 0.0;
    if (family_ == CorrFamily::exponential) {
        const double s_d = sigmoid(theta[base + 3]);
        dd_dphi = resid.range_d * (kLogDHi - kLogDLo) * s_d * (1.0 - s_d);
        const double s_c = sigmoid(theta[base + 4]);
        dc0_dphi = kC0Max * s_c * (1.0 - s_c);
    }

    for (const auto& d : designs_) {
        const int n = d.n;
        Eigen::MatrixXd omega = omega_from_gaps(d.gaps, resid);
        Eigen::MatrixXd v = d.w * psi * d.w.transpose() + assemble_sigma(lambda, omega);
        Eigen::LLT<Eigen::MatrixXd> llt(v);
        Eigen::VectorXd r = d.y - d.a * fixed;
        Eigen::VectorXd qv = llt.solve(r);
        Eigen::MatrixXd vinv = llt.solve(Eigen::MatrixXd::Identity(2 * n, 2 * n));

        // Random-effect covariance parameters.
        Eigen::MatrixXd viw = llt.solve(d.w);
        Eigen::MatrixXd pmat = d.w.transpose() * viw;
        Eigen::VectorXd v1 = d.w.transpose() * qv;
        for (int k = 0; k < q_; ++k) {
            const double tr = 2.0 * pmat.row(k).dot(psi.row(k));
            const double qd = 2.0 * v1[k] * psi.row(k).dot(v1);
            (*grad)[k] += 0.5 * tr - 0.5 * qd;
        }
        for (int m = 0; m < nc; ++m) {
            const auto [a, b] = corr_.free_pairs[m];
            const double rho = std::tanh(theta[q_ + m]);
            const double scale = (1.0 - rho * rho) * sds[a] * sds[b];
            (*grad)[q_ + m] += 0.5 * 2.0 * scale * pmat(a, b) - 0.5 * 2.0 * scale * v1[a] * v1[b];
        }

        // Residual parameters: dV = dLambda (x) Omega needs the block traces
        // t(a,b) = tr(Vinv_ab * Omega) and block quadratics qa' Omega qb.
        Eigen::Matrix2d tr_blocks, quad_blocks;
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                const auto ka = vinv.block(a * n, b * n, n, n);
                tr_blocks(a, b) = (ka.transpose().cwiseProduct(omega)).sum();
                quad_blocks(a, b) = qv.segment(a * n, n).dot(omega * qv.segment(b * n, n));
            }
        }
        auto resid_grad = [&](const Eigen::Matrix2d& dl) {
            double tr = 0.0, qd = 0.0;
            for (int a = 0; a < 2; ++a) {
                for (int b = 0; b < 2; ++b) {
                    tr += dl(a, b) * tr_blocks(a, b);
                    qd += dl(a, b) * quad_blocks(a, b);
                }
            }
            return 0.5 * tr - 0.5 * qd;
        };
        (*grad)[base] += resid_grad(dl_eps);
        (*grad)[base + 1] += resid_grad(dl_zeta);
        (*grad)[base + 2] += resid_grad(dl_rho);

        if (family_ == CorrFamily::exponential) {
            // dV = Lambda (x) dOmega, dOmega zero on the diagonal.
            Eigen::MatrixXd dom_d(n, n), dom_c(n, n);
            for (int i = 0; i < n; ++i) {
                dom_d(i, i) = 0.0;
                dom_c(i, i) = 0.0;
                for (int j = 0; j < i; ++j) {
                    const double e = std::exp(-d.gaps(i, j) / resid.range_d);
                    dom_d(i, j) = dom_d(j, i) = (1.0 - resid.nugget_c0) * e * d.gaps(i, j) /
                                                (resid.range_d * resid.range_d) * dd_dphi;
                    dom_c(i, j) = dom_c(j, i) = -e * dc0_dphi;
                }
            }
            for (const auto* dom : {&dom_d, &dom_c}) {
                double tr = 0.0, qd = 0.0;
                for (int a = 0; a < 2; ++a) {
                    for (int b = 0; b < 2; ++b) {
                        const auto ka = vinv.block(a * n, b * n, n, n);
                        tr += lambda(a, b) * (ka.transpose().cwiseProduct(*dom)).sum();
                        qd += lambda(a, b) *
                              qv.segment(a * n, n).dot(*dom * qv.segment(b * n, n));
                    }
                }
                const int idx = dom == &dom_d ? base + 3 : base + 4;
                (*grad)[idx] += 0.5 * tr - 0.5 * qd;
            }
        }
    }
    return nll;
}

}  // namespace detail

FitResult fit_joint(const LongitudinalDataset& ds, const JointSpec& spec, const FitOptions& opts) {
    if (ds.subjects.size() < 2) throw std::invalid_argument("fit_joint: need at least 2 subjects");
    detail::JointProfileObjective obj(ds, spec);
    Objective f = [&obj](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return obj(x, g); };

    // Start from separate univariate moment fits.
    auto ols_resid_var = [&ds](const std::vector<ModelTerm>& terms, bool use_r) {
        const int p = static_cast<int>(terms.size());
        Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
        Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
        double yty = 0.0;
        long n = 0;
        for (const auto& subj : ds.subjects) {
            Eigen::MatrixXd x = build_design(terms, subj);
            const auto& vals = use_r ? subj.r : subj.y;
            Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(vals.data(), subj.n_visits());
            xtx += x.transpose() * x;
            xty += x.transpose() * y;
            yty += y.dot(y);
            n += subj.n_visits();
        }
        Eigen::VectorXd beta = xtx.ldlt().solve(xty);
        return std::max((yty - beta.dot(xty)) / std::max<long>(n - p, 1), 1e-6);
    };
    const double vy = ols_resid_var(spec.y_fixed, false);
    const double vr = ols_resid_var(spec.r_fixed, true);

    const int q = obj.n_random();
    const int qy = static_cast<int>(spec.y_random.size());
    Eigen::MatrixXd psi0 = Eigen::MatrixXd::Zero(q, q);
    for (int k = 0; k < q; ++k) psi0(k, k) = (k < qy ? vy : vr) / 2.0;
    ResidualSpec resid0;
    resid0.family = spec.family;
    resid0.sigma_eps = std::sqrt(vy / 2.0);
    resid0.sigma_zeta = std::sqrt(vr / 2.0);
    resid0.rho_eps = 0.0;
    resid0.range_d = 0.5;
    resid0.nugget_c0 = 0.2;
    Eigen::VectorXd theta0 = obj.pack(psi0, resid0);

    OptimResult best;
    best.value = kInf;
    auto rng = make_stream(opts.jitter_seed, 1);
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
    const int np = obj.n_params();
    obj.unpack(best.x, fit.psi, fit.residual);
    fit.sigma_eps = fit.residual.sigma_eps;
    fit.loglik = -best.value;
    fit.converged = best.converged;
    fit.iterations = best.iterations;
    fit.grad_norm = best.grad.size() > 0 ? best.grad.lpNorm<Eigen::Infinity>() : kInf;

    for (const auto& t : spec.y_fixed) fit.fixed_names.push_back("y:" + t.label());
    for (const auto& t : spec.r_fixed) fit.fixed_names.push_back("r:" + t.label());
    fit.fixed = obj.fixed_at(best.x);
    fit.fixed_se = obj.fixed_cov_at(best.x).diagonal().array().max(0.0).sqrt();

    std::vector<std::string> rlabels;
    for (const auto& t : spec.y_random) rlabels.push_back("y:" + t.label());
    for (const auto& t : spec.r_random) rlabels.push_back("r:" + t.label());
    const auto& cs = obj.corr_structure();
    for (int k = 0; k < q; ++k) fit.var_names.push_back("sd(" + rlabels[k] + ")");
    for (const auto& [a, b] : cs.free_pairs) {
        fit.var_names.push_back("corr(" + rlabels[a] + "," + rlabels[b] + ")");
    }
    fit.var_names.push_back("sigma_eps");
    fit.var_names.push_back("sigma_zeta");
    fit.var_names.push_back("rho_eps");
    if (obj.exponential()) {
        fit.var_names.push_back("range_d");
        fit.var_names.push_back("nugget_c0");
    }
    fit.var_values.resize(np);
    for (int k = 0; k < q; ++k) fit.var_values[k] = std::exp(best.x[k]);
    for (int m = 0; m < cs.n_free(); ++m) fit.var_values[q + m] = std::tanh(best.x[q + m]);
    const int base = q + cs.n_free();
    fit.var_values[base] = fit.residual.sigma_eps;
    fit.var_values[base + 1] = fit.residual.sigma_zeta;
    fit.var_values[base + 2] = fit.residual.rho_eps;
    if (obj.exponential()) {
        fit.var_values[base + 3] = fit.residual.range_d;
        fit.var_values[base + 4] = fit.residual.nugget_c0;
    }

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
        Eigen::MatrixXd covm = hess.ldlt().solve(Eigen::MatrixXd::Identity(np, np));
        Eigen::VectorXd se_t = covm.diagonal().array().max(0.0).sqrt();
        for (int k = 0; k < q; ++k) fit.var_se[k] = fit.var_values[k] * se_t[k];
        for (int m = 0; m < cs.n_free(); ++m) {
            const double rho = fit.var_values[q + m];
            fit.var_se[q + m] = (1.0 - rho * rho) * se_t[q + m];
        }
        fit.var_se[base] = fit.residual.sigma_eps * se_t[base];
        fit.var_se[base + 1] = fit.residual.sigma_zeta * se_t[base + 1];
        fit.var_se[base + 2] =
            (1.0 - fit.residual.rho_eps * fit.residual.rho_eps) * se_t[base + 2];
        if (obj.exponential()) {
            const double s_d = sigmoid(best.x[base + 3]);
            fit.var_se[base + 3] =
                fit.residual.range_d * (kLogDHi - kLogDLo) * s_d * (1.0 - s_d) * se_t[base + 3];
            const double s_c = sigmoid(best.x[base + 4]);
            fit.var_se[base + 4] = kC0Max * s_c * (1.0 - s_c) * se_t[base + 4];
        }
    }
    return fit;
}

}  // namespace longit
