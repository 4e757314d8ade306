#include "longit/visit_sim.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include "longit/rng.hpp"

namespace longit {

namespace {

// D * chol(corr): maps iid standard normals to N(0, Psi) draws, valid also
// when some sds are zero.
Eigen::MatrixXd re_transform(const RandomEffectSpec& spec) {
    Eigen::MatrixXd psi_check = build_psi(spec);  // validates the spec
    (void)psi_check;
    Eigen::LLT<Eigen::MatrixXd> llt(spec.corr);
    Eigen::MatrixXd l = llt.matrixL();
    return spec.sds.asDiagonal() * l;
}

Eigen::VectorXd draw_normal_vector(int q, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd z(q);
    for (int k = 0; k < q; ++k) z[k] = nd(rng);
    return z;
}

double eval_linear(const std::vector<ModelTerm>& terms, const Eigen::VectorXd& coef, double t,
                   const SubjectRecord& subj) {
    double out = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        out += coef[static_cast<int>(k)] * eval_term(terms[k], t, subj);
    }
    return out;
}

}  // namespace

Eigen::MatrixXd gen_random_effects(const RandomEffectSpec& spec, int n_subjects,
                                   std::uint64_t seed) {
    const int q = spec.dim();
    Eigen::MatrixXd lt = re_transform(spec).transpose();
    Eigen::MatrixXd out(n_subjects, q);
    for (int i = 0; i < n_subjects; ++i) {
        auto rng = make_stream(seed, static_cast<std::uint64_t>(i));
        out.row(i) = draw_normal_vector(q, rng).transpose() * lt;
    }
    return out;
}

double gen_adherence(double r, double shape, std::mt19937_64& rng) {
    if (!(r > 0.0)) throw std::invalid_argument("gen_adherence: recommended interval must be positive");
    if (!(shape > 0.0)) throw std::invalid_argument("gen_adherence: shape must be positive");
    std::weibull_distribution<double> wd(shape, r);
    double s = wd(rng);
    // The distribution has positive support; guard the measure-zero draw at 0.
    return s > 0.0 ? s : std::numeric_limits<double>::min();
}

std::vector<double> gen_adherence_batch(double r, double shape, int n, std::uint64_t seed) {
    std::vector<double> out(n);
    auto rng = make_stream(seed, 0);
    for (int i = 0; i < n; ++i) out[i] = gen_adherence(r, shape, rng);
    return out;
}

std::vector<IntervalDraw> gen_intervals_memory(
    const MemoryIntervalParams& params, const std::vector<std::map<std::string, double>>& baselines,
    int n_subjects, std::uint64_t seed) {
    if (!(params.floor > 0.0)) throw std::invalid_argument("gen_intervals_memory: floor must be positive");
    if (!(params.sigma_eta >= 0.0)) throw std::invalid_argument("gen_intervals_memory: sigma_eta must be >= 0");
    if (static_cast<int>(params.h_terms.size()) != params.alpha.size()) {
        throw std::invalid_argument("gen_intervals_memory: alpha/h_terms size mismatch");
    }
    if (static_cast<int>(params.re_terms.size()) != params.gamma.size() ||
        params.gamma.size() != params.re.dim()) {
        throw std::invalid_argument("gen_intervals_memory: gamma/re_terms/re size mismatch");
    }
    Eigen::MatrixXd l = re_transform(params.re);
    const int q = params.re.dim();

    std::vector<IntervalDraw> out;
    out.reserve(n_subjects);
    int degenerate = 0;
    for (int i = 0; i < n_subjects; ++i) {
        auto rng = make_stream(seed, static_cast<std::uint64_t>(i));
        SubjectRecord ctx;
        if (!baselines.empty()) ctx.baseline = baselines[i];
        IntervalDraw d;
        d.b = l * draw_normal_vector(q, rng);
        std::normal_distribution<double> eta(0.0, params.sigma_eta);

        const double expected = eval_linear(params.h_terms, params.alpha, 0.0, ctx);
        if (expected <= params.floor) ++degenerate;

        double t = 0.0, u = 0.0;
        while (true) {
            d.times.push_back(t);
            double s = eval_linear(params.h_terms, params.alpha, t, ctx);
            for (int k = 0; k < q; ++k) {
                s += params.gamma[k] * d.b[k] * eval_term(params.re_terms[k], t, ctx);
            }
            s += eta(rng);
            if (s < params.floor) s = params.floor;
            d.s.push_back(s);
            u += s;
            if (u > params.tau) break;
            t = u;
        }
        d.n_visits = static_cast<int>(d.s.size());
        d.u = u;
        out.push_back(std::move(d));
    }
    if (degenerate * 2 > n_subjects) {
        std::cerr << "[longit] warning: expected interval <= floor for " << degenerate << "/"
                  << n_subjects << " subjects; interval process is degenerate\n";
    }
    return out;
}

std::vector<std::vector<double>> gen_visits_memoryless(const std::function<double(double)>& mu,
                                                       const Eigen::VectorXd& gamma,
                                                       const Eigen::MatrixXd& b, double grid_step,
                                                       double tau, std::uint64_t seed) {
    const int n_subjects = static_cast<int>(b.rows());
    const int n_grid = static_cast<int>(std::llround(tau / grid_step));
    std::vector<std::vector<double>> out(n_subjects);
    bool clipped = false;
    for (int i = 0; i < n_subjects; ++i) {
        auto rng = make_stream(seed, static_cast<std::uint64_t>(i));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double link = gamma.size() > 0 ? gamma.dot(b.row(i)) : 0.0;
        for (int k = 1; k <= n_grid; ++k) {
            const double t = k * grid_step;
            double p = std::exp(mu(t) + link);
            if (p > 1.0) {
                p = 1.0;
                clipped = true;
            }
            if (unif(rng) < p) out[i].push_back(t);
        }
    }
    if (clipped) {
        std::cerr << "[longit] warning: memoryless visit probability clipped at 1 on the grid\n";
    }
    return out;
}

LongitudinalDataset theory_dataset(const std::vector<IntervalDraw>& draws,
                                   const std::vector<std::map<std::string, double>>& baselines,
                                   const TheoryOutcomeParams& outcome, double tau,
                                   std::uint64_t seed) {
    LongitudinalDataset ds;
    ds.tau = tau;
    ds.time_unit = "days";
    ds.subjects.reserve(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) {
        const auto& d = draws[i];
        auto rng = make_stream(mix64(seed) ^ 0x9aebULL, i);
        std::normal_distribution<double> eps(0.0, outcome.sigma_eps);
        SubjectRecord subj;
        subj.id = static_cast<int>(i);
        if (!baselines.empty()) subj.baseline = baselines[i];
        subj.visit_times = d.times;
        subj.s = d.s;
        subj.u_sum = d.u;
        subj.y.reserve(d.times.size());
        for (double t : d.times) {
            double y = eval_linear(outcome.fixed_terms, outcome.beta, t, subj);
            for (std::size_t k = 0; k < outcome.re_terms.size(); ++k) {
                y += d.b[static_cast<int>(k)] * eval_term(outcome.re_terms[k], t, subj);
            }
            subj.y.push_back(y + eps(rng));
        }
        ds.subjects.push_back(std::move(subj));
    }
    return ds;
}

double SequentialGaussian::next(std::mt19937_64& rng) {
    const int m = static_cast<int>(z_.size());
    std::vector<double> l(m + 1, 0.0);
    double value = 0.0;
    for (int k = 0; k < m; ++k) {
        double c = cov_(m, k);
        for (int j = 0; j < k; ++j) c -= l_rows_[k][j] * l[j];
        l[k] = c / l_rows_[k][k];
    }
    double d2 = cov_(m, m);
    for (int k = 0; k < m; ++k) d2 -= l[k] * l[k];
    l[m] = std::sqrt(std::max(d2, 1e-12));
    std::normal_distribution<double> nd(0.0, 1.0);
    const double z = nd(rng);
    for (int k = 0; k < m; ++k) value += l[k] * z_[k];
    value += l[m] * z;
    z_.push_back(z);
    l_rows_.push_back(std::move(l));
    return value;
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

StudyScenario StudyScenario::study1_default() {
    StudyScenario sc;
    sc.study = Study::study1;
    sc.beta0 = 7.0;
    sc.beta1 = -0.10;
    sc.alpha0 = 1.0;
    sc.alpha1 = (2.0 / 52.0 - 1.0) / 15.0;
    sc.re.names = {"b0", "b1", "u0", "u1"};
    sc.re.sds = Eigen::Vector4d(1.6, 1.2, 0.06, 0.05);
    sc.re.corr = Eigen::Matrix4d::Identity();
    sc.re.corr(0, 1) = sc.re.corr(1, 0) = -0.5;
    sc.re.corr(0, 2) = sc.re.corr(2, 0) = -0.7;
    sc.re.corr(1, 3) = sc.re.corr(3, 1) = -0.7;
    sc.n_y_random = 2;
    sc.residual.sigma_eps = 1.5;
    sc.residual.sigma_zeta = 0.05;
    sc.residual.family = CorrFamily::exponential;
    sc.residual.range_d = 0.5;
    sc.residual.nugget_c0 = 0.4;
    sc.tau = 2.0;
    return sc;
}

StudyScenario StudyScenario::study2_default() {
    StudyScenario sc = study1_default();
    sc.study = Study::study2;
    sc.beta2 = -1.0;
    sc.alpha2 = -46.0 / 52.0;
    sc.residual.family = CorrFamily::iid;
    return sc;
}

StudyScenario StudyScenario::study3_default() {
    StudyScenario sc;
    sc.study = Study::study3;
    sc.beta0 = 7.0;
    sc.beta1 = -5.0;
    sc.beta3 = 2.0;
    sc.alpha0 = 1.0;
    sc.alpha1 = (2.0 / 52.0 - 1.0) / 12.0;
    sc.re.names = {"b0", "u0"};
    sc.re.sds = Eigen::Vector2d(1.0, 0.06);
    sc.re.corr = Eigen::Matrix2d::Identity();
    sc.re.corr(0, 1) = sc.re.corr(1, 0) = -0.7;
    sc.n_y_random = 1;
    sc.residual.sigma_eps = 1.2;
    sc.residual.sigma_zeta = 0.05;
    sc.residual.family = CorrFamily::iid;
    sc.tau = 2.0;
    sc.decay_rate = 4.0;
    return sc;
}

StudyScenario StudyScenario::by_name(const std::string& name) {
    if (name == "study1") return study1_default();
    if (name == "study2") return study2_default();
    if (name == "study3") return study3_default();
    throw std::invalid_argument("unknown scenario: " + name);
}

void StudyScenario::set_slope_correlation(double rho) {
    if (re.dim() < 4) throw std::invalid_argument("scenario has no random slopes");
    re.corr(1, 3) = re.corr(3, 1) = rho;
}

void StudyScenario::scale_re_variances(double divisor) {
    if (!(divisor > 0.0)) throw std::invalid_argument("variance divisor must be positive");
    re.sds /= std::sqrt(divisor);
}

LongitudinalDataset simulate_study(const StudyScenario& sc, int n_subjects, std::uint64_t seed) {
    sc.residual.validate();
    Eigen::MatrixXd l = re_transform(sc.re);
    const int q = sc.re.dim();

    LongitudinalDataset ds;
    ds.tau = sc.tau;
    ds.time_unit = "years";
    ds.subjects.reserve(n_subjects);

    for (int i = 0; i < n_subjects; ++i) {
        auto rng = make_stream(seed, static_cast<std::uint64_t>(i));
        SubjectRecord subj;
        subj.id = i;

        Eigen::VectorXd b = l * draw_normal_vector(q, rng);
        double x = 0.0;
        if (sc.study == Study::study2) {
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            x = unif(rng) < 0.5 ? 1.0 : 0.0;
            subj.baseline["x"] = x;
        }

        std::normal_distribution<double> eps_iid(0.0, sc.residual.sigma_eps);
        std::normal_distribution<double> zeta(0.0, sc.residual.sigma_zeta);

        // Spatially correlated Y residuals are drawn one visit at a time:
        // the covariance depends on realized times, which depend on past Y
        // through R, so the vector cannot be drawn jointly up front.
        SequentialGaussian eps_proc([&sc, &subj](int a, int c) {
            if (a == c) return sc.residual.sigma_eps * sc.residual.sigma_eps;
            const double h = std::abs(subj.visit_times[a] - subj.visit_times[c]);
            return sc.residual.sigma_eps * sc.residual.sigma_eps * (1.0 - sc.residual.nugget_c0) *
                   std::exp(-h / sc.residual.range_d);
        });

        double t = 0.0, u = 0.0;
        while (true) {
            subj.visit_times.push_back(t);
            double eps = sc.residual.family == CorrFamily::exponential ? eps_proc.next(rng)
                                                                       : eps_iid(rng);
            double y = 0.0;
            switch (sc.study) {
                case Study::study1:
                case Study::study2:
                    y = sc.beta0 + sc.beta1 * t + (sc.study == Study::study2 ? sc.beta2 * x : 0.0) +
                        b[0] + b[1] * t + eps;
                    break;
                case Study::study3: {
                    const double w = std::exp(-sc.decay_rate * t);
                    y = (sc.beta0 + sc.beta1 * t) * w + sc.beta3 * (1.0 - w) + b[0] + eps;
                    break;
                }
            }
            subj.y.push_back(y);

            double r = 0.0;
            const double zt = zeta(rng);
            switch (sc.study) {
                case Study::study1:
                    r = sc.alpha0 + sc.alpha1 * y + b[2] + b[3] * t + zt;
                    break;
                case Study::study2:
                    if (x == 1.0 && !sc.homogenize) {
                        r = sc.alpha0 + sc.alpha2 + zt;
                    } else {
                        r = sc.alpha0 + sc.alpha1 * y + b[2] + b[3] * t + zt;
                    }
                    break;
                case Study::study3:
                    r = sc.alpha0 + sc.alpha1 * y + b[1] + zt;
                    break;
            }
            if (r < sc.r_floor) r = sc.r_floor;
            subj.r.push_back(r);

            double s = gen_adherence(r, sc.weibull_shape, rng);
            subj.s.push_back(s);
            u = t + s;
            if (u > sc.tau) break;
            t = u;
        }
        subj.u_sum = u;
        ds.subjects.push_back(std::move(subj));
    }
    return ds;
}

LongitudinalDataset simulate_joint_model(const JointGenSpec& spec, int n_subjects,
                                         std::uint64_t seed) {
    spec.residual.validate();
    Eigen::MatrixXd l = re_transform(spec.re);
    const int qy = static_cast<int>(spec.y_random.size());
    const int qr = static_cast<int>(spec.r_random.size());
    if (spec.re.dim() != qy + qr) {
        throw std::invalid_argument("simulate_joint_model: stacked random-effect dimension mismatch");
    }
    const Eigen::Matrix2d lambda = spec.residual.lambda();

    LongitudinalDataset ds;
    ds.tau = spec.tau;
    ds.time_unit = "years";
    ds.subjects.reserve(n_subjects);

    for (int i = 0; i < n_subjects; ++i) {
        auto rng = make_stream(seed, static_cast<std::uint64_t>(i));
        SubjectRecord subj;
        subj.id = i;
        Eigen::VectorXd b = l * draw_normal_vector(spec.re.dim(), rng);

        // Residual variables appended in visit order, response-within-visit:
        // (eps_0, zeta_0, eps_1, zeta_1, ...). Covariance Lambda(a,b)*Omega(i,j).
        SequentialGaussian resid([&spec, &subj, &lambda](int m1, int m2) {
            const int v1 = m1 / 2, r1 = m1 % 2;
            const int v2 = m2 / 2, r2 = m2 % 2;
            double omega = 1.0;
            if (v1 != v2) {
                if (spec.residual.family == CorrFamily::iid) {
                    omega = 0.0;
                } else {
                    const double h = std::abs(subj.visit_times[v1] - subj.visit_times[v2]);
                    omega = (1.0 - spec.residual.nugget_c0) * std::exp(-h / spec.residual.range_d);
                }
            }
            return lambda(r1, r2) * omega;
        });

        double t = 0.0, u = 0.0;
        while (true) {
            subj.visit_times.push_back(t);
            const double eps = resid.next(rng);
            double y = eval_linear(spec.y_fixed, spec.beta, t, subj);
            for (int k = 0; k < qy; ++k) y += b[k] * eval_term(spec.y_random[k], t, subj);
            y += eps;
            subj.y.push_back(y);

            const double zt = resid.next(rng);
            double r = eval_linear(spec.r_fixed, spec.alpha, t, subj);
            for (int k = 0; k < qr; ++k) r += b[qy + k] * eval_term(spec.r_random[k], t, subj);
            r += zt;
            if (r < spec.r_floor) r = spec.r_floor;
            subj.r.push_back(r);

            double s = gen_adherence(r, spec.weibull_shape, rng);
            subj.s.push_back(s);
            u = t + s;
            if (u > spec.tau) break;
            t = u;
        }
        subj.u_sum = u;
        ds.subjects.push_back(std::move(subj));
    }
    return ds;
}

}  // namespace longit
