#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "longit/lmm.hpp"
#include "longit/rng.hpp"
#include "longit/terms.hpp"
#include "longit/visit_sim.hpp"

using namespace longit;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

LmmSpec intercept_slope_spec() {
    LmmSpec spec;
    spec.fixed = {ModelTerm::intercept(), ModelTerm::time()};
    spec.random = {ModelTerm::intercept(), ModelTerm::time()};
    return spec;
}

// Random-intercept data with known parameters.
LongitudinalDataset simulate_ri(int n_subjects, int n_visits, double beta0, double beta1,
                                double sd_b, double sigma, std::uint64_t seed,
                                std::vector<double>* true_b = nullptr) {
    LongitudinalDataset ds;
    ds.tau = n_visits;
    auto rng = make_stream(seed, 0);
    std::normal_distribution<double> norm;
    for (int i = 0; i < n_subjects; ++i) {
        SubjectRecord s;
        s.id = i + 1;
        const double b = sd_b * norm(rng);
        if (true_b != nullptr) true_b->push_back(b);
        for (int j = 0; j < n_visits; ++j) {
            const double t = j;
            s.visit_times.push_back(t);
            s.y.push_back(beta0 + beta1 * t + b + sigma * norm(rng));
        }
        ds.subjects.push_back(std::move(s));
    }
    return ds;
}

}  // namespace

TEST_CASE("log-likelihood of a single standard-normal observation") {
    LongitudinalDataset ds;
    ds.tau = 1.0;
    SubjectRecord s;
    s.id = 1;
    s.visit_times = {0.0};
    s.y = {0.0};
    ds.subjects.push_back(s);
    LmmSpec spec;
    spec.fixed = {ModelTerm::intercept()};
    spec.random = {ModelTerm::intercept()};
    const double ll = lmm_loglik(ds, spec, Eigen::VectorXd::Zero(1),
                                 Eigen::MatrixXd::Zero(1, 1), 1.0);
    CHECK(ll == doctest::Approx(-0.5 * kLog2Pi).epsilon(1e-12));
}

TEST_CASE("log-likelihood matches a dense multivariate-normal computation") {
    auto ds = simulate_ri(6, 4, 2.0, -0.3, 1.3, 0.8, 11);
    auto spec = intercept_slope_spec();
    Eigen::Vector2d beta(1.9, -0.25);
    Eigen::Matrix2d psi;
    psi << 1.7, -0.4, -0.4, 0.9;
    const double sigma = 0.85;
    const double ll = lmm_loglik(ds, spec, beta, psi, sigma);

    double dense = 0.0;
    for (const auto& subj : ds.subjects) {
        const int n = subj.n_visits();
        Eigen::MatrixXd z(n, 2);
        Eigen::MatrixXd x(n, 2);
        Eigen::VectorXd y(n);
        for (int j = 0; j < n; ++j) {
            z(j, 0) = 1.0;
            z(j, 1) = subj.visit_times[j];
            x.row(j) = z.row(j);
            y[j] = subj.y[j];
        }
        Eigen::MatrixXd v = z * psi * z.transpose() +
                            sigma * sigma * Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd r = y - x * beta;
        Eigen::LLT<Eigen::MatrixXd> llt(v);
        Eigen::VectorXd q = llt.solve(r);
        double logdet = 0.0;
        for (int j = 0; j < n; ++j) logdet += 2.0 * std::log(llt.matrixL()(j, j));
        dense += -0.5 * (n * kLog2Pi + logdet + r.dot(q));
    }
    CHECK(ll == doctest::Approx(dense).epsilon(1e-10));
}

TEST_CASE("log-likelihood is invariant to shifting y along the fixed design") {
    auto ds = simulate_ri(5, 3, 0.0, 0.0, 1.0, 1.0, 3);
    auto spec = intercept_slope_spec();
    Eigen::Matrix2d psi = Eigen::Matrix2d::Identity();
    Eigen::Vector2d beta(0.4, -0.2), delta(1.5, 0.7);
    const double ll0 = lmm_loglik(ds, spec, beta, psi, 1.0);
    auto shifted = ds;
    for (auto& subj : shifted.subjects) {
        for (int j = 0; j < subj.n_visits(); ++j) {
            subj.y[j] += delta[0] + delta[1] * subj.visit_times[j];
        }
    }
    const double ll1 = lmm_loglik(shifted, spec, beta + delta, psi, 1.0);
    CHECK(ll0 == doctest::Approx(ll1).epsilon(1e-12));
}

TEST_CASE("non-positive-definite residual variance yields -inf, not a throw") {
    auto ds = simulate_ri(2, 2, 0.0, 0.0, 1.0, 1.0, 4);
    LmmSpec spec;
    spec.fixed = {ModelTerm::intercept()};
    spec.random = {ModelTerm::intercept()};
    const double ll =
        lmm_loglik(ds, spec, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(1, 1), 0.0);
    CHECK(std::isinf(ll));
    CHECK(ll < 0.0);
}

TEST_CASE("profiled fixed effects equal the explicit GLS solution") {
    auto ds = simulate_ri(8, 5, 7.0, -0.1, 1.6, 1.5, 7);
    auto spec = intercept_slope_spec();
    detail::LmmProfileObjective obj(ds, spec);
    Eigen::VectorXd theta(obj.n_params());
    theta << std::log(1.4), std::log(0.9), std::atanh(-0.3), std::log(1.2);
    Eigen::MatrixXd psi;
    double sigma;
    obj.unpack(theta, psi, sigma);

    Eigen::MatrixXd xvx = Eigen::MatrixXd::Zero(2, 2);
    Eigen::VectorXd xvy = Eigen::VectorXd::Zero(2);
    for (const auto& subj : ds.subjects) {
        const int n = subj.n_visits();
        Eigen::MatrixXd z(n, 2);
        Eigen::VectorXd y(n);
        for (int j = 0; j < n; ++j) {
            z(j, 0) = 1.0;
            z(j, 1) = subj.visit_times[j];
            y[j] = subj.y[j];
        }
        Eigen::MatrixXd v = z * psi * z.transpose() +
                            sigma * sigma * Eigen::MatrixXd::Identity(n, n);
        Eigen::MatrixXd vinv = v.llt().solve(Eigen::MatrixXd::Identity(n, n));
        xvx += z.transpose() * vinv * z;  // fixed design coincides with z here
        xvy += z.transpose() * vinv * y;
    }
    Eigen::VectorXd gls = xvx.ldlt().solve(xvy);
    CHECK((obj.beta_at(theta) - gls).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("profile objective gradient matches finite differences") {
    auto ds = simulate_ri(6, 4, 7.0, -0.1, 1.6, 1.5, 9);
    auto spec = intercept_slope_spec();
    detail::LmmProfileObjective obj(ds, spec);
    Objective f = [&](const Eigen::VectorXd& th, Eigen::VectorXd* g) { return obj(th, g); };
    Eigen::VectorXd theta(obj.n_params());
    theta << std::log(1.2), std::log(0.7), std::atanh(-0.4), std::log(1.3);
    Eigen::VectorXd g_analytic;
    (void)obj(theta, &g_analytic);
    Eigen::VectorXd g_fd = fd_gradient(f, theta, 1e-6);
    CHECK((g_analytic - g_fd).cwiseAbs().maxCoeff() /
              std::max(1.0, g_fd.cwiseAbs().maxCoeff()) <
          1e-5);
}

TEST_CASE("maximum-likelihood fit beats a parameter grid around the truth") {
    auto ds = simulate_ri(12, 5, 1.0, 0.0, 1.2, 0.9, 13);
    LmmSpec spec;
    spec.fixed = {ModelTerm::intercept()};
    spec.random = {ModelTerm::intercept()};
    FitOptions opts;
    opts.compute_se = false;
    FitResult fit = fit_lmm(ds, spec, opts);
    CHECK(fit.converged);

    double best = -1e300;
    detail::LmmProfileObjective obj(ds, spec);
    for (double sd_b = 0.2; sd_b <= 2.6; sd_b += 0.05) {
        for (double sig = 0.3; sig <= 2.0; sig += 0.05) {
            Eigen::VectorXd theta(2);
            theta << std::log(sd_b), std::log(sig);
            Eigen::MatrixXd psi = Eigen::MatrixXd::Constant(1, 1, sd_b * sd_b);
            const double ll = lmm_loglik(ds, spec, obj.beta_at(theta), psi, sig);
            best = std::max(best, ll);
        }
    }
    CHECK(fit.loglik >= best - 1e-8);
    CHECK(fit.loglik <= best + 0.05);  // the grid is fine enough to get close
}

TEST_CASE("repeated fits are bit-identical") {
    auto ds = simulate_ri(10, 4, 2.0, -0.2, 1.1, 0.8, 15);
    auto spec = intercept_slope_spec();
    FitOptions opts;
    opts.compute_se = false;
    FitResult a = fit_lmm(ds, spec, opts);
    FitResult b = fit_lmm(ds, spec, opts);
    CHECK(a.fixed == b.fixed);
    CHECK(a.var_values == b.var_values);
    CHECK(a.loglik == b.loglik);
}

TEST_CASE("fit recovers known parameters from a large balanced panel") {
    auto ds = simulate_ri(600, 6, 3.0, -0.5, 1.5, 1.0, 17);
    LmmSpec spec;
    spec.fixed = {ModelTerm::intercept(), ModelTerm::time()};
    spec.random = {ModelTerm::intercept()};
    FitResult fit = fit_lmm(ds, spec);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.fixed_by_name("time") - -0.5) < 3.0 * fit.fixed_se[1]);
    CHECK(fit.var_by_name("sd((intercept))") == doctest::Approx(1.5).epsilon(0.1));
    CHECK(fit.sigma_eps == doctest::Approx(1.0).epsilon(0.05));
    CHECK(fit.fixed_se[1] > 0.0);
    CHECK(fit.var_se.minCoeff() > 0.0);
}

TEST_CASE("rank-deficient fixed designs are rejected") {
    auto ds = simulate_ri(5, 3, 0.0, 0.0, 1.0, 1.0, 19);
    LmmSpec spec;
    spec.fixed = {ModelTerm::intercept(), ModelTerm::intercept()};
    spec.random = {ModelTerm::intercept()};
    CHECK_THROWS_AS((void)fit_lmm(ds, spec), std::invalid_argument);
}

TEST_CASE("posterior random intercepts shrink the subject mean") {
    const double sd_b = 1.4, sigma = 0.7;
    auto ds = simulate_ri(20, 5, 0.0, 0.0, sd_b, sigma, 21);
    LmmSpec spec;
    spec.fixed = {ModelTerm::intercept()};
    spec.random = {ModelTerm::intercept()};
    FitResult fit;
    fit.fixed_names = {"(intercept)"};
    fit.fixed = Eigen::VectorXd::Zero(1);
    fit.psi = Eigen::MatrixXd::Constant(1, 1, sd_b * sd_b);
    fit.sigma_eps = sigma;
    Eigen::MatrixXd blups = predict_blups(fit, ds, spec);
    REQUIRE(blups.rows() == 20);
    const double vb = sd_b * sd_b;
    for (int i = 0; i < 20; ++i) {
        const auto& subj = ds.subjects[i];
        const double n = subj.n_visits();
        double ybar = 0.0;
        for (double y : subj.y) ybar += y;
        ybar /= n;
        const double expected = n * vb / (n * vb + sigma * sigma) * ybar;
        CHECK(blups(i, 0) == doctest::Approx(expected).epsilon(1e-10));
    }
    // A degenerate random effect shrinks everything to zero.
    fit.psi(0, 0) = 0.0;
    CHECK(predict_blups(fit, ds, spec).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("posterior intercepts track the simulated random effects") {
    std::vector<double> true_b;
    auto ds = simulate_ri(150, 5, 0.0, 0.0, 1.4, 0.7, 23, &true_b);
    LmmSpec spec;
    spec.fixed = {ModelTerm::intercept()};
    spec.random = {ModelTerm::intercept()};
    FitOptions opts;
    opts.compute_se = false;
    FitResult fit = fit_lmm(ds, spec, opts);
    Eigen::MatrixXd blups = predict_blups(fit, ds, spec);
    double sxy = 0.0, sxx = 0.0, syy = 0.0, mx = 0.0, my = 0.0;
    for (int i = 0; i < 150; ++i) {
        mx += blups(i, 0);
        my += true_b[static_cast<std::size_t>(i)];
    }
    mx /= 150.0;
    my /= 150.0;
    for (int i = 0; i < 150; ++i) {
        const double dx = blups(i, 0) - mx;
        const double dy = true_b[static_cast<std::size_t>(i)] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    CHECK(sxy / std::sqrt(sxx * syy) > 0.8);
}

TEST_CASE("intraclass correlation from the fitted variances") {
    LmmSpec spec;
    spec.fixed = {ModelTerm::intercept()};
    spec.random = {ModelTerm::intercept()};
    FitResult fit;
    fit.psi = Eigen::MatrixXd::Constant(1, 1, 1.0);
    fit.sigma_eps = 1.0;
    CHECK(icc(fit, spec) == doctest::Approx(0.5));
    fit.psi(0, 0) = 0.0;
    CHECK(icc(fit, spec) == doctest::Approx(0.0));
    fit.psi(0, 0) = 1.36;
    fit.sigma_eps = std::sqrt(2.1);
    CHECK(icc(fit, spec) == doctest::Approx(1.36 / (1.36 + 2.1)));

    LmmSpec no_intercept;
    no_intercept.fixed = {ModelTerm::intercept()};
    no_intercept.random = {ModelTerm::time()};
    CHECK_THROWS_AS((void)icc(fit, no_intercept), std::invalid_argument);
}
