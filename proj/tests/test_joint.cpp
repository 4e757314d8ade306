#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "longit/diagnostics.hpp"
#include "longit/joint.hpp"
#include "longit/rng.hpp"
#include "longit/visit_sim.hpp"

using namespace longit;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

JointSpec small_joint_spec(CorrFamily family) {
    JointSpec spec;
    spec.y_fixed = {ModelTerm::intercept(), ModelTerm::time()};
    spec.r_fixed = {ModelTerm::intercept()};
    spec.y_random = {ModelTerm::intercept()};
    spec.r_random = {ModelTerm::intercept()};
    spec.family = family;
    return spec;
}

LongitudinalDataset small_joint_data(int n_subjects, std::uint64_t seed, bool with_r = true) {
    JointGenSpec gen;
    gen.y_fixed = {ModelTerm::intercept(), ModelTerm::time()};
    gen.r_fixed = {ModelTerm::intercept()};
    gen.y_random = {ModelTerm::intercept()};
    gen.r_random = {ModelTerm::intercept()};
    gen.beta = Eigen::Vector2d(7.0, -0.10);
    gen.alpha = Eigen::VectorXd::Constant(1, 0.4);
    gen.re.names = {"b0", "u0"};
    gen.re.sds = Eigen::Vector2d(1.6, 0.06);
    gen.re.corr = Eigen::Matrix2d::Identity();
    gen.re.corr(0, 1) = gen.re.corr(1, 0) = -0.7;
    gen.residual.sigma_eps = 1.5;
    gen.residual.sigma_zeta = 0.05;
    gen.residual.rho_eps = -0.3;
    auto ds = simulate_joint_model(gen, n_subjects, seed);
    if (!with_r) {
        for (auto& s : ds.subjects) s.r.clear();
    }
    return ds;
}

}  // namespace

TEST_CASE("exponential temporal correlation matrix") {
    auto one = omega_exponential({0.3}, 0.5, 0.4);
    REQUIRE(one.rows() == 1);
    CHECK(one(0, 0) == 1.0);

    const double d = 0.5, c0 = 0.4;
    auto two = omega_exponential({0.0, 0.5}, d, c0);
    CHECK(two(0, 0) == 1.0);
    CHECK(two(0, 1) == doctest::Approx((1.0 - c0) * std::exp(-1.0)));
    CHECK(two(1, 0) == two(0, 1));

    auto tight = omega_exponential({0.0, 1.0, 2.0}, 1e-8, 0.0);
    CHECK((tight - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-6);

    CHECK_THROWS_AS((void)omega_exponential({0.0, 1.0}, -1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS((void)omega_exponential({0.0, 1.0}, 0.5, 1.0), std::invalid_argument);
}

TEST_CASE("repeated visit times need a nugget to stay positive definite") {
    CHECK_NOTHROW((void)omega_exponential({0.0, 0.0, 1.0}, 0.5, 0.4));
    try {
        (void)omega_exponential({0.0, 1.0, 1.0}, 0.5, 0.0);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find('1') != std::string::npos);
        CHECK(msg.find('2') != std::string::npos);
    }
}

TEST_CASE("separable residual covariance assembles response-major blocks") {
    Eigen::Matrix2d lambda_i = Eigen::Matrix2d::Identity();
    CHECK(assemble_sigma(lambda_i, Eigen::Matrix3d::Identity())
              .isApprox(Eigen::MatrixXd::Identity(6, 6)));

    Eigen::Matrix2d lambda;
    lambda << 2.25, -0.3, -0.3, 0.0025;
    Eigen::Matrix3d omega;
    omega << 1.0, 0.4, 0.1, 0.4, 1.0, 0.4, 0.1, 0.4, 1.0;
    Eigen::MatrixXd sigma = assemble_sigma(lambda, omega);
    REQUIRE(sigma.rows() == 6);
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) {
                    CHECK(sigma(3 * a + i, 3 * b + j) ==
                          doctest::Approx(lambda(a, b) * omega(i, j)));
                }
            }
        }
    }
    // det(Lambda (x) Omega) = det(Lambda)^n * det(Omega)^m for 2 x n blocks.
    const double lhs = sigma.determinant();
    const double rhs = std::pow(lambda.determinant(), 3) * std::pow(omega.determinant(), 2);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-8));
}

TEST_CASE("joint log-likelihood matches a from-scratch dense computation") {
    auto ds = small_joint_data(5, 31);
    auto spec = small_joint_spec(CorrFamily::exponential);
    Eigen::Vector2d beta(6.8, -0.12);
    Eigen::VectorXd alpha = Eigen::VectorXd::Constant(1, 0.45);
    Eigen::Matrix2d psi;
    psi << 2.3, -0.06, -0.06, 0.004;
    ResidualSpec resid;
    resid.sigma_eps = 1.4;
    resid.sigma_zeta = 0.06;
    resid.rho_eps = -0.25;
    resid.family = CorrFamily::exponential;
    resid.range_d = 0.4;
    resid.nugget_c0 = 0.3;

    const double ll = joint_loglik(ds, spec, beta, alpha, psi, resid);

    double dense = 0.0;
    for (const auto& subj : ds.subjects) {
        const int n = subj.n_visits();
        Eigen::VectorXd resid_vec(2 * n);
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2 * n, 2);
        for (int j = 0; j < n; ++j) {
            const double t = subj.visit_times[j];
            resid_vec[j] = subj.y[j] - beta[0] - beta[1] * t;
            resid_vec[n + j] = subj.r[j] - alpha[0];
            w(j, 0) = 1.0;
            w(n + j, 1) = 1.0;
        }
        Eigen::MatrixXd v = w * psi * w.transpose();
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                for (int i = 0; i < n; ++i) {
                    for (int j = 0; j < n; ++j) {
                        const double gap =
                            std::abs(subj.visit_times[i] - subj.visit_times[j]);
                        double om = i == j ? 1.0
                                           : (1.0 - resid.nugget_c0) *
                                                 std::exp(-gap / resid.range_d);
                        v(a * n + i, b * n + j) += resid.lambda()(a, b) * om;
                    }
                }
            }
        }
        Eigen::LLT<Eigen::MatrixXd> llt(v);
        Eigen::VectorXd q = llt.solve(resid_vec);
        double logdet = 0.0;
        for (int j = 0; j < 2 * n; ++j) logdet += 2.0 * std::log(llt.matrixL()(j, j));
        dense += -0.5 * (2 * n * kLog2Pi + logdet + resid_vec.dot(q));
    }
    CHECK(ll == doctest::Approx(dense).epsilon(1e-10));
}

TEST_CASE("joint log-likelihood is invariant to subject order") {
    auto ds = small_joint_data(6, 33);
    auto spec = small_joint_spec(CorrFamily::iid);
    Eigen::Vector2d beta(7.0, -0.1);
    Eigen::VectorXd alpha = Eigen::VectorXd::Constant(1, 0.4);
    Eigen::Matrix2d psi;
    psi << 2.0, -0.05, -0.05, 0.004;
    ResidualSpec resid;
    resid.sigma_eps = 1.5;
    resid.sigma_zeta = 0.05;
    const double ll = joint_loglik(ds, spec, beta, alpha, psi, resid);
    std::reverse(ds.subjects.begin(), ds.subjects.end());
    CHECK(joint_loglik(ds, spec, beta, alpha, psi, resid) ==
          doctest::Approx(ll).epsilon(1e-12));
}

TEST_CASE("a decoupled joint model factorizes into two univariate models") {
    auto ds = small_joint_data(8, 35);
    auto spec = small_joint_spec(CorrFamily::iid);
    Eigen::Vector2d beta(6.9, -0.11);
    Eigen::VectorXd alpha = Eigen::VectorXd::Constant(1, 0.42);
    Eigen::Matrix2d psi;  // block-diagonal: no cross-process random effects
    psi << 2.4, 0.0, 0.0, 0.0036;
    ResidualSpec resid;
    resid.sigma_eps = 1.45;
    resid.sigma_zeta = 0.055;
    resid.rho_eps = 0.0;

    const double ll = joint_loglik(ds, spec, beta, alpha, psi, resid);

    LmmSpec y_spec;
    y_spec.fixed = {ModelTerm::intercept(), ModelTerm::time()};
    y_spec.random = {ModelTerm::intercept()};
    const double ll_y = lmm_loglik(ds, y_spec, beta,
                                   Eigen::MatrixXd::Constant(1, 1, psi(0, 0)), resid.sigma_eps);

    LmmSpec r_spec;
    r_spec.fixed = {ModelTerm::intercept()};
    r_spec.random = {ModelTerm::intercept()};
    auto rds = intervals_as_response(ds);
    const double ll_r = lmm_loglik(rds, r_spec, alpha,
                                   Eigen::MatrixXd::Constant(1, 1, psi(1, 1)), resid.sigma_zeta);

    CHECK(ll == doctest::Approx(ll_y + ll_r).epsilon(1e-10));
}

TEST_CASE("joint profile gradient matches finite differences") {
    for (CorrFamily family : {CorrFamily::iid, CorrFamily::exponential}) {
        auto ds = small_joint_data(5, 37);
        auto spec = small_joint_spec(family);
        detail::JointProfileObjective obj(ds, spec);
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(obj.n_params());
        theta[0] = std::log(1.5);    // sd(b0)
        theta[1] = std::log(0.06);   // sd(u0)
        theta[2] = std::atanh(-0.5);
        theta[3] = std::log(1.4);    // sigma_eps
        theta[4] = std::log(0.05);   // sigma_zeta
        theta[5] = std::atanh(-0.2);
        if (family == CorrFamily::exponential) {
            theta[6] = 0.3;  // bounded-map coordinates for range and nugget
            theta[7] = -0.4;
        }
        Eigen::VectorXd g_analytic;
        (void)obj(theta, &g_analytic);
        Objective f = [&](const Eigen::VectorXd& th, Eigen::VectorXd* g) {
            return obj(th, g);
        };
        Eigen::VectorXd g_fd = fd_gradient(f, theta, 1e-6);
        CHECK((g_analytic - g_fd).cwiseAbs().maxCoeff() /
                  std::max(1.0, g_fd.cwiseAbs().maxCoeff()) <
              1e-5);
    }
}

TEST_CASE("joint fit requires recommended intervals") {
    auto ds = small_joint_data(5, 39, /*with_r=*/false);
    auto spec = small_joint_spec(CorrFamily::iid);
    try {
        (void)fit_joint(ds, spec);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("univariate") != std::string::npos);
    }
}

TEST_CASE("the joint fit dominates separately fitted submodels") {
    auto ds = small_joint_data(60, 43);
    auto spec = small_joint_spec(CorrFamily::iid);
    FitOptions opts;
    opts.compute_se = false;
    opts.n_starts = 1;
    FitResult joint = fit_joint(ds, spec, opts);
    REQUIRE(joint.converged);

    LmmSpec y_spec;
    y_spec.fixed = {ModelTerm::intercept(), ModelTerm::time()};
    y_spec.random = {ModelTerm::intercept()};
    FitResult fy = fit_lmm(ds, y_spec, opts);
    LmmSpec r_spec;
    r_spec.fixed = {ModelTerm::intercept()};
    r_spec.random = {ModelTerm::intercept()};
    FitResult fr = fit_lmm(intervals_as_response(ds), r_spec, opts);
    CHECK(joint.loglik >= fy.loglik + fr.loglik - 1e-6);
}

TEST_CASE("joint fit reports named parameters on the natural scale") {
    auto ds = small_joint_data(80, 47);
    auto spec = small_joint_spec(CorrFamily::iid);
    FitOptions opts;
    opts.n_starts = 1;
    FitResult fit = fit_joint(ds, spec, opts);
    REQUIRE(fit.converged);
    CHECK(fit.fixed_names.size() == 3);
    CHECK(std::abs(fit.var_by_name("rho_eps")) < 1.0);
    CHECK(fit.var_by_name("sigma_eps") > 0.0);
    CHECK(fit.var_by_name("sigma_zeta") > 0.0);
    CHECK(fit.residual.sigma_eps == doctest::Approx(fit.var_by_name("sigma_eps")));
    // Generated with sigma_eps = 1.5; the estimate should land nearby.
    CHECK(fit.var_by_name("sigma_eps") == doctest::Approx(1.5).epsilon(0.15));
    CHECK(fit.var_se.size() == fit.var_values.size());
    // Repeat fits are bit-identical.
    FitResult again = fit_joint(ds, spec, opts);
    CHECK(again.loglik == fit.loglik);
    CHECK(again.var_values == fit.var_values);
}

TEST_CASE("decoupled data yields near-zero cross correlation") {
    JointGenSpec gen;
    gen.y_fixed = {ModelTerm::intercept(), ModelTerm::time()};
    gen.r_fixed = {ModelTerm::intercept()};
    gen.y_random = {ModelTerm::intercept()};
    gen.r_random = {ModelTerm::intercept()};
    gen.beta = Eigen::Vector2d(7.0, -0.10);
    gen.alpha = Eigen::VectorXd::Constant(1, 0.4);
    gen.re.names = {"b0", "u0"};
    gen.re.sds = Eigen::Vector2d(1.6, 0.06);
    gen.re.corr = Eigen::Matrix2d::Identity();
    gen.residual.sigma_eps = 1.5;
    gen.residual.sigma_zeta = 0.05;
    gen.residual.rho_eps = 0.0;
    auto ds = simulate_joint_model(gen, 150, 51);
    auto spec = small_joint_spec(CorrFamily::iid);
    FitOptions opts;
    opts.n_starts = 1;
    FitResult fit = fit_joint(ds, spec, opts);
    REQUIRE(fit.converged);
    int idx = -1;
    for (std::size_t i = 0; i < fit.var_names.size(); ++i) {
        if (fit.var_names[i].rfind("corr(", 0) == 0) idx = static_cast<int>(i);
    }
    REQUIRE(idx >= 0);
    CHECK(std::abs(fit.var_values[idx]) < 3.0 * fit.var_se[idx] + 0.05);
}
