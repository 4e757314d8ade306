#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "longit/bias_theory.hpp"
#include "longit/data.hpp"
#include "longit/rng.hpp"
#include "longit/visit_sim.hpp"

using namespace longit;

namespace {

MemoryIntervalParams intercept_only_params(double alpha0, double sigma_b, double sigma_eta,
                                           double gamma0, double tau) {
    MemoryIntervalParams p;
    p.alpha = Eigen::VectorXd::Constant(1, alpha0);
    p.gamma = Eigen::VectorXd::Constant(1, gamma0);
    p.re.names = {"b0"};
    p.re.sds = Eigen::VectorXd::Constant(1, sigma_b);
    p.re.corr = Eigen::MatrixXd::Identity(1, 1);
    p.sigma_eta = sigma_eta;
    p.tau = tau;
    return p;
}

std::vector<std::map<std::string, double>> empty_baselines(int n) {
    return std::vector<std::map<std::string, double>>(static_cast<std::size_t>(n));
}

double mean_visits(const LongitudinalDataset& ds) {
    double total = 0.0;
    for (const auto& s : ds.subjects) total += s.n_visits();
    return total / static_cast<double>(ds.subjects.size());
}

}  // namespace

TEST_CASE("deterministic interval process: constant 50-day gaps over 200 days") {
    auto p = intercept_only_params(50.0, 0.0, 0.0, -1.0, 200.0);
    auto draws = gen_intervals_memory(p, empty_baselines(3), 3, 99);
    REQUIRE(draws.size() == 3);
    for (const auto& d : draws) {
        CHECK(d.n_visits == 5);
        CHECK(d.u == doctest::Approx(250.0));
        REQUIRE(d.times.size() == 5);
        CHECK(d.times[0] == doctest::Approx(0.0));
        CHECK(d.times[1] == doctest::Approx(50.0));
        CHECK(d.times[4] == doctest::Approx(200.0));
        for (double s : d.s) CHECK(s == doctest::Approx(50.0));
    }
}

TEST_CASE("interval floor binds for tiny recommended gaps") {
    auto p = intercept_only_params(0.5, 0.0, 0.0, -1.0, 30.0);
    p.floor = 7.0;
    auto draws = gen_intervals_memory(p, empty_baselines(1), 1, 1);
    for (double s : draws[0].s) CHECK(s == doctest::Approx(7.0));
    CHECK(draws[0].n_visits == 5);  // gaps of 7 until the sum passes 30
}

TEST_CASE("interval draws respect tau and report the overshoot sum") {
    auto p = intercept_only_params(60.0, std::sqrt(2.0), 5.0, -1.0, 200.0);
    auto draws = gen_intervals_memory(p, empty_baselines(200), 200, 7);
    for (const auto& d : draws) {
        CHECK(d.u > p.tau);
        CHECK(d.n_visits == static_cast<int>(d.s.size()));
        double partial = std::accumulate(d.s.begin(), d.s.end() - 1, 0.0);
        CHECK(partial <= p.tau + 1e-9);
        for (std::size_t j = 0; j < d.times.size(); ++j) {
            CHECK(d.times[j] >= 0.0);
            CHECK(d.times[j] <= p.tau + 1e-9);
        }
        double su = std::accumulate(d.s.begin(), d.s.end(), 0.0);
        CHECK(d.u == doctest::Approx(su));
    }
}

TEST_CASE("interval process is reproducible under a fixed seed") {
    auto p = intercept_only_params(200.0 / 3.0, std::sqrt(2.0), 1.0, -1.0, 200.0);
    auto a = gen_intervals_memory(p, empty_baselines(50), 50, 31);
    auto b = gen_intervals_memory(p, empty_baselines(50), 50, 31);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].n_visits == b[i].n_visits);
        CHECK(a[i].u == b[i].u);
    }
    auto c = gen_intervals_memory(p, empty_baselines(50), 50, 32);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) any_diff = any_diff || a[i].u != c[i].u;
    CHECK(any_diff);
}

TEST_CASE("with gamma = 0 the mean interval matches the baseline recommendation") {
    auto p = intercept_only_params(40.0, std::sqrt(2.0), 3.0, 0.0, 200.0);
    auto draws = gen_intervals_memory(p, empty_baselines(4000), 4000, 5);
    double sum = 0.0;
    long count = 0;
    for (const auto& d : draws) {
        for (double s : d.s) {
            sum += s;
            ++count;
        }
    }
    // eta has sd 3 around a mean of 40 with a floor at 7, so truncation bias
    // is negligible; 3 MC SEs of the interval mean.
    const double mc_se = 3.0 / std::sqrt(static_cast<double>(count));
    CHECK(std::abs(sum / static_cast<double>(count) - 40.0) < 3.0 * mc_se);
}

TEST_CASE("weibull adherence has mean r * Gamma(1 + 1/shape)") {
    const double r = 0.25, shape = 10.0;
    auto draws = gen_adherence_batch(r, shape, 100000, 12);
    double m = std::accumulate(draws.begin(), draws.end(), 0.0) / 1e5;
    const double expected = r * std::tgamma(1.0 + 1.0 / shape);
    // Weibull(k=10) sd is about 0.12 * scale.
    CHECK(std::abs(m - expected) < 3.0 * 0.12 * r / std::sqrt(1e5));
    for (double d : draws) CHECK(d > 0.0);
}

TEST_CASE("random effects: zero sds give exact zeros, sampling matches Psi") {
    RandomEffectSpec spec;
    spec.names = {"b0", "b1"};
    spec.sds = Eigen::Vector2d(1.6, 0.0);
    spec.corr = Eigen::Matrix2d::Identity();
    Eigen::MatrixXd b = gen_random_effects(spec, 100, 3);
    CHECK(b.rows() == 100);
    CHECK(b.col(1).cwiseAbs().maxCoeff() == 0.0);

    spec.sds = Eigen::Vector2d(1.6, 1.2);
    spec.corr(0, 1) = spec.corr(1, 0) = -0.5;
    Eigen::MatrixXd big = gen_random_effects(spec, 60000, 4);
    Eigen::MatrixXd centered = big.rowwise() - big.colwise().mean();
    Eigen::MatrixXd cov = centered.transpose() * centered / (big.rows() - 1.0);
    Eigen::MatrixXd psi = build_psi(spec);
    CHECK((cov - psi).cwiseAbs().maxCoeff() < 0.05);
    // Determinism.
    Eigen::MatrixXd again = gen_random_effects(spec, 10, 4);
    CHECK(again == big.topRows(10));
}

TEST_CASE("memoryless comparator hits expected visit counts") {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(400, 1);
    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(1);
    auto never = gen_visits_memoryless([](double) { return -1e9; }, gamma, b, 1.0, 10.0, 1);
    for (const auto& v : never) CHECK(v.empty());
    auto always = gen_visits_memoryless([](double) { return 0.0; }, gamma, b, 1.0, 10.0, 1);
    for (const auto& v : always) CHECK(v.size() == 10);
    const double p = std::exp(-1.0);
    auto some = gen_visits_memoryless([](double) { return -1.0; }, gamma, b, 1.0, 10.0, 2);
    double total = 0.0;
    for (const auto& v : some) total += static_cast<double>(v.size());
    const double mean = total / 400.0;
    const double se = std::sqrt(10.0 * p * (1.0 - p) / 400.0);
    CHECK(std::abs(mean - 10.0 * p) < 4.0 * se);
}

TEST_CASE("theory outcome layer produces a valid dataset with matching times") {
    auto p = intercept_only_params(200.0 / 3.0, std::sqrt(2.0), 1.0, -1.0, 200.0);
    auto draws = gen_intervals_memory(p, empty_baselines(100), 100, 8);
    TheoryOutcomeParams out;
    out.fixed_terms = {ModelTerm::intercept(), ModelTerm::time()};
    out.beta = Eigen::Vector2d(0.0, -0.01);
    out.sigma_eps = 5.0;
    LongitudinalDataset ds = theory_dataset(draws, empty_baselines(100), out, p.tau, 9);
    CHECK(ds.time_unit == "days");
    CHECK(validate_dataset(ds).empty());
    REQUIRE(ds.subjects.size() == 100);
    for (std::size_t i = 0; i < draws.size(); ++i) {
        CHECK(ds.subjects[i].visit_times == draws[i].times);
        CHECK(ds.subjects[i].y.size() == draws[i].times.size());
        REQUIRE(ds.subjects[i].u_sum.has_value());
        CHECK(*ds.subjects[i].u_sum == doctest::Approx(draws[i].u));
    }
}

TEST_CASE("study scenario 1 reproduces its published visit intensity") {
    auto sc = StudyScenario::study1_default();
    LongitudinalDataset ds = simulate_study(sc, 2000, 21);
    CHECK(validate_dataset(ds).empty());
    CHECK(mean_visits(ds) == doctest::Approx(5.2).epsilon(0.06));
    for (const auto& s : ds.subjects) {
        CHECK(s.r.size() == s.visit_times.size());
        for (double r : s.r) CHECK(r >= sc.r_floor - 1e-12);
    }
}

TEST_CASE("study scenario 2 visit intensity differs by arm") {
    auto sc = StudyScenario::study2_default();
    LongitudinalDataset ds = simulate_study(sc, 2000, 22);
    CHECK(validate_dataset(ds).empty());
    double treated = 0.0, control = 0.0;
    int nt = 0, nc = 0;
    for (const auto& s : ds.subjects) {
        REQUIRE(s.baseline.count("x") == 1);
        if (s.baseline.at("x") > 0.5) {
            treated += s.n_visits();
            ++nt;
        } else {
            control += s.n_visits();
            ++nc;
        }
    }
    REQUIRE(nt > 0);
    REQUIRE(nc > 0);
    CHECK(treated / nt == doctest::Approx(18.7).epsilon(0.05));
    CHECK(control / nc == doctest::Approx(4.8).epsilon(0.08));
}

TEST_CASE("study scenario 2 homogenized removes the arm difference") {
    auto sc = StudyScenario::study2_default();
    sc.homogenize = true;
    LongitudinalDataset ds = simulate_study(sc, 1500, 23);
    double treated = 0.0, control = 0.0;
    int nt = 0, nc = 0;
    for (const auto& s : ds.subjects) {
        if (s.baseline.at("x") > 0.5) {
            treated += s.n_visits();
            ++nt;
        } else {
            control += s.n_visits();
            ++nc;
        }
    }
    // The unhomogenized gap is ~14 visits; anything within MC noise of zero
    // confirms the arms share one process.
    CHECK(std::abs(treated / nt - control / nc) < 1.0);
}

TEST_CASE("study scenario 3 reproduces its published visit intensity") {
    auto sc = StudyScenario::study3_default();
    LongitudinalDataset ds = simulate_study(sc, 2000, 24);
    CHECK(validate_dataset(ds).empty());
    CHECK(mean_visits(ds) == doctest::Approx(3.7).epsilon(0.09));
}

TEST_CASE("study simulation is reproducible and seed-sensitive") {
    auto sc = StudyScenario::study1_default();
    auto a = simulate_study(sc, 30, 5);
    auto b = simulate_study(sc, 30, 5);
    REQUIRE(a.subjects.size() == b.subjects.size());
    for (std::size_t i = 0; i < a.subjects.size(); ++i) {
        CHECK(a.subjects[i].visit_times == b.subjects[i].visit_times);
        CHECK(a.subjects[i].y == b.subjects[i].y);
    }
    auto c = simulate_study(sc, 30, 6);
    bool diff = false;
    for (std::size_t i = 0; i < a.subjects.size(); ++i)
        diff = diff || a.subjects[i].y != c.subjects[i].y;
    CHECK(diff);
}

TEST_CASE("scenario knobs rescale the random effects and slope link") {
    auto sc = StudyScenario::study1_default();
    const Eigen::VectorXd sds0 = sc.re.sds;
    sc.scale_re_variances(4.0);
    CHECK((sc.re.sds - sds0 / 2.0).cwiseAbs().maxCoeff() < 1e-12);
    sc.set_slope_correlation(-0.3);
    CHECK(sc.re.corr(1, 3) == doctest::Approx(-0.3));
    CHECK(sc.re.corr(3, 1) == doctest::Approx(-0.3));
    CHECK_NOTHROW((void)build_psi(sc.re));
}

TEST_CASE("sequential gaussian sampling matches its target covariance") {
    // AR-like 3-vector appended one coordinate at a time.
    Eigen::Matrix3d target;
    target << 2.0, 0.8, 0.3, 0.8, 1.5, 0.6, 0.3, 0.6, 1.0;
    const int n = 40000;
    Eigen::MatrixXd draws(n, 3);
    auto rng = make_stream(77, 0);
    for (int i = 0; i < n; ++i) {
        SequentialGaussian sg([&](int a, int b) { return target(a, b); });
        for (int j = 0; j < 3; ++j) draws(i, j) = sg.next(rng);
    }
    Eigen::MatrixXd centered = draws.rowwise() - draws.colwise().mean();
    Eigen::MatrixXd cov = centered.transpose() * centered / (n - 1.0);
    CHECK((cov - target).cwiseAbs().maxCoeff() < 0.06);
}

TEST_CASE("joint-model generator produces valid, reproducible data") {
    JointGenSpec spec;
    spec.y_fixed = {ModelTerm::intercept(), ModelTerm::time()};
    spec.r_fixed = {ModelTerm::intercept()};
    spec.y_random = {ModelTerm::intercept(), ModelTerm::time()};
    spec.r_random = {ModelTerm::intercept()};
    spec.beta = Eigen::Vector2d(7.0, -0.10);
    spec.alpha = Eigen::VectorXd::Constant(1, 0.4);
    spec.re.names = {"y0", "y1", "r0"};
    spec.re.sds = Eigen::Vector3d(1.6, 1.2, 0.06);
    spec.re.corr = Eigen::Matrix3d::Identity();
    spec.re.corr(0, 2) = spec.re.corr(2, 0) = -0.5;
    spec.residual.sigma_eps = 1.5;
    spec.residual.sigma_zeta = 0.05;
    spec.residual.rho_eps = -0.3;
    LongitudinalDataset ds = simulate_joint_model(spec, 200, 41);
    CHECK(validate_dataset(ds).empty());
    for (const auto& s : ds.subjects) {
        CHECK(s.r.size() == s.visit_times.size());
        CHECK(s.y.size() == s.visit_times.size());
    }
    auto again = simulate_joint_model(spec, 200, 41);
    CHECK(again.subjects[7].y == ds.subjects[7].y);
    // Recommendation fixed effect should dominate the observed level.
    double rbar = 0.0;
    long cnt = 0;
    for (const auto& s : ds.subjects)
        for (double r : s.r) {
            rbar += r;
            ++cnt;
        }
    CHECK(rbar / cnt == doctest::Approx(0.4).epsilon(0.1));
}
