#include "longit/bias_theory.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "longit/rng.hpp"

namespace longit {

std::vector<SubjectVisitStats> stats_from_draws(const std::vector<IntervalDraw>& draws,
                                                const Eigen::MatrixXd& h, const Eigen::MatrixXd& x,
                                                const Eigen::MatrixXd& z) {
    std::vector<SubjectVisitStats> out;
    out.reserve(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) {
        SubjectVisitStats s;
        s.n_visits = draws[i].n_visits;
        s.u_sum = draws[i].u;
        s.h = h.row(static_cast<int>(i));
        s.x = x.row(static_cast<int>(i));
        s.z = z.row(static_cast<int>(i));
        out.push_back(std::move(s));
    }
    return out;
}

CondMoments conditional_re_moments(const SubjectVisitStats& stats, const Eigen::MatrixXd& sigma_b,
                                   const Eigen::VectorXd& gamma, double sigma_eta,
                                   const Eigen::VectorXd& alpha) {
    if (!(sigma_eta > 0.0)) throw std::invalid_argument("conditional_re_moments: sigma_eta must be positive");
    if (stats.n_visits < 1) throw std::invalid_argument("conditional_re_moments: n_visits must be >= 1");
    Eigen::LLT<Eigen::MatrixXd> llt(sigma_b);
    if (llt.info() != Eigen::Success) {
        throw std::invalid_argument("conditional_re_moments: Sigma_b not positive definite");
    }
    const int q = static_cast<int>(sigma_b.rows());
    const double se2 = sigma_eta * sigma_eta;
    Eigen::MatrixXd precision =
        stats.n_visits * (gamma * gamma.transpose()) / se2 +
        llt.solve(Eigen::MatrixXd::Identity(q, q));
    CondMoments out;
    out.cov = precision.llt().solve(Eigen::MatrixXd::Identity(q, q));
    out.cov = ((out.cov + out.cov.transpose()) / 2.0).eval();
    const double shift = stats.u_sum - stats.n_visits * stats.h.dot(alpha);
    out.mean = out.cov * gamma / se2 * shift;
    return out;
}

double gls_weight(const SubjectVisitStats& stats, const Eigen::MatrixXd& sigma_b,
                  double sigma_eps) {
    if (stats.n_visits < 1) throw std::invalid_argument("gls_weight: n_visits must be >= 1");
    const double denom =
        stats.z.dot(sigma_b * stats.z) + sigma_eps * sigma_eps / stats.n_visits;
    return 1.0 / denom;
}

Eigen::VectorXd bias_general(const std::vector<SubjectVisitStats>& population,
                             const Eigen::MatrixXd& sigma_b,
                             const std::vector<Eigen::VectorXd>& gamma_per_subject,
                             double sigma_eta, const Eigen::VectorXd& alpha, double sigma_eps) {
    if (population.empty()) throw std::invalid_argument("bias_general: empty population");
    const int p = static_cast<int>(population.front().x.size());
    Eigen::MatrixXd xwx = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    for (std::size_t i = 0; i < population.size(); ++i) {
        const auto& s = population[i];
        const double w = gls_weight(s, sigma_b, sigma_eps);
        xwx.noalias() += w * s.x * s.x.transpose();
        CondMoments cm = conditional_re_moments(s, sigma_b, gamma_per_subject[i], sigma_eta, alpha);
        rhs.noalias() += w * s.x * s.z.dot(cm.mean);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(xwx, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double cond = svd.singularValues()(0) / svd.singularValues()(p - 1);
    if (!std::isfinite(cond) || cond > 1e12) {
        std::ostringstream ss;
        ss << "bias_general: singular design, condition number " << cond;
        throw std::invalid_argument(ss.str());
    }
    return xwx.ldlt().solve(rhs);
}

namespace {

// Per-subject kernel of the intercept-only expression; shared with the
// binary-covariate case where alpha0 is replaced by the group mean interval.
double kernel(const SubjectVisitStats& s, double mean_interval, double gamma0, double r) {
    return (s.u_sum - s.n_visits * mean_interval) / gamma0 / (s.n_visits + r);
}

double ratio_r(double sigma_b, double sigma_eta, double gamma0) {
    return sigma_eta * sigma_eta / (sigma_b * sigma_b * gamma0 * gamma0);
}

struct WeightedMean {
    double mean = 0.0;
    double se = 0.0;
};

template <typename Filter>
WeightedMean weighted_kernel_mean(const std::vector<SubjectVisitStats>& population,
                                  double mean_interval, double gamma0, double r, double sigma_b,
                                  double sigma_eps, Filter keep) {
    double sw = 0.0, swk = 0.0;
    long n = 0;
    for (const auto& s : population) {
        if (!keep(s)) continue;
        const double w = 1.0 / (sigma_b * sigma_b + sigma_eps * sigma_eps / s.n_visits);
        sw += w;
        swk += w * kernel(s, mean_interval, gamma0, r);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("bias: empty group");
    WeightedMean out;
    out.mean = swk / sw;
    double ss = 0.0;
    for (const auto& s : population) {
        if (!keep(s)) continue;
        const double w = 1.0 / (sigma_b * sigma_b + sigma_eps * sigma_eps / s.n_visits);
        const double d = w * (kernel(s, mean_interval, gamma0, r) - out.mean);
        ss += d * d;
    }
    out.se = std::sqrt(ss) / sw;
    return out;
}

}  // namespace

double bias_intercept_only(const std::vector<SubjectVisitStats>& population, double alpha0,
                           double gamma0, double sigma_b, double sigma_eta, double sigma_eps) {
    if (population.empty()) throw std::invalid_argument("bias_intercept_only: empty population");
    if (gamma0 == 0.0) return 0.0;  // analytic limit: unlinked processes
    const double r = ratio_r(sigma_b, sigma_eta, gamma0);
    return weighted_kernel_mean(population, alpha0, gamma0, r, sigma_b, sigma_eps,
                                [](const SubjectVisitStats&) { return true; })
        .mean;
}

double bias_intercept_only_mc_se(const std::vector<SubjectVisitStats>& population, double alpha0,
                                 double gamma0, double sigma_b, double sigma_eta,
                                 double sigma_eps) {
    if (gamma0 == 0.0) return 0.0;
    const double r = ratio_r(sigma_b, sigma_eta, gamma0);
    return weighted_kernel_mean(population, alpha0, gamma0, r, sigma_b, sigma_eps,
                                [](const SubjectVisitStats&) { return true; })
        .se;
}

namespace {

WeightedMean binary_group_term(const std::vector<SubjectVisitStats>& population, int group,
                               double alpha0, double alpha1, double gamma0, double sigma_b,
                               double sigma_eta, double sigma_eps) {
    const double r = ratio_r(sigma_b, sigma_eta, gamma0);
    const double mean_interval = group == 1 ? alpha0 + alpha1 : alpha0;
    return weighted_kernel_mean(
        population, mean_interval, gamma0, r, sigma_b, sigma_eps,
        [group](const SubjectVisitStats& s) { return static_cast<int>(s.x[0]) == group; });
}

}  // namespace

double bias_binary_covariate(const std::vector<SubjectVisitStats>& population, double alpha0,
                             double alpha1, double gamma0, double sigma_b, double sigma_eta,
                             double sigma_eps) {
    if (gamma0 == 0.0) return 0.0;
    WeightedMean g1 = binary_group_term(population, 1, alpha0, alpha1, gamma0, sigma_b, sigma_eta, sigma_eps);
    WeightedMean g0 = binary_group_term(population, 0, alpha0, alpha1, gamma0, sigma_b, sigma_eta, sigma_eps);
    return g1.mean - g0.mean;
}

double bias_binary_covariate_mc_se(const std::vector<SubjectVisitStats>& population, double alpha0,
                                   double alpha1, double gamma0, double sigma_b, double sigma_eta,
                                   double sigma_eps) {
    if (gamma0 == 0.0) return 0.0;
    WeightedMean g1 = binary_group_term(population, 1, alpha0, alpha1, gamma0, sigma_b, sigma_eta, sigma_eps);
    WeightedMean g0 = binary_group_term(population, 0, alpha0, alpha1, gamma0, sigma_b, sigma_eta, sigma_eps);
    return std::sqrt(g1.se * g1.se + g0.se * g0.se);
}

std::vector<SubjectVisitStats> theory_population(const TheoryBase& base, int n_subjects,
                                                 std::uint64_t seed, bool with_binary_covariate) {
    MemoryIntervalParams params;
    params.sigma_eta = base.sigma_eta;
    params.tau = base.tau;
    params.floor = base.floor;
    params.gamma = Eigen::VectorXd::Constant(1, base.gamma0);
    params.re.names = {"b0"};
    params.re.sds = Eigen::VectorXd::Constant(1, base.sigma_b);
    params.re.corr = Eigen::MatrixXd::Identity(1, 1);

    std::vector<std::map<std::string, double>> baselines;
    if (with_binary_covariate) {
        params.h_terms = {ModelTerm::intercept(), ModelTerm::covariate("x")};
        params.alpha = Eigen::Vector2d(base.alpha0, base.alpha1);
        baselines.resize(n_subjects);
        auto rng = make_stream(mix64(seed) ^ 0xb1a5ULL, 0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (auto& bl : baselines) bl["x"] = unif(rng) < 0.5 ? 1.0 : 0.0;
    } else {
        params.alpha = Eigen::VectorXd::Constant(1, base.alpha0);
    }

    auto draws = gen_intervals_memory(params, baselines, n_subjects, seed);
    std::vector<SubjectVisitStats> out;
    out.reserve(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) {
        SubjectVisitStats s;
        s.n_visits = draws[i].n_visits;
        s.u_sum = draws[i].u;
        s.z = Eigen::VectorXd::Ones(1);
        if (with_binary_covariate) {
            const double xv = baselines[i].at("x");
            s.h = Eigen::Vector2d(1.0, xv);
            s.x = Eigen::VectorXd::Constant(1, xv);
        } else {
            s.h = Eigen::VectorXd::Ones(1);
            s.x = Eigen::VectorXd::Ones(1);
        }
        out.push_back(std::move(s));
    }
    return out;
}

BiasReport sweep_bias(SweepKnob knob, const std::vector<double>& grid, const TheoryBase& base,
                      int n_subjects, std::uint64_t seed) {
    if (grid.empty()) throw std::invalid_argument("sweep_bias: empty grid");
    BiasReport report;
    for (double g : grid) {
        TheoryBase b = base;
        bool binary = false;
        switch (knob) {
            case SweepKnob::sigma_b:
                report.knob = "sigma_b";
                b.sigma_b = g;
                break;
            case SweepKnob::gamma0_magnitude:
                report.knob = "gamma0_magnitude";
                b.gamma0 = base.gamma0 < 0.0 ? -g : g;
                break;
            case SweepKnob::alpha0:
                report.knob = "alpha0";
                b.alpha0 = g;
                break;
            case SweepKnob::alpha1:
                report.knob = "alpha1";
                b.alpha1 = g;
                binary = true;
                break;
        }
        auto pop = theory_population(b, n_subjects, seed, binary);
        BiasPoint pt;
        pt.grid_value = g;
        if (binary) {
            pt.bias = bias_binary_covariate(pop, b.alpha0, b.alpha1, b.gamma0, b.sigma_b,
                                            b.sigma_eta, b.sigma_eps);
            pt.mc_se = bias_binary_covariate_mc_se(pop, b.alpha0, b.alpha1, b.gamma0, b.sigma_b,
                                                   b.sigma_eta, b.sigma_eps);
        } else {
            pt.bias = bias_intercept_only(pop, b.alpha0, b.gamma0, b.sigma_b, b.sigma_eta,
                                          b.sigma_eps);
            pt.mc_se = bias_intercept_only_mc_se(pop, b.alpha0, b.gamma0, b.sigma_b, b.sigma_eta,
                                                 b.sigma_eps);
        }
        report.points.push_back(pt);
    }
    return report;
}

}  // namespace longit
