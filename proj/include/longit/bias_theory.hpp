#ifndef LONGIT_BIAS_THEORY_HPP
#define LONGIT_BIAS_THEORY_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "longit/visit_sim.hpp"

namespace longit {

// Per-subject sufficient statistics for the closed-form bias expressions:
// visit count N_i(tau), interval sum U_i, baseline designs for the interval
// submodel (h), outcome fixed effects (x) and outcome random effects (z).
struct SubjectVisitStats {
    int n_visits = 0;
    double u_sum = 0.0;
    Eigen::VectorXd h;
    Eigen::VectorXd x;
    Eigen::VectorXd z;
};

[[nodiscard]] std::vector<SubjectVisitStats> stats_from_draws(
    const std::vector<IntervalDraw>& draws, const Eigen::MatrixXd& h, const Eigen::MatrixXd& x,
    const Eigen::MatrixXd& z);

struct CondMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

// Conditional distribution of the random effects given the observed interval
// history: cov = (N gamma gamma'/sigma_eta^2 + Sigma_b^-1)^-1,
// mean = cov * gamma / sigma_eta^2 * (U - N h'alpha).
[[nodiscard]] CondMoments conditional_re_moments(const SubjectVisitStats& stats,
                                                 const Eigen::MatrixXd& sigma_b,
                                                 const Eigen::VectorXd& gamma, double sigma_eta,
                                                 const Eigen::VectorXd& alpha);

// GLS weight w_i = (z' Sigma_b z + sigma_eps^2 / N)^-1 for the subject mean.
[[nodiscard]] double gls_weight(const SubjectVisitStats& stats, const Eigen::MatrixXd& sigma_b,
                                double sigma_eps);

// General fixed-effect bias of the univariate MLE over a population,
// gamma_i supplied per subject.
[[nodiscard]] Eigen::VectorXd bias_general(const std::vector<SubjectVisitStats>& population,
                                           const Eigen::MatrixXd& sigma_b,
                                           const std::vector<Eigen::VectorXd>& gamma_per_subject,
                                           double sigma_eta, const Eigen::VectorXd& alpha,
                                           double sigma_eps);

// Intercept-only specialization: weighted average of
// [(1/gamma0)(U - N alpha0)] / (N + sigma_eta^2/(sigma_b^2 gamma0^2)).
// gamma0 == 0 returns the analytic limit 0.
[[nodiscard]] double bias_intercept_only(const std::vector<SubjectVisitStats>& population,
                                         double alpha0, double gamma0, double sigma_b,
                                         double sigma_eta, double sigma_eps);
[[nodiscard]] double bias_intercept_only_mc_se(const std::vector<SubjectVisitStats>& population,
                                               double alpha0, double gamma0, double sigma_b,
                                               double sigma_eta, double sigma_eps);

// Shared-binary-covariate bias in beta1: group-normalized weighted kernels,
// group taken from stats.x[0]. Both groups must be non-empty.
[[nodiscard]] double bias_binary_covariate(const std::vector<SubjectVisitStats>& population,
                                           double alpha0, double alpha1, double gamma0,
                                           double sigma_b, double sigma_eta, double sigma_eps);
[[nodiscard]] double bias_binary_covariate_mc_se(const std::vector<SubjectVisitStats>& population,
                                                 double alpha0, double alpha1, double gamma0,
                                                 double sigma_b, double sigma_eta,
                                                 double sigma_eps);

// ---------------------------------------------------------------------------
// Parameter sweeps over regenerated populations (common random numbers)
// ---------------------------------------------------------------------------

// Base parameter set for the theory replications (time unit: days).
struct TheoryBase {
    double sigma_b = std::sqrt(2.0);
    double sigma_eta = 1.0;
    double tau = 200.0;
    double alpha0 = 200.0 / 3.0;
    double sigma_eps = 5.0;
    double gamma0 = -1.0;
    double alpha1 = 0.0;  // binary-covariate case
    double floor = 7.0;   // one week
};

enum class SweepKnob { sigma_b, gamma0_magnitude, alpha0, alpha1 };

struct BiasPoint {
    double grid_value = 0.0;
    double bias = 0.0;
    double mc_se = 0.0;
};

struct BiasReport {
    std::string knob;
    std::vector<BiasPoint> points;
};

// Evaluates the closed-form bias along a grid, regenerating the interval
// population at each point with the same seed so curves are smooth in the
// common-random-numbers sense.
[[nodiscard]] BiasReport sweep_bias(SweepKnob knob, const std::vector<double>& grid,
                                    const TheoryBase& base, int n_subjects, std::uint64_t seed);

// Population generator used by the sweeps (intercept-only interval model;
// binary covariate via alpha1 when groups is non-null).
[[nodiscard]] std::vector<SubjectVisitStats> theory_population(const TheoryBase& base,
                                                               int n_subjects, std::uint64_t seed,
                                                               bool with_binary_covariate);

}  // namespace longit

#endif
