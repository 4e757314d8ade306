#ifndef LONGIT_VISIT_SIM_HPP
#define LONGIT_VISIT_SIM_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "longit/data.hpp"
#include "longit/terms.hpp"

namespace longit {

// ---------------------------------------------------------------------------
// Basic generators
// ---------------------------------------------------------------------------

// Independent N(0, Psi) draws, one row per subject. Components with sd = 0
// come back as exact zeros.
[[nodiscard]] Eigen::MatrixXd gen_random_effects(const RandomEffectSpec& spec, int n_subjects,
                                                 std::uint64_t seed);

// Weibull adherence draw: observed interval around a recommended interval r
// (scale = r, so the mean is r * Gamma(1 + 1/shape)).
[[nodiscard]] double gen_adherence(double r, double shape, std::mt19937_64& rng);
[[nodiscard]] std::vector<double> gen_adherence_batch(double r, double shape, int n,
                                                      std::uint64_t seed);

// ---------------------------------------------------------------------------
// Interval process with memory: S_ij = H' alpha + sum_k gamma_k b_k f_k(t) + eta
// ---------------------------------------------------------------------------

struct MemoryIntervalParams {
    std::vector<ModelTerm> h_terms{ModelTerm::intercept()};  // baseline design for alpha
    Eigen::VectorXd alpha;
    std::vector<ModelTerm> re_terms{ModelTerm::intercept()};  // loading basis per random effect
    Eigen::VectorXd gamma;
    RandomEffectSpec re;
    double sigma_eta = 1.0;
    double tau = 200.0;
    double floor = 7.0;  // truncation floor for small/negative draws
};

struct IntervalDraw {
    std::vector<double> times;  // in-study visit times, first at 0
    std::vector<double> s;      // intervals drawn; the last one runs past tau
    int n_visits = 0;           // = s.size()
    double u = 0.0;             // sum of s, exceeds tau
    Eigen::VectorXd b;          // the subject's random effects
};

// Draws intervals until the running sum exceeds tau. Visit j sits at the
// cumulative sum of the first j-1 intervals, so every recorded visit time is
// in [0, tau] and the number of visits equals the number of intervals drawn.
// Logs a degeneracy warning to stderr when the floor binds for most subjects.
[[nodiscard]] std::vector<IntervalDraw> gen_intervals_memory(
    const MemoryIntervalParams& params,
    const std::vector<std::map<std::string, double>>& baselines, int n_subjects,
    std::uint64_t seed);

// Memoryless comparator: Bernoulli thinning on a grid of step grid_step with
// visit probability exp(mu(t) + gamma' b), clipped to 1 with a warning.
[[nodiscard]] std::vector<std::vector<double>> gen_visits_memoryless(
    const std::function<double(double)>& mu, const Eigen::VectorXd& gamma,
    const Eigen::MatrixXd& b, double grid_step, double tau, std::uint64_t seed);

// Outcome layered onto already-drawn visit processes:
// Y(t) = fixed(t)' beta + sum_k b_k g_k(t) + eps, eps iid N(0, sigma_eps^2).
struct TheoryOutcomeParams {
    std::vector<ModelTerm> fixed_terms{ModelTerm::intercept()};
    Eigen::VectorXd beta;
    std::vector<ModelTerm> re_terms{ModelTerm::intercept()};
    double sigma_eps = 1.0;
};

[[nodiscard]] LongitudinalDataset theory_dataset(
    const std::vector<IntervalDraw>& draws,
    const std::vector<std::map<std::string, double>>& baselines,
    const TheoryOutcomeParams& outcome, double tau, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Simulation-study scenarios
// ---------------------------------------------------------------------------

enum class Study { study1, study2, study3 };

// One of the three replication-study data-generating mechanisms, with the
// variation knobs exposed as plain fields.
struct StudyScenario {
    Study study = Study::study1;

    double beta0 = 7.0, beta1 = -0.10, beta2 = -1.0, beta3 = 2.0;
    double alpha0 = 1.0, alpha1 = 0.0, alpha2 = 0.0;

    RandomEffectSpec re;  // stacked (b..., u...)
    int n_y_random = 2;   // leading components belong to the outcome submodel

    ResidualSpec residual;  // Y-side residual; sigma_zeta is the R-side sd
    double weibull_shape = 10.0;
    double tau = 2.0;
    double decay_rate = 4.0;  // study 3: w(t) = exp(-k t)
    double r_floor = 1.0 / 52.0;
    bool homogenize = false;  // study 2: everyone follows the control scheme

    [[nodiscard]] static StudyScenario study1_default();
    [[nodiscard]] static StudyScenario study2_default();
    [[nodiscard]] static StudyScenario study3_default();
    [[nodiscard]] static StudyScenario by_name(const std::string& name);

    // Variation knobs for the replication tables.
    void set_slope_correlation(double rho);  // corr(b1, u1)
    void scale_re_variances(double divisor);
};

[[nodiscard]] LongitudinalDataset simulate_study(const StudyScenario& scenario, int n_subjects,
                                                 std::uint64_t seed);

// ---------------------------------------------------------------------------
// Direct generation from a bivariate (Y,R) joint model
// ---------------------------------------------------------------------------

struct JointGenSpec {
    std::vector<ModelTerm> y_fixed, r_fixed, y_random, r_random;
    Eigen::VectorXd beta, alpha;
    RandomEffectSpec re;  // stacked (y_random..., r_random...)
    ResidualSpec residual;
    double weibull_shape = 10.0;
    double tau = 2.0;
    double r_floor = 1.0 / 52.0;
};

// Simulates visits sequentially: Y and R at each visit share the separable
// residual structure, the next visit time is a Weibull adherence draw around
// the (floored) recommended interval.
[[nodiscard]] LongitudinalDataset simulate_joint_model(const JointGenSpec& spec, int n_subjects,
                                                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// Sequential sampling from a growing Gaussian vector
// ---------------------------------------------------------------------------

// Draws components of a zero-mean Gaussian vector one at a time, conditioning
// each new component on everything drawn so far. cov(i, j) indexes variables
// in append order. Used where the covariance depends on realized visit times,
// so the whole vector cannot be drawn up front.
class SequentialGaussian {
  public:
    explicit SequentialGaussian(std::function<double(int, int)> cov) : cov_(std::move(cov)) {}

    double next(std::mt19937_64& rng);

  private:
    std::function<double(int, int)> cov_;
    std::vector<std::vector<double>> l_rows_;  // growing Cholesky factor
    std::vector<double> z_;                    // underlying standard normals
};

}  // namespace longit

#endif
