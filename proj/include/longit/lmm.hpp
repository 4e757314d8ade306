#ifndef LONGIT_LMM_HPP
#define LONGIT_LMM_HPP

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "longit/corr_param.hpp"
#include "longit/data.hpp"
#include "longit/optimizer.hpp"
#include "longit/terms.hpp"

namespace longit {

// Univariate linear mixed model: Y_ij = X_ij' beta + Z_ij' b_i + eps_ij,
// b_i ~ N(0, Psi), eps iid N(0, sigma_eps^2).
struct LmmSpec {
    std::vector<ModelTerm> fixed;
    std::vector<ModelTerm> random;
};

struct FitResult {
    std::vector<std::string> fixed_names;
    Eigen::VectorXd fixed;
    Eigen::VectorXd fixed_se;

    std::vector<std::string> var_names;  // natural scale: sds, correlations, residual sds
    Eigen::VectorXd var_values;
    Eigen::VectorXd var_se;

    Eigen::MatrixXd psi;  // fitted random-effect covariance
    double sigma_eps = 0.0;
    ResidualSpec residual;  // populated by fit_joint

    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    double grad_norm = 0.0;

    [[nodiscard]] double fixed_by_name(const std::string& name) const;
    [[nodiscard]] double var_by_name(const std::string& name) const;
};

struct FitOptions {
    OptimOptions optim;
    int n_starts = 3;
    double start_jitter = 0.5;       // on the transformed scale
    std::uint64_t jitter_seed = 17;  // internal, fixed: refits are deterministic
    bool compute_se = true;
};

// Exact marginal Gaussian log-likelihood at explicit parameter values.
// Returns -inf when some per-subject covariance is not positive definite.
[[nodiscard]] double lmm_loglik(const LongitudinalDataset& ds, const LmmSpec& spec,
                                const Eigen::VectorXd& beta, const Eigen::MatrixXd& psi,
                                double sigma_eps);

[[nodiscard]] FitResult fit_lmm(const LongitudinalDataset& ds, const LmmSpec& spec,
                                const FitOptions& opts = {});

// Posterior-mean random effects E[b_i | y_i; theta-hat], one row per subject.
[[nodiscard]] Eigen::MatrixXd predict_blups(const FitResult& fit, const LongitudinalDataset& ds,
                                            const LmmSpec& spec);

// Random-intercept ICC sigma_b^2 / (sigma_b^2 + sigma_eps^2). Throws unless
// the model's first random term is an intercept.
[[nodiscard]] double icc(const FitResult& fit, const LmmSpec& spec);

namespace detail {

// Profiled negative log-likelihood over the transformed variance parameters
// [log sds, atanh correlations, log sigma_eps]; beta is concentrated out by
// GLS. Exposed for gradient checks.
class LmmProfileObjective {
  public:
    LmmProfileObjective(const LongitudinalDataset& ds, const LmmSpec& spec);

    double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const;

    [[nodiscard]] Eigen::VectorXd beta_at(const Eigen::VectorXd& theta) const;
    [[nodiscard]] Eigen::MatrixXd beta_cov_at(const Eigen::VectorXd& theta) const;

    [[nodiscard]] int n_params() const { return q_ + corr_.n_free() + 1; }
    [[nodiscard]] int n_random() const { return q_; }
    [[nodiscard]] const CorrStructure& corr_structure() const { return corr_; }

    void unpack(const Eigen::VectorXd& theta, Eigen::MatrixXd& psi, double& sigma_eps) const;

  private:
    struct SubjectDesign {
        Eigen::MatrixXd x, z;
        Eigen::VectorXd y;
    };
    std::vector<SubjectDesign> designs_;
    int q_ = 0;
    int p_ = 0;
    long n_total_ = 0;
    CorrStructure corr_;

    bool assemble(const Eigen::VectorXd& theta, Eigen::MatrixXd& psi, double& sigma2,
                  Eigen::MatrixXd& xvx, Eigen::VectorXd& xvy, double& yvy, double& logdet) const;
};

}  // namespace detail

}  // namespace longit

#endif
