#ifndef LONGIT_JOINT_HPP
#define LONGIT_JOINT_HPP

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "longit/corr_param.hpp"
#include "longit/data.hpp"
#include "longit/lmm.hpp"
#include "longit/terms.hpp"

namespace longit {

// Bivariate (Y, R) linear mixed model with stacked random effects
// (b, u) ~ N(0, Psi) and separable residual covariance Lambda (x) Omega_i.
struct JointSpec {
    std::vector<ModelTerm> y_fixed, r_fixed;
    std::vector<ModelTerm> y_random, r_random;
    CorrStructure re_corr;  // free entries of the stacked correlation; empty -> full
    CorrFamily family = CorrFamily::iid;

    [[nodiscard]] int n_random() const {
        return static_cast<int>(y_random.size() + r_random.size());
    }
    [[nodiscard]] CorrStructure corr_structure() const {
        return re_corr.dim == n_random() ? re_corr : CorrStructure::full(n_random());
    }
};

// Exponential temporal correlation with nugget: unit diagonal,
// (1-c0) exp(-|t_i - t_j|/d) off the diagonal. Verified PD by Cholesky.
[[nodiscard]] Eigen::MatrixXd omega_exponential(const std::vector<double>& times, double d,
                                                double c0);

// Kronecker product Lambda (x) Omega with response-major ordering: block
// (a, b) of size n x n equals Lambda(a,b) * Omega.
[[nodiscard]] Eigen::MatrixXd assemble_sigma(const Eigen::Matrix2d& lambda,
                                             const Eigen::MatrixXd& omega);

// Exact Gaussian log-likelihood of the joint model at explicit parameter
// values; the stacked per-subject response is (y_i..., r_i...).
[[nodiscard]] double joint_loglik(const LongitudinalDataset& ds, const JointSpec& spec,
                                  const Eigen::VectorXd& beta, const Eigen::VectorXd& alpha,
                                  const Eigen::MatrixXd& psi, const ResidualSpec& residual);

[[nodiscard]] FitResult fit_joint(const LongitudinalDataset& ds, const JointSpec& spec,
                                  const FitOptions& opts = {});

namespace detail {

// Working-scale parameters: [log sds, atanh free RE correlations,
// log sigma_eps, log sigma_zeta, atanh rho_eps] and, for the exponential
// family, [range, nugget] through bounded logistic maps (d in [1e-3, 1e2],
// c0 in [0, 0.95]). Fixed effects (beta, alpha) are concentrated out.
class JointProfileObjective {
  public:
    JointProfileObjective(const LongitudinalDataset& ds, const JointSpec& spec);

    double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const;

    [[nodiscard]] Eigen::VectorXd fixed_at(const Eigen::VectorXd& theta) const;
    [[nodiscard]] Eigen::MatrixXd fixed_cov_at(const Eigen::VectorXd& theta) const;

    [[nodiscard]] int n_params() const;
    [[nodiscard]] int n_random() const { return q_; }
    [[nodiscard]] int n_fixed() const { return p_; }
    [[nodiscard]] const CorrStructure& corr_structure() const { return corr_; }
    [[nodiscard]] bool exponential() const { return family_ == CorrFamily::exponential; }

    void unpack(const Eigen::VectorXd& theta, Eigen::MatrixXd& psi, ResidualSpec& resid) const;
    [[nodiscard]] Eigen::VectorXd pack(const Eigen::MatrixXd& psi,
                                       const ResidualSpec& resid) const;

  private:
    struct SubjectDesign {
        Eigen::MatrixXd a;     // 2n x p stacked fixed design
        Eigen::MatrixXd w;     // 2n x q stacked random design
        Eigen::VectorXd y;     // stacked (y, r)
        Eigen::MatrixXd gaps;  // n x n absolute time differences
        int n = 0;
    };
    std::vector<SubjectDesign> designs_;
    int q_ = 0, qy_ = 0, p_ = 0, py_ = 0;
    long n_total_ = 0;
    CorrStructure corr_;
    CorrFamily family_ = CorrFamily::iid;

    bool assemble(const Eigen::VectorXd& theta, Eigen::MatrixXd& psi, ResidualSpec& resid,
                  Eigen::MatrixXd& ava, Eigen::VectorXd& avy, double& yvy, double& logdet) const;
};

}  // namespace detail

}  // namespace longit

#endif
