#ifndef LONGIT_DATA_HPP
#define LONGIT_DATA_HPP

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace longit {

// One subject's visit history. r[j] is the interval recommended at visit j,
// s[j] the interval actually observed after visit j. Both optional (empty)
// for univariate-only workflows. u_sum is the running sum of the observed
// intervals including the one past the final in-study visit, so a generator
// will report u_sum > tau.
struct SubjectRecord {
    int id = 0;
    std::vector<double> visit_times;
    std::vector<double> y;
    std::vector<double> r;
    std::vector<double> s;
    std::map<std::string, double> baseline;
    std::optional<double> u_sum;

    [[nodiscard]] int n_visits() const { return static_cast<int>(visit_times.size()); }
};

struct LongitudinalDataset {
    std::vector<SubjectRecord> subjects;
    double tau = 0.0;
    std::string time_unit = "years";  // "days" or "years"
};

struct Violation {
    int subject_id;
    std::string field;
    std::string message;
};

// Collects every invariant violation; an empty report means the dataset is
// valid. Violations are data, not failures: this never throws.
[[nodiscard]] std::vector<Violation> validate_dataset(const LongitudinalDataset& ds);

// Random-effect scale/correlation specification. The implied covariance is
// Psi = D * corr * D with D = diag(sds).
struct RandomEffectSpec {
    std::vector<std::string> names;
    Eigen::VectorXd sds;
    Eigen::MatrixXd corr;

    [[nodiscard]] int dim() const { return static_cast<int>(sds.size()); }
};

// Returns D*corr*D, verified symmetric positive semi-definite (positive
// definite whenever all sds are strictly positive). Throws
// std::invalid_argument naming the offending leading minor when corr is not
// a valid correlation matrix.
[[nodiscard]] Eigen::MatrixXd build_psi(const RandomEffectSpec& spec);

enum class CorrFamily { iid, exponential };

// Cross-response residual specification for the bivariate model:
// Lambda = [[s_eps^2, rho*s_eps*s_zeta], [rho*s_eps*s_zeta, s_zeta^2]],
// temporal correlation Omega from the chosen family.
struct ResidualSpec {
    double sigma_eps = 1.0;
    double sigma_zeta = 1.0;
    double rho_eps = 0.0;
    CorrFamily family = CorrFamily::iid;
    double range_d = 1.0;    // used iff family == exponential
    double nugget_c0 = 0.0;  // in [0, 1)

    [[nodiscard]] Eigen::Matrix2d lambda() const;
    void validate() const;  // throws std::invalid_argument
};

}  // namespace longit

#endif
