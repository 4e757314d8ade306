#ifndef LONGIT_DIAGNOSTICS_HPP
#define LONGIT_DIAGNOSTICS_HPP

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "longit/lmm.hpp"

namespace longit {

enum class RiskFlag { low, moderate, high };

[[nodiscard]] std::string risk_label(RiskFlag flag);

struct DiagnosticThresholds {
    double mean_visits_high = 6.0;   // fewer visits than this -> high risk
    double mean_visits_moderate = 10.0;
    double icc_high = 0.3;
    double icc_moderate = 0.15;
    double blup_corr_high = 0.4;     // |corr| of Y- and R-model subject effects
    double blup_corr_moderate = 0.2;
    double covariate_z = 2.0;        // |estimate| > z * SE -> high
};

struct VisitsSummary {
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0, q3 = 0.0, iqr = 0.0;
    int min = 0, max = 0;
};

[[nodiscard]] VisitsSummary visits_summary(const LongitudinalDataset& ds);

struct IccDiagnostic {
    double icc = 0.0;
    RiskFlag flag = RiskFlag::low;
};

[[nodiscard]] IccDiagnostic icc_diagnostic(const LongitudinalDataset& ds, const LmmSpec& y_spec,
                                           const DiagnosticThresholds& thresholds = {});

struct ReCorrelationDiagnostic {
    double correlation = 0.0;        // Pearson corr of paired intercept BLUPs
    Eigen::MatrixXd pairs;           // n_subjects x 2, (Y-model, R-model), for scatter export
    RiskFlag flag = RiskFlag::low;
};

// Fits separate univariate models to Y and to the recommended intervals R and
// correlates the per-subject random-intercept predictions. Throws when R is
// absent; there is no observed-interval fallback here.
[[nodiscard]] ReCorrelationDiagnostic re_correlation_diagnostic(
    const LongitudinalDataset& ds, const LmmSpec& y_spec, const LmmSpec& r_spec,
    const DiagnosticThresholds& thresholds = {});

struct CovariateAssociation {
    std::string covariate;
    double estimate = 0.0;
    double se = 0.0;
    RiskFlag flag = RiskFlag::low;
};

// Mixed model of the intervals (R, falling back to S) on the covariate.
[[nodiscard]] CovariateAssociation covariate_association_diagnostic(
    const LongitudinalDataset& ds, const std::string& covariate,
    const DiagnosticThresholds& thresholds = {});

struct DiagnosticReport {
    VisitsSummary visits;
    RiskFlag visits_flag = RiskFlag::low;
    std::optional<IccDiagnostic> icc;
    std::optional<ReCorrelationDiagnostic> re_correlation;
    std::vector<CovariateAssociation> covariates;
    std::vector<std::string> notes;  // failed or unavailable sub-diagnostics
    DiagnosticThresholds thresholds;
    bool recommend_joint = false;
    std::string recommendation;
};

// Runs all four diagnostics; sub-diagnostic failures become notes, not
// errors. Recommends the joint model when any flag is high.
[[nodiscard]] DiagnosticReport diagnose(const LongitudinalDataset& ds, const LmmSpec& y_spec,
                                        const LmmSpec& r_spec,
                                        const std::vector<std::string>& covariates,
                                        const DiagnosticThresholds& thresholds = {});

// Replaces each subject's response with its recommended intervals, for
// fitting interval submodels with the univariate machinery.
[[nodiscard]] LongitudinalDataset intervals_as_response(const LongitudinalDataset& ds);

}  // namespace longit

#endif
