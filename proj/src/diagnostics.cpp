#include "longit/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace longit {

namespace {

double quantile_sorted(const std::vector<double>& v, double p) {
    // Linear interpolation between order statistics (type-7).
    if (v.empty()) return 0.0;
    const double h = p * (static_cast<double>(v.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

RiskFlag band(double value, double high, double moderate, bool smaller_is_risky) {
    if (smaller_is_risky) {
        if (value < high) return RiskFlag::high;
        if (value < moderate) return RiskFlag::moderate;
        return RiskFlag::low;
    }
    if (value >= high) return RiskFlag::high;
    if (value >= moderate) return RiskFlag::moderate;
    return RiskFlag::low;
}

}  // namespace

std::string risk_label(RiskFlag flag) {
    switch (flag) {
        case RiskFlag::low: return "low";
        case RiskFlag::moderate: return "moderate";
        case RiskFlag::high: return "high";
    }
    return "?";
}

VisitsSummary visits_summary(const LongitudinalDataset& ds) {
    if (ds.subjects.empty()) throw std::invalid_argument("visits_summary: empty dataset");
    std::vector<double> counts;
    counts.reserve(ds.subjects.size());
    for (const auto& subj : ds.subjects) counts.push_back(subj.n_visits());
    std::sort(counts.begin(), counts.end());
    VisitsSummary s;
    double sum = 0.0;
    for (double c : counts) sum += c;
    s.mean = sum / static_cast<double>(counts.size());
    s.median = quantile_sorted(counts, 0.5);
    s.q1 = quantile_sorted(counts, 0.25);
    s.q3 = quantile_sorted(counts, 0.75);
    s.iqr = s.q3 - s.q1;
    s.min = static_cast<int>(counts.front());
    s.max = static_cast<int>(counts.back());
    return s;
}

IccDiagnostic icc_diagnostic(const LongitudinalDataset& ds, const LmmSpec& y_spec,
                             const DiagnosticThresholds& thresholds) {
    FitResult fit = fit_lmm(ds, y_spec);
    IccDiagnostic out;
    out.icc = icc(fit, y_spec);
    out.flag = band(out.icc, thresholds.icc_high, thresholds.icc_moderate, false);
    return out;
}

LongitudinalDataset intervals_as_response(const LongitudinalDataset& ds) {
    LongitudinalDataset out = ds;
    for (auto& subj : out.subjects) {
        if (subj.r.size() != subj.y.size()) {
            if (subj.s.size() == subj.y.size()) {
                subj.y = subj.s;
                continue;
            }
            throw std::invalid_argument(
                "intervals_as_response: no recommended or observed intervals for subject " +
                std::to_string(subj.id));
        }
        subj.y = subj.r;
    }
    return out;
}

ReCorrelationDiagnostic re_correlation_diagnostic(const LongitudinalDataset& ds,
                                                  const LmmSpec& y_spec, const LmmSpec& r_spec,
                                                  const DiagnosticThresholds& thresholds) {
    for (const auto& subj : ds.subjects) {
        if (subj.r.size() != subj.y.size()) {
            throw std::invalid_argument(
                "re_correlation_diagnostic: recommended intervals missing for subject " +
                std::to_string(subj.id) +
                "; a frailty model on observed intervals is not implemented");
        }
    }
    FitResult y_fit = fit_lmm(ds, y_spec);
    LongitudinalDataset r_ds = intervals_as_response(ds);
    FitResult r_fit = fit_lmm(r_ds, r_spec);
    if (!y_fit.converged || !r_fit.converged) {
        throw std::runtime_error("re_correlation_diagnostic: a univariate fit did not converge");
    }
    Eigen::MatrixXd y_blups = predict_blups(y_fit, ds, y_spec);
    Eigen::MatrixXd r_blups = predict_blups(r_fit, r_ds, r_spec);

    ReCorrelationDiagnostic out;
    const int n = static_cast<int>(ds.subjects.size());
    out.pairs.resize(n, 2);
    out.pairs.col(0) = y_blups.col(0);
    out.pairs.col(1) = r_blups.col(0);
    Eigen::VectorXd a = out.pairs.col(0).array() - out.pairs.col(0).mean();
    Eigen::VectorXd b = out.pairs.col(1).array() - out.pairs.col(1).mean();
    const double denom = std::sqrt(a.squaredNorm() * b.squaredNorm());
    out.correlation = denom > 0 ? a.dot(b) / denom : 0.0;
    out.flag = band(std::abs(out.correlation), thresholds.blup_corr_high,
                    thresholds.blup_corr_moderate, false);
    return out;
}

CovariateAssociation covariate_association_diagnostic(const LongitudinalDataset& ds,
                                                      const std::string& covariate,
                                                      const DiagnosticThresholds& thresholds) {
    bool first = true;
    double v0 = 0.0;
    bool constant = true;
    for (const auto& subj : ds.subjects) {
        auto it = subj.baseline.find(covariate);
        if (it == subj.baseline.end()) {
            throw std::invalid_argument("covariate not present: " + covariate);
        }
        if (first) {
            v0 = it->second;
            first = false;
        } else if (it->second != v0) {
            constant = false;
        }
    }
    if (constant) throw std::invalid_argument("covariate is constant: " + covariate);

    LongitudinalDataset r_ds = intervals_as_response(ds);
    LmmSpec spec;
    spec.fixed = {ModelTerm::intercept(), ModelTerm::covariate(covariate)};
    spec.random = {ModelTerm::intercept()};
    FitResult fit = fit_lmm(r_ds, spec);
    CovariateAssociation out;
    out.covariate = covariate;
    out.estimate = fit.fixed[1];
    out.se = fit.fixed_se[1];
    out.flag = std::abs(out.estimate) > thresholds.covariate_z * out.se ? RiskFlag::high
                                                                        : RiskFlag::low;
    return out;
}

DiagnosticReport diagnose(const LongitudinalDataset& ds, const LmmSpec& y_spec,
                          const LmmSpec& r_spec, const std::vector<std::string>& covariates,
                          const DiagnosticThresholds& thresholds) {
    DiagnosticReport report;
    report.thresholds = thresholds;
    report.visits = visits_summary(ds);
    report.visits_flag = band(report.visits.mean, thresholds.mean_visits_high,
                              thresholds.mean_visits_moderate, true);
    try {
        report.icc = icc_diagnostic(ds, y_spec, thresholds);
    } catch (const std::exception& e) {
        report.notes.push_back(std::string("icc diagnostic unavailable: ") + e.what());
    }
    try {
        report.re_correlation = re_correlation_diagnostic(ds, y_spec, r_spec, thresholds);
    } catch (const std::exception& e) {
        report.notes.push_back(std::string("random-effect correlation diagnostic unavailable: ") +
                               e.what());
    }
    for (const auto& name : covariates) {
        try {
            report.covariates.push_back(covariate_association_diagnostic(ds, name, thresholds));
        } catch (const std::exception& e) {
            report.notes.push_back("covariate diagnostic (" + name + ") unavailable: " + e.what());
        }
    }

    bool any_high = report.visits_flag == RiskFlag::high;
    if (report.icc) any_high = any_high || report.icc->flag == RiskFlag::high;
    if (report.re_correlation) any_high = any_high || report.re_correlation->flag == RiskFlag::high;
    for (const auto& c : report.covariates) any_high = any_high || c.flag == RiskFlag::high;
    report.recommend_joint = any_high;
    report.recommendation =
        any_high ? "at least one factor flags high risk of visit-process bias; consider a joint "
                   "model of the outcome and the recommended intervals"
                 : "no factor flags high risk; a univariate mixed model appears adequate";
    return report;
}

}  // namespace longit
