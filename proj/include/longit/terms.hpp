#ifndef LONGIT_TERMS_HPP
#define LONGIT_TERMS_HPP

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "longit/data.hpp"

namespace longit {

// Design-matrix columns for the mean and random-effect structures. Time
// enters either linearly, through the fractional-polynomial bases
// 1/(1+t)^2 and log(1+t)/(1+t)^2, or through the exponential-decay bases
// w(t) = exp(-k t), t*w(t) and 1-w(t).
enum class TermKind {
    Intercept,
    Time,
    Covariate,        // baseline covariate by name
    CovariateTime,    // covariate * t interaction
    FpInvSq,          // 1/(1+t)^2
    FpLogInvSq,       // log(1+t)/(1+t)^2
    DecayW,           // exp(-k t)
    DecayTimeW,       // t * exp(-k t)
    DecayOneMinusW    // 1 - exp(-k t)
};

struct ModelTerm {
    TermKind kind = TermKind::Intercept;
    std::string covariate_name;  // for Covariate / CovariateTime
    double decay_rate = 4.0;  // for the Decay* bases

    static ModelTerm intercept() { return {TermKind::Intercept, "", 0.0}; }
    static ModelTerm time() { return {TermKind::Time, "", 0.0}; }
    static ModelTerm covariate(std::string name) { return {TermKind::Covariate, std::move(name), 0.0}; }
    static ModelTerm covariate_time(std::string name) {
        return {TermKind::CovariateTime, std::move(name), 0.0};
    }
    static ModelTerm fp_inv_sq() { return {TermKind::FpInvSq, "", 0.0}; }
    static ModelTerm fp_log_inv_sq() { return {TermKind::FpLogInvSq, "", 0.0}; }
    static ModelTerm decay_w(double k) { return {TermKind::DecayW, "", k}; }
    static ModelTerm decay_time_w(double k) { return {TermKind::DecayTimeW, "", k}; }
    static ModelTerm decay_one_minus_w(double k) { return {TermKind::DecayOneMinusW, "", k}; }

    [[nodiscard]] std::string label() const;
};

[[nodiscard]] double eval_term(const ModelTerm& term, double t, const SubjectRecord& subj);

// n_visits x n_terms design matrix for one subject.
[[nodiscard]] Eigen::MatrixXd build_design(const std::vector<ModelTerm>& terms,
                                           const SubjectRecord& subj);

[[nodiscard]] std::vector<std::string> term_labels(const std::vector<ModelTerm>& terms);

}  // namespace longit

#endif
