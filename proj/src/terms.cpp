#include "longit/terms.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace longit {

std::string ModelTerm::label() const {
    switch (kind) {
        case TermKind::Intercept: return "(intercept)";
        case TermKind::Time: return "time";
        case TermKind::Covariate: return covariate_name;
        case TermKind::CovariateTime: return covariate_name + ":time";
        case TermKind::FpInvSq: return "fp:inv_sq";
        case TermKind::FpLogInvSq: return "fp:log_inv_sq";
        case TermKind::DecayW: {
            std::ostringstream ss;
            ss << "decay_w(k=" << decay_rate << ")";
            return ss.str();
        }
        case TermKind::DecayTimeW: {
            std::ostringstream ss;
            ss << "decay_tw(k=" << decay_rate << ")";
            return ss.str();
        }
        case TermKind::DecayOneMinusW: {
            std::ostringstream ss;
            ss << "decay_1mw(k=" << decay_rate << ")";
            return ss.str();
        }
    }
    return "?";
}

double eval_term(const ModelTerm& term, double t, const SubjectRecord& subj) {
    switch (term.kind) {
        case TermKind::Intercept:
            return 1.0;
        case TermKind::Time:
            return t;
        case TermKind::Covariate:
        case TermKind::CovariateTime: {
            auto it = subj.baseline.find(term.covariate_name);
            if (it == subj.baseline.end()) {
                throw std::invalid_argument("missing baseline covariate: " + term.covariate_name);
            }
            return term.kind == TermKind::Covariate ? it->second : it->second * t;
        }
        case TermKind::FpInvSq:
            return 1.0 / ((1.0 + t) * (1.0 + t));
        case TermKind::FpLogInvSq:
            return std::log(1.0 + t) / ((1.0 + t) * (1.0 + t));
        case TermKind::DecayW:
            return std::exp(-term.decay_rate * t);
        case TermKind::DecayTimeW:
            return t * std::exp(-term.decay_rate * t);
        case TermKind::DecayOneMinusW:
            return 1.0 - std::exp(-term.decay_rate * t);
    }
    return 0.0;
}

Eigen::MatrixXd build_design(const std::vector<ModelTerm>& terms, const SubjectRecord& subj) {
    const int n = subj.n_visits();
    const int p = static_cast<int>(terms.size());
    Eigen::MatrixXd x(n, p);
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < p; ++k) {
            x(j, k) = eval_term(terms[k], subj.visit_times[j], subj);
        }
    }
    return x;
}

std::vector<std::string> term_labels(const std::vector<ModelTerm>& terms) {
    std::vector<std::string> out;
    out.reserve(terms.size());
    for (const auto& t : terms) out.push_back(t.label());
    return out;
}

}  // namespace longit
