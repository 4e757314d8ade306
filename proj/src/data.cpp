#include "longit/data.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace longit {

std::vector<Violation> validate_dataset(const LongitudinalDataset& ds) {
    std::vector<Violation> out;
    auto add = [&out](int id, const std::string& field, const std::string& msg) {
        out.push_back({id, field, msg});
    };

    if (!(ds.tau > 0.0)) {
        add(-1, "tau", "tau must be positive");
    }

    for (const auto& subj : ds.subjects) {
        const int n = subj.n_visits();
        if (n < 1) {
            add(subj.id, "visit_times", "subject has no visits");
            continue;
        }
        for (int j = 1; j < n; ++j) {
            if (!(subj.visit_times[j] > subj.visit_times[j - 1])) {
                add(subj.id, "visit_times", "non-increasing times");
                break;
            }
        }
        if (subj.visit_times.front() < 0.0 || subj.visit_times.back() > ds.tau) {
            add(subj.id, "visit_times", "visit time outside [0, tau]");
        }
        if (static_cast<int>(subj.y.size()) != n) {
            add(subj.id, "y", "outcome length differs from visit count");
        }
        if (!subj.r.empty() && static_cast<int>(subj.r.size()) != n) {
            add(subj.id, "r", "recommended-interval length differs from visit count");
        }
        if (!subj.s.empty() && static_cast<int>(subj.s.size()) != n) {
            add(subj.id, "s", "observed-interval length differs from visit count");
        }
        for (double v : subj.r) {
            if (!(v > 0.0)) {
                add(subj.id, "r", "non-positive interval");
                break;
            }
        }
        for (double v : subj.s) {
            if (!(v > 0.0)) {
                add(subj.id, "s", "non-positive interval");
                break;
            }
        }
        if (subj.u_sum) {
            if (!(*subj.u_sum > 0.0)) {
                add(subj.id, "u_sum", "u_sum must be positive");
            }
            if (static_cast<int>(subj.s.size()) == n && !subj.s.empty()) {
                double sum = 0.0;
                for (double v : subj.s) sum += v;
                if (std::abs(sum - *subj.u_sum) > 1e-10 * std::max(1.0, std::abs(sum))) {
                    add(subj.id, "u_sum", "u_sum does not equal the sum of s");
                }
            }
        }
    }
    return out;
}

Eigen::MatrixXd build_psi(const RandomEffectSpec& spec) {
    const int q = spec.dim();
    if (spec.corr.rows() != q || spec.corr.cols() != q) {
        throw std::invalid_argument("build_psi: sds and corr dimensions disagree");
    }
    for (int i = 0; i < q; ++i) {
        if (spec.sds[i] < 0.0) {
            throw std::invalid_argument("build_psi: negative standard deviation");
        }
        if (std::abs(spec.corr(i, i) - 1.0) > 1e-12) {
            throw std::invalid_argument("build_psi: correlation diagonal must be 1");
        }
        for (int j = 0; j < i; ++j) {
            if (std::abs(spec.corr(i, j) - spec.corr(j, i)) > 1e-12) {
                throw std::invalid_argument("build_psi: correlation matrix not symmetric");
            }
            if (std::abs(spec.corr(i, j)) > 1.0) {
                std::ostringstream ss;
                ss << "build_psi: |corr(" << i << "," << j << ")| > 1";
                throw std::invalid_argument(ss.str());
            }
        }
    }
    // PD check on the correlation matrix itself so degenerate (sd = 0)
    // components are still accepted. Report the first failing leading minor.
    for (int k = 1; k <= q; ++k) {
        Eigen::MatrixXd minor = spec.corr.topLeftCorner(k, k);
        Eigen::LLT<Eigen::MatrixXd> llt(minor);
        if (llt.info() != Eigen::Success) {
            std::ostringstream ss;
            ss << "build_psi: correlation matrix not positive definite (leading minor " << k << ")";
            throw std::invalid_argument(ss.str());
        }
    }
    Eigen::MatrixXd d = spec.sds.asDiagonal();
    Eigen::MatrixXd psi = d * spec.corr * d;
    // Symmetrize exactly.
    psi = ((psi + psi.transpose()) / 2.0).eval();
    return psi;
}

Eigen::Matrix2d ResidualSpec::lambda() const {
    Eigen::Matrix2d m;
    const double cov = rho_eps * sigma_eps * sigma_zeta;
    m << sigma_eps * sigma_eps, cov, cov, sigma_zeta * sigma_zeta;
    return m;
}

void ResidualSpec::validate() const {
    if (!(sigma_eps > 0.0)) throw std::invalid_argument("ResidualSpec: sigma_eps must be positive");
    if (!(sigma_zeta > 0.0)) throw std::invalid_argument("ResidualSpec: sigma_zeta must be positive");
    if (!(rho_eps > -1.0 && rho_eps < 1.0)) {
        throw std::invalid_argument("ResidualSpec: rho_eps must lie in (-1, 1)");
    }
    if (family == CorrFamily::exponential) {
        if (!(range_d > 0.0)) throw std::invalid_argument("ResidualSpec: range_d must be positive");
        if (!(nugget_c0 >= 0.0 && nugget_c0 < 1.0)) {
            throw std::invalid_argument("ResidualSpec: nugget_c0 must lie in [0, 1)");
        }
    }
}

}  // namespace longit
