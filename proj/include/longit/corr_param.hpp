#ifndef LONGIT_CORR_PARAM_HPP
#define LONGIT_CORR_PARAM_HPP

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace longit {

// Which off-diagonal correlation entries are estimated. Entries not listed
// stay fixed at zero. Free entries are parameterized as tanh(phi) so the
// working scale is unconstrained; positive definiteness of the assembled
// matrix is checked by the likelihood (non-PD proposals get a -inf
// sentinel and the line search backs off).
struct CorrStructure {
    int dim = 0;
    std::vector<std::pair<int, int>> free_pairs;  // (row > col)

    [[nodiscard]] static CorrStructure full(int q) {
        CorrStructure cs;
        cs.dim = q;
        for (int i = 1; i < q; ++i) {
            for (int j = 0; j < i; ++j) cs.free_pairs.emplace_back(i, j);
        }
        return cs;
    }

    [[nodiscard]] static CorrStructure diagonal(int q) { return {q, {}}; }

    [[nodiscard]] int n_free() const { return static_cast<int>(free_pairs.size()); }

    [[nodiscard]] Eigen::MatrixXd build(const Eigen::VectorXd& phi) const {
        Eigen::MatrixXd c = Eigen::MatrixXd::Identity(dim, dim);
        for (int m = 0; m < n_free(); ++m) {
            const double r = std::tanh(phi[m]);
            c(free_pairs[m].first, free_pairs[m].second) = r;
            c(free_pairs[m].second, free_pairs[m].first) = r;
        }
        return c;
    }

    // phi values reproducing a given correlation matrix on the free entries.
    [[nodiscard]] Eigen::VectorXd pack(const Eigen::MatrixXd& corr) const {
        Eigen::VectorXd phi(n_free());
        for (int m = 0; m < n_free(); ++m) {
            phi[m] = std::atanh(corr(free_pairs[m].first, free_pairs[m].second));
        }
        return phi;
    }
};

}  // namespace longit

#endif
