#ifndef LONGIT_HARNESS_HPP
#define LONGIT_HARNESS_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "longit/joint.hpp"
#include "longit/lmm.hpp"
#include "longit/visit_sim.hpp"

namespace longit {

// Analysis-model specifications matched to each study scenario. The interval
// submodel is the reduced form (time-only fixed effects): the outcome's
// influence on the intervals is absorbed by the correlated random effects
// and the residual cross-correlation.
[[nodiscard]] LmmSpec scenario_lmm_spec(const StudyScenario& sc);
[[nodiscard]] JointSpec scenario_joint_spec(const StudyScenario& sc);

// Default estimand label for a scenario's headline fixed effect.
[[nodiscard]] std::string scenario_estimand(const StudyScenario& sc);
[[nodiscard]] double scenario_true_value(const StudyScenario& sc, const std::string& estimand);

struct ReplicationPlan {
    std::string scenario = "study1";
    std::string cell;  // row label; derived from scenario+knobs when empty
    int n_subjects = 200;
    int n_reps = 300;        // univariate replications
    int joint_reps = 150;    // joint replications (joint fits dominate runtime)
    bool fit_univariate = true;
    bool fit_joint = false;
    std::string estimand;  // empty -> scenario default
    std::uint64_t seed = 1;
    int threads = 1;

    // Variation knobs for the replication tables.
    double tau = 2.0;
    double slope_corr = -0.7;    // corr(b1, u1), studies 1-2
    double re_divisor = 1.0;
    bool homogenize = false;     // study 2: everyone on the control scheme
    double decay_rate = 4.0;     // study 3
    bool decouple = false;       // zero every outcome-interval cross-link

    FitOptions fit_options;

    [[nodiscard]] StudyScenario make_scenario() const;
    [[nodiscard]] std::string cell_label() const;
};

struct ReplicationRow {
    std::string cell;
    std::string fitter;  // "univariate" or "joint"
    std::string estimand;
    double true_value = 0.0;
    double mean_estimate = 0.0;
    double pct_bias = 0.0;     // mean(est - true)/true * 100 over converged reps
    double ese = 0.0;          // SD of estimates across converged reps
    double ese_pct = 0.0;      // same, as a percentage of |true|
    double mc_se_pct = 0.0;    // MC SE of pct_bias = ese_pct / sqrt(n_converged)
    int n_reps = 0;
    int n_converged = 0;
    double convergence_rate = 0.0;
    bool low_convergence_warning = false;
};

struct ReplicationTable {
    std::vector<ReplicationRow> rows;

    [[nodiscard]] const ReplicationRow& find(const std::string& cell,
                                             const std::string& fitter) const;
};

[[nodiscard]] ReplicationTable run_replications(const ReplicationPlan& plan);

// Merges rows from several plans into one table (Tables 1-2 layout).
[[nodiscard]] ReplicationTable run_replication_set(const std::vector<ReplicationPlan>& plans);

struct CellContrast {
    double abs_bias_a = 0.0;
    double abs_bias_b = 0.0;
    double diff = 0.0;          // |bias(A)| - |bias(B)|
    double combined_mc_se = 0.0;
    double diff_in_mc_ses = 0.0;
    bool a_exceeds_b = false;
};

[[nodiscard]] CellContrast compare_cells(const ReplicationTable& table, const std::string& cell_a,
                                         const std::string& fitter_a, const std::string& cell_b,
                                         const std::string& fitter_b);

// CSV and aligned-text renderings of a table.
[[nodiscard]] std::string table_to_csv(const ReplicationTable& table);
[[nodiscard]] std::string table_to_text(const ReplicationTable& table);

// Static-partition worker pool; f(i) must be safe to run concurrently for
// distinct i. Results are whatever f writes at index i, so aggregation order
// is independent of scheduling.
void parallel_for(int n, int threads, const std::function<void(int)>& f);

}  // namespace longit

#endif
