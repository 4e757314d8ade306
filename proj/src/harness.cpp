#include "longit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "longit/rng.hpp"

namespace longit {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<ModelTerm> study3_fixed(double k) {
    return {ModelTerm::decay_w(k), ModelTerm::decay_time_w(k), ModelTerm::decay_one_minus_w(k)};
}

}  // namespace

LmmSpec scenario_lmm_spec(const StudyScenario& sc) {
    LmmSpec spec;
    switch (sc.study) {
        case Study::study1:
            spec.fixed = {ModelTerm::intercept(), ModelTerm::time()};
            spec.random = {ModelTerm::intercept(), ModelTerm::time()};
            break;
        case Study::study2:
            spec.fixed = {ModelTerm::intercept(), ModelTerm::time(), ModelTerm::covariate("x")};
            spec.random = {ModelTerm::intercept(), ModelTerm::time()};
            break;
        case Study::study3:
            spec.fixed = study3_fixed(sc.decay_rate);
            spec.random = {ModelTerm::intercept()};
            break;
    }
    return spec;
}

JointSpec scenario_joint_spec(const StudyScenario& sc) {
    JointSpec spec;
    LmmSpec y = scenario_lmm_spec(sc);
    spec.y_fixed = y.fixed;
    spec.y_random = y.random;
    switch (sc.study) {
        case Study::study1:
            spec.r_fixed = {ModelTerm::intercept(), ModelTerm::time()};
            spec.r_random = {ModelTerm::intercept(), ModelTerm::time()};
            spec.family = CorrFamily::exponential;
            break;
        case Study::study2:
            // The arm covariate shifts the interval mean; the tiny arm
            // difference in interval slope is left to the residual terms.
            spec.r_fixed = {ModelTerm::intercept(), ModelTerm::time(), ModelTerm::covariate("x")};
            spec.r_random = {ModelTerm::intercept(), ModelTerm::time()};
            spec.family = CorrFamily::iid;
            break;
        case Study::study3:
            // The interval mean inherits the outcome's decay shape through the
            // level dependence, so it needs the same basis (which spans a
            // constant via w + (1 - w)).
            spec.r_fixed = study3_fixed(sc.decay_rate);
            spec.r_random = {ModelTerm::intercept()};
            spec.family = CorrFamily::iid;
            break;
    }
    return spec;
}

std::string scenario_estimand(const StudyScenario& sc) {
    switch (sc.study) {
        case Study::study1:
            return "time";
        case Study::study2:
            return "x";
        case Study::study3:
            return ModelTerm::decay_time_w(sc.decay_rate).label();
    }
    throw std::logic_error("unreachable");
}

double scenario_true_value(const StudyScenario& sc, const std::string& estimand) {
    if (estimand == "time") return sc.beta1;
    if (estimand == "x") return sc.beta2;
    if (estimand == ModelTerm::decay_time_w(sc.decay_rate).label()) return sc.beta1;
    throw std::invalid_argument("no true value recorded for estimand: " + estimand);
}

StudyScenario ReplicationPlan::make_scenario() const {
    StudyScenario sc = StudyScenario::by_name(scenario);
    sc.tau = tau;
    sc.decay_rate = decay_rate;
    sc.homogenize = homogenize;
    if (sc.re.dim() >= 4) sc.set_slope_correlation(slope_corr);
    if (re_divisor != 1.0) sc.scale_re_variances(re_divisor);
    if (decouple) {
        sc.alpha1 = 0.0;
        const int qy = sc.n_y_random;
        for (int a = 0; a < qy; ++a) {
            for (int c = qy; c < sc.re.dim(); ++c) {
                sc.re.corr(a, c) = sc.re.corr(c, a) = 0.0;
            }
        }
    }
    return sc;
}

std::string ReplicationPlan::cell_label() const {
    if (!cell.empty()) return cell;
    std::ostringstream ss;
    ss << scenario;
    if (tau != 2.0) ss << " tau=" << tau;
    if (slope_corr != -0.7) ss << " corr=" << slope_corr;
    if (re_divisor != 1.0) ss << " re/" << re_divisor;
    if (homogenize) ss << " homogenized";
    if (decay_rate != 4.0) ss << " k=" << decay_rate;
    if (decouple) ss << " decoupled";
    return ss.str();
}

void parallel_for(int n, int threads, const std::function<void(int)>& f) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (int i = w; i < n; i += threads) f(i);
        });
    }
    for (auto& t : pool) t.join();
}

namespace {

ReplicationRow aggregate(const std::vector<double>& estimates, int n_reps, double true_value) {
    ReplicationRow row;
    row.true_value = true_value;
    row.n_reps = n_reps;
    double sum = 0.0;
    std::vector<double> conv;
    for (int i = 0; i < n_reps; ++i) {
        if (std::isfinite(estimates[i])) {
            conv.push_back(estimates[i]);
            sum += estimates[i];
        }
    }
    row.n_converged = static_cast<int>(conv.size());
    row.convergence_rate = n_reps > 0 ? static_cast<double>(row.n_converged) / n_reps : 0.0;
    row.low_convergence_warning = row.convergence_rate < 0.8;
    if (conv.empty()) {
        row.mean_estimate = row.pct_bias = row.ese = row.ese_pct = row.mc_se_pct = kNan;
        return row;
    }
    row.mean_estimate = sum / row.n_converged;
    row.pct_bias = (row.mean_estimate - true_value) / true_value * 100.0;
    double ss = 0.0;
    for (double e : conv) ss += (e - row.mean_estimate) * (e - row.mean_estimate);
    row.ese = row.n_converged > 1 ? std::sqrt(ss / (row.n_converged - 1)) : 0.0;
    row.ese_pct = row.ese / std::abs(true_value) * 100.0;
    row.mc_se_pct = row.n_converged > 0 ? row.ese_pct / std::sqrt(row.n_converged) : kNan;
    return row;
}

}  // namespace

ReplicationTable run_replications(const ReplicationPlan& plan) {
    if (plan.n_reps < 2) throw std::invalid_argument("run_replications: n_reps must be >= 2");
    const StudyScenario sc = plan.make_scenario();
    const std::string estimand = plan.estimand.empty() ? scenario_estimand(sc) : plan.estimand;
    const double truth = scenario_true_value(sc, estimand);
    const std::string label = plan.cell_label();

    const LmmSpec uni_spec = scenario_lmm_spec(sc);
    const JointSpec joint_spec = scenario_joint_spec(sc);
    int uni_idx = -1, joint_idx = -1;
    if (plan.fit_univariate) {
        auto labels = term_labels(uni_spec.fixed);
        auto it = std::find(labels.begin(), labels.end(), estimand);
        if (it == labels.end()) {
            throw std::invalid_argument("estimand not in univariate model: " + estimand);
        }
        uni_idx = static_cast<int>(it - labels.begin());
    }
    if (plan.fit_joint) {
        auto labels = term_labels(joint_spec.y_fixed);
        auto it = std::find(labels.begin(), labels.end(), estimand);
        if (it == labels.end()) {
            throw std::invalid_argument("estimand not in joint model: " + estimand);
        }
        joint_idx = static_cast<int>(it - labels.begin());
    }

    const int n_uni = plan.fit_univariate ? plan.n_reps : 0;
    const int n_joint = plan.fit_joint ? std::max(plan.joint_reps, 2) : 0;
    const int n_total = std::max(n_uni, n_joint);

    std::vector<double> uni_est(n_total, kNan), joint_est(n_total, kNan);
    FitOptions opts = plan.fit_options;
    opts.compute_se = false;

    parallel_for(n_total, plan.threads, [&](int rep) {
        const std::uint64_t rep_seed = mix64(plan.seed ^ mix64(0x5eedULL + rep));
        LongitudinalDataset ds = simulate_study(sc, plan.n_subjects, rep_seed);
        if (rep < n_uni) {
            try {
                FitResult fit = fit_lmm(ds, uni_spec, opts);
                if (fit.converged) uni_est[rep] = fit.fixed[uni_idx];
            } catch (const std::exception&) {
            }
        }
        if (rep < n_joint) {
            try {
                FitResult fit = fit_joint(ds, joint_spec, opts);
                if (fit.converged) joint_est[rep] = fit.fixed[joint_idx];
            } catch (const std::exception&) {
            }
        }
    });

    ReplicationTable table;
    if (plan.fit_univariate) {
        ReplicationRow row = aggregate(uni_est, n_uni, truth);
        row.cell = label;
        row.fitter = "univariate";
        row.estimand = estimand;
        table.rows.push_back(row);
    }
    if (plan.fit_joint) {
        ReplicationRow row = aggregate(joint_est, n_joint, truth);
        row.cell = label;
        row.fitter = "joint";
        row.estimand = estimand;
        table.rows.push_back(row);
    }
    return table;
}

ReplicationTable run_replication_set(const std::vector<ReplicationPlan>& plans) {
    ReplicationTable table;
    for (const auto& plan : plans) {
        ReplicationTable part = run_replications(plan);
        table.rows.insert(table.rows.end(), part.rows.begin(), part.rows.end());
    }
    return table;
}

const ReplicationRow& ReplicationTable::find(const std::string& cell,
                                             const std::string& fitter) const {
    for (const auto& row : rows) {
        if (row.cell == cell && row.fitter == fitter) return row;
    }
    throw std::invalid_argument("cell not in table: " + cell + " / " + fitter);
}

CellContrast compare_cells(const ReplicationTable& table, const std::string& cell_a,
                           const std::string& fitter_a, const std::string& cell_b,
                           const std::string& fitter_b) {
    const ReplicationRow& a = table.find(cell_a, fitter_a);
    const ReplicationRow& b = table.find(cell_b, fitter_b);
    CellContrast c;
    c.abs_bias_a = std::abs(a.pct_bias);
    c.abs_bias_b = std::abs(b.pct_bias);
    c.diff = c.abs_bias_a - c.abs_bias_b;
    c.combined_mc_se = std::sqrt(a.mc_se_pct * a.mc_se_pct + b.mc_se_pct * b.mc_se_pct);
    c.diff_in_mc_ses = c.combined_mc_se > 0 ? c.diff / c.combined_mc_se : kNan;
    c.a_exceeds_b = c.diff > 0.0;
    return c;
}

std::string table_to_csv(const ReplicationTable& table) {
    std::ostringstream ss;
    ss << "cell,fitter,estimand,true_value,mean_estimate,pct_bias,ese,ese_pct,mc_se_pct,"
          "n_reps,n_converged,convergence_rate,low_convergence_warning\n";
    ss.precision(10);
    for (const auto& r : table.rows) {
        ss << r.cell << ',' << r.fitter << ',' << r.estimand << ',' << r.true_value << ','
           << r.mean_estimate << ',' << r.pct_bias << ',' << r.ese << ',' << r.ese_pct << ','
           << r.mc_se_pct << ',' << r.n_reps << ',' << r.n_converged << ','
           << r.convergence_rate << ',' << (r.low_convergence_warning ? 1 : 0) << '\n';
    }
    return ss.str();
}

std::string table_to_text(const ReplicationTable& table) {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-28s %-10s %-16s %10s %8s %8s %6s\n", "cell", "fitter",
                  "estimand", "%bias", "ESE%", "MCSE%", "conv");
    out << buf;
    for (const auto& r : table.rows) {
        std::snprintf(buf, sizeof(buf), "%-28s %-10s %-16s %10.2f %8.2f %8.2f %5.0f%%\n",
                      r.cell.c_str(), r.fitter.c_str(), r.estimand.c_str(), r.pct_bias, r.ese_pct,
                      r.mc_se_pct, 100.0 * r.convergence_rate);
        out << buf;
        if (r.low_convergence_warning) {
            std::snprintf(buf, sizeof(buf),
                          "  ** WARNING: convergence rate %.0f%% below 80%% in %s/%s **\n",
                          100.0 * r.convergence_rate, r.cell.c_str(), r.fitter.c_str());
            out << buf;
        }
    }
    return out.str();
}

}  // namespace longit
