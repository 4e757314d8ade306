#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "longit/bias_theory.hpp"
#include "longit/diagnostics.hpp"
#include "longit/harness.hpp"
#include "longit/io.hpp"
#include "longit/joint.hpp"
#include "longit/lmm.hpp"
#include "longit/visit_sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string out_dir;
    bool force = false;
    int threads = 1;
    std::uint64_t seed = 1;
};

std::string default_out_dir() {
    const char* env = std::getenv("LONGIT_OUT_DIR");
    return env != nullptr ? env : "out";
}

fs::path artifact_path(const CommonOpts& common, const std::string& name) {
    fs::create_directories(common.out_dir);
    fs::path p = fs::path(common.out_dir) / name;
    if (fs::exists(p) && !common.force) {
        throw std::runtime_error("refusing to overwrite " + p.string() + " (use --force)");
    }
    return p;
}

void write_text(const fs::path& p, const std::string& content) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot open for writing: " + p.string());
    f << content;
}

class Manifest {
  public:
    Manifest(std::string subcommand, int argc, char** argv, std::uint64_t seed)
        : start_(std::chrono::steady_clock::now()) {
        j_["subcommand"] = std::move(subcommand);
        std::vector<std::string> args(argv, argv + argc);
        j_["argv"] = args;
        j_["seed"] = seed;
    }

    void add_config(const json& cfg) { j_["config"] = cfg; }
    void add_artifact(const fs::path& p) { artifacts_.push_back(p.string()); }

    void write(const CommonOpts& common) {
        const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                           start_)
                                 .count();
        j_["wall_time_seconds"] = elapsed;
        j_["artifacts"] = artifacts_;
        fs::path p = artifact_path(common, "manifest.json");
        write_text(p, j_.dump(2) + "\n");
        std::cout << "wrote " << p.string() << "\n";
    }

  private:
    json j_;
    std::vector<std::string> artifacts_;
    std::chrono::steady_clock::time_point start_;
};

struct ScenarioOpts {
    std::string name = "study1";
    double tau = 2.0;
    double slope_corr = -0.7;
    double re_divisor = 1.0;
    bool homogenize = false;
    double decay_rate = 4.0;
    bool decouple = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--scenario", name, "study1 | study2 | study3")->capture_default_str();
        cmd->add_option("--tau", tau, "follow-up length (years)")->capture_default_str();
        cmd->add_option("--slope-corr", slope_corr, "corr(b1, u1), studies 1-2")
            ->capture_default_str();
        cmd->add_option("--re-divisor", re_divisor, "divide random-effect variances")
            ->capture_default_str();
        cmd->add_flag("--homogenize", homogenize, "study 2: everyone on the control scheme");
        cmd->add_option("--decay", decay_rate, "study 3: decay rate k")->capture_default_str();
        cmd->add_flag("--decouple", decouple, "sever every outcome-interval link in the DGM");
    }

    [[nodiscard]] longit::ReplicationPlan to_plan() const {
        longit::ReplicationPlan plan;
        plan.scenario = name;
        plan.tau = tau;
        plan.slope_corr = slope_corr;
        plan.re_divisor = re_divisor;
        plan.homogenize = homogenize;
        plan.decay_rate = decay_rate;
        plan.decouple = decouple;
        return plan;
    }

    [[nodiscard]] json to_json() const {
        return json{{"scenario", name},       {"tau", tau},
                    {"slope_corr", slope_corr}, {"re_divisor", re_divisor},
                    {"homogenize", homogenize}, {"decay_rate", decay_rate},
                    {"decouple", decouple}};
    }
};

json fit_to_json(const longit::FitResult& fit) {
    json j;
    j["converged"] = fit.converged;
    j["loglik"] = fit.loglik;
    j["iterations"] = fit.iterations;
    j["grad_norm"] = fit.grad_norm;
    json fixed = json::array();
    for (std::size_t k = 0; k < fit.fixed_names.size(); ++k) {
        fixed.push_back({{"name", fit.fixed_names[k]},
                         {"estimate", fit.fixed[static_cast<int>(k)]},
                         {"se", fit.fixed_se[static_cast<int>(k)]}});
    }
    j["fixed_effects"] = fixed;
    json var = json::array();
    for (std::size_t k = 0; k < fit.var_names.size(); ++k) {
        var.push_back({{"name", fit.var_names[k]},
                       {"estimate", fit.var_values[static_cast<int>(k)]},
                       {"se", fit.var_se[static_cast<int>(k)]}});
    }
    j["variance_parameters"] = var;
    return j;
}

longit::LongitudinalDataset load_dataset(const std::string& data, std::string sidecar) {
    if (sidecar.empty()) sidecar = fs::path(data).replace_extension(".json").string();
    return longit::read_dataset_csv(data, sidecar);
}

int run_simulate(const CommonOpts& common, const ScenarioOpts& sc_opts, int n_subjects, int argc,
                 char** argv) {
    Manifest manifest("simulate", argc, argv, common.seed);
    manifest.add_config(sc_opts.to_json());
    longit::StudyScenario sc = sc_opts.to_plan().make_scenario();
    longit::LongitudinalDataset ds = longit::simulate_study(sc, n_subjects, common.seed);
    auto violations = longit::validate_dataset(ds);
    if (!violations.empty()) {
        std::cerr << "generated dataset failed validation (" << violations.size()
                  << " violations)\n";
        return 1;
    }
    fs::path csv = artifact_path(common, "dataset.csv");
    fs::path side = artifact_path(common, "dataset.json");
    longit::write_dataset_csv(ds, csv.string(), side.string());
    manifest.add_artifact(csv);
    manifest.add_artifact(side);
    manifest.write(common);
    longit::VisitsSummary vs = longit::visits_summary(ds);
    std::cout << "simulated " << n_subjects << " subjects, mean visits " << vs.mean << "\n";
    return 0;
}

int run_fit(const CommonOpts& common, const ScenarioOpts& sc_opts, const std::string& data,
            const std::string& sidecar, bool joint, int argc, char** argv) {
    Manifest manifest(joint ? "fit-joint" : "fit", argc, argv, common.seed);
    json cfg = sc_opts.to_json();
    cfg["data"] = data;
    manifest.add_config(cfg);
    longit::LongitudinalDataset ds = load_dataset(data, sidecar);
    longit::StudyScenario sc = sc_opts.to_plan().make_scenario();
    longit::FitResult fit;
    if (joint) {
        fit = longit::fit_joint(ds, longit::scenario_joint_spec(sc));
    } else {
        fit = longit::fit_lmm(ds, longit::scenario_lmm_spec(sc));
    }
    fs::path out = artifact_path(common, joint ? "fit_joint.json" : "fit.json");
    write_text(out, fit_to_json(fit).dump(2) + "\n");
    manifest.add_artifact(out);
    manifest.write(common);
    std::cout << (fit.converged ? "converged" : "DID NOT CONVERGE") << ", loglik " << fit.loglik
              << "\n";
    for (std::size_t k = 0; k < fit.fixed_names.size(); ++k) {
        std::cout << "  " << fit.fixed_names[k] << " = " << fit.fixed[static_cast<int>(k)]
                  << " (se " << fit.fixed_se[static_cast<int>(k)] << ")\n";
    }
    return fit.converged ? 0 : 1;
}

longit::TheoryBase theory_base_from(const json& overrides) {
    longit::TheoryBase base;
    if (overrides.contains("sigma_b")) base.sigma_b = overrides["sigma_b"];
    if (overrides.contains("sigma_eta")) base.sigma_eta = overrides["sigma_eta"];
    if (overrides.contains("tau")) base.tau = overrides["tau"];
    if (overrides.contains("alpha0")) base.alpha0 = overrides["alpha0"];
    if (overrides.contains("sigma_eps")) base.sigma_eps = overrides["sigma_eps"];
    if (overrides.contains("gamma0")) base.gamma0 = overrides["gamma0"];
    if (overrides.contains("alpha1")) base.alpha1 = overrides["alpha1"];
    return base;
}

int run_bias(const CommonOpts& common, const std::string& mode, int n_subjects,
             const json& overrides, int argc, char** argv) {
    Manifest manifest("bias", argc, argv, common.seed);
    json cfg = overrides;
    cfg["mode"] = mode;
    cfg["n"] = n_subjects;
    manifest.add_config(cfg);
    longit::TheoryBase base = theory_base_from(overrides);
    const bool binary = mode == "binary";
    if (!binary && mode != "intercept") {
        std::cerr << "unknown --mode (want intercept or binary)\n";
        return 1;
    }
    auto pop = longit::theory_population(base, n_subjects, common.seed, binary);
    json out;
    out["mode"] = mode;
    out["n_subjects"] = n_subjects;
    if (binary) {
        out["bias"] = longit::bias_binary_covariate(pop, base.alpha0, base.alpha1, base.gamma0,
                                                    base.sigma_b, base.sigma_eta, base.sigma_eps);
        out["mc_se"] =
            longit::bias_binary_covariate_mc_se(pop, base.alpha0, base.alpha1, base.gamma0,
                                                base.sigma_b, base.sigma_eta, base.sigma_eps);
    } else {
        out["bias"] = longit::bias_intercept_only(pop, base.alpha0, base.gamma0, base.sigma_b,
                                                  base.sigma_eta, base.sigma_eps);
        out["mc_se"] = longit::bias_intercept_only_mc_se(pop, base.alpha0, base.gamma0,
                                                         base.sigma_b, base.sigma_eta,
                                                         base.sigma_eps);
    }
    fs::path p = artifact_path(common, "bias.json");
    write_text(p, out.dump(2) + "\n");
    manifest.add_artifact(p);
    manifest.write(common);
    std::cout << "bias " << out["bias"].get<double>() << " (mc se " << out["mc_se"].get<double>()
              << ")\n";
    return 0;
}

int run_sweep(const CommonOpts& common, const std::string& knob_name,
              const std::vector<double>& grid, int n_subjects, const json& overrides, int argc,
              char** argv) {
    Manifest manifest("sweep", argc, argv, common.seed);
    json cfg = overrides;
    cfg["knob"] = knob_name;
    cfg["grid"] = grid;
    cfg["n"] = n_subjects;
    manifest.add_config(cfg);
    longit::SweepKnob knob;
    if (knob_name == "sigma_b") {
        knob = longit::SweepKnob::sigma_b;
    } else if (knob_name == "gamma0") {
        knob = longit::SweepKnob::gamma0_magnitude;
    } else if (knob_name == "alpha0") {
        knob = longit::SweepKnob::alpha0;
    } else if (knob_name == "alpha1") {
        knob = longit::SweepKnob::alpha1;
    } else {
        std::cerr << "unknown --knob (want sigma_b, gamma0, alpha0 or alpha1)\n";
        return 1;
    }
    longit::TheoryBase base = theory_base_from(overrides);
    longit::BiasReport report = longit::sweep_bias(knob, grid, base, n_subjects, common.seed);
    std::ostringstream csv;
    csv.precision(10);
    csv << "knob,grid_value,bias,mc_se\n";
    for (const auto& p : report.points) {
        csv << report.knob << ',' << p.grid_value << ',' << p.bias << ',' << p.mc_se << '\n';
    }
    fs::path p = artifact_path(common, "sweep.csv");
    write_text(p, csv.str());
    manifest.add_artifact(p);
    manifest.write(common);
    std::cout << csv.str();
    return 0;
}

longit::ReplicationPlan plan_from_json(const json& j) {
    longit::ReplicationPlan plan;
    plan.scenario = j.value("scenario", plan.scenario);
    plan.cell = j.value("cell", plan.cell);
    plan.n_subjects = j.value("n_subjects", plan.n_subjects);
    plan.n_reps = j.value("n_reps", plan.n_reps);
    plan.joint_reps = j.value("joint_reps", plan.joint_reps);
    plan.fit_univariate = j.value("fit_univariate", plan.fit_univariate);
    plan.fit_joint = j.value("fit_joint", plan.fit_joint);
    plan.estimand = j.value("estimand", plan.estimand);
    plan.seed = j.value("seed", plan.seed);
    plan.threads = j.value("threads", plan.threads);
    plan.tau = j.value("tau", plan.tau);
    plan.slope_corr = j.value("slope_corr", plan.slope_corr);
    plan.re_divisor = j.value("re_divisor", plan.re_divisor);
    plan.homogenize = j.value("homogenize", plan.homogenize);
    plan.decay_rate = j.value("decay_rate", plan.decay_rate);
    plan.decouple = j.value("decouple", plan.decouple);
    return plan;
}

int run_replicate(const CommonOpts& common, const ScenarioOpts& sc_opts,
                  const std::string& plan_file, int n_subjects, int reps, int joint_reps,
                  const std::string& fitters, int argc, char** argv) {
    Manifest manifest("replicate", argc, argv, common.seed);
    std::vector<longit::ReplicationPlan> plans;
    if (!plan_file.empty()) {
        std::ifstream f(plan_file);
        if (!f) {
            std::cerr << "cannot open plan file: " << plan_file << "\n";
            return 1;
        }
        json j = json::parse(f);
        manifest.add_config(j);
        if (j.is_array()) {
            for (const auto& item : j) plans.push_back(plan_from_json(item));
        } else {
            plans.push_back(plan_from_json(j));
        }
    } else {
        longit::ReplicationPlan plan = sc_opts.to_plan();
        plan.n_subjects = n_subjects;
        plan.n_reps = reps;
        plan.joint_reps = joint_reps;
        plan.fit_univariate = fitters.find("uni") != std::string::npos;
        plan.fit_joint = fitters.find("joint") != std::string::npos;
        plan.seed = common.seed;
        plan.threads = common.threads;
        json cfg = sc_opts.to_json();
        cfg["n_subjects"] = n_subjects;
        cfg["n_reps"] = reps;
        cfg["joint_reps"] = joint_reps;
        cfg["fitters"] = fitters;
        manifest.add_config(cfg);
        plans.push_back(plan);
    }
    for (auto& plan : plans) {
        if (plan.threads < common.threads) plan.threads = common.threads;
    }
    longit::ReplicationTable table = longit::run_replication_set(plans);
    fs::path csv = artifact_path(common, "table.csv");
    fs::path txt = artifact_path(common, "table.txt");
    write_text(csv, longit::table_to_csv(table));
    write_text(txt, longit::table_to_text(table));
    manifest.add_artifact(csv);
    manifest.add_artifact(txt);
    manifest.write(common);
    std::cout << longit::table_to_text(table);
    return 0;
}

int run_diagnose(const CommonOpts& common, const ScenarioOpts& sc_opts, const std::string& data,
                 const std::string& sidecar, const std::vector<std::string>& covariates, int argc,
                 char** argv) {
    Manifest manifest("diagnose", argc, argv, common.seed);
    json cfg = sc_opts.to_json();
    cfg["data"] = data;
    cfg["covariates"] = covariates;
    manifest.add_config(cfg);
    longit::LongitudinalDataset ds = load_dataset(data, sidecar);
    longit::StudyScenario sc = sc_opts.to_plan().make_scenario();
    longit::LmmSpec y_spec = longit::scenario_lmm_spec(sc);
    longit::JointSpec jspec = longit::scenario_joint_spec(sc);
    longit::LmmSpec r_spec{jspec.r_fixed, jspec.r_random};
    longit::DiagnosticReport report = longit::diagnose(ds, y_spec, r_spec, covariates);

    json j;
    j["visits"] = {{"mean", report.visits.mean}, {"median", report.visits.median},
                   {"q1", report.visits.q1},     {"q3", report.visits.q3},
                   {"iqr", report.visits.iqr},   {"min", report.visits.min},
                   {"max", report.visits.max},   {"flag", longit::risk_label(report.visits_flag)}};
    if (report.icc) {
        j["icc"] = {{"value", report.icc->icc}, {"flag", longit::risk_label(report.icc->flag)}};
    }
    if (report.re_correlation) {
        j["re_correlation"] = {{"value", report.re_correlation->correlation},
                               {"flag", longit::risk_label(report.re_correlation->flag)}};
    }
    json covs = json::array();
    for (const auto& c : report.covariates) {
        covs.push_back({{"covariate", c.covariate},
                        {"estimate", c.estimate},
                        {"se", c.se},
                        {"flag", longit::risk_label(c.flag)}});
    }
    j["covariate_associations"] = covs;
    j["notes"] = report.notes;
    j["thresholds"] = {{"mean_visits_high", report.thresholds.mean_visits_high},
                       {"icc_high", report.thresholds.icc_high},
                       {"blup_corr_high", report.thresholds.blup_corr_high},
                       {"covariate_z", report.thresholds.covariate_z}};
    j["recommend_joint"] = report.recommend_joint;
    j["recommendation"] = report.recommendation;
    fs::path rp = artifact_path(common, "diagnostics.json");
    write_text(rp, j.dump(2) + "\n");
    manifest.add_artifact(rp);
    if (report.re_correlation) {
        std::ostringstream scat;
        scat.precision(10);
        scat << "subject_index,y_model_blup,r_model_blup\n";
        for (int i = 0; i < report.re_correlation->pairs.rows(); ++i) {
            scat << i << ',' << report.re_correlation->pairs(i, 0) << ','
                 << report.re_correlation->pairs(i, 1) << '\n';
        }
        fs::path sp = artifact_path(common, "re_scatter.csv");
        write_text(sp, scat.str());
        manifest.add_artifact(sp);
    }
    manifest.write(common);
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"longitudinal data under irregular, informative visit schedules: "
                 "simulation, mixed-model fitting, bias formulas and diagnostics"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read defaults from a config file");

    CommonOpts common;
    common.out_dir = default_out_dir();
    app.add_option("--out", common.out_dir, "output directory (env LONGIT_OUT_DIR)")
        ->capture_default_str();
    app.add_flag("--force", common.force, "overwrite existing artifacts");
    app.add_option("--threads", common.threads, "worker threads")->capture_default_str();
    app.add_option("--seed", common.seed, "RNG seed, recorded in the manifest")
        ->capture_default_str();

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a study dataset (CSV + sidecar)");
    ScenarioOpts sim_sc;
    sim_sc.attach(sim);
    int sim_n = 200;
    sim->add_option("--n", sim_n, "number of subjects")->capture_default_str();

    // fit / fit-joint
    auto* fit = app.add_subcommand("fit", "univariate mixed-model fit");
    auto* fitj = app.add_subcommand("fit-joint", "bivariate outcome-interval fit");
    ScenarioOpts fit_sc, fitj_sc;
    std::string fit_data, fit_side, fitj_data, fitj_side;
    fit_sc.attach(fit);
    fit->add_option("--data", fit_data, "long-format CSV")->required();
    fit->add_option("--sidecar", fit_side, "JSON sidecar (default: data with .json)");
    fitj_sc.attach(fitj);
    fitj->add_option("--data", fitj_data, "long-format CSV")->required();
    fitj->add_option("--sidecar", fitj_side, "JSON sidecar (default: data with .json)");

    // bias
    auto* bias = app.add_subcommand("bias", "closed-form bias on a generated population");
    std::string bias_mode = "intercept";
    int bias_n = 100000;
    std::map<std::string, double> theory_overrides;
    bias->add_option("--mode", bias_mode, "intercept | binary")->capture_default_str();
    bias->add_option("--n", bias_n, "population size")->capture_default_str();
    auto add_theory_opts = [&theory_overrides](CLI::App* cmd) {
        for (const char* key :
             {"sigma_b", "sigma_eta", "tau", "alpha0", "sigma_eps", "gamma0", "alpha1"}) {
            cmd->add_option_function<double>(
                std::string("--") + key,
                [&theory_overrides, key = std::string(key)](double v) {
                    theory_overrides[key] = v;
                },
                "override the base value");
        }
    };
    add_theory_opts(bias);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "bias curve along a parameter grid");
    std::string sweep_knob = "sigma_b";
    std::vector<double> sweep_grid;
    int sweep_n = 20000;
    sweep->add_option("--knob", sweep_knob, "sigma_b | gamma0 | alpha0 | alpha1")
        ->capture_default_str();
    sweep->add_option("--grid", sweep_grid, "grid values")->required()->expected(-2);
    sweep->add_option("--n", sweep_n, "population size per point")->capture_default_str();
    add_theory_opts(sweep);

    // replicate
    auto* rep = app.add_subcommand("replicate", "replication study (simulate + fit loops)");
    ScenarioOpts rep_sc;
    rep_sc.attach(rep);
    std::string rep_plan, rep_fitters = "univariate";
    int rep_n = 200, rep_reps = 300, rep_joint_reps = 150;
    rep->add_option("--plan", rep_plan, "JSON plan (object or array of plans)");
    rep->add_option("--n", rep_n, "subjects per replication")->capture_default_str();
    rep->add_option("--reps", rep_reps, "univariate replications")->capture_default_str();
    rep->add_option("--joint-reps", rep_joint_reps, "joint replications")->capture_default_str();
    rep->add_option("--fitters", rep_fitters, "univariate, joint, or univariate,joint")
        ->capture_default_str();

    // diagnose
    auto* diag = app.add_subcommand("diagnose", "pre-analysis bias-risk diagnostics");
    ScenarioOpts diag_sc;
    diag_sc.attach(diag);
    std::string diag_data, diag_side;
    std::vector<std::string> diag_covs;
    diag->add_option("--data", diag_data, "long-format CSV")->required();
    diag->add_option("--sidecar", diag_side, "JSON sidecar (default: data with .json)");
    diag->add_option("--covariate", diag_covs, "baseline covariates to test against intervals");

    for (CLI::App* s : {sim, fit, fitj, bias, sweep, rep, diag}) s->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        json overrides;
        for (const auto& [k, v] : theory_overrides) overrides[k] = v;
        if (sim->parsed()) return run_simulate(common, sim_sc, sim_n, argc, argv);
        if (fit->parsed()) {
            return run_fit(common, fit_sc, fit_data, fit_side, false, argc, argv);
        }
        if (fitj->parsed()) {
            return run_fit(common, fitj_sc, fitj_data, fitj_side, true, argc, argv);
        }
        if (bias->parsed()) return run_bias(common, bias_mode, bias_n, overrides, argc, argv);
        if (sweep->parsed()) {
            return run_sweep(common, sweep_knob, sweep_grid, sweep_n, overrides, argc, argv);
        }
        if (rep->parsed()) {
            return run_replicate(common, rep_sc, rep_plan, rep_n, rep_reps, rep_joint_reps,
                                 rep_fitters, argc, argv);
        }
        if (diag->parsed()) {
            return run_diagnose(common, diag_sc, diag_data, diag_side, diag_covs, argc, argv);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
