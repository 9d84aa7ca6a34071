// Command-line front end: scenario simulation, dataset estimation, and
// treatment-model diagnostics. All randomness flows from --seed / the config
// seed; reruns with identical inputs produce byte-identical outputs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "sha1.hpp"

#include "mvt/csv.hpp"
#include "mvt/dataset.hpp"
#include "mvt/diagnostics.hpp"
#include "mvt/estimators.hpp"
#include "mvt/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPartial = 2;
constexpr int kExitEstimation = 3;

std::string fmt(double v) { return mvt::format_double(v); }

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("MVTMLE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return static_cast<int>(std::thread::hardware_concurrency());
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

mvt::LearnerLibrary library_from_name(const std::string& s) {
  if (s == "glm") return mvt::LearnerLibrary::Glm;
  if (s == "sl") return mvt::LearnerLibrary::SlDesk;
  if (s == "sl-full") return mvt::LearnerLibrary::SlFull;
  throw mvt::Error("unknown learner library: " + s);
}

std::string library_name(mvt::LearnerLibrary lib) {
  switch (lib) {
    case mvt::LearnerLibrary::Glm: return "glm";
    case mvt::LearnerLibrary::SlDesk: return "sl";
    case mvt::LearnerLibrary::SlFull: return "sl-full";
  }
  return "?";
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config_path;
  std::string out_dir;
  int n_override = 0;
  int reps_override = 0;
  std::int64_t seed_override = -1;
  std::string estimators_override;
  int threads = 0;
};

std::vector<std::string> string_list(const json& v, const std::string& key) {
  std::vector<std::string> out;
  if (v.is_string())
    out.push_back(v.get<std::string>());
  else if (v.is_array())
    for (const auto& item : v) out.push_back(item.get<std::string>());
  else
    throw mvt::Error("config key '" + key + "' must be a string or string array");
  return out;
}

json scenario_to_json(const mvt::ScenarioConfig& cfg) {
  json estimators = json::array();
  for (auto e : cfg.estimators) estimators.push_back(mvt::estimator_name(e));
  json j = {{"levels", cfg.levels},
            {"n", cfg.n},
            {"reps", cfg.replications},
            {"overlap", mvt::overlap_name(cfg.overlap)},
            {"event_rate", mvt::event_rate_name(cfg.event_rate)},
            {"regime", mvt::regime_name(cfg.regime)},
            {"misspec", mvt::misspec_name(cfg.misspec)},
            {"estimators", estimators},
            {"library", library_name(cfg.library)},
            {"folds", cfg.folds},
            {"seed", cfg.master_seed},
            {"threads", cfg.threads}};
  if (cfg.winsor)
    j["winsorize"] = {{"lower", cfg.winsor->lower}, {"upper", cfg.winsor->upper}};
  else
    j["winsorize"] = false;
  return j;
}

int cmd_simulate(const SimulateArgs& args) {
  json config;
  {
    std::ifstream in(args.config_path);
    if (!in) {
      std::cerr << "error: cannot open config " << args.config_path << "\n";
      return kExitConfig;
    }
    try {
      in >> config;
    } catch (const std::exception& e) {
      std::cerr << "error: config is not valid JSON: " << e.what() << "\n";
      return kExitConfig;
    }
  }

  static const std::set<std::string> allowed = {
      "levels", "n",      "reps",  "overlap", "event_rate", "regime",
      "misspec", "estimators", "library", "folds", "winsorize", "seed"};
  for (const auto& [key, value] : config.items()) {
    (void)value;
    if (!allowed.count(key)) {
      std::cerr << "error: unknown config key '" << key << "'\n";
      return kExitConfig;
    }
  }

  std::vector<mvt::ScenarioConfig> grid;
  try {
    mvt::ScenarioConfig base;
    base.regime = mvt::regime_from_name(config.value("regime", "standard6"));
    base.levels = config.value("levels", mvt::regime_levels(base.regime));
    base.n = config.value("n", 2000);
    base.replications = config.value("reps", 200);
    base.misspec = mvt::misspec_from_name(config.value("misspec", "none"));
    base.library = library_from_name(config.value("library", "glm"));
    base.folds = config.value("folds", 5);
    base.master_seed = config.value("seed", 1ull);
    if (config.contains("winsorize") && !config["winsorize"].is_boolean()) {
      mvt::WinsorConfig w;
      w.lower = config["winsorize"].value("lower", 0.005);
      w.upper = config["winsorize"].value("upper", 0.995);
      base.winsor = w;
    } else if (config.value("winsorize", false)) {
      base.winsor = mvt::WinsorConfig{};
    }
    std::vector<std::string> estimator_names =
        config.contains("estimators")
            ? string_list(config["estimators"], "estimators")
            : std::vector<std::string>{"tmle-multinomial", "tmle-binomial",
                                       "iptw-multinomial", "iptw-binomial",
                                       "gcomp"};
    if (!args.estimators_override.empty())
      estimator_names = split_commas(args.estimators_override);
    for (const auto& name : estimator_names)
      base.estimators.push_back(mvt::estimator_from_name(name));

    if (args.n_override > 0) base.n = args.n_override;
    if (args.reps_override > 0) base.replications = args.reps_override;
    if (args.seed_override >= 0)
      base.master_seed = static_cast<std::uint64_t>(args.seed_override);
    base.threads = resolve_threads(args.threads);

    const auto overlaps = config.contains("overlap")
                              ? string_list(config["overlap"], "overlap")
                              : std::vector<std::string>{"adequate"};
    const auto rates = config.contains("event_rate")
                           ? string_list(config["event_rate"], "event_rate")
                           : std::vector<std::string>{"low"};
    for (const auto& ov : overlaps)
      for (const auto& er : rates) {
        mvt::ScenarioConfig cfg = base;
        cfg.overlap = mvt::overlap_from_name(ov);
        cfg.event_rate = mvt::event_rate_from_name(er);
        cfg.check();
        grid.push_back(cfg);
      }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  fs::create_directories(args.out_dir);
  mvt::CsvTable metrics;
  metrics.header = {"overlap",      "event_rate",   "estimator",
                    "ref",          "alt",          "mean_abs_bias",
                    "coverage",     "mean_ci_width", "rel_precision",
                    "replications_used"};
  mvt::CsvTable raw;
  raw.header = {"overlap", "event_rate", "replication", "estimator", "ref",
                "alt",     "ate",        "se",          "ci_lo",     "ci_hi",
                "true_ate"};

  json scenario_summaries = json::array();
  bool partial_failure = false;

  for (const auto& cfg : grid) {
    const mvt::ScenarioResult result = mvt::run_scenario(cfg);
    const std::string ov = mvt::overlap_name(cfg.overlap);
    const std::string er = mvt::event_rate_name(cfg.event_rate);
    for (const auto& est : result.estimators) {
      const std::string name = mvt::estimator_name(est.estimator);
      for (const auto& pm : est.pairs)
        metrics.rows.push_back({ov, er, name, std::to_string(pm.ref_level),
                                std::to_string(pm.alt_level),
                                fmt(pm.mean_abs_bias), fmt(pm.coverage),
                                fmt(pm.mean_ci_width), fmt(pm.rel_precision),
                                std::to_string(pm.replications_used)});
      metrics.rows.push_back({ov, er, name, "all", "all", fmt(est.avg_abs_bias),
                              fmt(est.avg_coverage), fmt(est.avg_ci_width),
                              fmt(est.avg_rel_precision),
                              std::to_string(cfg.replications - est.failures)});
    }
    for (const auto& r : result.raw)
      raw.rows.push_back({ov, er, std::to_string(r.replication),
                          mvt::estimator_name(r.estimator),
                          std::to_string(r.ref_level), std::to_string(r.alt_level),
                          fmt(r.ate), fmt(r.se), fmt(r.ci_lo), fmt(r.ci_hi),
                          fmt(r.true_ate)});

    json sc = scenario_to_json(cfg);
    sc["failed_replications"] = result.failed_replications;
    sc["max_failure_fraction"] = result.max_failure_fraction;
    sc["prob_error_multinomial"] = result.prob_error_multinomial;
    sc["prob_error_binomial"] = result.prob_error_binomial;
    sc["ess_ratio_multinomial"] = result.ess_ratio_multinomial;
    sc["ess_ratio_binomial"] = result.ess_ratio_binomial;
    scenario_summaries.push_back(sc);
    if (result.max_failure_fraction > 0.2) partial_failure = true;
  }

  mvt::write_csv((fs::path(args.out_dir) / "metrics.csv").string(), metrics);
  mvt::write_csv((fs::path(args.out_dir) / "raw_estimates.csv").string(), raw);

  json summary = {{"command", "simulate"},
                  {"scenarios", scenario_summaries},
                  {"inputs", {{args.config_path, sha1::of_file(args.config_path)}}},
                  {"outputs", {"metrics.csv", "raw_estimates.csv"}}};
  write_json(fs::path(args.out_dir) / "summary.json", summary);

  return partial_failure ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// estimate / diagnose

struct EstimateArgs {
  std::string data_path;
  std::string outcome_col;
  std::string treatment_col;
  std::string covariate_cols;
  std::string estimator = "tmle-multinomial";
  std::string reference;
  std::string winsor = "0.005,0.995";
  bool use_glm = false;
  bool use_sl = false;
  int folds = 5;
  std::uint64_t seed = 1;
  std::string out_dir;
  int threads = 0;
};

mvt::WinsorConfig parse_winsor(const std::string& s) {
  const auto parts = split_commas(s);
  if (parts.size() != 2) throw mvt::Error("--winsor expects 'lower,upper'");
  mvt::WinsorConfig w;
  w.lower = std::stod(parts[0]);
  w.upper = std::stod(parts[1]);
  w.check();
  return w;
}

int resolve_reference(const mvt::Dataset& d, const std::string& reference) {
  for (std::size_t j = 0; j < d.level_labels.size(); ++j)
    if (d.level_labels[j] == reference) return static_cast<int>(j) + 1;
  try {
    const int idx = std::stoi(reference);
    if (idx >= 1 && idx <= d.level_count) return idx;
  } catch (...) {
  }
  throw mvt::Error("reference level '" + reference + "' not found");
}

void write_ensemble_report(const fs::path& path, const mvt::FittedNuisance& fits,
                           const mvt::Dataset& d) {
  mvt::CsvTable t;
  t.header = {"model", "member", "weight", "cv_nll"};
  auto add = [&](const std::string& model, const mvt::Ensemble& e) {
    for (std::size_t m = 0; m < e.member_names.size(); ++m)
      t.rows.push_back({model, e.member_names[m], fmt(e.weights[m]),
                        fmt(e.cv_nll_per_member[m])});
    t.rows.push_back({model, "super_learner", "1", fmt(e.cv_nll_ensemble)});
  };
  for (std::size_t j = 0; j < fits.outcome_models.size(); ++j)
    add("outcome_arm_" + d.level_labels[j], fits.outcome_models[j]);
  if (fits.treatment_multinomial)
    add("treatment_multinomial", *fits.treatment_multinomial);
  for (std::size_t j = 0; j < fits.treatment_binomial.size(); ++j)
    add("treatment_binomial_" + d.level_labels[j], fits.treatment_binomial[j]);
  mvt::write_csv(path.string(), t);
}

void write_overlap(const fs::path& path, const mvt::OverlapReport& report,
                   const mvt::Dataset& d) {
  mvt::CsvTable t;
  t.header = {"level", "label", "n", "min", "mean", "max", "sd", "ess",
              "ess_ratio"};
  for (const auto& lv : report.levels)
    t.rows.push_back({std::to_string(lv.level), d.level_labels[lv.level - 1],
                      std::to_string(lv.n_level), fmt(lv.min), fmt(lv.mean),
                      fmt(lv.max), fmt(lv.sd), fmt(lv.ess), fmt(lv.ess_ratio)});
  mvt::write_csv(path.string(), t);
}

void write_balance(const fs::path& dir, const mvt::BalanceReport& report) {
  mvt::CsvTable t;
  t.header = {"covariate", "smd_unadjusted", "smd_weighted", "zero_variance",
              "flagged"};
  for (const auto& row : report.rows)
    t.rows.push_back({row.covariate, fmt(row.smd_unadjusted),
                      fmt(row.smd_weighted), row.zero_variance ? "1" : "0",
                      row.flagged ? "1" : "0"});
  mvt::write_csv((dir / "balance.csv").string(), t);

  // plot-ready long format
  mvt::CsvTable long_t;
  long_t.header = {"covariate", "variant", "smd"};
  for (const auto& row : report.rows) {
    long_t.rows.push_back({row.covariate, "unadjusted", fmt(row.smd_unadjusted)});
    long_t.rows.push_back({row.covariate, "weighted", fmt(row.smd_weighted)});
  }
  mvt::write_csv((dir / "balance_long.csv").string(), long_t);
}

int cmd_estimate(const EstimateArgs& args, bool diagnose_only,
                 const std::string& treatment_model) {
  mvt::Dataset d;
  mvt::EstimationConfig cfg;
  try {
    d = mvt::load_csv(args.data_path, args.outcome_col, args.treatment_col,
                      split_commas(args.covariate_cols));
    cfg.estimator = mvt::estimator_from_name(args.estimator);
    cfg.library = args.use_glm ? mvt::LearnerLibrary::Glm
                               : mvt::LearnerLibrary::SlFull;
    cfg.folds = args.folds;
    cfg.seed = args.seed;
    cfg.winsor = parse_winsor(args.winsor);
    if (!args.reference.empty()) cfg.reference = resolve_reference(d, args.reference);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    fs::create_directories(args.out_dir);
    const fs::path out(args.out_dir);

    mvt::NuisanceRequest req;
    if (diagnose_only) {
      req.need_multinomial = treatment_model == "multinomial";
      req.need_binomial = treatment_model == "binomial";
    } else {
      switch (cfg.estimator) {
        case mvt::EstimatorKind::TmleMultinomial:
        case mvt::EstimatorKind::IptwMultinomial:
        case mvt::EstimatorKind::GComputation:
          req.need_multinomial = true;
          break;
        default:
          req.need_binomial = true;
      }
    }

    const mvt::FittedNuisance fits =
        diagnose_only ? mvt::fit_nuisance_treatment_only(d, cfg, req)
                      : mvt::fit_nuisance(d, cfg, req);

    const mvt::PropensitySource source = req.need_multinomial
                                             ? mvt::PropensitySource::Multinomial
                                             : mvt::PropensitySource::BinomialPerLevel;
    const mvt::PropensityMatrix& raw_pm =
        source == mvt::PropensitySource::Multinomial ? *fits.multinomial
                                                     : *fits.binomial;
    const mvt::PropensityMatrix pm_w = mvt::winsorize(raw_pm, *cfg.winsor);

    write_overlap(out / "overlap.csv", mvt::overlap_summary(pm_w, d), d);
    write_balance(out, mvt::covariate_balance(d, pm_w));
    write_ensemble_report(out / "ensemble_report.csv", fits, d);

    json summary = {{"command", diagnose_only ? "diagnose" : "estimate"},
                    {"data", args.data_path},
                    {"outcome", args.outcome_col},
                    {"treatment", args.treatment_col},
                    {"covariates", split_commas(args.covariate_cols)},
                    {"library", library_name(cfg.library)},
                    {"folds", cfg.folds},
                    {"seed", cfg.seed},
                    {"winsor", {{"lower", cfg.winsor->lower},
                                {"upper", cfg.winsor->upper}}},
                    {"levels", d.level_labels},
                    {"n", d.n()},
                    {"inputs", {{args.data_path, sha1::of_file(args.data_path)}}}};

    if (!diagnose_only) {
      const mvt::NuisanceFits nf =
          mvt::assemble_nuisance(d, fits, source, cfg.winsor);
      const mvt::EstimateTable table =
          mvt::estimate_pairs_from_nuisance(d, cfg.estimator, nf, cfg.reference);
      mvt::CsvTable t;
      t.header = {"estimator", "ref", "alt", "ate", "se", "ci_lo", "ci_hi", "n"};
      for (const auto& row : table.rows)
        t.rows.push_back({mvt::estimator_name(table.estimator),
                          d.level_labels[row.ref_level - 1],
                          d.level_labels[row.alt_level - 1], fmt(row.ate),
                          fmt(row.se), fmt(row.ci_lo), fmt(row.ci_hi),
                          std::to_string(table.n)});
      mvt::write_csv((out / "estimates.csv").string(), t);
      summary["estimator"] = mvt::estimator_name(cfg.estimator);
      if (cfg.reference)
        summary["reference"] = d.level_labels[*cfg.reference - 1];
    } else {
      summary["treatment_model"] = treatment_model;
    }
    write_json(out / "summary.json", summary);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitEstimation;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gendata: synthetic stand-in datasets for the estimation path

struct GendataArgs {
  int levels = 6;
  int n = 2000;
  std::string overlap = "adequate";
  std::string event_rate = "low";
  std::string regime;
  std::uint64_t seed = 1;
  std::string out_path;
};

int cmd_gendata(const GendataArgs& args) {
  try {
    mvt::ScenarioConfig cfg;
    cfg.levels = args.levels;
    cfg.n = args.n;
    cfg.overlap = mvt::overlap_from_name(args.overlap);
    cfg.event_rate = mvt::event_rate_from_name(args.event_rate);
    cfg.regime = args.regime.empty()
                     ? (args.levels == 3 ? mvt::CovariateRegime::ThreeLevel
                                         : mvt::CovariateRegime::Standard6)
                     : mvt::regime_from_name(args.regime);
    cfg.master_seed = args.seed;
    cfg.replications = 1;
    cfg.check();
    const mvt::SimulatedData sim = mvt::gen_scenario(cfg, 0);
    mvt::write_csv(args.out_path, sim.data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pairwise treatment-effect estimation for multi-valued "
               "treatments: TMLE, IPTW, and G-computation with super-learner "
               "nuisance models, plus the Monte-Carlo scenario harness"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "run a Monte-Carlo scenario grid");
  sim->add_option("--config", sim_args.config_path, "JSON scenario config")
      ->required();
  sim->add_option("--out", sim_args.out_dir, "output directory")->required();
  sim->add_option("--n", sim_args.n_override, "override sample size");
  sim->add_option("--reps", sim_args.reps_override, "override replication count");
  sim->add_option("--seed", sim_args.seed_override, "override master seed");
  sim->add_option("--estimators", sim_args.estimators_override,
                  "override estimator list (comma separated)");
  sim->add_option("--threads", sim_args.threads, "worker threads");

  EstimateArgs est_args;
  auto* est = app.add_subcommand("estimate", "estimate pairwise ATEs from a CSV");
  est->add_option("--data", est_args.data_path, "input CSV")->required();
  est->add_option("--outcome", est_args.outcome_col, "outcome column")->required();
  est->add_option("--treatment", est_args.treatment_col, "treatment column")
      ->required();
  est->add_option("--covariates", est_args.covariate_cols,
                  "covariate columns (comma separated)")
      ->required();
  est->add_option("--estimator", est_args.estimator,
                  "tmle-multinomial|tmle-binomial|iptw-multinomial|"
                  "iptw-binomial|gcomp");
  est->add_option("--reference", est_args.reference,
                  "reference level (label); J-1 contrasts when given");
  est->add_option("--winsor", est_args.winsor, "propensity bounds 'lo,hi'");
  est->add_flag("--glm", est_args.use_glm, "single GLM nuisance models");
  est->add_flag("--sl", est_args.use_sl, "super-learner nuisance models (default)");
  est->add_option("--folds", est_args.folds, "super-learner folds");
  est->add_option("--seed", est_args.seed, "seed");
  est->add_option("--out", est_args.out_dir, "output directory")->required();
  est->add_option("--threads", est_args.threads, "worker threads");

  EstimateArgs diag_args;
  std::string treatment_model = "multinomial";
  auto* diag = app.add_subcommand("diagnose",
                                  "fit the treatment model and emit overlap "
                                  "and balance reports");
  diag->add_option("--data", diag_args.data_path, "input CSV")->required();
  diag->add_option("--outcome", diag_args.outcome_col, "outcome column")
      ->required();
  diag->add_option("--treatment", diag_args.treatment_col, "treatment column")
      ->required();
  diag->add_option("--covariates", diag_args.covariate_cols,
                   "covariate columns (comma separated)")
      ->required();
  diag->add_option("--treatment-model", treatment_model,
                   "multinomial|binomial");
  diag->add_option("--winsor", diag_args.winsor, "propensity bounds 'lo,hi'");
  diag->add_flag("--glm", diag_args.use_glm, "single GLM treatment model");
  diag->add_flag("--sl", diag_args.use_sl, "super-learner treatment model");
  diag->add_option("--folds", diag_args.folds, "super-learner folds");
  diag->add_option("--seed", diag_args.seed, "seed");
  diag->add_option("--out", diag_args.out_dir, "output directory")->required();

  GendataArgs gen_args;
  auto* gen = app.add_subcommand("gendata",
                                 "write a synthetic scenario dataset as CSV");
  gen->add_option("--levels", gen_args.levels, "treatment levels (3 or 6)");
  gen->add_option("--n", gen_args.n, "sample size");
  gen->add_option("--overlap", gen_args.overlap, "adequate|inadequate|rct");
  gen->add_option("--event-rate", gen_args.event_rate, "low|moderate|no-effect");
  gen->add_option("--regime", gen_args.regime,
                  "standard6|highdim40|highdim100|threelevel");
  gen->add_option("--seed", gen_args.seed, "seed");
  gen->add_option("--out", gen_args.out_path, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (sim->parsed()) return cmd_simulate(sim_args);
  if (est->parsed()) return cmd_estimate(est_args, false, "");
  if (diag->parsed()) {
    if (treatment_model != "multinomial" && treatment_model != "binomial") {
      std::cerr << "error: --treatment-model must be multinomial or binomial\n";
      return kExitConfig;
    }
    return cmd_estimate(diag_args, true, treatment_model);
  }
  if (gen->parsed()) return cmd_gendata(gen_args);
  return kExitConfig;
}
