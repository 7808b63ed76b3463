#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "scsm/error.hpp"
#include "scsm/inference.hpp"
#include "scsm/io.hpp"
#include "scsm/mc_harness.hpp"
#include "scsm/simulation.hpp"

using namespace scsm;
using nlohmann::json;

namespace {

constexpr int kUsage = 2;
constexpr int kData = 3;
constexpr int kNumeric = 4;
constexpr std::uint64_t kBootstrapStream = 1;
constexpr std::uint64_t kMultiplierStream = 2;

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& given) {
  if (given) return *given;
  const auto seed = entropy_seed();
  std::printf("seed: %llu\n", static_cast<unsigned long long>(seed));
  return seed;
}

struct SimulateArgs {
  std::size_t n = 1600;
  std::optional<std::uint64_t> seed;
  std::string variant = "paper";
  std::string out = "trial";
  double tau_admin = 3.0;
  double censor_rate = 0.18;
  std::optional<double> lambda_c;
};

int run_simulate(const SimulateArgs& a) {
  DgmConfig cfg;
  cfg.n = a.n;
  cfg.seed = resolve_seed(a.seed);
  cfg.variant = parse_variant(a.variant);
  cfg.tau_admin = a.tau_admin;
  cfg.censor_rate_target = a.censor_rate;
  cfg.lambda_c = a.lambda_c;
  const Trial trial = simulate_trial(cfg);

  Manifest m{"simulate", cfg.seed,
             {{"n", cfg.n}, {"variant", to_string(cfg.variant)}, {"tau_admin", cfg.tau_admin},
              {"censor_rate_target", cfg.censor_rate_target}, {"grid_step", cfg.grid_step},
              {"pilot_n", cfg.pilot_n}, {"lambda_c", a.lambda_c ? json(*a.lambda_c) : json(nullptr)}}};
  write_dataset(trial.data, a.out + ".events.csv", a.out + ".treatment.csv", &m);
  json truth = truth_json(trial, cfg);
  truth["manifest"] = m.to_json();
  write_text(a.out + ".truth.json", dump_json(truth));
  for (const auto& w : trial.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return 0;
}

struct FitArgs {
  std::string events, treatment;
  std::optional<double> tau;
  std::string estimator = "robust";
  std::string se = "influence";
  std::size_t boot_B = 200;
  std::size_t mult_G = 1000;
  std::optional<std::uint64_t> seed;
  double pinv_rtol = 1e-10;
  std::string centering = "weighted_at_risk";
  double level = 0.95;
  std::string out = "fit";
};

int run_fit(const FitArgs& a) {
  FitOptions opt;
  opt.pinv_rtol = a.pinv_rtol;
  opt.centering = parse_centering(a.centering);
  const auto kind = parse_estimator_kind(a.estimator);
  const auto method = parse_se_method(a.se);
  if (method == SeMethod::bootstrap && a.boot_B < 100) throw InvalidInput("--boot-B must be at least 100");
  if (a.mult_G < 1000) throw InvalidInput("--mult-G must be at least 1000");
  normal_critical_value(a.level);
  const std::uint64_t seed = resolve_seed(a.seed);

  const Dataset data = load_dataset(a.events, a.treatment, a.tau);
  FitReport r;
  r.fit = fit(data, kind, opt);
  r.events = data.event_times().size();
  r.tau = data.tau();
  const auto ic = influence_curves(data, r.fit);
  r.se = method == SeMethod::influence ? se_influence(ic)
                                       : se_bootstrap(data, kind, opt, a.boot_B, mix64(seed + kBootstrapStream));
  r.bands = pointwise_bands(r.fit, r.se.curve, a.level);
  r.tests = multiplier_tests(ic, r.fit, a.mult_G, mix64(seed + kMultiplierStream));

  Manifest m{"fit", seed,
             {{"events", a.events}, {"treatment", a.treatment}, {"tau", r.tau}, {"estimator", a.estimator},
              {"se", a.se}, {"boot_B", a.boot_B}, {"mult_G", a.mult_G}, {"pinv_rtol", a.pinv_rtol},
              {"centering", a.centering}, {"level", a.level}}};
  write_results(r, m, a.out);
  for (const auto& w : r.fit.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  for (const auto& w : r.se.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  for (const auto& w : r.tests->warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("beta_D %s (se %s)  beta_Z %s (se %s)  p_null_D %s  p_gof %s\n", format_double(r.fit.beta(0)).c_str(),
              format_double(r.se.beta(0)).c_str(), format_double(r.fit.beta(1)).c_str(),
              format_double(r.se.beta(1)).c_str(), format_double(r.tests->p_null_d).c_str(),
              format_double(r.tests->p_gof).c_str());
  return 0;
}

struct McArgs {
  std::size_t n = 1600;
  std::size_t reps = 1000;
  std::string variant = "paper";
  std::optional<std::uint64_t> seed;
  std::string out = "study";
  std::vector<std::string> estimators{"robust", "ytt"};
  std::string se = "influence";
  std::size_t boot_B = 200;
  std::size_t mult_G = 0;
  double tau_admin = 3.0;
  double censor_rate = 0.18;
  std::optional<double> lambda_c;
  std::string centering = "weighted_at_risk";
};

int run_mc(const McArgs& a) {
  StudyConfig cfg;
  cfg.dgm.n = a.n;
  cfg.dgm.variant = parse_variant(a.variant);
  cfg.dgm.tau_admin = a.tau_admin;
  cfg.dgm.censor_rate_target = a.censor_rate;
  cfg.dgm.lambda_c = a.lambda_c;
  cfg.reps = a.reps;
  cfg.estimators.clear();
  for (const auto& e : a.estimators) cfg.estimators.push_back(parse_estimator_kind(e));
  cfg.se_method = parse_se_method(a.se);
  cfg.boot_B = a.boot_B;
  cfg.mult_G = a.mult_G;
  cfg.fit_options.centering = parse_centering(a.centering);
  cfg.seed = resolve_seed(a.seed);

  const auto report = run_study(cfg);
  Manifest m{"mc", cfg.seed,
             {{"n", a.n}, {"reps", a.reps}, {"variant", a.variant}, {"estimators", a.estimators}, {"se", a.se},
              {"boot_B", a.boot_B}, {"mult_G", a.mult_G}, {"tau_admin", a.tau_admin},
              {"censor_rate_target", a.censor_rate}, {"lambda_c", report.lambda_c}, {"centering", a.centering}}};
  write_text(a.out + ".csv", m.comment_block() + report_csv(report_rows(report)));
  std::string md = "<!--\n" + m.comment_block() + "-->\n\n" + report_markdown(report);
  for (const auto& w : report.warnings) md += "\n> " + w + "\n";
  write_text(a.out + ".md", md);
  write_text(a.out + ".json", dump_json(study_json(report, m)));

  std::cout << report_markdown(report);
  for (const auto& w : report.warnings) std::fprintf(stderr, "%s\n", w.c_str());
  std::fprintf(stderr, "runtime: %.1f s\n", report.runtime_seconds);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structural cumulative survival models with an instrument that may have direct effects"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Simulate a randomized trial with treatment switching");
  s->add_option("--n", sim.n, "Number of subjects")->check(CLI::Range(2, 100000000));
  s->add_option("--seed", sim.seed, "Random seed (drawn from entropy and printed when omitted)");
  s->add_option("--variant", sim.variant, "Data-generating variant")->check(CLI::IsMember({"paper", "valid", "null"}));
  s->add_option("--out", sim.out, "Output prefix");
  s->add_option("--tau-admin", sim.tau_admin, "Administrative censoring time");
  s->add_option("--censor-rate", sim.censor_rate, "Target overall censoring fraction");
  s->add_option("--lambda-c", sim.lambda_c, "Exponential censoring rate (skips calibration)");

  FitArgs fa;
  auto* f = app.add_subcommand("fit", "Fit the cumulative effect curves and run inference");
  f->add_option("--events", fa.events, "Events CSV (id,time,status,z)")->required();
  f->add_option("--treatment", fa.treatment, "Treatment CSV (id,t_start,d)")->required();
  f->add_option("--tau", fa.tau, "End of the estimation window (default: largest follow-up)");
  f->add_option("--estimator", fa.estimator)->check(CLI::IsMember({"robust", "ytt"}));
  f->add_option("--se", fa.se)->check(CLI::IsMember({"bootstrap", "influence"}));
  f->add_option("--boot-B", fa.boot_B, "Bootstrap replicates");
  f->add_option("--mult-G", fa.mult_G, "Multiplier replicates for the sup tests");
  f->add_option("--seed", fa.seed);
  f->add_option("--pinv-rtol", fa.pinv_rtol, "Relative singular-value cutoff of the pseudo-inverse");
  f->add_option("--centering", fa.centering)
      ->check(CLI::IsMember({"weighted_at_risk", "at_risk", "all_subjects"}));
  f->add_option("--level", fa.level, "Confidence level");
  f->add_option("--out", fa.out, "Output prefix");

  McArgs ma;
  auto* mc = app.add_subcommand("mc", "Monte Carlo study");
  mc->add_option("--n", ma.n)->check(CLI::Range(2, 100000000));
  mc->add_option("--reps", ma.reps)->check(CLI::Range(2, 100000000));
  mc->add_option("--variant", ma.variant)->check(CLI::IsMember({"paper", "valid", "null"}));
  mc->add_option("--seed", ma.seed);
  mc->add_option("--out", ma.out, "Output prefix");
  mc->add_option("--estimators", ma.estimators)->delimiter(',')->check(CLI::IsMember({"robust", "ytt"}));
  mc->add_option("--se", ma.se)->check(CLI::IsMember({"bootstrap", "influence"}));
  mc->add_option("--boot-B", ma.boot_B);
  mc->add_option("--mult-G", ma.mult_G, "Multiplier replicates (0 disables the tests)");
  mc->add_option("--tau-admin", ma.tau_admin);
  mc->add_option("--censor-rate", ma.censor_rate);
  mc->add_option("--lambda-c", ma.lambda_c);
  mc->add_option("--centering", ma.centering)
      ->check(CLI::IsMember({"weighted_at_risk", "at_risk", "all_subjects"}));

  auto* v = app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*v) {
      std::printf("%s\n", tool_version());
      return 0;
    }
    if (*s) return run_simulate(sim);
    if (*f) return run_fit(fa);
    if (*mc) return run_mc(ma);
  } catch (const NumericFailure& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
