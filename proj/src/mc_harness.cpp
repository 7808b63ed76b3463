#include "scsm/mc_harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>

#include "scsm/error.hpp"
#include "scsm/parallel.hpp"
#include "scsm/rng.hpp"

namespace scsm {

namespace {

constexpr std::uint64_t kReplicateSalt = 21;
constexpr std::uint64_t kInferenceSalt = 22;
constexpr double kCritical = 1.959964;

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

ReplicateOutcome run_one(const Trial& trial, EstimatorKind kind, const StudyConfig& cfg, std::uint64_t seed) {
  ReplicateOutcome out;
  try {
    const auto f = fit(trial.data, kind, cfg.fit_options);
    if (f.no_events) throw DataError("no events");
    const auto targets = study_targets(kind);
    const bool need_ic = cfg.se_method == SeMethod::influence || cfg.mult_G > 0;
    InfluenceCurves ic;
    if (need_ic) ic = influence_curves(trial.data, f);
    const StandardErrors se = cfg.se_method == SeMethod::influence
                                  ? se_influence(ic)
                                  : se_bootstrap(trial.data, kind, cfg.fit_options, cfg.boot_B, seed);
    for (const auto& name : targets) {
      const double t = target_time(name);
      const int col = name.find("_Z") != std::string::npos ? 1 : 0;
      if (t == 0.0) {
        out.estimate.push_back(f.beta(col));
        out.se.push_back(se.beta(col));
        continue;
      }
      const std::size_t k = f.curve.count_through(t);
      out.estimate.push_back(f.curve.evaluate(t)(col));
      out.se.push_back(k == 0 ? 0.0 : se.curve(static_cast<Eigen::Index>(k) - 1, col));
    }
    if (cfg.mult_G > 0) {
      const auto mt = multiplier_tests(ic, f, cfg.mult_G, seed ^ 0x9e3779b97f4a7c15ULL);
      out.p_null_d = mt.p_null_d;
      out.p_null_z = mt.p_null_z;
      out.p_gof = mt.p_gof;
    }
    for (double v : out.estimate)
      if (!std::isfinite(v)) throw NumericFailure("non-finite estimate", 0);
    out.ok = true;
  } catch (const Error& e) {
    out = ReplicateOutcome{};
    out.error = e.what();
  }
  return out;
}

double truth_for(const std::string& target, const DgmConfig& dgm) {
  const double t = target_time(target);
  const bool z = target.find("_Z") != std::string::npos;
  const double slope = z ? dgm.slope_z() : dgm.slope_d();
  return t == 0.0 ? slope : slope * t;
}

}  // namespace

void StudyConfig::validate() const {
  dgm.validate();
  if (reps < 2) throw InvalidInput("study: at least 2 replicates required");
  if (se_method == SeMethod::bootstrap && boot_B < 100) throw InvalidInput("study: boot_B must be at least 100");
  if (mult_G != 0 && mult_G < 1000) throw InvalidInput("study: mult_G must be 0 or at least 1000");
}

std::uint64_t replicate_seed(std::uint64_t study_seed, std::size_t r) {
  Rng rng = substream(study_seed, r, kReplicateSalt);
  return rng();
}

std::vector<std::string> study_targets(EstimatorKind kind) {
  std::vector<std::string> t{"B_D(1)", "B_D(2)", "B_D(3)", "beta_D"};
  if (kind == EstimatorKind::robust) t.insert(t.end(), {"B_Z(1)", "B_Z(2)", "B_Z(3)", "beta_Z"});
  return t;
}

double target_time(const std::string& target) {
  if (target.rfind("beta", 0) == 0) return 0.0;
  const auto open = target.find('(');
  const auto close = target.find(')');
  if (open == std::string::npos || close == std::string::npos || close <= open + 1)
    throw InvalidInput("unknown target '" + target + "'");
  return std::stod(target.substr(open + 1, close - open - 1));
}

const TargetSummary& EstimatorSummary::target(const std::string& name) const {
  for (const auto& t : targets)
    if (t.target == name) return t;
  throw InvalidInput("report has no target '" + name + "'");
}

const EstimatorSummary& StudyReport::estimator(EstimatorKind kind) const {
  for (const auto& e : estimators)
    if (e.kind == kind) return e;
  throw InvalidInput(std::string("report has no estimator '") + to_string(kind) + "'");
}

StudyReport run_study(const StudyConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  StudyReport report;
  report.config = cfg;

  DgmConfig dgm = cfg.dgm;
  if (!dgm.lambda_c) {
    auto cal = calibrate_censoring(dgm, dgm.pilot_n, cfg.seed);
    dgm.lambda_c = cal.lambda_c;
    report.warnings.insert(report.warnings.end(), cal.warnings.begin(), cal.warnings.end());
  }
  report.lambda_c = *dgm.lambda_c;
  report.config.dgm.lambda_c = dgm.lambda_c;

  const std::size_t R = cfg.reps;
  const std::size_t E = cfg.estimators.size();
  std::vector<ReplicateOutcome> outcomes(R * E);
  std::vector<double> switching(R, 0.0), censoring(R, 0.0);
  std::vector<char> sim_failed(R, 0);

  parallel_for(R, [&](std::size_t r) {
    DgmConfig rep = dgm;
    rep.seed = replicate_seed(cfg.seed, r);
    std::optional<Trial> made;
    try {
      made.emplace(simulate_trial(rep));
    } catch (const Error& e) {
      sim_failed[r] = 1;
      for (std::size_t e_i = 0; e_i < E; ++e_i) outcomes[r * E + e_i].error = e.what();
      return;
    }
    const Trial& trial = *made;
    switching[r] = trial.switching_fraction;
    censoring[r] = trial.censoring_fraction;
    for (std::size_t e_i = 0; e_i < E; ++e_i)
      outcomes[r * E + e_i] = run_one(trial, cfg.estimators[e_i], cfg, mix64(rep.seed + kInferenceSalt + e_i));
  }, worker_count());

  std::size_t simulated = 0;
  for (std::size_t r = 0; r < R; ++r) {
    if (sim_failed[r]) continue;
    ++simulated;
    report.mean_switching += switching[r];
    report.mean_censoring += censoring[r];
  }
  if (simulated > 0) {
    report.mean_switching /= static_cast<double>(simulated);
    report.mean_censoring /= static_cast<double>(simulated);
  }

  for (std::size_t e_i = 0; e_i < E; ++e_i) {
    EstimatorSummary es;
    es.kind = cfg.estimators[e_i];
    const auto targets = study_targets(es.kind);
    es.replicates.reserve(R);
    for (std::size_t r = 0; r < R; ++r) es.replicates.push_back(outcomes[r * E + e_i]);
    std::size_t rej[3] = {0, 0, 0};
    for (const auto& o : es.replicates) {
      if (!o.ok) {
        ++es.failures;
        continue;
      }
      ++es.successes;
      rej[0] += o.p_null_d <= 0.05 ? 1 : 0;
      rej[1] += o.p_null_z <= 0.05 ? 1 : 0;
      rej[2] += o.p_gof <= 0.05 ? 1 : 0;
    }
    const double ok = static_cast<double>(es.successes);
    if (es.successes > 0) {
      es.reject_null_d = static_cast<double>(rej[0]) / ok;
      es.reject_null_z = static_cast<double>(rej[1]) / ok;
      es.reject_gof = static_cast<double>(rej[2]) / ok;
    }
    for (std::size_t j = 0; j < targets.size(); ++j) {
      TargetSummary ts;
      ts.target = targets[j];
      ts.truth = truth_for(targets[j], dgm);
      ts.n = es.successes;
      double mean = 0.0, mean_se = 0.0, covered = 0.0;
      for (const auto& o : es.replicates) {
        if (!o.ok) continue;
        mean += o.estimate[j];
        mean_se += o.se[j];
        covered += std::abs(o.estimate[j] - ts.truth) <= kCritical * o.se[j] ? 1.0 : 0.0;
      }
      if (es.successes > 0) {
        mean /= ok;
        ts.bias = mean - ts.truth;
        ts.sd = mean_se / ok;
        ts.cp = covered / ok;
      }
      if (es.successes > 1) {
        double ss = 0.0;
        for (const auto& o : es.replicates)
          if (o.ok) ss += (o.estimate[j] - mean) * (o.estimate[j] - mean);
        ts.see = std::sqrt(ss / (ok - 1.0));
      }
      es.targets.push_back(ts);
    }
    if (static_cast<double>(es.failures) > 0.01 * static_cast<double>(R)) {
      std::ostringstream w;
      w << "WARNING: " << to_string(es.kind) << " estimator failed in " << es.failures << " of " << R
        << " replicates (excluded from all metrics)";
      report.warnings.push_back(w.str());
    }
    report.estimators.push_back(std::move(es));
  }
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<ReportRow> report_rows(const StudyReport& report) {
  std::vector<ReportRow> rows;
  for (const auto& es : report.estimators)
    for (const auto& t : es.targets)
      rows.push_back({to_string(es.kind), t.target, t.bias, t.see, t.sd, t.cp, report.config.dgm.n,
                      report.config.reps, report.config.seed, es.failures});
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "estimator,target,bias,see,sd,cp,n,R,seed,failures\n";
  for (const auto& r : rows) {
    out += r.estimator + ',' + r.target + ',' + fmt17(r.bias) + ',' + fmt17(r.see) + ',' + fmt17(r.sd) + ',' +
           fmt17(r.cp) + ',' + std::to_string(r.n) + ',' + std::to_string(r.R) + ',' + std::to_string(r.seed) +
           ',' + std::to_string(r.failures) + '\n';
  }
  return out;
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::vector<ReportRow> rows;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "estimator,target,bias,see,sd,cp,n,R,seed,failures")
        throw DataError("report CSV line " + std::to_string(line_no) + ": unexpected header");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw DataError("report CSV line " + std::to_string(line_no) + ": expected 10 fields");
    try {
      rows.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5]),
                      std::stoul(f[6]), std::stoul(f[7]), std::stoull(f[8]), std::stoul(f[9])});
    } catch (const std::logic_error&) {
      throw DataError("report CSV line " + std::to_string(line_no) + ": unparseable number");
    }
  }
  return rows;
}

std::string report_markdown(const StudyReport& report) {
  static const char* columns[] = {"B_D(1)", "B_D(2)", "B_D(3)", "beta_D"};
  std::string out = "| Estimator | Metric | t=1 | t=2 | t=3 | β |\n|---|---|---:|---:|---:|---:|\n";
  char buf[64];
  for (const auto& es : report.estimators) {
    const char* labels[] = {"Bias", "SEE", "SD", "CP"};
    for (int m = 0; m < 4; ++m) {
      out += std::string("| ") + to_string(es.kind) + " | " + labels[m] + " |";
      for (const char* c : columns) {
        const auto& t = es.target(c);
        const double v = m == 0 ? t.bias : m == 1 ? t.see : m == 2 ? t.sd : 100.0 * t.cp;
        std::snprintf(buf, sizeof buf, m == 3 ? " %.1f |" : " %.4f |", v);
        out += buf;
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace scsm
