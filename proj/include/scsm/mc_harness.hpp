#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "scsm/estimator.hpp"
#include "scsm/inference.hpp"
#include "scsm/simulation.hpp"

namespace scsm {

struct StudyConfig {
  DgmConfig dgm;  // dgm.seed is ignored; replicate seeds derive from `seed`
  std::size_t reps = 1000;
  std::vector<EstimatorKind> estimators{EstimatorKind::robust, EstimatorKind::ytt};
  SeMethod se_method = SeMethod::influence;
  std::size_t boot_B = 200;
  std::size_t mult_G = 0;  // 0 skips the multiplier tests
  FitOptions fit_options;
  std::uint64_t seed = 1;

  void validate() const;
};

// Seed of replicate r. Replicates are addressed by index, so the first r
// replicates of a study with R > r reproduce a study with R = r.
std::uint64_t replicate_seed(std::uint64_t study_seed, std::size_t r);

// Targets in report order. The one-dimensional estimator has no B_Z.
std::vector<std::string> study_targets(EstimatorKind kind);
double target_time(const std::string& target);  // 0 for the constant effects

struct ReplicateOutcome {
  bool ok = false;
  std::string error;
  std::vector<double> estimate;  // per target
  std::vector<double> se;
  double p_null_d = 1.0, p_null_z = 1.0, p_gof = 1.0;
};

struct TargetSummary {
  std::string target;
  double truth = 0.0;
  double bias = 0.0;
  double see = 0.0;  // Monte Carlo sd of the point estimates
  double sd = 0.0;   // mean estimated SE
  double cp = 0.0;   // fraction of 95% intervals covering the truth, in [0, 1]
  std::size_t n = 0;
};

struct EstimatorSummary {
  EstimatorKind kind = EstimatorKind::robust;
  std::vector<TargetSummary> targets;
  std::size_t successes = 0;
  std::size_t failures = 0;
  // Rejection rates at the 5% level; only meaningful when mult_G > 0.
  double reject_null_d = 0.0, reject_null_z = 0.0, reject_gof = 0.0;
  std::vector<ReplicateOutcome> replicates;

  const TargetSummary& target(const std::string& name) const;
};

struct StudyReport {
  StudyConfig config;
  double lambda_c = 0.0;
  double mean_switching = 0.0;
  double mean_censoring = 0.0;
  std::vector<EstimatorSummary> estimators;
  std::vector<std::string> warnings;
  double runtime_seconds = 0.0;

  std::size_t replicate_count() const noexcept { return config.reps; }
  const EstimatorSummary& estimator(EstimatorKind kind) const;
};

StudyReport run_study(const StudyConfig& cfg);

// One line of the report CSV.
struct ReportRow {
  std::string estimator;
  std::string target;
  double bias = 0.0, see = 0.0, sd = 0.0, cp = 0.0;
  std::size_t n = 0;
  std::size_t R = 0;
  std::uint64_t seed = 0;
  std::size_t failures = 0;
};

std::vector<ReportRow> report_rows(const StudyReport& report);
std::string report_csv(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_report_csv(const std::string& text);  // skips '#' lines
// Rows Bias/SEE/SD/CP per estimator; columns t = 1, 2, 3 and beta.
std::string report_markdown(const StudyReport& report);

}  // namespace scsm
