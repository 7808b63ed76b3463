#include "scsm/estimator.hpp"

#include <algorithm>
#include <cmath>

#include "recursion.hpp"

namespace scsm {

const char* to_string(EstimatorKind kind) noexcept {
  return kind == EstimatorKind::robust ? "robust" : "ytt";
}

const char* to_string(Centering c) noexcept {
  switch (c) {
    case Centering::weighted_at_risk: return "weighted_at_risk";
    case Centering::at_risk: return "at_risk";
    case Centering::all_subjects: return "all_subjects";
  }
  return "weighted_at_risk";
}

Centering parse_centering(const std::string& name) {
  if (name == "weighted_at_risk") return Centering::weighted_at_risk;
  if (name == "at_risk") return Centering::at_risk;
  if (name == "all_subjects") return Centering::all_subjects;
  throw InvalidInput("unknown centering '" + name + "' (expected weighted_at_risk, at_risk or all_subjects)");
}

EstimatorKind parse_estimator_kind(const std::string& name) {
  if (name == "robust") return EstimatorKind::robust;
  if (name == "ytt") return EstimatorKind::ytt;
  throw InvalidInput("unknown estimator '" + name + "' (expected robust or ytt)");
}

std::size_t CenteredNuisances::index_of(double t) const {
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end() || *it != t) throw InvalidInput("CenteredNuisances: time not on the evaluation grid");
  return static_cast<std::size_t>(it - times.begin());
}

double CenteredNuisances::d_mean_by_arm(double t, int arm) const {
  return d_mean(static_cast<Eigen::Index>(index_of(t)), arm);
}

CenteredNuisances center_nuisances(const Dataset& data, std::span<const double> times, Centering centering) {
  const bool at_risk_only = centering != Centering::all_subjects;
  const auto n = static_cast<Eigen::Index>(data.size());
  CenteredNuisances out;
  out.centering = centering;
  std::size_t arm_count[2] = {0, 0};
  double z_sum = 0.0;
  for (const auto& s : data.subjects()) {
    ++arm_count[s.arm];
    z_sum += s.arm;
  }
  if (arm_count[0] == 0 || arm_count[1] == 0)
    throw IdentificationError("center_nuisances: both arms must be non-empty");
  out.z_mean = z_sum / static_cast<double>(n);
  out.zc.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.zc(i) = data[static_cast<std::size_t>(i)].arm - out.z_mean;

  out.times.assign(times.begin(), times.end());
  if (!std::is_sorted(out.times.begin(), out.times.end()))
    throw InvalidInput("center_nuisances: times must be ascending");
  out.d_mean.setZero(static_cast<Eigen::Index>(out.times.size()), 2);
  for (std::size_t k = 0; k < out.times.size(); ++k) {
    const double t = out.times[k];
    double sum[2] = {0.0, 0.0};
    double count[2] = {0.0, 0.0};
    for (const auto& s : data.subjects()) {
      if (at_risk_only && s.followup < t) continue;
      sum[s.arm] += effective_treatment(s, t);
      count[s.arm] += 1.0;
    }
    for (int z = 0; z < 2; ++z)
      out.d_mean(static_cast<Eigen::Index>(k), z) = count[z] > 0.0 ? sum[z] / count[z] : 0.0;
  }
  return out;
}

DesignMatrix design_matrix(const Dataset& data, const CenteredNuisances& nuis, double t,
                           std::span<const double> survivor_weights, double rel_tol) {
  if (survivor_weights.size() != data.size())
    throw InvalidInput("design_matrix: one survivor weight per subject required");
  if (!(t > 0.0)) throw InvalidInput("design_matrix: t must be positive");
  const std::size_t k = nuis.index_of(t);
  double center[2] = {nuis.d_mean(static_cast<Eigen::Index>(k), 0), nuis.d_mean(static_cast<Eigen::Index>(k), 1)};
  if (nuis.centering == Centering::weighted_at_risk) {
    double num[2] = {0.0, 0.0}, den[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Subject& s = data[i];
      if (s.followup < t) continue;
      num[s.arm] += survivor_weights[i] * effective_treatment(s, t);
      den[s.arm] += survivor_weights[i];
    }
    for (int z = 0; z < 2; ++z) center[z] = den[z] > 0.0 ? num[z] / den[z] : 0.0;
  }
  Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
  double magnitude = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Subject& s = data[i];
    if (!(survivor_weights[i] > 0.0)) throw InvalidInput("design_matrix: survivor weights must be positive");
    if (s.followup < t) continue;
    const double d = effective_treatment(s, t);
    const double zc = nuis.zc(static_cast<Eigen::Index>(i));
    const double dc = d - center[s.arm];
    const double w = survivor_weights[i];
    m(0, 0) += zc * d * w;
    m(0, 1) += zc * s.arm * w;
    m(1, 0) += zc * dc * d * w;
    m(1, 1) += zc * dc * s.arm * w;
    magnitude += std::abs(zc) * (1.0 + std::abs(dc)) * (d + s.arm) * w;
  }
  m /= static_cast<double>(data.size());
  magnitude /= static_cast<double>(data.size());
  const auto p = pinv2(m, rel_tol, rel_tol * magnitude);
  return {m, p.min_singular, p.rank};
}

ConstantEffect constant_effect_weights(const CumulativeEffectd& curve, const Dataset& data) {
  const double tau = data.tau();
  const double n = static_cast<double>(data.size());
  // Integral over [0, tau] of the fraction at risk is the mean of min(X_i, tau).
  double normalizer = 0.0;
  for (const auto& s : data.subjects()) normalizer += std::min(s.followup, tau);
  normalizer /= n;
  if (!(normalizer > 0.0)) throw InvalidInput("constant_effect: zero at-risk integral over [0, tau]");

  ConstantEffect out{Eigen::Vector2d::Zero(), {}, normalizer};
  out.weights.reserve(curve.size());
  for (std::size_t k = 0; k < curve.size(); ++k) {
    const double t = curve.jump_times()[k];
    double at_risk = 0.0;
    for (const auto& s : data.subjects()) at_risk += s.followup >= t ? 1.0 : 0.0;
    const double w = (at_risk / n) / normalizer;
    out.weights.push_back(w);
    out.beta += w * curve.increments().row(static_cast<Eigen::Index>(k)).transpose();
  }
  return out;
}

Eigen::Vector2d constant_effect(const FitResult& fit, const Dataset& data) {
  return constant_effect_weights(fit.curve, data).beta;
}

FitResult fit(const Dataset& data, EstimatorKind kind, const FitOptions& options) {
  if (!(options.pinv_rtol > 0.0)) throw InvalidInput("fit: pinv_rtol must be positive");
  const auto times = data.event_times();
  const auto nuis = center_nuisances(data, times, options.centering);

  FitResult result;
  result.kind = kind;
  result.options = options;
  Eigen::MatrixX2d increments(static_cast<Eigen::Index>(times.size()), 2);
  const int full_rank = kind == EstimatorKind::robust ? 2 : 1;

  detail::run_recursion(data, kind, options, nuis, [&](const detail::JumpState& s) {
    increments.row(static_cast<Eigen::Index>(s.k)) = s.jump.transpose();
    const double min_sv = kind == EstimatorKind::robust ? s.pinv.min_singular : std::abs(s.a(0, 0));
    result.diagnostics.push_back({s.t, min_sv, s.pinv.rank});
    if (s.pinv.rank < full_rank) ++result.degenerate_jumps;
  });

  result.curve = CumulativeEffectd(times, std::move(increments), kind == EstimatorKind::robust ? 2 : 1);

  // Terminal survivor weights over each subject's own at-risk jumps.
  const auto cum_d = [&](const Subject& s) {
    double acc = 0.0;
    for (std::size_t k = 0; k < times.size() && times[k] <= s.followup; ++k) {
      const auto inc = result.curve.increments().row(static_cast<Eigen::Index>(k));
      acc += s.path.value_at(times[k]) * inc(0) + s.arm * inc(1);
    }
    return std::exp(acc);
  };
  result.survivor_weights.reserve(data.size());
  for (const auto& s : data.subjects()) result.survivor_weights.push_back(cum_d(s));

  if (times.empty()) {
    result.no_events = true;
    result.warnings.emplace_back("no events in (0, tau]; estimate is identically zero");
  }
  if (result.degenerate_jumps > 0)
    result.warnings.push_back("design matrix rank-deficient at " + std::to_string(result.degenerate_jumps) +
                              " of " + std::to_string(times.size()) +
                              " event times; minimum-norm jumps used (insufficient treatment switching)");

  auto ce = constant_effect_weights(result.curve, data);
  result.beta = ce.beta;
  result.weights = std::move(ce.weights);
  return result;
}

FitResult fit_scsm(const Dataset& data, const FitOptions& options) {
  return fit(data, EstimatorKind::robust, options);
}

FitResult fit_ytt(const Dataset& data, const FitOptions& options) {
  return fit(data, EstimatorKind::ytt, options);
}

}  // namespace scsm
