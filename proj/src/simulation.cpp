#include "scsm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scsm/error.hpp"
#include "scsm/parallel.hpp"

namespace scsm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinHazard = 1e-6;
constexpr double kMaxSwitchHorizon = 1000.0;

// Stream salts so the per-subject draws of the trial and of the censoring
// pilot never share a generator.
constexpr std::uint64_t kTrialSalt = 1;
constexpr std::uint64_t kPilotSalt = 2;

struct LatentSubject {
  int z;
  Eigen::Vector2d u;
  TreatmentPath path;
  double w;
  double t;
};

LatentSubject draw_latent_subject(Rng& rng, const DgmConfig& cfg, const HazardCoefficients& coef) {
  LatentSubject s{};
  s.u = sample_latent(rng);
  s.z = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
  s.w = sample_switch_time(rng, s.z, s.u(0), cfg);
  s.path = path_from_switch(s.z, s.w);
  s.t = sample_event_time(rng, s.path, s.z, s.u(1), coef);
  return s;
}

// Grid of 0, step, ..., up to 10 * tau_admin (capped so an infinite
// administrative horizon still gives a finite search).
std::size_t switch_grid_points(const DgmConfig& cfg) {
  const double horizon = std::min(10.0 * cfg.tau_admin, kMaxSwitchHorizon);
  return static_cast<std::size_t>(std::floor(horizon / cfg.grid_step + 1e-9)) + 1;
}

}  // namespace

const char* to_string(Variant v) noexcept {
  switch (v) {
    case Variant::paper: return "paper";
    case Variant::valid: return "valid";
    case Variant::null: return "null";
  }
  return "paper";
}

Variant parse_variant(const std::string& name) {
  if (name == "paper") return Variant::paper;
  if (name == "valid") return Variant::valid;
  if (name == "null") return Variant::null;
  throw InvalidInput("unknown variant '" + name + "' (expected paper, valid or null)");
}

void DgmConfig::validate() const {
  if (n < 2) throw InvalidInput("DgmConfig: n must be at least 2");
  if (!(grid_step > 0.0)) throw InvalidInput("DgmConfig: grid_step must be positive");
  if (!(tau_admin > 0.0)) throw InvalidInput("DgmConfig: tau_admin must be positive");
  if (!(censor_rate_target >= 0.0 && censor_rate_target < 1.0))
    throw InvalidInput("DgmConfig: censor_rate_target must lie in [0, 1)");
  if (lambda_c && !(*lambda_c >= 0.0 && std::isfinite(*lambda_c)))
    throw InvalidInput("DgmConfig: lambda_c must be finite and non-negative");
}

HazardCoefficients HazardCoefficients::for_variant(Variant v) noexcept {
  HazardCoefficients c;
  if (v == Variant::null) {
    c.treatment = 0.0;
    c.arm = 0.0;
  }
  return c;
}

Eigen::Vector2d latent_mean() { return {1.5, 1.5}; }

Eigen::Matrix2d latent_covariance() {
  Eigen::Matrix2d s;
  s << 0.25, -1.0 / 6.0, -1.0 / 6.0, 0.25;
  return s;
}

Eigen::Vector2d sample_latent(Rng& rng) {
  static const Eigen::Matrix2d chol = latent_covariance().llt().matrixL();
  std::normal_distribution<double> normal;
  const double e0 = normal(rng);
  const double e1 = normal(rng);
  return latent_mean() + chol * Eigen::Vector2d(e0, e1);
}

double switch_survival_raw(double t, int z, double u1, Variant variant) {
  const double sign = 2.0 * z - 1.0;
  if (variant == Variant::valid || variant == Variant::null) {
    const double alpha = 0.1 * std::exp(-0.03 * t) * (1.0 - std::exp(-0.1 * u1 * t));
    const double beta0 = std::exp(-0.03 * t);
    const double beta1 = -0.5 * (1.0 - std::exp(-t)) * std::exp(-0.03 * t);
    return alpha * sign + beta0 + z * beta1;
  }
  return std::exp(-0.5 * t) + z * (1.0 - std::exp(-0.05 * t)) + sign * (1.0 - std::exp(-0.05 * t - 0.1 * u1 * t));
}

std::vector<double> switch_survival_grid(int z, double u1, const DgmConfig& cfg) {
  const std::size_t points = switch_grid_points(cfg);
  std::vector<double> s(points);
  double running = 1.0;
  for (std::size_t j = 0; j < points; ++j) {
    const double raw = switch_survival_raw(static_cast<double>(j) * cfg.grid_step, z, u1, cfg.variant);
    running = std::min(running, std::clamp(raw, 0.0, 1.0));
    s[j] = running;
  }
  return s;
}

double switch_time_for_uniform(double u, int z, double u1, const DgmConfig& cfg) {
  const std::size_t points = switch_grid_points(cfg);
  double running = 1.0;
  for (std::size_t j = 0; j < points; ++j) {
    const double t = static_cast<double>(j) * cfg.grid_step;
    running = std::min(running, std::clamp(switch_survival_raw(t, z, u1, cfg.variant), 0.0, 1.0));
    if (running <= u) return t;
  }
  return kInf;
}

double sample_switch_time(Rng& rng, int z, double u1, const DgmConfig& cfg) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return switch_time_for_uniform(u, z, u1, cfg);
}

TreatmentPath path_from_switch(int z, double w) {
  if (w <= 0.0) return TreatmentPath(1 - z);
  if (!std::isfinite(w)) return TreatmentPath(z);
  return TreatmentPath(z, {{w, 1 - z}});
}

double event_time_for_exposure(double exposure, const TreatmentPath& path, int z, double u2,
                               const HazardCoefficients& coef) {
  const auto hazard = [&](int d) {
    return std::max(kMinHazard, coef.baseline + coef.treatment * d + coef.arm * z + coef.frailty * u2);
  };
  double start = 0.0;
  double remaining = exposure;
  int d = path.initial_value();
  for (const auto& sw : path.switches()) {
    const double h = hazard(d);
    const double piece = h * (sw.time - start);
    if (remaining <= piece) return start + remaining / h;
    remaining -= piece;
    start = sw.time;
    d = sw.value;
  }
  return start + remaining / hazard(d);
}

double sample_event_time(Rng& rng, const TreatmentPath& path, int z, double u2, const HazardCoefficients& coef) {
  std::exponential_distribution<double> exp1(1.0);
  double e = 0.0;
  while (!(e > 0.0)) e = exp1(rng);
  return event_time_for_exposure(e, path, z, u2, coef);
}

CensoringCalibration calibrate_censoring(const DgmConfig& cfg, std::size_t pilot_n, std::uint64_t seed) {
  cfg.validate();
  if (pilot_n < 10000) throw InvalidInput("calibrate_censoring: pilot_n must be at least 10^4");
  const auto coef = HazardCoefficients::for_variant(cfg.variant);

  // Common random numbers: event times and unit exponentials are drawn once,
  // so the censoring fraction is a monotone function of lambda.
  std::vector<double> event_time(pilot_n), unit_exp(pilot_n);
  parallel_for(pilot_n, [&](std::size_t i) {
    Rng rng = substream(seed, i, kPilotSalt);
    event_time[i] = draw_latent_subject(rng, cfg, coef).t;
    unit_exp[i] = std::exponential_distribution<double>(1.0)(rng);
  });

  const auto rate = [&](double lambda) {
    std::size_t censored = 0;
    for (std::size_t i = 0; i < pilot_n; ++i) {
      const double c = lambda > 0.0 ? std::min(unit_exp[i] / lambda, cfg.tau_admin) : cfg.tau_admin;
      if (event_time[i] > c) ++censored;
    }
    return static_cast<double>(censored) / static_cast<double>(pilot_n);
  };

  const double target = cfg.censor_rate_target;
  constexpr double tol = 0.005;
  CensoringCalibration out;
  const double base = rate(0.0);
  if (base >= target - tol) {
    out.lambda_c = 0.0;
    out.achieved_rate = base;
    if (base > target + tol)
      out.warnings.push_back("censoring target " + std::to_string(target) +
                             " unreachable: administrative censoring alone gives " + std::to_string(base));
    return out;
  }
  double lo = 0.0, hi = 0.1;
  while (rate(hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw NumericFailure("censoring calibration failed to bracket the target", 0);
  }
  double mid = hi;
  double achieved = rate(hi);
  for (int iter = 0; iter < 100 && std::abs(achieved - target) > tol; ++iter) {
    mid = 0.5 * (lo + hi);
    achieved = rate(mid);
    (achieved < target ? lo : hi) = mid;
  }
  out.lambda_c = mid;
  out.achieved_rate = achieved;
  return out;
}

Trial simulate_trial(const DgmConfig& cfg) {
  cfg.validate();
  double lambda = 0.0;
  std::vector<std::string> warnings;
  if (cfg.lambda_c) {
    lambda = *cfg.lambda_c;
  } else {
    auto cal = calibrate_censoring(cfg, cfg.pilot_n, cfg.seed);
    lambda = cal.lambda_c;
    warnings = std::move(cal.warnings);
  }
  const auto coef = HazardCoefficients::for_variant(cfg.variant);

  std::vector<Subject> subjects(cfg.n);
  std::vector<char> switched(cfg.n, 0);
  parallel_for(cfg.n, [&](std::size_t i) {
    Rng rng = substream(cfg.seed, i, kTrialSalt);
    const auto latent = draw_latent_subject(rng, cfg, coef);
    const double e = std::exponential_distribution<double>(1.0)(rng);
    const double c = lambda > 0.0 ? std::min(e / lambda, cfg.tau_admin) : cfg.tau_admin;
    Subject& s = subjects[i];
    s.id = std::to_string(i + 1);
    s.arm = latent.z;
    s.followup = std::min(latent.t, c);
    s.event = latent.t <= c ? 1 : 0;
    s.path = latent.path;
    switched[i] = latent.w <= s.followup ? 1 : 0;
  });

  std::size_t n_switched = 0, n_censored = 0;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    n_switched += static_cast<std::size_t>(switched[i]);
    n_censored += subjects[i].event == 0 ? 1 : 0;
  }
  bool arm0 = false, arm1 = false;
  for (const auto& s : subjects) (s.arm ? arm1 : arm0) = true;
  if (!arm0 || !arm1) throw IdentificationError("simulate_trial: one randomized arm is empty");
  const double n = static_cast<double>(cfg.n);
  return Trial{Dataset(std::move(subjects)), TrialTruth{cfg.slope_d(), cfg.slope_z()}, lambda,
               static_cast<double>(n_switched) / n, static_cast<double>(n_censored) / n, std::move(warnings)};
}

}  // namespace scsm
