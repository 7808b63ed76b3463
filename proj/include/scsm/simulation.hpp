#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scsm/core_model.hpp"
#include "scsm/rng.hpp"

namespace scsm {

// paper: switching survival taken literally (clamped and made monotone),
//        hazard 0.1 + 0.2 d + 0.1 z + 0.15 U2.
// valid: switching survival
//          S = a(t; U1)(2Z - 1) + b0(t) + Z b1(t),
//          a = 0.1 e^{-0.03t}(1 - e^{-0.1 U1 t}), b0 = e^{-0.03t},
//          b1 = -0.5(1 - e^{-t}) e^{-0.03t},
//        a proper survival function for every (Z, U1) with switching in
//        both arms; same hazard.
// null:  valid switching, hazard 0.1 + 0.15 U2 (no treatment or arm effect).
enum class Variant { paper, valid, null };

const char* to_string(Variant v) noexcept;
Variant parse_variant(const std::string& name);

struct DgmConfig {
  std::size_t n = 1600;
  std::uint64_t seed = 1;
  double grid_step = 0.1;
  double tau_admin = 3.0;
  double censor_rate_target = 0.18;
  Variant variant = Variant::paper;
  // Exponential censoring rate; calibrated from a pilot when absent.
  std::optional<double> lambda_c;
  std::size_t pilot_n = 100000;

  void validate() const;
  // Cumulative-effect slopes (B_D(t) = slope_d t, B_Z(t) = slope_z t).
  double slope_d() const noexcept { return variant == Variant::null ? 0.0 : 0.2; }
  double slope_z() const noexcept { return variant == Variant::null ? 0.0 : 0.1; }
};

struct HazardCoefficients {
  double baseline = 0.1;
  double treatment = 0.2;
  double arm = 0.1;
  double frailty = 0.15;

  static HazardCoefficients for_variant(Variant v) noexcept;
};

// Latent confounder U ~ N((3/2, 3/2), [[1/4, -1/6], [-1/6, 1/4]]).
Eigen::Vector2d latent_mean();
Eigen::Matrix2d latent_covariance();
Eigen::Vector2d sample_latent(Rng& rng);

// P(W > t | Z, U1) before repair.
double switch_survival_raw(double t, int z, double u1, Variant variant);

// Repaired switching survival on the grid 0, step, 2 step, ... up to
// 10 * tau_admin (at most 1000): clamp to [0, 1], then running minimum.
std::vector<double> switch_survival_grid(int z, double u1, const DgmConfig& cfg);

// Smallest grid time whose repaired survival is <= u, or +inf.
double switch_time_for_uniform(double u, int z, double u1, const DgmConfig& cfg);
double sample_switch_time(Rng& rng, int z, double u1, const DgmConfig& cfg);

// Treatment path implied by assignment z and switching time w: z before w,
// 1 - z from w on.
TreatmentPath path_from_switch(int z, double w);

// Time at which the cumulative hazard along the path reaches `exposure`.
double event_time_for_exposure(double exposure, const TreatmentPath& path, int z, double u2,
                               const HazardCoefficients& coef);
double sample_event_time(Rng& rng, const TreatmentPath& path, int z, double u2, const HazardCoefficients& coef);

struct CensoringCalibration {
  double lambda_c = 0.0;
  double achieved_rate = 0.0;
  std::vector<std::string> warnings;
};

CensoringCalibration calibrate_censoring(const DgmConfig& cfg, std::size_t pilot_n, std::uint64_t seed);

struct TrialTruth {
  double slope_d = 0.0;
  double slope_z = 0.0;
  double b_d(double t) const noexcept { return slope_d * t; }
  double b_z(double t) const noexcept { return slope_z * t; }
};

struct Trial {
  Dataset data;
  TrialTruth truth;
  double lambda_c = 0.0;
  double switching_fraction = 0.0;  // switch observed before follow-up ends
  double censoring_fraction = 0.0;
  std::vector<std::string> warnings;
};

Trial simulate_trial(const DgmConfig& cfg);

}  // namespace scsm
