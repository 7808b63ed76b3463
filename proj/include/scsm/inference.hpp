#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scsm/core_model.hpp"
#include "scsm/estimator.hpp"

namespace scsm {

// Per-subject influence curves of the fitted cumulative effect on its jump
// grid. Scaling: B̂(t_k) - B(t_k) ≈ (1/n) Σ_i eps_i(t_k), i.e.
// √n (B̂ - B) ≈ n^{-1/2} Σ_i eps_i.
struct InfluenceCurves {
  std::vector<double> grid;
  Eigen::MatrixXd eps_d;    // n x K
  Eigen::MatrixXd eps_z;    // n x K (zero for the one-dimensional estimator)
  Eigen::VectorXd eps_beta_d;  // n, influence of beta_D
  Eigen::VectorXd eps_beta_z;

  std::size_t subjects() const noexcept { return static_cast<std::size_t>(eps_d.rows()); }
  std::size_t jumps() const noexcept { return grid.size(); }
};

struct InfluenceOptions {
  // Propagate the estimation of E_n(Z) and E_n{D(t)|Z} into the curves.
  bool include_nuisance = true;
};

InfluenceCurves influence_curves(const Dataset& data, const FitResult& fit, const InfluenceOptions& options = {});

enum class SeMethod { bootstrap, influence };

const char* to_string(SeMethod m) noexcept;
SeMethod parse_se_method(const std::string& name);

struct StandardErrors {
  Eigen::MatrixX2d curve;  // K x 2, SE of (B_D, B_Z) at each jump time
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  SeMethod method = SeMethod::influence;
  std::size_t replicates = 0;  // bootstrap only
  std::size_t redraws = 0;     // bootstrap samples redrawn because an arm was empty
  std::vector<std::string> warnings;
};

StandardErrors se_influence(const InfluenceCurves& curves);

// Nonparametric bootstrap over subjects. Replicate curves are evaluated on
// the original jump grid. Deterministic given seed at any worker count.
StandardErrors se_bootstrap(const Dataset& data, EstimatorKind kind, const FitOptions& options, std::size_t B,
                            std::uint64_t seed);

struct MultiplierTests {
  double p_null_d = 1.0;
  double p_null_z = 1.0;
  double p_gof = 1.0;
  double stat_null_d = 0.0;
  double stat_null_z = 0.0;
  double stat_gof = 0.0;
  std::size_t replicates = 0;
  std::vector<std::string> warnings;
};

// Sup-type tests of B_D ≡ 0, B_Z ≡ 0 and B_D(t) = beta_D t, calibrated by
// Gaussian multipliers on the influence curves.
MultiplierTests multiplier_tests(const InfluenceCurves& curves, const FitResult& fit, std::size_t G,
                                 std::uint64_t seed);

// Two-sided standard normal critical value for a central interval of the
// given level.
double normal_critical_value(double level);

struct Bands {
  Eigen::MatrixX2d lower;
  Eigen::MatrixX2d upper;
  double level = 0.95;
};

Bands pointwise_bands(const FitResult& fit, const Eigen::MatrixX2d& se, double level);

struct InferenceResult {
  StandardErrors se;
  Bands bands;
  MultiplierTests tests;
};

}  // namespace scsm
