#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scsm/core_model.hpp"
#include "scsm/pinv.hpp"

namespace scsm {

enum class EstimatorKind { robust, ytt };

const char* to_string(EstimatorKind kind) noexcept;
EstimatorKind parse_estimator_kind(const std::string& name);

// Population over which E_n{D(t) | Z} is taken when centering treatment.
//   weighted_at_risk: subjects at risk at t, weighted by their current
//                     survivor weights (the recursion's own weights).
//   at_risk:          subjects at risk at t, unweighted.
//   all_subjects:     every subject, with treatment zero after follow-up.
enum class Centering { weighted_at_risk, at_risk, all_subjects };

const char* to_string(Centering c) noexcept;
Centering parse_centering(const std::string& name);

struct FitOptions {
  // Relative singular-value cut for the per-jump pseudo-inverse.
  double pinv_rtol = 1e-10;
  Centering centering = Centering::weighted_at_risk;
};

// Empirical centering of the instrument and of treatment within arm.
struct CenteredNuisances {
  double z_mean = 0.0;
  Eigen::VectorXd zc;             // Z_i - mean(Z)
  std::vector<double> times;      // evaluation grid
  Eigen::MatrixX2d d_mean;        // row k: mean effective treatment at times[k] in arm 0 / arm 1
  Centering centering = Centering::all_subjects;

  // t must be one of the grid times.
  double d_mean_by_arm(double t, int arm) const;
  std::size_t index_of(double t) const;
};

// d_mean holds the unweighted means (at risk, or over all subjects). The
// weighted mode depends on the survivor weights and is evaluated where they
// are known; here it stores the at-risk means with unit weights.
CenteredNuisances center_nuisances(const Dataset& data, std::span<const double> times,
                                   Centering centering = Centering::all_subjects);

// Design matrix of the per-jump estimating equations. Rows index the
// instruments (Z^c, Z^c D^c); columns index the coefficients (dB_D, dB_Z).
struct DesignMatrix {
  Eigen::Matrix2d m;
  double min_singular = 0.0;
  int effective_rank = 0;
};

// With weighted_at_risk centering the within-arm means use survivor_weights.
DesignMatrix design_matrix(const Dataset& data, const CenteredNuisances& nuis, double t,
                           std::span<const double> survivor_weights, double rel_tol = 1e-10);

struct JumpDiagnostic {
  double time = 0.0;
  double min_singular = 0.0;
  int rank = 0;
};

struct FitResult {
  EstimatorKind kind = EstimatorKind::robust;
  FitOptions options;
  CumulativeEffectd curve;
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  std::vector<double> weights;          // w(t_k), normalized constant-effect weights
  std::vector<JumpDiagnostic> diagnostics;
  std::vector<double> survivor_weights; // exp(sum over own at-risk jumps of D dB_D + Z dB_Z)
  bool no_events = false;
  std::size_t degenerate_jumps = 0;
  std::vector<std::string> warnings;
};

FitResult fit_scsm(const Dataset& data, const FitOptions& options = {});
FitResult fit_ytt(const Dataset& data, const FitOptions& options = {});
FitResult fit(const Dataset& data, EstimatorKind kind, const FitOptions& options = {});

// Weighted average of the jumps with weights proportional to the fraction at
// risk, normalized by the exact integral of that fraction over [0, tau].
struct ConstantEffect {
  Eigen::Vector2d beta;
  std::vector<double> weights;
  double normalizer;
};

ConstantEffect constant_effect_weights(const CumulativeEffectd& curve, const Dataset& data);
Eigen::Vector2d constant_effect(const FitResult& fit, const Dataset& data);

}  // namespace scsm
