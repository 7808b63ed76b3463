#pragma once

// Forward recursion over event times shared by the estimators and the
// influence-curve construction.

#include <cmath>
#include <cstddef>

#include <Eigen/Dense>

#include "scsm/core_model.hpp"
#include "scsm/error.hpp"
#include "scsm/estimator.hpp"
#include "scsm/pinv.hpp"

namespace scsm::detail {

struct JumpState {
  std::size_t k = 0;
  double t = 0.0;
  // Per subject. Instruments h = (Z^c, Z^c D^c) and regressors x = (D, Z);
  // the one-dimensional estimator zeroes the second coordinate of both.
  Eigen::VectorXd y, d, dc, w, dn, h1, h2, x1, x2;
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  PseudoInverse2<double> pinv{Eigen::Matrix2d::Zero(), 0, 0.0};
  Eigen::Vector2d jump = Eigen::Vector2d::Zero();
  Eigen::Vector2d center = Eigen::Vector2d::Zero();  // E_n{D(t) | Z = 0, 1}

  explicit JumpState(Eigen::Index n)
      : y(n), d(n), dc(n), w(n), dn(n), h1(n), h2(n), x1(n), x2(n) {}
};

template <typename Visitor>
void run_recursion(const Dataset& data, EstimatorKind kind, const FitOptions& options,
                   const CenteredNuisances& nuis, Visitor&& visit) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool robust = kind == EstimatorKind::robust;
  Eigen::VectorXd log_weight = Eigen::VectorXd::Zero(n);
  JumpState s(n);

  for (std::size_t k = 0; k < nuis.times.size(); ++k) {
    const double t = nuis.times[k];
    s.k = k;
    s.t = t;
    s.a.setZero();
    s.v.setZero();
    double magnitude = 0.0;
    double center[2] = {nuis.d_mean(static_cast<Eigen::Index>(k), 0), nuis.d_mean(static_cast<Eigen::Index>(k), 1)};
    for (Eigen::Index i = 0; i < n; ++i) {
      const Subject& subj = data[static_cast<std::size_t>(i)];
      const auto state = risk_event_state(subj, t);
      s.y(i) = state.at_risk;
      s.d(i) = effective_treatment(subj, t);
      s.w(i) = state.at_risk ? std::exp(log_weight(i)) : 0.0;
      s.dn(i) = state.event_here;
    }
    if (options.centering == Centering::weighted_at_risk) {
      double num[2] = {0.0, 0.0}, den[2] = {0.0, 0.0};
      for (Eigen::Index i = 0; i < n; ++i) {
        const int z = data[static_cast<std::size_t>(i)].arm;
        num[z] += s.w(i) * s.d(i);
        den[z] += s.w(i);
      }
      for (int z = 0; z < 2; ++z) center[z] = den[z] > 0.0 ? num[z] / den[z] : 0.0;
    }
    s.center = Eigen::Vector2d(center[0], center[1]);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int arm = data[static_cast<std::size_t>(i)].arm;
      const double zc = nuis.zc(i);
      const double dc = s.d(i) - center[arm];
      s.dc(i) = dc;
      s.h1(i) = zc;
      s.h2(i) = robust ? zc * dc : 0.0;
      s.x1(i) = s.d(i);
      s.x2(i) = robust ? static_cast<double>(arm) : 0.0;
      if (s.y(i) != 0.0) {
        const double wy = s.w(i);
        s.a(0, 0) += s.h1(i) * s.x1(i) * wy;
        s.a(0, 1) += s.h1(i) * s.x2(i) * wy;
        s.a(1, 0) += s.h2(i) * s.x1(i) * wy;
        s.a(1, 1) += s.h2(i) * s.x2(i) * wy;
        magnitude += (std::abs(s.h1(i)) + std::abs(s.h2(i))) * (std::abs(s.x1(i)) + std::abs(s.x2(i))) * wy;
        if (s.dn(i) != 0.0) {
          s.v(0) += s.h1(i) * wy;
          s.v(1) += s.h2(i) * wy;
        }
      }
    }
    s.a *= inv_n;
    s.v *= inv_n;
    if (!s.a.allFinite() || !s.v.allFinite()) throw NumericFailure("non-finite design matrix", k);
    // Entries of A are sums that can cancel exactly; the absolute sum sets
    // the scale below which what is left is rounding error.
    s.pinv = pinv2(s.a, options.pinv_rtol, options.pinv_rtol * magnitude * inv_n);
    s.jump = s.pinv.inverse * s.v;
    if (!s.jump.allFinite()) throw NumericFailure("non-finite jump", k);

    visit(static_cast<const JumpState&>(s));

    for (Eigen::Index i = 0; i < n; ++i)
      if (s.y(i) != 0.0) log_weight(i) += s.x1(i) * s.jump(0) + s.x2(i) * s.jump(1);
  }
}

}  // namespace scsm::detail
