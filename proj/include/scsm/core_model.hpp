#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scsm/error.hpp"

namespace scsm {

// Binary treatment trajectory that changes value only at recorded switch
// times. Lookups are right-continuous: at a switch time the new value is in
// force.
class TreatmentPath {
 public:
  struct Switch {
    double time;
    int value;
    bool operator==(const Switch&) const = default;
  };

  TreatmentPath() = default;
  explicit TreatmentPath(int initial_value, std::vector<Switch> switches = {});

  int initial_value() const noexcept { return initial_; }
  const std::vector<Switch>& switches() const noexcept { return switches_; }

  // Value in force at time t (right-continuous).
  int value_at(double t) const noexcept;
  // Value in force just before t (left limit); equals initial_value at t <= 0.
  int value_before(double t) const noexcept;

  bool operator==(const TreatmentPath&) const = default;

 private:
  int initial_ = 0;
  std::vector<Switch> switches_;
};

struct Subject {
  std::string id;
  double followup = 0.0;  // X = min(T, C)
  int event = 0;          // Delta
  int arm = 0;            // randomized assignment Z
  TreatmentPath path;

  bool operator==(const Subject&) const = default;
};

// Throws InvalidInput when a subject's fields are out of range.
void validate_subject(const Subject& subject);

class Dataset {
 public:
  // tau <= 0 selects the maximum observed follow-up.
  explicit Dataset(std::vector<Subject> subjects, double tau = 0.0);

  const std::vector<Subject>& subjects() const noexcept { return subjects_; }
  std::size_t size() const noexcept { return subjects_.size(); }
  const Subject& operator[](std::size_t i) const { return subjects_[i]; }
  double tau() const noexcept { return tau_; }

  // Distinct event times (event == 1) in (0, tau], ascending.
  std::vector<double> event_times() const;

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<Subject> subjects_;
  double tau_ = 0.0;
};

// Treatment in force at t, with the convention that it is zero after the
// subject's follow-up ends.
inline int effective_treatment(const Subject& subject, double t) noexcept {
  if (t > subject.followup) return 0;
  return subject.path.value_at(t);
}

struct RiskEventState {
  int at_risk;
  int event_here;
  bool operator==(const RiskEventState&) const = default;
};

inline RiskEventState risk_event_state(const Subject& subject, double t) noexcept {
  const int at_risk = subject.followup >= t ? 1 : 0;
  const int event_here = (subject.followup == t && subject.event == 1) ? 1 : 0;
  return {at_risk, event_here};
}

// Pure-jump step function t -> (B_D(t), B_Z(t)) with B(0) = 0. In the
// one-dimensional case the second coordinate is identically zero.
template <typename Scalar>
class CumulativeEffect {
 public:
  using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
  using Increments = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

  CumulativeEffect() : increments_(0, 2) {}

  CumulativeEffect(std::vector<double> jump_times, Increments increments, int dimension = 2)
      : jump_times_(std::move(jump_times)), increments_(std::move(increments)), dimension_(dimension) {
    if (dimension_ != 1 && dimension_ != 2) throw InvalidInput("CumulativeEffect: dimension must be 1 or 2");
    if (increments_.rows() != static_cast<Eigen::Index>(jump_times_.size()))
      throw InvalidInput("CumulativeEffect: one increment row per jump time required");
    for (std::size_t k = 0; k < jump_times_.size(); ++k) {
      if (!(jump_times_[k] > 0.0)) throw InvalidInput("CumulativeEffect: jump times must be positive");
      if (k > 0 && !(jump_times_[k] > jump_times_[k - 1]))
        throw InvalidInput("CumulativeEffect: jump times must be strictly increasing");
    }
    if (dimension_ == 1) increments_.col(1).setZero();
  }

  int dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return jump_times_.size(); }
  bool empty() const noexcept { return jump_times_.empty(); }
  const std::vector<double>& jump_times() const noexcept { return jump_times_; }
  const Increments& increments() const noexcept { return increments_; }

  // Number of jumps at or before t.
  std::size_t count_through(double t) const noexcept {
    return static_cast<std::size_t>(std::upper_bound(jump_times_.begin(), jump_times_.end(), t) -
                                    jump_times_.begin());
  }

  Vector2 evaluate(double t) const {
    Vector2 b = Vector2::Zero();
    const auto m = static_cast<Eigen::Index>(count_through(t));
    for (Eigen::Index k = 0; k < m; ++k) b += increments_.row(k).transpose();
    return b;
  }

  // Running sums B(t_k) at each jump time.
  Increments cumulative() const {
    Increments out(increments_.rows(), 2);
    Vector2 b = Vector2::Zero();
    for (Eigen::Index k = 0; k < increments_.rows(); ++k) {
      b += increments_.row(k).transpose();
      out.row(k) = b.transpose();
    }
    return out;
  }

 private:
  std::vector<double> jump_times_;
  Increments increments_;
  int dimension_ = 2;
};

using CumulativeEffectd = CumulativeEffect<double>;

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> evaluate_step(const CumulativeEffect<Scalar>& curve, double t) {
  return curve.evaluate(t);
}

}  // namespace scsm
