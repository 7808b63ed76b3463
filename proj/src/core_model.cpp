#include "scsm/core_model.hpp"

#include <cmath>
#include <set>

namespace scsm {

TreatmentPath::TreatmentPath(int initial_value, std::vector<Switch> switches)
    : initial_(initial_value), switches_(std::move(switches)) {
  if (initial_ != 0 && initial_ != 1) throw InvalidInput("TreatmentPath: initial value must be 0 or 1");
  int previous = initial_;
  double previous_time = 0.0;
  for (const auto& s : switches_) {
    if (!std::isfinite(s.time) || !(s.time > previous_time))
      throw InvalidInput("TreatmentPath: switch times must be positive and strictly increasing");
    if (s.value != 0 && s.value != 1) throw InvalidInput("TreatmentPath: switch value must be 0 or 1");
    if (s.value == previous) throw InvalidInput("TreatmentPath: redundant switch to the value already in force");
    previous = s.value;
    previous_time = s.time;
  }
}

int TreatmentPath::value_at(double t) const noexcept {
  auto it = std::upper_bound(switches_.begin(), switches_.end(), t,
                             [](double v, const Switch& s) { return v < s.time; });
  return it == switches_.begin() ? initial_ : std::prev(it)->value;
}

int TreatmentPath::value_before(double t) const noexcept {
  auto it = std::lower_bound(switches_.begin(), switches_.end(), t,
                             [](const Switch& s, double v) { return s.time < v; });
  return it == switches_.begin() ? initial_ : std::prev(it)->value;
}

void validate_subject(const Subject& s) {
  if (!std::isfinite(s.followup) || !(s.followup > 0.0))
    throw InvalidInput("subject " + s.id + ": follow-up must be finite and positive");
  if (s.event != 0 && s.event != 1) throw InvalidInput("subject " + s.id + ": event must be 0 or 1");
  if (s.arm != 0 && s.arm != 1) throw InvalidInput("subject " + s.id + ": arm must be 0 or 1");
}

Dataset::Dataset(std::vector<Subject> subjects, double tau) : subjects_(std::move(subjects)), tau_(tau) {
  if (subjects_.size() < 2) throw InvalidInput("Dataset: at least two subjects required");
  bool arm0 = false, arm1 = false;
  double max_followup = 0.0;
  for (const auto& s : subjects_) {
    validate_subject(s);
    (s.arm == 1 ? arm1 : arm0) = true;
    max_followup = std::max(max_followup, s.followup);
  }
  if (!arm0 || !arm1) throw IdentificationError("Dataset: both randomized arms must be present");
  if (!std::isfinite(tau_)) throw InvalidInput("Dataset: tau must be finite");
  if (tau_ <= 0.0) tau_ = max_followup;
}

std::vector<double> Dataset::event_times() const {
  std::vector<double> times;
  times.reserve(subjects_.size());
  for (const auto& s : subjects_)
    if (s.event == 1 && s.followup <= tau_) times.push_back(s.followup);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

}  // namespace scsm
