#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "scsm/simulation.hpp"

using namespace scsm;

TEST_SUITE("simulation") {
  TEST_CASE("switching time examples") {
    DgmConfig cfg;
    CHECK(switch_time_for_uniform(1.0, 1, 1.5, cfg) == 0.0);
    const double s3 = switch_survival_raw(3.0, 1, 1.5, Variant::paper);
    CHECK(s3 == doctest::Approx(std::exp(-1.5) + (1 - std::exp(-0.15)) + (1 - std::exp(-0.6))));
    CHECK(s3 == doctest::Approx(0.8136).epsilon(1e-3));
    CHECK(switch_time_for_uniform(0.82, 1, 1.5, cfg) <= 3.0);
    // control-arm switching occurs
    CHECK(std::isfinite(switch_time_for_uniform(0.05, 0, 20.0, cfg)));
    // switch times are grid-aligned
    const double w = switch_time_for_uniform(0.5, 0, 1.5, cfg);
    CHECK(std::abs(w / 0.1 - std::round(w / 0.1)) < 1e-9);
  }

  TEST_CASE("repaired switching survival is a survival function") {
    for (auto v : {Variant::paper, Variant::valid, Variant::null}) {
      DgmConfig cfg;
      cfg.variant = v;
      for (int z = 0; z < 2; ++z) {
        for (double u1 : {-1.0, 0.0, 0.8, 1.5, 2.2, 5.0}) {
          const auto s = switch_survival_grid(z, u1, cfg);
          CHECK(s.front() == 1.0);
          for (std::size_t j = 0; j < s.size(); ++j) {
            CHECK(s[j] >= 0.0);
            CHECK(s[j] <= 1.0);
            if (j > 0) CHECK(s[j] <= s[j - 1]);
          }
        }
      }
    }
  }

  TEST_CASE("event time inversion") {
    const HazardCoefficients coef;
    CHECK(event_time_for_exposure(0.625, TreatmentPath(1), 1, 1.5, coef) == doctest::Approx(1.0));
    CHECK(event_time_for_exposure(std::log(2.0), TreatmentPath(0), 0, 0.0, coef) ==
          doctest::Approx(6.931).epsilon(1e-3));
    // piecewise: hazard 0.1 until 1, then 0.3
    const double t = event_time_for_exposure(0.1 + 0.3 * 0.5, TreatmentPath(0, {{1.0, 1}}), 0, 0.0, coef);
    CHECK(t == doctest::Approx(1.5));
    // negative frailty is clamped at a tiny positive hazard
    CHECK(std::isfinite(event_time_for_exposure(1e-7, TreatmentPath(0), 0, -10.0, coef)));
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) CHECK(sample_event_time(rng, TreatmentPath(1), 1, 1.5, coef) > 0.0);
  }

  TEST_CASE("latent covariance") {
    Rng rng(1);
    const int n = 1000000;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d m2 = Eigen::Matrix2d::Zero();
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector2d u = sample_latent(rng);
      mean += u;
      m2 += u * u.transpose();
    }
    mean /= n;
    const Eigen::Matrix2d cov = m2 / n - mean * mean.transpose();
    CHECK((cov - latent_covariance()).cwiseAbs().maxCoeff() < 0.01);
    CHECK((mean - latent_mean()).cwiseAbs().maxCoeff() < 0.01);
  }

  TEST_CASE("valid switching is additive in arm and latent factor") {
    // E{D(t) | Z, U1} = a(t; U1) + f(Z, t): the arm difference must not vary
    // with U1.
    DgmConfig cfg;
    cfg.variant = Variant::valid;
    Rng rng(2);
    const int n = 200000;
    std::vector<std::pair<double, double>> u_w[2];
    for (int i = 0; i < n; ++i) {
      const double u1 = sample_latent(rng)(0);
      const int z = i % 2;
      u_w[z].push_back({u1, sample_switch_time(rng, z, u1, cfg)});
    }
    for (double t : {1.0, 2.0}) {
      double diff_min = 1e9, diff_max = -1e9;
      for (int dec = 0; dec < 10; ++dec) {
        double mean[2];
        for (int z = 0; z < 2; ++z) {
          auto v = u_w[z];
          std::sort(v.begin(), v.end());
          const std::size_t lo = v.size() * static_cast<std::size_t>(dec) / 10;
          const std::size_t hi = v.size() * static_cast<std::size_t>(dec + 1) / 10;
          double s = 0;
          for (std::size_t j = lo; j < hi; ++j) s += v[j].second > t ? z : 1 - z;
          mean[z] = s / static_cast<double>(hi - lo);
        }
        diff_min = std::min(diff_min, mean[1] - mean[0]);
        diff_max = std::max(diff_max, mean[1] - mean[0]);
      }
      CHECK(diff_max - diff_min < 0.03);
    }
  }

  TEST_CASE("trials are reproducible and independent of the worker count") {
    DgmConfig cfg;
    cfg.n = 500;
    cfg.seed = 17;
    cfg.variant = Variant::valid;
    cfg.lambda_c = 0.1;
    setenv("SCSM_THREADS", "1", 1);
    const auto a = simulate_trial(cfg);
    setenv("SCSM_THREADS", "4", 1);
    const auto b = simulate_trial(cfg);
    unsetenv("SCSM_THREADS");
    CHECK(a.data == b.data);
    cfg.seed = 18;
    CHECK_FALSE(simulate_trial(cfg).data == a.data);
    CHECK(a.truth.b_d(2.0) == doctest::Approx(0.4));
    CHECK(a.truth.b_z(2.0) == doctest::Approx(0.2));
  }

  TEST_CASE("null variant has no effects") {
    DgmConfig cfg;
    cfg.variant = Variant::null;
    CHECK(cfg.slope_d() == 0.0);
    CHECK(cfg.slope_z() == 0.0);
    const auto c = HazardCoefficients::for_variant(Variant::null);
    CHECK(c.treatment == 0.0);
    CHECK(c.arm == 0.0);
    CHECK(c.baseline == 0.1);
    CHECK(c.frailty == 0.15);
  }

  TEST_CASE("censoring calibration") {
    DgmConfig cfg;
    cfg.variant = Variant::valid;
    cfg.censor_rate_target = 0.0;
    cfg.tau_admin = std::numeric_limits<double>::infinity();
    CHECK(calibrate_censoring(cfg, 10000, 1).lambda_c == 0.0);

    cfg.tau_admin = 50.0;
    double previous = 0.0;
    for (double target : {0.2, 0.35, 0.5}) {
      cfg.censor_rate_target = target;
      const auto cal = calibrate_censoring(cfg, 10000, 1);
      CHECK(cal.lambda_c > previous);
      CHECK(std::abs(cal.achieved_rate - target) <= 0.005);
      previous = cal.lambda_c;
    }

    // Administrative censoring at 3 alone already exceeds 18% here.
    cfg.tau_admin = 3.0;
    cfg.censor_rate_target = 0.18;
    const auto cal = calibrate_censoring(cfg, 10000, 1);
    CHECK(cal.lambda_c == 0.0);
    CHECK_FALSE(cal.warnings.empty());
    CHECK_THROWS_AS(calibrate_censoring(cfg, 9999, 1), InvalidInput);
  }

  TEST_CASE("config validation and variant names") {
    DgmConfig cfg;
    cfg.n = 1;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
    cfg.n = 10;
    cfg.censor_rate_target = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
    CHECK(parse_variant("valid") == Variant::valid);
    CHECK_THROWS_AS(parse_variant("other"), InvalidInput);
  }
}
