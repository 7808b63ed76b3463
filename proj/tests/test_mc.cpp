#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "scsm/mc_harness.hpp"

using namespace scsm;

namespace {

StudyConfig small_study(std::size_t reps) {
  StudyConfig c;
  c.dgm.n = 200;
  c.dgm.variant = Variant::valid;
  c.dgm.lambda_c = 0.1;
  c.reps = reps;
  c.seed = 5;
  return c;
}

std::size_t count_lines(const std::string& s, const std::string& prefix) {
  std::size_t n = 0, pos = 0;
  while (pos < s.size()) {
    const auto end = s.find('\n', pos);
    if (s.compare(pos, prefix.size(), prefix) == 0) ++n;
    pos = end == std::string::npos ? s.size() : end + 1;
  }
  return n;
}

}  // namespace

TEST_SUITE("mc") {
  TEST_CASE("two-replicate smoke run") {
    const auto r = run_study(small_study(2));
    REQUIRE(r.estimators.size() == 2);
    for (const auto& es : r.estimators) {
      CHECK(es.successes + es.failures == 2);
      for (const auto& t : es.targets) {
        CHECK(std::isfinite(t.bias));
        CHECK(std::isfinite(t.see));
        CHECK(t.see >= 0.0);
        CHECK(t.sd >= 0.0);
        CHECK(t.cp >= 0.0);
        CHECK(t.cp <= 1.0);
      }
    }
    CHECK(r.estimator(EstimatorKind::robust).targets.size() == 8);
    CHECK(r.estimator(EstimatorKind::ytt).targets.size() == 4);
    CHECK(r.estimator(EstimatorKind::robust).target("beta_D").truth == doctest::Approx(0.2));
    CHECK(r.estimator(EstimatorKind::robust).target("B_Z(3)").truth == doctest::Approx(0.3));
  }

  TEST_CASE("substream discipline and worker invariance") {
    setenv("SCSM_THREADS", "1", 1);
    const auto three = run_study(small_study(3));
    setenv("SCSM_THREADS", "3", 1);
    const auto two = run_study(small_study(2));
    const auto three_again = run_study(small_study(3));
    unsetenv("SCSM_THREADS");
    for (std::size_t e = 0; e < 2; ++e) {
      for (std::size_t r = 0; r < 2; ++r) {
        CHECK(two.estimators[e].replicates[r].estimate == three.estimators[e].replicates[r].estimate);
        CHECK(two.estimators[e].replicates[r].se == three.estimators[e].replicates[r].se);
      }
    }
    CHECK(report_csv(report_rows(three)) == report_csv(report_rows(three_again)));
  }

  TEST_CASE("SEE does not depend on the SE method") {
    auto c = small_study(2);
    c.estimators = {EstimatorKind::robust};
    const auto infl = run_study(c);
    c.se_method = SeMethod::bootstrap;
    c.boot_B = 100;
    const auto boot = run_study(c);
    for (std::size_t j = 0; j < infl.estimators[0].targets.size(); ++j)
      CHECK(infl.estimators[0].targets[j].see == boot.estimators[0].targets[j].see);
  }

  TEST_CASE("CSV round trip and table layout") {
    const auto r = run_study(small_study(2));
    const auto rows = report_rows(r);
    const auto parsed = parse_report_csv("# comment\n" + report_csv(rows));
    REQUIRE(parsed.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(parsed[i].estimator == rows[i].estimator);
      CHECK(parsed[i].target == rows[i].target);
      CHECK(std::abs(parsed[i].bias - rows[i].bias) <= 1e-12);
      CHECK(std::abs(parsed[i].see - rows[i].see) <= 1e-12);
      CHECK(std::abs(parsed[i].sd - rows[i].sd) <= 1e-12);
      CHECK(std::abs(parsed[i].cp - rows[i].cp) <= 1e-12);
      CHECK(parsed[i].n == 200);
      CHECK(parsed[i].R == 2);
      CHECK(parsed[i].seed == 5);
    }
    const auto md = report_markdown(r);
    CHECK(count_lines(md, "| robust |") + count_lines(md, "| ytt |") == 4 * r.estimators.size());

    StudyReport empty;
    const auto md_empty = report_markdown(empty);
    CHECK(count_lines(md_empty, "|") == 2);
    CHECK(parse_report_csv(report_csv(report_rows(empty))).empty());
    CHECK_THROWS_AS(parse_report_csv("nonsense\n"), DataError);
  }

  TEST_CASE("failed replicates are excluded and flagged") {
    // Five subjects: a replicate frequently has no events or one arm only.
    auto c = small_study(20);
    c.dgm.n = 5;
    c.dgm.lambda_c = 3.0;
    c.estimators = {EstimatorKind::ytt};
    const auto r = run_study(c);
    const auto& es = r.estimators[0];
    CHECK(es.successes + es.failures == 20);
    REQUIRE(es.failures > 0);
    CHECK(std::any_of(r.warnings.begin(), r.warnings.end(),
                      [](const std::string& w) { return w.find("WARNING") != std::string::npos; }));
    CHECK(es.targets[0].n == es.successes);
  }

  TEST_CASE("study validation") {
    auto c = small_study(1);
    CHECK_THROWS_AS(run_study(c), InvalidInput);
    c = small_study(2);
    c.mult_G = 10;
    CHECK_THROWS_AS(run_study(c), InvalidInput);
    CHECK(target_time("B_D(2)") == 2.0);
    CHECK(target_time("beta_Z") == 0.0);
  }
}
