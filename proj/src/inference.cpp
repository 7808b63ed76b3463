#include "scsm/inference.hpp"

#include <algorithm>
#include <cmath>


#include "recursion.hpp"
#include "scsm/error.hpp"
#include "scsm/parallel.hpp"
#include "scsm/rng.hpp"

namespace scsm {

namespace {

constexpr std::uint64_t kBootstrapSalt = 11;
constexpr std::uint64_t kMultiplierSalt = 12;
constexpr Eigen::Index kMultiplierBlock = 64;

struct SwitchMark {
  double time;
  double delta;         // new value - old value
  Eigen::Index before;  // number of event times strictly before the switch
};

}  // namespace

const char* to_string(SeMethod m) noexcept { return m == SeMethod::bootstrap ? "bootstrap" : "influence"; }

SeMethod parse_se_method(const std::string& name) {
  if (name == "bootstrap") return SeMethod::bootstrap;
  if (name == "influence") return SeMethod::influence;
  throw InvalidInput("unknown SE method '" + name + "' (expected bootstrap or influence)");
}

// Linearization of the forward recursion. With U_k the jump-k estimating
// function and A_k its design matrix, the influence of subject i on the k-th
// jump solves
//   phi_i(k) = A_k^+ [ own_i(k) + sum_{j<k} dU_k/dB_j phi_i(j) ],
// where own_i collects the subject's residual term and its effect through
// E_n(Z) and E_n{D|Z}. dU_k/dB_j = (1/n) sum_l kappa_l(k) x_l(t_j)^T because
// the survivor weights (and the weighted centering) are exponentials of
// x^T B accumulated over earlier jumps. The sum over j is carried out by
// integration by parts against each subject's treatment path, so only the
// running curves eps(k-1) and their values just before switch times are
// needed.
InfluenceCurves influence_curves(const Dataset& data, const FitResult& fit, const InfluenceOptions& options) {
  const auto times = data.event_times();
  if (times != fit.curve.jump_times()) throw InvalidInput("influence_curves: fit does not match the dataset");
  const auto nuis = center_nuisances(data, times, fit.options.centering);
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto K = static_cast<Eigen::Index>(times.size());
  const double nd = static_cast<double>(n);
  const double inv_n = 1.0 / nd;
  const bool robust = fit.kind == EstimatorKind::robust;
  const Centering centering = fit.options.centering;

  InfluenceCurves out;
  out.grid = times;
  out.eps_d.setZero(n, K);
  out.eps_z.setZero(n, K);
  out.eps_beta_d.setZero(n);
  out.eps_beta_z.setZero(n);

  std::vector<std::vector<SwitchMark>> marks(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& path = data[static_cast<std::size_t>(i)].path;
    int prev = path.initial_value();
    for (const auto& sw : path.switches()) {
      const auto before = static_cast<Eigen::Index>(std::lower_bound(times.begin(), times.end(), sw.time) - times.begin());
      marks[static_cast<std::size_t>(i)].push_back({sw.time, static_cast<double>(sw.value - prev), before});
      prev = sw.value;
    }
  }

  Eigen::VectorXd zdev(n);
  for (Eigen::Index i = 0; i < n; ++i) zdev(i) = data[static_cast<std::size_t>(i)].arm - nuis.z_mean;

  Eigen::VectorXd r(n), rho(n), own1(n), own2(n), kj1(n), kj2(n), pre1(n), pre2(n), d_before(n);
  std::vector<Eigen::Vector2d> group(static_cast<std::size_t>(K) + 1, Eigen::Vector2d::Zero());
  std::vector<Eigen::Index> touched;
  const double tol = 1e-9;

  detail::run_recursion(data, fit.kind, fit.options, nuis, [&](const detail::JumpState& s) {
    const auto k = static_cast<Eigen::Index>(s.k);
    const Eigen::Vector2d fitted = fit.curve.increments().row(k).transpose();
    if ((fitted - s.jump).cwiseAbs().maxCoeff() > tol * (1.0 + fitted.cwiseAbs().maxCoeff()))
      throw InvalidInput("influence_curves: fit was produced with different data or options");

    // Residuals and per-subject estimating-function terms.
    for (Eigen::Index i = 0; i < n; ++i) r(i) = s.dn(i) - s.y(i) * (s.x1(i) * s.jump(0) + s.x2(i) * s.jump(1));
    const Eigen::ArrayXd wr = s.w.array() * r.array();
    const Eigen::ArrayXd psi1 = s.h1.array() * wr;
    const Eigen::ArrayXd psi2 = s.h2.array() * wr;

    // Sensitivity of U_k to the centering constants.
    Eigen::Vector2d g_mu = Eigen::Vector2d::Zero();
    double g_c[2] = {0.0, 0.0};  // second coordinate only; first is zero
    double denom[2] = {0.0, 0.0};
    for (Eigen::Index i = 0; i < n; ++i) {
      const int z = data[static_cast<std::size_t>(i)].arm;
      g_mu(0) -= wr(i);
      if (robust) {
        g_mu(1) -= s.dc(i) * wr(i);
        g_c[z] -= nuis.zc(i) * wr(i);
      }
      switch (centering) {
        case Centering::weighted_at_risk: denom[z] += s.w(i); break;
        case Centering::at_risk: denom[z] += s.y(i); break;
        case Centering::all_subjects: denom[z] += 1.0; break;
      }
    }
    g_mu *= inv_n;
    g_c[0] *= inv_n;
    g_c[1] *= inv_n;

    // rho_i: n times the influence of subject i on its own arm's centering.
    for (Eigen::Index i = 0; i < n; ++i) {
      const int z = data[static_cast<std::size_t>(i)].arm;
      const double dev = s.d(i) - s.center(z);
      double m = 0.0;
      switch (centering) {
        case Centering::weighted_at_risk: m = s.w(i); break;
        case Centering::at_risk: m = s.y(i); break;
        case Centering::all_subjects: m = 1.0; break;
      }
      rho(i) = denom[z] > 0.0 ? nd * m * dev / denom[z] : 0.0;
    }

    for (Eigen::Index i = 0; i < n; ++i) {
      const int z = data[static_cast<std::size_t>(i)].arm;
      own1(i) = psi1(i);
      own2(i) = psi2(i);
      kj1(i) = psi1(i);
      kj2(i) = psi2(i);
      if (options.include_nuisance) {
        own1(i) += g_mu(0) * zdev(i);
        own2(i) += g_mu(1) * zdev(i) + g_c[z] * rho(i);
      }
      if (centering == Centering::weighted_at_risk) kj2(i) += g_c[z] * rho(i);
      d_before(i) = s.y(i) != 0.0 ? data[static_cast<std::size_t>(i)].path.value_before(s.t) : 0.0;
    }

    // dU_k/dB_j contracted with eps(k-1), integrated by parts over the paths.
    pre1 = own1;
    pre2 = own2;
    if (k > 0) {
      Eigen::Vector2d a_d(inv_n * kj1.dot(d_before), inv_n * kj2.dot(d_before));
      Eigen::Vector2d a_z(inv_n * kj1.dot(s.x2), inv_n * kj2.dot(s.x2));
      const auto prev_d = out.eps_d.col(k - 1);
      const auto prev_z = out.eps_z.col(k - 1);
      pre1 += a_d(0) * prev_d + a_z(0) * prev_z;
      pre2 += a_d(1) * prev_d + a_z(1) * prev_z;

      touched.clear();
      for (Eigen::Index l = 0; l < n; ++l) {
        if (s.y(l) == 0.0) continue;
        for (const auto& m : marks[static_cast<std::size_t>(l)]) {
          if (!(m.time < s.t)) break;
          if (m.before == 0) continue;
          auto& q = group[static_cast<std::size_t>(m.before)];
          if (q.isZero(0.0)) touched.push_back(m.before);
          q(0) += inv_n * kj1(l) * m.delta;
          q(1) += inv_n * kj2(l) * m.delta;
        }
      }
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      for (const auto p : touched) {
        auto& q = group[static_cast<std::size_t>(p)];
        const auto col = out.eps_d.col(p - 1);
        pre1 -= q(0) * col;
        pre2 -= q(1) * col;
        q.setZero();
      }
    }

    const Eigen::Matrix2d& ai = s.pinv.inverse;
    const Eigen::VectorXd phi_d = ai(0, 0) * pre1 + ai(0, 1) * pre2;
    const Eigen::VectorXd phi_z = ai(1, 0) * pre1 + ai(1, 1) * pre2;
    if (!phi_d.allFinite() || !phi_z.allFinite())
      throw NumericFailure("non-finite influence curve", s.k);

    if (k > 0) {
      out.eps_d.col(k) = out.eps_d.col(k - 1) + phi_d;
      out.eps_z.col(k) = out.eps_z.col(k - 1) + phi_z;
    } else {
      out.eps_d.col(k) = phi_d;
      out.eps_z.col(k) = phi_z;
    }
    const double wk = fit.weights[s.k];
    out.eps_beta_d += wk * phi_d;
    out.eps_beta_z += wk * phi_z;
  });
  return out;
}

StandardErrors se_influence(const InfluenceCurves& curves) {
  const auto K = static_cast<Eigen::Index>(curves.jumps());
  const double n = static_cast<double>(curves.subjects());
  StandardErrors se;
  se.method = SeMethod::influence;
  se.curve.setZero(K, 2);
  if (n == 0.0) return se;
  se.curve.col(0) = curves.eps_d.colwise().squaredNorm().transpose().cwiseSqrt() / n;
  se.curve.col(1) = curves.eps_z.colwise().squaredNorm().transpose().cwiseSqrt() / n;
  se.beta = Eigen::Vector2d(curves.eps_beta_d.norm(), curves.eps_beta_z.norm()) / n;
  return se;
}

StandardErrors se_bootstrap(const Dataset& data, EstimatorKind kind, const FitOptions& options, std::size_t B,
                            std::uint64_t seed) {
  if (B < 100) throw InvalidInput("se_bootstrap: at least 100 replicates required");
  const auto base = fit(data, kind, options);
  const auto& grid = base.curve.jump_times();
  const auto K = static_cast<Eigen::Index>(grid.size());
  const std::size_t n = data.size();

  std::vector<Eigen::MatrixX2d> curve(B);
  std::vector<Eigen::Vector2d> beta(B);
  std::vector<std::size_t> redraws(B, 0);
  std::vector<char> failed(B, 0);

  parallel_for(B, [&](std::size_t b) {
    Rng rng = substream(seed, b, kBootstrapSalt);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<Subject> sample(n);
    for (;;) {
      bool arm[2] = {false, false};
      for (std::size_t i = 0; i < n; ++i) {
        sample[i] = data[pick(rng)];
        arm[sample[i].arm] = true;
      }
      if (arm[0] && arm[1]) break;
      ++redraws[b];
    }
    try {
      const auto rep = fit(Dataset(std::move(sample), data.tau()), kind, options);
      const auto cum = rep.curve.cumulative();
      Eigen::MatrixX2d on_grid = Eigen::MatrixX2d::Zero(K, 2);
      std::size_t j = 0;
      for (Eigen::Index k = 0; k < K; ++k) {
        while (j < rep.curve.size() && rep.curve.jump_times()[j] <= grid[static_cast<std::size_t>(k)]) ++j;
        if (j > 0) on_grid.row(k) = cum.row(static_cast<Eigen::Index>(j) - 1);
      }
      curve[b] = std::move(on_grid);
      beta[b] = rep.beta;
    } catch (const NumericFailure&) {
      failed[b] = 1;
    }
  });

  StandardErrors se;
  se.method = SeMethod::bootstrap;
  se.curve.setZero(K, 2);
  std::size_t ok = 0;
  Eigen::MatrixX2d mean = Eigen::MatrixX2d::Zero(K, 2);
  Eigen::Vector2d beta_mean = Eigen::Vector2d::Zero();
  for (std::size_t b = 0; b < B; ++b) {
    se.redraws += redraws[b];
    if (failed[b]) continue;
    ++ok;
    mean += curve[b];
    beta_mean += beta[b];
  }
  se.replicates = ok;
  if (ok < 2) throw NumericFailure("se_bootstrap: fewer than two successful replicates", 0);
  mean /= static_cast<double>(ok);
  beta_mean /= static_cast<double>(ok);
  Eigen::MatrixX2d ss = Eigen::MatrixX2d::Zero(K, 2);
  Eigen::Vector2d beta_ss = Eigen::Vector2d::Zero();
  for (std::size_t b = 0; b < B; ++b) {
    if (failed[b]) continue;
    ss += (curve[b] - mean).cwiseAbs2();
    beta_ss += (beta[b] - beta_mean).cwiseAbs2();
  }
  se.curve = (ss / static_cast<double>(ok - 1)).cwiseSqrt();
  se.beta = (beta_ss / static_cast<double>(ok - 1)).cwiseSqrt();

  if (ok < B)
    se.warnings.push_back(std::to_string(B - ok) + " bootstrap replicates failed numerically and were excluded");
  if (static_cast<double>(se.redraws) > 0.1 * static_cast<double>(B))
    se.warnings.push_back(std::to_string(se.redraws) + " bootstrap samples redrawn because one arm was empty");
  return se;
}

MultiplierTests multiplier_tests(const InfluenceCurves& curves, const FitResult& fit, std::size_t G,
                                 std::uint64_t seed) {
  if (G < 1000) throw InvalidInput("multiplier_tests: at least 1000 multiplier replicates required");
  MultiplierTests out;
  out.replicates = G;
  const auto K = static_cast<Eigen::Index>(curves.jumps());
  const auto n = static_cast<Eigen::Index>(curves.subjects());
  if (K == 0) {
    out.warnings.emplace_back("no jumps: tests are uninformative, p-values set to 1");
    return out;
  }
  if (curves.grid != fit.curve.jump_times()) throw InvalidInput("multiplier_tests: curves do not match the fit");

  const double root_n = std::sqrt(static_cast<double>(n));
  const Eigen::MatrixX2d cum = fit.curve.cumulative();
  const Eigen::Map<const Eigen::VectorXd> grid(curves.grid.data(), K);
  out.stat_null_d = root_n * cum.col(0).cwiseAbs().maxCoeff();
  out.stat_null_z = root_n * cum.col(1).cwiseAbs().maxCoeff();
  out.stat_gof = root_n * (cum.col(0) - fit.beta(0) * grid).cwiseAbs().maxCoeff();

  const auto blocks = static_cast<std::size_t>((static_cast<Eigen::Index>(G) + kMultiplierBlock - 1) / kMultiplierBlock);
  std::vector<std::size_t> exceed_d(blocks, 0), exceed_z(blocks, 0), exceed_gof(blocks, 0);
  parallel_for(blocks, [&](std::size_t blk) {
    const Eigen::Index first = static_cast<Eigen::Index>(blk) * kMultiplierBlock;
    const Eigen::Index rows = std::min<Eigen::Index>(kMultiplierBlock, static_cast<Eigen::Index>(G) - first);
    Eigen::MatrixXd xi(rows, n);
    for (Eigen::Index b = 0; b < rows; ++b) {
      Rng rng = substream(seed, static_cast<std::uint64_t>(first + b), kMultiplierSalt);
      std::normal_distribution<double> normal;
      for (Eigen::Index i = 0; i < n; ++i) xi(b, i) = normal(rng);
    }
    xi /= root_n;
    const Eigen::MatrixXd gd = xi * curves.eps_d;
    const Eigen::MatrixXd gz = xi * curves.eps_z;
    const Eigen::VectorXd gbeta = xi * curves.eps_beta_d;
    for (Eigen::Index b = 0; b < rows; ++b) {
      const double sd = gd.row(b).cwiseAbs().maxCoeff();
      const double sz = gz.row(b).cwiseAbs().maxCoeff();
      const double sg = (gd.row(b).transpose() - gbeta(b) * grid).cwiseAbs().maxCoeff();
      exceed_d[blk] += sd >= out.stat_null_d ? 1 : 0;
      exceed_z[blk] += sz >= out.stat_null_z ? 1 : 0;
      exceed_gof[blk] += sg >= out.stat_gof ? 1 : 0;
    }
  });

  std::size_t ed = 0, ez = 0, eg = 0;
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    ed += exceed_d[blk];
    ez += exceed_z[blk];
    eg += exceed_gof[blk];
  }
  const double denom = static_cast<double>(G) + 1.0;
  out.p_null_d = (1.0 + static_cast<double>(ed)) / denom;
  out.p_null_z = (1.0 + static_cast<double>(ez)) / denom;
  out.p_gof = (1.0 + static_cast<double>(eg)) / denom;
  return out;
}

double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidInput("confidence level must lie in (0, 1)");
  // Solve erfc(x / sqrt 2) = 1 - level by bisection; the upper tail
  // probability is monotone in x, so this converges to the last bit.
  const double tail = 1.0 - level;
  double lo = 0.0, hi = 40.0;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (std::erfc(mid / std::sqrt(2.0)) > tail ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Bands pointwise_bands(const FitResult& fit, const Eigen::MatrixX2d& se, double level) {
  const double z = normal_critical_value(level);
  if (se.rows() != static_cast<Eigen::Index>(fit.curve.size()))
    throw InvalidInput("pointwise_bands: one SE row per jump required");
  const Eigen::MatrixX2d est = fit.curve.cumulative();
  return {est - z * se, est + z * se, level};
}

}  // namespace scsm
