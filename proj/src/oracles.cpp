#include "mobpart/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace mobpart::oracle {

double loglik_gaussian_log(double y, double offset_log, double x, const Eigen::VectorXd& theta) {
  const double mu = std::exp(offset_log + theta(0) + theta(1) * x);
  const double s2 = theta(2);
  return -0.5 * std::log(2.0 * std::numbers::pi * s2) - (y - mu) * (y - mu) / (2.0 * s2);
}

double loglik_linear(double y, double x, const Eigen::VectorXd& s, const Eigen::VectorXd& theta) {
  const Eigen::Index k = s.size();
  const double mu = theta(0) + theta(1) * x + (k ? theta.segment(2, k).dot(s) : 0.0);
  const double s2 = theta(2 + k);
  return -0.5 * std::log(2.0 * std::numbers::pi * s2) - (y - mu) * (y - mu) / (2.0 * s2);
}

double loglik_polr(int category, double x, const Eigen::VectorXd& theta) {
  const auto k = static_cast<int>(theta.size()) - 1;
  const double beta = theta(k);
  auto cdf = [&](int r) {
    if (r < 0) return 0.0;
    if (r >= k) return 1.0;
    return 1.0 / (1.0 + std::exp(-(theta(r) - beta * x)));
  };
  return std::log(cdf(category) - cdf(category - 1));
}

double loglik_weibull(double t, double event, double x, const Eigen::VectorXd& theta) {
  const double z = (std::log(t) - theta(0) - theta(1) * x) / theta(2);
  // density of log T is exp(z - e^z) / alpha2; survivor is exp(-e^z); T's
  // density adds the Jacobian 1/t.
  return event * (z - std::log(theta(2)) - std::log(t)) - std::exp(z);
}

Eigen::MatrixXd linear_scores(std::span<const double> y, std::span<const double> x, const Eigen::MatrixXd& s) {
  const auto n = static_cast<Eigen::Index>(y.size());
  const Eigen::Index p = 2 + s.cols();
  Eigen::MatrixXd design(n, p);
  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = x[static_cast<std::size_t>(i)];
    if (s.cols()) design.row(i).tail(s.cols()) = s.row(i);
    yv(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd coef = (design.transpose() * design).ldlt().solve(design.transpose() * yv);
  const Eigen::VectorXd r = yv - design * coef;
  const double s2 = r.squaredNorm() / static_cast<double>(n);
  Eigen::MatrixXd out(n, p + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i).head(p) = design.row(i) * (r(i) / s2);
    out(i, p) = -0.5 / s2 + r(i) * r(i) / (2.0 * s2 * s2);
  }
  return out;
}

double cox_partial_loglik(std::span<const double> t, std::span<const double> d,
                          std::span<const double> x, double beta) {
  double ll = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (d[i] != 1.0) continue;
    double risk = 0.0;
    for (std::size_t j = 0; j < t.size(); ++j)
      if (t[j] >= t[i]) risk += std::exp(beta * x[j]);
    ll += beta * x[i] - std::log(risk);
  }
  return ll;
}

double cox_score(std::span<const double> t, std::span<const double> d, std::span<const double> x, double beta) {
  double u = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (d[i] != 1.0) continue;
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t j = 0; j < t.size(); ++j)
      if (t[j] >= t[i]) {
        s0 += std::exp(beta * x[j]);
        s1 += x[j] * std::exp(beta * x[j]);
      }
    u += x[i] - s1 / s0;
  }
  return u;
}

double cox_bisection(std::span<const double> t, std::span<const double> d, std::span<const double> x) {
  double lo = -20.0, hi = 20.0;
  if (cox_score(t, d, x, lo) < 0.0 || cox_score(t, d, x, hi) > 0.0)
    throw std::runtime_error("Cox score has no sign change on [-20, 20]");
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    const double mid = 0.5 * (lo + hi);
    (cox_score(t, d, x, mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

CoxResiduals cox_residuals(std::span<const double> t, std::span<const double> d,
                           std::span<const double> x, double beta) {
  const std::size_t n = t.size();
  std::vector<double> times;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] == 1.0) times.push_back(t[i]);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  std::vector<double> dh(times.size()), xbar(times.size());
  for (std::size_t m = 0; m < times.size(); ++m) {
    double s0 = 0.0, s1 = 0.0, events = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (t[j] >= times[m]) {
        s0 += std::exp(beta * x[j]);
        s1 += x[j] * std::exp(beta * x[j]);
      }
      if (t[j] == times[m] && d[j] == 1.0) events += 1.0;
    }
    dh[m] = events / s0;
    xbar[m] = s1 / s0;
  }
  CoxResiduals out{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))};
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(beta * x[i]);
    double mart = d[i], score = 0.0;
    for (std::size_t m = 0; m < times.size(); ++m) {
      if (times[m] > t[i]) break;
      mart -= e * dh[m];
      score -= e * (x[i] - xbar[m]) * dh[m];
      if (times[m] == t[i] && d[i] == 1.0) score += x[i] - xbar[m];
    }
    out.martingale(static_cast<Eigen::Index>(i)) = mart;
    out.score(static_cast<Eigen::Index>(i)) = score;
  }
  return out;
}

Eigen::Vector3d weibull_grid(std::span<const double> t, std::span<const double> d, std::span<const double> x) {
  auto ll = [&](const Eigen::Vector3d& th) {
    if (!(th(2) > 0.0)) return -std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += loglik_weibull(t[i], d[i], x[i], th);
    return s;
  };
  double tsum = 0.0, dsum = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    tsum += t[i];
    dsum += d[i];
  }
  // Search over (alpha1, beta, log alpha2).
  Eigen::Vector3d centre(std::log(tsum / dsum), 0.0, 0.0);
  double step = 0.5;
  double best = ll(Eigen::Vector3d(centre(0), centre(1), 1.0));
  const int half = 5;
  while (step > 1e-7) {
    Eigen::Vector3d next = centre;
    for (int a = -half; a <= half; ++a)
      for (int b = -half; b <= half; ++b)
        for (int c = -half; c <= half; ++c) {
          const Eigen::Vector3d p = centre + step * Eigen::Vector3d(a, b, c);
          const double v = ll(Eigen::Vector3d(p(0), p(1), std::exp(p(2))));
          if (v > best) {
            best = v;
            next = p;
          }
        }
    // Shrink only once the optimum is interior to the current grid.
    const bool interior = ((next - centre).array().abs() < half * step - 1e-12).all();
    centre = next;
    if (interior) step *= 0.5;
  }
  return {centre(0), centre(1), std::exp(centre(2))};
}

double log_odds_ratio(std::span<const double> y, std::span<const double> x) {
  double c[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < y.size(); ++i) c[x[i] == 1.0][y[i] == 1.0] += 1.0;
  return std::log(c[1][1] * c[0][0] / (c[1][0] * c[0][1]));
}

namespace {

// Calls f(perm) for every permutation of the row order within strata.
template <class F>
void for_each_permutation(Eigen::Index m, std::span<const int> strata, F&& f) {
  std::map<int, std::vector<std::size_t>> by;
  for (Eigen::Index i = 0; i < m; ++i) by[strata.empty() ? 0 : strata[static_cast<std::size_t>(i)]].push_back(static_cast<std::size_t>(i));
  std::vector<std::vector<std::size_t>> slots, cur;
  for (auto& [k, v] : by) {
    slots.push_back(v);
    cur.push_back(v);
  }
  std::vector<std::size_t> perm(static_cast<std::size_t>(m));
  // Recursive product over strata of all orderings.
  auto rec = [&](auto&& self, std::size_t s) -> void {
    if (s == slots.size()) {
      f(perm);
      return;
    }
    std::vector<std::size_t> v = slots[s];
    std::sort(v.begin(), v.end());
    do {
      for (std::size_t j = 0; j < v.size(); ++j) perm[slots[s][j]] = v[j];
      self(self, s + 1);
    } while (std::next_permutation(v.begin(), v.end()));
  };
  rec(rec, 0);
}

Eigen::VectorXd stat_of(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h, const std::vector<std::size_t>& perm) {
  Eigen::MatrixXd hp(h.rows(), h.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) hp.row(static_cast<Eigen::Index>(i)) = h.row(static_cast<Eigen::Index>(perm[i]));
  const Eigen::MatrixXd t = g.transpose() * hp;
  return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

}  // namespace

PermutationMoments enumerate_moments(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h, std::span<const int> strata) {
  const Eigen::Index pq = g.cols() * h.cols();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(pq);
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(pq, pq);
  double count = 0.0;
  for_each_permutation(g.rows(), strata, [&](const std::vector<std::size_t>& perm) {
    const Eigen::VectorXd t = stat_of(g, h, perm);
    sum += t;
    outer.noalias() += t * t.transpose();
    count += 1.0;
  });
  PermutationMoments out;
  out.mu = sum / count;
  out.sigma = outer / count - out.mu * out.mu.transpose();
  return out;
}

double enumerate_pvalue(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h, std::span<const int> strata) {
  const PermutationMoments mom = enumerate_moments(g, h, strata);
  const Eigen::MatrixXd pinv = mom.sigma.completeOrthogonalDecomposition().pseudoInverse();
  auto quad = [&](const Eigen::VectorXd& t) {
    const Eigen::VectorXd dlt = t - mom.mu;
    return dlt.dot(pinv * dlt);
  };
  std::vector<std::size_t> id(static_cast<std::size_t>(g.rows()));
  std::iota(id.begin(), id.end(), std::size_t{0});
  const double c0 = quad(stat_of(g, h, id));
  double hits = 0.0, count = 0.0;
  for_each_permutation(g.rows(), strata, [&](const std::vector<std::size_t>& perm) {
    hits += quad(stat_of(g, h, perm)) >= c0 - 1e-9 * std::max(1.0, c0);
    count += 1.0;
  });
  return hits / count;
}

}  // namespace mobpart::oracle
