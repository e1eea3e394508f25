#include "mobpart/models.hpp"
#include "mobpart/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mobpart {

namespace {

void check_survival_rows(std::span<const double> time, std::span<const double> event,
                         std::span<const double> x, const RowSet& rows, bool positive_time) {
  std::size_t n1 = 0, d = 0;
  for (std::size_t i : rows) {
    n1 += x[i] == 1.0;
    d += event[i] == 1.0;
    if (positive_time && !(time[i] > 0.0)) throw FitError("survival times must be positive");
  }
  if (n1 == 0 || n1 == rows.size()) throw FitError("treatment effect inestimable: one-armed data");
  if (d == 0) throw FitError("no events among the fitting rows");
}

}  // namespace

ModelFit fit_weibull(std::span<const double> time, std::span<const double> event,
                     std::span<const double> x, const RowSet& rows) {
  check_survival_rows(time, event, x, rows, true);
  const std::size_t n = rows.size();
  std::vector<double> lt(n), dl(n), xs(n);
  double tsum = 0.0, dsum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = rows[k];
    lt[k] = std::log(time[i]);
    dl[k] = event[i];
    xs[k] = x[i];
    tsum += time[i];
    dsum += event[i];
  }

  // Internal parametrization (alpha1, beta, log alpha2).
  auto bundle = [&](const Eigen::VectorXd& th) {
    ObjectiveBundle b;
    b.value = 0.0;
    b.gradient = Eigen::VectorXd::Zero(3);
    b.hessian = Eigen::MatrixXd::Zero(3, 3);
    const double s = th(2);
    const double inv = std::exp(-s);
    for (std::size_t k = 0; k < n; ++k) {
      const double z = (lt[k] - th(0) - th(1) * xs[k]) * inv;
      const double w = std::exp(z);
      b.value += dl[k] * (z - s - lt[k]) - w;
      const double dz[3] = {-inv, -xs[k] * inv, -z};
      const double resid = dl[k] - w;
      b.gradient(0) += resid * dz[0];
      b.gradient(1) += resid * dz[1];
      b.gradient(2) += resid * dz[2] - dl[k];
      for (int a = 0; a < 3; ++a)
        for (int c = 0; c < 3; ++c) b.hessian(a, c) -= w * dz[a] * dz[c];
      b.hessian(0, 2) += resid * inv;
      b.hessian(2, 0) += resid * inv;
      b.hessian(1, 2) += resid * xs[k] * inv;
      b.hessian(2, 1) += resid * xs[k] * inv;
      b.hessian(2, 2) += resid * z;
    }
    return b;
  };
  const Eigen::Vector3d init(std::log(tsum / dsum), 0.0, 0.0);
  const OptimResult opt = newton_maximize(bundle, init);
  const Eigen::VectorXd& th = opt.theta_hat;
  const double a2 = std::exp(th(2));

  ModelFit fit;
  fit.family = "weibull";
  fit.rows = rows;
  fit.param_names = {"alpha1", "beta", "alpha2"};
  fit.score_names = fit.param_names;
  fit.alpha_cols = {0, 2};
  fit.beta_cols = {1};
  fit.treatment_params = {1};
  fit.score_group = {0, 0, 0};
  fit.group_strata = {{}};
  fit.theta = Eigen::Vector3d(th(0), th(1), a2);
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;

  const ObjectiveBundle at = bundle(th);
  fit.objective = -at.value;
  fit.scores.resize(static_cast<Eigen::Index>(n), 3);
  for (std::size_t k = 0; k < n; ++k) {
    const double z = (lt[k] - th(0) - th(1) * xs[k]) / a2;
    const double u = std::exp(z) - dl[k];
    const auto r = static_cast<Eigen::Index>(k);
    fit.scores(r, 0) = u / a2;
    fit.scores(r, 1) = u * xs[k] / a2;
    fit.scores(r, 2) = (u * z - dl[k]) / a2;
  }

  const Eigen::MatrixXd info = -symmetrize(at.hessian);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.isPositive() && (ldlt.vectorD().array() > 0).all()) {
    const Eigen::Matrix3d jac = Eigen::Vector3d(1.0, 1.0, a2).asDiagonal();
    fit.vcov = jac * ldlt.solve(Eigen::MatrixXd::Identity(3, 3)) * jac.transpose();
  } else {
    fit.vcov = Eigen::MatrixXd::Constant(3, 3, std::nan(""));
  }
  return fit;
}

namespace {

// Risk-set sums at each distinct event time for a binary covariate.
struct BreslowTerms {
  std::vector<std::size_t> order;  // fitting positions sorted by time ascending
  std::vector<double> event_times;
  std::vector<double> d;        // events at each event time
  std::vector<double> sum_x;    // sum of x over events at each event time
  std::vector<double> s0, s1, s2;
};

BreslowTerms breslow_terms(const std::vector<double>& t, const std::vector<double>& dl,
                           const std::vector<double>& x, double beta) {
  const std::size_t n = t.size();
  BreslowTerms bt;
  bt.order.resize(n);
  std::iota(bt.order.begin(), bt.order.end(), std::size_t{0});
  std::stable_sort(bt.order.begin(), bt.order.end(), [&](std::size_t a, std::size_t b) { return t[a] < t[b]; });

  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  std::size_t k = n;
  while (k > 0) {
    // Block of tied times ending at position k-1.
    std::size_t j = k;
    const double tt = t[bt.order[k - 1]];
    double d = 0.0, sx = 0.0;
    while (j > 0 && t[bt.order[j - 1]] == tt) {
      const std::size_t i = bt.order[j - 1];
      const double e = std::exp(beta * x[i]);
      s0 += e;
      s1 += e * x[i];
      s2 += e * x[i] * x[i];
      if (dl[i] == 1.0) {
        d += 1.0;
        sx += x[i];
      }
      --j;
    }
    if (d > 0.0) {
      bt.event_times.push_back(tt);
      bt.d.push_back(d);
      bt.sum_x.push_back(sx);
      bt.s0.push_back(s0);
      bt.s1.push_back(s1);
      bt.s2.push_back(s2);
    }
    k = j;
  }
  for (auto* v : {&bt.event_times, &bt.d, &bt.sum_x, &bt.s0, &bt.s1, &bt.s2}) std::reverse(v->begin(), v->end());
  return bt;
}

}  // namespace

ModelFit fit_cox(std::span<const double> time, std::span<const double> event,
                 std::span<const double> x, const RowSet& rows) {
  check_survival_rows(time, event, x, rows, false);
  const std::size_t n = rows.size();
  std::vector<double> t(n), dl(n), xs(n);
  for (std::size_t k = 0; k < n; ++k) {
    t[k] = time[rows[k]];
    dl[k] = event[rows[k]];
    xs[k] = x[rows[k]];
  }

  auto bundle = [&](const Eigen::VectorXd& b) {
    const BreslowTerms bt = breslow_terms(t, dl, xs, b(0));
    ObjectiveBundle out;
    out.value = 0.0;
    double u = 0.0, info = 0.0;
    for (std::size_t m = 0; m < bt.d.size(); ++m) {
      const double xbar = bt.s1[m] / bt.s0[m];
      out.value += b(0) * bt.sum_x[m] - bt.d[m] * std::log(bt.s0[m]);
      u += bt.sum_x[m] - bt.d[m] * xbar;
      info += bt.d[m] * (bt.s2[m] / bt.s0[m] - xbar * xbar);
    }
    out.gradient = Eigen::VectorXd::Constant(1, u);
    out.hessian = Eigen::MatrixXd::Constant(1, 1, -info);
    return out;
  };
  const OptimResult opt = newton_maximize(bundle, Eigen::VectorXd::Zero(1));
  const double beta = opt.theta_hat(0);

  ModelFit fit;
  fit.family = "cox";
  fit.rows = rows;
  fit.param_names = {"beta"};
  fit.score_names = {"martingale", "score_resid"};
  fit.alpha_cols = {0};
  fit.beta_cols = {1};
  fit.treatment_params = {0};
  fit.score_group = {0, 0};
  fit.group_strata = {{}};
  fit.theta = Eigen::VectorXd::Constant(1, beta);
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;

  const ObjectiveBundle at = bundle(opt.theta_hat);
  fit.objective = -at.value;
  const double info = -at.hessian(0, 0);
  fit.vcov = Eigen::MatrixXd::Constant(1, 1, info > 0.0 ? 1.0 / info : std::nan(""));

  // Breslow cumulative hazard and cumulative xbar-weighted increments,
  // evaluated at each row's time via a walk in time order.
  const BreslowTerms bt = breslow_terms(t, dl, xs, beta);
  fit.scores.resize(static_cast<Eigen::Index>(n), 2);
  double cum_h = 0.0, cum_xh = 0.0;
  std::size_t m = 0;
  std::size_t pos = 0;
  while (pos < n) {
    const double tt = t[bt.order[pos]];
    double xbar_here = 0.0;
    while (m < bt.event_times.size() && bt.event_times[m] <= tt) {
      const double dh = bt.d[m] / bt.s0[m];
      const double xbar = bt.s1[m] / bt.s0[m];
      cum_h += dh;
      cum_xh += xbar * dh;
      if (bt.event_times[m] == tt) xbar_here = xbar;
      ++m;
    }
    for (; pos < n && t[bt.order[pos]] == tt; ++pos) {
      const std::size_t k = bt.order[pos];
      const double e = std::exp(beta * xs[k]);
      const auto r = static_cast<Eigen::Index>(k);
      fit.scores(r, 0) = dl[k] - e * cum_h;
      fit.scores(r, 1) = dl[k] * (xs[k] - xbar_here) - e * (xs[k] * cum_h - cum_xh);
    }
  }
  return fit;
}

}  // namespace mobpart
