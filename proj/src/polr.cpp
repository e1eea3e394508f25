#include "mobpart/models.hpp"
#include "mobpart/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace mobpart {

namespace {

inline double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

// Log-likelihood with gradient and Hessian in the (alpha_0..alpha_{K-2}, beta)
// parametrization. `cat` holds category indices 0..K-1.
struct PolrProblem {
  std::vector<int> cat;
  std::vector<double> x;
  int n_cat = 0;

  ObjectiveBundle eval(const Eigen::VectorXd& alpha, double beta, bool with_derivs) const {
    const int na = n_cat - 1;
    ObjectiveBundle b;
    b.value = 0.0;
    if (with_derivs) {
      b.gradient = Eigen::VectorXd::Zero(na + 1);
      b.hessian = Eigen::MatrixXd::Zero(na + 1, na + 1);
    }
    for (std::size_t i = 0; i < cat.size(); ++i) {
      const int c = cat[i];
      const double xi = x[i];
      const bool has_up = c < na;  // alpha_c bounds from above
      const bool has_lo = c > 0;   // alpha_{c-1} bounds from below
      const double fu = has_up ? logistic(alpha(c) - beta * xi) : 1.0;
      const double fl = has_lo ? logistic(alpha(c - 1) - beta * xi) : 0.0;
      const double p = fu - fl;
      if (!(p > 0.0)) {
        b.value = -std::numeric_limits<double>::infinity();
        return b;
      }
      b.value += std::log(p);
      if (!with_derivs) continue;

      const double du = has_up ? fu * (1.0 - fu) : 0.0;
      const double dl = has_lo ? fl * (1.0 - fl) : 0.0;
      const double d2u = du * (1.0 - 2.0 * fu);
      const double d2l = dl * (1.0 - 2.0 * fl);

      // dp/dtheta and d2p/dtheta2 restricted to the touched coordinates.
      int idx[3];
      double dp[3];
      int m = 0;
      if (has_up) { idx[m] = c; dp[m] = du; ++m; }
      if (has_lo) { idx[m] = c - 1; dp[m] = -dl; ++m; }
      idx[m] = na;
      dp[m] = -xi * (du - dl);
      ++m;

      auto d2p = [&](int a, int bcol) -> double {
        const bool au = has_up && a == c, al = has_lo && a == c - 1, ab = a == na;
        const bool bu = has_up && bcol == c, bl = has_lo && bcol == c - 1, bb = bcol == na;
        if (au && bu) return d2u;
        if (al && bl) return -d2l;
        if ((au && bb) || (ab && bu)) return -xi * d2u;
        if ((al && bb) || (ab && bl)) return xi * d2l;
        if (ab && bb) return xi * xi * (d2u - d2l);
        return 0.0;
      };
      for (int a = 0; a < m; ++a) {
        b.gradient(idx[a]) += dp[a] / p;
        for (int bb = 0; bb < m; ++bb)
          b.hessian(idx[a], idx[bb]) += d2p(idx[a], idx[bb]) / p - dp[a] * dp[bb] / (p * p);
      }
    }
    return b;
  }
};

// alpha_r = zeta_0 + sum_{s=1..r} exp(zeta_s); beta = zeta_{K-1}.
Eigen::VectorXd to_alpha(const Eigen::VectorXd& zeta, int na) {
  Eigen::VectorXd a(na);
  a(0) = zeta(0);
  for (int r = 1; r < na; ++r) a(r) = a(r - 1) + std::exp(zeta(r));
  return a;
}

struct PolrResult {
  Eigen::VectorXd theta;  // (alpha_0..alpha_{K-2}, beta)
  std::vector<int> levels;
  OptimResult opt;
};

PolrResult solve_polr(const PolrProblem& prob) {
  const int na = prob.n_cat - 1;
  const std::size_t n = prob.cat.size();

  std::vector<double> count(prob.n_cat, 0.0);
  for (int c : prob.cat) count[c] += 1.0;
  Eigen::VectorXd zeta = Eigen::VectorXd::Zero(na + 1);
  double cum = 0.0, prev = 0.0;
  for (int r = 0; r < na; ++r) {
    cum += count[r];
    const double pr = cum / static_cast<double>(n);
    const double a = std::log(pr / (1.0 - pr));
    zeta(r) = r == 0 ? a : std::log(a - prev);
    prev = a;
  }

  auto bundle = [&](const Eigen::VectorXd& z) {
    const Eigen::VectorXd alpha = to_alpha(z, na);
    ObjectiveBundle ba = prob.eval(alpha, z(na), true);
    if (!std::isfinite(ba.value)) return ba;
    // Chain rule into the monotone parametrization.
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(na + 1, na + 1);
    for (int r = 0; r < na; ++r) {
      jac(r, 0) = 1.0;
      for (int s = 1; s <= r; ++s) jac(r, s) = std::exp(z(s));
    }
    jac(na, na) = 1.0;
    ObjectiveBundle bz;
    bz.value = ba.value;
    bz.gradient = jac.transpose() * ba.gradient;
    bz.hessian = jac.transpose() * ba.hessian * jac;
    for (int s = 1; s < na; ++s) {
      double tail = 0.0;
      for (int r = s; r < na; ++r) tail += ba.gradient(r);
      bz.hessian(s, s) += tail * std::exp(z(s));
    }
    return bz;
  };

  PolrResult res;
  res.opt = newton_maximize(bundle, zeta);
  res.theta.resize(na + 1);
  res.theta.head(na) = to_alpha(res.opt.theta_hat, na);
  res.theta(na) = res.opt.theta_hat(na);
  return res;
}

}  // namespace

ModelFit fit_prop_odds(std::span<const double> item, std::span<const double> x, const RowSet& rows) {
  std::size_t n1 = 0;
  for (std::size_t i : rows) n1 += x[i] == 1.0;
  if (n1 == 0 || n1 == rows.size()) throw FitError("treatment effect inestimable: one-armed data");

  std::map<int, int> level_to_cat;
  for (std::size_t i : rows) level_to_cat.emplace(static_cast<int>(item[i]), 0);
  if (level_to_cat.size() < 2) throw FitError("proportional odds model inestimable: one observed category");
  std::vector<int> levels;
  for (auto& [lvl, cat] : level_to_cat) {
    cat = static_cast<int>(levels.size());
    levels.push_back(lvl);
  }

  PolrProblem prob;
  prob.n_cat = static_cast<int>(levels.size());
  for (std::size_t i : rows) {
    prob.cat.push_back(level_to_cat[static_cast<int>(item[i])]);
    prob.x.push_back(x[i]);
  }
  const PolrResult sol = solve_polr(prob);
  const int na = prob.n_cat - 1;

  ModelFit fit;
  fit.family = "polr";
  fit.rows = rows;
  for (int r = 0; r < na; ++r) fit.param_names.push_back("alpha_" + std::to_string(levels[r]));
  fit.param_names.push_back("beta");
  fit.score_names = fit.param_names;
  for (int r = 0; r < na; ++r) fit.alpha_cols.push_back(r);
  fit.beta_cols = {na};
  fit.treatment_params = {na};
  fit.score_group.assign(static_cast<std::size_t>(na + 1), 0);
  fit.group_strata = {{}};
  fit.theta = sol.theta;
  fit.converged = sol.opt.converged;
  fit.iterations = sol.opt.iterations;

  const Eigen::VectorXd alpha = sol.theta.head(na);
  const double beta = sol.theta(na);
  const ObjectiveBundle total = prob.eval(alpha, beta, true);
  fit.objective = -total.value;

  fit.scores.resize(static_cast<Eigen::Index>(rows.size()), na + 1);
  PolrProblem one;
  one.n_cat = prob.n_cat;
  one.cat.resize(1);
  one.x.resize(1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    one.cat[0] = prob.cat[k];
    one.x[0] = prob.x[k];
    fit.scores.row(static_cast<Eigen::Index>(k)) = one.eval(alpha, beta, true).gradient.transpose();
  }

  const Eigen::MatrixXd info = -symmetrize(total.hessian);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (std::isfinite(total.value) && ldlt.isPositive() && (ldlt.vectorD().array() > 0).all())
    fit.vcov = ldlt.solve(Eigen::MatrixXd::Identity(na + 1, na + 1));
  else
    fit.vcov = Eigen::MatrixXd::Constant(na + 1, na + 1, std::nan(""));
  return fit;
}

ModelFit fit_strat_prop_odds_ensemble(std::span<const OrdinalItemData> items,
                                      std::span<const double> x, const RowSet& rows,
                                      const EnsembleOptions& opts) {
  const auto n = static_cast<Eigen::Index>(rows.size());

  struct Cell {
    int item;
    int baseline;
    ModelFit fit;
    std::vector<Eigen::Index> positions;  // positions within `rows`
  };
  std::vector<Cell> cells;
  for (std::size_t it = 0; it < items.size(); ++it) {
    std::map<int, std::vector<Eigen::Index>> by_baseline;
    for (Eigen::Index k = 0; k < n; ++k)
      by_baseline[static_cast<int>(items[it].baseline[rows[static_cast<std::size_t>(k)]])].push_back(k);
    for (auto& [level, pos] : by_baseline) {
      if (pos.size() < opts.min_cell_rows) continue;
      std::vector<std::size_t> idx;
      for (Eigen::Index k : pos) idx.push_back(rows[static_cast<std::size_t>(k)]);
      try {
        ModelFit f = fit_prop_odds(items[it].followup, x, RowSet(std::move(idx)));
        if (!f.converged || !f.vcov.allFinite()) continue;
        cells.push_back({static_cast<int>(it), level, std::move(f), std::move(pos)});
      } catch (const FitError&) {
        // inestimable cell: discarded
      }
    }
  }
  if (cells.empty()) throw FitError("no estimable (item, baseline) cell");

  Eigen::Index p = 0;
  for (const auto& c : cells) p += c.fit.theta.size();

  ModelFit fit;
  fit.family = "polr-stratified";
  fit.rows = rows;
  fit.theta.resize(p);
  fit.vcov = Eigen::MatrixXd::Zero(p, p);
  fit.scores = Eigen::MatrixXd::Zero(n, p);
  fit.converged = true;
  fit.objective = 0.0;
  Eigen::Index off = 0;
  for (const auto& c : cells) {
    const Eigen::Index q = c.fit.theta.size();
    const std::string prefix = items[static_cast<std::size_t>(c.item)].name + "[" + std::to_string(c.baseline) + "].";
    for (const auto& nm : c.fit.param_names) fit.param_names.push_back(prefix + nm);
    fit.theta.segment(off, q) = c.fit.theta;
    fit.vcov.block(off, off, q, q) = c.fit.vcov;
    for (std::size_t r = 0; r < c.positions.size(); ++r)
      fit.scores.block(c.positions[r], off, 1, q) = c.fit.scores.row(static_cast<Eigen::Index>(r));
    for (Eigen::Index a : c.fit.alpha_cols) fit.alpha_cols.push_back(off + a);
    for (Eigen::Index b : c.fit.beta_cols) fit.beta_cols.push_back(off + b);
    for (Eigen::Index t : c.fit.treatment_params) fit.treatment_params.push_back(off + t);
    for (Eigen::Index k = 0; k < q; ++k) fit.score_group.push_back(c.item);
    fit.objective += c.fit.objective;
    fit.iterations = std::max(fit.iterations, c.fit.iterations);
    off += q;
  }
  fit.score_names = fit.param_names;

  fit.group_strata.assign(items.size(), std::vector<int>(static_cast<std::size_t>(n), 0));
  for (std::size_t it = 0; it < items.size(); ++it)
    for (Eigen::Index k = 0; k < n; ++k)
      fit.group_strata[it][static_cast<std::size_t>(k)] =
          static_cast<int>(items[it].baseline[rows[static_cast<std::size_t>(k)]]);
  return fit;
}

}  // namespace mobpart
