#include "mobpart/models.hpp"
#include "mobpart/numerics.hpp"

#include <cmath>
#include <numbers>

namespace mobpart {

namespace {

void require_both_arms(std::span<const double> x, const RowSet& rows, std::size_t min_per_arm) {
  std::size_t n1 = 0;
  for (std::size_t i : rows) n1 += x[i] == 1.0;
  const std::size_t n0 = rows.size() - n1;
  if (n0 < min_per_arm || n1 < min_per_arm)
    throw FitError("treatment effect inestimable: each arm needs at least " +
                   std::to_string(min_per_arm) + " rows");
}

double gaussian_objective(std::size_t n, double sigma2) {
  return 0.5 * static_cast<double>(n) * (std::log(2.0 * std::numbers::pi * sigma2) + 1.0);
}

}  // namespace

ModelFit fit_gaussian_log(std::span<const double> y, std::span<const double> offset,
                          std::span<const double> x, const RowSet& rows) {
  require_both_arms(x, rows, 2);
  const std::size_t n = rows.size();

  double sy[2] = {0, 0}, so[2] = {0, 0};
  for (std::size_t i : rows) {
    const int a = x[i] == 1.0;
    sy[a] += y[i];
    so[a] += std::exp(offset[i]);
  }
  Eigen::VectorXd init = Eigen::VectorXd::Zero(2);
  if (sy[0] > 0 && sy[1] > 0) {
    init(0) = std::log(sy[0] / so[0]);
    init(1) = std::log(sy[1] / so[1]) - init(0);
  }

  // Maximize -RSS/2 over (alpha, beta); sigma2 is profiled out afterwards.
  auto bundle = [&](const Eigen::VectorXd& th) {
    ObjectiveBundle b;
    b.value = 0.0;
    b.gradient = Eigen::VectorXd::Zero(2);
    b.hessian = Eigen::MatrixXd::Zero(2, 2);
    for (std::size_t i : rows) {
      const double mu = std::exp(offset[i] + th(0) + th(1) * x[i]);
      const double r = y[i] - mu;
      b.value -= 0.5 * r * r;
      const double g = r * mu;
      const double h = r * mu - mu * mu;
      b.gradient(0) += g;
      b.gradient(1) += g * x[i];
      b.hessian(0, 0) += h;
      b.hessian(0, 1) += h * x[i];
      b.hessian(1, 1) += h * x[i] * x[i];
    }
    b.hessian(1, 0) = b.hessian(0, 1);
    return b;
  };
  const OptimResult opt = newton_maximize(bundle, init);
  const Eigen::VectorXd& th = opt.theta_hat;

  ModelFit fit;
  fit.family = "gaussian-log";
  fit.rows = rows;
  fit.param_names = {"alpha", "beta", "sigma2"};
  fit.score_names = fit.param_names;
  fit.alpha_cols = {0};
  fit.beta_cols = {1};
  fit.treatment_params = {1};
  fit.score_group = {0, 0, 0};
  fit.group_strata = {{}};
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;

  double rss = 0.0;
  Eigen::VectorXd mu(n), r(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = rows[k];
    mu(k) = std::exp(offset[i] + th(0) + th(1) * x[i]);
    r(k) = y[i] - mu(k);
    rss += r(k) * r(k);
  }
  const double sigma2 = rss / static_cast<double>(n);
  fit.theta = Eigen::Vector3d(th(0), th(1), sigma2);
  fit.objective = gaussian_objective(n, sigma2);

  fit.scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 3);
  fit.vcov = Eigen::MatrixXd::Zero(3, 3);
  if (sigma2 > 0.0) {
    Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
    for (std::size_t k = 0; k < n; ++k) {
      const double xi = x[rows[k]];
      const double s = r(k) * mu(k) / sigma2;
      fit.scores(k, 0) = s;
      fit.scores(k, 1) = s * xi;
      fit.scores(k, 2) = -0.5 / sigma2 + 0.5 * r(k) * r(k) / (sigma2 * sigma2);
      const double w = (mu(k) * mu(k) - r(k) * mu(k)) / sigma2;
      info(0, 0) += w;
      info(0, 1) += w * xi;
      info(1, 1) += w * xi * xi;
    }
    info(1, 0) = info(0, 1);
    Eigen::LDLT<Eigen::Matrix2d> ldlt(info);
    if (ldlt.isPositive() && (ldlt.vectorD().array() > 0).all())
      fit.vcov.topLeftCorner<2, 2>() = ldlt.solve(Eigen::Matrix2d::Identity());
    else
      fit.vcov.topLeftCorner<2, 2>().setConstant(std::nan(""));
    fit.vcov(2, 2) = 2.0 * sigma2 * sigma2 / static_cast<double>(n);
  }
  return fit;
}

ModelFit fit_linear_treatment(std::span<const double> y, std::span<const double> x,
                              const Eigen::MatrixXd& strata, const RowSet& rows) {
  require_both_arms(x, rows, 2);
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index ks = strata.cols();
  const Eigen::Index p = 2 + ks;

  Eigen::MatrixXd design(n, p);
  Eigen::VectorXd resp(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::size_t i = rows[static_cast<std::size_t>(k)];
    design(k, 0) = 1.0;
    design(k, 1) = x[i];
    for (Eigen::Index s = 0; s < ks; ++s) design(k, 2 + s) = strata(static_cast<Eigen::Index>(i), s);
    resp(k) = y[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) throw FitError("collinear design in linear model");
  const Eigen::VectorXd coef = qr.solve(resp);
  const Eigen::VectorXd r = resp - design * coef;
  const double sigma2 = r.squaredNorm() / static_cast<double>(n);

  ModelFit fit;
  fit.family = "linear";
  fit.rows = rows;
  fit.param_names = {"alpha", "beta"};
  for (Eigen::Index s = 0; s < ks; ++s) fit.param_names.push_back("gamma" + std::to_string(s + 1));
  fit.param_names.push_back("sigma2");
  fit.score_names = fit.param_names;
  fit.alpha_cols = {0};
  fit.beta_cols = {1};
  fit.treatment_params = {1};
  fit.score_group.assign(static_cast<std::size_t>(p + 1), 0);
  fit.group_strata = {{}};
  fit.converged = true;
  fit.theta.resize(p + 1);
  fit.theta.head(p) = coef;
  fit.theta(p) = sigma2;
  fit.objective = gaussian_objective(rows.size(), sigma2);

  fit.scores = Eigen::MatrixXd::Zero(n, p + 1);
  fit.vcov = Eigen::MatrixXd::Zero(p + 1, p + 1);
  if (sigma2 > 0.0) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double s = r(k) / sigma2;
      for (Eigen::Index c = 0; c < p; ++c) fit.scores(k, c) = s * design(k, c);
      fit.scores(k, p) = -0.5 / sigma2 + 0.5 * r(k) * r(k) / (sigma2 * sigma2);
    }
    const Eigen::MatrixXd xtx = design.transpose() * design;
    fit.vcov.topLeftCorner(p, p) = sigma2 * xtx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    fit.vcov(p, p) = 2.0 * sigma2 * sigma2 / static_cast<double>(n);
  }
  return fit;
}

}  // namespace mobpart
