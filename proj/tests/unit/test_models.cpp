#include "doctest.h"

#include "mobpart/models.hpp"
#include "mobpart/numerics.hpp"
#include "mobpart/oracles.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

using namespace mobpart;

namespace {

struct Sample {
  std::vector<double> y, x, off, t, d, cat;
};

Sample draw(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nrm;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    double x = static_cast<double>(i % 2);
    double off = std::exp(0.5 * nrm(gen));
    s.x.push_back(x);
    s.off.push_back(std::log(off));
    s.y.push_back(off * std::exp(0.3 + 0.4 * x) + 0.2 * nrm(gen));
    double ev = std::exp(1.0 + 0.5 * x + 0.7 * std::log(-std::log(u(gen))));
    double cens = std::exp(1.5 + nrm(gen));
    s.t.push_back(std::min(ev, cens));
    s.d.push_back(ev <= cens ? 1.0 : 0.0);
    double lat = 0.8 * x + std::log(u(gen) / (1 - u(gen)));
    s.cat.push_back(lat < -0.5 ? 0 : lat < 1.0 ? 1 : 2);
  }
  return s;
}

double max_rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double m = 0;
  for (Eigen::Index k = 0; k < a.size(); ++k)
    m = std::max(m, std::abs(a[k] - b[k]) / std::max({1.0, std::abs(a[k]), std::abs(b[k])}));
  return m;
}

}  // namespace

TEST_CASE("gaussian-log scores match finite differences of the per-row log-likelihood") {
  auto s = draw(300, 1);
  auto rows = RowSet::all(s.y.size());
  auto fit = fit_gaussian_log(s.y, s.off, s.x, rows);
  REQUIRE(fit.converged);
  CHECK(fit.theta[1] == doctest::Approx(0.4).epsilon(0.1));
  for (std::size_t i = 0; i < 20; ++i) {
    auto f = [&](const Eigen::VectorXd& th) { return oracle::loglik_gaussian_log(s.y[i], s.off[i], s.x[i], th); };
    Eigen::VectorXd fd = finite_diff_gradient(f, fit.theta);
    Eigen::VectorXd sc = fit.scores.row(static_cast<Eigen::Index>(i)).transpose();
    CHECK(max_rel(sc, fd) < 1e-5);
  }
  CHECK(fit.scores.colwise().sum().cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("linear model matches the normal equations") {
  auto s = draw(120, 2);
  Eigen::MatrixXd strata(120, 1);
  for (Eigen::Index i = 0; i < 120; ++i) strata(i, 0) = s.off[static_cast<std::size_t>(i)];
  auto fit = fit_linear_treatment(s.y, s.x, strata, RowSet::all(120));
  Eigen::MatrixXd X(120, 3);
  Eigen::VectorXd Y(120);
  for (Eigen::Index i = 0; i < 120; ++i) {
    X.row(i) << 1.0, s.x[static_cast<std::size_t>(i)], strata(i, 0);
    Y[i] = s.y[static_cast<std::size_t>(i)];
  }
  Eigen::VectorXd b = X.colPivHouseholderQr().solve(Y);
  CHECK(fit.theta.head(3).isApprox(b, 1e-10));
  auto oracle_scores = oracle::linear_scores(s.y, s.x, strata);
  CHECK((fit.scores - oracle_scores).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(fit.alpha_cols == std::vector<Eigen::Index>{0});
  CHECK(fit.beta_cols == std::vector<Eigen::Index>{1});
}

TEST_CASE("degenerate designs raise FitError") {
  std::vector<double> y{1, 2, 3, 4, 5, 6}, x{1, 1, 1, 1, 1, 1};
  CHECK_THROWS_AS(fit_linear_treatment(y, x, Eigen::MatrixXd(6, 0), RowSet::all(6)), FitError);
  CHECK_THROWS_AS(fit_prop_odds(std::vector<double>{0, 1, 0, 1, 0, 1}, x, RowSet::all(6)), FitError);
  std::vector<double> x2{0, 1, 0, 1, 0, 1}, none{0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(fit_cox(y, none, x2, RowSet::all(6)), FitError);
  CHECK_THROWS_AS(fit_weibull(y, none, x2, RowSet::all(6)), FitError);
}

TEST_CASE("two-level proportional odds recovers the log odds ratio") {
  auto s = draw(400, 3);
  std::vector<double> bin;
  for (double c : s.cat) bin.push_back(c >= 1 ? 1.0 : 0.0);
  auto fit = fit_prop_odds(bin, s.x, RowSet::all(bin.size()));
  REQUIRE(fit.converged);
  double beta = fit.theta[fit.param_index("beta")];
  CHECK(beta == doctest::Approx(oracle::log_odds_ratio(bin, s.x)).epsilon(1e-7));
  CHECK(beta > 0);
}

TEST_CASE("proportional odds scores match finite differences") {
  auto s = draw(300, 4);
  auto fit = fit_prop_odds(s.cat, s.x, RowSet::all(s.cat.size()));
  REQUIRE(fit.converged);
  for (std::size_t i = 0; i < 20; ++i) {
    auto f = [&](const Eigen::VectorXd& th) { return oracle::loglik_polr(static_cast<int>(s.cat[i]), s.x[i], th); };
    Eigen::VectorXd sc = fit.scores.row(static_cast<Eigen::Index>(i)).transpose();
    CHECK(max_rel(sc, finite_diff_gradient(f, fit.theta)) < 1e-5);
  }
}

TEST_CASE("stratified ensemble drops sparse cells and labels groups by item") {
  auto s = draw(200, 5);
  std::vector<double> base(200);
  for (std::size_t i = 0; i < 200; ++i) base[i] = i < 195 ? static_cast<double>((i / 2) % 2) : 2.0;
  std::vector<OrdinalItemData> items{{"q1", s.cat, base}, {"q2", s.cat, base}};
  auto fit = fit_strat_prop_odds_ensemble(items, s.x, RowSet::all(200));
  CHECK(fit.treatment_params.size() == 4);  // 2 items x 2 retained baseline levels
  for (const auto& nm : fit.param_names) CHECK(nm.find("[2]") == std::string::npos);
  CHECK(fit.n_groups() == 2);
  CHECK(fit.group_strata.size() == 2);
  CHECK(fit.group_strata[0][199] == 2);
}

TEST_CASE("Weibull fit agrees with the grid oracle") {
  auto s = draw(250, 6);
  auto fit = fit_weibull(s.t, s.d, s.x, RowSet::all(250));
  REQUIRE(fit.converged);
  Eigen::Vector3d g = oracle::weibull_grid(s.t, s.d, s.x);
  CHECK(max_rel(fit.theta, g) < 1e-5);
  for (std::size_t i = 0; i < 10; ++i) {
    auto f = [&](const Eigen::VectorXd& th) { return oracle::loglik_weibull(s.t[i], s.d[i], s.x[i], th); };
    Eigen::VectorXd sc = fit.scores.row(static_cast<Eigen::Index>(i)).transpose();
    CHECK(max_rel(sc, finite_diff_gradient(f, fit.theta)) < 1e-5);
  }
}

TEST_CASE("Cox fit agrees with bisection and brute-force residuals") {
  auto s = draw(150, 7);
  auto fit = fit_cox(s.t, s.d, s.x, RowSet::all(150));
  REQUIRE(fit.converged);
  CHECK(fit.theta[0] == doctest::Approx(oracle::cox_bisection(s.t, s.d, s.x)).epsilon(1e-8));
  auto res = oracle::cox_residuals(s.t, s.d, s.x, fit.theta[0]);
  CHECK((fit.scores.col(fit.alpha_cols[0]) - res.martingale).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((fit.scores.col(fit.beta_cols[0]) - res.score).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("Wald intervals and effect classes") {
  auto [lo, hi] = wald_interval(1.0, 0.5, 0.95);
  CHECK(lo == doctest::Approx(1.0 - 1.959963985 * 0.5));
  CHECK(hi == doctest::Approx(1.0 + 1.959963985 * 0.5));
  CHECK(classify_interval(0.1, 2.0).label == Effect::Positive);
  CHECK(classify_interval(-2.0, -0.1).label == Effect::Negative);
  CHECK(classify_interval(-0.1, 2.0).label == Effect::None);
}
