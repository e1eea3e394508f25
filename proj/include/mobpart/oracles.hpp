#pragma once

// Slow, independent reference computations used by the self-test suites and
// the test programs. Nothing here is used by the fitting or testing code.

#include "mobpart/fluctest.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace mobpart::oracle {

// Per-row log-likelihoods in the reported parametrizations.
double loglik_gaussian_log(double y, double offset_log, double x, const Eigen::VectorXd& theta);
// theta = (alpha, beta, gamma..., sigma2); s holds the adjustment covariates.
double loglik_linear(double y, double x, const Eigen::VectorXd& s, const Eigen::VectorXd& theta);
// theta = (alpha_1..alpha_{K-1}, beta); category in 0..K-1.
double loglik_polr(int category, double x, const Eigen::VectorXd& theta);
// theta = (alpha1, beta, alpha2).
double loglik_weibull(double t, double event, double x, const Eigen::VectorXd& theta);

// Linear-model scores from the normal equations: residual r_i over the ML
// variance, times (1, x_i, s_i), and the variance column.
Eigen::MatrixXd linear_scores(std::span<const double> y, std::span<const double> x,
                              const Eigen::MatrixXd& s);

// Breslow partial log-likelihood and its derivative by direct double loops.
double cox_partial_loglik(std::span<const double> t, std::span<const double> d,
                          std::span<const double> x, double beta);
double cox_score(std::span<const double> t, std::span<const double> d, std::span<const double> x, double beta);
// Root of cox_score by bisection on [-20, 20].
double cox_bisection(std::span<const double> t, std::span<const double> d, std::span<const double> x);

struct CoxResiduals {
  Eigen::VectorXd martingale;
  Eigen::VectorXd score;
};
CoxResiduals cox_residuals(std::span<const double> t, std::span<const double> d,
                           std::span<const double> x, double beta);

// Maximizer of the Weibull log-likelihood by successively refined grids.
Eigen::Vector3d weibull_grid(std::span<const double> t, std::span<const double> d, std::span<const double> x);

// Log odds ratio of outcome 1 between arms in a 2x2 table.
double log_odds_ratio(std::span<const double> y, std::span<const double> x);

// Moments of vec(G'H) over every row permutation of H within strata.
PermutationMoments enumerate_moments(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h,
                                     std::span<const int> strata = {});

// Exact permutation p-value of the quadratic statistic, from enumeration.
double enumerate_pvalue(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h, std::span<const int> strata = {});

}  // namespace mobpart::oracle
