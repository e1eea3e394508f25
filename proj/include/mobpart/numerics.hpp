#pragma once

#include <Eigen/Dense>

#include <functional>

namespace mobpart {

// Objective, gradient and Hessian at one parameter point.
struct ObjectiveBundle {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

struct OptimResult {
  Eigen::VectorXd theta_hat;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;  // max-norm of the gradient at theta_hat
  double value = 0.0;
};

struct NewtonOptions {
  double tol = 1e-8;
  int max_iter = 100;
  int max_halvings = 30;
  double rel_tol = 1e-12;
  // Any |theta_k| beyond this ends the search as non-converged.
  double divergence_guard = 30.0;
};

using BundleFn = std::function<ObjectiveBundle(const Eigen::VectorXd&)>;

// Damped Newton ascent with step halving. Falls back to a gradient step when
// the symmetrized Hessian is not negative definite. Throws std::domain_error
// when the objective is not finite at `init`.
OptimResult newton_maximize(const BundleFn& fn, const Eigen::VectorXd& init,
                            const NewtonOptions& opts = {});

struct PseudoInverse {
  Eigen::MatrixXd inverse;
  Eigen::Index rank = 0;
};

// Eigendecomposition-based Moore-Penrose inverse of a symmetric PSD matrix.
// Eigenvalues <= rank_tol * lambda_max are treated as zero.
PseudoInverse pseudo_inverse(const Eigen::MatrixXd& m, double rank_tol = 1e-10);

// Central differences with component step h * max(1, |x_k|).
Eigen::VectorXd finite_diff_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                     const Eigen::VectorXd& x, double h = 1e-5);

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& h) { return 0.5 * (h + h.transpose()); }

}  // namespace mobpart
