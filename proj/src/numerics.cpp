#include "mobpart/numerics.hpp"

#include <cmath>
#include <stdexcept>

namespace mobpart {

namespace {

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

bool finite_bundle(const ObjectiveBundle& b) {
  return std::isfinite(b.value) && b.gradient.allFinite() && b.hessian.allFinite();
}

// Ascent direction: Newton if -H is positive definite, otherwise the gradient.
Eigen::VectorXd ascent_direction(const ObjectiveBundle& b, bool& newton) {
  const Eigen::MatrixXd neg_h = -symmetrize(b.hessian);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
  newton = ldlt.info() == Eigen::Success && ldlt.isPositive() &&
           (ldlt.vectorD().array() > 0.0).all();
  if (newton) {
    Eigen::VectorXd d = ldlt.solve(b.gradient);
    if (d.allFinite()) return d;
    newton = false;
  }
  const double scale = std::max(1.0, b.gradient.norm());
  return b.gradient / scale;
}

}  // namespace

OptimResult newton_maximize(const BundleFn& fn, const Eigen::VectorXd& init,
                            const NewtonOptions& opts) {
  OptimResult res;
  Eigen::VectorXd theta = init;
  ObjectiveBundle cur = fn(theta);
  if (!std::isfinite(cur.value)) throw std::domain_error("objective is not finite at the initial point");

  double gnorm = max_abs(cur.gradient);
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if (gnorm <= opts.tol) {
      res.converged = true;
      break;
    }
    bool newton = false;
    const Eigen::VectorXd dir = ascent_direction(cur, newton);

    double step = 1.0;
    bool accepted = false;
    ObjectiveBundle next;
    Eigen::VectorXd cand;
    for (int h = 0; h <= opts.max_halvings; ++h, step *= 0.5) {
      cand = theta + step * dir;
      next = fn(cand);
      if (finite_bundle(next) && next.value >= cur.value) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    const double change = std::abs(next.value - cur.value) / std::max(1.0, std::abs(cur.value));
    const double next_gnorm = max_abs(next.gradient);
    theta = cand;
    cur = std::move(next);
    res.iterations = iter + 1;

    if (max_abs(theta) > opts.divergence_guard) {
      gnorm = next_gnorm;
      res.converged = false;
      res.theta_hat = theta;
      res.grad_norm = gnorm;
      res.value = cur.value;
      return res;
    }
    // Stalled at the round-off floor of the objective.
    const bool stalled = change <= opts.rel_tol && next_gnorm > 0.5 * gnorm;
    gnorm = next_gnorm;
    if (gnorm <= opts.tol || stalled) {
      res.converged = true;
      break;
    }
  }
  res.theta_hat = theta;
  res.grad_norm = gnorm;
  res.value = cur.value;
  return res;
}

PseudoInverse pseudo_inverse(const Eigen::MatrixXd& m, double rank_tol) {
  PseudoInverse out;
  const Eigen::Index n = m.rows();
  out.inverse = Eigen::MatrixXd::Zero(n, n);
  if (n == 0) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m));
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double lmax = ev.maxCoeff();
  if (!(lmax > 0.0)) return out;
  const double cut = rank_tol * lmax;
  const Eigen::MatrixXd& v = es.eigenvectors();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (ev(k) > cut) {
      out.inverse.noalias() += (1.0 / ev(k)) * v.col(k) * v.col(k).transpose();
      ++out.rank;
    }
  }
  return out;
}

Eigen::VectorXd finite_diff_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                     const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double step = h * std::max(1.0, std::abs(x(k)));
    xp(k) = x(k) + step;
    const double fp = f(xp);
    xp(k) = x(k) - step;
    const double fm = f(xp);
    xp(k) = x(k);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::domain_error("non-finite function value in finite differences");
    g(k) = (fp - fm) / (2.0 * step);
  }
  return g;
}

}  // namespace mobpart
