#pragma once

#include "mobpart/data.hpp"

#include <Eigen/Dense>

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mobpart {

// A fit that cannot be attempted: degenerate design, one-armed node, no events.
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Result of fitting one model family on a row set.
//
// `scores` has one row per fitting row (in RowSet order) and holds the
// per-observation log-likelihood gradient evaluated at theta. The sign is
// immaterial for the instability tests, which are quadratic in the scores.
// Score columns usually coincide with parameters; the Cox model is the
// exception (martingale and score residuals for a single parameter).
struct ModelFit {
  std::string family;
  std::vector<std::string> param_names;
  Eigen::VectorXd theta;
  Eigen::MatrixXd vcov;  // over theta; NaN rows for parameters without a variance

  std::vector<std::string> score_names;
  Eigen::MatrixXd scores;
  std::vector<Eigen::Index> alpha_cols;  // intercept block
  std::vector<Eigen::Index> beta_cols;   // treatment block
  std::vector<Eigen::Index> treatment_params;  // indices into theta reported as treatment effects

  // Score columns are partitioned into groups (ALSFRS items in the ensemble,
  // a single group otherwise). A group may carry a per-row stratum label
  // (baseline value); instability tests permute within strata.
  std::vector<int> score_group;
  std::vector<std::vector<int>> group_strata;

  double objective = 0.0;  // sum of per-row negative log-likelihoods
  bool converged = false;
  int iterations = 0;
  RowSet rows;

  Eigen::Index param_index(const std::string& name) const;
  int n_groups() const;
};

enum class Effect { Positive, Negative, None };
const char* to_string(Effect e);

struct EffectClass {
  Effect label = Effect::None;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
};

std::pair<double, double> wald_interval(double estimate, double se, double level = 0.95);
EffectClass classify_interval(double lower, double upper, double level = 0.95);

std::pair<double, double> wald_ci(const ModelFit& fit, const std::string& param, double level = 0.95);
EffectClass classify_effect(const ModelFit& fit, const std::string& param, double level = 0.95);

// E(Y) = exp(offset_log + alpha + beta x), Gaussian errors, ML fit.
// theta = (alpha, beta, sigma2); sigma2 is outside both score blocks.
ModelFit fit_gaussian_log(std::span<const double> response, std::span<const double> offset_log,
                          std::span<const double> treatment, const RowSet& rows);

// Y = alpha + beta x + gamma' s + e. `strata` holds one column per adjustment
// covariate over all dataset rows (may have zero columns).
ModelFit fit_linear_treatment(std::span<const double> response, std::span<const double> treatment,
                              const Eigen::MatrixXd& strata, const RowSet& rows);

// P(Y <= r | x) = 1 / (1 + exp(-alpha_r + beta x)) over the observed item levels.
ModelFit fit_prop_odds(std::span<const double> item, std::span<const double> treatment,
                       const RowSet& rows);

struct OrdinalItemData {
  std::string name;
  std::span<const double> followup;  // item level indices at follow-up
  std::span<const double> baseline;  // item level indices at baseline
};

struct EnsembleOptions {
  std::size_t min_cell_rows = 8;
};

// One proportional-odds model per (item, baseline level) cell; inestimable
// cells are dropped. Groups are items; strata are baseline levels.
ModelFit fit_strat_prop_odds_ensemble(std::span<const OrdinalItemData> items,
                                      std::span<const double> treatment, const RowSet& rows,
                                      const EnsembleOptions& opts = {});

// AFT with minimum-extreme-value errors: P(T <= t | x) = F((log t - a1 - b x) / a2),
// F(z) = 1 - exp(-exp(z)). theta = (alpha1, beta, alpha2).
ModelFit fit_weibull(std::span<const double> time, std::span<const double> event,
                     std::span<const double> treatment, const RowSet& rows);

// Breslow partial likelihood. Score columns: martingale residual (intercept
// block) and score residual (treatment block).
ModelFit fit_cox(std::span<const double> time, std::span<const double> event,
                 std::span<const double> treatment, const RowSet& rows);

// A model family bound to a dataset and role map.
class ModelFamily {
 public:
  virtual ~ModelFamily() = default;
  virtual FamilyKind kind() const = 0;
  virtual ModelFit fit(const RowSet& rows) const = 0;
};

std::unique_ptr<ModelFamily> make_family(const Dataset& data, const RoleMap& roles);

}  // namespace mobpart
