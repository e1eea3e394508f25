#include "mobpart/models.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>

namespace mobpart {

Eigen::Index ModelFit::param_index(const std::string& name) const {
  auto it = std::find(param_names.begin(), param_names.end(), name);
  if (it == param_names.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it - param_names.begin();
}

int ModelFit::n_groups() const {
  int g = 0;
  for (int s : score_group) g = std::max(g, s + 1);
  return g;
}

const char* to_string(Effect e) {
  switch (e) {
    case Effect::Positive: return "positive";
    case Effect::Negative: return "negative";
    case Effect::None: return "none";
  }
  return "?";
}

std::pair<double, double> wald_interval(double estimate, double se, double level) {
  if (!(se > 0.0) || !std::isfinite(se)) throw std::domain_error("standard error must be positive");
  if (!(level > 0.0 && level < 1.0)) throw std::domain_error("level must lie in (0, 1)");
  const boost::math::normal std_normal;
  const double z = boost::math::quantile(std_normal, 0.5 * (1.0 + level));
  return {estimate - z * se, estimate + z * se};
}

EffectClass classify_interval(double lower, double upper, double level) {
  EffectClass ec;
  ec.lower = lower;
  ec.upper = upper;
  ec.level = level;
  if (lower > 0.0)
    ec.label = Effect::Positive;
  else if (upper < 0.0)
    ec.label = Effect::Negative;
  else
    ec.label = Effect::None;
  return ec;
}

std::pair<double, double> wald_ci(const ModelFit& fit, const std::string& param, double level) {
  const Eigen::Index k = fit.param_index(param);
  const double var = fit.vcov(k, k);
  if (!(var > 0.0)) throw std::domain_error("parameter '" + param + "' has no positive variance");
  return wald_interval(fit.theta(k), std::sqrt(var), level);
}

EffectClass classify_effect(const ModelFit& fit, const std::string& param, double level) {
  const auto [lo, hi] = wald_ci(fit, param, level);
  return classify_interval(lo, hi, level);
}

}  // namespace mobpart
