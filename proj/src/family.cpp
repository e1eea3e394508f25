#include "mobpart/models.hpp"

#include <cmath>

namespace mobpart {

namespace {

std::vector<double> numeric_column(const Dataset& data, const std::string& name) {
  return data.column(name).values;
}

class GaussianLogFamily final : public ModelFamily {
 public:
  GaussianLogFamily(const Dataset& data, const GaussianLogEndpoint& ep, std::vector<double> x)
      : y_(numeric_column(data, ep.response)), offset_(numeric_column(data, ep.offset)), x_(std::move(x)) {
    for (double& o : offset_) o = std::log(o);
  }
  FamilyKind kind() const override { return FamilyKind::GaussianLog; }
  ModelFit fit(const RowSet& rows) const override { return fit_gaussian_log(y_, offset_, x_, rows); }

 private:
  std::vector<double> y_, offset_, x_;
};

class LinearFamily final : public ModelFamily {
 public:
  LinearFamily(const Dataset& data, const LinearEndpoint& ep, std::vector<double> x)
      : y_(numeric_column(data, ep.response)), x_(std::move(x)) {
    std::vector<std::vector<double>> cols;
    for (const auto& s : ep.strata) {
      const Column& c = data.column(s);
      if (c.kind == ColumnKind::Nominal) {
        // treatment contrasts against the first level
        for (std::size_t l = 1; l < c.levels.size(); ++l) {
          std::vector<double> d(c.size());
          for (std::size_t i = 0; i < c.size(); ++i) d[i] = c.is_missing(i) ? std::nan("") : double(c.values[i] == double(l));
          cols.push_back(std::move(d));
          names_.push_back(s + "=" + c.levels[l]);
        }
      } else {
        cols.push_back(c.values);
        names_.push_back(s);
      }
    }
    strata_.resize(static_cast<Eigen::Index>(y_.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (std::size_t i = 0; i < y_.size(); ++i)
        strata_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols[j][i];
  }
  FamilyKind kind() const override { return FamilyKind::Linear; }
  ModelFit fit(const RowSet& rows) const override {
    ModelFit f = fit_linear_treatment(y_, x_, strata_, rows);
    for (std::size_t j = 0; j < names_.size(); ++j) f.param_names[2 + j] = "gamma_" + names_[j];
    f.score_names = f.param_names;
    return f;
  }

 private:
  std::vector<double> y_, x_;
  Eigen::MatrixXd strata_;
  std::vector<std::string> names_;
};

class PolrFamily final : public ModelFamily {
 public:
  PolrFamily(const Dataset& data, const std::string& item, std::vector<double> x)
      : item_(numeric_column(data, item)), x_(std::move(x)) {}
  FamilyKind kind() const override { return FamilyKind::Polr; }
  ModelFit fit(const RowSet& rows) const override { return fit_prop_odds(item_, x_, rows); }

 private:
  std::vector<double> item_, x_;
};

class EnsembleFamily final : public ModelFamily {
 public:
  EnsembleFamily(const Dataset& data, const std::vector<std::pair<std::string, std::string>>& items,
                 std::vector<double> x)
      : x_(std::move(x)) {
    for (const auto& [a, b] : items) {
      names_.push_back(a);
      followup_.push_back(numeric_column(data, a));
      baseline_.push_back(numeric_column(data, b));
    }
  }
  FamilyKind kind() const override { return FamilyKind::PolrStratified; }
  ModelFit fit(const RowSet& rows) const override {
    std::vector<OrdinalItemData> items;
    for (std::size_t k = 0; k < names_.size(); ++k) items.push_back({names_[k], followup_[k], baseline_[k]});
    return fit_strat_prop_odds_ensemble(items, x_, rows);
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> followup_, baseline_;
  std::vector<double> x_;
};

class SurvivalFamily final : public ModelFamily {
 public:
  SurvivalFamily(const Dataset& data, const SurvivalEndpoint& ep, std::vector<double> x, bool cox)
      : time_(numeric_column(data, ep.time)), event_(numeric_column(data, ep.event)), x_(std::move(x)), cox_(cox) {}
  FamilyKind kind() const override { return cox_ ? FamilyKind::Cox : FamilyKind::Weibull; }
  ModelFit fit(const RowSet& rows) const override {
    return cox_ ? fit_cox(time_, event_, x_, rows) : fit_weibull(time_, event_, x_, rows);
  }

 private:
  std::vector<double> time_, event_, x_;
  bool cox_;
};

}  // namespace

std::unique_ptr<ModelFamily> make_family(const Dataset& data, const RoleMap& roles) {
  validate_roles(data, roles);
  std::vector<double> x = treatment_indicator(data, roles.treatment);
  const FamilyKind fk = roles.family;
  if (const auto* g = std::get_if<GaussianLogEndpoint>(&roles.endpoint))
    return std::make_unique<GaussianLogFamily>(data, *g, std::move(x));
  if (const auto* l = std::get_if<LinearEndpoint>(&roles.endpoint))
    return std::make_unique<LinearFamily>(data, *l, std::move(x));
  if (const auto* o = std::get_if<OrdinalItemEndpoint>(&roles.endpoint)) {
    if (fk == FamilyKind::Polr && o->baseline.empty())
      return std::make_unique<PolrFamily>(data, o->item, std::move(x));
    if (o->baseline.empty()) throw DataError("stratified proportional odds needs a baseline column", "endpoint.baseline");
    return std::make_unique<EnsembleFamily>(data, std::vector<std::pair<std::string, std::string>>{{o->item, o->baseline}},
                                            std::move(x));
  }
  if (const auto* e = std::get_if<OrdinalEnsembleEndpoint>(&roles.endpoint))
    return std::make_unique<EnsembleFamily>(data, e->items, std::move(x));
  const auto& s = std::get<SurvivalEndpoint>(roles.endpoint);
  return std::make_unique<SurvivalFamily>(data, s, std::move(x), fk == FamilyKind::Cox);
}

}  // namespace mobpart
