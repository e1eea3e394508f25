#include "mobpart/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace mobpart {

const char* to_string(DGP d) {
  switch (d) {
    case DGP::Pred: return "pred";
    case DGP::Pred2: return "pred2";
    case DGP::Prog: return "prog";
    case DGP::Null: return "null";
  }
  return "?";
}

DGP dgp_from_string(const std::string& s) {
  for (auto d : {DGP::Pred, DGP::Pred2, DGP::Prog, DGP::Null})
    if (s == to_string(d)) return d;
  throw std::invalid_argument("unknown data-generating process '" + s + "'");
}

Schema simulated_schema(const DGPSpec& spec) {
  Schema s{{"y", ColumnKind::Continuous, {}}, {"x_A", ColumnKind::Continuous, {}}};
  for (std::size_t j = 1; j <= spec.J_noise + 1; ++j) s.push_back({"z" + std::to_string(j), ColumnKind::Continuous, {}});
  return s;
}

Dataset generate(const DGPSpec& spec) {
  if (spec.n < 4) throw std::invalid_argument("simulated sample size must be at least 4");
  const std::size_t nz = spec.J_noise + 1;
  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution arm(0.5);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  const double sigma = spec.dgp == DGP::Null ? 1.0 : std::sqrt(0.7);

  std::vector<Column> cols;
  for (const auto& cs : simulated_schema(spec)) {
    Column c;
    c.name = cs.name;
    c.kind = cs.kind;
    c.values.resize(spec.n);
    c.missing.assign(spec.n, 0);
    cols.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double x = arm(rng) ? 1.0 : 0.0;
    for (std::size_t j = 0; j < nz; ++j) cols[2 + j].values[i] = std_normal(rng);
    const double e = sigma * std_normal(rng);
    const double z1 = cols[2].values[i];
    const double neg = z1 < 0.0 ? 1.0 : 0.0, pos = z1 > 0.0 ? 1.0 : 0.0;
    double mean = 0.0;
    switch (spec.dgp) {
      case DGP::Pred: mean = 1.9 + 0.2 * x + 1.8 * neg + 3.6 * pos * x; break;
      case DGP::Pred2: mean = 1.9 + 0.2 * x + 1.8 * neg + 3.6 * neg * x; break;
      case DGP::Prog: mean = 2.0 * x + pos; break;
      case DGP::Null: mean = 1.0 + 0.5 * x; break;
    }
    cols[0].values[i] = mean + e;
    cols[1].values[i] = x;
  }
  return Dataset(std::move(cols));
}

RoleMap simulated_roles(const DGPSpec& spec) {
  RoleMap r;
  r.family = FamilyKind::Linear;
  r.endpoint = LinearEndpoint{"y", {}};
  r.treatment = "x_A";
  for (std::size_t j = 1; j <= spec.J_noise + 1; ++j) r.partitioning.push_back("z" + std::to_string(j));
  return r;
}

OracleSplit oracle_best_split(const Dataset& data, const RoleMap& roles, const ModelFamily& family,
                              const std::string& variable, std::size_t minbucket) {
  std::vector<std::string> needed = roles.endpoint_columns();
  needed.push_back(roles.treatment);
  const RowSet base = complete_cases(data, needed);
  const Column& z = data.column(variable);
  std::vector<std::size_t> obs;
  for (std::size_t i : base)
    if (!z.is_missing(i)) obs.push_back(i);
  std::vector<double> values;
  for (std::size_t i : obs) values.push_back(z.values[i]);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  OracleSplit best;
  best.objective = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t u = 0; u + 1 < values.size(); ++u) {
    std::vector<std::size_t> l, r;
    for (std::size_t i : obs) (z.values[i] <= values[u] ? l : r).push_back(i);
    if (l.size() < minbucket || r.size() < minbucket) continue;
    best.candidates.push_back(values[u]);
    double total = 0.0;
    try {
      total = family.fit(RowSet(std::move(l))).objective + family.fit(RowSet(std::move(r))).objective;
    } catch (const FitError&) {
      continue;
    }
    if (!found || total < best.objective - 1e-10 * std::max(1.0, std::abs(best.objective))) {
      found = true;
      best.objective = total;
      best.cutpoint = values[u];
      best.position = best.candidates.size() - 1;
    }
  }
  if (!found) throw std::runtime_error("no admissible cutpoint for '" + variable + "'");
  return best;
}

}  // namespace mobpart
