#include "doctest.h"

#include "mobpart/models.hpp"
#include "mobpart/simgen.hpp"

#include <cmath>

using namespace mobpart;

TEST_CASE("generate is deterministic and names its columns") {
  DGPSpec spec{DGP::Pred, 50, 2, 9};
  auto a = generate(spec), b = generate(spec);
  CHECK(a.column("y").values == b.column("y").values);
  CHECK(a.has("x_A"));
  CHECK(a.has("z3"));
  CHECK_FALSE(a.has("z4"));
  spec.seed = 10;
  CHECK(generate(spec).column("y").values != a.column("y").values);
}

TEST_CASE("cell means follow the predictive design") {
  DGPSpec spec{DGP::Pred, 40000, 0, 11};
  auto d = generate(spec);
  const auto& y = d.column("y").values;
  const auto& x = d.column("x_A").values;
  const auto& z = d.column("z1").values;
  double s = 0;
  int n = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (x[i] == 1 && z[i] > 0) {
      s += y[i];
      ++n;
    }
  CHECK(s / n == doctest::Approx(1.9 + 0.2 + 3.6).epsilon(0.01));
}

TEST_CASE("prognostic design has a treatment effect of 2") {
  DGPSpec spec{DGP::Prog, 20000, 0, 12};
  auto d = generate(spec);
  auto fam = make_family(d, simulated_roles(spec));
  auto fit = fam->fit(RowSet::all(d.n_rows()));
  CHECK(fit.theta[fit.param_index("beta")] == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("oracle split respects minbucket") {
  DGPSpec spec{DGP::Pred, 20, 0, 13};
  auto d = generate(spec);
  std::vector<Column> cols = d.columns();
  for (auto& c : cols)
    if (c.name == "z1")
      for (std::size_t i = 0; i < 20; ++i) c.values[i] = static_cast<double>(i);
  Dataset data(std::move(cols));
  auto roles = simulated_roles(spec);
  auto fam = make_family(data, roles);
  auto o = oracle_best_split(data, roles, *fam, "z1", 5);
  CHECK(o.candidates.front() == 4.0);
  CHECK(o.candidates.back() == 14.0);
  CHECK(o.cutpoint == o.candidates[o.position]);
  CHECK_THROWS(oracle_best_split(data, roles, *fam, "z1", 15));
}

TEST_CASE("dgp names round-trip") {
  for (auto d : {DGP::Pred, DGP::Pred2, DGP::Prog, DGP::Null}) CHECK(dgp_from_string(to_string(d)) == d);
  CHECK_THROWS(dgp_from_string("other"));
}
