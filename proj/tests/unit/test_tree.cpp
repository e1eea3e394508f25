#include "doctest.h"

#include "mobpart/simgen.hpp"
#include "mobpart/tree.hpp"

#include <algorithm>
#include <set>

using namespace mobpart;

namespace {

ControlParams fast_control() {
  ControlParams c;
  c.nperm = 999;
  c.seed = 5;
  return c;
}

Column continuous(const std::string& name, std::vector<double> v) {
  Column c;
  c.name = name;
  c.values = std::move(v);
  c.missing.assign(c.values.size(), 0);
  return c;
}

}  // namespace

TEST_CASE("control validation names the field") {
  ControlParams c;
  c.minfit = 10;
  c.minbucket = 20;
  try {
    c.validate();
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.field() == "control.minfit");
  }
  c = ControlParams{};
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), DataError);
}

TEST_CASE("small samples give a single-node tree") {
  DGPSpec spec{DGP::Pred, 30, 0, 1};
  auto data = generate(spec);
  auto roles = simulated_roles(spec);
  auto fam = make_family(data, roles);
  auto tree = grow_tree(data, roles, *fam, fast_control());
  REQUIRE(tree.nodes.size() == 1);
  CHECK(tree.nodes[0].reason == LeafReason::MinFit);
}

TEST_CASE("constant partitioning variable is never selected") {
  DGPSpec spec{DGP::Pred, 200, 0, 2};
  auto d = generate(spec);
  std::vector<Column> cols = d.columns();
  for (auto& c : cols)
    if (c.name == "z1") std::fill(c.values.begin(), c.values.end(), 0.0);
  Dataset data(std::move(cols));
  auto roles = simulated_roles(spec);
  auto fam = make_family(data, roles);
  auto tree = grow_tree(data, roles, *fam, fast_control());
  CHECK(tree.nodes.size() == 1);
  CHECK(tree.nodes[0].reason == LeafReason::NoSignificantVariable);
}

TEST_CASE("predictive design: leaves partition the rows and refits reproduce leaf estimates") {
  DGPSpec spec{DGP::Pred, 400, 2, 3};
  auto data = generate(spec);
  auto roles = simulated_roles(spec);
  auto fam = make_family(data, roles);
  auto control = fast_control();
  auto tree = grow_tree(data, roles, *fam, control);
  REQUIRE(tree.nodes.size() >= 3);
  REQUIRE(tree.nodes[0].split);
  CHECK(tree.nodes[0].split->variable == "z1");
  CHECK(std::abs(tree.nodes[0].split->threshold) < 0.3);

  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (int id : tree.leaves()) {
    const auto& leaf = tree.node(id);
    total += leaf.rows.size();
    seen.insert(leaf.rows.begin(), leaf.rows.end());
    CHECK(leaf.depth <= control.maxdepth);
    auto refit = fam->fit(leaf.rows);
    CHECK((refit.theta - leaf.fit->theta).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK(total == tree.nodes[0].rows.size());
  CHECK(seen.size() == total);

  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) continue;
    REQUIRE(node.winner);
    CHECK(node.tests[*node.winner].p_adj <= control.alpha);
    CHECK(tree.node(node.left).rows.size() >= control.minbucket);
    CHECK(tree.node(node.right).rows.size() >= control.minbucket);
    CHECK_FALSE(node.annotation.empty());
  }
}

TEST_CASE("predict_node routes opposite z1 values to different leaves") {
  DGPSpec spec{DGP::Pred, 400, 0, 4};
  auto data = generate(spec);
  auto roles = simulated_roles(spec);
  auto fam = make_family(data, roles);
  auto tree = grow_tree(data, roles, *fam, fast_control());
  REQUIRE(tree.nodes.size() >= 3);

  std::vector<Column> cols{continuous("y", {0, 0}), continuous("x_A", {0, 1}), continuous("z1", {-2, 2})};
  Dataset probe(std::move(cols));
  CHECK(predict_node(tree, probe, 0) != predict_node(tree, probe, 1));
}

TEST_CASE("growing is deterministic for a fixed seed") {
  DGPSpec spec{DGP::Pred2, 200, 2, 5};
  auto data = generate(spec);
  auto roles = simulated_roles(spec);
  auto fam = make_family(data, roles);
  auto a = grow_tree(data, roles, *fam, fast_control());
  auto b = grow_tree(data, roles, *fam, fast_control());
  REQUIRE(a.nodes.size() == b.nodes.size());
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    CHECK(a.nodes[i].rows == b.nodes[i].rows);
    for (std::size_t k = 0; k < a.nodes[i].tests.size(); ++k)
      CHECK(a.nodes[i].tests[k].p_raw == b.nodes[i].tests[k].p_raw);
  }
}

TEST_CASE("missing split values follow the larger child") {
  DGPSpec spec{DGP::Pred, 300, 0, 6};
  auto d = generate(spec);
  std::vector<Column> cols = d.columns();
  for (auto& c : cols)
    if (c.name == "z1")
      for (std::size_t i = 0; i < 10; ++i) c.missing[i] = 1;
  Dataset data(std::move(cols));
  auto roles = simulated_roles(spec);
  auto fam = make_family(data, roles);
  auto tree = grow_tree(data, roles, *fam, fast_control());
  REQUIRE(tree.nodes[0].split);
  const auto& sp = *tree.nodes[0].split;
  CHECK(sp.n_missing == 10);
  CHECK(sp.describe(sp.missing_left).find(" or NA") != std::string::npos);
  CHECK(sp.describe(!sp.missing_left).find(" or NA") == std::string::npos);
  const auto& l = tree.node(tree.nodes[0].left);
  const auto& r = tree.node(tree.nodes[0].right);
  CHECK((sp.missing_left ? l.rows.size() >= r.rows.size() : r.rows.size() >= l.rows.size()));
}

TEST_CASE("subgroup predicates describe each leaf path") {
  DGPSpec spec{DGP::Pred, 300, 0, 7};
  auto data = generate(spec);
  auto roles = simulated_roles(spec);
  auto fam = make_family(data, roles);
  auto tree = grow_tree(data, roles, *fam, fast_control());
  auto subs = extract_subgroups(tree);
  CHECK(subs.size() == tree.leaves().size());
  for (const auto& s : subs) {
    CHECK(s.predicate.find("z1") != std::string::npos);
    CHECK(s.treatment.size() == 1);
    CHECK(s.path.size() == static_cast<std::size_t>(tree.node(s.node).depth));
  }
}
