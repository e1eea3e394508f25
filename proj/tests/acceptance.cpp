// Acceptance suite: one line per criterion, non-zero exit if any fails.

#include "mobpart/cli.hpp"
#include "mobpart/models.hpp"
#include "mobpart/oracles.hpp"
#include "mobpart/report.hpp"
#include "mobpart/selftest.hpp"
#include "mobpart/simgen.hpp"
#include "mobpart/tree.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace mobpart;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Analytic scores against finite differences, score sums at the estimate.
Outcome criterion_scores() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<Check> checks = check_gradients(20, 101);
  const double secs = seconds_since(t0);
  double worst_fd = 0.0, worst_sum = 0.0;
  bool pass = secs < 60.0;
  for (const auto& c : checks) {
    pass = pass && c.pass;
    (c.name.find("finite") != std::string::npos ? worst_fd : worst_sum) =
        std::max(c.name.find("finite") != std::string::npos ? worst_fd : worst_sum, c.measured);
  }
  return {pass, fmt("%zu checks over 6 families, max FD rel err %.2e (<= 1e-6), max |sum|/N %.2e (<= 1e-6), %.1fs",
                    checks.size(), worst_fd, worst_sum, secs)};
}

// 2. Linear-model scores equal the residual closed form.
Outcome criterion_linear_formula() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 40 + 10 * static_cast<std::size_t>(rep);
    const Eigen::Index k = rep % 3;
    std::vector<double> y(n), x(n);
    Eigen::MatrixXd s(static_cast<Eigen::Index>(n), k);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(i % 2);
      for (Eigen::Index j = 0; j < k; ++j) s(static_cast<Eigen::Index>(i), j) = nd(rng);
      y[i] = 1.0 + 0.7 * x[i] + (k ? s.row(static_cast<Eigen::Index>(i)).sum() : 0.0) + nd(rng);
    }
    const ModelFit fit = fit_linear_treatment(y, x, s, RowSet::all(n));
    const Eigen::MatrixXd ref = oracle::linear_scores(y, x, s);
    const Eigen::ArrayXXd scale = ref.array().abs().max(1.0);
    worst = std::max(worst, ((fit.scores - ref).array().abs() / scale).maxCoeff());
  }
  return {worst <= 1e-12, fmt("10 datasets, max deviation %.2e (<= 1e-12)", worst)};
}

// 3. Permutation moments against enumeration; Monte Carlo p against exact p.
Outcome criterion_permutation() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Check> checks;
  for (std::size_t m : {5u, 6u, 7u}) {
    auto c = check_permutation(m, m == 7 ? 20 : 4, 50000, 303 + m);
    checks.insert(checks.end(), c.begin(), c.end());
  }
  const double secs = seconds_since(t0);
  double mom = 0.0, z = 0.0;
  bool pass = secs < 120.0;
  for (const auto& c : checks) {
    pass = pass && c.pass;
    if (c.name.find("moments") != std::string::npos)
      mom = std::max(mom, c.measured);
    else
      z = std::max(z, c.measured);
  }
  return {pass, fmt("moment error %.2e (<= 1e-10), worst |p_MC - p_exact| = %.2f SE (<= 3) over 20 cases at m=7, %.1fs",
                    mom, z, secs)};
}

// 4. Type-I error of the root split on the null design.
Outcome criterion_type_one() {
  const auto t0 = std::chrono::steady_clock::now();
  TypeIOptions o;
  o.nsim = 1000;
  o.n = 200;
  o.noise_vars = 5;
  o.alpha = 0.05;
  o.nperm = 999;
  o.seed = 404000;
  o.bound = 0.064;
  const Check c = check_type_one(o).front();
  return {c.pass, fmt("root split frequency %.3f over 1000 null samples (<= 0.064), %.1fs", c.measured, seconds_since(t0))};
}

ControlParams sim_control(std::uint64_t seed) {
  ControlParams c;
  c.seed = seed;
  return c;
}

struct SimRun {
  Dataset data;
  RoleMap roles;
  Tree tree;
};

SimRun grow_sim(DGP dgp, std::size_t n, std::size_t noise, std::uint64_t seed) {
  DGPSpec spec;
  spec.dgp = dgp;
  spec.n = n;
  spec.J_noise = noise;
  spec.seed = seed;
  Dataset data = generate(spec);
  RoleMap roles = simulated_roles(spec);
  const auto family = make_family(data, roles);
  Tree tree = grow_tree(data, roles, *family, sim_control(seed));
  return {std::move(data), std::move(roles), std::move(tree)};
}

const ParamEstimate& treatment_of(const TreeNode& n) {
  return *std::find_if(n.params.begin(), n.params.end(), [](const ParamEstimate& p) { return p.treatment; });
}

// Leaves below `id`, inclusive.
void collect_leaves(const Tree& t, int id, std::vector<int>& out) {
  const TreeNode& n = t.node(id);
  if (n.is_leaf()) {
    out.push_back(id);
    return;
  }
  collect_leaves(t, n.left, out);
  collect_leaves(t, n.right, out);
}

bool rows_of(const Tree& t, int id, const Dataset& d, std::vector<std::size_t>& rows) {
  rows.clear();
  for (std::size_t i = 0; i < d.n_rows(); ++i)
    if (predict_node(t, d, i) == id) rows.push_back(i);
  return !rows.empty();
}

// 5. Recovery of the predictive subgroup.
Outcome criterion_recovery() {
  int z1_beta = 0, z1_splits = 0, covered = 0;
  double cut_sum = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const SimRun run = grow_sim(DGP::Pred, 200, 4, 500000 + static_cast<std::uint64_t>(rep));
    const TreeNode& root = run.tree.node(1);
    if (root.is_leaf() || root.split->variable != "z1") continue;
    ++z1_splits;
    z1_beta += root.tests[*root.winner].block == ScoreBlock::Beta;
    cut_sum += root.split->threshold;

    // Each leaf's estimate against the true effect averaged over its rows.
    std::vector<int> leaves;
    collect_leaves(run.tree, 1, leaves);
    const Column& z1 = run.data.column("z1");
    bool ok = true;
    std::vector<std::size_t> rows;
    for (int id : leaves) {
      const TreeNode& leaf = run.tree.node(id);
      if (!leaf.fitted || !rows_of(run.tree, id, run.data, rows)) {
        ok = false;
        continue;
      }
      double truth = 0.0;
      for (std::size_t i : rows) truth += 0.2 + (z1.values[i] > 0.0 ? 3.6 : 0.0);
      truth /= static_cast<double>(rows.size());
      const ParamEstimate& b = treatment_of(leaf);
      ok = ok && std::abs(b.estimate - truth) <= 3.0 * b.se;
    }
    covered += ok;
  }
  const double mean_cut = z1_splits ? cut_sum / z1_splits : std::nan("");
  const bool pass = z1_beta >= 90 && mean_cut >= -0.25 && mean_cut <= 0.25 && covered >= 90;
  return {pass, fmt("z1 with beta block %d/100 (>= 90), mean cutpoint %.3f in [-0.25, 0.25], leaf coverage %d/%d (>= 90)",
                    z1_beta, mean_cut, covered, z1_splits)};
}

// 6. Block attribution for the second predictive and the prognostic designs.
Outcome criterion_attribution() {
  int pred2_alpha = 0, prog_alpha = 0, prog_splits = 0, prognostic_only = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const SimRun a = grow_sim(DGP::Pred2, 200, 4, 600000 + static_cast<std::uint64_t>(rep));
    const TreeNode& ra = a.tree.node(1);
    pred2_alpha += !ra.is_leaf() && ra.split->variable == "z1" && ra.tests[*ra.winner].block == ScoreBlock::Alpha;

    const SimRun b = grow_sim(DGP::Prog, 200, 4, 700000 + static_cast<std::uint64_t>(rep));
    const TreeNode& rb = b.tree.node(1);
    if (rb.is_leaf()) continue;
    ++prog_splits;
    prog_alpha += rb.split->variable == "z1" && rb.tests[*rb.winner].block == ScoreBlock::Alpha;
    prognostic_only += rb.annotation == "prognostic only";
  }
  const double share = prog_splits ? static_cast<double>(prognostic_only) / prog_splits : 0.0;
  const bool pass = pred2_alpha >= 80 && prog_alpha >= 80 && share >= 0.9;
  return {pass, fmt("pred2 alpha block %d/100 (>= 80); prog alpha block %d/100 (>= 80), prognostic-only %d/%d (>= 90%%)",
                    pred2_alpha, prog_alpha, prognostic_only, prog_splits)};
}

// 7. Score-based cutpoint against the refit oracle.
Outcome criterion_cutpoint_oracle() {
  // Separable step: mean shift of 2 above z = 0.5 on an equispaced grid.
  const std::size_t n = 41;
  std::vector<Column> cols(3);
  const char* names[3] = {"y", "x_A", "z1"};
  for (int c = 0; c < 3; ++c) {
    cols[c].name = names[c];
    cols[c].values.resize(n);
    cols[c].missing.assign(n, 0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double z = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    cols[2].values[i] = z;
    cols[1].values[i] = static_cast<double>(i % 2);
    cols[0].values[i] = (z > 0.5 ? 2.0 : 0.0) + 0.1 * ((i / 2) % 2 ? 1.0 : -1.0);
  }
  const Dataset step(std::move(cols));
  RoleMap roles;
  roles.family = FamilyKind::Linear;
  roles.endpoint = LinearEndpoint{"y", {}};
  roles.treatment = "x_A";
  roles.partitioning = {"z1"};
  ControlParams control;
  control.minbucket = 5;
  control.minfit = 10;
  const auto fam = make_family(step, roles);
  const ModelFit root = fam->fit(RowSet::all(n));
  const auto cut = select_cutpoint(step, root, "z1", control);
  const OracleSplit orc = oracle_best_split(step, roles, *fam, "z1", control.minbucket);
  const bool step_ok = cut && cut->threshold == orc.cutpoint && std::abs(orc.cutpoint - 0.5) < 1e-12;

  int agree = 0;
  for (int rep = 0; rep < 100; ++rep) {
    DGPSpec spec;
    spec.dgp = DGP::Pred;
    spec.n = 60;
    spec.seed = 800000 + static_cast<std::uint64_t>(rep);
    const Dataset d = generate(spec);
    const RoleMap r = simulated_roles(spec);
    const auto f = make_family(d, r);
    const ModelFit fit = f->fit(RowSet::all(d.n_rows()));
    ControlParams c;
    c.minbucket = 10;
    c.minfit = 20;
    const auto s = select_cutpoint(d, fit, "z1", c);
    const OracleSplit o = oracle_best_split(d, r, *f, "z1", c.minbucket);
    if (!s) continue;
    const auto pos = std::find(o.candidates.begin(), o.candidates.end(), s->threshold) - o.candidates.begin();
    agree += std::abs(static_cast<long>(pos) - static_cast<long>(o.position)) <= 1;
  }
  return {step_ok && agree >= 90,
          fmt("step instance: selected %.4f, oracle %.4f (exact); within one candidate on %d/100 pred samples at n=60 (>= 90)",
              cut ? cut->threshold : std::nan(""), orc.cutpoint, agree)};
}

// 8. Survival identities and independent optimizers.
Outcome criterion_survival() {
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double sums = 0.0, cox_err = 0.0, weib_err = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 60 + 10 * static_cast<std::size_t>(rep);
    std::vector<double> t(n), d(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(i % 2);
      const double w = std::log(-std::log(1.0 - u(rng)));
      const double tt = std::exp(0.5 + 0.6 * x[i] + 0.8 * w);
      const double c = 4.0 * u(rng) + 0.5;
      t[i] = std::min(tt, c);
      d[i] = tt <= c ? 1.0 : 0.0;
    }
    const RowSet rows = RowSet::all(n);
    const ModelFit cox = fit_cox(t, d, x, rows);
    const ModelFit wb = fit_weibull(t, d, x, rows);
    sums = std::max({sums, std::abs(cox.scores.col(0).sum()), std::abs(cox.scores.col(1).sum())});
    cox_err = std::max(cox_err, std::abs(cox.theta(0) - oracle::cox_bisection(t, d, x)));
    weib_err = std::max(weib_err, (wb.theta - oracle::weibull_grid(t, d, x)).cwiseAbs().maxCoeff());
  }
  return {sums <= 1e-8 && cox_err <= 1e-8 && weib_err <= 1e-4,
          fmt("residual sums %.2e (<= 1e-8), Cox vs bisection %.2e (<= 1e-8), Weibull vs grid %.2e (<= 1e-4)", sums,
              cox_err, weib_err)};
}

// 9. Wald intervals and effect classes for published estimates.
Outcome criterion_wald() {
  struct Row {
    double est, lo, hi;
    Effect effect;
  };
  // Coloured cells, then uncoloured cells whose printed interval is symmetric
  // about the estimate to rounding precision.
  const std::vector<Row> rows = {
      {0.84, 0.08, 1.59, Effect::Positive},  {-0.37, -0.72, -0.03, Effect::Negative},
      {1.01, 0.27, 1.77, Effect::Positive},  {0.52, 0.03, 1.02, Effect::Positive},
      {0.62, 0.01, 1.23, Effect::Positive},  {0.04, -0.40, 0.47, Effect::None},
      {0.33, -0.33, 1.00, Effect::None},     {-0.27, -1.15, 0.60, Effect::None},
      {-0.06, -0.60, 0.48, Effect::None},    {0.22, -0.94, 1.40, Effect::None},
      {-0.26, -0.76, 0.23, Effect::None},    {0.49, -0.11, 1.07, Effect::None},
      {0.57, -0.06, 1.21, Effect::None},     {-0.36, -0.85, 0.12, Effect::None},
      {-0.54, -1.33, 0.25, Effect::None},    {0.14, -0.22, 0.49, Effect::None},
      {-0.28, -0.74, 0.17, Effect::None},    {-0.07, -0.44, 0.30, Effect::None},
      {0.72, -0.11, 1.55, Effect::None},     {-0.65, -1.46, 0.15, Effect::None},
  };
  double worst = 0.0;
  int class_ok = 0;
  for (const Row& r : rows) {
    const double se = (r.hi - r.lo) / (2.0 * 1.959964);
    ModelFit fit;
    fit.param_names = {"beta"};
    fit.theta = Eigen::VectorXd::Constant(1, r.est);
    fit.vcov = Eigen::MatrixXd::Constant(1, 1, se * se);
    const auto [lo, hi] = wald_ci(fit, "beta");
    // Compare at the two decimals the table prints.
    const auto printed = [](double v) { return std::round(v * 100.0) / 100.0; };
    worst = std::max({worst, std::abs(printed(lo) - r.lo), std::abs(printed(hi) - r.hi)});
    class_ok += classify_effect(fit, "beta").label == r.effect;
  }
  const int total = static_cast<int>(rows.size());
  return {worst <= 0.01 + 1e-9 && class_ok == total,
          fmt("%d published intervals, max printed-bound deviation %.4f (<= 0.01), classes %d/%d", total, worst, class_ok, total)};
}

// 10. Byte-identical tree.json across thread counts.
Outcome criterion_determinism() {
  const auto dir = std::filesystem::temp_directory_path() / ("mobpart-accept-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  DGPSpec spec;
  spec.dgp = DGP::Pred;
  spec.n = 300;
  spec.J_noise = 3;
  spec.seed = 1010;
  {
    std::ofstream f(dir / "data.csv");
    write_csv(f, generate(spec));
  }
  {
    std::ofstream f(dir / "cfg.json");
    f << R"({"data": "data.csv", "schema": [{"name": "y", "kind": "continuous"}, {"name": "x_A", "kind": "continuous"},
      {"name": "z1", "kind": "continuous"}, {"name": "z2", "kind": "continuous"}, {"name": "z3", "kind": "continuous"},
      {"name": "z4", "kind": "continuous"}], "family": "linear", "endpoint": {"response": "y"}, "treatment": "x_A",
      "partitioning": ["z1", "z2", "z3", "z4"], "control": {"seed": 17, "nperm": 2999}, "output": {"formats": ["json"]}})";
  }
  std::vector<std::string> outputs;
  int failures = 0;
  for (const char* threads : {"1", "2", "3", "4"}) {
    const std::string out = (dir / (std::string("out") + threads)).string();
    const std::string cfg = (dir / "cfg.json").string();
    const char* argv[] = {"mobpart", "analyze", "--config", cfg.c_str(), "--threads", threads, "--out", out.c_str()};
    std::ostringstream so, se;
    failures += run_cli(8, argv, so, se) != 0;
    std::ifstream f(std::filesystem::path(out) / "tree.json", std::ios::binary);
    std::stringstream buf;
    buf << f.rdbuf();
    outputs.push_back(buf.str());
  }
  std::filesystem::remove_all(dir);
  const bool same = failures == 0 && !outputs[0].empty() &&
                    std::all_of(outputs.begin(), outputs.end(), [&](const std::string& s) { return s == outputs[0]; });
  return {same, fmt("tree.json identical for --threads 1,2,3,4: %s (%zu bytes)", same ? "yes" : "no", outputs[0].size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 score correctness", criterion_scores},
      {"2 linear score closed form", criterion_linear_formula},
      {"3 permutation moments and p-values", criterion_permutation},
      {"4 type-I error control", criterion_type_one},
      {"5 predictive subgroup recovery", criterion_recovery},
      {"6 block attribution", criterion_attribution},
      {"7 cutpoint oracle equivalence", criterion_cutpoint_oracle},
      {"8 survival identities", criterion_survival},
      {"9 Wald interval reproduction", criterion_wald},
      {"10 thread-count determinism", criterion_determinism},
  };
  const char* only = argc > 1 ? argv[1] : nullptr;
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (only && name.rfind(std::string(only) + " ", 0) != 0) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << "criterion " << name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
