#include "mobpart/tree.hpp"
#include "mobpart/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace mobpart {

void ControlParams::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("alpha must lie in (0, 1)", "control.alpha");
  if (maxdepth < 0) throw DataError("maxdepth must be non-negative", "control.maxdepth");
  if (minbucket < 1) throw DataError("minbucket must be at least 1", "control.minbucket");
  if (minfit < 2 * minbucket) throw DataError("minfit must be at least 2 * minbucket", "control.minfit");
  if (nperm < 1) throw DataError("nperm must be positive", "control.nperm");
  if (threads < 1) throw DataError("threads must be positive", "control.threads");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw DataError("ci_level must lie in (0, 1)", "control.ci_level");
}

bool SplitSpec::goes_left(const Column& z, std::size_t row) const {
  if (z.is_missing(row)) return missing_left;
  if (kind == ColumnKind::Nominal)
    return std::find(left_levels.begin(), left_levels.end(), static_cast<int>(z.values[row])) != left_levels.end();
  return z.values[row] <= threshold;
}

namespace {

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

std::string SplitSpec::describe(bool left) const {
  std::string out = variable;
  if (kind == ColumnKind::Nominal) {
    out += left ? " in {" : " not in {";
    for (std::size_t k = 0; k < left_levels.size(); ++k) {
      if (k) out += ",";
      out += levels.at(static_cast<std::size_t>(left_levels[k]));
    }
    out += "}";
  } else if (kind == ColumnKind::Ordinal) {
    out += (left ? " <= " : " > ") + levels.at(static_cast<std::size_t>(threshold));
  } else {
    out += (left ? " <= " : " > ") + format_number(threshold);
  }
  if (n_missing > 0 && missing_left == left) out += " or NA";
  return out;
}

const char* to_string(LeafReason r) {
  switch (r) {
    case LeafReason::None: return "none";
    case LeafReason::NoSignificantVariable: return "no-significant-variable";
    case LeafReason::MaxDepth: return "maxdepth";
    case LeafReason::MinFit: return "minfit";
    case LeafReason::NoAdmissibleCutpoint: return "no-admissible-cutpoint";
    case LeafReason::FitFailure: return "fit-failure";
  }
  return "?";
}

LeafReason leaf_reason_from_string(const std::string& s) {
  for (auto r : {LeafReason::None, LeafReason::NoSignificantVariable, LeafReason::MaxDepth, LeafReason::MinFit,
                 LeafReason::NoAdmissibleCutpoint, LeafReason::FitFailure})
    if (s == to_string(r)) return r;
  throw std::invalid_argument("unknown leaf reason '" + s + "'");
}

std::vector<ParamEstimate> summarize_fit(const ModelFit& fit, double level) {
  std::vector<ParamEstimate> out;
  for (std::size_t k = 0; k < fit.param_names.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    ParamEstimate p;
    p.name = fit.param_names[k];
    p.estimate = fit.theta(i);
    const double var = fit.vcov(i, i);
    p.treatment = std::find(fit.treatment_params.begin(), fit.treatment_params.end(), i) != fit.treatment_params.end();
    if (std::isfinite(var) && var > 0.0) {
      p.se = std::sqrt(var);
      std::tie(p.lower, p.upper) = wald_interval(p.estimate, p.se, level);
      p.effect = classify_interval(p.lower, p.upper, level).label;
    } else {
      p.se = p.lower = p.upper = std::nan("");
    }
    out.push_back(p);
  }
  return out;
}

std::vector<int> Tree::leaves() const {
  std::vector<int> out;
  for (const auto& n : nodes)
    if (n.is_leaf()) out.push_back(n.id);
  return out;
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows,
                       const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(static_cast<Eigen::Index>(rows[r]), cols[c]);
  return out;
}

std::vector<int> gather_strata(const std::vector<int>& strata, const std::vector<std::size_t>& pos) {
  if (strata.empty()) return {};
  std::vector<int> out(pos.size());
  for (std::size_t k = 0; k < pos.size(); ++k) out[k] = strata[pos[k]];
  return out;
}

// Score columns of one block split by group, in group order. Groups with no
// column in the block are absent.
std::vector<std::pair<int, std::vector<Eigen::Index>>> block_groups(const ModelFit& fit,
                                                                    const std::vector<Eigen::Index>& cols) {
  std::map<int, std::vector<Eigen::Index>> by;
  for (Eigen::Index c : cols) by[fit.score_group[static_cast<std::size_t>(c)]].push_back(c);
  return {by.begin(), by.end()};
}

// Joint stratum of every group that carries strata; empty when none does.
std::vector<int> cross_strata(const ModelFit& fit, const std::vector<std::size_t>& pos) {
  std::vector<const std::vector<int>*> used;
  for (const auto& s : fit.group_strata)
    if (!s.empty()) used.push_back(&s);
  if (used.empty()) return {};
  std::map<std::vector<int>, int> ids;
  std::vector<int> out(pos.size());
  std::vector<int> key(used.size());
  for (std::size_t k = 0; k < pos.size(); ++k) {
    for (std::size_t g = 0; g < used.size(); ++g) key[g] = (*used[g])[pos[k]];
    out[k] = ids.emplace(key, static_cast<int>(ids.size())).first->second;
  }
  return out;
}

// Positions (into fit.rows) where z is observed.
std::vector<std::size_t> observed_positions(const Column& z, const RowSet& rows) {
  std::vector<std::size_t> pos;
  for (std::size_t k = 0; k < rows.size(); ++k)
    if (!z.is_missing(rows[k])) pos.push_back(k);
  return pos;
}

}  // namespace

VariableSelection select_variable(const Dataset& data, const ModelFit& fit,
                                  const std::vector<std::string>& partitioning,
                                  const ControlParams& control, std::uint64_t node_seed) {
  VariableSelection out;
  const std::vector<Eigen::Index>* block_cols[2] = {&fit.alpha_cols, &fit.beta_cols};

  for (std::size_t j = 0; j < partitioning.size(); ++j) {
    const Column& z = data.column(partitioning[j]);
    const std::vector<std::size_t> pos = observed_positions(z, fit.rows);
    if (pos.size() < control.minbucket || pos.size() < 2) continue;
    std::vector<std::size_t> rows(pos.size());
    for (std::size_t k = 0; k < pos.size(); ++k) rows[k] = fit.rows[pos[k]];
    const double z0 = z.values[rows[0]];
    if (std::all_of(rows.begin(), rows.end(), [&](std::size_t i) { return z.values[i] == z0; })) continue;

    const Eigen::MatrixXd g = regressor_matrix(z, rows);
    const std::vector<int> perm_strata = cross_strata(fit, pos);
    for (int b = 0; b < 2; ++b) {
      std::vector<ScoreComponent> comps;
      for (const auto& [grp, cols] : block_groups(fit, *block_cols[b]))
        comps.push_back({gather(fit.scores, pos, cols),
                         gather_strata(fit.group_strata[static_cast<std::size_t>(grp)], pos)});
      if (comps.empty()) continue;
      PermOptions opts;
      opts.nperm = control.nperm;
      opts.exhaustive_threshold = control.exhaustive_threshold;
      opts.seed = node_seed;
      opts.stream = static_cast<std::uint32_t>(2 * j + static_cast<std::size_t>(b));
      opts.chisq = control.chisq;
      opts.threads = control.threads;
      InstabilityTestResult r = perm_pvalue(g, comps, perm_strata, opts);
      r.variable = partitioning[j];
      r.block = b == 0 ? ScoreBlock::Alpha : ScoreBlock::Beta;
      out.tests.push_back(std::move(r));
    }
  }

  std::vector<double> raw;
  for (const auto& t : out.tests) raw.push_back(t.p_raw);
  const std::vector<double> adj = bonferroni_adjust(raw);
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < out.tests.size(); ++k) {
    out.tests[k].p_adj = adj[k];
    if (!best) {
      best = k;
      continue;
    }
    const auto& cur = out.tests[k];
    const auto& top = out.tests[*best];
    if (cur.p_adj < top.p_adj ||
        (cur.p_adj == top.p_adj && cur.variable == top.variable && cur.p_asymptotic < top.p_asymptotic))
      best = k;
  }
  if (best && out.tests[*best].p_adj <= control.alpha) out.winner = best;
  return out;
}

namespace {

// Two-sample quadratic statistic of a left/right indicator against one score
// matrix, with rows exchangeable within strata. Left membership is built up
// incrementally.
class TwoSampleScorer {
 public:
  TwoSampleScorer(Eigen::MatrixXd h, const std::vector<int>& strata) : h_(std::move(h)) {
    const Eigen::Index m = h_.rows(), q = h_.cols();
    stratum_.assign(static_cast<std::size_t>(m), 0);
    if (!strata.empty()) {
      std::map<int, int> ids;
      for (std::size_t k = 0; k < strata.size(); ++k)
        stratum_[k] = ids.emplace(strata[k], static_cast<int>(ids.size())).first->second;
    }
    const std::size_t s_count = 1 + static_cast<std::size_t>(*std::max_element(stratum_.begin(), stratum_.end()));
    size_.assign(s_count, 0.0);
    mean_.assign(s_count, Eigen::VectorXd::Zero(q));
    var_.assign(s_count, Eigen::MatrixXd::Zero(q, q));
    for (Eigen::Index k = 0; k < m; ++k) {
      const int s = stratum_[static_cast<std::size_t>(k)];
      size_[s] += 1.0;
      mean_[s] += h_.row(k).transpose();
    }
    for (std::size_t s = 0; s < s_count; ++s) mean_[s] /= size_[s];
    for (Eigen::Index k = 0; k < m; ++k) {
      const int s = stratum_[static_cast<std::size_t>(k)];
      const Eigen::VectorXd d = h_.row(k).transpose() - mean_[s];
      var_[s].noalias() += d * d.transpose();
    }
    for (std::size_t s = 0; s < s_count; ++s) var_[s] /= size_[s];
    if (s_count == 1) single_pinv_ = pseudo_inverse(var_[0]);
    reset();
  }

  void reset() {
    t_ = Eigen::VectorXd::Zero(h_.cols());
    left_.assign(size_.size(), 0.0);
  }

  void move_left(std::size_t k) {
    t_ += h_.row(static_cast<Eigen::Index>(k)).transpose();
    left_[stratum_[k]] += 1.0;
  }

  double statistic() const {
    Eigen::VectorXd d = t_;
    for (std::size_t s = 0; s < size_.size(); ++s) d -= left_[s] * mean_[s];
    if (size_.size() == 1) {
      const double m = size_[0], nl = left_[0];
      if (nl <= 0.0 || nl >= m || single_pinv_.rank == 0) return 0.0;
      return std::max(0.0, d.dot(single_pinv_.inverse * d) * (m - 1.0) / (nl * (m - nl)));
    }
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(h_.cols(), h_.cols());
    for (std::size_t s = 0; s < size_.size(); ++s) {
      const double m = size_[s], nl = left_[s];
      if (m < 2.0 || nl <= 0.0 || nl >= m) continue;
      sigma += var_[s] * (nl * (m - nl) / (m - 1.0));
    }
    const PseudoInverse pinv = pseudo_inverse(sigma);
    if (pinv.rank == 0) return 0.0;
    return std::max(0.0, d.dot(pinv.inverse * d));
  }

 private:
  Eigen::MatrixXd h_;
  std::vector<int> stratum_;
  std::vector<double> size_, left_;
  std::vector<Eigen::VectorXd> mean_;
  std::vector<Eigen::MatrixXd> var_;
  PseudoInverse single_pinv_;
  Eigen::VectorXd t_;
};

bool improves(double c, double best) { return c > best + 1e-10 * std::max(1.0, best); }

}  // namespace

std::optional<SplitSpec> select_cutpoint(const Dataset& data, const ModelFit& fit,
                                         const std::string& variable, const ControlParams& control) {
  const Column& z = data.column(variable);
  const std::vector<std::size_t> pos = observed_positions(z, fit.rows);
  const std::size_t m = pos.size();
  if (m < 2 * control.minbucket || m < 2) return std::nullopt;

  std::vector<Eigen::Index> both = fit.alpha_cols;
  both.insert(both.end(), fit.beta_cols.begin(), fit.beta_cols.end());
  std::sort(both.begin(), both.end());
  std::vector<TwoSampleScorer> scorers;
  for (const auto& [grp, cols] : block_groups(fit, both))
    scorers.emplace_back(gather(fit.scores, pos, cols), gather_strata(fit.group_strata[static_cast<std::size_t>(grp)], pos));
  auto reset = [&] {
    for (auto& s : scorers) s.reset();
  };
  auto move_left = [&](std::size_t k) {
    for (auto& s : scorers) s.move_left(k);
  };
  auto statistic = [&] {
    double c = 0.0;
    for (const auto& s : scorers) c += s.statistic();
    return c;
  };

  std::vector<double> zv(m);
  for (std::size_t k = 0; k < m; ++k) zv[k] = z.values[fit.rows[pos[k]]];

  SplitSpec best;
  best.variable = variable;
  best.kind = z.kind;
  best.levels = z.levels;
  double best_c = -1.0;
  std::size_t best_left = 0;

  auto consider = [&](std::size_t n_left, auto&& fill) {
    if (n_left < control.minbucket || m - n_left < control.minbucket) return;
    const double c = statistic();
    if (best_c < 0.0 || improves(c, best_c)) {
      best_c = c;
      best_left = n_left;
      fill();
    }
  };

  if (z.kind != ColumnKind::Nominal) {
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return zv[a] < zv[b]; });
    reset();
    std::size_t k = 0;
    while (k < m) {
      const double v = zv[order[k]];
      while (k < m && zv[order[k]] == v) move_left(order[k++]);
      if (k == m) break;
      consider(k, [&] { best.threshold = v; });
    }
  } else {
    std::vector<int> present;
    for (double v : zv) present.push_back(static_cast<int>(v));
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    const std::size_t L = present.size();
    if (L < 2) return std::nullopt;

    auto evaluate_set = [&](const std::vector<int>& left_set) {
      reset();
      std::size_t n_left = 0;
      for (std::size_t k = 0; k < m; ++k)
        if (std::binary_search(left_set.begin(), left_set.end(), static_cast<int>(zv[k]))) {
          move_left(k);
          ++n_left;
        }
      consider(n_left, [&] { best.left_levels = left_set; });
    };

    if (L <= 10) {
      // The first present level always goes left, so each partition is seen once.
      const std::uint32_t count = 1u << (L - 1);
      for (std::uint32_t mask = 0; mask + 1 < count; ++mask) {
        std::vector<int> left_set{present[0]};
        for (std::size_t l = 1; l < L; ++l)
          if (mask & (1u << (l - 1))) left_set.push_back(present[l]);
        evaluate_set(left_set);
      }
    } else {
      // Order levels by the mean treatment-block score and cut along that order.
      std::map<int, std::pair<double, double>> acc;
      for (std::size_t k = 0; k < m; ++k) {
        double s = 0.0;
        for (Eigen::Index c : fit.beta_cols) s += fit.scores(static_cast<Eigen::Index>(pos[k]), c);
        auto& a = acc[static_cast<int>(zv[k])];
        a.first += s;
        a.second += 1.0;
      }
      std::vector<int> ordered = present;
      std::stable_sort(ordered.begin(), ordered.end(), [&](int a, int b) {
        return acc[a].first / acc[a].second < acc[b].first / acc[b].second;
      });
      for (std::size_t cut = 1; cut < L; ++cut) {
        std::vector<int> left_set(ordered.begin(), ordered.begin() + static_cast<std::ptrdiff_t>(cut));
        std::sort(left_set.begin(), left_set.end());
        evaluate_set(left_set);
      }
    }
  }

  if (best_c < 0.0) return std::nullopt;
  best.statistic = best_c;
  best.missing_left = best_left >= m - best_left;
  best.n_missing = fit.rows.size() - m;
  return best;
}

namespace {

std::string annotate(const TreeNode& left, const TreeNode& right) {
  if (!left.fitted || !right.fitted) return "undetermined";
  for (const auto& a : left.params) {
    if (!a.treatment) continue;
    for (const auto& b : right.params) {
      if (b.name != a.name || !b.treatment) continue;
      if (!std::isfinite(a.se) || !std::isfinite(b.se)) continue;
      const bool disjoint = a.upper < b.lower || b.upper < a.lower;
      if (disjoint || a.effect != b.effect) return "predictive (possibly also prognostic)";
    }
  }
  return "prognostic only";
}

}  // namespace

Tree grow_tree(const Dataset& data, const RoleMap& roles, const ModelFamily& family,
               const ControlParams& control) {
  control.validate();
  Tree tree;
  tree.family = to_string(roles.family);
  tree.treatment = roles.treatment;
  tree.partitioning = roles.partitioning;
  tree.control = control;
  tree.n_rows = data.n_rows();

  std::vector<std::string> needed = roles.endpoint_columns();
  needed.push_back(roles.treatment);
  TreeNode root;
  root.id = 1;
  root.rows = complete_cases(data, needed);
  tree.nodes.push_back(std::move(root));

  for (std::size_t q = 0; q < tree.nodes.size(); ++q) {
    TreeNode node = tree.nodes[q];
    node.n = node.rows.size();
    try {
      auto fit = std::make_shared<ModelFit>(family.fit(node.rows));
      node.fitted = true;
      node.converged = fit->converged;
      node.objective = fit->objective;
      node.params = summarize_fit(*fit, control.ci_level);
      node.fit = std::move(fit);
    } catch (const FitError& e) {
      if (node.id == 1) throw;
      node.fit_error = e.what();
    }

    if (!node.fitted || !node.converged) {
      node.reason = LeafReason::FitFailure;
      if (node.fitted && node.fit_error.empty()) node.fit_error = "optimizer did not converge";
    } else if (node.rows.size() < control.minfit) {
      node.reason = LeafReason::MinFit;
    } else if (node.depth >= control.maxdepth) {
      node.reason = LeafReason::MaxDepth;
    } else {
      VariableSelection sel =
          select_variable(data, *node.fit, roles.partitioning, control, control.seed ^ static_cast<std::uint64_t>(node.id));
      node.tests = std::move(sel.tests);
      node.winner = sel.winner;
      if (!sel.winner) {
        node.reason = LeafReason::NoSignificantVariable;
      } else {
        std::optional<SplitSpec> split =
            select_cutpoint(data, *node.fit, node.tests[*sel.winner].variable, control);
        if (!split) {
          node.reason = LeafReason::NoAdmissibleCutpoint;
        } else {
          const Column& z = data.column(split->variable);
          std::vector<std::size_t> l, r;
          for (std::size_t i : node.rows) (split->goes_left(z, i) ? l : r).push_back(i);
          TreeNode a, b;
          a.depth = b.depth = node.depth + 1;
          a.id = static_cast<int>(tree.nodes.size()) + 1;
          b.id = a.id + 1;
          a.rows = RowSet(std::move(l));
          b.rows = RowSet(std::move(r));
          node.split = std::move(split);
          node.left = a.id;
          node.right = b.id;
          tree.nodes.push_back(std::move(a));
          tree.nodes.push_back(std::move(b));
        }
      }
    }
    tree.nodes[q] = std::move(node);
  }

  for (auto& n : tree.nodes)
    if (!n.is_leaf()) n.annotation = annotate(tree.node(n.left), tree.node(n.right));
  return tree;
}

int predict_node(const Tree& tree, const Dataset& data, std::size_t row) {
  const TreeNode* n = &tree.node(1);
  while (!n->is_leaf()) {
    const Column& z = data.column(n->split->variable);
    n = &tree.node(n->split->goes_left(z, row) ? n->left : n->right);
  }
  return n->id;
}

std::vector<SubgroupReport> extract_subgroups(const Tree& tree) {
  std::vector<int> parent(tree.nodes.size() + 1, 0);
  for (const auto& n : tree.nodes)
    if (!n.is_leaf()) parent[static_cast<std::size_t>(n.left)] = parent[static_cast<std::size_t>(n.right)] = n.id;

  std::vector<SubgroupReport> out;
  for (int id : tree.leaves()) {
    const TreeNode& leaf = tree.node(id);
    SubgroupReport rep;
    rep.node = id;
    rep.n = leaf.n;
    for (int c = id; parent[static_cast<std::size_t>(c)] != 0; c = parent[static_cast<std::size_t>(c)]) {
      const TreeNode& p = tree.node(parent[static_cast<std::size_t>(c)]);
      rep.path.push_back({p.id, *p.split, p.left == c});
    }
    std::reverse(rep.path.begin(), rep.path.end());
    if (rep.path.empty()) {
      rep.predicate = "all";
    } else {
      for (std::size_t k = 0; k < rep.path.size(); ++k) {
        if (k) rep.predicate += " & ";
        const auto& s = rep.path[k];
        rep.predicate += s.split.describe(s.left);
      }
      rep.annotation = tree.node(rep.path.back().node).annotation;
    }
    for (const auto& p : leaf.params)
      if (p.treatment) rep.treatment.push_back(p);
    out.push_back(std::move(rep));
  }
  return out;
}

}  // namespace mobpart
