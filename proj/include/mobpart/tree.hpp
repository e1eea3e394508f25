#pragma once

#include "mobpart/data.hpp"
#include "mobpart/fluctest.hpp"
#include "mobpart/models.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mobpart {

struct ControlParams {
  double alpha = 0.05;
  int maxdepth = 2;
  std::size_t minbucket = 20;
  std::size_t minfit = 40;
  std::size_t nperm = 9999;
  std::uint64_t seed = 0;
  std::uint64_t exhaustive_threshold = 100000;
  unsigned threads = 1;
  bool chisq = false;
  double ci_level = 0.95;

  // Throws DataError naming the offending field.
  void validate() const;
};

// Binary split on one partitioning variable. Continuous and ordinal
// variables go left iff z <= threshold (ordinal thresholds are level
// indices); nominal variables go left iff the level is in `left_levels`.
struct SplitSpec {
  std::string variable;
  ColumnKind kind = ColumnKind::Continuous;
  double threshold = 0.0;
  std::vector<int> left_levels;
  std::vector<std::string> levels;  // the variable's level labels (categorical only)
  bool missing_left = true;
  std::size_t n_missing = 0;  // node rows routed by missing_left
  double statistic = 0.0;  // two-sample statistic of the chosen cut

  bool goes_left(const Column& z, std::size_t row) const;
  // Human-readable condition for one side, e.g. "z1 <= 0.25".
  std::string describe(bool left) const;
};

enum class LeafReason { None, NoSignificantVariable, MaxDepth, MinFit, NoAdmissibleCutpoint, FitFailure };
const char* to_string(LeafReason r);
LeafReason leaf_reason_from_string(const std::string& s);

struct ParamEstimate {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  Effect effect = Effect::None;
  bool treatment = false;
};

std::vector<ParamEstimate> summarize_fit(const ModelFit& fit, double level);

struct TreeNode {
  int id = 1;
  int depth = 0;
  RowSet rows;  // not serialized
  std::size_t n = 0;
  std::shared_ptr<const ModelFit> fit;  // not serialized
  bool fitted = false;
  bool converged = false;
  double objective = 0.0;
  std::string fit_error;
  std::vector<ParamEstimate> params;
  std::vector<InstabilityTestResult> tests;
  std::optional<std::size_t> winner;  // index into tests
  std::optional<SplitSpec> split;
  int left = 0;
  int right = 0;
  LeafReason reason = LeafReason::None;
  std::string annotation;  // inner nodes: predictive / prognostic heuristic

  bool is_leaf() const { return !split.has_value(); }
};

struct Tree {
  std::string family;
  std::string treatment;
  std::vector<std::string> partitioning;
  ControlParams control;
  std::size_t n_rows = 0;  // rows in the dataset, including excluded ones
  std::vector<TreeNode> nodes;  // breadth-first, nodes[i].id == i + 1

  const TreeNode& node(int id) const { return nodes.at(static_cast<std::size_t>(id - 1)); }
  std::vector<int> leaves() const;
};

struct VariableSelection {
  std::vector<InstabilityTestResult> tests;
  std::optional<std::size_t> winner;
};

// Instability tests of every usable partitioning variable against both score
// blocks of `fit`, Bonferroni-adjusted over the tests performed.
VariableSelection select_variable(const Dataset& data, const ModelFit& fit,
                                  const std::vector<std::string>& partitioning,
                                  const ControlParams& control, std::uint64_t node_seed);

// Maximally selected two-sample statistic of the split indicator against the
// concatenated score blocks. None when no cut leaves minbucket rows per side.
std::optional<SplitSpec> select_cutpoint(const Dataset& data, const ModelFit& fit,
                                         const std::string& variable, const ControlParams& control);

// Throws FitError when the root model cannot be fitted.
Tree grow_tree(const Dataset& data, const RoleMap& roles, const ModelFamily& family,
               const ControlParams& control);

// Leaf reached by a dataset row; missing split values follow the split's route.
int predict_node(const Tree& tree, const Dataset& data, std::size_t row);

struct PathStep {
  int node = 0;
  SplitSpec split;
  bool left = true;
};

struct SubgroupReport {
  int node = 0;
  std::vector<PathStep> path;
  std::string predicate;
  std::size_t n = 0;
  std::vector<ParamEstimate> treatment;
  std::string annotation;  // of the split that created this leaf
};

std::vector<SubgroupReport> extract_subgroups(const Tree& tree);

}  // namespace mobpart
