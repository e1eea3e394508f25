#include "mobpart/report.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <sstream>

namespace mobpart {

using nlohmann::json;

namespace {

constexpr const char* kCaveat =
    "Intervals are unadjusted Wald intervals computed after a data-driven subgroup search; "
    "they overstate precision and are descriptive only.";

json real(double v) {
  if (!std::isfinite(v)) return nullptr;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::strtod(buf, nullptr);
}

double get_real(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

json params_to_json(const std::vector<ParamEstimate>& ps) {
  json out = json::array();
  for (const auto& p : ps)
    out.push_back({{"name", p.name},
                   {"estimate", real(p.estimate)},
                   {"se", real(p.se)},
                   {"lower", real(p.lower)},
                   {"upper", real(p.upper)},
                   {"effect", to_string(p.effect)},
                   {"treatment", p.treatment}});
  return out;
}

Effect effect_from_string(const std::string& s) {
  if (s == "positive") return Effect::Positive;
  if (s == "negative") return Effect::Negative;
  if (s == "none") return Effect::None;
  throw std::invalid_argument("unknown effect class '" + s + "'");
}

json test_to_json(const InstabilityTestResult& t) {
  return {{"variable", t.variable},
          {"block", to_string(t.block)},
          {"statistic", real(t.statistic)},
          {"rank", t.rank},
          {"p_raw", real(t.p_raw)},
          {"p_adj", real(t.p_adj)},
          {"p_asymptotic", real(t.p_asymptotic)},
          {"method", to_string(t.method)},
          {"B", t.B},
          {"m", t.m},
          {"stratified", t.stratified},
          {"warning", t.warning}};
}

json split_to_json(const SplitSpec& s) {
  json j = {{"variable", s.variable},
            {"kind", to_string(s.kind)},
            {"missing_route", s.missing_left ? "left" : "right"},
            {"n_missing", s.n_missing},
            {"statistic", real(s.statistic)},
            {"levels", s.levels},
            {"left", s.describe(true)},
            {"right", s.describe(false)}};
  if (s.kind == ColumnKind::Nominal)
    j["left_levels"] = s.left_levels;
  else
    j["threshold"] = real(s.threshold);
  return j;
}

}  // namespace

std::string tree_to_json(const Tree& tree) {
  const ControlParams& c = tree.control;
  json nodes = json::array();
  for (const auto& n : tree.nodes) {
    json tests = json::array();
    for (const auto& t : n.tests) tests.push_back(test_to_json(t));
    json node = {{"id", n.id},
                 {"depth", n.depth},
                 {"n", n.n},
                 {"fitted", n.fitted},
                 {"converged", n.converged},
                 {"objective", real(n.objective)},
                 {"fit_error", n.fit_error},
                 {"params", params_to_json(n.params)},
                 {"tests", tests},
                 {"winner", n.winner ? json(*n.winner) : json(nullptr)},
                 {"split", n.split ? split_to_json(*n.split) : json(nullptr)},
                 {"children", n.split ? json::array({n.left, n.right}) : json(nullptr)},
                 {"leaf_reason", to_string(n.reason)},
                 {"annotation", n.annotation}};
    nodes.push_back(std::move(node));
  }
  json doc = {{"schema_version", 1},
              {"family", tree.family},
              {"treatment", tree.treatment},
              {"partitioning", tree.partitioning},
              {"n_rows", tree.n_rows},
              {"seed", c.seed},
              {"control",
               {{"alpha", real(c.alpha)},
                {"maxdepth", c.maxdepth},
                {"minbucket", c.minbucket},
                {"minfit", c.minfit},
                {"nperm", c.nperm},
                {"exhaustive_threshold", c.exhaustive_threshold},
                {"chisq", c.chisq},
                {"ci_level", real(c.ci_level)}}},
              {"caveat", kCaveat},
              {"nodes", nodes}};
  return doc.dump(2) + "\n";
}

Tree tree_from_json(const std::string& text) {
  const json doc = json::parse(text);
  if (doc.at("schema_version").get<int>() != 1) throw std::runtime_error("unsupported tree schema version");
  Tree tree;
  tree.family = doc.at("family").get<std::string>();
  tree.treatment = doc.at("treatment").get<std::string>();
  tree.partitioning = doc.at("partitioning").get<std::vector<std::string>>();
  tree.n_rows = doc.at("n_rows").get<std::size_t>();
  const json& c = doc.at("control");
  tree.control.seed = doc.at("seed").get<std::uint64_t>();
  tree.control.alpha = get_real(c.at("alpha"));
  tree.control.maxdepth = c.at("maxdepth").get<int>();
  tree.control.minbucket = c.at("minbucket").get<std::size_t>();
  tree.control.minfit = c.at("minfit").get<std::size_t>();
  tree.control.nperm = c.at("nperm").get<std::size_t>();
  tree.control.exhaustive_threshold = c.at("exhaustive_threshold").get<std::uint64_t>();
  tree.control.chisq = c.at("chisq").get<bool>();
  tree.control.ci_level = get_real(c.at("ci_level"));

  for (const json& jn : doc.at("nodes")) {
    TreeNode n;
    n.id = jn.at("id").get<int>();
    n.depth = jn.at("depth").get<int>();
    n.n = jn.at("n").get<std::size_t>();
    n.fitted = jn.at("fitted").get<bool>();
    n.converged = jn.at("converged").get<bool>();
    n.objective = get_real(jn.at("objective"));
    n.fit_error = jn.at("fit_error").get<std::string>();
    for (const json& jp : jn.at("params")) {
      ParamEstimate p;
      p.name = jp.at("name").get<std::string>();
      p.estimate = get_real(jp.at("estimate"));
      p.se = get_real(jp.at("se"));
      p.lower = get_real(jp.at("lower"));
      p.upper = get_real(jp.at("upper"));
      p.effect = effect_from_string(jp.at("effect").get<std::string>());
      p.treatment = jp.at("treatment").get<bool>();
      n.params.push_back(std::move(p));
    }
    for (const json& jt : jn.at("tests")) {
      InstabilityTestResult t;
      t.variable = jt.at("variable").get<std::string>();
      t.block = score_block_from_string(jt.at("block").get<std::string>());
      t.statistic = get_real(jt.at("statistic"));
      t.rank = jt.at("rank").get<Eigen::Index>();
      t.p_raw = get_real(jt.at("p_raw"));
      t.p_adj = get_real(jt.at("p_adj"));
      t.p_asymptotic = get_real(jt.at("p_asymptotic"));
      t.method = test_method_from_string(jt.at("method").get<std::string>());
      t.B = jt.at("B").get<std::size_t>();
      t.m = jt.at("m").get<std::size_t>();
      t.stratified = jt.at("stratified").get<bool>();
      t.warning = jt.at("warning").get<std::string>();
      n.tests.push_back(std::move(t));
    }
    if (!jn.at("winner").is_null()) n.winner = jn.at("winner").get<std::size_t>();
    if (const json& js = jn.at("split"); !js.is_null()) {
      SplitSpec s;
      s.variable = js.at("variable").get<std::string>();
      s.kind = column_kind_from_string(js.at("kind").get<std::string>());
      s.missing_left = js.at("missing_route").get<std::string>() == "left";
      s.n_missing = js.at("n_missing").get<std::size_t>();
      s.statistic = get_real(js.at("statistic"));
      s.levels = js.at("levels").get<std::vector<std::string>>();
      if (s.kind == ColumnKind::Nominal)
        s.left_levels = js.at("left_levels").get<std::vector<int>>();
      else
        s.threshold = get_real(js.at("threshold"));
      n.split = std::move(s);
      n.left = jn.at("children").at(0).get<int>();
      n.right = jn.at("children").at(1).get<int>();
    }
    n.reason = leaf_reason_from_string(jn.at("leaf_reason").get<std::string>());
    n.annotation = jn.at("annotation").get<std::string>();
    tree.nodes.push_back(std::move(n));
  }
  return tree;
}

namespace {

std::string fmt(double v, int digits = 2) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fmt_p(double p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, p < 0.001 ? "%.1e" : "%.3f", p);
  return buf;
}

std::string estimate_text(const ParamEstimate& p) {
  return p.name + " = " + fmt(p.estimate) + " (" + fmt(p.lower) + ", " + fmt(p.upper) + ") " + to_string(p.effect);
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out;
}

std::string edge_label(const SplitSpec& s, bool left) {
  const std::string full = s.describe(left);
  return full.substr(s.variable.size() + 1);
}

}  // namespace

std::string tree_to_dot(const Tree& tree) {
  std::ostringstream os;
  os << "// mobpart seed " << tree.control.seed << "\n";
  os << "digraph mobtree {\n  node [shape=box, fontname=\"Helvetica\"];\n  edge [fontname=\"Helvetica\"];\n";
  for (const auto& n : tree.nodes) {
    std::string label;
    std::string shape = "box";
    if (!n.is_leaf()) {
      shape = "ellipse";
      label = std::to_string(n.id) + "\\n" + n.split->variable;
      if (n.winner) label += "\\np = " + fmt_p(n.tests[*n.winner].p_adj);
    } else {
      label = "Node " + std::to_string(n.id) + " (n = " + std::to_string(n.n) + ")";
      for (const auto& p : n.params)
        if (p.treatment) label += "\\n" + estimate_text(p);
    }
    os << "  n" << n.id << " [shape=" << shape << ", label=\"" << dot_escape(label) << "\"];\n";
  }
  for (const auto& n : tree.nodes) {
    if (n.is_leaf()) continue;
    os << "  n" << n.id << " -> n" << n.left << " [label=\"" << dot_escape(edge_label(*n.split, true)) << "\"];\n";
    os << "  n" << n.id << " -> n" << n.right << " [label=\"" << dot_escape(edge_label(*n.split, false)) << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

std::string tree_to_text(const Tree& tree) {
  std::ostringstream os;
  os << "Model-based partition (" << tree.family << ", treatment " << tree.treatment << ", seed "
     << tree.control.seed << ")\n";
  auto rec = [&](auto&& self, int id, const std::string& cond, int indent) -> void {
    const TreeNode& n = tree.node(id);
    const std::string pad(static_cast<std::size_t>(2 * indent), ' ');
    os << pad << "[" << n.id << "] " << cond << " (n = " << n.n << ")";
    if (n.is_leaf()) {
      os << " leaf: " << to_string(n.reason) << "\n";
      for (const auto& p : n.params)
        if (p.treatment) os << pad << "    " << estimate_text(p) << "\n";
      if (!n.fit_error.empty()) os << pad << "    fit: " << n.fit_error << "\n";
      return;
    }
    const auto& w = n.tests[*n.winner];
    os << " split on " << w.variable << " (" << to_string(w.block) << " block, p_adj = " << fmt_p(w.p_adj)
       << "), " << n.annotation << "\n";
    self(self, n.left, n.split->describe(true), indent + 1);
    self(self, n.right, n.split->describe(false), indent + 1);
  };
  rec(rec, 1, "root", 0);
  os << "Note: " << kCaveat << "\n";
  return os.str();
}

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string csv_num(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

void write_subgroups_csv(std::ostream& out, const Tree& tree) {
  out << "node,predicate,n,parameter,estimate,se,lower,upper,effect,annotation,seed\n";
  const std::string seed = "," + std::to_string(tree.control.seed) + "\n";
  for (const auto& g : extract_subgroups(tree)) {
    if (g.treatment.empty())
      out << g.node << "," << csv_quote(g.predicate) << "," << g.n << ",NA,NA,NA,NA,NA,NA," << csv_quote(g.annotation) << seed;
    for (const auto& p : g.treatment)
      out << g.node << "," << csv_quote(g.predicate) << "," << g.n << "," << csv_quote(p.name) << ","
          << csv_num(p.estimate) << "," << csv_num(p.se) << "," << csv_num(p.lower) << "," << csv_num(p.upper) << ","
          << to_string(p.effect) << "," << csv_quote(g.annotation) << seed;
  }
}

void write_membership_csv(std::ostream& out, const Tree& tree, const Dataset& data) {
  const RowSet& root = tree.node(1).rows;
  std::vector<char> included(data.n_rows(), 0);
  for (std::size_t i : root) included[i] = 1;
  out << "row,node,seed\n";
  const std::string seed = "," + std::to_string(tree.control.seed) + "\n";
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    out << (i + 1) << ",";
    if (included[i])
      out << predict_node(tree, data, i) << seed;
    else
      out << "NA" << seed;
  }
}

}  // namespace mobpart
