#include "mobpart/cli.hpp"
#include "mobpart/report.hpp"
#include "mobpart/selftest.hpp"
#include "mobpart/simgen.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace mobpart {

using nlohmann::json;

namespace {

const json& require(const json& obj, const std::string& key, const std::string& field) {
  if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) throw DataError("missing required key '" + field + "'", field);
  return obj.at(key);
}

std::string require_string(const json& obj, const std::string& key, const std::string& field) {
  const json& v = require(obj, key, field);
  if (!v.is_string() || v.get<std::string>().empty()) throw DataError("'" + field + "' must be a non-empty string", field);
  return v.get<std::string>();
}

template <class T>
void read_opt(const json& obj, const std::string& key, T& target) {
  if (!obj.contains(key)) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError("control key '" + key + "' has the wrong type", "control." + key);
  }
}

EndpointSpec parse_endpoint(FamilyKind fk, const json& ep) {
  if (!ep.is_object()) throw DataError("'endpoint' must be an object", "endpoint");
  switch (fk) {
    case FamilyKind::GaussianLog:
      return GaussianLogEndpoint{require_string(ep, "response", "endpoint.response"),
                                 require_string(ep, "offset", "endpoint.offset")};
    case FamilyKind::Linear: {
      LinearEndpoint l{require_string(ep, "response", "endpoint.response"), {}};
      if (ep.contains("strata")) l.strata = ep.at("strata").get<std::vector<std::string>>();
      return l;
    }
    case FamilyKind::Polr:
    case FamilyKind::PolrStratified:
      if (ep.contains("items")) {
        OrdinalEnsembleEndpoint e;
        for (const json& it : ep.at("items"))
          e.items.emplace_back(require_string(it, "item", "endpoint.items.item"),
                               require_string(it, "baseline", "endpoint.items.baseline"));
        if (e.items.empty()) throw DataError("'endpoint.items' is empty", "endpoint.items");
        return e;
      } else {
        OrdinalItemEndpoint o{require_string(ep, "item", "endpoint.item"), {}};
        if (ep.contains("baseline")) o.baseline = require_string(ep, "baseline", "endpoint.baseline");
        return o;
      }
    case FamilyKind::Weibull:
    case FamilyKind::Cox:
      return SurvivalEndpoint{require_string(ep, "time", "endpoint.time"), require_string(ep, "event", "endpoint.event")};
  }
  throw DataError("unsupported family", "family");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

std::set<std::string> parse_formats(const std::string& list) {
  static const std::set<std::string> known{"json", "dot", "text", "csv"};
  std::set<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (!known.count(item)) throw DataError("unknown output format '" + item + "'", "output.formats");
    out.insert(item);
  }
  if (out.empty()) throw DataError("no output format requested", "output.formats");
  return out;
}

AnalysisConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("configuration is not valid JSON: ") + e.what(), "config");
  }
  if (!doc.is_object()) throw DataError("configuration must be a JSON object", "config");

  AnalysisConfig cfg;
  cfg.data = resolve(base_dir, require_string(doc, "data", "data"));
  const json& schema = require(doc, "schema", "schema");
  if (!schema.is_array() || schema.empty()) throw DataError("'schema' must be a non-empty array", "schema");
  for (const json& c : schema) {
    ColumnSpec spec;
    spec.name = require_string(c, "name", "schema.name");
    try {
      spec.kind = column_kind_from_string(require_string(c, "kind", "schema.kind"));
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(e.what(), "schema." + spec.name + ".kind");
    }
    if (c.contains("levels")) spec.levels = c.at("levels").get<std::vector<std::string>>();
    cfg.schema.push_back(std::move(spec));
  }

  try {
    cfg.roles.family = family_from_string(require_string(doc, "family", "family"));
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(e.what(), "family");
  }
  cfg.roles.endpoint = parse_endpoint(cfg.roles.family, require(doc, "endpoint", "endpoint"));
  cfg.roles.treatment = require_string(doc, "treatment", "treatment");
  const json& part = require(doc, "partitioning", "partitioning");
  if (!part.is_array()) throw DataError("'partitioning' must be an array of column names", "partitioning");
  cfg.roles.partitioning = part.get<std::vector<std::string>>();

  // Every role must name a schema column before any data is read.
  auto in_schema = [&](const std::string& name) {
    return std::any_of(cfg.schema.begin(), cfg.schema.end(), [&](const ColumnSpec& s) { return s.name == name; });
  };
  for (const auto& c : cfg.roles.endpoint_columns())
    if (!in_schema(c)) throw DataError("endpoint column '" + c + "' is not in the schema", "endpoint");
  if (!in_schema(cfg.roles.treatment))
    throw DataError("treatment column '" + cfg.roles.treatment + "' is not in the schema", "treatment");
  for (const auto& c : cfg.roles.partitioning)
    if (!in_schema(c)) throw DataError("partitioning column '" + c + "' is not in the schema", "partitioning");

  if (doc.contains("control")) {
    const json& c = doc.at("control");
    if (!c.is_object()) throw DataError("'control' must be an object", "control");
    read_opt(c, "alpha", cfg.control.alpha);
    read_opt(c, "maxdepth", cfg.control.maxdepth);
    read_opt(c, "minbucket", cfg.control.minbucket);
    read_opt(c, "minfit", cfg.control.minfit);
    read_opt(c, "nperm", cfg.control.nperm);
    read_opt(c, "seed", cfg.control.seed);
    read_opt(c, "exhaustive_threshold", cfg.control.exhaustive_threshold);
    read_opt(c, "chisq", cfg.control.chisq);
    read_opt(c, "ci_level", cfg.control.ci_level);
    if (c.contains("threads")) {
      read_opt(c, "threads", cfg.control.threads);
      cfg.threads_set = true;
    }
  }
  if (doc.contains("output")) {
    const json& o = doc.at("output");
    if (o.contains("dir")) cfg.output_dir = resolve(base_dir, o.at("dir").get<std::string>());
    if (o.contains("formats")) {
      std::string joined;
      for (const auto& f : o.at("formats").get<std::vector<std::string>>()) joined += f + ",";
      cfg.formats = parse_formats(joined);
    }
  }
  return cfg;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open output file", path.string());
  f << content;
  if (!f) throw IoError("failed writing output file", path.string());
}

}  // namespace

Tree run_analyze(const AnalysisConfig& cfg) {
  cfg.control.validate();
  if (!std::filesystem::exists(cfg.data)) throw IoError("data file not found", cfg.data.string());
  const Dataset data = load_csv(cfg.data, cfg.schema);
  const auto family = make_family(data, cfg.roles);
  Tree tree = grow_tree(data, cfg.roles, *family, cfg.control);
  if (tree.node(1).reason == LeafReason::FitFailure)
    throw FitError("root model did not converge: " + tree.node(1).fit_error);

  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + ec.message(), cfg.output_dir.string());
  if (cfg.formats.count("json")) write_file(cfg.output_dir / "tree.json", tree_to_json(tree));
  if (cfg.formats.count("dot")) write_file(cfg.output_dir / "tree.dot", tree_to_dot(tree));
  if (cfg.formats.count("text")) write_file(cfg.output_dir / "tree.txt", tree_to_text(tree));
  if (cfg.formats.count("csv")) {
    std::ostringstream sub, mem;
    write_subgroups_csv(sub, tree);
    write_membership_csv(mem, tree, data);
    write_file(cfg.output_dir / "subgroups.csv", sub.str());
    write_file(cfg.output_dir / "membership.csv", mem.str());
  }
  return tree;
}

namespace {

void error_json(std::ostream& err, int code, const std::string& type, const std::string& message,
                const std::string& field = {}) {
  json e = {{"code", code}, {"type", type}, {"message", message}};
  if (!field.empty()) e["field"] = field;
  err << json{{"error", e}}.dump() << "\n";
}

unsigned env_threads() {
  if (const char* v = std::getenv("MOBPART_THREADS")) {
    char* end = nullptr;
    const long t = std::strtol(v, &end, 10);
    if (end != v && *end == '\0' && t > 0) return static_cast<unsigned>(t);
  }
  return 1;
}

void print_checks(std::ostream& out, const std::vector<Check>& checks) {
  char line[512];
  std::snprintf(line, sizeof line, "%-12s %-52s %12s %12s  %s\n", "suite", "check", "measured", "threshold", "result");
  out << line;
  for (const auto& c : checks) {
    std::snprintf(line, sizeof line, "%-12s %-52s %12.4g %12.4g  %s\n", c.suite.c_str(), c.name.c_str(), c.measured,
                  c.threshold, c.pass ? "PASS" : "FAIL");
    out << line;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Model-based recursive partitioning for treatment-effect subgroups", "mobpart"};
  app.require_subcommand(1);

  auto* analyze = app.add_subcommand("analyze", "Grow a partition from a JSON configuration");
  std::string config_path;
  std::optional<double> alpha;
  std::optional<int> maxdepth;
  std::optional<std::size_t> minbucket, nperm;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> format, out_dir;
  analyze->add_option("--config", config_path, "Configuration file")->required();
  analyze->add_option("--alpha", alpha, "Significance level");
  analyze->add_option("--maxdepth", maxdepth, "Maximum tree depth");
  analyze->add_option("--minbucket", minbucket, "Minimum rows per child");
  analyze->add_option("--nperm", nperm, "Monte Carlo permutations");
  analyze->add_option("--seed", seed, "Random seed");
  analyze->add_option("--threads", threads, "Worker threads");
  analyze->add_option("--format", format, "Comma-separated subset of json,dot,text,csv");
  analyze->add_option("--out", out_dir, "Output directory");

  auto* simulate = app.add_subcommand("simulate", "Write a simulated dataset as CSV");
  std::string dgp_name;
  DGPSpec spec;
  std::optional<std::string> sim_out;
  simulate->add_option("dgp", dgp_name, "pred, pred2, prog or null")->required();
  simulate->add_option("--n", spec.n, "Sample size");
  simulate->add_option("--seed", spec.seed, "Random seed");
  simulate->add_option("--noise-vars", spec.J_noise, "Extra noise partitioning variables");
  simulate->add_option("--out", sim_out, "Output CSV (default: standard output)");

  auto* selftest = app.add_subcommand("selftest", "Run oracle checks");
  std::string suite;
  std::size_t perm_m = 7, nsim = 200;
  std::uint64_t st_seed = 20240601;
  selftest->add_option("suite", suite, "gradients, permutation, penrose, typei or all")->required();
  selftest->add_option("--m", perm_m, "Rows for the enumeration check (permutation suite)");
  selftest->add_option("--nsim", nsim, "Null samples (typei suite)");
  selftest->add_option("--seed", st_seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success&) {
    // --help anywhere on the command line
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    error_json(err, kExitConfig, "usage", e.what());
    return kExitConfig;
  }

  try {
    if (analyze->parsed()) {
      std::ifstream f(config_path);
      if (!f) throw IoError("cannot read configuration file", config_path);
      std::stringstream buf;
      buf << f.rdbuf();
      AnalysisConfig cfg = parse_config(buf.str(), std::filesystem::path(config_path).parent_path());
      if (alpha) cfg.control.alpha = *alpha;
      if (maxdepth) cfg.control.maxdepth = *maxdepth;
      if (minbucket) cfg.control.minbucket = *minbucket;
      if (nperm) cfg.control.nperm = *nperm;
      if (seed) cfg.control.seed = *seed;
      if (threads)
        cfg.control.threads = *threads;
      else if (!cfg.threads_set)
        cfg.control.threads = env_threads();
      if (format) cfg.formats = parse_formats(*format);
      if (out_dir) cfg.output_dir = *out_dir;
      const Tree tree = run_analyze(cfg);
      out << tree_to_text(tree);
      return kExitOk;
    }
    if (simulate->parsed()) {
      spec.dgp = dgp_from_string(dgp_name);
      const Dataset data = generate(spec);
      if (sim_out) {
        std::ofstream f(*sim_out, std::ios::binary);
        if (!f) throw IoError("cannot open output file", *sim_out);
        write_csv(f, data);
        if (!f) throw IoError("failed writing output file", *sim_out);
      } else {
        write_csv(out, data);
      }
      return kExitOk;
    }
    const auto& suites = selftest_suites();
    if (std::find(suites.begin(), suites.end(), suite) == suites.end()) {
      error_json(err, kExitConfig, "usage", "unknown selftest suite '" + suite + "'", "suite");
      return kExitConfig;
    }
    std::vector<Check> checks;
    auto add = [&](std::vector<Check> c) { checks.insert(checks.end(), c.begin(), c.end()); };
    if (suite == "gradients" || suite == "all") add(check_gradients(20, st_seed));
    if (suite == "permutation" || suite == "all") add(check_permutation(perm_m, 20, 50000, st_seed));
    if (suite == "penrose" || suite == "all") add(check_penrose(st_seed));
    if (suite == "typei" || suite == "all") {
      TypeIOptions o;
      o.nsim = nsim;
      o.seed = st_seed;
      o.threads = env_threads();
      add(check_type_one(o));
    }
    print_checks(out, checks);
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; }) ? kExitOk
                                                                                          : kExitFailedChecks;
  } catch (const IoError& e) {
    error_json(err, kExitIo, "io", e.what(), e.path());
    return kExitIo;
  } catch (const DataError& e) {
    error_json(err, kExitConfig, "config", e.what(), e.field());
    return kExitConfig;
  } catch (const FitError& e) {
    error_json(err, kExitRootFit, "fit", e.what());
    return kExitRootFit;
  } catch (const std::invalid_argument& e) {
    error_json(err, kExitConfig, "config", e.what());
    return kExitConfig;
  } catch (const std::ios_base::failure& e) {
    error_json(err, kExitIo, "io", e.what());
    return kExitIo;
  }
}

}  // namespace mobpart
