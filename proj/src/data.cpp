#include "mobpart/data.hpp"

#include <algorithm>
#include <cerrno>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace mobpart {

const char* to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::Continuous: return "continuous";
    case ColumnKind::Ordinal: return "ordinal";
    case ColumnKind::Nominal: return "nominal";
    case ColumnKind::Time: return "time";
    case ColumnKind::Event: return "event";
  }
  return "?";
}

ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "continuous") return ColumnKind::Continuous;
  if (s == "ordinal") return ColumnKind::Ordinal;
  if (s == "nominal") return ColumnKind::Nominal;
  if (s == "time") return ColumnKind::Time;
  if (s == "event") return ColumnKind::Event;
  throw DataError("unknown column kind '" + s + "'", "kind");
}

const char* to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::GaussianLog: return "gaussian-log";
    case FamilyKind::Linear: return "linear";
    case FamilyKind::Polr: return "polr";
    case FamilyKind::PolrStratified: return "polr-stratified";
    case FamilyKind::Weibull: return "weibull";
    case FamilyKind::Cox: return "cox";
  }
  return "?";
}

FamilyKind family_from_string(const std::string& s) {
  if (s == "gaussian-log") return FamilyKind::GaussianLog;
  if (s == "linear") return FamilyKind::Linear;
  if (s == "polr") return FamilyKind::Polr;
  if (s == "polr-stratified") return FamilyKind::PolrStratified;
  if (s == "weibull") return FamilyKind::Weibull;
  if (s == "cox") return FamilyKind::Cox;
  throw DataError("unknown model family '" + s + "'", "family");
}

Dataset::Dataset(std::vector<Column> columns) : columns_(std::move(columns)) {
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    const Column& c = columns_[j];
    if (!index_.emplace(c.name, j).second)
      throw DataError("duplicate column name '" + c.name + "'", c.name);
    if (c.values.size() != c.missing.size())
      throw DataError("column '" + c.name + "': values and missing mask differ in length", c.name);
    if (j == 0)
      n_rows_ = c.values.size();
    else if (c.values.size() != n_rows_)
      throw DataError("column '" + c.name + "' has a different row count", c.name);
  }
}

bool Dataset::has(const std::string& name) const { return index_.count(name) != 0; }

std::size_t Dataset::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("no column named '" + name + "'", name);
  return it->second;
}

const Column& Dataset::column(const std::string& name) const { return columns_[index_of(name)]; }

RowSet::RowSet(std::vector<std::size_t> indices) : idx_(std::move(indices)) {
  std::sort(idx_.begin(), idx_.end());
  idx_.erase(std::unique(idx_.begin(), idx_.end()), idx_.end());
}

RowSet RowSet::all(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  RowSet r;
  r.idx_ = std::move(idx);
  return r;
}

std::vector<std::string> RoleMap::endpoint_columns() const {
  return std::visit(
      [](const auto& ep) -> std::vector<std::string> {
        using T = std::decay_t<decltype(ep)>;
        if constexpr (std::is_same_v<T, GaussianLogEndpoint>) {
          return {ep.response, ep.offset};
        } else if constexpr (std::is_same_v<T, LinearEndpoint>) {
          std::vector<std::string> out{ep.response};
          out.insert(out.end(), ep.strata.begin(), ep.strata.end());
          return out;
        } else if constexpr (std::is_same_v<T, OrdinalItemEndpoint>) {
          if (ep.baseline.empty()) return {ep.item};
          return {ep.item, ep.baseline};
        } else if constexpr (std::is_same_v<T, OrdinalEnsembleEndpoint>) {
          std::vector<std::string> out;
          for (const auto& [a, b] : ep.items) {
            out.push_back(a);
            out.push_back(b);
          }
          return out;
        } else {
          return {ep.time, ep.event};
        }
      },
      endpoint);
}

std::vector<double> treatment_indicator(const Dataset& data, const std::string& name) {
  const Column& c = data.column(name);
  std::vector<double> x(c.size(), 0.0);
  if (c.categorical()) {
    if (c.levels.size() != 2)
      throw DataError("treatment column '" + name + "' must have exactly two levels", "treatment");
  }
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.is_missing(i)) {
      x[i] = std::nan("");
      continue;
    }
    const double v = c.values[i];
    if (v != 0.0 && v != 1.0)
      throw DataError("treatment column '" + name + "' is not binary (row " +
                          std::to_string(i + 1) + ")",
                      "treatment");
    x[i] = v;
  }
  return x;
}

namespace {

void require_kind(const Dataset& data, const std::string& col, std::initializer_list<ColumnKind> ok,
                  const std::string& field) {
  if (!data.has(col)) throw DataError("column '" + col + "' not found in data", field);
  const ColumnKind k = data.column(col).kind;
  if (std::find(ok.begin(), ok.end(), k) == ok.end())
    throw DataError("column '" + col + "' has kind " + to_string(k) + ", not usable as " + field,
                    field);
}

}  // namespace

void validate_roles(const Dataset& data, const RoleMap& roles) {
  using K = ColumnKind;
  const auto numeric = {K::Continuous, K::Ordinal, K::Time};
  std::visit(
      [&](const auto& ep) {
        using T = std::decay_t<decltype(ep)>;
        if constexpr (std::is_same_v<T, GaussianLogEndpoint>) {
          require_kind(data, ep.response, numeric, "endpoint.response");
          require_kind(data, ep.offset, numeric, "endpoint.offset");
          if (roles.family != FamilyKind::GaussianLog)
            throw DataError("endpoint does not match family", "family");
        } else if constexpr (std::is_same_v<T, LinearEndpoint>) {
          require_kind(data, ep.response, numeric, "endpoint.response");
          for (const auto& s : ep.strata)
            require_kind(data, s, {K::Continuous, K::Ordinal, K::Nominal, K::Event},
                         "endpoint.strata");
          if (roles.family != FamilyKind::Linear)
            throw DataError("endpoint does not match family", "family");
        } else if constexpr (std::is_same_v<T, OrdinalItemEndpoint>) {
          require_kind(data, ep.item, {K::Ordinal}, "endpoint.item");
          if (!ep.baseline.empty()) require_kind(data, ep.baseline, {K::Ordinal}, "endpoint.baseline");
          if (roles.family != FamilyKind::Polr && roles.family != FamilyKind::PolrStratified)
            throw DataError("endpoint does not match family", "family");
        } else if constexpr (std::is_same_v<T, OrdinalEnsembleEndpoint>) {
          if (ep.items.empty()) throw DataError("ensemble needs at least one item", "endpoint.items");
          for (const auto& [a, b] : ep.items) {
            require_kind(data, a, {K::Ordinal}, "endpoint.items");
            require_kind(data, b, {K::Ordinal}, "endpoint.items");
          }
          if (roles.family != FamilyKind::PolrStratified)
            throw DataError("endpoint does not match family", "family");
        } else {
          require_kind(data, ep.time, {K::Time, K::Continuous}, "endpoint.time");
          require_kind(data, ep.event, {K::Event, K::Continuous}, "endpoint.event");
          if (roles.family != FamilyKind::Weibull && roles.family != FamilyKind::Cox)
            throw DataError("endpoint does not match family", "family");
        }
      },
      roles.endpoint);

  if (roles.treatment.empty()) throw DataError("treatment column not specified", "treatment");
  if (!data.has(roles.treatment))
    throw DataError("treatment column '" + roles.treatment + "' not found in data", "treatment");
  const auto x = treatment_indicator(data, roles.treatment);
  bool has0 = false, has1 = false;
  for (double v : x) {
    if (v == 0.0) has0 = true;
    if (v == 1.0) has1 = true;
  }
  if (!has0 || !has1)
    throw DataError("treatment column '" + roles.treatment + "' does not contain both arms",
                    "treatment");

  std::set<std::string> taken;
  for (const auto& c : roles.endpoint_columns()) taken.insert(c);
  taken.insert(roles.treatment);
  std::set<std::string> seen;
  for (const auto& z : roles.partitioning) {
    if (!data.has(z)) throw DataError("partitioning column '" + z + "' not found", "partitioning");
    if (taken.count(z))
      throw DataError("partitioning column '" + z + "' is also an endpoint or treatment column",
                      "partitioning");
    if (!seen.insert(z).second)
      throw DataError("partitioning column '" + z + "' listed twice", "partitioning");
    const ColumnKind k = data.column(z).kind;
    if (k == ColumnKind::Time || k == ColumnKind::Event)
      throw DataError("partitioning column '" + z + "' must be continuous, ordinal or nominal",
                      "partitioning");
  }
}

// --- CSV -------------------------------------------------------------------

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && std::isfinite(out);
}

std::string cell_ref(std::size_t row, const std::string& col) {
  return "row " + std::to_string(row) + ", column '" + col + "'";
}

}  // namespace

Dataset read_csv(std::istream& in, const Schema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV input");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_line(line);
  for (auto& h : header) h = trim(h);

  {
    std::set<std::string> seen;
    for (const auto& h : header)
      if (!seen.insert(h).second) throw DataError("duplicate column name '" + h + "' in header", h);
    std::set<std::string> declared;
    for (const auto& s : schema)
      if (!declared.insert(s.name).second)
        throw DataError("duplicate column name '" + s.name + "' in schema", s.name);
    for (const auto& s : schema)
      if (!seen.count(s.name)) throw DataError("schema column '" + s.name + "' missing from header", s.name);
    for (const auto& h : header)
      if (!declared.count(h)) throw DataError("header column '" + h + "' not declared in schema", h);
  }

  std::vector<Column> cols(schema.size());
  std::vector<std::size_t> pos(schema.size());
  std::vector<std::unordered_map<std::string, double>> level_index(schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j) {
    cols[j].name = schema[j].name;
    cols[j].kind = schema[j].kind;
    cols[j].levels = schema[j].levels;
    pos[j] = static_cast<std::size_t>(
        std::find(header.begin(), header.end(), schema[j].name) - header.begin());
    if (cols[j].categorical()) {
      if (cols[j].levels.empty())
        throw DataError("column '" + cols[j].name + "' needs declared levels", cols[j].name);
      for (std::size_t l = 0; l < cols[j].levels.size(); ++l)
        if (!level_index[j].emplace(cols[j].levels[l], static_cast<double>(l)).second)
          throw DataError("column '" + cols[j].name + "' declares a level twice", cols[j].name);
    }
  }

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      Column& c = cols[j];
      const std::string cell = trim(cells[pos[j]]);
      if (cell.empty() || cell == "NA") {
        c.values.push_back(std::nan(""));
        c.missing.push_back(1);
        continue;
      }
      double v = 0.0;
      if (c.categorical()) {
        auto it = level_index[j].find(cell);
        if (it == level_index[j].end())
          throw DataError("unknown level '" + cell + "' at " + cell_ref(row, c.name), c.name);
        v = it->second;
      } else {
        if (!parse_double(cell, v))
          throw DataError("unparseable value '" + cell + "' at " + cell_ref(row, c.name), c.name);
        if (c.kind == ColumnKind::Time && v < 0.0)
          throw DataError("negative time at " + cell_ref(row, c.name), c.name);
        if (c.kind == ColumnKind::Event && v != 0.0 && v != 1.0)
          throw DataError("event indicator must be 0 or 1 at " + cell_ref(row, c.name), c.name);
      }
      c.values.push_back(v);
      c.missing.push_back(0);
    }
  }
  return Dataset(std::move(cols));
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open '" + path.string() + "'");
  return read_csv(in, schema);
}

namespace {

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void write_csv(std::ostream& out, const Dataset& data) {
  const auto& cols = data.columns();
  for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << quote_if_needed(cols[j].name);
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const Column& c = cols[j];
      if (j) out << ',';
      if (c.is_missing(i)) {
        out << "NA";
      } else if (c.categorical()) {
        out << quote_if_needed(c.levels[static_cast<std::size_t>(c.values[i])]);
      } else {
        std::snprintf(buf, sizeof buf, "%.17g", c.values[i]);
        out << buf;
      }
    }
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write '" + path.string() + "'");
  write_csv(out, data);
}

RowSet complete_cases(const Dataset& data, const std::vector<std::string>& columns) {
  std::vector<const Column*> cols;
  for (const auto& name : columns) cols.push_back(&data.column(name));
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    bool ok = true;
    for (const Column* c : cols)
      if (c->is_missing(i)) {
        ok = false;
        break;
      }
    if (ok) keep.push_back(i);
  }
  return RowSet(std::move(keep));
}

Dataset subset(const Dataset& data, const RowSet& rows) {
  std::vector<Column> cols;
  for (const Column& c : data.columns()) {
    Column s;
    s.name = c.name;
    s.kind = c.kind;
    s.levels = c.levels;
    for (std::size_t i : rows) {
      s.values.push_back(c.values[i]);
      s.missing.push_back(c.missing[i]);
    }
    cols.push_back(std::move(s));
  }
  return Dataset(std::move(cols));
}

}  // namespace mobpart
