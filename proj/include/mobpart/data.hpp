#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace mobpart {

// Raised for malformed input: bad CSV cells, schema mismatches, invalid roles.
// `field` names the offending column or configuration key when one applies.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& message, std::string field = {})
      : std::runtime_error(message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class ColumnKind { Continuous, Ordinal, Nominal, Time, Event };

const char* to_string(ColumnKind kind);
ColumnKind column_kind_from_string(const std::string& s);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;
  std::vector<std::string> levels;  // ordinal (ordered) and nominal only
};

using Schema = std::vector<ColumnSpec>;

// One typed column. Ordinal and nominal values are stored as level indices.
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;
  std::vector<std::string> levels;
  std::vector<double> values;
  std::vector<std::uint8_t> missing;

  std::size_t size() const noexcept { return values.size(); }
  bool is_missing(std::size_t i) const { return missing[i] != 0; }
  bool categorical() const noexcept {
    return kind == ColumnKind::Ordinal || kind == ColumnKind::Nominal;
  }
};

// Immutable after construction; columns are looked up by name.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Column> columns);

  std::size_t n_rows() const noexcept { return n_rows_; }
  std::size_t n_cols() const noexcept { return columns_.size(); }
  const std::vector<Column>& columns() const noexcept { return columns_; }

  bool has(const std::string& name) const;
  const Column& column(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;

 private:
  std::vector<Column> columns_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t n_rows_ = 0;
};

// Sorted, duplicate-free row indices into a parent Dataset.
class RowSet {
 public:
  RowSet() = default;
  explicit RowSet(std::vector<std::size_t> indices);
  static RowSet all(std::size_t n);

  std::size_t size() const noexcept { return idx_.size(); }
  bool empty() const noexcept { return idx_.empty(); }
  std::size_t operator[](std::size_t k) const { return idx_[k]; }
  const std::vector<std::size_t>& indices() const noexcept { return idx_; }
  auto begin() const noexcept { return idx_.begin(); }
  auto end() const noexcept { return idx_.end(); }

  bool operator==(const RowSet&) const = default;

 private:
  std::vector<std::size_t> idx_;
};

// --- role assignment -------------------------------------------------------

struct GaussianLogEndpoint {
  std::string response;
  std::string offset;  // raw positive baseline; the model uses log(offset)
};
struct LinearEndpoint {
  std::string response;
  std::vector<std::string> strata;  // optional adjustment covariates
};
struct OrdinalItemEndpoint {
  std::string item;
  std::string baseline;  // empty: plain proportional odds without strata
};
struct OrdinalEnsembleEndpoint {
  std::vector<std::pair<std::string, std::string>> items;  // (item at follow-up, baseline)
};
struct SurvivalEndpoint {
  std::string time;
  std::string event;
};

using EndpointSpec = std::variant<GaussianLogEndpoint, LinearEndpoint, OrdinalItemEndpoint,
                                  OrdinalEnsembleEndpoint, SurvivalEndpoint>;

enum class FamilyKind { GaussianLog, Linear, Polr, PolrStratified, Weibull, Cox };

const char* to_string(FamilyKind kind);
FamilyKind family_from_string(const std::string& s);

struct RoleMap {
  FamilyKind family = FamilyKind::Linear;
  EndpointSpec endpoint;
  std::string treatment;
  std::vector<std::string> partitioning;

  // All endpoint columns in declaration order.
  std::vector<std::string> endpoint_columns() const;
};

// Throws DataError naming the offending field.
void validate_roles(const Dataset& data, const RoleMap& roles);

// Treatment as a 0/1 vector. Numeric columns must hold 0/1; two-level
// categorical columns map level index 0 -> 0 and 1 -> 1.
std::vector<double> treatment_indicator(const Dataset& data, const std::string& column);

// --- I/O -------------------------------------------------------------------

Dataset read_csv(std::istream& in, const Schema& schema);
Dataset load_csv(const std::filesystem::path& path, const Schema& schema);

// Numbers are written with 17 significant digits, missing as NA.
void write_csv(std::ostream& out, const Dataset& data);
void write_csv(const std::filesystem::path& path, const Dataset& data);

// Rows with no missing value in any of `columns`. May be empty.
RowSet complete_cases(const Dataset& data, const std::vector<std::string>& columns);

// Physical copy of the selected rows (used to check view/copy equivalence).
Dataset subset(const Dataset& data, const RowSet& rows);

}  // namespace mobpart
