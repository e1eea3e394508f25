#pragma once

#include "mobpart/data.hpp"
#include "mobpart/tree.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace mobpart {

enum ExitCode : int { kExitOk = 0, kExitFailedChecks = 1, kExitConfig = 2, kExitRootFit = 3, kExitIo = 4 };

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& message, std::string path) : std::runtime_error(message), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct AnalysisConfig {
  std::filesystem::path data;
  Schema schema;
  RoleMap roles;
  ControlParams control;
  bool threads_set = false;
  std::filesystem::path output_dir = "mobpart-out";
  std::set<std::string> formats{"json", "dot", "text", "csv"};
};

// Parses the JSON configuration; relative paths resolve against `base_dir`.
// Throws DataError naming the offending key.
AnalysisConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);

std::set<std::string> parse_formats(const std::string& list);

// Loads the data, grows the tree and writes the requested artifacts.
Tree run_analyze(const AnalysisConfig& config);

// Entry point behind the `mobpart` executable.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mobpart
