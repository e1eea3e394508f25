#include "doctest.h"

#include "mobpart/cli.hpp"
#include "mobpart/report.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace mobpart;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "mobpart");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("mobpart_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

nlohmann::json base_config(const fs::path& data, const fs::path& out) {
  return {{"data", data.string()},
          {"schema",
           {{{"name", "y"}, {"kind", "continuous"}},
            {{"name", "x_A"}, {"kind", "continuous"}},
            {{"name", "z1"}, {"kind", "continuous"}},
            {{"name", "z2"}, {"kind", "continuous"}}}},
          {"family", "linear"},
          {"endpoint", {{"response", "y"}}},
          {"treatment", "x_A"},
          {"partitioning", {"z1", "z2"}},
          {"control", {{"nperm", 499}, {"seed", 3}}},
          {"output", {{"dir", out.string()}}}};
}

fs::path write_config(const fs::path& dir, const nlohmann::json& cfg) {
  fs::path p = dir / "config.json";
  std::ofstream(p) << cfg.dump(2);
  return p;
}

}  // namespace

TEST_CASE("simulate is reproducible") {
  auto dir = scratch("simulate");
  auto a = run({"simulate", "pred", "--n", "100", "--seed", "4", "--noise-vars", "1", "--out", (dir / "a.csv").string()});
  auto b = run({"simulate", "pred", "--n", "100", "--seed", "4", "--noise-vars", "1", "--out", (dir / "b.csv").string()});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.csv").rfind("y,x_A,z1,z2", 0) == 0);
}

TEST_CASE("analyze writes every artifact and the JSON round-trips") {
  auto dir = scratch("analyze");
  REQUIRE(run({"simulate", "pred", "--n", "300", "--seed", "8", "--noise-vars", "1", "--out", (dir / "d.csv").string()}).code == 0);
  auto cfg = write_config(dir, base_config(dir / "d.csv", dir / "out"));
  auto r = run({"analyze", "--config", cfg.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  for (auto f : {"tree.json", "tree.dot", "tree.txt", "subgroups.csv", "membership.csv"})
    CHECK(fs::exists(dir / "out" / f));

  std::string text = slurp(dir / "out" / "tree.json");
  CHECK(tree_to_json(tree_from_json(text)) == text);
  CHECK(slurp(dir / "out" / "tree.dot").find("digraph") != std::string::npos);
  CHECK(slurp(dir / "out" / "membership.csv").rfind("row,node,seed", 0) == 0);

  auto again = run({"analyze", "--config", cfg.string(), "--threads", "3", "--out", (dir / "out2").string()});
  REQUIRE(again.code == 0);
  CHECK(slurp(dir / "out2" / "tree.json") == text);
}

TEST_CASE("format selection writes only the requested artifacts") {
  auto dir = scratch("formats");
  REQUIRE(run({"simulate", "null", "--n", "80", "--seed", "2", "--noise-vars", "1", "--out", (dir / "d.csv").string()}).code == 0);
  auto cfg = write_config(dir, base_config(dir / "d.csv", dir / "out"));
  REQUIRE(run({"analyze", "--config", cfg.string(), "--format", "dot"}).code == 0);
  CHECK(fs::exists(dir / "out" / "tree.dot"));
  CHECK_FALSE(fs::exists(dir / "out" / "tree.json"));
  CHECK_FALSE(fs::exists(dir / "out" / "subgroups.csv"));
}

TEST_CASE("configuration errors exit 2 and name the field") {
  auto dir = scratch("config");
  REQUIRE(run({"simulate", "pred", "--n", "60", "--seed", "1", "--noise-vars", "1", "--out", (dir / "d.csv").string()}).code == 0);
  auto cfg = base_config(dir / "d.csv", dir / "out");
  cfg.erase("treatment");
  auto r = run({"analyze", "--config", write_config(dir, cfg).string()});
  CHECK(r.code == kExitConfig);
  auto err = nlohmann::json::parse(r.err);
  CHECK(err["error"]["field"] == "treatment");

  cfg = base_config(dir / "d.csv", dir / "out");
  cfg["control"]["alpha"] = 2.0;
  CHECK(run({"analyze", "--config", write_config(dir, cfg).string()}).code == kExitConfig);

  CHECK(run({"selftest", "nonsense"}).code == kExitConfig);
  CHECK(run({"frobnicate"}).code == kExitConfig);
}

TEST_CASE("missing files exit 4") {
  auto dir = scratch("io");
  auto cfg = write_config(dir, base_config(dir / "absent.csv", dir / "out"));
  CHECK(run({"analyze", "--config", cfg.string()}).code == kExitIo);
  CHECK(run({"analyze", "--config", (dir / "nope.json").string()}).code == kExitIo);
}

TEST_CASE("root fit failure exits 3") {
  auto dir = scratch("rootfit");
  std::ofstream csv(dir / "s.csv");
  csv << "t,d,x,z\n";
  for (int i = 0; i < 50; ++i) csv << (i + 1) << ",0," << (i % 2) << "," << i << "\n";
  csv.close();
  nlohmann::json cfg = {{"data", (dir / "s.csv").string()},
                        {"schema",
                         {{{"name", "t"}, {"kind", "time"}},
                          {{"name", "d"}, {"kind", "event"}},
                          {{"name", "x"}, {"kind", "continuous"}},
                          {{"name", "z"}, {"kind", "continuous"}}}},
                        {"family", "cox"},
                        {"endpoint", {{"time", "t"}, {"event", "d"}}},
                        {"treatment", "x"},
                        {"partitioning", {"z"}},
                        {"output", {{"dir", (dir / "out").string()}}}};
  CHECK(run({"analyze", "--config", write_config(dir, cfg).string()}).code == kExitRootFit);
}
