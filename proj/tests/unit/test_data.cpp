#include "doctest.h"

#include "mobpart/data.hpp"

#include <sstream>

using namespace mobpart;

namespace {

Schema basic_schema() {
  return {{"y", ColumnKind::Continuous, {}},
          {"x", ColumnKind::Continuous, {}},
          {"g", ColumnKind::Nominal, {"a", "b", "c"}},
          {"o", ColumnKind::Ordinal, {"lo", "mid", "hi"}}};
}

Dataset parse(const std::string& text, const Schema& schema) {
  std::istringstream in(text);
  return read_csv(in, schema);
}

std::string field_of(const std::string& text, const Schema& schema) {
  try {
    parse(text, schema);
  } catch (const DataError& e) {
    return e.field();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("read_csv parses typed columns, levels and missing cells") {
  auto d = parse("y,x,g,o\n1.5,0,a,lo\nNA,1,c,hi\n\"2\",1,b,\n", basic_schema());
  REQUIRE(d.n_rows() == 3);
  CHECK(d.column("y").values[0] == doctest::Approx(1.5));
  CHECK(d.column("y").is_missing(1));
  CHECK(d.column("y").values[2] == doctest::Approx(2.0));
  CHECK(d.column("g").values[1] == 2);
  CHECK(d.column("o").values[1] == 2);
  CHECK(d.column("o").is_missing(2));
}

TEST_CASE("column order in the file need not follow the schema") {
  auto d = parse("o,g,x,y\nmid,b,1,3\n", basic_schema());
  CHECK(d.column("y").values[0] == 3);
  CHECK(d.column("o").values[0] == 1);
}

TEST_CASE("read_csv errors name the offending column") {
  auto s = basic_schema();
  CHECK(field_of("y,x,g,o\n1,0,z,lo\n", s) == "g");
  CHECK(field_of("y,x,g,o\nabc,0,a,lo\n", s) == "y");
  CHECK(field_of("y,x,g\n1,0,a\n", s) == "o");
  CHECK(field_of("y,x,g,o,extra\n1,0,a,lo,1\n", s) == "extra");
  CHECK_THROWS_AS(parse("y,x,g,o\n1,0,a\n", s), DataError);
  CHECK_THROWS_AS(parse("", s), DataError);

  Schema surv{{"t", ColumnKind::Time, {}}, {"d", ColumnKind::Event, {}}};
  CHECK(field_of("t,d\n-1,1\n", surv) == "t");
  CHECK(field_of("t,d\n1,2\n", surv) == "d");
}

TEST_CASE("write_csv round-trips") {
  auto d = parse("y,x,g,o\n0.1,0,a,lo\nNA,1,c,hi\n", basic_schema());
  std::ostringstream out;
  write_csv(out, d);
  auto e = parse(out.str(), basic_schema());
  REQUIRE(e.n_rows() == 2);
  CHECK(e.column("y").values[0] == d.column("y").values[0]);
  CHECK(e.column("y").is_missing(1));
  CHECK(e.column("g").values == d.column("g").values);
}

TEST_CASE("complete_cases and subset") {
  auto d = parse("y,x,g,o\n1,0,a,lo\nNA,1,c,hi\n3,1,,mid\n4,0,b,hi\n", basic_schema());
  auto cc = complete_cases(d, {"y", "g"});
  CHECK(cc.indices() == std::vector<std::size_t>{0, 3});
  auto s = subset(d, cc);
  CHECK(s.n_rows() == 2);
  CHECK(s.column("y").values[1] == 4);
  CHECK(complete_cases(d, {}).size() == 4);
  CHECK(RowSet({3, 1, 1}).indices() == std::vector<std::size_t>{1, 3});
}

TEST_CASE("role validation") {
  Schema schema{{"y", ColumnKind::Continuous, {}},
                {"x", ColumnKind::Continuous, {}},
                {"z", ColumnKind::Continuous, {}}};
  auto d = parse("y,x,z\n1,0,1\n2,1,2\n3,0,3\n4,1,4\n", schema);
  RoleMap roles;
  roles.family = FamilyKind::Linear;
  roles.endpoint = LinearEndpoint{"y", {}};
  roles.treatment = "x";
  roles.partitioning = {"z"};
  CHECK_NOTHROW(validate_roles(d, roles));
  CHECK(treatment_indicator(d, "x") == std::vector<double>{0, 1, 0, 1});

  auto field = [&](RoleMap r) {
    try {
      validate_roles(d, r);
    } catch (const DataError& e) {
      return e.field();
    }
    return std::string("<no error>");
  };
  RoleMap r = roles;
  r.treatment = "";
  CHECK(field(r) == "treatment");
  r = roles;
  r.treatment = "z";
  CHECK(field(r) != "<no error>");
  r = roles;
  r.partitioning = {"y"};
  CHECK(field(r) == "partitioning");
  r = roles;
  r.partitioning = {"z", "z"};
  CHECK(field(r) == "partitioning");

  auto one_arm = parse("y,x,z\n1,1,1\n2,1,2\n", schema);
  CHECK_THROWS_AS(validate_roles(one_arm, roles), DataError);
}
