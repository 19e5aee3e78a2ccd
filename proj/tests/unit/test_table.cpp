#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "hamlearn/errors.hpp"
#include "hamlearn/table.hpp"

using namespace hamlearn;

TEST_CASE("table text form") {
  Table t("demo", {"a", "b"});
  t.add_row({"1", Table::num(0.1)});
  t.add_row({"x", Table::num(-2.5e-17)});
  const std::string s = t.str();
  CHECK(s.rfind("# hamlearn-table/1 demo\na\tb\n", 0) == 0);
  const Table back = Table::parse(s);
  CHECK(back.name() == "demo");
  CHECK(back.columns() == t.columns());
  CHECK(back.rows() == t.rows());
  CHECK_THROWS_AS(t.add_row({"only one"}), std::invalid_argument);
}

TEST_CASE("numbers round-trip exactly") {
  for (double v : {0.1, 1.0 / 3.0, -1e-300, 123456789.125, 0.0}) {
    CHECK(std::strtod(Table::num(v).c_str(), nullptr) == v);
  }
  CHECK(Table::num(0.1) == "0.1");
  CHECK(Table::num(3) == "3");
}

TEST_CASE("malformed tables are rejected") {
  CHECK_THROWS_AS(Table::parse("a\tb\n1\t2\n"), FormatError);
  CHECK_THROWS_AS(Table::parse("# hamlearn-table/1 x\na\tb\n1\n"), FormatError);
}
