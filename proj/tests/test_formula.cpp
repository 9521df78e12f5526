#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "sqpn/errors.hpp"
#include "sqpn/formula.hpp"

using namespace sqpn;

TEST_CASE("precedence: negation binds tighter than and, and tighter than or") {
  BooleanFormula f = parse_formula("!A & B | C");
  // ((!A & B) | C)
  CHECK(f.kind == BooleanFormula::Kind::disjunction);
  CHECK(f.operands[0].kind == BooleanFormula::Kind::conjunction);
  CHECK(f.operands[0].operands[0].kind == BooleanFormula::Kind::negation);

  std::map<std::string, bool> v{{"A", true}, {"B", true}, {"C", false}};
  CHECK_FALSE(f.evaluate(v));
  v["A"] = false;
  CHECK(f.evaluate(v));
}

TEST_CASE("parentheses override precedence") {
  BooleanFormula f = parse_formula("!(A & (B | C))");
  std::map<std::string, bool> v{{"A", true}, {"B", false}, {"C", true}};
  CHECK_FALSE(f.evaluate(v));
  v["A"] = false;
  CHECK(f.evaluate(v));
}

TEST_CASE("variables are collected sorted and unique") {
  BooleanFormula f = parse_formula("X2 & (X1 | X2) & !X10");
  CHECK(formula_variables(f) == std::vector<std::string>{"X1", "X10", "X2"});
  CHECK(f.operator_count() == 4);
}

TEST_CASE("round trip through to_string") {
  for (const char* text : {"X1 | X2 | X3", "(X1 & !X2) | (!X1 & X2)", "!(a & b) | c"}) {
    BooleanFormula f = parse_formula(text);
    BooleanFormula again = parse_formula(to_string(f));
    for (int bits = 0; bits < 8; ++bits) {
      std::map<std::string, bool> v;
      int i = 0;
      for (const auto& name : formula_variables(f)) v[name] = (bits >> i++) & 1;
      CHECK(f.evaluate(v) == again.evaluate(v));
    }
  }
}

TEST_CASE("parse errors carry positions") {
  CHECK_THROWS_AS(parse_formula("A &"), ParseError);
  CHECK_THROWS_AS(parse_formula("(A | B"), ParseError);
  CHECK_THROWS_AS(parse_formula("A B"), ParseError);
  CHECK_THROWS_AS(parse_formula(""), ParseError);
  CHECK_THROWS_AS(parse_formula("1A"), ParseError);
}

TEST_CASE("n-ary chains parse left nested with binary operators") {
  BooleanFormula f = parse_formula("A & B & C");
  CHECK(f.kind == BooleanFormula::Kind::conjunction);
  CHECK(f.operands.size() == 2);
  CHECK(f.operands[0].kind == BooleanFormula::Kind::conjunction);
  CHECK(f.operands[1].name == "C");
}
