#include <doctest.h>

#include <random>

#include "crowdlens/error.hpp"
#include "crowdlens/expr.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace crowdlens;
using fixtures::base_metric;
using fixtures::derived_metric;

TEST_CASE("precedence and parentheses") {
  auto e = parse_expression("a + b * 2");
  CHECK(e == Expr::binary(BinaryOp::Add, Expr::metric_ref("a"),
                          Expr::binary(BinaryOp::Mul, Expr::metric_ref("b"), Expr::number(2))));
  auto p = parse_expression("(a + b) / capacity");
  CHECK(p == Expr::binary(BinaryOp::Div, Expr::binary(BinaryOp::Add, Expr::metric_ref("a"), Expr::metric_ref("b")),
                          Expr::metric_ref("capacity")));
  CHECK(parse_expression("a - b - c") ==
        Expr::binary(BinaryOp::Sub, Expr::binary(BinaryOp::Sub, Expr::metric_ref("a"), Expr::metric_ref("b")),
                     Expr::metric_ref("c")));
  CHECK(parse_expression("-a * b") ==
        Expr::binary(BinaryOp::Mul, Expr::neg(Expr::metric_ref("a")), Expr::metric_ref("b")));
  CHECK(parse_expression("--a") == Expr::neg(Expr::neg(Expr::metric_ref("a"))));
}

TEST_CASE("syntax errors carry the byte offset") {
  auto offset_of = [](std::string_view text) -> std::size_t {
    try {
      parse_expression(text);
    } catch (const ParseError& e) {
      return e.offset();
    }
    return std::string::npos;
  };
  CHECK(offset_of("a + * b") == 4);
  CHECK(offset_of("") == 0);
  CHECK(offset_of("   ") == 0);
  CHECK(offset_of("(a + b") == 6);
  CHECK(offset_of("a b") == 2);
  CHECK(offset_of("a + 2x") == 5);
  CHECK(offset_of("a $ b") == 2);
  CHECK(offset_of("a)") == 1);
  try {
    parse_expression("a + * b");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("offset 4") != std::string::npos);
  }
}

TEST_CASE("deep nesting is bounded") {
  std::string deep(100, '(');
  deep += "a";
  deep += std::string(100, ')');
  CHECK(parse_expression(deep) == Expr::metric_ref("a"));
  std::string too_deep(5000, '(');
  CHECK_THROWS_AS(parse_expression(too_deep + "a" + std::string(5000, ')')), ParseError);
}

TEST_CASE("evaluate examples") {
  CHECK(evaluate(parse_expression("a + b * 2"), {{"a", 1.0}, {"b", 2.0}}) == 5.0);
  CHECK(!evaluate(parse_expression("roaming / capacity"), {{"roaming", 10.0}, {"capacity", 0.0}}));
  CHECK(!evaluate(parse_expression("a + b"), {{"a", 1.0}, {"b", std::nullopt}}));
  CHECK(!evaluate(parse_expression("a * 0"), {{"a", std::nullopt}}));
  CHECK(!evaluate(parse_expression("a * a * a"), {{"a", 1e200}}));
  CHECK(evaluate(parse_expression("-a"), {{"a", 4.0}}) == -4.0);
  CHECK(evaluate(parse_expression("7"), {}) == 7.0);
  CHECK_THROWS_AS(evaluate(parse_expression("a + ghost"), {{"a", 1.0}}), UnboundIdentifierError);
}

TEST_CASE("canonical printing") {
  CHECK(parse_expression("(a+b)*c-(d-e)").to_string() == "(a + b) * c - (d - e)");
  CHECK(parse_expression("a/(b/c)").to_string() == "a / (b / c)");
  CHECK(parse_expression("((a))").to_string() == "a");
  CHECK(parse_expression("-(a+b)").to_string() == "-(a + b)");
  CHECK(parse_expression("0.1 + 2.50").to_string() == "0.1 + 2.5");
  CHECK(parse_expression("a - (b + c)").to_string() == "a - (b + c)");
  CHECK(parse_expression("a + (b + c)").to_string() == "a + (b + c)");
}

TEST_CASE("references and depth") {
  auto e = parse_expression("b + a * b / capacity");
  CHECK(e.references() == std::vector<std::string>{"b", "a", "capacity"});
  CHECK(parse_expression("a").depth() == 1);
  CHECK(parse_expression("a + b * c").depth() == 3);
}

TEST_CASE("property: parse(print(e)) == e and evaluation matches the oracle") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 500; ++i) {
    Expr e = oracle::random_expr(rng, 1 + i % 6);
    CAPTURE(e.to_string());
    Expr back = parse_expression(e.to_string());
    CHECK(back == e);
    auto b = oracle::random_bindings(rng);
    Value expected = oracle::eval(e, b);
    Value actual = evaluate(back, b);
    REQUIRE(expected.has_value() == actual.has_value());
    if (expected) CHECK(*actual == *expected);
    if (actual) CHECK(std::isfinite(*actual));
  }
}

TEST_CASE("compiled program binds by slot") {
  CompiledExpr c(parse_expression("x / y + x"));
  REQUIRE(c.slots() == std::vector<std::string>{"x", "y"});
  std::vector<Value> v{6.0, 3.0};
  CHECK(c.run(v) == 8.0);
  v[1] = 0.0;
  CHECK(!c.run(v));
  v[0] = std::nullopt;
  v[1] = 1.0;
  CHECK(!c.run(v));
}

TEST_CASE("metric graph ordering") {
  std::vector<MetricDef> defs{base_metric("total"), base_metric("roaming"), derived_metric("ratio", "roaming / total")};
  CHECK(resolve_metric_graph(defs) == std::vector<std::string>{"total", "roaming", "ratio"});

  std::vector<MetricDef> chained{derived_metric("c", "b * 2"), derived_metric("b", "a + 1"), base_metric("a")};
  CHECK(resolve_metric_graph(chained) == std::vector<std::string>{"a", "b", "c"});

  std::vector<MetricDef> with_capacity{base_metric("roaming"), derived_metric("density", "roaming / capacity")};
  CHECK(resolve_metric_graph(with_capacity) == std::vector<std::string>{"roaming", "density"});
}

TEST_CASE("metric graph cycles and dangling references") {
  std::vector<MetricDef> cyc{derived_metric("a", "b + 1"), derived_metric("b", "a + 1")};
  try {
    resolve_metric_graph(cyc);
    FAIL("expected CycleError");
  } catch (const CycleError& e) {
    std::set<std::string> ids(e.ids().begin(), e.ids().end());
    CHECK(ids == std::set<std::string>{"a", "b"});
  }
  std::vector<MetricDef> self{derived_metric("a", "a * 2")};
  CHECK_THROWS_AS(resolve_metric_graph(self), CycleError);

  std::vector<MetricDef> ghost{base_metric("x"), derived_metric("y", "x + ghost")};
  try {
    resolve_metric_graph(ghost);
    FAIL("expected UnknownMetricError");
  } catch (const UnknownMetricError& e) {
    CHECK(e.id() == "ghost");
  }
}

TEST_CASE("catalog validation") {
  CHECK_THROWS_AS(MetricCatalog({base_metric("a"), base_metric("a")}), ConfigError);
  CHECK_THROWS_AS(MetricCatalog({base_metric("capacity")}), ConfigError);
  CHECK_THROWS_AS(MetricCatalog({base_metric("1abc")}), ConfigError);
  CHECK_THROWS_AS(MetricCatalog({base_metric("a", 0.0)}), ConfigError);
  CHECK_THROWS_AS(MetricCatalog({base_metric("a"), derived_metric("b", "a +")}), ParseError);

  MetricCatalog cat({base_metric("total"), base_metric("roaming"), derived_metric("density", "roaming / capacity"),
                     derived_metric("share", "density * total")});
  CHECK(cat.evaluation_order() == std::vector<std::string>{"total", "roaming", "density", "share"});
  auto roaming = cat.index_of("roaming");
  auto deps = cat.dependents_of(roaming);
  CHECK(deps.size() == 2);
  CHECK(cat.base_dependencies(cat.index_of("share")).size() == 2);
  CHECK_THROWS_AS(cat.index_of("nope"), UnknownMetricError);
}

TEST_CASE("identifier rule") {
  CHECK(is_identifier("a"));
  CHECK(is_identifier("_x9"));
  CHECK(is_identifier("Roaming_Density"));
  CHECK(!is_identifier(""));
  CHECK(!is_identifier("9a"));
  CHECK(!is_identifier("a-b"));
}
