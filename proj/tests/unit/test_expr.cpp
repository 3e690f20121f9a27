#include <cmath>
#include <vector>

#include "doctest.h"

#include "affmart/expr.hpp"

using affmart::Expr;
using affmart::ExprError;

TEST_SUITE("expr") {

TEST_CASE("precedence and associativity") {
    CHECK(Expr::parse("1+2*3").eval_index(0) == 7.0);
    CHECK(Expr::parse("2^3^2").eval_index(0) == 512.0);
    CHECK(Expr::parse("-2^2").eval_index(0) == -4.0);
    CHECK(Expr::parse("(1+2)*3").eval_index(0) == 9.0);
    CHECK(Expr::parse("8/4/2").eval_index(0) == 1.0);
    CHECK(Expr::parse("1 - 2 - 3").eval_index(0) == -4.0);
}

TEST_CASE("index and coordinates") {
    const Expr w = Expr::parse("1/((1+n)*n^2)");
    CHECK(w.uses_index());
    CHECK(w.eval_index(3) == doctest::Approx(1.0 / 36.0));
    const Expr f = Expr::parse("xi1*xi2 + exp(xi2) - ln(abs(xi1))");
    CHECK(f.max_coordinate() == 2);
    const std::vector<double> p{-2.0, 0.5};
    CHECK(f.eval_point(p) == doctest::Approx(-1.0 + std::exp(0.5) - std::log(2.0)));
    CHECK(Expr::parse("min(3, max(1, 2))").eval_index(0) == 2.0);
}

TEST_CASE("truncation helper clamps") {
    const Expr h = Expr::parse(affmart::truncation_expr("xi1"));
    for (double x : {-5.0, -1.0, -0.3, 0.0, 0.7, 1.0, 9.0}) {
        const std::vector<double> p{x};
        CHECK(h.eval_point(p) == std::max(-1.0, std::min(1.0, x)));
    }
}

TEST_CASE("source kept verbatim") {
    const std::string s = "  1/( n ^2 )";
    CHECK(Expr::parse(s).source() == s);
}

TEST_CASE("syntax errors carry a position") {
    CHECK_THROWS_AS(Expr::parse("1+"), ExprError);
    CHECK_THROWS_AS(Expr::parse("foo(1)"), ExprError);
    CHECK_THROWS_AS(Expr::parse("(1+2"), ExprError);
    CHECK_THROWS_AS(Expr::parse("xi0"), ExprError);
    try {
        Expr::parse("1 + * 2");
        FAIL("no throw");
    } catch (const ExprError& e) {
        CHECK(e.position() >= 3);
    }
}

TEST_CASE("missing coordinate is an error at evaluation") {
    const Expr f = Expr::parse("xi3");
    const std::vector<double> p{1.0};
    CHECK_THROWS(f.eval_point(p));
}

}
