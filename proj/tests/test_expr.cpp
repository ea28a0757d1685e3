#include <cmath>

#include "bilag/expr.hpp"
#include "doctest.h"

using namespace bilag;

namespace {

ScalarExpr X() { return ScalarExpr::variable("x"); }
ScalarExpr Y() { return ScalarExpr::variable("y"); }

Domain xy_box() {
    Domain d;
    d.add("x", -1.0, 1.0);
    d.add("y", -1.0, 1.0);
    return d;
}

// Random polynomial/trig expression in x and y, depth-limited, with tame
// coefficients so finite differences stay well-conditioned.
ScalarExpr random_poly_trig(std::uint64_t& state, int depth) {
    double r = next_uniform(state);
    if (depth <= 0 || r < 0.25) {
        double leaf = next_uniform(state);
        if (leaf < 0.4) return X();
        if (leaf < 0.8) return Y();
        return ScalarExpr::rational(std::int64_t(std::floor(next_uniform(state) * 7)) - 3, 2);
    }
    if (r < 0.45) return random_poly_trig(state, depth - 1) + random_poly_trig(state, depth - 1);
    if (r < 0.65) return random_poly_trig(state, depth - 1) * random_poly_trig(state, depth - 1);
    if (r < 0.75) return random_poly_trig(state, depth - 1) - random_poly_trig(state, depth - 1);
    if (r < 0.85) return ScalarExpr::pow(random_poly_trig(state, depth - 1), 2);
    if (r < 0.93)
        return ScalarExpr::sin(ScalarExpr::rational(1, 2) * random_poly_trig(state, depth - 1));
    return ScalarExpr::cos(ScalarExpr::rational(1, 2) * random_poly_trig(state, depth - 1));
}

}  // namespace

TEST_CASE("diff: power, product and constant rules") {
    Domain d = xy_box();
    auto x2 = ScalarExpr::pow(X(), 2);
    CHECK(approx_equal(x2.diff("x"), ScalarExpr::rational(2) * X(), d).equal);

    auto e = ScalarExpr::sin(X()) * Y();
    CHECK(approx_equal(e.diff("x"), ScalarExpr::cos(X()) * Y(), d).equal);

    auto c = ScalarExpr::rational(7, 3);
    CHECK(c.diff("x").is_constant(0.0));
}

TEST_CASE("eval: basic values and domain errors") {
    CHECK(( X() + Y() ).eval({{"x", 1.0}, {"y", 2.0}}) == doctest::Approx(3.0));
    CHECK(ScalarExpr::sin(X()).eval({{"x", 0.0}}) == doctest::Approx(0.0));

    auto inv = ScalarExpr::rational(1) / X();
    CHECK_THROWS_AS(inv.eval({{"x", 0.0}}), DomainError);
    try {
        inv.eval({{"x", 0.0}});
    } catch (const DomainError& e) {
        CHECK(e.subexpression().find("x") != std::string::npos);
    }
    CHECK_THROWS_AS(ScalarExpr::log(X()).eval({{"x", -1.0}}), DomainError);
    CHECK_THROWS_AS(X().eval({{"y", 1.0}}), Error);
}

TEST_CASE("approx_equal: identities, witnesses, inconclusive") {
    Domain d = xy_box();
    auto lhs = ScalarExpr::pow(X() + Y(), 2);
    auto rhs = ScalarExpr::pow(X(), 2) + ScalarExpr::rational(2) * X() * Y() + ScalarExpr::pow(Y(), 2);
    CHECK(approx_equal(lhs, rhs, d, 100, 1e-9).equal);

    auto r = approx_equal(X(), X() + ScalarExpr::constant(1e-3), d, 100, 1e-9);
    CHECK_FALSE(r.equal);
    REQUIRE(r.witness.has_value());
    CHECK(r.witness->count("x") == 1);

    auto pyth = ScalarExpr::pow(ScalarExpr::sin(X()), 2) + ScalarExpr::pow(ScalarExpr::cos(X()), 2);
    CHECK(approx_equal(pyth, ScalarExpr::rational(1), d).equal);

    // Both sides undefined on the whole sampling region.
    Domain neg;
    neg.add("x", -2.0, -1.0);
    CHECK_THROWS_AS(approx_equal(ScalarExpr::log(X()), ScalarExpr::log(X()), neg, 20, 1e-9),
                    InconclusiveError);

    CHECK_THROWS_AS(approx_equal(X(), X(), d, 0, 1e-9), Error);
    CHECK_THROWS_AS(approx_equal(X(), X(), d, 10, 0.0), Error);
}

TEST_CASE("approx_equal is symmetric and reflexive") {
    Domain d = xy_box();
    std::uint64_t state = 42;
    for (int i = 0; i < 20; ++i) {
        auto a = random_poly_trig(state, 3);
        auto b = random_poly_trig(state, 3);
        CHECK(approx_equal(a, a, d).equal);
        CHECK(approx_equal(a, b, d, 50).equal == approx_equal(b, a, d, 50).equal);
    }
}

TEST_CASE("derivatives agree with central finite differences") {
    // 200 random polynomial/trig expressions, h = 1e-4, tolerance 10 h^2
    // relative, at non-singular interior points.
    const double h = 1e-4;
    std::uint64_t state = 2024;
    Domain d = xy_box();
    int checked = 0;
    for (int i = 0; i < 200; ++i) {
        ScalarExpr e = random_poly_trig(state, 3);
        ScalarExpr de = e.diff("x");
        for (int s = 0; s < 5; ++s) {
            Point p = d.sample(state);
            Point pp = p, pm = p;
            pp["x"] += h;
            pm["x"] -= h;
            double fd = (e.eval(pp) - e.eval(pm)) / (2 * h);
            double sym = de.eval(p);
            CHECK(std::abs(fd - sym) <= 10 * h * h * (1.0 + std::abs(sym)));
            ++checked;
        }
    }
    CHECK(checked == 1000);
}

TEST_CASE("parser: grammar, precedence, round trips") {
    Domain d = xy_box();
    CHECK(approx_equal(parse_expr("x^2 + 2*x*y + y^2"), ScalarExpr::pow(X() + Y(), 2), d).equal);
    CHECK(approx_equal(parse_expr("sin(x)*cos(y) - exp(x/4)"),
                       ScalarExpr::sin(X()) * ScalarExpr::cos(Y()) -
                           ScalarExpr::exp(X() / ScalarExpr::rational(4)),
                       d).equal);
    CHECK(parse_expr("3/4").is_constant(0.75));
    CHECK(parse_expr("-x^2").eval({{"x", 2.0}}) == doctest::Approx(-4.0));
    CHECK(parse_expr("2^(-1)").is_constant(0.5));
    CHECK(parse_expr("1.5e2").is_constant(150.0));
    CHECK(parse_expr("x - y - 1").eval({{"x", 5.0}, {"y", 2.0}}) == doctest::Approx(2.0));

    CHECK_THROWS_AS(parse_expr("x^y"), ParseError);
    CHECK_THROWS_AS(parse_expr("sin x"), ParseError);
    CHECK_THROWS_AS(parse_expr("(x+1"), ParseError);
    CHECK_THROWS_AS(parse_expr("x +"), ParseError);
    CHECK_THROWS_AS(parse_expr("1..2"), ParseError);

    // to_string output reparses to the same function.
    std::uint64_t state = 77;
    for (int i = 0; i < 40; ++i) {
        ScalarExpr e = random_poly_trig(state, 3);
        ScalarExpr back = parse_expr(e.to_string());
        CHECK(approx_equal(e, back, d, 50).equal);
    }
}

TEST_CASE("constant folding keeps rationals exact") {
    auto third = ScalarExpr::rational(1, 3);
    CHECK((third * ScalarExpr::rational(3)).is_constant(1.0));
    CHECK((third + third + third).is_constant(1.0));
    CHECK(parse_expr("1/3 + 1/3 + 1/3").is_constant(1.0));
    // 0/1 absorption
    CHECK((X() * ScalarExpr::rational(0)).is_constant(0.0));
    CHECK((X() + ScalarExpr::rational(0)).to_string() == "x");
    CHECK(ScalarExpr::pow(X(), 0).is_constant(1.0));
    // division by zero is not folded away; it surfaces at evaluation
    auto bad = ScalarExpr::rational(1) / ScalarExpr::rational(0);
    CHECK_THROWS_AS(bad.eval({}), DomainError);
}

TEST_CASE("substitution composes expressions") {
    Domain d = xy_box();
    auto e = ScalarExpr::pow(X(), 2) + Y();
    auto sub = e.substitute({{"x", Y() + ScalarExpr::rational(1)}});
    auto expect = ScalarExpr::pow(Y() + ScalarExpr::rational(1), 2) + Y();
    CHECK(approx_equal(sub, expect, d).equal);
    CHECK(sub.variables() == std::set<std::string>{"y"});
}

TEST_CASE("compiled expressions agree with tree evaluation") {
    std::uint64_t state = 9001;
    Domain d = xy_box();
    for (int i = 0; i < 30; ++i) {
        ScalarExpr e = random_poly_trig(state, 4);
        CompiledExpr ce(e, {"x", "y"});
        for (int s = 0; s < 10; ++s) {
            Point p = d.sample(state);
            double vals[2] = {p["x"], p["y"]};
            CHECK(ce.eval(vals) == doctest::Approx(e.eval(p)).epsilon(1e-12));
        }
    }
    // domain errors become NaN in compiled form
    CompiledExpr bad(ScalarExpr::log(X()), {"x"});
    double v = -1.0;
    CHECK(std::isnan(bad.eval(&v)));
}

TEST_CASE("domain periodic reduction") {
    Domain d;
    d.add("x", 0.0, 1.0, true);
    d.add("y", 0.0, 2.0);
    CHECK_THROWS_AS(d.add("z", 0.0, 2.0, true), Error);
    Point p = d.reduce({{"x", 2.25}, {"y", 1.5}});
    CHECK(p["x"] == doctest::Approx(0.25));
    CHECK(p["y"] == doctest::Approx(1.5));
    Point q = d.reduce({{"x", -0.25}, {"y", 0.0}});
    CHECK(q["x"] == doctest::Approx(0.75));
}
