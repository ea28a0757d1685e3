#include <cmath>

#include "bilag/geometry.hpp"
#include "doctest.h"

using namespace bilag;

namespace {

ChartPtr chart_r2() {
    Domain d;
    d.add("p", -1.0, 1.0);
    d.add("q", -1.0, 1.0);
    return Chart::make("R2", {"p", "q"}, d);
}

ChartPtr chart_r3() {
    Domain d;
    d.add("x", -1.0, 1.0);
    d.add("y", -1.0, 1.0);
    d.add("z", -1.0, 1.0);
    return Chart::make("R3", {"x", "y", "z"}, d);
}

ChartPtr chart_tstar_r2() {
    Domain d;
    for (const char* c : {"p", "q", "xi1", "xi2"}) d.add(c, -1.0, 1.0);
    return Chart::make("TstarR2", {"p", "q", "xi1", "xi2"}, d);
}

ScalarExpr var(const std::string& n) { return ScalarExpr::variable(n); }

// Independent oracle: bracket components from central finite differences of
// the component functions, [X,Y]^j = X^i dY^j/dx^i - Y^i dX^j/dx^i.
std::vector<double> numeric_bracket(const VectorField& x, const VectorField& y, const Point& p,
                                    double h = 1e-5) {
    const auto& coords = x.chart->coordinates();
    const int m = int(coords.size());
    std::vector<double> out(m, 0.0);
    auto xv = x.eval(p), yv = y.eval(p);
    for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) {
            Point pp = p, pm = p;
            pp[coords[i]] += h;
            pm[coords[i]] -= h;
            double dyj = (x.chart->eval(y.components[j], pp) - x.chart->eval(y.components[j], pm)) / (2 * h);
            double dxj = (x.chart->eval(x.components[j], pp) - x.chart->eval(x.components[j], pm)) / (2 * h);
            acc += xv[i] * dyj - yv[i] * dxj;
        }
        out[j] = acc;
    }
    return out;
}

void check_fields_equal(const VectorField& a, const VectorField& b, int samples = 40) {
    for (std::size_t i = 0; i < a.components.size(); ++i)
        CHECK(approx_equal(a.components[i], b.components[i], a.chart->domain(), samples).equal);
}

// dtheta on (p, q, xi1, xi2)
DifferentialForm canonical_dtheta(const ChartPtr& c) {
    DifferentialForm w(c, 2);
    w.add_term({2, 0}, ScalarExpr::rational(1));  // dxi1 ^ dp
    w.add_term({3, 1}, ScalarExpr::rational(1));  // dxi2 ^ dq
    return w;
}

}  // namespace

TEST_CASE("lie_bracket: coordinate fields and the finite-difference oracle") {
    auto c = chart_r2();
    auto dp = VectorField::coordinate(c, 0);
    auto dq = VectorField::coordinate(c, 1);

    // [dp, dq] = 0
    auto b0 = lie_bracket(dp, dq);
    for (const auto& comp : b0.components) CHECK(comp.is_constant(0.0));

    // [dp, q dp] = 0
    auto qdp = dp.scaled(var("q"));
    auto b1 = lie_bracket(dp, qdp);
    for (const auto& comp : b1.components) CHECK(comp.is_constant(0.0));

    // [dq, q p dp] = p dp
    auto qpdp = dp.scaled(var("q") * var("p"));
    auto b2 = lie_bracket(dq, qpdp);
    check_fields_equal(b2, dp.scaled(var("p")));

    // finite-difference oracle at random points
    std::uint64_t state = 11;
    for (int s = 0; s < 20; ++s) {
        Point p = c->sample(state);
        auto num = numeric_bracket(dq, qpdp, p);
        auto sym = b2.eval(p);
        for (int i = 0; i < 2; ++i) CHECK(num[i] == doctest::Approx(sym[i]).epsilon(1e-6));
    }

    auto c3 = chart_r3();
    CHECK_THROWS_AS(lie_bracket(dp, VectorField::coordinate(c3, 0)), Error);
}

TEST_CASE("exterior_derivative: coordinate formulas and d∘d = 0") {
    // d(xi dx) = dxi ^ dx on the cotangent chart of R^1
    Domain d1;
    d1.add("x", -1.0, 1.0);
    d1.add("xi", -1.0, 1.0);
    auto tc = Chart::make("TstarR1", {"x", "xi"}, d1);
    DifferentialForm theta(tc, 1);
    theta.add_term({0}, var("xi"));  // xi dx
    auto dtheta = exterior_derivative(theta);
    // dxi ^ dx = -(dx ^ dxi): coefficient at (0,1) is -1
    CHECK(dtheta.coefficient({0, 1}).is_constant(-1.0));

    // d of a constant-coefficient 2-form vanishes (4-dim chart so the
    // result degree is admissible)
    auto c4 = chart_tstar_r2();
    auto w = canonical_symplectic(c4);
    auto dw = exterior_derivative(w);
    CHECK(dw.terms().empty());

    // top-degree input on a 2-dim chart is an error
    auto c2 = chart_r2();
    DifferentialForm top(c2, 2);
    top.add_term({0, 1}, ScalarExpr::rational(1));
    CHECK_THROWS_AS(exterior_derivative(top), Error);

    // d(x dy) = dx ^ dy, coefficient-differentiation oracle
    auto c3 = chart_r3();
    DifferentialForm xdy(c3, 1);
    xdy.add_term({1}, var("x"));
    auto dxdy = exterior_derivative(xdy);
    CHECK(dxdy.coefficient({0, 1}).is_constant(1.0));
    CHECK(dxdy.terms().size() == 1);

    // d∘d = 0 for 100 random 1-forms on R^3
    std::uint64_t state = 5150;
    for (int i = 0; i < 100; ++i) {
        DifferentialForm a(c3, 1);
        for (int j = 0; j < 3; ++j) {
            ScalarExpr coeff;
            for (int t = 0; t < 3; ++t) {
                double cv = 2.0 * next_uniform(state) - 1.0;
                ScalarExpr mono = ScalarExpr::constant(cv);
                for (int v = 0; v < 3; ++v) {
                    int e = int(next_uniform(state) * 3);
                    mono = mono * ScalarExpr::pow(var(c3->coordinates()[v]), e);
                }
                coeff = coeff + mono;
            }
            a.add_term({j}, coeff);
        }
        auto dda = exterior_derivative(exterior_derivative(a));
        for (const auto& [idx, coeff] : dda.terms())
            CHECK(approx_equal(coeff, ScalarExpr(), c3->domain(), 30).equal);
    }
}

TEST_CASE("pushforward_field: scaling, identity, shear") {
    Domain d1;
    d1.add("x", -1.0, 1.0);
    auto c1 = Chart::make("R1", {"x"}, d1);
    DiffeoSpec twox{c1, c1, {ScalarExpr::rational(2) * var("x")}, {var("x") / ScalarExpr::rational(2)}};
    twox.validate();
    auto px = pushforward_field(twox, VectorField::coordinate(c1, 0));
    CHECK(px.components[0].is_constant(2.0));

    auto c2 = chart_r2();
    auto id = DiffeoSpec::identity(c2);
    auto dq = VectorField::coordinate(c2, 1);
    check_fields_equal(pushforward_field(id, dq), dq);

    // psi(p,q) = (p+q, q): dpsi(dq) = dp + dq
    DiffeoSpec shear{c2, c2, {var("p") + var("q"), var("q")}, {var("p") - var("q"), var("q")}};
    shear.validate();
    auto pushed = pushforward_field(shear, dq);
    CHECK(pushed.components[0].is_constant(1.0));
    CHECK(pushed.components[1].is_constant(1.0));

    DiffeoSpec no_inverse{c2, c2, {var("p") + var("q"), var("q")}, {}};
    CHECK_THROWS_AS(pushforward_field(no_inverse, dq), Error);
}

TEST_CASE("pullback_form: identity, linear scaling, symplectomorphism") {
    Domain d1;
    d1.add("x", -1.0, 1.0);
    auto c1 = Chart::make("R1", {"x"}, d1);
    DiffeoSpec twox{c1, c1, {ScalarExpr::rational(2) * var("x")}, {var("x") / ScalarExpr::rational(2)}};
    auto alpha = DifferentialForm::d_coordinate(c1, 0);
    auto pulled = pullback_form(twox, alpha);
    CHECK(pulled.coefficient({0}).is_constant(2.0));

    auto c2 = chart_r2();
    auto w = canonical_symplectic(c2);
    auto id = DiffeoSpec::identity(c2);
    auto widentity = pullback_form(id, w);
    CHECK(approx_equal(widentity.coefficient({0, 1}), w.coefficient({0, 1}), c2->domain()).equal);

    // psi(p,q) = (p, q + p^2) preserves dq ^ dp
    DiffeoSpec vshear{c2, c2,
                      {var("p"), var("q") + ScalarExpr::pow(var("p"), 2)},
                      {var("p"), var("q") - ScalarExpr::pow(var("p"), 2)}};
    vshear.validate();
    auto back = pullback_form(vshear, w);
    CHECK(approx_equal(back.coefficient({0, 1}), w.coefficient({0, 1}), c2->domain()).equal);
    CHECK(back.terms().size() == 1);
}

TEST_CASE("pullback commutes with d (naturality)") {
    auto c2 = chart_r2();
    DiffeoSpec vshear{c2, c2,
                      {var("p"), var("q") + ScalarExpr::pow(var("p"), 2)},
                      {var("p"), var("q") - ScalarExpr::pow(var("p"), 2)}};
    std::uint64_t state = 31337;
    for (int i = 0; i < 20; ++i) {
        DifferentialForm a(c2, 1);
        for (int j = 0; j < 2; ++j) {
            ScalarExpr coeff;
            for (int t = 0; t < 2; ++t) {
                double cv = 2.0 * next_uniform(state) - 1.0;
                coeff = coeff + ScalarExpr::constant(cv) *
                                    ScalarExpr::pow(var("p"), int(next_uniform(state) * 3)) *
                                    ScalarExpr::pow(var("q"), int(next_uniform(state) * 3));
            }
            a.add_term({j}, coeff);
        }
        auto lhs = pullback_form(vshear, exterior_derivative(a));
        auto rhs = exterior_derivative(pullback_form(vshear, a));
        auto diffw = lhs - rhs;
        for (const auto& [idx, coeff] : diffw.terms())
            CHECK(approx_equal(coeff, ScalarExpr(), c2->domain(), 30).equal);
    }
}

TEST_CASE("pushforward preserves brackets") {
    auto c2 = chart_r2();
    DiffeoSpec vshear{c2, c2,
                      {var("p"), var("q") + ScalarExpr::pow(var("p"), 2)},
                      {var("p"), var("q") - ScalarExpr::pow(var("p"), 2)}};
    auto x = VectorField(c2, {var("q"), var("p") * var("q")});
    auto y = VectorField(c2, {ScalarExpr::rational(1), ScalarExpr::pow(var("p"), 2)});
    auto lhs = pushforward_field(vshear, lie_bracket(x, y));
    auto rhs = lie_bracket(pushforward_field(vshear, x), pushforward_field(vshear, y));
    std::uint64_t state = 99;
    for (int s = 0; s < 30; ++s) {
        Point p = c2->sample(state);
        auto lv = lhs.eval(p), rv = rhs.eval(p);
        for (int i = 0; i < 2; ++i) CHECK(std::abs(lv[i] - rv[i]) <= 1e-8 * (1 + std::abs(lv[i])));
    }
}

TEST_CASE("frobenius_check: involutive and non-involutive frames") {
    auto c2 = chart_r2();
    auto dp = VectorField::coordinate(c2, 0);
    auto dq = VectorField::coordinate(c2, 1);

    CHECK(frobenius_check({c2, {dp}}).involutive);
    CHECK(frobenius_check({c2, {dp, dq}}).involutive);

    // {d/dx + y d/dz, d/dy} on R^3 is not involutive
    auto c3 = chart_r3();
    auto x1 = VectorField(c3, {ScalarExpr::rational(1), ScalarExpr(), var("y")});
    auto x2 = VectorField::coordinate(c3, 1);
    auto rep = frobenius_check({c3, {x1, x2}});
    CHECK_FALSE(rep.involutive);
    CHECK(rep.max_residual > 0.5);
    CHECK(rep.failure.has_value());

    // rank deficiency raises: two parallel fields
    auto dx = VectorField::coordinate(c3, 0);
    CHECK_THROWS_AS(frobenius_check({c3, {dx, dx.scaled(ScalarExpr::rational(2))}}), Error);
}

TEST_CASE("is_symplectic: canonical forms and a degenerate example") {
    auto c2 = chart_r2();
    CHECK(is_symplectic(canonical_symplectic(c2)).symplectic);

    auto c4 = chart_tstar_r2();
    CHECK(is_symplectic(canonical_dtheta(c4)).symplectic);

    // p dq ^ dp on a strip around p = 0: |det| = p^2 below threshold
    Domain dthin;
    dthin.add("p", -1e-6, 1e-6);
    dthin.add("q", -1.0, 1.0);
    auto cthin = Chart::make("thin", {"p", "q"}, dthin);
    DifferentialForm pw(cthin, 2);
    pw.add_term({0, 1}, -var("p"));  // p dq ^ dp
    auto check = is_symplectic(pw);
    CHECK_FALSE(check.symplectic);
    CHECK(check.reason.find("degenerate") != std::string::npos);

    // odd dimension reports a reason instead of throwing
    auto c3 = chart_r3();
    DifferentialForm w3(c3, 2);
    w3.add_term({0, 1}, ScalarExpr::rational(1));
    auto odd = is_symplectic(w3);
    CHECK_FALSE(odd.symplectic);
    CHECK(odd.reason.find("odd") != std::string::npos);
}

TEST_CASE("is_lagrangian: rank and pairing conditions") {
    auto c2 = chart_r2();
    auto w = canonical_symplectic(c2);
    auto dp = VectorField::coordinate(c2, 0);
    auto dq = VectorField::coordinate(c2, 1);

    CHECK(is_lagrangian({c2, {dp}}, w).lagrangian);

    auto both = is_lagrangian({c2, {dp, dq}}, w);
    CHECK_FALSE(both.lagrangian);
    CHECK(both.measured_rank == 2);

    // conormal frame {d/dp, d/dxi2} on T*R^2 with dtheta
    auto c4 = chart_tstar_r2();
    auto f = FoliationFrame{c4, {VectorField::coordinate(c4, 0), VectorField::coordinate(c4, 3)}};
    CHECK(is_lagrangian(f, canonical_dtheta(c4)).lagrangian);
}

TEST_CASE("validate_bilagrangian: canonical, degenerate, curved") {
    auto c2 = chart_r2();
    auto w = canonical_symplectic(c2);
    auto dp = VectorField::coordinate(c2, 0);
    auto dq = VectorField::coordinate(c2, 1);

    auto good = validate_bilagrangian({c2, w, {c2, {dp}}, {c2, {dq}}});
    CHECK(good.pass);
    CHECK(good.min_transversal_sv > 0.9);

    auto bad = validate_bilagrangian({c2, w, {c2, {dp}}, {c2, {dp}}});
    CHECK_FALSE(bad.pass);
    CHECK_FALSE(bad.transversal);
    CHECK(bad.symplectic);

    // curved example: F2 = {dq + q p dp}
    auto e2 = dq + dp.scaled(var("q") * var("p"));
    auto curved = validate_bilagrangian({c2, w, {c2, {dp}}, {c2, {e2}}});
    CHECK(curved.pass);
}

TEST_CASE("any single nonvanishing field on R^2 is Lagrangian for omega") {
    auto c2 = chart_r2();
    auto w = canonical_symplectic(c2);
    std::uint64_t state = 4242;
    for (int i = 0; i < 10; ++i) {
        auto f = VectorField(c2, {ScalarExpr::constant(1.0 + next_uniform(state)),
                                  ScalarExpr::constant(next_uniform(state)) * var("p")});
        CHECK(is_lagrangian({c2, {f}}, w).lagrangian);
    }
}

TEST_CASE("adapted_chart_check: canonical model and failures") {
    auto c2 = chart_r2();
    auto w = canonical_symplectic(c2);
    auto dp = VectorField::coordinate(c2, 0);
    auto dq = VectorField::coordinate(c2, 1);

    CHECK(adapted_chart_check({c2, w, {c2, {dp}}, {c2, {dq}}}));

    auto e2 = dq + dp.scaled(var("q") * var("p"));
    CHECK_FALSE(adapted_chart_check({c2, w, {c2, {dp}}, {c2, {e2}}}));

    auto w2 = w.scaled(ScalarExpr::rational(2));
    CHECK_FALSE(adapted_chart_check({c2, w2, {c2, {dp}}, {c2, {dq}}}));
}

TEST_CASE("wedge, interior product, frame expansion") {
    auto c2 = chart_r2();
    auto dpf = DifferentialForm::d_coordinate(c2, 0);
    auto dqf = DifferentialForm::d_coordinate(c2, 1);
    auto w = wedge(dqf, dpf);  // dq ^ dp
    CHECK(w.coefficient({0, 1}).is_constant(-1.0));
    CHECK(wedge(dpf, dpf).terms().empty());

    // i_v (dq ^ dp) with v = p dp + q dq -> q dp - p dq
    auto v = VectorField(c2, {var("p"), var("q")});
    auto contracted = interior_product(canonical_symplectic(c2), v);
    CHECK(approx_equal(contracted.coefficient({0}), var("q"), c2->domain()).equal);
    CHECK(approx_equal(contracted.coefficient({1}), -var("p"), c2->domain()).equal);

    // expand (q p, 1) in the curved frame {dp, dq + q p dp}
    auto dp = VectorField::coordinate(c2, 0);
    auto dq = VectorField::coordinate(c2, 1);
    auto e2 = dq + dp.scaled(var("q") * var("p"));
    auto coeffs = expand_in_frame({dp, e2}, VectorField(c2, {var("q") * var("p"), ScalarExpr::rational(1)}));
    CHECK(approx_equal(coeffs[0], ScalarExpr(), c2->domain()).equal);
    CHECK(approx_equal(coeffs[1], ScalarExpr::rational(1), c2->domain()).equal);
}

TEST_CASE("DiffeoSpec numeric inverse fallback") {
    Domain d;
    d.add("x", 0.0, 1.0, true);
    d.add("y", 0.0, 1.0);
    auto torus = Chart::make("T", {"x", "y"}, d);
    auto twopi = ScalarExpr::constant(2.0 * M_PI);
    DiffeoSpec psi{torus, torus,
                   {var("x") + ScalarExpr::constant(0.05) * ScalarExpr::sin(twopi * var("x")) / twopi,
                    var("y")},
                   {}};
    psi.validate(25);
    std::uint64_t state = 5;
    for (int i = 0; i < 10; ++i) {
        Point p = torus->sample(state);
        Point q = psi.apply_inverse(psi.apply(p));
        double dx = std::abs(q["x"] - p["x"]);
        dx = std::min(dx, 1.0 - dx);
        CHECK(dx < 1e-10);
        CHECK(q["y"] == doctest::Approx(p["y"]));
    }
}
