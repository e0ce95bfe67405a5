#include <doctest.h>

#include <fstream>
#include <sstream>

#include "mclose/parser.hpp"

using namespace mclose;
using doctest::Approx;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kModels = MCLOSE_MODELS_DIR;

}  // namespace

TEST_CASE("Van der Pol model parses to the expected structure") {
    SdeModel m = parse_model(read_file(kModels + "/vdp.model"), "vdp");
    CHECK(m.space.dim() == 2);
    CHECK(m.space.kinds[0] == StateKind::Linear);
    CHECK(m.space.kinds[1] == StateKind::Linear);
    CHECK(m.params.size() == 3);
    CHECK(m.params.at("A") == 2.5);
    CHECK(m.params.at("eps") == 0.1);
    CHECK(m.params.at("w") == Approx(120.0 * 3.14159265358979323846).epsilon(1e-15));
    CHECK(m.init == std::vector<double>{0.1, 0.1});
    CHECK(m.channels() == 1);

    // drift x1 = x2
    REQUIRE(m.drift[0].terms.size() == 1);
    CHECK(m.drift[0].terms[0].basis == ExtIndex({0, 1}));

    // drift x2: eps*x2 - eps*x1^2*x2 - w^2*x1 + A*cos(w t), four terms
    REQUIRE(m.drift[1].terms.size() == 4);
    const double w = m.params.at("w");
    for (const auto& term : m.drift[1].terms) {
        if (term.basis == ExtIndex({0, 1}) && !term.has_harmonic())
            CHECK(term.coeff.real() == Approx(0.1));
        else if (term.basis == ExtIndex({2, 1}))
            CHECK(term.coeff.real() == Approx(-0.1));
        else if (term.basis == ExtIndex({1, 0}))
            CHECK(term.coeff.real() == Approx(-w * w));
        else {
            CHECK(term.basis.is_zero());
            CHECK(term.freq == Approx(w));
            CHECK(term.coeff.real() == Approx(2.5));
        }
    }

    // noise x2 = A, constant
    REQUIRE(m.noise[1][0].terms.size() == 1);
    CHECK(m.noise[1][0].terms[0].coeff == Complex{2.5, 0.0});
    CHECK(m.noise[0][0].is_zero());
}

TEST_CASE("pendulum model expands sin via Euler's relation") {
    SdeModel m = parse_model(read_file(kModels + "/pendulum.model"), "pendulum");
    CHECK(m.space.kinds[0] == StateKind::Angle);
    CHECK(m.space.kinds[1] == StateKind::Linear);
    CHECK(m.init[0] == Approx(3.14159265358979323846 / 6.0));

    // drift x2 = -(k/m) x2 + (j g/2l) e^{j x1} - (j g/2l) e^{-j x1}
    REQUIRE(m.drift[1].terms.size() == 3);
    const double g_over_2l = 9.8 / 2.0;
    for (const auto& term : m.drift[1].terms) {
        CHECK_FALSE(term.has_harmonic());
        if (term.basis == ExtIndex({0, 1}))
            CHECK(term.coeff == Complex{-0.5, 0.0});
        else if (term.basis == ExtIndex({1, 0}))
            CHECK(std::abs(term.coeff - Complex{0.0, g_over_2l}) < 1e-15);
        else {
            CHECK(term.basis == ExtIndex({-1, 0}));
            CHECK(std::abs(term.coeff - Complex{0.0, -g_over_2l}) < 1e-15);
        }
    }
}

TEST_CASE("parse errors carry positions") {
    // empty drift expression
    CHECK_THROWS_AS(parse_model("states: x1\ndrift x1 =\n"), ParseError);
    try {
        parse_model("states: x1\ndrift x1 =\n");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(e.column() > 0);
    }

    // undeclared identifiers
    CHECK_THROWS_AS(parse_model("states: x\ndrift x = y\n"), ParseError);
    CHECK_THROWS_AS(parse_model("states: x\ndrift x = k*x\n"), ParseError);

    // trig of a linear state
    CHECK_THROWS_AS(parse_model("states: x\ndrift x = sin(x)\n"), ParseError);

    // bare monomial of an angle state
    CHECK_THROWS_AS(parse_model("states: a: angle\ndrift a = a\n"), ParseError);

    // two harmonic factors in one term
    CHECK_THROWS_AS(parse_model("states: x\ndrift x = cos(2*t)*cos(3*t)\n"), ParseError);
    CHECK_THROWS_AS(parse_model("states: x\ndrift x = cos(2*t)^2\n"), ParseError);

    // division by a non-constant
    CHECK_THROWS_AS(parse_model("states: x\ndrift x = 1/x\n"), ParseError);

    // duplicate / malformed directives
    CHECK_THROWS_AS(parse_model("states: x\nstates: y\n"), ParseError);
    CHECK_THROWS_AS(parse_model("states: x\nblah x = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_model("states: pi\n"), ParseError);
    CHECK_THROWS_AS(parse_model("drift x = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_model(""), ParseError);

    // params must be real constants
    CHECK_THROWS_AS(parse_model("states: x\nparam a = x\n"), ParseError);
    CHECK_THROWS_AS(parse_model("states: x\nparam a = j\n"), ParseError);

    // name collisions in either declaration order
    CHECK_THROWS_AS(parse_model("states: x\nparam x = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_model("param x = 1\nstates: x\n"), ParseError);
}

TEST_CASE("sin of time converts to a phase-shifted cosine") {
    SdeModel m = parse_model("states: x\ndrift x = sin(3*t)\n");
    REQUIRE(m.drift[0].terms.size() == 1);
    CHECK(m.drift[0].terms[0].freq == 3.0);
    CHECK(m.drift[0].terms[0].phase == Approx(-3.14159265358979323846 / 2.0));
}

TEST_CASE("winding atoms and complex coefficients parse") {
    SdeModel m = parse_model(
        "states: a: angle, v\n"
        "drift v = 2j*exp(2j*a) - 2j*exp(-2j*a) + (1.5-0.5j)*exp(j*a)\n");
    REQUIRE(m.drift[1].terms.size() == 3);
    // canonical order: winding +1 (order 1), then +2, then -2
    CHECK(m.drift[1].terms[0].basis == ExtIndex({1, 0}));
    CHECK(m.drift[1].terms[0].coeff == Complex{1.5, -0.5});
    CHECK(m.drift[1].terms[1].basis == ExtIndex({2, 0}));
    CHECK(m.drift[1].terms[1].coeff == Complex{0.0, 2.0});
    CHECK(m.drift[1].terms[2].basis == ExtIndex({-2, 0}));

    CHECK_THROWS_AS(parse_model("states: x\ndrift x = exp(j*x)\n"), ParseError);
    CHECK_THROWS_AS(parse_model("states: a: angle\ndrift a = exp(1.5j*a)\n"), ParseError);
}

TEST_CASE("sin squared of an angle state expands to winding 2") {
    SdeModel m = parse_model("states: a: angle, v\ndrift v = sin(a)^2\n");
    // sin^2 = 1/2 - e^{2j a}/4 - e^{-2j a}/4
    REQUIRE(m.drift[1].terms.size() == 3);
    for (const auto& term : m.drift[1].terms) {
        if (term.basis.is_zero())
            CHECK(term.coeff.real() == Approx(0.5));
        else
            CHECK(term.coeff.real() == Approx(-0.25));
    }
}

TEST_CASE("render/parse round-trip on the bundled models") {
    for (const std::string name : {"vdp", "pendulum", "ou"}) {
        SdeModel m = parse_model(read_file(kModels + "/" + name + ".model"), name);
        SdeModel again = parse_model(render_model(m), name);
        CHECK(m == again);
        CHECK(render_model(m) == render_model(again));
    }
}

TEST_CASE("round-trip covers winding terms and harmonics") {
    SdeModel m = parse_model(
        "states: a: angle, v\n"
        "param q = 0.25\n"
        "init a = 0.5\n"
        "drift a = v\n"
        "drift v = -q*v - sin(a) + 0.3*cos(7*t) + 1.25*sin(2*t)\n"
        "noise v[1] = q*cos(a)\n");
    SdeModel again = parse_model(render_model(m));
    CHECK(m == again);
}

TEST_CASE("zero noise entries drop their channel") {
    SdeModel m = parse_model("states: x\ndrift x = -x\nnoise x = 0\n");
    CHECK(m.channels() == 0);
    SdeModel again = parse_model(render_model(m));
    CHECK(m == again);
}

TEST_CASE("parameters compose in constant expressions") {
    SdeModel m = parse_model(
        "states: x\n"
        "param a = 2\n"
        "param b = a^2 + 1\n"
        "param c = (a + b)/4 - 1\n"
        "drift x = -c*x\n");
    CHECK(m.params.at("b") == 5.0);
    CHECK(m.params.at("c") == 0.75);
    REQUIRE(m.drift[0].terms.size() == 1);
    CHECK(m.drift[0].terms[0].coeff.real() == Approx(-0.75));
}
