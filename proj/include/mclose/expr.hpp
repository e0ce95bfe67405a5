#pragma once

// Mixed polynomial / complex-exponential expressions with an optional
// time-harmonic factor per term. Drifts, diffusions and moment right-hand
// sides all live in this class, which is closed under the operations below
// (products of two harmonics are the one excluded case).

#include <charconv>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mclose/index.hpp"

namespace mclose {

using Complex = std::complex<double>;

// Shortest round-trip decimal form, used everywhere numbers are printed.
inline std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double powi(double base, int exp) {
    double r = 1.0;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

inline Complex powi(Complex base, int exp) {
    if (exp < 0) return 1.0 / powi(base, -exp);
    Complex r = 1.0;
    Complex b = base;
    int e = exp;
    while (e > 0) {
        if (e & 1) r *= b;
        b *= b;
        e >>= 1;
    }
    return r;
}

// coeff * cos(freq*t + phase) * x^[basis]; freq == phase == 0 means the
// time factor is the constant 1.
struct Term {
    Complex coeff{0.0, 0.0};
    double freq = 0.0;
    double phase = 0.0;
    ExtIndex basis;

    bool has_harmonic() const { return freq != 0.0 || phase != 0.0; }
    bool operator==(const Term&) const = default;
};

struct PolyExpr {
    std::vector<Term> terms;  // normalized: unique (basis,freq,phase) keys, canonical order

    bool is_zero() const { return terms.empty(); }
    bool operator==(const PolyExpr&) const = default;
};

inline PolyExpr constant_expr(const StateSpace& space, Complex value) {
    PolyExpr p;
    if (value != Complex{0.0, 0.0}) p.terms.push_back({value, 0.0, 0.0, ExtIndex(space.dim())});
    return p;
}

inline PolyExpr basis_expr(const StateSpace& space, ExtIndex idx, Complex coeff = 1.0) {
    PolyExpr p;
    if (coeff != Complex{0.0, 0.0}) p.terms.push_back({coeff, 0.0, 0.0, std::move(idx)});
    (void)space;
    return p;
}

// Canonical form: zero-frequency phases folded into the coefficient, terms
// with equal (basis,freq,phase) merged, zero coefficients dropped, and the
// rest sorted by (basis order, freq, phase).
inline PolyExpr normalize(const StateSpace& space, std::vector<Term> terms) {
    for (auto& t : terms) {
        if (t.freq == 0.0 && t.phase != 0.0) {
            t.coeff *= std::cos(t.phase);
            t.phase = 0.0;
        }
    }
    std::sort(terms.begin(), terms.end(), [&](const Term& a, const Term& b) {
        if (a.basis != b.basis) return index_less(space, a.basis, b.basis);
        if (a.freq != b.freq) return a.freq < b.freq;
        return a.phase < b.phase;
    });
    PolyExpr out;
    for (auto& t : terms) {
        if (!out.terms.empty()) {
            Term& last = out.terms.back();
            if (last.basis == t.basis && last.freq == t.freq && last.phase == t.phase) {
                last.coeff += t.coeff;
                continue;
            }
        }
        out.terms.push_back(std::move(t));
    }
    std::erase_if(out.terms, [](const Term& t) { return t.coeff == Complex{0.0, 0.0}; });
    return out;
}

inline PolyExpr poly_add(const StateSpace& space, const PolyExpr& a, const PolyExpr& b) {
    std::vector<Term> terms = a.terms;
    terms.insert(terms.end(), b.terms.begin(), b.terms.end());
    return normalize(space, std::move(terms));
}

inline PolyExpr poly_scale(const PolyExpr& p, Complex s) {
    PolyExpr out;
    if (s == Complex{0.0, 0.0}) return out;
    out.terms = p.terms;
    for (auto& t : out.terms) t.coeff *= s;
    return out;
}

// Product of expressions over the same space: exponents and windings add,
// coefficients multiply. At most one factor in each term pair may carry a
// harmonic; cos*cos products are rejected rather than linearized.
inline PolyExpr poly_mul(const StateSpace& space, const PolyExpr& a, const PolyExpr& b) {
    std::vector<Term> terms;
    terms.reserve(a.terms.size() * b.terms.size());
    for (const auto& ta : a.terms) {
        for (const auto& tb : b.terms) {
            if (ta.has_harmonic() && tb.has_harmonic())
                throw UnsupportedForcingError(
                    "product of two time-harmonic factors is outside the supported class");
            Term t;
            t.coeff = ta.coeff * tb.coeff;
            t.freq = ta.has_harmonic() ? ta.freq : tb.freq;
            t.phase = ta.has_harmonic() ? ta.phase : tb.phase;
            t.basis.exps.resize(space.dim());
            for (int i = 0; i < space.dim(); ++i)
                t.basis.exps[i] = ta.basis.exps[i] + tb.basis.exps[i];
            terms.push_back(std::move(t));
        }
    }
    return normalize(space, std::move(terms));
}

inline PolyExpr poly_pow(const StateSpace& space, const PolyExpr& p, int exp) {
    PolyExpr out = constant_expr(space, 1.0);
    for (int i = 0; i < exp; ++i) out = poly_mul(space, out, p);
    return out;
}

// Complex conjugate: coefficients conjugate, windings negate. Harmonic
// factors are real and stay put.
inline PolyExpr poly_conj(const StateSpace& space, const PolyExpr& p) {
    std::vector<Term> terms = p.terms;
    for (auto& t : terms) {
        t.coeff = std::conj(t.coeff);
        t.basis = conjugate_index(space, t.basis);
    }
    return normalize(space, std::move(terms));
}

enum class TrigFn { Sin, Cos };

// Euler expansion of sin/cos of an angle state into winding +-1 elements:
// sin x = (e^{jx} - e^{-jx}) / 2j, cos x = (e^{jx} + e^{-jx}) / 2.
inline PolyExpr expand_trig(const StateSpace& space, TrigFn fn, int state, Complex scale) {
    if (state < 0 || state >= space.dim()) throw ModelError("expand_trig: state out of range");
    if (space.kinds[state] != StateKind::Angle)
        throw ModelError("expand_trig: '" + space.names[state] + "' is not an angle state");
    ExtIndex plus(space.dim()), minus(space.dim());
    plus.exps[state] = 1;
    minus.exps[state] = -1;
    const Complex half_over_j{0.0, -0.5};  // 1/(2j)
    std::vector<Term> terms;
    if (fn == TrigFn::Sin) {
        terms.push_back({scale * half_over_j, 0.0, 0.0, plus});
        terms.push_back({-scale * half_over_j, 0.0, 0.0, minus});
    } else {
        terms.push_back({scale * 0.5, 0.0, 0.0, plus});
        terms.push_back({scale * 0.5, 0.0, 0.0, minus});
    }
    return normalize(space, std::move(terms));
}

// Pointwise evaluation at a real state vector and time.
inline Complex eval_poly(const StateSpace& space, const PolyExpr& p, std::span<const double> x,
                         double t) {
    if (static_cast<int>(x.size()) != space.dim())
        throw ModelError("eval_poly: state dimension mismatch");
    Complex sum{0.0, 0.0};
    for (const auto& term : p.terms) {
        Complex v = term.coeff;
        if (term.has_harmonic()) v *= std::cos(term.freq * t + term.phase);
        for (int i = 0; i < space.dim(); ++i) {
            int e = term.basis.exps[i];
            if (e == 0) continue;
            if (space.kinds[i] == StateKind::Linear)
                v *= powi(x[i], e);
            else
                v *= std::polar(1.0, static_cast<double>(e) * x[i]);
        }
        sum += v;
    }
    return sum;
}

namespace detail {

// Coefficient in model-grammar form: 2, -0.5, j, -j, 4.9j, (1.5-0.5j).
inline std::string fmt_coeff(Complex c) {
    if (c.imag() == 0.0) return fmt_double(c.real());
    std::string im;
    if (c.imag() == 1.0)
        im = "j";
    else if (c.imag() == -1.0)
        im = "-j";
    else
        im = fmt_double(c.imag()) + "j";
    if (c.real() == 0.0) return im;
    if (c.imag() > 0.0) return "(" + fmt_double(c.real()) + "+" + im + ")";
    return "(" + fmt_double(c.real()) + im + ")";
}

// Harmonic factor in model-grammar form. The two phases produced by parsing
// render back as sin/cos; anything else uses the explicit-phase form.
inline std::string fmt_harmonic(double freq, double phase) {
    const double half_pi = std::numbers::pi / 2.0;
    if (phase == 0.0) return "cos(" + fmt_double(freq) + "*t)";
    if (phase == -half_pi) return "sin(" + fmt_double(freq) + "*t)";
    if (phase > 0.0) return "cos(" + fmt_double(freq) + "*t + " + fmt_double(phase) + ")";
    return "cos(" + fmt_double(freq) + "*t - " + fmt_double(-phase) + ")";
}

// One term as factor list; `basis_part` lets moment-combo rendering swap in
// E[...] labels for the raw monomial string.
inline std::string fmt_term(const Term& t, const std::string& basis_part) {
    std::vector<std::string> factors;
    std::string coeff = fmt_coeff(t.coeff);
    bool unit_coeff = (coeff == "1");
    bool neg_unit_coeff = (coeff == "-1");
    if (!unit_coeff && !neg_unit_coeff) factors.push_back(coeff);
    if (t.has_harmonic()) factors.push_back(fmt_harmonic(t.freq, t.phase));
    if (!basis_part.empty() && basis_part != "1") factors.push_back(basis_part);
    if (factors.empty()) factors.push_back("1");
    std::string out = neg_unit_coeff ? "-" : "";
    for (std::size_t i = 0; i < factors.size(); ++i) {
        if (i) out += "*";
        out += factors[i];
    }
    return out;
}

inline std::string join_terms(const std::vector<std::string>& rendered) {
    if (rendered.empty()) return "0";
    std::string out = rendered[0];
    for (std::size_t i = 1; i < rendered.size(); ++i) {
        const std::string& s = rendered[i];
        if (!s.empty() && s[0] == '-')
            out += " - " + s.substr(1);
        else
            out += " + " + s;
    }
    return out;
}

}  // namespace detail

// Model-grammar rendering; parse(render(p)) reproduces p exactly.
inline std::string render_expr(const StateSpace& space, const PolyExpr& p) {
    std::vector<std::string> parts;
    parts.reserve(p.terms.size());
    for (const auto& t : p.terms)
        parts.push_back(detail::fmt_term(t, basis_factor_string(space, t.basis)));
    return detail::join_terms(parts);
}

}  // namespace mclose
