#pragma once

// Line-oriented model DSL:
//
//   states: x1: angle, x2          # kinds default to linear
//   param  g_l = 9.8               # constant expressions: reals, pi, params, + - * / ^ ( )
//   init   x1 = pi/6               # deterministic initial value, defaults to 0
//   drift  x2 = -g_l*sin(x1)       # sin/cos of angle states expand via Euler's relation
//   noise  x2[0] = 0.5             # channel index defaults to 0
//
// Drift/noise expressions additionally accept the imaginary unit `j` and
// winding atoms `exp(2j*x1)` / `exp(-j*x1)` so that rendered models reparse
// to themselves. Time forcing enters as sin(W*t) / cos(W*t [+ P]) with
// constant W, P; at most one harmonic factor per term.

#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mclose/model.hpp"

namespace mclose {

namespace detail {

struct Token {
    enum class Kind { Ident, Number, Imag, Op, End };
    Kind kind = Kind::End;
    std::string text;
    double value = 0.0;  // Number / Imag payload
    int line = 0;
    int col = 0;
};

inline std::vector<Token> lex_line(const std::string& line, int line_no) {
    std::vector<Token> out;
    std::size_t i = 0;
    const std::size_t n = line.size();
    while (i < n) {
        char c = line[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (c == '#') break;
        int col = static_cast<int>(i) + 1;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < n && (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '_'))
                ++j;
            out.push_back({Token::Kind::Ident, line.substr(i, j - i), 0.0, line_no, col});
            i = j;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(line[i + 1])))) {
            std::size_t j = i;
            while (j < n && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
            if (j < n && line[j] == '.') {
                ++j;
                while (j < n && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
            }
            if (j < n && (line[j] == 'e' || line[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < n && (line[k] == '+' || line[k] == '-')) ++k;
                if (k < n && std::isdigit(static_cast<unsigned char>(line[k]))) {
                    while (k < n && std::isdigit(static_cast<unsigned char>(line[k]))) ++k;
                    j = k;
                }
            }
            std::string text = line.substr(i, j - i);
            double v = 0.0;
            try {
                v = std::stod(text);
            } catch (const std::exception&) {
                throw ParseError("number '" + text + "' out of range", line_no, col);
            }
            if (j < n && line[j] == 'j') {
                out.push_back({Token::Kind::Imag, text + "j", v, line_no, col});
                ++j;
            } else {
                out.push_back({Token::Kind::Number, text, v, line_no, col});
            }
            i = j;
            continue;
        }
        if (std::string("+-*/^(),:=[]").find(c) != std::string::npos) {
            out.push_back({Token::Kind::Op, std::string(1, c), 0.0, line_no, col});
            ++i;
            continue;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", line_no, col);
    }
    out.push_back({Token::Kind::End, "", 0.0, line_no, static_cast<int>(n) + 1});
    return out;
}

}  // namespace detail

class ModelParser {
public:
    explicit ModelParser(std::string text, std::string name = "")
        : text_(std::move(text)), name_(std::move(name)) {}

    SdeModel parse() {
        int line_no = 0;
        std::size_t start = 0;
        while (start <= text_.size()) {
            std::size_t end = text_.find('\n', start);
            std::string line = text_.substr(
                start, end == std::string::npos ? std::string::npos : end - start);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            ++line_no;
            parse_line(line, line_no);
            if (end == std::string::npos) break;
            start = end + 1;
        }
        return finalize();
    }

private:
    std::string text_;
    std::string name_;

    std::vector<detail::Token> toks_;
    std::size_t pos_ = 0;
    bool const_only_ = false;

    bool states_declared_ = false;
    StateSpace space_;
    std::map<std::string, double> params_;
    std::vector<double> init_;
    std::vector<PolyExpr> drift_;
    std::vector<bool> drift_set_;
    std::map<std::pair<int, int>, PolyExpr> noise_entries_;  // (state, channel)
    int max_channel_ = -1;

    static const std::set<std::string>& reserved() {
        static const std::set<std::string> words = {"pi",    "t",     "j",     "sin",
                                                    "cos",   "exp",   "states", "param",
                                                    "drift", "noise", "init"};
        return words;
    }

    // --- token helpers -----------------------------------------------------

    const detail::Token& cur() const { return toks_[pos_]; }

    detail::Token advance() {
        detail::Token t = toks_[pos_];
        if (t.kind != detail::Token::Kind::End) ++pos_;
        return t;
    }

    bool at_op(char c) const {
        return cur().kind == detail::Token::Kind::Op && cur().text[0] == c;
    }

    bool at_ident(const std::string& s) const {
        return cur().kind == detail::Token::Kind::Ident && cur().text == s;
    }

    [[noreturn]] void fail(const std::string& msg) const { fail_at(cur(), msg); }

    [[noreturn]] static void fail_at(const detail::Token& t, const std::string& msg) {
        throw ParseError(msg, t.line, t.col);
    }

    detail::Token expect_op(char c, const std::string& what) {
        if (!at_op(c)) fail("expected '" + std::string(1, c) + "' " + what);
        return advance();
    }

    detail::Token expect_ident(const std::string& what) {
        if (cur().kind != detail::Token::Kind::Ident) fail("expected " + what);
        return advance();
    }

    void expect_end() {
        if (cur().kind != detail::Token::Kind::End)
            fail("unexpected trailing input '" + cur().text + "'");
    }

    // --- line dispatch -----------------------------------------------------

    void parse_line(const std::string& line, int line_no) {
        toks_ = detail::lex_line(line, line_no);
        pos_ = 0;
        if (cur().kind == detail::Token::Kind::End) return;
        detail::Token head = expect_ident("a directive (states/param/init/drift/noise)");
        if (head.text == "states")
            parse_states();
        else if (head.text == "param")
            parse_param();
        else if (head.text == "init")
            parse_init();
        else if (head.text == "drift")
            parse_drift();
        else if (head.text == "noise")
            parse_noise();
        else
            fail_at(head, "unknown directive '" + head.text + "'");
        expect_end();
    }

    void parse_states() {
        if (states_declared_) fail("duplicate states line");
        expect_op(':', "after 'states'");
        std::vector<std::string> names;
        std::vector<StateKind> kinds;
        for (;;) {
            detail::Token name = expect_ident("a state name");
            if (reserved().count(name.text))
                fail_at(name, "'" + name.text + "' is reserved and cannot name a state");
            if (params_.count(name.text))
                fail_at(name, "'" + name.text + "' already names a parameter");
            StateKind kind = StateKind::Linear;
            if (at_op(':')) {
                advance();
                detail::Token k = expect_ident("'linear' or 'angle'");
                if (k.text == "angle")
                    kind = StateKind::Angle;
                else if (k.text != "linear")
                    fail_at(k, "state kind must be 'linear' or 'angle'");
            }
            for (const auto& existing : names)
                if (existing == name.text)
                    fail_at(name, "duplicate state name '" + name.text + "'");
            names.push_back(name.text);
            kinds.push_back(kind);
            if (!at_op(',')) break;
            advance();
        }
        space_ = StateSpace(std::move(names), std::move(kinds));
        states_declared_ = true;
        init_.assign(space_.dim(), 0.0);
        drift_.assign(space_.dim(), PolyExpr{});
        drift_set_.assign(space_.dim(), false);
    }

    void parse_param() {
        detail::Token name = expect_ident("a parameter name");
        if (reserved().count(name.text))
            fail_at(name, "'" + name.text + "' is reserved and cannot name a parameter");
        if (states_declared_ && space_.find(name.text) >= 0)
            fail_at(name, "'" + name.text + "' already names a state");
        if (params_.count(name.text)) fail_at(name, "duplicate parameter '" + name.text + "'");
        expect_op('=', "after parameter name");
        params_[name.text] = parse_const_value("parameter value");
    }

    void parse_init() {
        int state = expect_state("after 'init'");
        expect_op('=', "after state name");
        init_[state] = parse_const_value("initial value");
    }

    void parse_drift() {
        int state = expect_state("after 'drift'");
        expect_op('=', "after state name");
        if (drift_set_[state])
            fail("duplicate drift for state '" + space_.names[state] + "'");
        drift_[state] = parse_expression();
        drift_set_[state] = true;
    }

    void parse_noise() {
        int state = expect_state("after 'noise'");
        int channel = 0;
        if (at_op('[')) {
            advance();
            if (cur().kind != detail::Token::Kind::Number || cur().value != std::floor(cur().value) ||
                cur().value < 0)
                fail("noise channel must be a non-negative integer");
            channel = static_cast<int>(advance().value);
            expect_op(']', "after channel index");
        }
        expect_op('=', "after noise target");
        if (noise_entries_.count({state, channel}))
            fail("duplicate noise entry for '" + space_.names[state] + "[" +
                 std::to_string(channel) + "]'");
        noise_entries_[{state, channel}] = parse_expression();
        max_channel_ = std::max(max_channel_, channel);
    }

    int expect_state(const std::string& ctx) {
        detail::Token name = expect_ident("a state name " + ctx);
        if (!states_declared_) fail_at(name, "states must be declared first");
        int i = space_.find(name.text);
        if (i < 0) fail_at(name, "undeclared state '" + name.text + "'");
        return i;
    }

    // --- expressions ---------------------------------------------------------

    double parse_const_value(const std::string& what) {
        const_only_ = true;
        PolyExpr p = parse_sum();
        const_only_ = false;
        Complex c = const_value(p, what);
        if (c.imag() != 0.0) fail(what + " must be real");
        return c.real();
    }

    PolyExpr parse_expression() {
        if (cur().kind == detail::Token::Kind::End) fail("empty expression");
        return parse_sum();
    }

    Complex const_value(const PolyExpr& p, const std::string& what) const {
        if (p.is_zero()) return {0.0, 0.0};
        if (p.terms.size() == 1 && p.terms[0].basis.is_zero() && !p.terms[0].has_harmonic())
            return p.terms[0].coeff;
        fail(what + " must be a constant expression");
    }

    const StateSpace& expr_space() const {
        static const StateSpace scratch({"_"}, {StateKind::Linear});
        return states_declared_ ? space_ : scratch;
    }

    PolyExpr parse_sum() {
        PolyExpr acc = parse_product();
        while (at_op('+') || at_op('-')) {
            bool minus = cur().text[0] == '-';
            advance();
            PolyExpr rhs = parse_product();
            acc = poly_add(expr_space(), acc, minus ? poly_scale(rhs, -1.0) : rhs);
        }
        return acc;
    }

    PolyExpr parse_product() {
        PolyExpr acc = parse_unary();
        while (at_op('*') || at_op('/')) {
            detail::Token op = advance();
            PolyExpr rhs = parse_unary();
            if (op.text[0] == '*') {
                try {
                    acc = poly_mul(expr_space(), acc, rhs);
                } catch (const UnsupportedForcingError&) {
                    fail_at(op, "a term may carry at most one time-harmonic factor");
                }
            } else {
                Complex d = const_value(rhs, "divisor");
                if (d == Complex{0.0, 0.0}) fail_at(op, "division by zero");
                acc = poly_scale(acc, 1.0 / d);
            }
        }
        return acc;
    }

    PolyExpr parse_unary() {
        if (at_op('-')) {
            advance();
            return poly_scale(parse_unary(), -1.0);
        }
        if (at_op('+')) {
            advance();
            return parse_unary();
        }
        return parse_power();
    }

    PolyExpr parse_power() {
        PolyExpr base = parse_atom();
        while (at_op('^')) {
            detail::Token op = advance();
            if (cur().kind != detail::Token::Kind::Number)
                fail("'^' requires a non-negative integer exponent");
            double e = advance().value;
            if (e != std::floor(e) || e < 0.0)
                fail_at(op, "'^' requires a non-negative integer exponent");
            try {
                base = poly_pow(expr_space(), base, static_cast<int>(e));
            } catch (const UnsupportedForcingError&) {
                fail_at(op, "powers of time-harmonic factors are not supported");
            }
        }
        return base;
    }

    PolyExpr parse_atom() {
        const detail::Token t = cur();
        switch (t.kind) {
            case detail::Token::Kind::Number:
                advance();
                return constant_expr(expr_space(), t.value);
            case detail::Token::Kind::Imag:
                if (const_only_) fail("'j' is not allowed in constant expressions");
                advance();
                return constant_expr(expr_space(), Complex{0.0, t.value});
            case detail::Token::Kind::Ident:
                return parse_ident_atom();
            case detail::Token::Kind::Op:
                if (t.text[0] == '(') {
                    advance();
                    PolyExpr inner = parse_sum();
                    expect_op(')', "to close '('");
                    return inner;
                }
                break;
            default:
                break;
        }
        fail("expected a number, identifier or '('");
    }

    PolyExpr parse_ident_atom() {
        detail::Token t = advance();
        const std::string& id = t.text;
        if (id == "pi") return constant_expr(expr_space(), 3.14159265358979323846);
        if (id == "j") {
            if (const_only_) fail_at(t, "'j' is not allowed in constant expressions");
            return constant_expr(expr_space(), Complex{0.0, 1.0});
        }
        if (id == "t") fail_at(t, "'t' may only appear inside sin(...)/cos(...) time arguments");
        if (id == "sin" || id == "cos") {
            if (const_only_) fail_at(t, "sin/cos are not allowed in constant expressions");
            return parse_trig(id == "sin" ? TrigFn::Sin : TrigFn::Cos);
        }
        if (id == "exp") {
            if (const_only_) fail_at(t, "exp(...) is not allowed in constant expressions");
            return parse_winding();
        }
        if (auto it = params_.find(id); it != params_.end())
            return constant_expr(expr_space(), it->second);
        if (states_declared_) {
            int i = space_.find(id);
            if (i >= 0) {
                if (const_only_) fail_at(t, "states are not allowed in constant expressions");
                if (space_.kinds[i] == StateKind::Angle)
                    fail_at(t, "angle state '" + id +
                                   "' may only appear inside sin/cos/exp");
                ExtIndex idx(space_.dim());
                idx.exps[i] = 1;
                return basis_expr(space_, idx);
            }
        }
        fail_at(t, "undeclared identifier '" + id + "'");
    }

    PolyExpr parse_trig(TrigFn fn) {
        expect_op('(', "after sin/cos");
        // bare angle-state argument
        if (cur().kind == detail::Token::Kind::Ident && toks_[pos_ + 1].kind == detail::Token::Kind::Op &&
            toks_[pos_ + 1].text[0] == ')') {
            int i = space_.find(cur().text);
            if (states_declared_ && i >= 0) {
                detail::Token st = advance();
                advance();  // ')'
                if (space_.kinds[i] != StateKind::Angle)
                    fail_at(st, "sin/cos of linear state '" + st.text +
                                    "'; trig arguments must be angle states or W*t");
                return expand_trig(space_, fn, i, 1.0);
            }
        }
        // harmonic time argument: product of constants with exactly one 't'
        double freq = 1.0;
        int t_count = 0;
        char pending = '*';
        for (;;) {
            if (at_ident("t")) {
                if (pending == '/') fail("cannot divide by 't'");
                ++t_count;
                advance();
            } else {
                const_only_ = true;
                PolyExpr f = parse_power();
                const_only_ = false;
                Complex v = const_value(f, "harmonic frequency factor");
                if (v.imag() != 0.0) fail("harmonic frequency must be real");
                if (pending == '*')
                    freq *= v.real();
                else {
                    if (v.real() == 0.0) fail("division by zero in harmonic argument");
                    freq /= v.real();
                }
            }
            if (at_op('*') || at_op('/')) {
                pending = advance().text[0];
                continue;
            }
            break;
        }
        if (t_count != 1) fail("time argument must contain exactly one 't' factor");
        double phase = 0.0;
        if (at_op('+') || at_op('-')) {
            bool minus = advance().text[0] == '-';
            const_only_ = true;
            PolyExpr p = parse_sum();
            const_only_ = false;
            Complex v = const_value(p, "harmonic phase");
            if (v.imag() != 0.0) fail("harmonic phase must be real");
            phase = minus ? -v.real() : v.real();
        }
        expect_op(')', "to close the trig argument");
        if (fn == TrigFn::Sin) phase -= 3.14159265358979323846 / 2.0;
        Term term{1.0, freq, phase, ExtIndex(space_.dim())};
        return normalize(space_, {term});
    }

    PolyExpr parse_winding() {
        expect_op('(', "after exp");
        int sign = 1;
        if (at_op('-')) {
            advance();
            sign = -1;
        }
        int magnitude = 1;
        if (cur().kind == detail::Token::Kind::Imag) {
            detail::Token m = advance();
            if (m.value != std::floor(m.value))
                fail_at(m, "winding must be an integer multiple of j");
            magnitude = static_cast<int>(m.value);
        } else if (at_ident("j")) {
            advance();
        } else {
            fail("exp(...) supports only windings of the form [-]k j * <angle state>");
        }
        expect_op('*', "after the winding");
        detail::Token st = expect_ident("an angle state inside exp(...)");
        if (!states_declared_ || space_.find(st.text) < 0)
            fail_at(st, "undeclared state '" + st.text + "' inside exp(...)");
        int i = space_.find(st.text);
        if (space_.kinds[i] != StateKind::Angle)
            fail_at(st, "exp(...) windings require an angle state, '" + st.text + "' is linear");
        expect_op(')', "to close exp(...)");
        ExtIndex idx(space_.dim());
        idx.exps[i] = sign * magnitude;
        return basis_expr(space_, idx);
    }

    // --- finalize ------------------------------------------------------------

    SdeModel finalize() {
        if (!states_declared_) throw ParseError("no states declared", 1, 1);
        SdeModel m;
        m.space = space_;
        m.params = params_;
        m.init = init_;
        m.drift = drift_;
        m.name = name_;

        int d = max_channel_ + 1;
        m.noise.assign(space_.dim(), std::vector<PolyExpr>(d));
        for (const auto& [key, expr] : noise_entries_) m.noise[key.first][key.second] = expr;
        // drop channels that are zero for every state
        for (int c = d - 1; c >= 0; --c) {
            bool all_zero = true;
            for (int i = 0; i < space_.dim(); ++i)
                if (!m.noise[i][c].is_zero()) all_zero = false;
            if (all_zero)
                for (int i = 0; i < space_.dim(); ++i)
                    m.noise[i].erase(m.noise[i].begin() + c);
        }
        return m;
    }
};

inline SdeModel parse_model(const std::string& text, const std::string& name = "") {
    return ModelParser(text, name).parse();
}

}  // namespace mclose
