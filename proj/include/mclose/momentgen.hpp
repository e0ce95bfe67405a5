#pragma once

// Symbolic Ito calculus on basis elements and assembly of the open (unclosed)
// moment system: d<h>/dt = sum_i <f_i dh/dx_i> + 1/2 sum_ij <(GG^T)_ij d2h/dx_i dx_j>.
// A basis element is a product of monomials (linear states) and complex
// exponentials e^{j q theta} (angle states).

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mclose/model.hpp"

namespace mclose {

// A right-hand side Sum_r c_r(t) * mu_{idx_r}: structurally a PolyExpr whose
// basis entries are read as moment labels instead of state monomials.
using MomentCombo = PolyExpr;

// d(basis element)/dx_i as a list of (coefficient, basis element) pairs.
// Monomials follow the power rule; exponentials reproduce themselves times jq.
inline std::vector<std::pair<Complex, ExtIndex>> basis_derivative(const StateSpace& space,
                                                                  const ExtIndex& idx, int i) {
    std::vector<std::pair<Complex, ExtIndex>> out;
    int e = idx.exps[i];
    if (e == 0) return out;
    if (space.kinds[i] == StateKind::Linear) {
        ExtIndex lowered = idx;
        lowered.exps[i] -= 1;
        out.emplace_back(Complex(static_cast<double>(e), 0.0), std::move(lowered));
    } else {
        out.emplace_back(Complex(0.0, static_cast<double>(e)), idx);
    }
    return out;
}

// Moment dynamics of one basis element under the model's generator.
inline MomentCombo ito_rhs(const SdeModel& model, const ExtIndex& idx) {
    const StateSpace& sp = model.space;
    const int n = sp.dim();
    const int d = model.channels();
    PolyExpr acc;

    // drift part: sum_i f_i * dh/dx_i
    for (int i = 0; i < n; ++i) {
        if (model.drift[i].is_zero()) continue;
        for (const auto& [c, didx] : basis_derivative(sp, idx, i)) {
            PolyExpr piece = poly_mul(sp, model.drift[i], basis_expr(sp, didx, c));
            acc = poly_add(sp, acc, piece);
        }
    }

    // diffusion part: 1/2 sum_ij (GG^T)_ij * d2h/dx_i dx_j
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            // second derivative by composing first-derivative actions; for an
            // angle state hit twice this yields (jq)^2 = -q^2 automatically
            std::vector<std::pair<Complex, ExtIndex>> second;
            for (const auto& [c1, mid] : basis_derivative(sp, idx, j))
                for (const auto& [c2, fin] : basis_derivative(sp, mid, i))
                    second.emplace_back(c1 * c2, fin);
            if (second.empty()) continue;

            PolyExpr ggt;
            for (int c = 0; c < d; ++c) {
                if (model.noise[i][c].is_zero() || model.noise[j][c].is_zero()) continue;
                ggt = poly_add(sp, ggt, poly_mul(sp, model.noise[i][c], model.noise[j][c]));
            }
            if (ggt.is_zero()) continue;

            for (const auto& [c2, fin] : second) {
                PolyExpr piece = poly_mul(sp, ggt, basis_expr(sp, fin, 0.5 * c2));
                acc = poly_add(sp, acc, piece);
            }
        }
    }
    return acc;
}

// Open moment system up to truncation order M: d(mu)/dt = a + A mu + B mu_bar
// with mu over `basis` and mu_bar over `higher` (referenced order > M labels).
struct OpenMomentSystem {
    StateSpace space;
    int max_order = 0;
    std::vector<ExtIndex> basis;
    std::vector<ExtIndex> higher;
    std::vector<MomentCombo> rhs;  // aligned with basis

    int basis_pos(const ExtIndex& idx) const {
        for (std::size_t i = 0; i < basis.size(); ++i)
            if (basis[i] == idx) return static_cast<int>(i);
        return -1;
    }

    int higher_pos(const ExtIndex& idx) const {
        for (std::size_t i = 0; i < higher.size(); ++i)
            if (higher[i] == idx) return static_cast<int>(i);
        return -1;
    }
};

inline OpenMomentSystem build_open_system(const SdeModel& model, int max_order) {
    OpenMomentSystem sys;
    sys.space = model.space;
    sys.max_order = max_order;
    sys.basis = enumerate_upto(model.space, max_order);
    sys.rhs.reserve(sys.basis.size());
    for (const auto& idx : sys.basis) sys.rhs.push_back(ito_rhs(model, idx));

    std::vector<ExtIndex> referenced;
    for (const auto& combo : sys.rhs)
        for (const auto& term : combo.terms)
            if (order(term.basis) > max_order) referenced.push_back(term.basis);
    std::sort(referenced.begin(), referenced.end(), [&](const ExtIndex& a, const ExtIndex& b) {
        return index_less(model.space, a, b);
    });
    referenced.erase(std::unique(referenced.begin(), referenced.end()), referenced.end());
    sys.higher = std::move(referenced);
    return sys;
}

// Evaluate a right-hand side at time t given moment values.
inline Complex eval_combo(const MomentCombo& combo, double t,
                          const std::function<Complex(const ExtIndex&)>& moment_value) {
    Complex sum{0.0, 0.0};
    for (const auto& term : combo.terms) {
        Complex c = term.coeff;
        if (term.has_harmonic()) c *= std::cos(term.freq * t + term.phase);
        sum += c * (term.basis.is_zero() ? Complex{1.0, 0.0} : moment_value(term.basis));
    }
    return sum;
}

// One moment combo with E[...] labels, e.g. "2.5*cos(376.99*t)*E[x2] + 6.25".
inline std::string render_combo(const StateSpace& space, const MomentCombo& combo) {
    std::vector<std::string> parts;
    parts.reserve(combo.terms.size());
    for (const auto& term : combo.terms) {
        std::string label = term.basis.is_zero() ? "" : moment_label(space, term.basis);
        parts.push_back(detail::fmt_term(term, label));
    }
    return detail::join_terms(parts);
}

// Diffable text report: one equation per line in basis order, then the list
// of higher-order moments the system references.
inline std::string render_open_system(const OpenMomentSystem& sys) {
    std::string out;
    for (std::size_t i = 0; i < sys.basis.size(); ++i)
        out += "d " + moment_label(sys.space, sys.basis[i]) +
               "/dt = " + render_combo(sys.space, sys.rhs[i]) + "\n";
    return out;
}

}  // namespace mclose
