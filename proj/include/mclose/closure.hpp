#pragma once

// Closure-scheme construction. Derivative matching picks exponents alpha so
// that mu_target ~ prod_p (mu_p)^{alpha_p} matches the open system's first two
// time derivatives at any deterministic initial condition; the alpha solve is
// the binomial-coefficient linear system C^{target}_{m_s} = sum_p alpha_p
// C^{m_p}_{m_s}. Mean-field splits a mixed moment into its winding part times
// its monomial part.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mclose/momentgen.hpp"

namespace mclose {

namespace detail {

// Dense LU solve with partial pivoting, sized for closure systems (k <= ~20).
// Returns false when a pivot falls below 1e-10 times the largest initial entry.
inline bool lu_solve(std::vector<std::vector<double>> a, std::vector<double> b,
                     std::vector<double>& x) {
    const int n = static_cast<int>(a.size());
    double max_entry = 0.0;
    for (const auto& row : a)
        for (double v : row) max_entry = std::max(max_entry, std::abs(v));
    if (max_entry == 0.0) return false;
    const double tol = 1e-10 * max_entry;

    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < tol) return false;
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (int r = col + 1; r < n; ++r) {
            double f = a[r][col] / a[col][col];
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    x.assign(n, 0.0);
    for (int r = n - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < n; ++c) s -= a[r][c] * x[c];
        x[r] = s / a[r][r];
    }
    return true;
}

inline double snap_integer(double v) {
    double r = std::round(v);
    return std::abs(v - r) <= 1e-9 ? r : v;
}

}  // namespace detail

enum class ClosureScheme { DerivativeMatching, MeanField };

// phi_target(mu) = prod_p mu_p^{exponents[p]} over the basis used to build it.
struct ClosureRule {
    ExtIndex target;
    std::vector<double> exponents;  // aligned with the basis list
    ClosureScheme scheme = ClosureScheme::DerivativeMatching;
    int system_size = 0;  // dimension of the DM linear solve (0 for mean field)
};

// Derivative-matching closure of one moment of order above the basis order.
// Candidates (and matching equations) are restricted to basis moments whose
// winding on each angle state has the target's sign or is zero; excluded
// moments keep exponent 0.
inline ClosureRule dm_close(const StateSpace& space, const std::vector<ExtIndex>& basis,
                            const ExtIndex& target) {
    const std::string label = moment_label(space, target);
    int max_basis_order = 0;
    for (const auto& b : basis) max_basis_order = std::max(max_basis_order, order(b));
    if (order(target) <= max_basis_order)
        throw ClosureError("closure target must have order above the basis", label);

    std::vector<int> cand;
    for (std::size_t p = 0; p < basis.size(); ++p) {
        bool compatible = true;
        for (int i = 0; i < space.dim(); ++i) {
            if (space.kinds[i] != StateKind::Angle) continue;
            int qp = basis[p].exps[i];
            int qt = target.exps[i];
            if (qp != 0 && (qt == 0 || (qp > 0) != (qt > 0))) compatible = false;
        }
        if (compatible) cand.push_back(static_cast<int>(p));
    }
    if (cand.empty()) throw ClosureError("no winding-compatible basis moments", label);

    const int k = static_cast<int>(cand.size());
    std::vector<PseudoExponents> ps(k);
    for (int p = 0; p < k; ++p) ps[p] = pseudo_exponents(space, basis[cand[p]]);
    PseudoExponents pt = pseudo_exponents(space, target);

    std::vector<std::vector<double>> mat(k, std::vector<double>(k));
    std::vector<double> rhs(k);
    for (int s = 0; s < k; ++s) {
        for (int p = 0; p < k; ++p)
            mat[s][p] = static_cast<double>(binom_product(ps[p], ps[s]));
        rhs[s] = static_cast<double>(binom_product(pt, ps[s]));
    }

    std::vector<double> alpha;
    if (!detail::lu_solve(mat, rhs, alpha))
        throw ClosureError("derivative-matching system is singular; no unique solution", label);

    ClosureRule rule;
    rule.target = target;
    rule.scheme = ClosureScheme::DerivativeMatching;
    rule.system_size = k;
    rule.exponents.assign(basis.size(), 0.0);
    for (int p = 0; p < k; ++p) rule.exponents[cand[p]] = detail::snap_integer(alpha[p]);
    return rule;
}

// Mean-field closure: mu_target ~ mu_{winding part} * mu_{monomial part}.
inline ClosureRule mean_field_close(const StateSpace& space, const std::vector<ExtIndex>& basis,
                                    const ExtIndex& target) {
    const std::string label = moment_label(space, target);
    ExtIndex winding(space.dim()), monomial(space.dim());
    for (int i = 0; i < space.dim(); ++i) {
        if (space.kinds[i] == StateKind::Angle)
            winding.exps[i] = target.exps[i];
        else
            monomial.exps[i] = target.exps[i];
    }

    ClosureRule rule;
    rule.target = target;
    rule.scheme = ClosureScheme::MeanField;
    rule.exponents.assign(basis.size(), 0.0);
    for (const ExtIndex* part : {&winding, &monomial}) {
        if (part->is_zero()) continue;
        auto it = std::find(basis.begin(), basis.end(), *part);
        if (it == basis.end())
            throw ClosureError("not splittable: factor " + moment_label(space, *part) +
                                   " exceeds the basis",
                               label);
        rule.exponents[it - basis.begin()] += 1.0;
    }
    return rule;
}

namespace detail {

// Magnitude clamp for bases raised to negative powers: |b| < delta pulls the
// base out to delta on the same ray (delta itself when b is exactly 0).
inline Complex clamp_base(Complex b, double exponent, double delta) {
    if (exponent >= 0.0) return b;
    double m = std::abs(b);
    if (m >= delta) return b;
    if (m == 0.0) return Complex{delta, 0.0};
    return b * (delta / m);
}

inline Complex power(Complex base, double exponent) {
    if (exponent == std::floor(exponent)) return powi(base, static_cast<int>(exponent));
    return std::pow(base, exponent);  // principal branch
}

}  // namespace detail

// Evaluate phi = prod_p b_p^{alpha_p} at the moment vector nu.
inline Complex eval_closure(const ClosureRule& rule, std::span<const Complex> nu, double delta) {
    Complex val{1.0, 0.0};
    for (std::size_t p = 0; p < rule.exponents.size(); ++p) {
        double a = rule.exponents[p];
        if (a == 0.0) continue;
        val *= detail::power(detail::clamp_base(nu[p], a, delta), a);
    }
    return val;
}

// Self-contained approximation d(nu)/dt = a(t) + A(t) nu + B(t) phi(nu).
struct ClosedMomentSystem {
    OpenMomentSystem open;
    std::vector<ClosureRule> rules;  // aligned with open.higher
    double delta = 1e-8;

    // Right-hand sides pre-resolved into (constant | basis | higher) slots.
    struct CompiledTerm {
        Complex coeff;
        double freq = 0.0;
        double phase = 0.0;
        int slot = 0;  // 0 constant, 1 basis, 2 higher
        int pos = 0;
    };
    std::vector<std::vector<CompiledTerm>> compiled;

    std::size_t size() const { return open.basis.size(); }

    void compile() {
        compiled.assign(open.basis.size(), {});
        for (std::size_t b = 0; b < open.basis.size(); ++b) {
            for (const auto& term : open.rhs[b].terms) {
                CompiledTerm ct{term.coeff, term.freq, term.phase, 0, 0};
                if (!term.basis.is_zero()) {
                    int pos = open.basis_pos(term.basis);
                    if (pos >= 0) {
                        ct.slot = 1;
                        ct.pos = pos;
                    } else {
                        pos = open.higher_pos(term.basis);
                        if (pos < 0)
                            throw Error("internal: moment reference missing from basis/higher");
                        ct.slot = 2;
                        ct.pos = pos;
                    }
                }
                compiled[b].push_back(ct);
            }
        }
    }

    std::vector<Complex> closure_values(std::span<const Complex> nu) const {
        std::vector<Complex> phi(rules.size());
        for (std::size_t h = 0; h < rules.size(); ++h) phi[h] = eval_closure(rules[h], nu, delta);
        return phi;
    }

    void eval_rhs(double t, std::span<const Complex> nu, std::span<Complex> out) const {
        std::vector<Complex> phi = closure_values(nu);
        for (std::size_t b = 0; b < compiled.size(); ++b) {
            Complex sum{0.0, 0.0};
            for (const auto& ct : compiled[b]) {
                Complex c = ct.coeff;
                if (ct.freq != 0.0 || ct.phase != 0.0) c *= std::cos(ct.freq * t + ct.phase);
                switch (ct.slot) {
                    case 0: sum += c; break;
                    case 1: sum += c * nu[ct.pos]; break;
                    default: sum += c * phi[ct.pos]; break;
                }
            }
            out[b] = sum;
        }
    }

    // Same sum with each coefficient replaced by its time derivative
    // (-c w sin(w t + p)); used for second-derivative matching checks.
    void eval_rhs_coeff_tderiv(double t, std::span<const Complex> nu,
                               std::span<Complex> out) const {
        std::vector<Complex> phi = closure_values(nu);
        for (std::size_t b = 0; b < compiled.size(); ++b) {
            Complex sum{0.0, 0.0};
            for (const auto& ct : compiled[b]) {
                if (ct.freq == 0.0) continue;
                Complex c = -ct.coeff * ct.freq * std::sin(ct.freq * t + ct.phase);
                switch (ct.slot) {
                    case 0: sum += c; break;
                    case 1: sum += c * nu[ct.pos]; break;
                    default: sum += c * phi[ct.pos]; break;
                }
            }
            out[b] = sum;
        }
    }

    // Dense a(t), A(t), B(t) assembled fresh at the given time.
    void assemble(double t, std::vector<Complex>& a, std::vector<std::vector<Complex>>& A,
                  std::vector<std::vector<Complex>>& B) const {
        const std::size_t k = open.basis.size(), r = open.higher.size();
        a.assign(k, Complex{0.0, 0.0});
        A.assign(k, std::vector<Complex>(k, Complex{0.0, 0.0}));
        B.assign(k, std::vector<Complex>(r, Complex{0.0, 0.0}));
        for (std::size_t b = 0; b < compiled.size(); ++b) {
            for (const auto& ct : compiled[b]) {
                Complex c = ct.coeff;
                if (ct.freq != 0.0 || ct.phase != 0.0) c *= std::cos(ct.freq * t + ct.phase);
                switch (ct.slot) {
                    case 0: a[b] += c; break;
                    case 1: A[b][ct.pos] += c; break;
                    default: B[b][ct.pos] += c; break;
                }
            }
        }
    }

    // d(phi_h)/d(nu_p) with the same base clamping as eval_closure.
    std::vector<std::vector<Complex>> closure_jacobian(std::span<const Complex> nu) const {
        std::vector<std::vector<Complex>> jac(rules.size(),
                                              std::vector<Complex>(open.basis.size()));
        for (std::size_t h = 0; h < rules.size(); ++h) {
            const auto& exps = rules[h].exponents;
            for (std::size_t p = 0; p < exps.size(); ++p) {
                if (exps[p] == 0.0) {
                    jac[h][p] = Complex{0.0, 0.0};
                    continue;
                }
                Complex v{exps[p], 0.0};
                for (std::size_t q = 0; q < exps.size(); ++q) {
                    double e = exps[q] - (q == p ? 1.0 : 0.0);
                    if (exps[q] == 0.0 && q != p) continue;
                    Complex base = detail::clamp_base(nu[q], exps[q], delta);
                    if (e != 0.0) v *= detail::power(base, e);
                }
                jac[h][p] = v;
            }
        }
        return jac;
    }
};

inline ClosedMomentSystem close_system(OpenMomentSystem open, ClosureScheme scheme,
                                       double delta = 1e-8) {
    ClosedMomentSystem closed;
    closed.delta = delta;
    closed.rules.reserve(open.higher.size());
    for (const auto& target : open.higher) {
        if (scheme == ClosureScheme::DerivativeMatching)
            closed.rules.push_back(dm_close(open.space, open.basis, target));
        else
            closed.rules.push_back(mean_field_close(open.space, open.basis, target));
    }
    closed.open = std::move(open);
    closed.compile();
    return closed;
}

// "E[x1^2*x2] ≈ E[x1^2]*E[x1*x2]^2 / (E[x1]^2*E[x2])"
inline std::string render_rule(const StateSpace& space, const std::vector<ExtIndex>& basis,
                               const ClosureRule& rule) {
    auto factor = [&](std::size_t p, double e) {
        std::string s = moment_label(space, basis[p]);
        if (e != 1.0) {
            s += "^";
            s += (e == std::floor(e)) ? std::to_string(static_cast<long long>(e))
                                      : fmt_double(e);
        }
        return s;
    };
    std::string num, den;
    for (std::size_t p = 0; p < rule.exponents.size(); ++p) {
        double e = rule.exponents[p];
        if (e > 0.0) num += (num.empty() ? "" : "*") + factor(p, e);
        if (e < 0.0) den += (den.empty() ? "" : "*") + factor(p, -e);
    }
    if (num.empty()) num = "1";
    std::string out = moment_label(space, rule.target) + " ≈ " + num;
    if (!den.empty()) out += " / (" + den + ")";
    return out;
}

}  // namespace mclose
