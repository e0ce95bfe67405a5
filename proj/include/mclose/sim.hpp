#pragma once

// Numerical side: classical 4th-order fixed-step integration of closed moment
// systems, derivative-match residuals, and an Euler-Maruyama Monte
// Carlo oracle with deterministic per-path random streams.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "mclose/closure.hpp"

namespace mclose {

namespace detail {

// Uniform step grid over [t0, t1]; dt is nudged down so the grid lands on t1
// exactly, which keeps closed and Monte Carlo pipelines on identical save
// points.
struct Grid {
    double t0 = 0.0;
    double h = 0.0;
    long long steps = 0;
    int save_every = 1;

    double time(long long k) const { return t0 + h * static_cast<double>(k); }
    bool is_save(long long k) const { return k % save_every == 0 || k == steps; }

    std::vector<long long> save_steps() const {
        std::vector<long long> out;
        for (long long k = 0; k <= steps; ++k)
            if (is_save(k)) out.push_back(k);
        return out;
    }
};

inline Grid make_grid(double t0, double t1, double dt, int save_every) {
    if (!(t1 > t0)) throw Error("time horizon: t1 must exceed t0");
    if (!(dt > 0.0)) throw Error("dt must be positive");
    if (save_every < 1) throw Error("save_every must be >= 1");
    long long n = static_cast<long long>(std::ceil((t1 - t0) / dt - 1e-9));
    if (n < 1) n = 1;
    return Grid{t0, (t1 - t0) / static_cast<double>(n), n, save_every};
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

// Standard normal stream derived from (seed, path index); Marsaglia polar
// method over a fully specified engine, so results do not depend on the
// standard library's distribution implementations.
class NormalSampler {
public:
    NormalSampler(uint64_t seed, uint64_t stream)
        : eng_(detail::splitmix64(detail::splitmix64(seed) ^
                                  detail::splitmix64(stream * 0x100000001b3ULL + 1))) {}

    double uniform() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Time-gridded closed-moment values.
struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<Complex>> values;  // [save point][basis]
    ClosureScheme scheme = ClosureScheme::DerivativeMatching;
    int max_order = 0;
    double delta = 0.0;
    double dt = 0.0;
};

// Monte Carlo moment estimates with componentwise 95% bands mean +- 1.96 se.
struct McEstimate {
    std::vector<double> times;
    std::vector<std::vector<Complex>> mean;   // [save point][basis]
    std::vector<std::vector<double>> stderr_; // [save point][basis]
    long long paths = 0;
    uint64_t seed = 0;
    long long failed_paths = 0;
};

// Moments of the point mass at x0: prod x0_i^{m_i} * prod e^{j q_i theta0_i}.
inline std::vector<Complex> initial_moments(const StateSpace& space, std::span<const double> x0,
                                            const std::vector<ExtIndex>& basis) {
    if (static_cast<int>(x0.size()) != space.dim())
        throw ModelError("initial_moments: state dimension mismatch");
    std::vector<Complex> out;
    out.reserve(basis.size());
    for (const auto& idx : basis) {
        Complex v{1.0, 0.0};
        for (int i = 0; i < space.dim(); ++i) {
            int e = idx.exps[i];
            if (e == 0) continue;
            if (space.kinds[i] == StateKind::Linear)
                v *= powi(x0[i], e);
            else
                v *= std::polar(1.0, static_cast<double>(e) * x0[i]);
        }
        out.push_back(v);
    }
    return out;
}

inline std::vector<Complex> initial_moments(const SdeModel& model,
                                            const std::vector<ExtIndex>& basis) {
    return initial_moments(model.space, model.init, basis);
}

namespace detail {

inline bool all_finite(std::span<const Complex> v) {
    for (const Complex& c : v)
        if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
    return true;
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace detail

// Classical RK4 with fixed step on the complex-valued closed system.
inline Trajectory integrate_closed(const ClosedMomentSystem& closed, std::vector<Complex> nu0,
                                   double t0, double t1, double dt, int save_every) {
    const detail::Grid grid = detail::make_grid(t0, t1, dt, save_every);
    const std::size_t k = closed.size();
    if (nu0.size() != k) throw Error("integrate_closed: initial vector size mismatch");

    Trajectory traj;
    traj.scheme = closed.rules.empty() ? ClosureScheme::DerivativeMatching : closed.rules[0].scheme;
    traj.max_order = closed.open.max_order;
    traj.delta = closed.delta;
    traj.dt = grid.h;

    std::vector<Complex> nu = std::move(nu0);
    std::vector<Complex> k1(k), k2(k), k3(k), k4(k), tmp(k);

    auto save = [&](long long step) {
        traj.times.push_back(grid.time(step));
        traj.values.push_back(nu);
    };
    save(0);

    const double h = grid.h;
    for (long long step = 0; step < grid.steps; ++step) {
        const double t = grid.time(step);
        closed.eval_rhs(t, nu, k1);
        for (std::size_t i = 0; i < k; ++i) tmp[i] = nu[i] + 0.5 * h * k1[i];
        closed.eval_rhs(t + 0.5 * h, tmp, k2);
        for (std::size_t i = 0; i < k; ++i) tmp[i] = nu[i] + 0.5 * h * k2[i];
        closed.eval_rhs(t + 0.5 * h, tmp, k3);
        for (std::size_t i = 0; i < k; ++i) tmp[i] = nu[i] + h * k3[i];
        closed.eval_rhs(t + h, tmp, k4);
        for (std::size_t i = 0; i < k; ++i)
            nu[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (!detail::all_finite(nu)) throw DivergedError(t);
        if (grid.is_save(step + 1)) save(step + 1);
    }
    return traj;
}

// Max relative mismatch of the first and second time derivatives of the
// closed system against the exact open dynamics at the deterministic initial
// condition x0 (both vanish in exact arithmetic for derivative matching). The extended
// open system must contain an equation for every moment the closed-basis
// right-hand sides reference.
inline std::pair<double, double> derivative_match_residual(const OpenMomentSystem& open_ext,
                                                           const ClosedMomentSystem& closed,
                                                           std::span<const double> x0) {
    const StateSpace& sp = closed.open.space;
    if (!(open_ext.space == sp))
        throw ExtensionError("extended system is over a different state space");
    const double t0 = 0.0;
    const std::size_t k = closed.size();

    auto exact = [&](const ExtIndex& idx) -> Complex {
        Complex v{1.0, 0.0};
        for (int i = 0; i < sp.dim(); ++i) {
            int e = idx.exps[i];
            if (e == 0) continue;
            if (sp.kinds[i] == StateKind::Linear)
                v *= powi(x0[i], e);
            else
                v *= std::polar(1.0, static_cast<double>(e) * x0[i]);
        }
        return v;
    };

    auto rhs_of = [&](const ExtIndex& idx) -> const MomentCombo& {
        int pos = closed.open.basis_pos(idx);
        if (pos >= 0) return closed.open.rhs[pos];
        if (order(idx) > open_ext.max_order)
            throw ExtensionError("extended system order " + std::to_string(open_ext.max_order) +
                                 " too low to differentiate " + moment_label(sp, idx));
        pos = open_ext.basis_pos(idx);
        if (pos < 0) throw ExtensionError("extended system lacks " + moment_label(sp, idx));
        return open_ext.rhs[pos];
    };

    auto rel = [](Complex a, Complex b) {
        return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
    };

    std::vector<Complex> nu0 = initial_moments(sp, x0, closed.open.basis);

    // first derivatives
    std::vector<Complex> f_closed(k), f_exact(k);
    closed.eval_rhs(t0, nu0, f_closed);
    for (std::size_t b = 0; b < k; ++b) f_exact[b] = eval_combo(closed.open.rhs[b], t0, exact);
    double first = 0.0;
    for (std::size_t b = 0; b < k; ++b) first = std::max(first, rel(f_closed[b], f_exact[b]));

    // exact second derivative: d/dt sum_r c_r(t) mu_r = sum_r c_r' mu_r + c_r mu_r'
    std::vector<Complex> s_exact(k, Complex{0.0, 0.0});
    for (std::size_t b = 0; b < k; ++b) {
        for (const auto& term : closed.open.rhs[b].terms) {
            Complex cval = term.coeff;
            Complex cdot{0.0, 0.0};
            if (term.has_harmonic()) {
                cval *= std::cos(term.freq * t0 + term.phase);
                cdot = -term.coeff * term.freq * std::sin(term.freq * t0 + term.phase);
            }
            if (term.basis.is_zero()) {
                s_exact[b] += cdot;
                continue;
            }
            Complex mu = exact(term.basis);
            Complex mu_dot = eval_combo(rhs_of(term.basis), t0, exact);
            s_exact[b] += cdot * mu + cval * mu_dot;
        }
    }

    // closed second derivative: dF/dt + (A + B Dphi) F
    std::vector<Complex> s_closed(k);
    closed.eval_rhs_coeff_tderiv(t0, nu0, s_closed);
    std::vector<Complex> a;
    std::vector<std::vector<Complex>> A, B;
    closed.assemble(t0, a, A, B);
    auto jac = closed.closure_jacobian(nu0);
    std::vector<Complex> dphi(closed.rules.size(), Complex{0.0, 0.0});
    for (std::size_t h = 0; h < closed.rules.size(); ++h)
        for (std::size_t c = 0; c < k; ++c) dphi[h] += jac[h][c] * f_closed[c];
    for (std::size_t b = 0; b < k; ++b) {
        for (std::size_t c = 0; c < k; ++c) s_closed[b] += A[b][c] * f_closed[c];
        for (std::size_t h = 0; h < closed.rules.size(); ++h) s_closed[b] += B[b][h] * dphi[h];
    }

    double second = 0.0;
    for (std::size_t b = 0; b < k; ++b) second = std::max(second, rel(s_closed[b], s_exact[b]));
    return {first, second};
}

namespace detail {

// Drift/noise evaluation must come out real on real states; complex residue
// beyond roundoff means the model's winding terms do not pair up.
inline double eval_real(const StateSpace& space, const PolyExpr& p, std::span<const double> x,
                        double t) {
    Complex v = eval_poly(space, p, x, t);
    if (std::abs(v.imag()) > 1e-9 * (1.0 + std::abs(v.real())))
        throw ModelError("drift/noise evaluates to a complex number; model is not real");
    return v.real();
}

inline Complex observable(const StateSpace& space, const ExtIndex& idx,
                          std::span<const double> x) {
    Complex v{1.0, 0.0};
    for (int i = 0; i < space.dim(); ++i) {
        int e = idx.exps[i];
        if (e == 0) continue;
        if (space.kinds[i] == StateKind::Linear)
            v *= powi(x[i], e);
        else
            v *= std::polar(1.0, static_cast<double>(e) * x[i]);
    }
    return v;
}

}  // namespace detail

// One Euler-Maruyama path on the shared grid. on_save(save_slot, t, x) fires
// at every save point; returns false if the path left the finite range.
// Angle states are simulated as unbounded reals.
template <class OnSave>
bool simulate_path(const SdeModel& model, std::span<const double> x0, double t0, double t1,
                   double dt, int save_every, NormalSampler& rng, OnSave&& on_save) {
    const detail::Grid grid = detail::make_grid(t0, t1, dt, save_every);
    const StateSpace& sp = model.space;
    const int n = sp.dim();
    const int d = model.channels();
    const double h = grid.h;
    const double sqrt_h = std::sqrt(h);

    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> dx(n);
    int slot = 0;
    on_save(slot++, grid.time(0), std::span<const double>(x));

    for (long long step = 0; step < grid.steps; ++step) {
        const double t = grid.time(step);
        for (int i = 0; i < n; ++i)
            dx[i] = model.drift[i].is_zero() ? 0.0
                                             : detail::eval_real(sp, model.drift[i], x, t) * h;
        for (int c = 0; c < d; ++c) {
            const double dw = sqrt_h * rng.normal();
            for (int i = 0; i < n; ++i) {
                if (model.noise[i][c].is_zero()) continue;
                dx[i] += detail::eval_real(sp, model.noise[i][c], x, t) * dw;
            }
        }
        for (int i = 0; i < n; ++i) x[i] += dx[i];
        if (!detail::all_finite(x)) return false;
        if (grid.is_save(step + 1)) on_save(slot++, grid.time(step + 1), std::span<const double>(x));
    }
    return true;
}

// Monte Carlo moment estimation. Paths are processed in fixed-size chunks
// whose partial sums are reduced in chunk order, so the result is identical
// for any worker count. Non-finite paths are dropped whole; more than 1% of
// them aborts the run.
inline McEstimate euler_maruyama(const SdeModel& model, std::span<const double> x0, double dt,
                                 double t1, long long paths, uint64_t seed, int save_every,
                                 const std::vector<ExtIndex>& basis, double t0 = 0.0,
                                 unsigned threads = 0) {
    if (paths < 2) throw Error("euler_maruyama: need at least 2 paths");
    const detail::Grid grid = detail::make_grid(t0, t1, dt, save_every);
    const std::vector<long long> save_ks = grid.save_steps();
    const std::size_t nsave = save_ks.size();
    const std::size_t nb = basis.size();
    const StateSpace& sp = model.space;

    constexpr long long kChunk = 256;
    const long long nchunks = (paths + kChunk - 1) / kChunk;

    struct ChunkSums {
        std::vector<Complex> sum;
        std::vector<double> sumsq;
        long long failed = 0;
    };
    std::vector<ChunkSums> chunks(static_cast<std::size_t>(nchunks));

    std::atomic<long long> next_chunk{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        std::vector<Complex> obs(nsave * nb);
        try {
            for (;;) {
                const long long ci = next_chunk.fetch_add(1);
                if (ci >= nchunks) break;
                ChunkSums& cs = chunks[static_cast<std::size_t>(ci)];
                cs.sum.assign(nsave * nb, Complex{0.0, 0.0});
                cs.sumsq.assign(nsave * nb, 0.0);
                const long long begin = ci * kChunk;
                const long long end = std::min(paths, begin + kChunk);
                for (long long p = begin; p < end; ++p) {
                    NormalSampler rng(seed, static_cast<uint64_t>(p));
                    bool ok = simulate_path(
                        model, x0, t0, t1, dt, save_every, rng,
                        [&](int slot, double, std::span<const double> x) {
                            for (std::size_t b = 0; b < nb; ++b)
                                obs[slot * nb + b] = detail::observable(sp, basis[b], x);
                        });
                    if (!ok) {
                        ++cs.failed;
                        continue;
                    }
                    for (std::size_t i = 0; i < nsave * nb; ++i) {
                        cs.sum[i] += obs[i];
                        cs.sumsq[i] += std::norm(obs[i]);
                    }
                }
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };

    unsigned nthreads = threads ? threads : std::thread::hardware_concurrency();
    if (nthreads == 0) nthreads = 1;
    nthreads = std::min<unsigned>(nthreads, static_cast<unsigned>(nchunks));
    // modest workloads are not worth spinning threads up for
    if (paths * grid.steps < 1'000'000) nthreads = 1;

    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (unsigned i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    // ordered reduction
    std::vector<Complex> sum(nsave * nb, Complex{0.0, 0.0});
    std::vector<double> sumsq(nsave * nb, 0.0);
    long long failed = 0;
    for (const auto& cs : chunks) {
        for (std::size_t i = 0; i < nsave * nb; ++i) {
            sum[i] += cs.sum[i];
            sumsq[i] += cs.sumsq[i];
        }
        failed += cs.failed;
    }
    if (failed * 100 > paths) throw PathFailureError(failed, paths);
    const double m = static_cast<double>(paths - failed);

    McEstimate est;
    est.paths = paths;
    est.seed = seed;
    est.failed_paths = failed;
    est.times.reserve(nsave);
    for (long long ks : save_ks) est.times.push_back(grid.time(ks));
    est.mean.assign(nsave, std::vector<Complex>(nb));
    est.stderr_.assign(nsave, std::vector<double>(nb));
    for (std::size_t s = 0; s < nsave; ++s) {
        for (std::size_t b = 0; b < nb; ++b) {
            Complex mean = sum[s * nb + b] / m;
            double var = sumsq[s * nb + b] / m - std::norm(mean);
            est.mean[s][b] = mean;
            est.stderr_[s][b] = std::sqrt(std::max(var, 0.0) / m);
        }
    }
    // all paths start at the same point: report the exact deterministic init
    est.mean[0] = initial_moments(sp, x0, basis);
    est.stderr_[0].assign(nb, 0.0);
    return est;
}

}  // namespace mclose
