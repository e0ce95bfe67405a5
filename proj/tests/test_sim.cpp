#include <doctest.h>

#include <array>
#include <fstream>
#include <sstream>

#include "mclose/parser.hpp"
#include "mclose/sim.hpp"

using namespace mclose;
using doctest::Approx;

namespace {

const std::string kModels = MCLOSE_MODELS_DIR;

SdeModel load(const std::string& name) {
    std::ifstream in(kModels + "/" + name + ".model");
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_model(ss.str(), name);
}

ClosedMomentSystem closed_for(const SdeModel& m, int M, ClosureScheme scheme,
                              double delta = 1e-8) {
    return close_system(build_open_system(m, M), scheme, delta);
}

}  // namespace

TEST_CASE("initial moments of the bundled models") {
    SdeModel vdp = load("vdp");
    auto basis = enumerate_upto(vdp.space, 2);
    auto nu0 = initial_moments(vdp, basis);
    std::vector<Complex> expect = {0.1, 0.1, 0.01, 0.01, 0.01};
    REQUIRE(nu0.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(nu0[i] - expect[i]) < 1e-15);

    // pendulum at x0 = (0, v0): windings map to 1
    SdeModel pend = load("pendulum");
    std::vector<double> x0 = {0.0, 0.7};
    auto pb = enumerate_upto(pend.space, 2);
    auto p0 = initial_moments(pend.space, x0, pb);
    CHECK(p0[0] == Complex{1.0, 0.0});   // e^{j x1}
    CHECK(p0[1] == Complex{1.0, 0.0});   // e^{-j x1}
    CHECK(p0[2] == Complex{0.7, 0.0});   // x2

    // zero-order label evaluates to 1
    auto one = initial_moments(pend.space, x0, {ExtIndex({0, 0})});
    CHECK(one[0] == Complex{1.0, 0.0});
}

TEST_CASE("OU closed system reproduces the analytic mean and variance") {
    SdeModel ou = load("ou");
    ClosedMomentSystem closed = closed_for(ou, 2, ClosureScheme::DerivativeMatching);
    auto nu0 = initial_moments(ou, closed.open.basis);

    Trajectory traj = integrate_closed(closed, nu0, 0.0, 1.0, 1e-3, 100);
    CHECK(traj.times.back() == Approx(1.0));
    CHECK(traj.values.back()[0].real() == Approx(std::exp(-1.0)).epsilon(1e-6));

    Trajectory longrun = integrate_closed(closed, nu0, 0.0, 20.0, 1e-3, 1000);
    CHECK(longrun.values.back()[1].real() == Approx(0.5).epsilon(1e-4));
}

TEST_CASE("VdP closed trajectory stays finite and oscillates") {
    SdeModel vdp = load("vdp");
    ClosedMomentSystem closed = closed_for(vdp, 2, ClosureScheme::DerivativeMatching);
    auto nu0 = initial_moments(vdp, closed.open.basis);
    Trajectory traj = integrate_closed(closed, nu0, 0.0, 0.05, 1e-6, 1000);
    REQUIRE(traj.times.size() == 51);
    int sign_changes = 0;
    for (std::size_t s = 1; s < traj.values.size(); ++s) {
        double prev = traj.values[s - 1][0].real();
        double curr = traj.values[s][0].real();
        CHECK(std::isfinite(curr));
        if (prev * curr < 0.0) ++sign_changes;
    }
    CHECK(sign_changes >= 2);  // forced at 60 Hz over 0.05 s
}

TEST_CASE("integrate_closed reports blow-up with the last finite time") {
    SdeModel vdp = load("vdp");
    ClosedMomentSystem closed = closed_for(vdp, 2, ClosureScheme::DerivativeMatching);
    auto nu0 = initial_moments(vdp, closed.open.basis);
    // w dt >> 1 makes RK4 amplify ~5.7x per step; give it room to overflow
    CHECK_THROWS_AS(integrate_closed(closed, nu0, 0.0, 10.0, 0.01, 1), DivergedError);
    try {
        integrate_closed(closed, nu0, 0.0, 10.0, 0.01, 1);
    } catch (const DivergedError& e) {
        CHECK(e.last_finite_time() >= 0.0);
        CHECK(e.last_finite_time() < 10.0);
    }
}

TEST_CASE("step-halving shows fourth-order convergence") {
    // observed order p from ||v(dt)-v(dt/2)|| / ||v(dt/2)-v(dt/4)|| = 2^p
    auto terminal = [](const ClosedMomentSystem& closed, std::vector<Complex> nu0, double t1,
                       double dt) {
        Trajectory t = integrate_closed(closed, std::move(nu0), 0.0, t1, dt, 1 << 30);
        return t.values.back();
    };
    auto norm_diff = [](const std::vector<Complex>& a, const std::vector<Complex>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
        return std::sqrt(s);
    };

    SdeModel ou = load("ou");
    ClosedMomentSystem co = closed_for(ou, 2, ClosureScheme::DerivativeMatching);
    auto n0 = initial_moments(ou, co.open.basis);
    auto c1 = terminal(co, n0, 2.0, 0.2);
    auto c2 = terminal(co, n0, 2.0, 0.1);
    auto c3 = terminal(co, n0, 2.0, 0.05);
    double p_ou = std::log2(norm_diff(c1, c2) / norm_diff(c2, c3));
    CHECK(p_ou >= 3.5);

    SdeModel vdp = load("vdp");
    ClosedMomentSystem cv = closed_for(vdp, 2, ClosureScheme::DerivativeMatching);
    auto v0 = initial_moments(vdp, cv.open.basis);
    auto d1 = terminal(cv, v0, 0.005, 4e-5);
    auto d2 = terminal(cv, v0, 0.005, 2e-5);
    auto d3 = terminal(cv, v0, 0.005, 1e-5);
    double p_vdp = std::log2(norm_diff(d1, d2) / norm_diff(d2, d3));
    CHECK(p_vdp >= 3.5);
}

TEST_CASE("derivative-match residuals vanish for the bundled models") {
    SdeModel vdp = load("vdp");
    ClosedMomentSystem cv = closed_for(vdp, 2, ClosureScheme::DerivativeMatching);
    OpenMomentSystem ext_v = build_open_system(vdp, 6);
    std::vector<double> x0 = {0.1, 0.1};
    auto [first_v, second_v] = derivative_match_residual(ext_v, cv, x0);
    CHECK(first_v <= 1e-9);
    CHECK(second_v <= 1e-8);

    SdeModel pend = load("pendulum");
    ClosedMomentSystem cp = closed_for(pend, 2, ClosureScheme::DerivativeMatching);
    OpenMomentSystem ext_p = build_open_system(pend, 6);
    // both coordinates away from zero: the matching identities divide by x0_i
    std::vector<double> p0 = {0.3, 0.4};
    auto [first_p, second_p] = derivative_match_residual(ext_p, cp, p0);
    CHECK(first_p <= 1e-8);
    CHECK(second_p <= 1e-8);
}

TEST_CASE("residuals are exactly zero without closure") {
    SdeModel ou = load("ou");
    ClosedMomentSystem co = closed_for(ou, 2, ClosureScheme::DerivativeMatching);
    OpenMomentSystem ext = build_open_system(ou, 6);
    std::vector<double> x0 = {1.0};
    auto [first, second] = derivative_match_residual(ext, co, x0);
    CHECK(first == 0.0);
    CHECK(second == 0.0);
}

TEST_CASE("residual computation demands a sufficient extension") {
    SdeModel vdp = load("vdp");
    ClosedMomentSystem cv = closed_for(vdp, 2, ClosureScheme::DerivativeMatching);
    OpenMomentSystem too_low = build_open_system(vdp, 3);  // references reach order 4
    std::vector<double> x0 = {0.1, 0.1};
    CHECK_THROWS_AS(derivative_match_residual(too_low, cv, x0), ExtensionError);
}

TEST_CASE("zero-noise Euler-Maruyama converges first order to an RK4 reference") {
    std::string text =
        "states: x1, x2\n"
        "param eps = 0.1\n"
        "param A = 2.5\n"
        "param w = 120*pi\n"
        "init x1 = 0.1\n"
        "init x2 = 0.1\n"
        "drift x1 = x2\n"
        "drift x2 = eps*(1 - x1^2)*x2 - w^2*x1 + A*cos(w*t)\n"
        "noise x2 = 0\n";
    SdeModel m = parse_model(text, "vdp0");
    REQUIRE(m.channels() == 0);

    const double t1 = 0.01;
    const double eps = 0.1, A = 2.5, w = 120.0 * 3.14159265358979323846;
    auto f = [&](double t, std::array<double, 2> s) {
        return std::array<double, 2>{
            s[1], eps * (1.0 - s[0] * s[0]) * s[1] - w * w * s[0] + A * std::cos(w * t)};
    };
    // reference RK4 at a fine step
    std::array<double, 2> ref = {0.1, 0.1};
    const double href = 1e-6;
    for (int k = 0; k < 10000; ++k) {
        double t = k * href;
        auto k1 = f(t, ref);
        auto k2 = f(t + href / 2, {ref[0] + href / 2 * k1[0], ref[1] + href / 2 * k1[1]});
        auto k3 = f(t + href / 2, {ref[0] + href / 2 * k2[0], ref[1] + href / 2 * k2[1]});
        auto k4 = f(t + href, {ref[0] + href * k3[0], ref[1] + href * k3[1]});
        ref[0] += href / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
        ref[1] += href / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
    }

    auto basis = enumerate_upto(m.space, 1);
    auto run = [&](double dt) {
        McEstimate est = euler_maruyama(m, m.init, dt, t1, 2, 1, 1 << 30, basis);
        return est.mean.back()[0].real();  // E[x1] at t1
    };
    double err_coarse = std::abs(run(2e-6) - ref[0]);
    double err_fine = std::abs(run(1e-6) - ref[0]);
    CHECK(err_coarse < 0.02);
    double ratio = err_coarse / err_fine;
    CHECK(ratio > 1.5);
    CHECK(ratio < 2.6);
}

TEST_CASE("OU Monte Carlo mean agrees with the analytic solution") {
    SdeModel ou = load("ou");
    auto basis = enumerate_upto(ou.space, 2);
    McEstimate est = euler_maruyama(ou, ou.init, 1e-3, 1.0, 10000, 42, 1000, basis);
    double mean = est.mean.back()[0].real();
    double se = est.stderr_.back()[0];
    CHECK(se > 0.0);
    CHECK(std::abs(mean - std::exp(-1.0)) <= 3.0 * se);
    CHECK(est.failed_paths == 0);
}

TEST_CASE("pendulum <sin x1> equals Im<e^{j x1}> on the same samples") {
    SdeModel pend = load("pendulum");
    std::vector<ExtIndex> basis = {ExtIndex({1, 0})};
    const double dt = 1e-3, t1 = 0.5;
    const uint64_t seed = 7;
    const long long paths = 500;
    McEstimate est = euler_maruyama(pend, pend.init, dt, t1, paths, seed, 100, basis);

    // replay the identical paths and average sin(x1) directly
    std::vector<double> sin_sum(est.times.size(), 0.0);
    for (long long p = 0; p < paths; ++p) {
        NormalSampler rng(seed, static_cast<uint64_t>(p));
        bool ok = simulate_path(pend, pend.init, 0.0, t1, dt, 100, rng,
                                [&](int slot, double, std::span<const double> x) {
                                    sin_sum[slot] += std::sin(x[0]);
                                });
        REQUIRE(ok);
    }
    for (std::size_t s = 1; s < est.times.size(); ++s)
        CHECK(std::abs(est.mean[s][0].imag() - sin_sum[s] / paths) < 1e-12);
}

TEST_CASE("Monte Carlo estimate at t0 equals the deterministic init exactly") {
    SdeModel vdp = load("vdp");
    auto basis = enumerate_upto(vdp.space, 2);
    McEstimate est = euler_maruyama(vdp, vdp.init, 1e-4, 1e-3, 64, 3, 5, basis);
    auto nu0 = initial_moments(vdp, basis);
    for (std::size_t b = 0; b < basis.size(); ++b) {
        CHECK(est.mean[0][b] == nu0[b]);
        CHECK(est.stderr_[0][b] == 0.0);
    }
}

TEST_CASE("Monte Carlo is deterministic and schedule independent") {
    SdeModel ou = load("ou");
    auto basis = enumerate_upto(ou.space, 2);
    McEstimate a = euler_maruyama(ou, ou.init, 1e-3, 0.5, 2000, 11, 100, basis, 0.0, 1);
    McEstimate b = euler_maruyama(ou, ou.init, 1e-3, 0.5, 2000, 11, 100, basis, 0.0, 2);
    McEstimate c = euler_maruyama(ou, ou.init, 1e-3, 0.5, 2000, 11, 100, basis, 0.0, 2);
    REQUIRE(a.mean.size() == b.mean.size());
    for (std::size_t s = 0; s < a.mean.size(); ++s)
        for (std::size_t k = 0; k < basis.size(); ++k) {
            CHECK(a.mean[s][k] == b.mean[s][k]);
            CHECK(b.mean[s][k] == c.mean[s][k]);
            CHECK(a.stderr_[s][k] == b.stderr_[s][k]);
        }
}

TEST_CASE("exploding paths trip the failure threshold") {
    SdeModel m = parse_model("states: x\ninit x = 2\ndrift x = x^3\nnoise x = 1\n", "boom");
    auto basis = enumerate_upto(m.space, 1);
    CHECK_THROWS_AS(euler_maruyama(m, m.init, 0.1, 3.0, 16, 1, 1, basis), PathFailureError);
}

TEST_CASE("complex drift trips the realness guard") {
    SdeModel m = parse_model("states: a: angle, v\ndrift v = exp(j*a)\nnoise v = 1\n", "bad");
    auto basis = enumerate_upto(m.space, 1);
    std::vector<double> x0 = {0.4, 0.0};
    CHECK_THROWS_AS(euler_maruyama(m, x0, 1e-3, 0.1, 4, 1, 1, basis), ModelError);
}

TEST_CASE("Monte Carlo slope at t0 matches ito_rhs within 3 standard errors") {
    for (const std::string name : {"vdp", "pendulum"}) {
        SdeModel m = load(name);
        auto basis = enumerate_upto(m.space, 2);
        const double dt = 1e-9;
        McEstimate est = euler_maruyama(m, m.init, dt, dt, 20000, 99, 1, basis);
        REQUIRE(est.times.size() == 2);

        auto exact = [&](const ExtIndex& idx) {
            return initial_moments(m.space, m.init, {idx})[0];
        };
        for (std::size_t b = 0; b < basis.size(); ++b) {
            Complex slope = (est.mean[1][b] - exact(basis[b])) / dt;
            Complex rhs = eval_combo(ito_rhs(m, basis[b]), 0.0, exact);
            double tol = 3.0 * est.stderr_[1][b] / dt + 1e-4 * (1.0 + std::abs(rhs));
            CHECK(std::abs(slope - rhs) <= tol);
        }
    }
}

TEST_CASE("conjugate symmetry holds along the pendulum DM trajectory") {
    SdeModel pend = load("pendulum");
    ClosedMomentSystem closed = closed_for(pend, 2, ClosureScheme::DerivativeMatching);
    auto nu0 = initial_moments(pend, closed.open.basis);
    Trajectory traj = integrate_closed(closed, nu0, 0.0, 1.0, 1e-4, 500);

    const auto& basis = closed.open.basis;
    for (std::size_t s = 0; s < traj.values.size(); ++s) {
        for (std::size_t b = 0; b < basis.size(); ++b) {
            ExtIndex conj_idx = conjugate_index(pend.space, basis[b]);
            int cb = closed.open.basis_pos(conj_idx);
            REQUIRE(cb >= 0);
            Complex v = traj.values[s][b];
            Complex w = traj.values[s][cb];
            CHECK(std::abs(v - std::conj(w)) <= 1e-9);
            bool pure_monomial = conj_idx == basis[b];
            if (pure_monomial) CHECK(std::abs(v.imag()) <= 1e-9);
        }
    }
}

TEST_CASE("closed and Monte Carlo pipelines share the save grid") {
    SdeModel ou = load("ou");
    ClosedMomentSystem closed = closed_for(ou, 2, ClosureScheme::DerivativeMatching);
    auto basis = closed.open.basis;
    Trajectory traj = integrate_closed(closed, initial_moments(ou, basis), 0.0, 0.3, 1e-3, 77);
    McEstimate est = euler_maruyama(ou, ou.init, 1e-3, 0.3, 8, 1, 77, basis);
    REQUIRE(traj.times.size() == est.times.size());
    for (std::size_t s = 0; s < traj.times.size(); ++s) CHECK(traj.times[s] == est.times[s]);
}
