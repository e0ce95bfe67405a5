#pragma once

// CSV emission for trajectories and Monte Carlo estimates. Columns follow the
// basis ordering; imaginary columns appear per moment only when requested or
// when some entry's imaginary part exceeds 1e-12. Angle states additionally
// get derived real observables E[sin(.)] = Im E[e^{j.}], E[cos(.)] = Re.

#include <ostream>
#include <string>
#include <vector>

#include "mclose/sim.hpp"

namespace mclose {

namespace detail {

struct CsvPlan {
    std::vector<bool> emit_imag;              // per basis moment
    std::vector<std::pair<int, int>> derived; // (angle state, basis pos of winding +1)
};

template <class Values>
CsvPlan make_csv_plan(const StateSpace& space, const std::vector<ExtIndex>& basis,
                      const Values& values, bool force_imag) {
    CsvPlan plan;
    plan.emit_imag.assign(basis.size(), force_imag);
    if (!force_imag) {
        for (const auto& row : values)
            for (std::size_t b = 0; b < basis.size(); ++b)
                if (std::abs(row[b].imag()) > 1e-12) plan.emit_imag[b] = true;
    }
    for (int i = 0; i < space.dim(); ++i) {
        if (space.kinds[i] != StateKind::Angle) continue;
        ExtIndex plus(space.dim());
        plus.exps[i] = 1;
        for (std::size_t b = 0; b < basis.size(); ++b)
            if (basis[b] == plus) plan.derived.emplace_back(i, static_cast<int>(b));
    }
    return plan;
}

}  // namespace detail

inline void write_trajectory_csv(const StateSpace& space, const std::vector<ExtIndex>& basis,
                                 const Trajectory& traj, bool force_imag, std::ostream& os) {
    detail::CsvPlan plan = detail::make_csv_plan(space, basis, traj.values, force_imag);
    os << "t";
    for (std::size_t b = 0; b < basis.size(); ++b) {
        std::string label = moment_label(space, basis[b]);
        os << ",re:" << label;
        if (plan.emit_imag[b]) os << ",im:" << label;
    }
    for (const auto& [state, pos] : plan.derived)
        os << ",E[sin(" << space.names[state] << ")],E[cos(" << space.names[state] << ")]";
    os << "\n";
    for (std::size_t s = 0; s < traj.times.size(); ++s) {
        os << fmt_double(traj.times[s]);
        for (std::size_t b = 0; b < basis.size(); ++b) {
            os << "," << fmt_double(traj.values[s][b].real());
            if (plan.emit_imag[b]) os << "," << fmt_double(traj.values[s][b].imag());
        }
        for (const auto& [state, pos] : plan.derived)
            os << "," << fmt_double(traj.values[s][pos].imag()) << ","
               << fmt_double(traj.values[s][pos].real());
        os << "\n";
    }
}

inline void write_mc_csv(const StateSpace& space, const std::vector<ExtIndex>& basis,
                         const McEstimate& est, bool force_imag, std::ostream& os) {
    detail::CsvPlan plan = detail::make_csv_plan(space, basis, est.mean, force_imag);
    os << "t";
    for (std::size_t b = 0; b < basis.size(); ++b) {
        std::string label = moment_label(space, basis[b]);
        os << ",re:" << label;
        if (plan.emit_imag[b]) os << ",im:" << label;
        os << ",se:" << label << ",lo:re:" << label << ",hi:re:" << label;
        if (plan.emit_imag[b]) os << ",lo:im:" << label << ",hi:im:" << label;
    }
    for (const auto& [state, pos] : plan.derived) {
        const std::string& n = space.names[state];
        os << ",E[sin(" << n << ")],lo:E[sin(" << n << ")],hi:E[sin(" << n << ")]";
        os << ",E[cos(" << n << ")],lo:E[cos(" << n << ")],hi:E[cos(" << n << ")]";
    }
    os << "\n";
    for (std::size_t s = 0; s < est.times.size(); ++s) {
        os << fmt_double(est.times[s]);
        for (std::size_t b = 0; b < basis.size(); ++b) {
            const Complex m = est.mean[s][b];
            const double half = 1.96 * est.stderr_[s][b];
            os << "," << fmt_double(m.real());
            if (plan.emit_imag[b]) os << "," << fmt_double(m.imag());
            os << "," << fmt_double(est.stderr_[s][b]);
            os << "," << fmt_double(m.real() - half) << "," << fmt_double(m.real() + half);
            if (plan.emit_imag[b])
                os << "," << fmt_double(m.imag() - half) << "," << fmt_double(m.imag() + half);
        }
        for (const auto& [state, pos] : plan.derived) {
            const Complex m = est.mean[s][pos];
            const double half = 1.96 * est.stderr_[s][pos];
            os << "," << fmt_double(m.imag()) << "," << fmt_double(m.imag() - half) << ","
               << fmt_double(m.imag() + half);
            os << "," << fmt_double(m.real()) << "," << fmt_double(m.real() - half) << ","
               << fmt_double(m.real() + half);
        }
        os << "\n";
    }
}

}  // namespace mclose
