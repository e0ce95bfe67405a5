#pragma once

#include <map>
#include <string>
#include <vector>

#include "mclose/expr.hpp"

namespace mclose {

// Parsed SDE: dx = f(x,t) dt + G(x,t) dw with an n x d noise matrix.
// Parameters are substituted at parse time; the map is kept for reporting.
struct SdeModel {
    StateSpace space;
    std::map<std::string, double> params;
    std::vector<double> init;                  // deterministic x(t0), defaults to 0
    std::vector<PolyExpr> drift;               // one entry per state
    std::vector<std::vector<PolyExpr>> noise;  // [state][channel]
    std::string name;

    int channels() const { return noise.empty() ? 0 : static_cast<int>(noise[0].size()); }

    bool operator==(const SdeModel& o) const {
        return space == o.space && params == o.params && init == o.init && drift == o.drift &&
               noise == o.noise;
    }
};

// Canonical model-grammar text; reparsing it yields an equal model.
inline std::string render_model(const SdeModel& m) {
    std::string out = "states:";
    for (int i = 0; i < m.space.dim(); ++i) {
        out += (i ? ", " : " ") + m.space.names[i];
        if (m.space.kinds[i] == StateKind::Angle) out += ": angle";
    }
    out += "\n";
    for (const auto& [name, value] : m.params)
        out += "param " + name + " = " + fmt_double(value) + "\n";
    for (int i = 0; i < m.space.dim(); ++i)
        if (m.init[i] != 0.0)
            out += "init " + m.space.names[i] + " = " + fmt_double(m.init[i]) + "\n";
    for (int i = 0; i < m.space.dim(); ++i)
        if (!m.drift[i].is_zero())
            out += "drift " + m.space.names[i] + " = " + render_expr(m.space, m.drift[i]) + "\n";
    for (int i = 0; i < m.space.dim(); ++i)
        for (int c = 0; c < m.channels(); ++c)
            if (!m.noise[i][c].is_zero())
                out += "noise " + m.space.names[i] + "[" + std::to_string(c) +
                       "] = " + render_expr(m.space, m.noise[i][c]) + "\n";
    return out;
}

}  // namespace mclose
