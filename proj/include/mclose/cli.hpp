#pragma once

// Command-line front end. Subcommands: parse, moments, close, run, mc,
// compare. Exit codes: 0 success, 2 parse/validation failure, 3 closure
// failure, 4 diverged integration, 5 Monte Carlo path-failure threshold.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mclose/csv.hpp"
#include "mclose/parser.hpp"

namespace mclose {

struct RunConfig {
    std::string model_path;
    int order = 2;
    std::string scheme = "dm";  // dm | mf
    double t0 = 0.0;
    double t1 = 1.0;
    double dt = 1e-6;
    int save_every = 1000;
    double delta = 1e-8;
    long long paths = 10000;
    std::uint64_t seed = 42;
    std::string out;
    bool imag = false;
};

// Per tracked moment: relative L2 error of the closed trajectory against the
// MC mean, and the share of save points where the closed value sits inside
// the MC 95% band.
struct CompareRow {
    std::string label;
    double rel_l2_error = 0.0;
    double ci_coverage = 0.0;
};

namespace cli_detail {

inline SdeModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("file not found: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_model(ss.str(), std::filesystem::path(path).stem().string());
}

inline ClosureScheme scheme_of(const RunConfig& cfg) {
    if (cfg.scheme == "dm") return ClosureScheme::DerivativeMatching;
    if (cfg.scheme == "mf") return ClosureScheme::MeanField;
    throw Error("scheme must be 'dm' or 'mf', got '" + cfg.scheme + "'");
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open output file: " + path);
    out << content;
}

inline void emit(const RunConfig& cfg, const std::string& content, std::ostream& fallback) {
    if (cfg.out.empty())
        fallback << content;
    else
        write_file(cfg.out, content);
}

inline int cmd_parse(const RunConfig& cfg, std::ostream& out) {
    SdeModel model = load_model(cfg.model_path);
    out << "# model " << model.name << "\n" << render_model(model);
    return 0;
}

inline std::string label_list(const StateSpace& space, const std::vector<ExtIndex>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + moment_label(space, v[i]);
    return s;
}

inline int cmd_moments(const RunConfig& cfg, std::ostream& out) {
    SdeModel model = load_model(cfg.model_path);
    OpenMomentSystem sys = build_open_system(model, cfg.order);
    out << "model " << model.name << ", order " << cfg.order << "\n";
    out << "basis (" << sys.basis.size() << "): " << label_list(sys.space, sys.basis) << "\n";
    out << "higher (" << sys.higher.size() << "): " << label_list(sys.space, sys.higher) << "\n";
    out << render_open_system(sys);
    return 0;
}

inline int cmd_close(const RunConfig& cfg, std::ostream& out) {
    SdeModel model = load_model(cfg.model_path);
    OpenMomentSystem open = build_open_system(model, cfg.order);
    ClosedMomentSystem closed = close_system(std::move(open), scheme_of(cfg), cfg.delta);
    const auto& sys = closed.open;
    out << "model " << model.name << ", order " << cfg.order << ", scheme " << cfg.scheme
        << ", delta " << fmt_double(cfg.delta) << "\n";
    out << "rules (" << closed.rules.size() << "):\n";
    for (const auto& rule : closed.rules) {
        out << render_rule(sys.space, sys.basis, rule) << "\n";
        out << "  alpha:";
        for (double e : rule.exponents) out << " " << fmt_double(e);
        if (rule.scheme == ClosureScheme::DerivativeMatching)
            out << " (solved " << rule.system_size << "x" << rule.system_size << " system)";
        else
            out << " (mean-field split)";
        out << "\n";
    }
    return 0;
}

inline Trajectory run_closed(const SdeModel& model, const RunConfig& cfg) {
    OpenMomentSystem open = build_open_system(model, cfg.order);
    ClosedMomentSystem closed = close_system(std::move(open), scheme_of(cfg), cfg.delta);
    std::vector<Complex> nu0 = initial_moments(model, closed.open.basis);
    return integrate_closed(closed, std::move(nu0), cfg.t0, cfg.t1, cfg.dt, cfg.save_every);
}

inline int cmd_run(const RunConfig& cfg, std::ostream& out) {
    SdeModel model = load_model(cfg.model_path);
    OpenMomentSystem sys = build_open_system(model, cfg.order);
    Trajectory traj = run_closed(model, cfg);
    std::ostringstream csv;
    write_trajectory_csv(model.space, sys.basis, traj, cfg.imag, csv);
    emit(cfg, csv.str(), out);
    return 0;
}

inline int cmd_mc(const RunConfig& cfg, std::ostream& out) {
    SdeModel model = load_model(cfg.model_path);
    std::vector<ExtIndex> basis = enumerate_upto(model.space, cfg.order);
    McEstimate est = euler_maruyama(model, model.init, cfg.dt, cfg.t1, cfg.paths, cfg.seed,
                                    cfg.save_every, basis, cfg.t0);
    std::ostringstream csv;
    write_mc_csv(model.space, basis, est, cfg.imag, csv);
    emit(cfg, csv.str(), out);
    return 0;
}

inline int cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    SdeModel model = load_model(cfg.model_path);
    std::vector<ExtIndex> basis = enumerate_upto(model.space, cfg.order);

    auto tic = std::chrono::steady_clock::now();
    Trajectory traj = run_closed(model, cfg);
    auto mid = std::chrono::steady_clock::now();
    McEstimate est = euler_maruyama(model, model.init, cfg.dt, cfg.t1, cfg.paths, cfg.seed,
                                    cfg.save_every, basis, cfg.t0);
    auto toc = std::chrono::steady_clock::now();

    if (traj.times.size() != est.times.size())
        throw Error("internal: closed and Monte Carlo grids differ");

    const std::string prefix = cfg.out.empty() ? "compare" : cfg.out;
    {
        std::ostringstream csv;
        write_trajectory_csv(model.space, basis, traj, cfg.imag, csv);
        write_file(prefix + "_closed.csv", csv.str());
    }
    {
        std::ostringstream csv;
        write_mc_csv(model.space, basis, est, cfg.imag, csv);
        write_file(prefix + "_mc.csv", csv.str());
    }

    // tracked moments: every basis moment plus derived sin/cos per angle state
    struct Tracked {
        std::string label;
        int pos;
        int component;  // 0 complex, 1 imag only (sin), 2 real only (cos)
    };
    std::vector<Tracked> tracked;
    for (std::size_t b = 0; b < basis.size(); ++b)
        tracked.push_back({moment_label(model.space, basis[b]), static_cast<int>(b), 0});
    for (int i = 0; i < model.space.dim(); ++i) {
        if (model.space.kinds[i] != StateKind::Angle) continue;
        ExtIndex plus(model.space.dim());
        plus.exps[i] = 1;
        int pos = -1;
        for (std::size_t b = 0; b < basis.size(); ++b)
            if (basis[b] == plus) pos = static_cast<int>(b);
        if (pos < 0) continue;
        tracked.push_back({"E[sin(" + model.space.names[i] + ")]", pos, 1});
        tracked.push_back({"E[cos(" + model.space.names[i] + ")]", pos, 2});
    }

    const std::size_t nsave = traj.times.size();
    std::vector<CompareRow> rows;
    for (const auto& tr : tracked) {
        double num = 0.0, den = 0.0;
        std::size_t covered = 0;
        for (std::size_t s = 0; s < nsave; ++s) {
            Complex c = traj.values[s][tr.pos];
            Complex m = est.mean[s][tr.pos];
            double half = 1.96 * est.stderr_[s][tr.pos];
            bool in_band = true;
            double d2 = 0.0, m2 = 0.0;
            if (tr.component != 2) {  // imaginary part tracked
                double d = c.imag() - m.imag();
                d2 += d * d;
                m2 += m.imag() * m.imag();
                in_band = in_band && std::abs(d) <= half;
            }
            if (tr.component != 1) {  // real part tracked
                double d = c.real() - m.real();
                d2 += d * d;
                m2 += m.real() * m.real();
                in_band = in_band && std::abs(d) <= half;
            }
            num += d2;
            den += m2;
            if (in_band) ++covered;
        }
        CompareRow row;
        row.label = tr.label;
        row.rel_l2_error = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
        row.ci_coverage = static_cast<double>(covered) / static_cast<double>(nsave);
        rows.push_back(row);
    }

    out << "compare: model=" << model.name << " scheme=" << cfg.scheme << " order=" << cfg.order
        << " t=[" << fmt_double(cfg.t0) << "," << fmt_double(cfg.t1) << "]"
        << " dt=" << fmt_double(cfg.dt) << " save_every=" << cfg.save_every
        << " paths=" << cfg.paths << " seed=" << cfg.seed << " delta=" << fmt_double(cfg.delta)
        << "\n";
    out << "csv: " << prefix << "_closed.csv " << prefix << "_mc.csv\n";
    out << "moment rel_l2_error ci_coverage\n";
    for (const auto& row : rows)
        out << row.label << " " << fmt_double(row.rel_l2_error) << " "
            << fmt_double(row.ci_coverage) << "\n";

    auto seconds = [](auto a, auto b) {
        return std::chrono::duration<double>(b - a).count();
    };
    err << "timing: closed " << seconds(tic, mid) << " s, mc " << seconds(mid, toc) << " s\n";
    return 0;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    CLI::App app{"moment-closure toolkit for nonlinear SDE models"};
    app.require_subcommand(1);

    auto add_model = [&](CLI::App* sub) {
        sub->add_option("model", cfg.model_path, "model file")->required();
    };
    auto add_order = [&](CLI::App* sub) {
        sub->add_option("--order", cfg.order, "truncation order M");
    };
    auto add_scheme = [&](CLI::App* sub) {
        sub->add_option("--scheme", cfg.scheme, "closure scheme: dm | mf");
        sub->add_option("--delta", cfg.delta, "denominator regularization");
    };
    auto add_grid = [&](CLI::App* sub) {
        sub->add_option("--t0", cfg.t0, "start time");
        sub->add_option("--t1", cfg.t1, "end time");
        sub->add_option("--dt", cfg.dt, "step size");
        sub->add_option("--save-every", cfg.save_every, "save every K steps");
        sub->add_option("--out", cfg.out, "output path (compare: prefix)");
        sub->add_flag("--imag", cfg.imag, "always emit imaginary columns");
    };
    auto add_mc = [&](CLI::App* sub) {
        sub->add_option("--paths", cfg.paths, "Monte Carlo path count");
        sub->add_option("--seed", cfg.seed, "random seed");
    };

    CLI::App* sub_parse = app.add_subcommand("parse", "parse and dump a model");
    add_model(sub_parse);
    CLI::App* sub_moments = app.add_subcommand("moments", "print the open moment system");
    add_model(sub_moments);
    add_order(sub_moments);
    CLI::App* sub_close = app.add_subcommand("close", "print the closure rules");
    add_model(sub_close);
    add_order(sub_close);
    add_scheme(sub_close);
    CLI::App* sub_run = app.add_subcommand("run", "integrate the closed system to CSV");
    add_model(sub_run);
    add_order(sub_run);
    add_scheme(sub_run);
    add_grid(sub_run);
    CLI::App* sub_mc = app.add_subcommand("mc", "Monte Carlo moment estimation to CSV");
    add_model(sub_mc);
    add_order(sub_mc);
    add_grid(sub_mc);
    add_mc(sub_mc);
    CLI::App* sub_compare = app.add_subcommand("compare", "closed vs Monte Carlo report");
    add_model(sub_compare);
    add_order(sub_compare);
    add_scheme(sub_compare);
    add_grid(sub_compare);
    add_mc(sub_compare);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }

    try {
        if (app.got_subcommand(sub_parse)) return cli_detail::cmd_parse(cfg, out);
        if (app.got_subcommand(sub_moments)) return cli_detail::cmd_moments(cfg, out);
        if (app.got_subcommand(sub_close)) return cli_detail::cmd_close(cfg, out);
        if (app.got_subcommand(sub_run)) return cli_detail::cmd_run(cfg, out);
        if (app.got_subcommand(sub_mc)) return cli_detail::cmd_mc(cfg, out);
        if (app.got_subcommand(sub_compare)) return cli_detail::cmd_compare(cfg, out, err);
    } catch (const ClosureError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const DivergedError& e) {
        err << "error: " << e.what() << "\n";
        return 4;
    } catch (const PathFailureError& e) {
        err << "error: " << e.what() << "\n";
        return 5;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.push_back("mclose");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace mclose
