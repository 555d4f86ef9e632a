#pragma once

// Command-line front end: channel-stab <resolvent|evolve|simulate|scan|fit|report> [flags].
// Each subcommand builds its configuration as defaults <- JSON file (--config) <- flags, runs,
// writes under <out>/<campaign>/<subcommand>/ and echoes the effective configuration there.

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "channel_stab/parallel.hpp"
#include "channel_stab/resolvent_verify.hpp"
#include "channel_stab/scan_orchestrator.hpp"

namespace channel_stab::cli {

// sysexits-style codes
enum Exit : int { ok = 0, failure = 1, flagged_excess = 2, usage = 64, data_error = 65, no_input = 66, cant_create = 73 };

class NoInput : public std::runtime_error {
public:
    explicit NoInput(const std::string& m) : std::runtime_error(m) {}
};

enum class Kind { number, integer, text, numbers, integers, texts, flag };

struct OptSpec {
    std::string flag;
    std::string key;  // dotted path into the subcommand config
    Kind kind;
    std::string help;
    json flag_value = true;
};

struct Logger {
    int level = 1;  // 0 quiet, 1 info, 2 debug
    std::ostream* err = &std::cerr;
    void info(const std::string& m) const {
        if (level >= 1) *err << "[info] " << m << "\n";
    }
    void debug(const std::string& m) const {
        if (level >= 2) *err << "[debug] " << m << "\n";
    }
};

struct Context {
    io::fs::path out_root = "out";
    std::string campaign = "default";
    int threads = 1;
    bool force = false;
    bool resume = false;
    Logger log;
    std::ostream* out = &std::cout;

    io::fs::path dir(const std::string& sub) const { return out_root / campaign / sub; }
};

namespace detail {

inline double parse_number(const std::string& s) {
    const char* b = s.c_str();
    char* e = nullptr;
    errno = 0;
    const double v = std::strtod(b, &e);
    if (s.empty() || e != b + s.size() || errno == ERANGE) throw InvalidArgument("not a number: '" + s + "'");
    return v;
}

inline long long parse_integer(const std::string& s) {
    const char* b = s.c_str();
    char* e = nullptr;
    errno = 0;
    const long long v = std::strtoll(b, &e, 10);
    if (s.empty() || e != b + s.size() || errno == ERANGE) throw InvalidArgument("not an integer: '" + s + "'");
    return v;
}

inline json convert(const OptSpec& o, const std::vector<std::string>& raw) {
    auto one = [&]() -> const std::string& {
        if (raw.size() != 1) throw InvalidArgument(o.flag + " takes one value");
        return raw.front();
    };
    try {
        switch (o.kind) {
            case Kind::number: return parse_number(one());
            case Kind::integer: return parse_integer(one());
            case Kind::text: return one();
            case Kind::numbers: {
                json a = json::array();
                for (const auto& s : raw) a.push_back(parse_number(s));
                return a;
            }
            case Kind::integers: {
                json a = json::array();
                for (const auto& s : raw) a.push_back(parse_integer(s));
                return a;
            }
            case Kind::texts: return json(raw);
            case Kind::flag: return o.flag_value;
        }
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(o.flag + ": " + e.what());
    }
    return nullptr;
}

inline json* find_path(json& j, const std::string& path, bool create) {
    json* cur = &j;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!cur->is_object()) return nullptr;
        if (!cur->contains(part)) {
            if (!create) return nullptr;
            (*cur)[part] = nullptr;
        }
        cur = &(*cur)[part];
    }
    return cur;
}

/// Overlay `src` on `dst`; keys absent from `dst` are rejected, except below `open` paths.
inline void overlay(json& dst, const json& src, const std::string& where, const std::vector<std::string>& open) {
    if (!src.is_object()) throw InvalidArgument("config" + where + ": expected a JSON object");
    for (const auto& [k, v] : src.items()) {
        const std::string path = where.empty() ? k : where.substr(1) + "." + k;
        const bool is_open = std::find(open.begin(), open.end(), where.empty() ? std::string() : where.substr(1)) != open.end();
        if (!dst.contains(k) && !is_open) throw InvalidArgument("config: unknown key '" + path + "'");
        if (dst.contains(k) && dst[k].is_object() && v.is_object())
            overlay(dst[k], v, where + "." + k, open);
        else
            dst[k] = v;
    }
}

template <class T>
T get(const json& cfg, const std::string& key) {
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception&) {
        throw InvalidArgument("config: '" + key + "' has the wrong type or is missing");
    }
}

inline void ensure_fresh(const io::fs::path& dir, bool force) {
    if (force || !io::fs::exists(dir)) return;
    if (io::fs::is_directory(dir) && io::fs::is_empty(dir)) return;
    throw ExistsError("output directory exists: " + dir.string() + " (use --force to overwrite)");
}

inline void echo_config(const Context& ctx, const io::fs::path& dir, const std::string& sub, const json& cfg) {
    json j;
    j["command"] = sub;
    j["campaign"] = ctx.campaign;
    j["config"] = cfg;
    io::write_text(dir / "config.json", j.dump(2) + "\n", true);
}

inline void put(const io::fs::path& dir, const std::string& name, const std::string& text, bool force,
                std::vector<std::string>& written) {
    io::write_text(dir / name, text, force);
    written.push_back((dir / name).string());
}

inline io::CsvTable load_csv(const io::fs::path& p) {
    if (!io::fs::exists(p)) throw NoInput("missing input: " + p.string());
    try {
        return io::parse_csv(io::read_text(p));
    } catch (const DataError& e) {
        throw DataError(p.string() + ": " + e.what());
    }
}

inline std::vector<std::string> text_column(const io::CsvTable& t, const std::string& name) {
    const int c = t.column(name);
    if (c < 0) throw DataError("missing column '" + name + "'");
    std::vector<std::string> out;
    for (const auto& r : t.rows) out.push_back(r.at(c));
    return out;
}

inline std::vector<double> numeric_column(const io::CsvTable& t, const std::string& name) {
    std::vector<double> out;
    for (const auto& s : text_column(t, name)) out.push_back(s == "nan" ? std::nan("") : parse_number(s));
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// resolvent

inline json resolvent_defaults() {
    const SweepPlan p;
    return {{"nu", p.nus},
            {"k", p.ks},
            {"lambda", json::array()},
            {"ineq", {"a", "b", "c", "la", "lb"}},
            {"n", p.n},
            {"bank_count", p.bank_count},
            {"refine_lambda", p.refine_lambda}};
}

inline std::vector<OptSpec> resolvent_options() {
    return {{"--nu", "nu", Kind::numbers, "viscosities"},
            {"--k", "k", Kind::integers, "wavenumbers"},
            {"--lambda", "lambda", Kind::numbers, "shifts (default: 41 points in [-0.25, 1.25])"},
            {"--ineq", "ineq", Kind::texts, "inequalities: " + valid_inequality_names()},
            {"--n", "n", Kind::integer, "Chebyshev points"},
            {"--bank-count", "bank_count", Kind::integer, "test profiles per bank"},
            {"--no-refine", "refine_lambda", Kind::flag, "skip golden-section refinement of the worst shift", false}};
}

inline int cmd_resolvent(const Context& ctx, const json& cfg) {
    SweepPlan plan;
    plan.nus = detail::get<std::vector<double>>(cfg, "nu");
    plan.ks = detail::get<std::vector<int>>(cfg, "k");
    plan.lambdas = detail::get<std::vector<double>>(cfg, "lambda");
    plan.n = detail::get<int>(cfg, "n");
    plan.bank_count = detail::get<int>(cfg, "bank_count");
    plan.refine_lambda = detail::get<bool>(cfg, "refine_lambda");
    plan.threads = ctx.threads;
    std::vector<InequalityId> ids;
    for (const auto& s : detail::get<std::vector<std::string>>(cfg, "ineq")) {
        const auto id = parse_inequality(s);
        if (!id) throw InvalidArgument("unknown inequality '" + s + "'; valid ids: " + valid_inequality_names());
        if (std::find(ids.begin(), ids.end(), *id) == ids.end()) ids.push_back(*id);
    }
    if (ids.empty()) throw InvalidArgument("no inequalities selected; valid ids: " + valid_inequality_names());
    if (plan.nus.empty() || plan.ks.empty()) throw InvalidArgument("resolvent: empty nu or k list");
    for (double nu : plan.nus)
        if (!(nu > 0.0)) throw InvalidArgument("resolvent: nu must be positive");
    for (int k : plan.ks)
        if (k == 0) throw InvalidArgument("resolvent: k must be nonzero");
    if (plan.n < 8) throw InvalidArgument("resolvent: n must be >= 8");
    if (plan.bank_count < 1) throw InvalidArgument("resolvent: bank_count must be >= 1");

    const auto dir = ctx.dir("resolvent");
    detail::ensure_fresh(dir, ctx.force);
    ctx.log.info("resolvent: " + std::to_string(plan.nus.size() * plan.ks.size() * plan.lambda_grid().size()) +
                 " sweep points x " + std::to_string(ids.size()) + " inequalities");
    const auto reports = sweep_and_fit(plan, ids);

    std::vector<std::string> written;
    int flagged = 0, total = 0;
    io::CsvWriter summary({"inequality_id", "bank", "worst_ratio", "fitted_exponent", "slope_ci95", "flagged", "total"});
    io::CsvWriter worst({"inequality_id", "bank", "nu", "k", "lambda", "ratio"});
    json js = json::array();
    std::vector<io::PlotSeries> series;
    for (InequalityId id : ids) {
        io::CsvWriter w({"inequality_id", "nu", "k", "lambda", "term_name", "ratio", "flagged"});
        for (const auto& rep : reports) {
            if (rep.id != id) continue;
            const std::string suffix = rep.bank == BankKind::general ? "@general" : "";
            for (const auto& s : rep.samples) {
                const auto base = std::vector<std::string>{to_string(id), io::num(s.nu), std::to_string(s.k), io::num(s.lambda)};
                auto row = [&](const std::string& term, double r) {
                    auto v = base;
                    v.insert(v.end(), {term + suffix, io::num(r), s.flagged ? "1" : "0"});
                    w.row(v);
                };
                if (s.flagged) {
                    row("combined", std::nan(""));
                    continue;
                }
                for (const auto& [name, r] : s.term_ratios) row(name, r);
                row("combined", s.combined_ratio);
            }
            flagged += rep.flagged_count;
            total += rep.total_count;
            summary.row(std::vector<std::string>{to_string(id), to_string(rep.bank), io::num(rep.worst_ratio), io::num(rep.fit.slope),
                                                 io::num(rep.fit.slope_ci95), std::to_string(rep.flagged_count),
                                                 std::to_string(rep.total_count)});
            io::PlotSeries ps{to_string(id) + suffix, {}, {}, rep.bank == BankKind::general, true};
            json wp = json::array();
            for (const auto& p : rep.worst_per_nu) {
                worst.row(std::vector<std::string>{to_string(id), to_string(rep.bank), io::num(p.nu), std::to_string(p.k),
                                                   io::num(p.lambda), io::num(p.ratio)});
                ps.x.push_back(p.nu);
                ps.y.push_back(p.ratio);
                wp.push_back({{"nu", p.nu}, {"k", p.k}, {"lambda", p.lambda}, {"ratio", p.ratio}});
            }
            series.push_back(ps);
            json terms = json::object();
            for (const auto& [name, f] : rep.term_fits) terms[name] = {{"fitted_exponent", f.slope}, {"slope_ci95", f.slope_ci95}};
            js.push_back({{"inequality_id", to_string(id)},
                          {"bank", to_string(rep.bank)},
                          {"worst_ratio", rep.worst_ratio},
                          {"fitted_exponent", std::isfinite(rep.fit.slope) ? json(rep.fit.slope) : json(nullptr)},
                          {"slope_ci95", std::isfinite(rep.fit.slope_ci95) ? json(rep.fit.slope_ci95) : json(nullptr)},
                          {"worst_per_nu", wp},
                          {"term_fits", terms},
                          {"flagged", rep.flagged_count},
                          {"total", rep.total_count}});
        }
        detail::put(dir, to_string(id) + ".csv", w.str(), ctx.force, written);
    }
    detail::put(dir, "summary.csv", summary.str(), ctx.force, written);
    detail::put(dir, "worst_per_nu.csv", worst.str(), ctx.force, written);
    detail::put(dir, "summary.json", json({{"reports", js}, {"flagged", flagged}, {"total", total}}).dump(2) + "\n", ctx.force,
                written);
    detail::put(dir, "worst_ratio.svg", io::svg_plot({"worst LHS/RHS ratio", "nu", "ratio", true, true}, series), ctx.force,
                written);
    detail::echo_config(ctx, dir, "resolvent", cfg);
    *ctx.out << "resolvent: " << reports.size() << " reports, flagged " << flagged << "/" << total << " -> " << dir.string()
             << "\n";
    if (total > 0 && flagged > 0.1 * total) {
        ctx.log.info("flagged samples exceed 10% of the sweep");
        return flagged_excess;
    }
    return ok;
}

// ---------------------------------------------------------------------------
// evolve

inline json evolve_defaults() {
    return {{"nu", {1e-2, 1e-3, 1e-4}}, {"k", {1}}, {"n", 128}, {"dt", 0.0}, {"T", 0.0}, {"c", 0.0},
            {"init", "bump"},         {"forcing", "none"}, {"gap", true}};
}

inline std::vector<OptSpec> evolve_options() {
    return {{"--nu", "nu", Kind::numbers, "viscosities"},
            {"--k", "k", Kind::integers, "wavenumbers"},
            {"--n", "n", Kind::integer, "Chebyshev points"},
            {"--dt", "dt", Kind::number, "time step (0: min(0.05, advective bound))"},
            {"--T", "T", Kind::number, "horizon (0: min(20 (nu|k|)^-1/2, 2000))"},
            {"--c", "c", Kind::number, "weight rate in exp(c nu^1/2 t)"},
            {"--init", "init", Kind::text, "initial vorticity: bump | layer"},
            {"--forcing", "forcing", Kind::text, "forcing slot: none | f1 | f2 | f3 | f4"},
            {"--no-gap", "gap", Kind::flag, "skip the pseudospectral gap", false}};
}

/// (1 - y^2)^2, or a layer of width max(0.05, (nu/|k|)^{1/3}) at y = 0.5.
inline ComplexProfile initial_profile(const ChebGrid& g, const std::string& init, double nu, int k) {
    ComplexProfile w(g.n);
    const double delta = std::max(0.05, std::cbrt(nu / std::abs(k)));
    for (int i = 0; i < g.n; ++i) {
        const double y = g.nodes(i), b = 1.0 - y * y;
        w(i) = init == "bump" ? b * b : b * std::exp(-std::pow((y - 0.5) / delta, 2));
    }
    w(0) = w(g.n - 1) = 0.0;
    return w;
}

inline ForcingSlots forcing_slots(const ChebGrid& g, const std::string& slot) {
    ComplexProfile q(g.n);
    for (int i = 0; i < g.n; ++i) q(i) = 1.0 - g.nodes(i) * g.nodes(i);
    const SlotFn f = [q](double t) { return ComplexProfile(std::exp(-t) * q); };
    ForcingSlots s;
    if (slot == "f1") s.f1 = f;
    else if (slot == "f2") s.f2 = f;
    else if (slot == "f3") s.f3 = f;
    else if (slot == "f4") s.f4 = f;
    return s;
}

inline int cmd_evolve(const Context& ctx, const json& cfg) {
    const auto nus = detail::get<std::vector<double>>(cfg, "nu");
    const auto ks = detail::get<std::vector<int>>(cfg, "k");
    const int n = detail::get<int>(cfg, "n");
    const double dt_in = detail::get<double>(cfg, "dt"), T_in = detail::get<double>(cfg, "T"), c = detail::get<double>(cfg, "c");
    const auto init = detail::get<std::string>(cfg, "init");
    const auto forcing = detail::get<std::string>(cfg, "forcing");
    const bool with_gap = detail::get<bool>(cfg, "gap");
    if (nus.empty() || ks.empty()) throw InvalidArgument("evolve: empty nu or k list");
    for (double nu : nus)
        if (!(nu > 0.0)) throw InvalidArgument("evolve: nu must be positive");
    for (int k : ks)
        if (k == 0) throw InvalidArgument("evolve: k must be nonzero");
    if (n < 8) throw InvalidArgument("evolve: n must be >= 8");
    if (!(dt_in >= 0.0) || !(T_in >= 0.0) || !(c >= 0.0)) throw InvalidArgument("evolve: dt, T and c must be >= 0");
    if (init != "bump" && init != "layer") throw InvalidArgument("evolve: init must be bump or layer");
    if (forcing != "none" && forcing != "f1" && forcing != "f2" && forcing != "f3" && forcing != "f4")
        throw InvalidArgument("evolve: forcing must be none, f1, f2, f3 or f4");

    const auto dir = ctx.dir("evolve");
    detail::ensure_fresh(dir, ctx.force);
    const GridPtr grid = make_grid(n);

    struct Job {
        double nu;
        int k;
    };
    std::vector<Job> jobs;
    for (double nu : nus)
        for (int k : ks) jobs.push_back({nu, k});
    struct Out {
        Trajectory traj;
        DecayFit decay;
        GapResult gap;
        SpaceTimeReport est;
        double T, dt;
    };
    std::vector<Out> outs(jobs.size());
    parallel_for(static_cast<int>(jobs.size()), ctx.threads, [&](int j) {
        const auto [nu, k] = jobs[j];
        const OperatorLk op = assemble(grid, nu, k);
        Out& o = outs[j];
        o.dt = dt_in > 0.0 ? dt_in : std::min(0.05, max_linear_dt(nu, k));
        o.T = T_in > 0.0 ? T_in : default_horizon(nu, k);
        const ComplexProfile w0 = initial_profile(*grid, init, nu, k);
        const ForcingSlots slots = forcing_slots(*grid, forcing);
        o.traj = evolve(op, w0, slots, o.T, o.dt, c).traj;
        o.decay = measure_decay_rate(o.traj);
        if (with_gap) o.gap = pseudospectral_gap(op);
        o.est = verify_prop41(op, w0, slots, o.T, o.dt, c);
    });

    std::vector<std::string> written;
    io::CsvWriter traj({"nu", "k", "t", "w_l2", "w_h1k", "u_l2"});
    io::CsvWriter decay({"nu", "k", "T", "dt", "gap", "gap_lambda", "decay_rate", "decay_low_confidence", "sqrt_nu_k"});
    io::CsvWriter est({"nu", "k", "c", "amp", "heat", "enh", "invd", "data", "f12", "f3", "f4", "combined_ratio", "weight_guard"});
    std::vector<io::PlotSeries> curves;
    for (size_t j = 0; j < jobs.size(); ++j) {
        const auto& [nu, k] = jobs[j];
        const Out& o = outs[j];
        const size_t stride = std::max<size_t>(1, o.traj.times.size() / 2000);
        io::PlotSeries ps{"nu=" + io::num(nu) + " k=" + std::to_string(k), {}, {}, false, false};
        for (size_t i = 0; i < o.traj.times.size(); i += stride) {
            const auto& m = o.traj.norms[i];
            traj.row({nu, double(k), o.traj.times[i], m.w_l2, m.w_h1k, m.u_l2});
            ps.x.push_back(o.traj.times[i]);
            ps.y.push_back(m.w_l2);
        }
        curves.push_back(ps);
        decay.row({nu, double(k), o.T, o.dt, with_gap ? o.gap.gap : std::nan(""), with_gap ? o.gap.lambda : std::nan(""),
                   o.decay.rate, o.decay.low_confidence ? 1.0 : 0.0, std::sqrt(nu * std::abs(k))});
        const auto& e = o.est;
        est.row({nu, double(k), c, e.term_ratios.at("amp"), e.term_ratios.at("heat"), e.term_ratios.at("enh"),
                 e.term_ratios.at("invd"), e.rhs.at("data"), e.rhs.at("f12"), e.rhs.at("f3"), e.rhs.at("f4"), e.combined_ratio,
                 e.weight_guard ? 1.0 : 0.0});
    }
    detail::put(dir, "trajectories.csv", traj.str(), ctx.force, written);
    detail::put(dir, "decay.csv", decay.str(), ctx.force, written);
    detail::put(dir, "estimates.csv", est.str(), ctx.force, written);
    detail::put(dir, "decay.svg", io::svg_plot({"homogeneous decay", "t", "||w||_L2", false, true}, curves), ctx.force, written);
    detail::echo_config(ctx, dir, "evolve", cfg);
    *ctx.out << "evolve: " << jobs.size() << " runs -> " << dir.string() << "\n";
    return ok;
}

// ---------------------------------------------------------------------------
// simulate

inline json simulate_defaults() { return to_json(SimConfig{}); }

inline std::vector<OptSpec> sim_options(const std::string& prefix) {
    return {{"--nu", prefix + "nu", Kind::number, "viscosity"},
            {"--amp", prefix + "amplitude", Kind::number, "initial amplitude (Sobolev proxy)"},
            {"--T", prefix + "T", Kind::number, "horizon"},
            {"--K", prefix + "K", Kind::integer, "largest x-wavenumber"},
            {"--n", prefix + "n", Kind::integer, "Chebyshev points"},
            {"--dt", prefix + "dt", Kind::number, "time step"},
            {"--c", prefix + "c", Kind::number, "weight rate"},
            {"--family", prefix + "family", Kind::text, "random_sobolev | critical_layer | optimal_linear"},
            {"--sobolev-s", prefix + "sobolev_s", Kind::number, "Sobolev index of the amplitude proxy"},
            {"--no-dealias", prefix + "dealias", Kind::flag, "product grid 2K+1 instead of 3K+1", false},
            {"--linear", prefix + "nonlinear", Kind::flag, "drop the nonlinear term", false},
            {"--direct", prefix + "direct_convolution", Kind::flag, "direct convolution instead of FFT"},
            {"--record-every", prefix + "record_every", Kind::integer, "series stride in steps (0: about 1000 rows)"},
            {"--snapshot-every", prefix + "snapshot_every", Kind::integer, "snapshot stride in steps (0: first and last)"}};
}

inline std::vector<OptSpec> simulate_options() { return sim_options(""); }

inline std::string energy_stack_svg(const RunRecord& r) {
    std::vector<io::PlotSeries> s;
    for (const char* part : {"amp", "heat", "enh", "invd", "E"}) {
        io::PlotSeries ps{part, {}, {}, std::string(part) != "E", true};
        for (size_t k = 1; k < r.energy.modes.size(); ++k) {
            const auto& p = r.energy.modes[k];
            const std::string n = part;
            ps.x.push_back(double(k));
            ps.y.push_back(n == "amp" ? p.amp : n == "heat" ? p.heat : n == "enh" ? p.enh : n == "invd" ? p.invd : p.E);
        }
        s.push_back(ps);
    }
    return io::svg_plot({"energy functional per mode", "k", "E_k", true, true}, s);
}

inline int cmd_simulate(const Context& ctx, const json& cfg) {
    const SimConfig c = sim_config_from_json(cfg);
    Simulator check(c);  // validation before any output or compute
    const auto dir = ctx.dir("simulate");
    detail::ensure_fresh(dir, ctx.force);
    ctx.log.info("simulate: nu=" + io::num(c.nu) + " A=" + io::num(c.amplitude) + " T=" + io::num(c.T));
    const RunRecord r = simulate(c);
    const Outcome o = classify_outcome(r);
    std::vector<std::string> written = write_run(r, dir, ctx.force);
    io::PlotSeries e{"sum_k ||w_k||^2", {}, {}, false, false};
    for (const auto& row : r.series) e.x.push_back(row.t), e.y.push_back(row.energy);
    detail::put(dir, "energy.svg", io::svg_plot({"nonzero-mode energy", "t", "energy", false, true}, {e}), ctx.force, written);
    detail::put(dir, "energy_stack.svg", energy_stack_svg(r), ctx.force, written);
    detail::echo_config(ctx, dir, "simulate", cfg);
    *ctx.out << "simulate: " << to_string(o) << " (final/initial "
             << io::num(r.initial_energy > 0 ? r.final_energy / r.initial_energy : 0.0) << ") -> " << dir.string() << "\n";
    return ok;
}

// ---------------------------------------------------------------------------
// scan

inline json scan_defaults() {
    const ScanPlan p;
    json sim = to_json(SimConfig{});
    for (const char* k : {"nu", "amplitude", "seed"}) sim.erase(k);
    return {{"nu", {1e-2, 5e-3, 2e-3, 1e-3}},
            {"eps", {1e-3, 10.0}},
            {"g", p.g_grid},
            {"amplitudes", json::array()},
            {"mode", "bisect"},
            {"tol", p.tol},
            {"max_runs", p.max_runs_per_nu},
            {"seeds", p.seeds},
            {"detector", "simulate"},
            {"synthetic_gamma", 2.0 / 3.0},
            {"synthetic_scale", 1.0},
            {"artifacts", true},
            {"sim", sim}};
}

inline std::vector<OptSpec> scan_options() {
    std::vector<OptSpec> o{{"--nu", "nu", Kind::numbers, "viscosities"},
                           {"--eps", "eps", Kind::numbers, "amplitude prefactors: A = eps nu^g"},
                           {"--g", "g", Kind::numbers, "amplitude exponents"},
                           {"--amps", "amplitudes", Kind::numbers, "absolute amplitudes (used when eps is empty)"},
                           {"--mode", "mode", Kind::text, "bisect | grid"},
                           {"--tol", "tol", Kind::number, "relative bisection tolerance on A"},
                           {"--max-runs", "max_runs", Kind::integer, "amplitude probes per nu"},
                           {"--seeds", "seeds", Kind::integers, "seeds per amplitude (worst outcome wins)"},
                           {"--detector", "detector", Kind::text, "simulate | synthetic"},
                           {"--synthetic-gamma", "synthetic_gamma", Kind::number, "synthetic detector: Stable iff A <= scale nu^gamma"},
                           {"--synthetic-scale", "synthetic_scale", Kind::number, "synthetic detector scale"},
                           {"--no-artifacts", "artifacts", Kind::flag, "skip per-run artifacts", false}};
    for (auto& s : sim_options("sim."))
        if (s.key != "sim.nu" && s.key != "sim.amplitude") o.push_back(s);
    return o;
}

inline ScanPlan scan_plan(const Context& ctx, const json& cfg) {
    ScanPlan p;
    p.campaign = ctx.campaign;
    p.nu_list = detail::get<std::vector<double>>(cfg, "nu");
    p.eps_grid = detail::get<std::vector<double>>(cfg, "eps");
    p.g_grid = detail::get<std::vector<double>>(cfg, "g");
    p.amplitudes = detail::get<std::vector<double>>(cfg, "amplitudes");
    const auto mode = detail::get<std::string>(cfg, "mode");
    if (mode != "bisect" && mode != "grid") throw InvalidArgument("scan: mode must be bisect or grid");
    p.mode = mode == "bisect" ? ScanMode::bisect : ScanMode::grid;
    p.tol = detail::get<double>(cfg, "tol");
    p.max_runs_per_nu = detail::get<int>(cfg, "max_runs");
    p.seeds = detail::get<std::vector<std::uint64_t>>(cfg, "seeds");
    p.detector_id = detail::get<std::string>(cfg, "detector");
    if (p.detector_id == "synthetic")
        p.detector_id += ":" + io::num(detail::get<double>(cfg, "synthetic_gamma")) + ":" + io::num(detail::get<double>(cfg, "synthetic_scale"));
    else if (p.detector_id != "simulate")
        throw InvalidArgument("scan: detector must be simulate or synthetic");
    p.base = sim_config_from_json(cfg.at("sim"));
    p.workers = ctx.threads;
    validate(p);
    return p;
}

inline int cmd_scan(const Context& ctx, const json& cfg) {
    const ScanPlan plan = scan_plan(ctx, cfg);
    const auto dir = ctx.dir("scan");
    if (!ctx.resume) detail::ensure_fresh(dir, ctx.force);
    Detector det;
    if (plan.detector_id == "simulate") {
        SimConfig probe = plan.base;
        probe.nu = plan.nu_list.front();
        Simulator check(probe);
        det = simulation_detector(plan.base, dir, detail::get<bool>(cfg, "artifacts"));
    } else {
        det = synthetic_detector(detail::get<double>(cfg, "synthetic_gamma"), detail::get<double>(cfg, "synthetic_scale"));
    }
    ctx.log.info("scan: " + std::to_string(plan.nu_list.size()) + " viscosities, " + std::to_string(plan.workers) + " workers");
    const CampaignReport rep = run_campaign(plan, det, dir, {ctx.resume, ctx.force});
    write_campaign_report(rep, dir, ctx.force || ctx.resume);
    detail::echo_config(ctx, dir, "scan", cfg);
    *ctx.out << "scan: " << rep.new_runs << " new runs, " << rep.reused_runs << " reused";
    if (rep.fit) *ctx.out << ", gamma_hat " << io::num(rep.fit->gamma_hat);
    else *ctx.out << ", no fit (" << rep.fit_error << ")";
    *ctx.out << " -> " << dir.string() << "\n";
    return ok;
}

// ---------------------------------------------------------------------------
// fit

inline json fit_defaults() { return {{"input", ""}}; }

inline std::vector<OptSpec> fit_options() {
    return {{"--input", "input", Kind::text, "thresholds CSV with columns nu, a_star[, bound] (default: <campaign>/scan/thresholds.csv)"}};
}

inline std::vector<ThresholdPair> read_thresholds(const io::fs::path& p) {
    const auto t = detail::load_csv(p);
    try {
        const auto nu = detail::numeric_column(t, "nu");
        const auto a = detail::numeric_column(t, "a_star");
        std::vector<std::string> bounds(nu.size(), "exact");
        if (std::find(t.header.begin(), t.header.end(), "bound") != t.header.end()) bounds = detail::text_column(t, "bound");
        std::vector<ThresholdPair> out;
        for (size_t i = 0; i < nu.size(); ++i) {
            Bound b;
            if (bounds[i] == "exact") b = Bound::exact;
            else if (bounds[i] == "lower") b = Bound::lower;
            else if (bounds[i] == "upper") b = Bound::upper;
            else throw DataError("row " + std::to_string(i + 1) + ": unknown bound '" + bounds[i] + "'");
            out.push_back({nu[i], a[i], b});
        }
        return out;
    } catch (const InvalidArgument& e) {
        throw DataError(p.string() + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(p.string() + ": " + e.what());
    }
}

inline int cmd_fit(const Context& ctx, const json& cfg) {
    auto input = detail::get<std::string>(cfg, "input");
    const io::fs::path in = input.empty() ? ctx.dir("scan") / "thresholds.csv" : io::fs::path(input);
    const auto pairs = read_thresholds(in);
    ThresholdFit f;
    try {
        f = fit_gamma(pairs);
    } catch (const InvalidArgument& e) {
        throw DataError(in.string() + ": " + e.what());
    }
    const auto dir = ctx.dir("fit");
    detail::ensure_fresh(dir, ctx.force);
    CampaignReport rep;
    rep.campaign = ctx.campaign;
    for (const auto& p : pairs) {
        ThresholdResult t;
        t.nu = p.nu;
        t.a_star = p.a_star;
        t.bound = p.bound;
        rep.thresholds.push_back(t);
    }
    rep.fit = f;
    std::vector<std::string> written;
    json j = to_json(f);
    j["input"] = in.string();
    j["pairs"] = pairs.size();
    detail::put(dir, "fit.json", j.dump(2) + "\n", ctx.force, written);
    const auto [csv, svg] = threshold_plot(rep);
    detail::put(dir, "threshold_plot.csv", csv, ctx.force, written);
    detail::put(dir, "threshold_plot.svg", svg, ctx.force, written);
    detail::echo_config(ctx, dir, "fit", cfg);
    *ctx.out << "fit: gamma_hat " << io::num(f.gamma_hat) << " over " << pairs.size() - f.excluded.size() << " pairs -> "
             << dir.string() << "\n";
    return ok;
}

// ---------------------------------------------------------------------------
// report

inline json report_defaults() { return {{"input", ""}}; }

inline std::vector<OptSpec> report_options() {
    return {{"--input", "input", Kind::text, "campaign directory to aggregate (default: <out>/<campaign>)"}};
}

inline const std::vector<std::string>& report_inputs() {
    static const std::vector<std::string> files{"resolvent/summary.csv", "resolvent/worst_per_nu.csv", "evolve/decay.csv",
                                                "evolve/trajectories.csv", "simulate/summary.json", "simulate/series.csv",
                                                "simulate/energy.csv",     "scan/thresholds.csv"};
    return files;
}

namespace detail {

inline std::string md_table(const io::CsvTable& t) {
    std::string s = "|";
    for (const auto& h : t.header) s += " " + h + " |";
    s += "\n|";
    for (size_t i = 0; i < t.header.size(); ++i) s += " --- |";
    s += "\n";
    for (const auto& r : t.rows) {
        s += "|";
        for (const auto& c : r) s += " " + c + " |";
        s += "\n";
    }
    return s;
}

/// Group rows by the values of `keys`, keeping first-seen order.
inline std::vector<std::pair<std::string, std::vector<size_t>>> group_rows(const io::CsvTable& t, const std::vector<std::string>& keys) {
    std::vector<std::vector<std::string>> cols;
    for (const auto& k : keys) cols.push_back(text_column(t, k));
    std::vector<std::pair<std::string, std::vector<size_t>>> out;
    std::map<std::string, size_t> where;
    for (size_t i = 0; i < t.rows.size(); ++i) {
        std::string label;
        for (size_t c = 0; c < keys.size(); ++c) label += (c ? " " : "") + keys[c] + "=" + cols[c][i];
        auto it = where.find(label);
        if (it == where.end()) {
            where[label] = out.size();
            out.push_back({label, {}});
            it = where.find(label);
        }
        out[it->second].second.push_back(i);
    }
    return out;
}

}  // namespace detail

inline int cmd_report(const Context& ctx, const json& cfg) {
    const auto input = detail::get<std::string>(cfg, "input");
    const io::fs::path in = input.empty() ? ctx.out_root / ctx.campaign : io::fs::path(input);
    std::vector<std::string> present, absent;
    for (const auto& f : report_inputs()) (io::fs::exists(in / f) ? present : absent).push_back(f);
    if (present.empty()) {
        std::string m = "report: no inputs under " + in.string() + "; absent:";
        for (const auto& f : absent) m += " " + f;
        throw NoInput(m);
    }
    for (const auto& f : absent) ctx.log.info("report: absent " + (in / f).string());
    const auto dir = ctx.dir("report");
    detail::ensure_fresh(dir, ctx.force);
    auto has = [&](const std::string& f) { return std::find(present.begin(), present.end(), f) != present.end(); };
    std::vector<std::string> written;
    std::string md = "# channel-stab report: " + ctx.campaign + "\n\n";

    if (has("resolvent/summary.csv")) md += "## Resolvent inequalities\n\n" + detail::md_table(detail::load_csv(in / "resolvent/summary.csv")) + "\n";
    if (has("resolvent/worst_per_nu.csv")) {
        const auto t = detail::load_csv(in / "resolvent/worst_per_nu.csv");
        const auto nu = detail::numeric_column(t, "nu"), r = detail::numeric_column(t, "ratio");
        std::vector<io::PlotSeries> s;
        for (const auto& [label, rows] : detail::group_rows(t, {"inequality_id", "bank"})) {
            io::PlotSeries ps{label, {}, {}, false, true};
            for (size_t i : rows) ps.x.push_back(nu[i]), ps.y.push_back(r[i]);
            s.push_back(ps);
        }
        detail::put(dir, "resolvent_worst.svg", io::svg_plot({"worst LHS/RHS ratio", "nu", "ratio", true, true}, s), ctx.force, written);
        md += "![resolvent](resolvent_worst.svg)\n\n";
    }
    if (has("evolve/decay.csv")) {
        const auto t = detail::load_csv(in / "evolve/decay.csv");
        md += "## Linear decay and pseudospectral gap\n\n" + detail::md_table(t) + "\n";
        const auto nu = detail::numeric_column(t, "nu"), gap = detail::numeric_column(t, "gap"),
                   rate = detail::numeric_column(t, "decay_rate"), ref = detail::numeric_column(t, "sqrt_nu_k");
        std::vector<io::PlotSeries> s;
        for (const auto& [label, rows] : detail::group_rows(t, {"k"})) {
            io::PlotSeries g{"gap " + label, {}, {}, false, true}, d{"decay rate " + label, {}, {}, false, true},
                r{"(nu|k|)^1/2 " + label, {}, {}, true, false};
            for (size_t i : rows) {
                g.x.push_back(nu[i]), g.y.push_back(gap[i]);
                d.x.push_back(nu[i]), d.y.push_back(rate[i]);
                r.x.push_back(nu[i]), r.y.push_back(ref[i]);
            }
            s.insert(s.end(), {g, d, r});
        }
        detail::put(dir, "gap_scaling.svg", io::svg_plot({"gap scaling", "nu", "rate", true, true}, s), ctx.force, written);
        md += "![gap scaling](gap_scaling.svg)\n\n";
    }
    if (has("evolve/trajectories.csv")) {
        const auto t = detail::load_csv(in / "evolve/trajectories.csv");
        const auto tt = detail::numeric_column(t, "t"), w = detail::numeric_column(t, "w_l2");
        std::vector<io::PlotSeries> s;
        for (const auto& [label, rows] : detail::group_rows(t, {"nu", "k"})) {
            io::PlotSeries ps{label, {}, {}, false, false};
            for (size_t i : rows) ps.x.push_back(tt[i]), ps.y.push_back(w[i]);
            s.push_back(ps);
        }
        detail::put(dir, "decay_curves.svg", io::svg_plot({"homogeneous decay", "t", "||w||_L2", false, true}, s), ctx.force, written);
        md += "![decay curves](decay_curves.svg)\n\n";
    }
    if (has("simulate/summary.json")) {
        json j;
        try {
            j = json::parse(io::read_text(in / "simulate/summary.json"));
            md += "## Nonlinear run\n\n| outcome | nu | amplitude | T | initial_energy | final_energy | bootstrap max ratio |\n"
                  "| --- | --- | --- | --- | --- | --- | --- |\n";
            md += "| " + j.at("outcome").get<std::string>() + " | " + io::num(j.at("config").at("nu").get<double>()) + " | " +
                  io::num(j.at("config").at("amplitude").get<double>()) + " | " + io::num(j.at("config").at("T").get<double>()) +
                  " | " + io::num(j.at("initial_energy").get<double>()) + " | " +
                  (j.at("final_energy").is_null() ? std::string("nan") : io::num(j.at("final_energy").get<double>())) + " | " +
                  io::num(j.at("bootstrap").at("max_ratio").get<double>()) + " |\n\n";
        } catch (const json::exception& e) {
            throw DataError((in / "simulate/summary.json").string() + ": " + e.what());
        }
    }
    if (has("simulate/series.csv")) {
        const auto t = detail::load_csv(in / "simulate/series.csv");
        io::PlotSeries e{"sum_k ||w_k||^2", detail::numeric_column(t, "t"), detail::numeric_column(t, "energy_nonzero"), false, false};
        detail::put(dir, "energy_series.svg", io::svg_plot({"nonzero-mode energy", "t", "energy", false, true}, {e}), ctx.force, written);
        md += "![energy](energy_series.svg)\n\n";
    }
    if (has("simulate/energy.csv")) {
        const auto t = detail::load_csv(in / "simulate/energy.csv");
        const auto k = detail::numeric_column(t, "k");
        std::vector<io::PlotSeries> s;
        for (const char* part : {"amp", "heat", "enh", "invd", "E"}) {
            const auto v = detail::numeric_column(t, part);
            io::PlotSeries ps{part, {}, {}, std::string(part) != "E", true};
            for (size_t i = 0; i < k.size(); ++i)
                if (k[i] > 0) ps.x.push_back(k[i]), ps.y.push_back(v[i]);
            s.push_back(ps);
        }
        detail::put(dir, "energy_stack.svg", io::svg_plot({"energy functional per mode", "k", "E_k", true, true}, s), ctx.force, written);
        md += "![E_k stack](energy_stack.svg)\n\n";
    }
    if (has("scan/thresholds.csv")) {
        const auto t = detail::load_csv(in / "scan/thresholds.csv");
        md += "## Threshold scan\n\n" + detail::md_table(t) + "\n";
        CampaignReport rep;
        for (const auto& p : read_thresholds(in / "scan/thresholds.csv")) {
            ThresholdResult r;
            r.nu = p.nu;
            r.a_star = p.a_star;
            r.bound = p.bound;
            rep.thresholds.push_back(r);
        }
        std::vector<ThresholdPair> pairs;
        for (const auto& r : rep.thresholds) pairs.push_back({r.nu, r.a_star, r.bound});
        try {
            rep.fit = fit_gamma(pairs);
            md += "gamma_hat = " + io::num(rep.fit->gamma_hat) + " (pairwise slopes " + io::num(rep.fit->slope_min) + " to " +
                  io::num(rep.fit->slope_max) + ")\n\n";
        } catch (const InvalidArgument& e) {
            md += std::string("no fit: ") + e.what() + "\n\n";
        }
        detail::put(dir, "threshold.svg", threshold_plot(rep).second, ctx.force, written);
        md += "![threshold](threshold.svg)\n\n";
    }
    if (!absent.empty()) {
        md += "## Absent inputs\n\n";
        for (const auto& f : absent) md += "- " + f + "\n";
    }
    detail::put(dir, "summary.md", md, ctx.force, written);
    detail::echo_config(ctx, dir, "report", cfg);
    *ctx.out << "report: " << present.size() << " inputs, " << absent.size() << " absent -> " << dir.string() << "\n";
    return ok;
}

// ---------------------------------------------------------------------------
// driver

struct Command {
    std::string name, help;
    json (*defaults)();
    std::vector<OptSpec> (*options)();
    int (*run)(const Context&, const json&);
    std::vector<std::string> open;  // config paths accepting any key (validated downstream)
};

inline const std::vector<Command>& commands() {
    static const std::vector<Command> c{
        {"resolvent", "sweep the resolvent inequalities and fit worst ratios against nu", resolvent_defaults, resolvent_options,
         cmd_resolvent, {}},
        {"evolve", "linear evolution per mode: decay, gap and space-time estimates", evolve_defaults, evolve_options, cmd_evolve, {}},
        {"simulate", "one nonlinear run with energy and bootstrap diagnostics", simulate_defaults, simulate_options, cmd_simulate,
         {}},
        {"scan", "threshold campaign over nu (resumable)", scan_defaults, scan_options, cmd_scan, {}},
        {"fit", "fit A*(nu) ~ nu^gamma from a thresholds CSV", fit_defaults, fit_options, cmd_fit, {}},
        {"report", "aggregate a campaign directory into markdown and SVG", report_defaults, report_options, cmd_report, {}}};
    return c;
}

/// Run the tool; argv[0] is the program name. Output and diagnostics go to `out` and `err`.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"channel-stab: stability toolkit for plane Poiseuille flow", "channel-stab"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string out_root = "out", campaign = "default", log_level = "info", config_path;
    int threads = default_threads();
    std::uint64_t seed = 0;
    bool force = false, resume = false;
    app.add_option("--out", out_root, "output root directory");
    auto* camp_opt = app.add_option("--campaign", campaign, "campaign id (output subdirectory)");
    app.add_option("--log-level", log_level, "quiet | info | debug")->check(CLI::IsMember({"quiet", "info", "debug"}));
    app.add_option("--threads", threads, "worker threads (default: CHANNEL_STAB_THREADS or hardware)")->check(CLI::PositiveNumber);
    auto* seed_opt = app.add_option("--seed", seed, "seed for simulate, or the single seed of a scan");
    app.add_option("--config", config_path, "JSON config file (flags override its values)");
    app.add_flag("--force", force, "overwrite existing outputs");

    std::map<std::string, std::vector<std::string>> raw;
    std::map<std::string, bool> flags;
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    for (const auto& c : commands()) {
        auto* sub = app.add_subcommand(c.name, c.help);
        for (const auto& o : c.options()) {
            const std::string id = c.name + o.flag;
            if (o.kind == Kind::flag)
                sub->add_flag(o.flag, flags[id], o.help);
            else {
                auto* opt = sub->add_option(o.flag, raw[id], o.help);
                if (o.kind == Kind::numbers || o.kind == Kind::integers || o.kind == Kind::texts) opt->delimiter(',');
                else opt->expected(1);
            }
        }
        if (c.name == "scan") sub->add_flag("--resume", resume, "continue from the checkpoint");
        subs.emplace_back(sub, &c);
    }

    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : usage;
    }

    const Command* cmd = nullptr;
    CLI::App* sub = nullptr;
    for (auto& [s, c] : subs)
        if (s->parsed()) sub = s, cmd = c;

    Context ctx;
    ctx.out_root = out_root;
    ctx.threads = threads;
    ctx.force = force;
    ctx.resume = resume;
    ctx.log.level = log_level == "quiet" ? 0 : log_level == "debug" ? 2 : 1;
    ctx.log.err = &err;
    ctx.out = &out;
    try {
        json cfg = cmd->defaults();
        if (!config_path.empty()) {
            if (!io::fs::exists(config_path)) throw NoInput("missing config file: " + config_path);
            json file;
            try {
                file = json::parse(io::read_text(config_path));
            } catch (const json::exception& e) {
                throw InvalidArgument("config " + config_path + ": " + e.what());
            }
            // accept an echoed config.json as well as a bare object
            if (file.is_object() && file.contains("command") && file.contains("config")) {
                if (file["command"] != cmd->name)
                    throw InvalidArgument("config " + config_path + " is for '" + file["command"].dump() + "', not '" + cmd->name + "'");
                if (camp_opt->count() == 0 && file.contains("campaign")) campaign = file["campaign"].get<std::string>();
                file = file["config"];
            }
            detail::overlay(cfg, file, "", cmd->open);
        }
        for (const auto& o : cmd->options()) {
            const std::string id = cmd->name + o.flag;
            if (sub->count(o.flag) == 0) continue;
            const json v = o.kind == Kind::flag ? detail::convert(o, {}) : detail::convert(o, raw[id]);
            *detail::find_path(cfg, o.key, true) = v;
        }
        if (seed_opt->count() > 0) {
            if (cfg.contains("seed")) cfg["seed"] = seed;
            else if (cfg.contains("seeds")) cfg["seeds"] = {seed};
            else ctx.log.info("--seed has no effect on " + cmd->name);
        }
        if (campaign.empty() || campaign.find_first_of("/\\") != std::string::npos || campaign == "." || campaign == "..")
            throw InvalidArgument("campaign id must be a plain name");
        ctx.campaign = campaign;
        ctx.log.debug("effective config: " + cfg.dump());
        return cmd->run(ctx, cfg);
    } catch (const InvalidArgument& e) {
        err << "usage error: " << e.what() << "\n";
        return usage;
    } catch (const NoInput& e) {
        err << "error: " << e.what() << "\n";
        return no_input;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return data_error;
    } catch (const ExistsError& e) {
        err << "error: " << e.what() << "\n";
        return cant_create;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return failure;
    }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace channel_stab::cli
