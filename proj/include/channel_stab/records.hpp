#pragma once

// JSON mirrors of the run configuration and the on-disk run record (CSV series, CSTB snapshots,
// summary JSON) shared by the campaign runner and the command line tool.

#include "json.hpp"

#include "channel_stab/nonlinear_sim.hpp"

namespace channel_stab {

using json = nlohmann::ordered_json;

inline json to_json(const SimConfig& c) {
    json j;
    j["nu"] = c.nu;
    j["K"] = c.K;
    j["n"] = c.n;
    j["dt"] = c.dt;
    j["T"] = c.T;
    j["c"] = c.c;
    j["dealias"] = c.dealias;
    j["seed"] = c.seed;
    j["family"] = to_string(c.family);
    j["amplitude"] = c.amplitude;
    j["sobolev_s"] = c.sobolev_s;
    j["nonlinear"] = c.nonlinear;
    j["toggles"] = {{"diffusion", c.toggles.diffusion}, {"transport", c.toggles.transport}, {"nonlocal", c.toggles.nonlocal}};
    j["direct_convolution"] = c.direct_convolution;
    j["record_every"] = c.record_every;
    j["snapshot_every"] = c.snapshot_every;
    return j;
}

/// Fields present in `j` override `base`; unknown keys and wrong types are InvalidArgument.
inline SimConfig sim_config_from_json(const json& j, SimConfig base = {}) {
    if (!j.is_object()) throw InvalidArgument("config: expected a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "nu") base.nu = v.get<double>();
            else if (key == "K") base.K = v.get<int>();
            else if (key == "n") base.n = v.get<int>();
            else if (key == "dt") base.dt = v.get<double>();
            else if (key == "T") base.T = v.get<double>();
            else if (key == "c") base.c = v.get<double>();
            else if (key == "dealias") base.dealias = v.get<bool>();
            else if (key == "seed") base.seed = v.get<std::uint64_t>();
            else if (key == "family") {
                const auto f = parse_init_family(v.get<std::string>());
                if (!f) throw InvalidArgument("config: unknown family '" + v.get<std::string>() +
                                              "' (random_sobolev, critical_layer, optimal_linear)");
                base.family = *f;
            } else if (key == "amplitude") base.amplitude = v.get<double>();
            else if (key == "sobolev_s") base.sobolev_s = v.get<double>();
            else if (key == "nonlinear") base.nonlinear = v.get<bool>();
            else if (key == "toggles") {
                for (const auto& [tk, tv] : v.items()) {
                    if (tk == "diffusion") base.toggles.diffusion = tv.get<bool>();
                    else if (tk == "transport") base.toggles.transport = tv.get<bool>();
                    else if (tk == "nonlocal") base.toggles.nonlocal = tv.get<bool>();
                    else throw InvalidArgument("config: unknown toggle '" + tk + "'");
                }
            } else if (key == "direct_convolution") base.direct_convolution = v.get<bool>();
            else if (key == "record_every") base.record_every = v.get<int>();
            else if (key == "snapshot_every") base.snapshot_every = v.get<int>();
            else throw InvalidArgument("config: unknown key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    return base;
}

/// 64-bit FNV-1a of a string, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Time series: t, sum_{k!=0} ||w_k||^2, E_k parts for k <= 8, sobolev_proxy.
inline std::string series_csv(const RunRecord& r) {
    std::vector<std::string> header{"t", "energy_nonzero"};
    const int kmax = std::min(r.config.K, 8);
    for (int k = 1; k <= kmax; ++k)
        for (const char* p : {"amp", "heat", "enh", "invd", "E"}) header.push_back(std::string(p) + "_k" + std::to_string(k));
    header.push_back("sobolev_proxy");
    io::CsvWriter w(header);
    for (const auto& row : r.series) {
        std::vector<double> v{row.t, row.energy};
        for (const auto& p : row.parts) v.insert(v.end(), {p.amp, p.heat, p.enh, p.invd, p.E});
        v.push_back(row.proxy);
        w.row(v);
    }
    return w.str();
}

/// Per-mode energy breakdown at the end of the run.
inline std::string energy_csv(const RunRecord& r) {
    io::CsvWriter w({"k", "amp", "heat", "enh", "invd", "E", "delta_w0", "f1_l2l2", "f2_l2l2"});
    for (size_t k = 0; k < r.energy.modes.size(); ++k) {
        const auto& p = r.energy.modes[k];
        w.row({double(k), p.amp, p.heat, p.enh, p.invd, p.E, r.delta_w0[k], r.f1_l2_l2[k], r.f2_l2_l2[k]});
    }
    return w.str();
}

inline io::CstbFile snapshots_cstb(const RunRecord& r) {
    io::CstbFile f;
    f.n = r.config.n;
    f.nu = r.config.nu;
    for (int k = 0; k <= r.config.K; ++k) f.ks.push_back(k);
    f.records = r.snapshots;
    return f;
}

inline json summary_json(const RunRecord& r, const BootstrapReport& b) {
    json j;
    j["config"] = to_json(r.config);
    j["outcome"] = to_string(classify_outcome(r));
    j["product_grid"] = r.product_grid;
    j["initial_energy"] = r.initial_energy;
    j["final_energy"] = std::isfinite(r.final_energy) ? json(r.final_energy) : json(nullptr);
    j["sup_energy"] = r.sup_energy;
    j["sup_time"] = r.sup_time;
    j["end_time"] = r.end_time;
    j["initial_proxy"] = r.initial_proxy;
    j["diverged"] = r.diverged;
    if (r.diverged) j["divergence_reason"] = r.divergence_reason;
    j["energy_total"] = r.energy.total;
    j["E0"] = r.energy.modes.empty() ? 0.0 : r.energy.modes[0].E;
    j["bootstrap"] = {{"max_ratio", b.max_ratio},
                      {"max_ratio_intermediate", b.max_ratio_intermediate},
                      {"threshold", b.threshold},
                      {"satisfied", b.satisfied},
                      {"arithmetic", {{"cases", b.arithmetic.cases}, {"failures", b.arithmetic.failures}, {"ties", b.arithmetic.ties}}}};
    return j;
}

/// Write series.csv, energy.csv, snapshots.cstb and summary.json into `dir`. Returns the paths.
inline std::vector<std::string> write_run(const RunRecord& r, const io::fs::path& dir, bool force) {
    const auto b = verify_bootstrap(r);
    std::vector<std::string> paths;
    auto put = [&](const std::string& name, const std::string& text) {
        io::write_text(dir / name, text, force);
        paths.push_back((dir / name).string());
    };
    put("series.csv", series_csv(r));
    put("energy.csv", energy_csv(r));
    put("snapshots.cstb", io::encode_cstb(snapshots_cstb(r)));
    put("summary.json", summary_json(r, b).dump(2) + "\n");
    return paths;
}

}  // namespace channel_stab
