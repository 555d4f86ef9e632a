#pragma once

// Threshold campaigns: bisection of the stable/transitioned boundary in log-amplitude per nu,
// the fitted exponent gamma of A*(nu) ~ nu^gamma, and an append-only NDJSON checkpoint log
// that makes campaigns resumable.

#include <atomic>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "channel_stab/fit.hpp"
#include "channel_stab/records.hpp"

namespace channel_stab {

// ---------------------------------------------------------------------------
// Threshold fit

enum class Bound { exact, lower, upper };  // lower: A* >= cap (never transitioned); upper: A* < floor

inline std::string to_string(Bound b) {
    switch (b) {
        case Bound::exact: return "exact";
        case Bound::lower: return "lower";
        case Bound::upper: return "upper";
    }
    return "?";
}

struct ThresholdPair {
    double nu = 0.0;
    double a_star = 0.0;
    Bound bound = Bound::exact;
};

struct ThresholdFit {
    std::vector<ThresholdPair> pairs;     // everything passed in
    std::vector<ThresholdPair> excluded;  // one-sided pairs, listed but not fitted
    double gamma_hat = 0.0;
    double intercept = 0.0;  // log of the empirical eps_1
    double residual = 0.0;   // rms of log A* about the line
    double slope_min = 0.0, slope_max = 0.0;  // pairwise slopes
};

/// Least squares of log A* on log nu over the exact pairs.
inline ThresholdFit fit_gamma(const std::vector<ThresholdPair>& pairs) {
    ThresholdFit f;
    f.pairs = pairs;
    std::vector<ThresholdPair> use;
    for (const auto& p : pairs) {
        if (!(p.nu > 0.0) || !(p.a_star > 0.0)) throw InvalidArgument("fit_gamma: nu and A* must be positive");
        (p.bound == Bound::exact ? use : f.excluded).push_back(p);
    }
    for (size_t i = 0; i < use.size(); ++i)
        for (size_t j = i + 1; j < use.size(); ++j)
            if (use[i].nu == use[j].nu) throw InvalidArgument("fit_gamma: duplicate nu " + io::num(use[i].nu));
    if (use.size() < 3) {
        std::string msg = "fit_gamma: need >= 3 two-sided pairs, have " + std::to_string(use.size());
        if (!f.excluded.empty()) {
            msg += "; one-sided at nu =";
            for (const auto& p : f.excluded) msg += " " + io::num(p.nu) + " (" + to_string(p.bound) + ")";
        }
        throw InvalidArgument(msg);
    }
    std::vector<double> x, y;
    for (const auto& p : use) x.push_back(p.nu), y.push_back(p.a_star);
    const PowerFit pf = fit_power_law(x, y);
    f.gamma_hat = pf.slope;
    f.intercept = pf.intercept;
    f.residual = pf.residual;
    f.slope_min = pf.pairwise_min;
    f.slope_max = pf.pairwise_max;
    return f;
}

// ---------------------------------------------------------------------------
// Bisection

struct Probe {
    double amplitude = 0.0;
    Outcome outcome = Outcome::Inconclusive;
    std::vector<std::pair<std::uint64_t, Outcome>> seeds;  // per-seed outcomes (campaign runs)
};

struct ThresholdResult {
    double nu = 0.0;
    double a_star = 0.0;  // largest amplitude known Stable (exact), or the one-sided bound
    double a_lo = 0.0, a_hi = 0.0;
    Bound bound = Bound::exact;
    int runs = 0;  // detector evaluations (amplitudes probed)
    int inconclusive = 0;
    bool nonmonotone = false;
    bool unconverged = false;  // max runs reached before the tolerance
    std::vector<Probe> probes;  // in evaluation order
};

/// Upper bound on detector calls for a bracket [lo, hi] and relative tolerance tol.
inline int bisection_call_bound(double lo, double hi, double tol) {
    const double steps = std::log(hi / lo) / std::log1p(tol);
    return (steps <= 1.0 ? 0 : static_cast<int>(std::ceil(std::log2(steps)))) + 2;
}

/// Bisection on log A between a_lo (expected Stable) and a_hi (expected not Stable). Inconclusive
/// outcomes count as not Stable, which moves A* toward the stable side.
inline ThresholdResult bisect_threshold(double nu, const std::function<Probe(double)>& detect, double a_lo, double a_hi,
                                        double tol, int max_runs = 64) {
    if (!(a_lo > 0.0) || !(a_hi > a_lo)) throw InvalidArgument("bisect_threshold: need 0 < A_lo < A_hi");
    if (!(tol > 0.0 && tol < 0.5)) throw InvalidArgument("bisect_threshold: tolerance must lie in (0, 0.5)");
    ThresholdResult r;
    r.nu = nu;
    auto eval = [&](double A) {
        Probe p = detect(A);
        p.amplitude = A;
        ++r.runs;
        if (p.outcome == Outcome::Inconclusive) ++r.inconclusive;
        r.probes.push_back(p);
        return p.outcome;
    };
    double lo = a_lo, hi = a_hi;
    if (eval(lo) != Outcome::Stable) {
        r.bound = Bound::upper;
        r.a_star = r.a_lo = r.a_hi = lo;
    } else if (eval(hi) == Outcome::Stable) {
        r.bound = Bound::lower;
        r.a_star = r.a_lo = r.a_hi = hi;
    } else {
        while (hi / lo > 1.0 + tol) {
            if (r.runs >= max_runs) {
                r.unconverged = true;
                break;
            }
            const double mid = std::sqrt(lo * hi);
            (eval(mid) == Outcome::Stable ? lo : hi) = mid;
        }
        r.a_star = r.a_lo = lo;
        r.a_hi = hi;
    }
    // a Stable sample above a Transitioned one at the same nu, per seed or combined
    double min_transitioned = std::numeric_limits<double>::infinity();
    for (const auto& p : r.probes) {
        if (p.outcome == Outcome::Transitioned) min_transitioned = std::min(min_transitioned, p.amplitude);
        for (const auto& s : p.seeds)
            if (s.second == Outcome::Transitioned) min_transitioned = std::min(min_transitioned, p.amplitude);
    }
    for (const auto& p : r.probes) {
        bool stable = p.outcome == Outcome::Stable;
        for (const auto& s : p.seeds) stable = stable || s.second == Outcome::Stable;
        if (stable && p.amplitude > min_transitioned) r.nonmonotone = true;
    }
    return r;
}

/// Worst outcome over seeds: any Transitioned, else any Inconclusive, else Stable.
inline Outcome combine_outcomes(const std::vector<Outcome>& os) {
    bool inc = false;
    for (auto o : os) {
        if (o == Outcome::Transitioned) return Outcome::Transitioned;
        inc = inc || o == Outcome::Inconclusive;
    }
    return inc ? Outcome::Inconclusive : Outcome::Stable;
}

// ---------------------------------------------------------------------------
// Campaigns

struct RunTask {
    std::string campaign;
    double nu = 0.0;
    double amplitude = 0.0;
    std::uint64_t seed = 0;
};

struct RunResult {
    Outcome outcome = Outcome::Inconclusive;
    json metrics = json::object();
    std::vector<std::string> artifacts;  // relative to the campaign directory
};

using Detector = std::function<RunResult(const RunTask&)>;

inline std::string task_key(double nu, double amplitude, std::uint64_t seed) {
    return io::num(nu) + "|" + io::num(amplitude) + "|" + std::to_string(seed);
}

enum class ScanMode { bisect, grid };

struct ScanPlan {
    std::string campaign = "campaign";
    std::vector<double> nu_list;
    // amplitudes A = eps * nu^g over eps_grid x g_grid, or the absolute list when eps_grid is empty;
    // bisect mode brackets between the smallest and largest amplitude at each nu
    std::vector<double> eps_grid;
    std::vector<double> g_grid{2.0 / 3.0};
    std::vector<double> amplitudes;
    ScanMode mode = ScanMode::bisect;
    SimConfig base;
    double tol = 0.05;
    int max_runs_per_nu = 40;
    int workers = 1;
    std::vector<std::uint64_t> seeds{1};
    std::string detector_id = "simulate";
};

inline std::vector<double> amplitude_grid(const ScanPlan& p, double nu) {
    std::vector<double> a;
    if (p.eps_grid.empty())
        a = p.amplitudes;
    else
        for (double e : p.eps_grid)
            for (double g : p.g_grid) a.push_back(e * std::pow(nu, g));
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    return a;
}

inline void validate(const ScanPlan& p) {
    if (p.campaign.empty() || p.campaign.find_first_of("/\\") != std::string::npos)
        throw InvalidArgument("scan plan: campaign id must be a plain name");
    if (p.nu_list.empty()) throw InvalidArgument("scan plan: empty nu list");
    for (double nu : p.nu_list)
        if (!(nu > 0.0)) throw InvalidArgument("scan plan: nu values must be positive");
    auto sorted = p.nu_list;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw InvalidArgument("scan plan: duplicate nu");
    if (!(p.tol > 0.0 && p.tol < 0.5)) throw InvalidArgument("scan plan: tolerance must lie in (0, 0.5)");
    if (p.workers < 1) throw InvalidArgument("scan plan: workers must be >= 1");
    if (p.max_runs_per_nu < 2) throw InvalidArgument("scan plan: max runs per nu must be >= 2");
    if (p.seeds.empty()) throw InvalidArgument("scan plan: no seeds");
    for (double nu : p.nu_list) {
        const auto a = amplitude_grid(p, nu);
        if (a.empty() || !(a.front() > 0.0)) throw InvalidArgument("scan plan: amplitudes must be positive and nonempty");
        if (p.mode == ScanMode::bisect && a.size() < 2) throw InvalidArgument("scan plan: bisection needs two amplitudes");
    }
}

inline double nu_span_decades(const ScanPlan& p) {
    const auto [lo, hi] = std::minmax_element(p.nu_list.begin(), p.nu_list.end());
    return std::log10(*hi / *lo);
}

/// Hash of everything that determines an individual run's result besides (nu, A, seed).
inline std::string config_hash(const ScanPlan& p) {
    SimConfig c = p.base;
    c.nu = 0.0;
    c.amplitude = 0.0;
    c.seed = 0;
    return fnv1a_hex(p.detector_id + "\n" + to_json(c).dump());
}

struct CheckpointRecord {
    std::string campaign;
    double nu = 0.0;
    double amplitude = 0.0;
    std::uint64_t seed = 0;
    Outcome outcome = Outcome::Inconclusive;
    json metrics = json::object();
    std::vector<std::string> artifacts;
    std::string config_hash;
};

inline json to_json(const CheckpointRecord& r) {
    json j;
    j["campaign"] = r.campaign;
    j["nu"] = r.nu;
    j["amplitude"] = r.amplitude;
    j["seed"] = r.seed;
    j["outcome"] = to_string(r.outcome);
    j["metrics"] = r.metrics;
    j["artifact-paths"] = r.artifacts;
    j["config-hash"] = r.config_hash;
    return j;
}

inline CheckpointRecord checkpoint_from_json(const json& j) {
    CheckpointRecord r;
    try {
        r.campaign = j.at("campaign").get<std::string>();
        r.nu = j.at("nu").get<double>();
        r.amplitude = j.at("amplitude").get<double>();
        r.seed = j.at("seed").get<std::uint64_t>();
        const auto o = parse_outcome(j.at("outcome").get<std::string>());
        if (!o) throw DataError("unknown outcome '" + j.at("outcome").get<std::string>() + "'");
        r.outcome = *o;
        r.metrics = j.at("metrics");
        if (!r.metrics.is_object()) throw DataError("metrics must be an object");
        r.artifacts = j.at("artifact-paths").get<std::vector<std::string>>();
        r.config_hash = j.at("config-hash").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(e.what());
    }
    if (!(r.nu > 0.0) || !(r.amplitude > 0.0)) throw DataError("nu and amplitude must be positive");
    return r;
}

/// Parse a checkpoint log; any malformed line is a DataError naming the line.
inline std::vector<CheckpointRecord> read_checkpoint(const io::fs::path& p) {
    std::vector<CheckpointRecord> out;
    std::istringstream in(io::read_text(p));
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (line.empty()) continue;
        try {
            out.push_back(checkpoint_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError("checkpoint " + p.string() + " line " + std::to_string(no) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("checkpoint " + p.string() + " line " + std::to_string(no) + ": " + e.what());
        }
    }
    return out;
}

struct CampaignOptions {
    bool resume = false;  // reuse an existing checkpoint
    bool force = false;   // discard an existing checkpoint and start over
};

struct CampaignReport {
    std::string campaign;
    std::string config_hash;
    ScanMode mode = ScanMode::bisect;
    std::vector<ThresholdResult> thresholds;  // in nu_list order
    std::optional<ThresholdFit> fit;
    std::string fit_error;
    double nu_span = 0.0;
    // bookkeeping of this invocation, not part of the written report
    int new_runs = 0;
    int reused_runs = 0;
};

class Checkpoint {
public:
    Checkpoint(io::fs::path p) : path_(std::move(p)) {}

    void append(const CheckpointRecord& r) {
        const std::string line = to_json(r).dump() + "\n";
        std::lock_guard<std::mutex> lock(mu_);
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        out << line;
        out.flush();
        if (!out) throw DataError("checkpoint: append failed: " + path_.string());
    }

private:
    io::fs::path path_;
    std::mutex mu_;
};

namespace detail {

inline ThresholdResult grid_threshold(double nu, const std::vector<Probe>& probes) {
    ThresholdResult r;
    r.nu = nu;
    r.probes = probes;
    r.runs = static_cast<int>(probes.size());
    for (const auto& p : probes) r.inconclusive += p.outcome == Outcome::Inconclusive;
    size_t i = 0;
    while (i < probes.size() && probes[i].outcome == Outcome::Stable) ++i;
    if (i == 0) {
        r.bound = Bound::upper;
        r.a_star = r.a_lo = r.a_hi = probes.front().amplitude;
    } else if (i == probes.size()) {
        r.bound = Bound::lower;
        r.a_star = r.a_lo = r.a_hi = probes.back().amplitude;
    } else {
        r.a_star = r.a_lo = probes[i - 1].amplitude;
        r.a_hi = probes[i].amplitude;
    }
    for (size_t j = i; j < probes.size(); ++j)
        if (probes[j].outcome == Outcome::Stable) r.nonmonotone = true;
    return r;
}

}  // namespace detail

/// Run (or resume) a campaign in `dir`. Results are merged by task index, so the report is
/// independent of the worker count.
inline CampaignReport run_campaign(const ScanPlan& plan, const Detector& detector, const io::fs::path& dir,
                                   const CampaignOptions& opt = {}) {
    validate(plan);
    const std::string hash = config_hash(plan);
    const io::fs::path ckpt = dir / "checkpoint.ndjson";
    std::map<std::string, CheckpointRecord> done;
    if (io::fs::exists(ckpt)) {
        if (opt.force && !opt.resume) {
            io::fs::remove(ckpt);
        } else if (!opt.resume) {
            throw ExistsError("campaign checkpoint exists: " + ckpt.string() + " (use --resume or --force)");
        } else {
            int no = 0;
            for (const auto& r : read_checkpoint(ckpt)) {
                ++no;
                if (r.campaign != plan.campaign)
                    throw DataError("checkpoint record " + std::to_string(no) + ": campaign '" + r.campaign + "' != '" + plan.campaign + "'");
                if (r.config_hash != hash)
                    throw DataError("checkpoint record " + std::to_string(no) + ": config hash " + r.config_hash +
                                    " does not match the plan (" + hash + ")");
                const auto key = task_key(r.nu, r.amplitude, r.seed);
                if (done.count(key)) throw DataError("checkpoint record " + std::to_string(no) + ": duplicate run " + key);
                done.emplace(key, r);
            }
        }
    }
    io::fs::create_directories(dir);
    Checkpoint log(ckpt);
    std::atomic<int> new_runs{0}, reused{0};

    auto run_one = [&](double nu, double A, std::uint64_t seed) -> Outcome {
        const auto key = task_key(nu, A, seed);
        if (auto it = done.find(key); it != done.end()) {
            ++reused;
            return it->second.outcome;
        }
        const RunResult res = detector({plan.campaign, nu, A, seed});
        CheckpointRecord rec{plan.campaign, nu, A, seed, res.outcome, res.metrics, res.artifacts, hash};
        log.append(rec);
        ++new_runs;
        return res.outcome;
    };
    auto probe = [&](double nu, double A) {
        Probe p;
        p.amplitude = A;
        std::vector<Outcome> os;
        for (auto s : plan.seeds) {
            const Outcome o = run_one(nu, A, s);
            p.seeds.emplace_back(s, o);
            os.push_back(o);
        }
        p.outcome = combine_outcomes(os);
        return p;
    };

    CampaignReport rep;
    rep.campaign = plan.campaign;
    rep.config_hash = hash;
    rep.mode = plan.mode;
    rep.nu_span = nu_span_decades(plan);
    rep.thresholds.resize(plan.nu_list.size());

    // jobs: one per nu (bisection is sequential) or one per (nu, amplitude) in grid mode
    std::vector<std::pair<size_t, size_t>> jobs;
    std::vector<std::vector<Probe>> grid(plan.nu_list.size());
    for (size_t i = 0; i < plan.nu_list.size(); ++i) {
        const auto a = amplitude_grid(plan, plan.nu_list[i]);
        if (plan.mode == ScanMode::bisect)
            jobs.emplace_back(i, 0);
        else {
            grid[i].resize(a.size());
            for (size_t j = 0; j < a.size(); ++j) jobs.emplace_back(i, j);
        }
    }
    std::atomic<size_t> next{0};
    std::exception_ptr failure;
    std::mutex fail_mu;
    auto worker = [&] {
        for (;;) {
            {
                std::lock_guard<std::mutex> lock(fail_mu);
                if (failure) return;
            }
            const size_t j = next++;
            if (j >= jobs.size()) return;
            const auto [i, ai] = jobs[j];
            const double nu = plan.nu_list[i];
            try {
                const auto a = amplitude_grid(plan, nu);
                if (plan.mode == ScanMode::bisect)
                    rep.thresholds[i] = bisect_threshold(
                        nu, [&](double A) { return probe(nu, A); }, a.front(), a.back(), plan.tol, plan.max_runs_per_nu);
                else
                    grid[i][ai] = probe(nu, a[ai]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(fail_mu);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    const int nw = std::max(1, std::min<int>(plan.workers, static_cast<int>(jobs.size())));
    if (nw == 1)
        worker();
    else {
        std::vector<std::thread> pool;
        for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    if (plan.mode == ScanMode::grid)
        for (size_t i = 0; i < plan.nu_list.size(); ++i) rep.thresholds[i] = detail::grid_threshold(plan.nu_list[i], grid[i]);

    std::vector<ThresholdPair> pairs;
    for (const auto& t : rep.thresholds) pairs.push_back({t.nu, t.a_star, t.bound});
    try {
        rep.fit = fit_gamma(pairs);
    } catch (const InvalidArgument& e) {
        rep.fit_error = e.what();
    }
    rep.new_runs = new_runs;
    rep.reused_runs = reused;
    return rep;
}

// ---------------------------------------------------------------------------
// Report files

inline json to_json(const ThresholdFit& f) {
    json j;
    j["gamma_hat"] = f.gamma_hat;
    j["intercept"] = f.intercept;
    j["eps1_empirical"] = std::exp(f.intercept);
    j["residual"] = f.residual;
    j["pairwise_slope_min"] = f.slope_min;
    j["pairwise_slope_max"] = f.slope_max;
    json ex = json::array();
    for (const auto& p : f.excluded) ex.push_back({{"nu", p.nu}, {"a_star", p.a_star}, {"bound", to_string(p.bound)}});
    j["excluded"] = ex;
    return j;
}

inline json to_json(const CampaignReport& r) {
    json j;
    j["campaign"] = r.campaign;
    j["config_hash"] = r.config_hash;
    j["mode"] = r.mode == ScanMode::bisect ? "bisect" : "grid";
    j["nu_span_decades"] = r.nu_span;
    json th = json::array();
    for (const auto& t : r.thresholds) {
        json probes = json::array();
        for (const auto& p : t.probes) {
            json seeds = json::array();
            for (const auto& [s, o] : p.seeds) seeds.push_back({{"seed", s}, {"outcome", to_string(o)}});
            probes.push_back({{"amplitude", p.amplitude}, {"outcome", to_string(p.outcome)}, {"seeds", seeds}});
        }
        th.push_back({{"nu", t.nu},
                      {"a_star", t.a_star},
                      {"a_lo", t.a_lo},
                      {"a_hi", t.a_hi},
                      {"bound", to_string(t.bound)},
                      {"runs", t.runs},
                      {"inconclusive", t.inconclusive},
                      {"nonmonotone", t.nonmonotone},
                      {"unconverged", t.unconverged},
                      {"probes", probes}});
    }
    j["thresholds"] = th;
    if (r.fit) j["fit"] = to_json(*r.fit);
    else j["fit_error"] = r.fit_error;
    return j;
}

inline std::string thresholds_csv(const CampaignReport& r) {
    io::CsvWriter w({"nu", "a_star", "a_lo", "a_hi", "bound", "runs", "inconclusive", "nonmonotone"});
    for (const auto& t : r.thresholds)
        w.row(std::vector<std::string>{io::num(t.nu), io::num(t.a_star), io::num(t.a_lo), io::num(t.a_hi), to_string(t.bound),
                                       std::to_string(t.runs), std::to_string(t.inconclusive), t.nonmonotone ? "1" : "0"});
    return w.str();
}

/// log A* vs log nu with the fitted line and a slope-2/3 reference through the data's centre.
inline std::pair<std::string, std::string> threshold_plot(const CampaignReport& r) {
    io::CsvWriter w({"nu", "a_star", "bound", "fit", "reference_2_3"});
    io::PlotSeries data{"A*(nu)", {}, {}, false, true}, fitted{"fit", {}, {}, false, false}, ref{"slope 2/3", {}, {}, true, false};
    double lx = 0, ly = 0;
    for (const auto& t : r.thresholds) lx += std::log(t.nu), ly += std::log(t.a_star);
    lx /= std::max<size_t>(1, r.thresholds.size());
    ly /= std::max<size_t>(1, r.thresholds.size());
    for (const auto& t : r.thresholds) {
        const double f = r.fit ? std::exp(r.fit->intercept + r.fit->gamma_hat * std::log(t.nu)) : std::nan("");
        const double g = std::exp(ly + 2.0 / 3.0 * (std::log(t.nu) - lx));
        w.row(std::vector<std::string>{io::num(t.nu), io::num(t.a_star), to_string(t.bound), io::num(f), io::num(g)});
        data.x.push_back(t.nu), data.y.push_back(t.a_star);
        fitted.x.push_back(t.nu), fitted.y.push_back(f);
        ref.x.push_back(t.nu), ref.y.push_back(g);
    }
    io::PlotSpec spec{"threshold amplitude", "nu", "A*", true, true};
    return {w.str(), io::svg_plot(spec, {data, fitted, ref})};
}

inline std::vector<std::string> write_campaign_report(const CampaignReport& r, const io::fs::path& dir, bool force) {
    std::vector<std::string> out;
    auto put = [&](const std::string& name, const std::string& text) {
        io::write_text(dir / name, text, force);
        out.push_back((dir / name).string());
    };
    put("report.json", to_json(r).dump(2) + "\n");
    put("thresholds.csv", thresholds_csv(r));
    const auto [csv, svg] = threshold_plot(r);
    put("threshold_plot.csv", csv);
    put("threshold_plot.svg", svg);
    return out;
}

// ---------------------------------------------------------------------------
// Detectors

/// "Stable iff A <= scale * nu^gamma" with no simulation; metrics carry the margin.
inline Detector synthetic_detector(double gamma = 2.0 / 3.0, double scale = 1.0) {
    return [=](const RunTask& t) {
        RunResult r;
        const double thr = scale * std::pow(t.nu, gamma);
        r.outcome = t.amplitude <= thr ? Outcome::Stable : Outcome::Transitioned;
        r.metrics["margin"] = t.amplitude / thr;
        return r;
    };
}

inline std::string run_dir_name(const RunTask& t) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "nu%.3e_A%.6e_s%llu_", t.nu, t.amplitude, static_cast<unsigned long long>(t.seed));
    return std::string(buf) + fnv1a_hex(task_key(t.nu, t.amplitude, t.seed)).substr(0, 8);
}

/// Full simulation per task; run artifacts go to <campaign dir>/runs/<task>/ (overwritten, since a
/// task killed mid-run is recomputed identically on resume).
inline Detector simulation_detector(const SimConfig& base, const io::fs::path& campaign_dir, bool write_artifacts = true) {
    return [=](const RunTask& t) {
        SimConfig c = base;
        c.nu = t.nu;
        c.amplitude = t.amplitude;
        c.seed = t.seed;
        const RunRecord rec = simulate(c);
        RunResult r;
        r.outcome = classify_outcome(rec);
        const auto b = verify_bootstrap(rec);
        r.metrics["final_ratio"] = rec.initial_energy > 0 && std::isfinite(rec.final_energy) ? rec.final_energy / rec.initial_energy : 0.0;
        r.metrics["sup_ratio"] = rec.initial_energy > 0 ? rec.sup_energy / rec.initial_energy : 0.0;
        r.metrics["energy_total"] = rec.energy.total;
        r.metrics["bootstrap_max_ratio"] = b.max_ratio;
        r.metrics["end_time"] = rec.end_time;
        r.metrics["diverged"] = rec.diverged;
        if (write_artifacts) {
            const io::fs::path rel = io::fs::path("runs") / run_dir_name(t);
            for (const auto& p : write_run(rec, campaign_dir / rel, true))
                r.artifacts.push_back((rel / io::fs::path(p).filename()).string());
        }
        return r;
    };
}

}  // namespace channel_stab
