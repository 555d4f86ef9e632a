#pragma once

// Measured ratios for the resolvent inequalities of the Orr-Sommerfeld problem,
//
//   (a)  nu^{3/8}|k|^{5/8}(||w||_1 + |k|^{1/2}||u||) + (nu|k|)^{1/2}||w|| + nu^{3/4}|k|^{1/4}||(d,|k|)w||  <~ ||F||
//   (b)  nu^{3/4}|k|^{1/4}||w|| + nu||(d,|k|)w|| + (nu|k|)^{1/2}||u||                                   <~ ||F||_{H^-1_k}
//   (c)  |nu/k|^{1/2}||(d,|k|)w|| + |nu/k|^{1/4}||w|| + |nu/k|^{1/8}||u||_inf + ||u||                    <~ |k|^{-1}||(d,|k|)F||
//   (la) nu^{1/6}|k|^{5/6}mu^{1/3}||u|| + nu^{2/3}|k|^{1/3}mu^{1/3}||(d,|k|)w|| + nu^{1/3}|k|^{2/3}mu^{2/3}||w|| <~ ||F||
//   (lb) nu^{2/3}|k|^{1/3}mu^{1/3}||w||                                                                  <~ ||F||_{H^-1_k}
//
// with mu = |lambda - 1|^{1/2} + |nu/k|^{1/4}. Quadratic terms are exact discrete operator
// norms; L1 / Linf terms are lower bounds from a forcing bank.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "channel_stab/fit.hpp"
#include "channel_stab/linop.hpp"
#include "channel_stab/parallel.hpp"

namespace channel_stab {

enum class InequalityId { resol_slip_a, resol_slip_b, resol_slip_c, resol_lambda_a, resol_lambda_b };

inline const std::vector<InequalityId>& all_inequalities() {
    static const std::vector<InequalityId> ids{InequalityId::resol_slip_a, InequalityId::resol_slip_b,
                                               InequalityId::resol_slip_c, InequalityId::resol_lambda_a,
                                               InequalityId::resol_lambda_b};
    return ids;
}

inline std::string to_string(InequalityId id) {
    switch (id) {
        case InequalityId::resol_slip_a: return "resol_slip_a";
        case InequalityId::resol_slip_b: return "resol_slip_b";
        case InequalityId::resol_slip_c: return "resol_slip_c";
        case InequalityId::resol_lambda_a: return "resol_lambda_a";
        case InequalityId::resol_lambda_b: return "resol_lambda_b";
    }
    return "?";
}

inline std::string valid_inequality_names() {
    return "a, b, c, la, lb (or resol_slip_a, resol_slip_b, resol_slip_c, resol_lambda_a, resol_lambda_b)";
}

/// Accepts the full ids and the short forms a, b, c, la, lb.
inline std::optional<InequalityId> parse_inequality(const std::string& s) {
    static const std::map<std::string, InequalityId> names{
        {"a", InequalityId::resol_slip_a},          {"b", InequalityId::resol_slip_b},
        {"c", InequalityId::resol_slip_c},          {"la", InequalityId::resol_lambda_a},
        {"lb", InequalityId::resol_lambda_b},       {"resol_slip_a", InequalityId::resol_slip_a},
        {"resol_slip_b", InequalityId::resol_slip_b}, {"resol_slip_c", InequalityId::resol_slip_c},
        {"resol_lambda_a", InequalityId::resol_lambda_a}, {"resol_lambda_b", InequalityId::resol_lambda_b}};
    const auto it = names.find(s);
    if (it == names.end()) return std::nullopt;
    return it->second;
}

struct BankProfile {
    ComplexProfile f;  // unit L2 norm
    std::string label;
    bool under_resolved = false;
    bool vanishes_at_walls = true;
};

enum class BankKind { vanishing, general };

inline std::string to_string(BankKind b) { return b == BankKind::vanishing ? "vanishing" : "general"; }

/// Adversarial forcings: Gaussians on the critical layers y_c = +-sqrt(1 - lambda) with widths
/// (nu/|k|)^{1/4}, (nu/|k|)^{1/3} and 0.1, times (1 - y^2), then sin(m pi y) for m = 1..4 (more
/// if `count` asks for them). The general bank drops the (1 - y^2) factor and replaces the
/// sines by cos((m - 1/2) pi y) + 1/2, so its profiles do not vanish at the walls.
/// Every profile has unit L2 norm; the first `count` are returned.
inline std::vector<BankProfile> critical_layer_testbank(const ChebGrid& g, double nu, int k, double lambda, int count,
                                                        BankKind kind = BankKind::vanishing) {
    if (count < 1) throw InvalidArgument("critical_layer_testbank: count must be >= 1");
    const bool vanish = kind == BankKind::vanishing;
    std::vector<BankProfile> bank;
    auto push = [&](const ComplexProfile& f, std::string label, bool under) {
        bank.push_back({f / l2_norm(g, f), std::move(label), under, vanish});
    };
    if (lambda >= 0.0 && lambda <= 1.0) {
        const double yc = std::sqrt(1.0 - lambda);
        std::vector<double> centres{yc};
        if (yc > 0.0) centres.push_back(-yc);
        const double kk = std::abs(k);
        const std::vector<std::pair<double, std::string>> widths{
            {std::pow(nu / kk, 0.25), "w14"}, {std::pow(nu / kk, 1.0 / 3.0), "w13"}, {0.1, "w01"}};
        for (const auto& [width, wname] : widths)
            for (double c : centres) {
                int inside = 0;
                for (int j = 0; j < g.n; ++j) inside += std::abs(g.nodes(j) - c) <= 0.5 * width;
                const auto f = sample(g, [&](double y) {
                    const double env = vanish ? (1.0 - y * y) : 1.0;
                    return env * std::exp(-0.5 * (y - c) * (y - c) / (width * width));
                });
                push(f, "gauss_" + wname + (c >= 0 ? "_plus" : "_minus"), inside < 4);
            }
    }
    const int modes = std::max(4, count - static_cast<int>(bank.size()));
    for (int m = 1; m <= modes; ++m) {
        const auto f = vanish ? sample(g, [m](double y) { return std::sin(m * kPi * y); })
                              : sample(g, [m](double y) { return std::cos((m - 0.5) * kPi * y) + 0.5; });
        push(f, (vanish ? "sin" : "cos") + std::to_string(m), false);
    }
    if (static_cast<int>(bank.size()) > count) bank.resize(count);
    return bank;
}

struct ResolventSample {
    double nu = 0.0;
    int k = 0;
    double lambda = 0.0;
    InequalityId id = InequalityId::resol_slip_a;
    NormBundle norms_w;        // of the worst-case w for the L2 -> L2 map
    NormBundle norms_u;        // l2 / linf of that velocity (other fields unused)
    NormBundle norms_F;        // of the corresponding worst-case forcing
    double sigma_min = 0.0;
    std::map<std::string, double> term_ratios;  // weighted sup term / rhs
    double combined_ratio = 0.0;                // sum of the term suprema (an upper bound on the combined sup)
    bool flagged = false;
    std::string flag_reason;
};

namespace detail {

struct TermSpec {
    std::string name;
    double weight;
    std::optional<LhsNorm> quadratic;  // nullopt: bank-based (w_l1, u_linf)
};

inline double mu_of(double nu, int k, double lambda) {
    return std::sqrt(std::abs(lambda - 1.0)) + std::pow(nu / std::abs(k), 0.25);
}

inline RhsNorm rhs_of(InequalityId id) {
    switch (id) {
        case InequalityId::resol_slip_a:
        case InequalityId::resol_lambda_a: return RhsNorm::F_l2;
        case InequalityId::resol_slip_b:
        case InequalityId::resol_lambda_b: return RhsNorm::F_hm1k;
        case InequalityId::resol_slip_c: return RhsNorm::F_h1k;
    }
    return RhsNorm::F_l2;
}

inline std::vector<TermSpec> terms_of(InequalityId id, double nu, int k, double lambda) {
    const double K = std::abs(k);
    const double mu = mu_of(nu, k, lambda);
    switch (id) {
        case InequalityId::resol_slip_a: {
            const double c = std::pow(nu, 3.0 / 8.0) * std::pow(K, 5.0 / 8.0);
            return {{"w_l1", c, std::nullopt},
                    {"u_l2", c * std::sqrt(K), LhsNorm::u_l2},
                    {"w_l2", std::sqrt(nu * K), LhsNorm::w_l2},
                    {"w_h1k", std::pow(nu, 0.75) * std::pow(K, 0.25), LhsNorm::w_h1k}};
        }
        case InequalityId::resol_slip_b:
            return {{"w_l2", std::pow(nu, 0.75) * std::pow(K, 0.25), LhsNorm::w_l2},
                    {"w_h1k", nu, LhsNorm::w_h1k},
                    {"u_l2", std::sqrt(nu * K), LhsNorm::u_l2}};
        case InequalityId::resol_slip_c:
            return {{"w_h1k", std::pow(nu / K, 0.5), LhsNorm::w_h1k},
                    {"w_l2", std::pow(nu / K, 0.25), LhsNorm::w_l2},
                    {"u_linf", std::pow(nu / K, 0.125), std::nullopt},
                    {"u_l2", 1.0, LhsNorm::u_l2}};
        case InequalityId::resol_lambda_a:
            return {{"u_l2", std::pow(nu, 1.0 / 6.0) * std::pow(K, 5.0 / 6.0) * std::cbrt(mu), LhsNorm::u_l2},
                    {"w_h1k", std::pow(nu, 2.0 / 3.0) * std::cbrt(K) * std::cbrt(mu), LhsNorm::w_h1k},
                    {"w_l2", std::cbrt(nu) * std::pow(K, 2.0 / 3.0) * std::pow(mu, 2.0 / 3.0), LhsNorm::w_l2}};
        case InequalityId::resol_lambda_b:
            return {{"w_l2", std::pow(nu, 2.0 / 3.0) * std::cbrt(K) * std::cbrt(mu), LhsNorm::w_l2}};
    }
    return {};
}

/// Value of a forcing in the rhs norm of an inequality.
inline double rhs_value(const ChebGrid& g, int k, RhsNorm r, const ComplexProfile& F) {
    switch (r) {
        case RhsNorm::F_l2: return l2_norm(g, F);
        case RhsNorm::F_hm1k: return hm1k_norm(g, k, F);
        case RhsNorm::F_h1k: return h1k_norm(g, k, F) / std::abs(k);
    }
    return l2_norm(g, F);
}

}  // namespace detail

/// Names of the terms of an inequality in evaluation order.
inline std::vector<std::string> inequality_terms(InequalityId id) {
    std::vector<std::string> out;
    for (const auto& t : detail::terms_of(id, 1.0, 1, 0.0)) out.push_back(t.name);
    return out;
}

/// Operator norms already computed for one shifted solver, shared between inequalities.
class NormCache {
public:
    explicit NormCache(const ShiftedSolver& solver) : solver_(&solver) {}
    const OperatorNorm& get(LhsNorm l, RhsNorm r) {
        const auto key = std::make_pair(static_cast<int>(l), static_cast<int>(r));
        auto it = cache_.find(key);
        if (it == cache_.end()) it = cache_.emplace(key, weighted_operator_norm(*solver_, l, r)).first;
        return it->second;
    }

private:
    const ShiftedSolver* solver_;
    std::map<std::pair<int, int>, OperatorNorm> cache_;
};

/// Evaluate one inequality at (op, lambda). `bank` supplies forcings for the L1 / Linf terms;
/// the worst-case L2 singular vector of the same rhs map is always added to it.
inline ResolventSample evaluate_inequality(const ShiftedSolver& solver, InequalityId id,
                                           const std::vector<BankProfile>& bank, NormCache* cache = nullptr) {
    NormCache local(solver);
    NormCache& nc = cache ? *cache : local;
    const OperatorLk& op = solver.op();
    const ChebGrid& g = op.grid();
    const int k = op.k();
    const auto terms = detail::terms_of(id, op.nu(), k, solver.lambda());
    const RhsNorm rhs = detail::rhs_of(id);
    const bool needs_bank = std::any_of(terms.begin(), terms.end(), [](const auto& t) { return !t.quadratic; });
    if (needs_bank && bank.empty()) throw InvalidArgument("evaluate_inequality: empty forcing bank for " + to_string(id));
    if (id == InequalityId::resol_slip_c)
        for (const auto& b : bank)
            if (std::abs(b.f(0)) > 1e-12 || std::abs(b.f(g.n - 1)) > 1e-12)
                throw InvalidArgument("evaluate_inequality: inequality (c) needs forcings vanishing at the walls (" +
                                      b.label + ")");

    ResolventSample s;
    s.nu = op.nu();
    s.k = k;
    s.lambda = solver.lambda();
    s.id = id;

    // worst-case L2 -> L2 forcing: sigma_min and the reference norm bundles
    const OperatorNorm& l2map = nc.get(LhsNorm::w_l2, RhsNorm::F_l2);
    s.sigma_min = l2map.value > 0.0 ? 1.0 / l2map.value : 0.0;
    {
        const auto sol = solve_resolvent(solver, l2map.forcing);
        s.norms_w = compute_norms(g, k, sol.w);
        s.norms_u.l2 = velocity_l2(g, sol.u);
        s.norms_u.linf = velocity_linf(sol.u);
        s.norms_F = compute_norms(g, k, l2map.forcing);
    }

    std::optional<OperatorNorm> worst_rhs;  // worst-case forcing for the inequality's own rhs norm
    for (const auto& t : terms) {
        double sup = 0.0;
        if (t.quadratic) {
            const OperatorNorm& on = nc.get(*t.quadratic, rhs);
            sup = on.value;
            if (!worst_rhs || *t.quadratic == LhsNorm::w_l2) worst_rhs = on;
        } else {
            std::vector<ComplexProfile> fs;
            for (const auto& b : bank) fs.push_back(b.f);
            if (!worst_rhs) worst_rhs = nc.get(LhsNorm::w_l2, rhs);
            fs.push_back(worst_rhs->forcing);
            for (const auto& F : fs) {
                const double denom = detail::rhs_value(g, k, rhs, F);
                if (!(denom > 0.0)) continue;
                const auto sol = solve_resolvent(solver, F);
                const double num = t.name == "w_l1" ? l1_norm(g, sol.w) : velocity_linf(sol.u);
                sup = std::max(sup, num / denom);
            }
        }
        const double ratio = t.weight * sup;
        s.term_ratios[t.name] = ratio;
        s.combined_ratio += ratio;
    }
    if (!std::isfinite(s.combined_ratio)) {
        s.flagged = true;
        s.flag_reason = "non-finite ratio";
    }
    return s;
}

inline ResolventSample evaluate_inequality(const OperatorLk& op, double lambda, InequalityId id,
                                           const std::vector<BankProfile>& bank) {
    return evaluate_inequality(ShiftedSolver(op, lambda), id, bank);
}

struct SweepPlan {
    std::vector<double> nus{1e-2, 3e-3, 1e-3, 3e-4, 1e-4};
    std::vector<int> ks{1, 2, 4, 8};
    std::vector<double> lambdas;  // empty: 41 points in [-0.25, 1.25]
    int n = 192;
    int bank_count = 10;
    bool refine_lambda = true;  // golden-section around the worst grid lambda per (nu, k)
    int threads = 1;

    std::vector<double> lambda_grid() const {
        if (!lambdas.empty()) return lambdas;
        std::vector<double> out(41);
        for (int i = 0; i < 41; ++i) out[i] = -0.25 + 1.5 * i / 40.0;
        return out;
    }
};

struct WorstPoint {
    double nu = 0.0;
    int k = 0;
    double lambda = 0.0;
    double ratio = 0.0;
};

struct InequalityReport {
    InequalityId id = InequalityId::resol_slip_a;
    BankKind bank = BankKind::vanishing;
    std::vector<ResolventSample> samples;
    double worst_ratio = 0.0;
    std::vector<WorstPoint> worst_per_nu;  // one per nu, ascending nu
    PowerFit fit;                          // log worst ratio vs log nu (needs >= 2 nu values)
    std::map<std::string, PowerFit> term_fits;
    std::map<std::string, std::vector<double>> term_worst_per_nu;
    int flagged_count = 0;
    int total_count = 0;
};

namespace detail {

/// Worst-ratio summaries and fits from a finished list of samples.
inline void summarize(InequalityReport& rep) {
    rep.worst_ratio = 0.0;
    rep.flagged_count = 0;
    rep.total_count = static_cast<int>(rep.samples.size());
    std::map<double, WorstPoint> per_nu;
    std::map<std::string, std::map<double, double>> per_term;
    for (const auto& s : rep.samples) {
        if (s.flagged) {
            ++rep.flagged_count;
            continue;
        }
        rep.worst_ratio = std::max(rep.worst_ratio, s.combined_ratio);
        auto& w = per_nu[s.nu];
        if (s.combined_ratio > w.ratio) w = {s.nu, s.k, s.lambda, s.combined_ratio};
        for (const auto& [name, r] : s.term_ratios) {
            auto& v = per_term[name][s.nu];
            v = std::max(v, r);
        }
    }
    rep.worst_per_nu.clear();
    for (const auto& [nu, w] : per_nu) rep.worst_per_nu.push_back(w);
    rep.fit = PowerFit{};
    rep.term_fits.clear();
    rep.term_worst_per_nu.clear();
    if (rep.worst_per_nu.size() >= 2) {
        std::vector<double> x, y;
        for (const auto& w : rep.worst_per_nu) {
            x.push_back(w.nu);
            y.push_back(w.ratio);
        }
        if (std::all_of(y.begin(), y.end(), [](double v) { return v > 0.0; })) rep.fit = fit_power_law(x, y);
        for (const auto& [name, m] : per_term) {
            std::vector<double> tx, ty;
            for (const auto& [nu, r] : m) {
                tx.push_back(nu);
                ty.push_back(r);
            }
            rep.term_worst_per_nu[name] = ty;
            if (std::all_of(ty.begin(), ty.end(), [](double v) { return v > 0.0; }))
                rep.term_fits[name] = fit_power_law(tx, ty);
        }
    } else {
        for (const auto& [name, m] : per_term) {
            std::vector<double> ty;
            for (const auto& [nu, r] : m) ty.push_back(r);
            rep.term_worst_per_nu[name] = ty;
        }
    }
}

}  // namespace detail

/// Build a report from externally supplied samples (also the test seam for the fitting path).
inline InequalityReport report_from_samples(InequalityId id, std::vector<ResolventSample> samples,
                                            BankKind bank = BankKind::vanishing) {
    InequalityReport rep;
    rep.id = id;
    rep.bank = bank;
    rep.samples = std::move(samples);
    detail::summarize(rep);
    return rep;
}

/// Sweep (nu, k, lambda), evaluate the requested inequalities on one shared factorization per
/// point, and fit the worst ratio per nu against nu. Returns one report per (inequality, bank);
/// the bank-based term of (a) is evaluated with both the vanishing and the general bank.
inline std::vector<InequalityReport> sweep_and_fit(const SweepPlan& plan, const std::vector<InequalityId>& ids) {
    if (plan.nus.empty() || plan.ks.empty()) throw InvalidArgument("sweep_and_fit: empty sweep");
    const auto lambdas = plan.lambda_grid();
    const GridPtr grid = make_grid(plan.n);

    struct Job {
        InequalityId id;
        BankKind bank;
    };
    std::vector<Job> jobs;
    for (InequalityId id : ids) {
        jobs.push_back({id, BankKind::vanishing});
        const bool bank_terms = id == InequalityId::resol_slip_a;  // (b) has no bank terms; (c) needs F in H1_0
        if (bank_terms) jobs.push_back({id, BankKind::general});
    }

    struct Point {
        double nu;
        int k;
        double lambda;
    };
    std::vector<Point> points;
    for (double nu : plan.nus)
        for (int k : plan.ks)
            for (double lam : lambdas) points.push_back({nu, k, lam});

    // samples[p][j]
    std::vector<std::vector<ResolventSample>> samples(points.size(), std::vector<ResolventSample>(jobs.size()));
    auto eval_point = [&](const OperatorLk& op, double lam, std::vector<ResolventSample>& out) {
        try {
            const ShiftedSolver solver(op, lam);
            NormCache nc(solver);
            for (size_t j = 0; j < jobs.size(); ++j) {
                const auto bank = critical_layer_testbank(*grid, op.nu(), op.k(), lam, plan.bank_count, jobs[j].bank);
                out[j] = evaluate_inequality(solver, jobs[j].id, bank, &nc);
            }
        } catch (const ConditioningError& e) {
            for (size_t j = 0; j < jobs.size(); ++j) {
                out[j] = ResolventSample{};
                out[j].nu = op.nu();
                out[j].k = op.k();
                out[j].lambda = lam;
                out[j].id = jobs[j].id;
                out[j].sigma_min = e.sigma_min();
                out[j].flagged = true;
                out[j].flag_reason = "conditioning";
            }
        }
    };

    // group points by (nu, k) so each operator is assembled once
    const int nk = static_cast<int>(plan.nus.size() * plan.ks.size());
    const int nl = static_cast<int>(lambdas.size());
    std::vector<std::vector<ResolventSample>> refined(nk * jobs.size());
    parallel_for(nk, plan.threads, [&](int g) {
        const double nu = plan.nus[g / plan.ks.size()];
        const int k = plan.ks[g % plan.ks.size()];
        const OperatorLk op = assemble(grid, nu, k);
        for (int l = 0; l < nl; ++l) eval_point(op, lambdas[l], samples[g * nl + l]);
        if (!plan.refine_lambda || nl < 3) return;
        for (size_t j = 0; j < jobs.size(); ++j) {
            int best = -1;
            for (int l = 0; l < nl; ++l) {
                const auto& s = samples[g * nl + l][j];
                if (!s.flagged && (best < 0 || s.combined_ratio > samples[g * nl + best][j].combined_ratio)) best = l;
            }
            if (best <= 0 || best >= nl - 1) continue;
            // maximize the combined ratio between the neighbouring grid shifts
            GapOptions opt;
            opt.lambda_lo = lambdas[best - 1];
            opt.lambda_hi = lambdas[best + 1];
            opt.coarse_points = 5;
            opt.lambda_tol = 1e-4;
            std::map<double, ResolventSample> cache;
            auto neg_ratio = [&](double lam) {
                std::vector<ResolventSample> tmp(jobs.size());
                try {
                    const ShiftedSolver solver(op, lam);
                    const auto bank = critical_layer_testbank(*grid, nu, k, lam, plan.bank_count, jobs[j].bank);
                    tmp[j] = evaluate_inequality(solver, jobs[j].id, bank);
                } catch (const ConditioningError&) {
                    return 0.0;
                }
                cache[lam] = tmp[j];
                return -tmp[j].combined_ratio;
            };
            const GapResult r = detail::minimize_over_lambda(neg_ratio, opt, opt.coarse_points);
            const auto it = cache.find(r.lambda);
            if (it != cache.end() && it->second.combined_ratio > samples[g * nl + best][j].combined_ratio)
                refined[g * jobs.size() + j].push_back(it->second);
        }
    });

    std::vector<InequalityReport> reports;
    for (size_t j = 0; j < jobs.size(); ++j) {
        std::vector<ResolventSample> list;
        for (const auto& row : samples) list.push_back(row[j]);
        for (int g = 0; g < nk; ++g)
            for (const auto& s : refined[g * jobs.size() + j]) list.push_back(s);
        reports.push_back(report_from_samples(jobs[j].id, std::move(list), jobs[j].bank));
    }
    return reports;
}

}  // namespace channel_stab
