#pragma once

// Linearized Navier-Stokes around Poiseuille flow for one x-mode:
//   d_t w + L_k w = -i k f1 - d_y f2 - f3 - f4,   w(+-1) = 0,
// integrated with Crank-Nicolson on the full operator.

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "channel_stab/linop.hpp"

namespace channel_stab {

using SlotFn = std::function<ComplexProfile(double)>;

/// Time-dependent forcing providers. Empty slots are zero.
struct ForcingSlots {
    SlotFn f1, f2, f3, f4;  // f3 must vanish at the walls

    bool empty() const { return !f1 && !f2 && !f3 && !f4; }
};

/// Default horizon min(20 (nu|k|)^{-1/2}, 2000).
inline double default_horizon(double nu, int k) {
    return std::min(20.0 / std::sqrt(nu * std::abs(k)), 2000.0);
}

/// Advection-limited step bound min(0.5/|k|, 0.1 nu^{-1/2}).
inline double max_linear_dt(double nu, int k) { return std::min(0.5 / std::abs(k), 0.1 / std::sqrt(nu)); }

/// Per-time norms of an interior vorticity vector, via the operator's Gram factors.
struct ModeNorms {
    double w_l2 = 0.0;
    double w_h1k = 0.0;  // ||(d_y, |k|) w||
    double u_l2 = 0.0;
};

inline ModeNorms mode_norms(const NormGrams& gr, const Eigen::VectorXcd& w) {
    ModeNorms m;
    m.w_l2 = (gr.sqrt_w.asDiagonal() * w).norm();
    m.w_h1k = (gr.h1k_chol.transpose() * w).norm();
    const Eigen::VectorXcd phi = gr.solve_op * w;
    m.u_l2 = (gr.h1k_chol.transpose() * phi).norm();  // ||u||^2 = ||phi||_{H1_k}^2
    return m;
}

/// Crank-Nicolson stepper for one operator and one dt (one dense factorization).
class CnStepper {
public:
    CnStepper(const OperatorLk& op, double dt) : op_(&op), dt_(dt) {
        if (!(dt > 0.0)) throw InvalidArgument("step_linear: dt must be positive");
        const double cap = max_linear_dt(op.nu(), op.k());
        if (dt > cap * (1.0 + 1e-12))
            throw InvalidArgument("step_linear: dt = " + std::to_string(dt) + " exceeds the CFL bound " + std::to_string(cap));
        const int m = op.dim();
        const Eigen::MatrixXcd half = (0.5 * dt) * op.matrix();
        explicit_ = Eigen::MatrixXcd::Identity(m, m) - half;
        lu_.compute(Eigen::MatrixXcd::Identity(m, m) + half);
    }

    double dt() const { return dt_; }
    const OperatorLk& op() const { return *op_; }

    /// Assembled interior right-hand side -i k f1 - d_y f2 - f3 - f4 at time t.
    /// Returns the largest |f3(+-1)| seen (0 when f3 is empty) through `f3_wall`.
    Eigen::VectorXcd rhs(const ForcingSlots& s, double t, double* f3_wall = nullptr) const {
        const ChebGrid& g = op_->grid();
        const int m = op_->dim();
        Eigen::VectorXcd r = Eigen::VectorXcd::Zero(m);
        if (f3_wall) *f3_wall = 0.0;
        auto get = [&](const SlotFn& f, const char* name) {
            ComplexProfile v = f(t);
            if (v.size() != g.n) throw InvalidArgument(std::string("forcing slot ") + name + ": wrong profile length");
            return v;
        };
        if (s.f1) r -= (I * static_cast<double>(op_->k())) * get(s.f1, "f1").segment(1, m);
        if (s.f2) r -= (g.d1 * get(s.f2, "f2")).segment(1, m);
        if (s.f3) {
            const ComplexProfile v = get(s.f3, "f3");
            if (f3_wall) *f3_wall = std::max(std::abs(v(0)), std::abs(v(g.n - 1)));
            r -= v.segment(1, m);
        }
        if (s.f4) r -= get(s.f4, "f4").segment(1, m);
        return r;
    }

    /// One step from interior w at time t given the assembled rhs at t and t + dt.
    Eigen::VectorXcd step(const Eigen::VectorXcd& w, const Eigen::VectorXcd& r0, const Eigen::VectorXcd& r1) const {
        return lu_.solve(explicit_ * w + (0.5 * dt_) * (r0 + r1));
    }

    Eigen::VectorXcd step(const Eigen::VectorXcd& w) const { return lu_.solve(explicit_ * w); }

    /// One-step propagator matrix (I + dt/2 L)^{-1} (I - dt/2 L).
    Eigen::MatrixXcd propagator() const { return lu_.solve(explicit_); }

private:
    const OperatorLk* op_;
    double dt_;
    Eigen::MatrixXcd explicit_;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
};

/// Single Crank-Nicolson step on a full-length profile. Factorizes on every call; use
/// CnStepper when stepping repeatedly.
inline ComplexProfile step_linear(const OperatorLk& op, const ComplexProfile& w, double t, double dt,
                                  const ForcingSlots& slots = {}) {
    const CnStepper st(op, dt);
    const int m = op.dim();
    if (w.size() != op.grid().n) throw InvalidArgument("step_linear: profile length does not match grid");
    Eigen::VectorXcd next = slots.empty() ? st.step(w.segment(1, m))
                                          : st.step(w.segment(1, m), st.rhs(slots, t), st.rhs(slots, t + dt));
    if (!next.allFinite()) throw DivergenceError("step_linear: non-finite state", 1, t + dt);
    return detail::embed(next);
}

/// Weighted space-time norms of a trajectory. The L2L2 entries are squares
/// (time integrals of e^{2 c nu^{1/2} t} ||.||^2); w_linf_l2 is a norm.
struct SpaceTimeNorms {
    double c = 0.0;
    double w_linf_l2 = 0.0;
    double sup_time = 0.0;          // time at which the weighted sup is attained
    double unweighted_sup_time = 0.0;
    bool weight_overtakes = false;  // c > 0 moved the sup to a later time
    double w_l2_l2 = 0.0;
    double wgrad_l2_l2 = 0.0;
    double u_l2_l2 = 0.0;
    double f1_l2_l2 = 0.0;
    double f2_l2_l2 = 0.0;
    double f3_h1k_l2_l2 = 0.0;
    double f4_l2_l2 = 0.0;
    double delta_w0_l2 = 0.0;  // ||(d_y^2 - k^2) w0||
    double f3_wall_max = 0.0;  // largest |f3(+-1)| seen; nonzero is a reported violation
};

/// Trapezoid accumulation of weighted norms, fed one sample per step time.
class SpaceTimeAccumulator {
public:
    SpaceTimeAccumulator(double nu, double c) : rate_(c * std::sqrt(nu)) { n_.c = c; }

    void add(double t, const ModeNorms& m, double f1 = 0, double f2 = 0, double f3 = 0, double f4 = 0) {
        const double e = std::exp(rate_ * t);
        const double e2 = e * e;
        const std::array<double, 7> v{e2 * m.w_l2 * m.w_l2, e2 * m.w_h1k * m.w_h1k, e2 * m.u_l2 * m.u_l2,
                                      e2 * f1 * f1,         e2 * f2 * f2,           e2 * f3 * f3, e2 * f4 * f4};
        if (count_ > 0) {
            const double h = 0.5 * (t - prev_t_);
            double* out[7] = {&n_.w_l2_l2, &n_.wgrad_l2_l2, &n_.u_l2_l2, &n_.f1_l2_l2, &n_.f2_l2_l2, &n_.f3_h1k_l2_l2, &n_.f4_l2_l2};
            for (int i = 0; i < 7; ++i) *out[i] += h * (prev_[i] + v[i]);
        }
        if (count_ == 0 || e * m.w_l2 > n_.w_linf_l2) {
            n_.w_linf_l2 = e * m.w_l2;
            n_.sup_time = t;
        }
        if (count_ == 0 || m.w_l2 > unweighted_sup_) {
            unweighted_sup_ = m.w_l2;
            n_.unweighted_sup_time = t;
        }
        prev_ = v;
        prev_t_ = t;
        ++count_;
    }

    SpaceTimeNorms result() const {
        SpaceTimeNorms r = n_;
        r.weight_overtakes = r.c > 0.0 && r.sup_time > r.unweighted_sup_time;
        return r;
    }

private:
    double rate_;
    SpaceTimeNorms n_;
    std::array<double, 7> prev_{};
    double prev_t_ = 0.0;
    double unweighted_sup_ = 0.0;
    long count_ = 0;
};

struct Trajectory {
    double nu = 0.0;
    int k = 0;
    double dt = 0.0;
    int n = 0;
    std::vector<double> times;            // every step, starting at 0
    std::vector<ModeNorms> norms;         // per step, unweighted
    std::vector<double> state_times;      // subset of times with a stored state
    std::vector<ComplexProfile> states;   // full-length profiles; states[0] = w0
};

struct EvolveResult {
    Trajectory traj;
    SpaceTimeNorms norms;
};

struct EvolveOptions {
    int store_every = 0;  // keep every n-th state (0: only the first and last)
};

/// Integrate to horizon T (rounded up to a whole number of steps) and accumulate the
/// weighted space-time norms at every step.
inline EvolveResult evolve(const CnStepper& st, const ComplexProfile& w0, const ForcingSlots& slots, double T, double c,
                           const EvolveOptions& opt = {}) {
    const OperatorLk& op = st.op();
    const ChebGrid& g = op.grid();
    const int m = op.dim();
    if (w0.size() != g.n) throw InvalidArgument("evolve: profile length does not match grid");
    if (!w0.allFinite()) throw InvalidArgument("evolve: non-finite initial data");
    const double scale = std::max(1.0, w0.cwiseAbs().maxCoeff());
    if (std::abs(w0(0)) > 1e-12 * scale || std::abs(w0(g.n - 1)) > 1e-12 * scale)
        throw InvalidArgument("evolve: initial vorticity must vanish at the walls");
    if (!(c >= 0.0)) throw InvalidArgument("evolve: weight rate c must be >= 0");
    if (!(T >= 0.0)) throw InvalidArgument("evolve: horizon must be >= 0");

    const double dt = st.dt();
    const long steps = static_cast<long>(std::ceil(T / dt - 1e-9));
    const NormGrams& gr = op.grams();
    const double kk = std::abs(op.k());

    EvolveResult res;
    Trajectory& tr = res.traj;
    tr.nu = op.nu();
    tr.k = op.k();
    tr.dt = dt;
    tr.n = g.n;
    tr.times.reserve(steps + 1);
    tr.norms.reserve(steps + 1);

    SpaceTimeAccumulator acc(op.nu(), c);
    double f3_wall = 0.0;
    auto slot_norms = [&](double t, std::array<double, 4>& fn) {
        fn = {0, 0, 0, 0};
        if (slots.f1) fn[0] = l2_norm(g, slots.f1(t));
        if (slots.f2) fn[1] = l2_norm(g, slots.f2(t));
        if (slots.f3) fn[2] = h1k_norm(g, op.k(), slots.f3(t));
        if (slots.f4) fn[3] = l2_norm(g, slots.f4(t));
    };

    Eigen::VectorXcd w = w0.segment(1, m);
    ComplexProfile lap = g.d2 * w0 - kk * kk * w0;
    lap(0) = lap(g.n - 1) = 0.0;  // interior equation only; walls carry the boundary condition
    {
        std::array<double, 4> fn;
        slot_norms(0.0, fn);
        const ModeNorms mn = mode_norms(gr, w);
        acc.add(0.0, mn, fn[0], fn[1], fn[2], fn[3]);
        tr.times.push_back(0.0);
        tr.norms.push_back(mn);
        tr.state_times.push_back(0.0);
        tr.states.push_back(w0);
    }
    const bool forced = !slots.empty();
    Eigen::VectorXcd r0 = forced ? st.rhs(slots, 0.0, &f3_wall) : Eigen::VectorXcd();
    double f3_max = f3_wall;
    for (long s = 1; s <= steps; ++s) {
        const double t = s * dt;
        if (forced) {
            Eigen::VectorXcd r1 = st.rhs(slots, t, &f3_wall);
            f3_max = std::max(f3_max, f3_wall);
            w = st.step(w, r0, r1);
            r0 = std::move(r1);
        } else {
            w = st.step(w);
        }
        if (!w.allFinite()) throw DivergenceError("evolve: non-finite state", s, t);
        std::array<double, 4> fn;
        slot_norms(t, fn);
        const ModeNorms mn = mode_norms(gr, w);
        acc.add(t, mn, fn[0], fn[1], fn[2], fn[3]);
        tr.times.push_back(t);
        tr.norms.push_back(mn);
        if (s == steps || (opt.store_every > 0 && s % opt.store_every == 0)) {
            tr.state_times.push_back(t);
            tr.states.push_back(detail::embed(w));
        }
    }
    res.norms = acc.result();
    res.norms.delta_w0_l2 = l2_norm(g, lap);
    res.norms.f3_wall_max = f3_max;
    return res;
}

inline EvolveResult evolve(const OperatorLk& op, const ComplexProfile& w0, const ForcingSlots& slots, double T, double dt,
                           double c, const EvolveOptions& opt = {}) {
    return evolve(CnStepper(op, dt), w0, slots, T, c, opt);
}

struct DecayFit {
    double rate = 0.0;  // positive = decay
    double t0 = 0.0, t1 = 0.0;
    double residual = 0.0;  // rms of log-norm residuals in the window
    double max_rise = 0.0;  // largest increase of log||w|| inside the window
    bool low_confidence = false;
};

/// Least-squares slope of log||w(t)|| over [0.2 T, 0.8 T].
inline DecayFit measure_decay_rate(const Trajectory& tr) {
    if (tr.times.size() < 100) throw InvalidArgument("measure_decay_rate: need at least 100 samples");
    const double T = tr.times.back();
    DecayFit f;
    f.t0 = 0.2 * T;
    f.t1 = 0.8 * T;
    std::vector<double> x, y;
    for (size_t i = 0; i < tr.times.size(); ++i) {
        const double t = tr.times[i];
        if (t < f.t0 - 1e-12 || t > f.t1 + 1e-12) continue;
        const double v = tr.norms[i].w_l2;
        if (!(v > 0.0)) continue;
        x.push_back(t);
        y.push_back(std::log(v));
    }
    if (x.size() < 2) throw InvalidArgument("measure_decay_rate: window has fewer than 2 nonzero samples");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    const double slope = sxy / sxx;
    double ss = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - my - slope * (x[i] - mx);
        ss += r * r;
    }
    f.rate = -slope;
    f.residual = std::sqrt(ss / n);
    double lo = y[0];
    for (double v : y) {
        f.max_rise = std::max(f.max_rise, v - lo);
        lo = std::min(lo, v);
    }
    f.low_confidence = f.max_rise > 0.0 && f.max_rise > 10.0 * f.residual;
    return f;
}

/// Ratios of the weighted space-time estimate for one run.
struct SpaceTimeReport {
    double nu = 0.0;
    int k = 0;
    double c = 0.0;
    SpaceTimeNorms norms;
    std::map<std::string, double> lhs;  // amp, heat, enh, invd (squared quantities)
    std::map<std::string, double> rhs;  // data, f12, f3, f4
    double lhs_total = 0.0;
    double rhs_total = 0.0;
    std::map<std::string, double> term_ratios;  // lhs term / rhs_total
    double combined_ratio = 0.0;
    std::string f4_branch;        // which branch of min{(nu|k|)^{-1/2}, (nu k^2)^{-1}} is active
    bool violation = false;       // lhs > 0 with rhs = 0
    bool weight_guard = false;    // c nu^{1/2} >= spectral decay rate: weighted norms grow
    bool f3_boundary_violation = false;
    std::optional<SpaceTimeNorms> inhomogeneous;  // forced run with w0 = 0
    std::map<std::string, double> inhomogeneous_ratios;
    double inhomogeneous_combined = 0.0;
};

namespace detail {

inline double f4_weight(double nu, int k, std::string* branch = nullptr) {
    const double kk = std::abs(k);
    const double a = 1.0 / std::sqrt(nu * kk);
    const double b = 1.0 / (nu * kk * kk);
    if (branch) *branch = a <= b ? "(nu|k|)^-1/2" : "(nu k^2)^-1";
    return std::min(a, b);
}

inline void fill_ratios(double nu, int k, const SpaceTimeNorms& n, bool with_data, std::map<std::string, double>& lhs,
                        std::map<std::string, double>& rhs, double& lt, double& rt) {
    const double kk = std::abs(k);
    lhs = {{"amp", n.w_linf_l2 * n.w_linf_l2},
           {"heat", nu * n.wgrad_l2_l2},
           {"enh", std::sqrt(nu * kk) * n.w_l2_l2},
           {"invd", kk * n.u_l2_l2}};
    rhs = {{"data", with_data ? n.delta_w0_l2 * n.delta_w0_l2 : 0.0},
           {"f12", (n.f1_l2_l2 + n.f2_l2_l2) / nu},
           {"f3", n.f3_h1k_l2_l2 / kk},
           {"f4", f4_weight(nu, k) * n.f4_l2_l2}};
    lt = rt = 0.0;
    for (const auto& [_, v] : lhs) lt += v;
    for (const auto& [_, v] : rhs) rt += v;
}

}  // namespace detail

/// Evaluate the weighted space-time estimate on one run, and on the w0 = 0 run when forced.
inline SpaceTimeReport verify_prop41(const OperatorLk& op, const ComplexProfile& w0, const ForcingSlots& slots, double T,
                                     double dt, double c) {
    const CnStepper st(op, dt);
    SpaceTimeReport r;
    r.nu = op.nu();
    r.k = op.k();
    r.c = c;
    r.norms = evolve(st, w0, slots, T, c).norms;
    detail::f4_weight(op.nu(), op.k(), &r.f4_branch);
    detail::fill_ratios(op.nu(), op.k(), r.norms, true, r.lhs, r.rhs, r.lhs_total, r.rhs_total);
    auto ratios = [](const std::map<std::string, double>& lhs, double lt, double rt, std::map<std::string, double>& out,
                     double& combined, bool& violation) {
        out.clear();
        violation = false;
        if (rt > 0.0) {
            for (const auto& [name, v] : lhs) out[name] = v / rt;
            combined = lt / rt;
        } else {
            for (const auto& [name, v] : lhs) out[name] = v > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
            combined = lt > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
            violation = lt > 0.0;
        }
    };
    ratios(r.lhs, r.lhs_total, r.rhs_total, r.term_ratios, r.combined_ratio, r.violation);
    const auto ev = spectrum(op);
    r.weight_guard = c * std::sqrt(op.nu()) >= ev.front().real();
    r.f3_boundary_violation = r.norms.f3_wall_max > 1e-12;
    if (!slots.empty()) {
        const auto inh = evolve(st, ComplexProfile::Zero(op.grid().n), slots, T, c).norms;
        r.inhomogeneous = inh;
        std::map<std::string, double> lhs, rhs;
        double lt, rt;
        bool v;
        detail::fill_ratios(op.nu(), op.k(), inh, false, lhs, rhs, lt, rt);
        ratios(lhs, lt, rt, r.inhomogeneous_ratios, r.inhomogeneous_combined, v);
        r.violation = r.violation || v;
    }
    return r;
}

enum class PropagatorMethod { expm, cn };

/// Norm in which amplification is measured. ||w|| never grows (the transport and nonlocal
/// terms are both skew in L2 with phi(+-1) = 0); ||u|| = ||phi||_{H1_k} shows the Orr growth.
enum class GrowthNorm { vorticity, velocity };

struct TransientGrowth {
    double max_growth = 0.0;
    double t_max = 0.0;          // 0 when nothing beats the identity
    std::vector<double> growth;  // per T in the grid
    ComplexProfile optimal;      // initial vorticity attaining max_growth (first T if t_max = 0), unit in the chosen norm
};

/// Largest amplification of the homogeneous propagator over T_grid, in the quadrature
/// norm of w or of u (similarity transforms of the matrix propagator).
inline TransientGrowth transient_growth(const OperatorLk& op, const std::vector<double>& T_grid,
                                        PropagatorMethod method = PropagatorMethod::expm, double dt = 1e-3,
                                        GrowthNorm norm = GrowthNorm::vorticity) {
    if (T_grid.empty()) throw InvalidArgument("transient_growth: empty T grid");
    for (double T : T_grid)
        if (!(T > 0.0)) throw InvalidArgument("transient_growth: T values must be positive");
    const NormGrams& gr = op.grams();
    // M maps interior w to coordinates whose Euclidean norm is the chosen norm
    Eigen::MatrixXd M;
    if (norm == GrowthNorm::vorticity)
        M = gr.sqrt_w.asDiagonal();
    else
        M = gr.h1k_chol.transpose() * gr.solve_op;
    const Eigen::MatrixXd Minv = M.inverse();
    std::optional<CnStepper> st;
    Eigen::MatrixXcd one;
    if (method == PropagatorMethod::cn) {
        st.emplace(op, dt);
        one = st->propagator();
    }
    TransientGrowth out;
    out.max_growth = 1.0;  // identity at T = 0
    for (double T : T_grid) {
        Eigen::MatrixXcd P;
        if (method == PropagatorMethod::expm) {
            P = (-T * op.matrix()).exp();
        } else {
            long steps = static_cast<long>(std::llround(T / dt));
            P = Eigen::MatrixXcd::Identity(op.dim(), op.dim());
            Eigen::MatrixXcd base = one;
            while (steps > 0) {
                if (steps & 1) P = base * P;
                steps >>= 1;
                if (steps) base = base * base;
            }
        }
        if (!P.allFinite()) throw InternalError("transient_growth: propagator overflow");
        const Eigen::MatrixXcd B = M.cast<cdouble>() * P * Minv.cast<cdouble>();
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(B, Eigen::ComputeThinV);
        const double s = svd.singularValues()(0);
        out.growth.push_back(s);
        if (s > out.max_growth || out.optimal.size() == 0) {
            out.optimal = detail::embed(Minv.cast<cdouble>() * svd.matrixV().col(0));
            if (s > out.max_growth) {
                out.max_growth = s;
                out.t_max = T;
            }
        }
    }
    return out;
}

}  // namespace channel_stab
