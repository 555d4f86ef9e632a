#pragma once

// Pseudo-spectral 2-D perturbation dynamics around Poiseuille flow, x-periodic with
// period 2 pi, Navier-slip walls (w = phi = 0 at y = +-1):
//   d_t w_k + L_k w_k = i k f1_k + d_y f2_k,   f1 = -(u1 w)_k, f2 = -(u2 w)_k,
// i.e. the physical right-hand side -div(u w). The zero mode is carried as (u1)_0 with
//   d_t (u1)_0 - nu (u1)_0'' = (f2)_0,   (u1)_0'(+-1) = 0,   wbar = (u1)_0'.

#include <unsupported/Eigen/FFT>
#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <random>

#include "channel_stab/io.hpp"
#include "channel_stab/linear_evolution.hpp"

namespace channel_stab {

enum class InitFamily { random_sobolev, critical_layer, optimal_linear };

inline std::string to_string(InitFamily f) {
    switch (f) {
        case InitFamily::random_sobolev: return "random_sobolev";
        case InitFamily::critical_layer: return "critical_layer";
        case InitFamily::optimal_linear: return "optimal_linear";
    }
    return "?";
}

inline std::optional<InitFamily> parse_init_family(const std::string& s) {
    if (s == "random_sobolev") return InitFamily::random_sobolev;
    if (s == "critical_layer") return InitFamily::critical_layer;
    if (s == "optimal_linear") return InitFamily::optimal_linear;
    return std::nullopt;
}

struct SimConfig {
    double nu = 1e-3;
    int K = 32;
    int n = 128;
    double dt = 0.01;
    double T = 100.0;
    double c = 0.05;
    bool dealias = true;
    std::uint64_t seed = 1;
    InitFamily family = InitFamily::random_sobolev;
    double amplitude = 0.0;
    double sobolev_s = 3.5;
    // test seams
    bool nonlinear = true;
    Toggles toggles = Toggles::all();
    bool direct_convolution = false;
    // output sampling: time series every `record_every` steps (0: about 1000 rows),
    // snapshots every `snapshot_every` steps (0: first and last only)
    int record_every = 0;
    int snapshot_every = 0;
};

/// Modes k = 0..K of the vorticity (w_{-k} = conj(w_k) implicit) plus the zero-mode velocity.
struct ModalState {
    int K = 0;
    double time = 0.0;
    std::vector<ComplexProfile> omega;  // full-length profiles, omega[0] real
    Eigen::VectorXd u1_zero;            // (u1)_0, Neumann
};

inline ModalState zero_state(int K, int n) {
    ModalState s;
    s.K = K;
    s.omega.assign(K + 1, ComplexProfile::Zero(n));
    s.u1_zero = Eigen::VectorXd::Zero(n);
    return s;
}

/// Antiderivative of nodal values via Chebyshev coefficients, shifted to zero mean.
inline Eigen::VectorXd zero_mean_antiderivative(const ChebGrid& g, const Eigen::VectorXd& f) {
    const int N = g.n - 1;
    const ComplexProfile c = chebyshev_coefficients(g, f.cast<cdouble>());
    std::vector<double> b(N + 2, 0.0);
    auto cc = [&](int m) { return (m >= 0 && m <= N) ? c(m).real() : 0.0; };
    b[1] = cc(0) - 0.5 * cc(2);
    for (int m = 2; m <= N + 1; ++m) b[m] = (cc(m - 1) - cc(m + 1)) / (2.0 * m);
    Eigen::VectorXd F(g.n);
    for (int j = 0; j <= N; ++j) {
        const double th = kPi * j / N;
        double s = 0.0;
        for (int m = 1; m <= N + 1; ++m) s += b[m] * std::cos(m * th);
        F(j) = s;
    }
    const double mean = g.quad_weights.dot(F) / 2.0;
    return F.array() - mean;
}

struct ModeVelocity {
    ComplexProfile u1, u2, phi;
};

/// Per-(grid, K) precomputed operators for the simulation.
class SimOperators {
public:
    SimOperators(GridPtr g, int K, double nu, Toggles toggles) : grid_(std::move(g)), K_(K), nu_(nu) {
        grams_.reserve(K);
        matrices_.reserve(K);
        for (int k = 1; k <= K; ++k) {
            grams_.push_back(std::make_shared<const NormGrams>(*grid_, k));
            matrices_.push_back(detail::assemble_matrix(*grid_, *grams_.back(), nu, k, toggles));
        }
    }

    const ChebGrid& grid() const { return *grid_; }
    GridPtr grid_ptr() const { return grid_; }
    int K() const { return K_; }
    double nu() const { return nu_; }
    const NormGrams& grams(int k) const { return *grams_.at(k - 1); }
    const Eigen::MatrixXcd& matrix(int k) const { return matrices_.at(k - 1); }

    ModeVelocity velocity(int k, const ComplexProfile& w) const {
        const ChebGrid& g = *grid_;
        const int m = g.interior();
        ModeVelocity v;
        v.phi = detail::embed(grams(k).solve_op * w.segment(1, m));
        v.u1 = g.d1 * v.phi;
        v.u2 = (-I * static_cast<double>(k)) * v.phi;
        return v;
    }

private:
    GridPtr grid_;
    int K_;
    double nu_;
    std::vector<std::shared_ptr<const NormGrams>> grams_;
    std::vector<Eigen::MatrixXcd> matrices_;
};

struct StateVelocity {
    std::vector<ComplexProfile> u1, u2;  // k = 0..K
};

inline StateVelocity state_velocity(const SimOperators& ops, const ModalState& s) {
    StateVelocity v;
    const int n = ops.grid().n;
    v.u1.resize(s.K + 1);
    v.u2.resize(s.K + 1);
    v.u1[0] = s.u1_zero.cast<cdouble>();
    v.u2[0] = ComplexProfile::Zero(n);
    for (int k = 1; k <= s.K; ++k) {
        const auto mv = ops.velocity(k, s.omega[k]);
        v.u1[k] = mv.u1;
        v.u2[k] = mv.u2;
    }
    return v;
}

/// Smallest FFT length >= m whose only prime factors are 2, 3, 5.
inline int fft_size(int m) {
    for (int v = std::max(1, m);; ++v) {
        int r = v;
        for (int p : {2, 3, 5})
            while (r % p == 0) r /= p;
        if (r == 1) return v;
    }
}

/// Physical x-grid size for products: 3K+1 (alias-free for modes |k| <= K) or 2K+1.
inline int product_grid_size(int K, bool dealias) { return fft_size(dealias ? 3 * K + 1 : 2 * K + 1); }

struct NonlinearSlots {
    std::vector<ComplexProfile> f1, f2;  // k = 0..K; f1 = -(u1 w)_k, f2 = -(u2 w)_k
};

namespace detail {

inline cdouble mode_at(const std::vector<ComplexProfile>& a, int k, int j) {
    return k >= 0 ? a[k](j) : std::conj(a[-k](j));
}

}  // namespace detail

/// Direct O(K^2 n) convolution: (f)_k = -sum_l u_l w_{k-l} over |l|, |k-l| <= K.
inline NonlinearSlots nonlinear_term_direct(const ModalState& s, const StateVelocity& v) {
    const int K = s.K;
    const int n = static_cast<int>(s.omega[0].size());
    NonlinearSlots out;
    out.f1.assign(K + 1, ComplexProfile::Zero(n));
    out.f2.assign(K + 1, ComplexProfile::Zero(n));
    for (int k = 0; k <= K; ++k)
        for (int l = std::max(-K, k - K); l <= std::min(K, k + K); ++l)
            for (int j = 0; j < n; ++j) {
                const cdouble w = detail::mode_at(s.omega, k - l, j);
                out.f1[k](j) -= detail::mode_at(v.u1, l, j) * w;
                out.f2[k](j) -= detail::mode_at(v.u2, l, j) * w;
            }
    out.f1[0] = out.f1[0].real().cast<cdouble>();
    out.f2[0] = out.f2[0].real().cast<cdouble>();
    return out;
}

/// Pseudo-spectral products on an M-point x-grid per y node.
inline NonlinearSlots nonlinear_term_fft(const ModalState& s, const StateVelocity& v, int M) {
    const int K = s.K;
    const int n = static_cast<int>(s.omega[0].size());
    if (M < 2 * K + 1) throw InvalidArgument("nonlinear_term: product grid smaller than 2K+1");
    NonlinearSlots out;
    out.f1.assign(K + 1, ComplexProfile::Zero(n));
    out.f2.assign(K + 1, ComplexProfile::Zero(n));
    Eigen::FFT<double> fft;
    std::vector<cdouble> spec(M), pw(M), pu1(M), pu2(M), prod(M), back(M);
    auto to_phys = [&](const std::vector<ComplexProfile>& a, int j, std::vector<cdouble>& phys) {
        std::fill(spec.begin(), spec.end(), cdouble(0.0));
        for (int k = -K; k <= K; ++k) spec[(k + M) % M] = detail::mode_at(a, k, j);
        fft.inv(phys, spec);
        for (auto& x : phys) x *= static_cast<double>(M);  // Eigen's inverse carries 1/M
    };
    for (int j = 0; j < n; ++j) {
        to_phys(s.omega, j, pw);
        to_phys(v.u1, j, pu1);
        to_phys(v.u2, j, pu2);
        for (int i = 0; i < M; ++i) prod[i] = pu1[i] * pw[i];
        fft.fwd(back, prod);
        for (int k = 0; k <= K; ++k) out.f1[k](j) = -back[k] / static_cast<double>(M);
        for (int i = 0; i < M; ++i) prod[i] = pu2[i] * pw[i];
        fft.fwd(back, prod);
        for (int k = 0; k <= K; ++k) out.f2[k](j) = -back[k] / static_cast<double>(M);
    }
    out.f1[0] = out.f1[0].real().cast<cdouble>();
    out.f2[0] = out.f2[0].real().cast<cdouble>();
    return out;
}

/// Nonlinear slots of a state; dealiased FFT path or the direct convolution oracle.
inline NonlinearSlots nonlinear_term(const SimOperators& ops, const ModalState& s, bool direct = false, bool dealias = true) {
    const StateVelocity v = state_velocity(ops, s);
    return direct ? nonlinear_term_direct(s, v) : nonlinear_term_fft(s, v, product_grid_size(s.K, dealias));
}

/// Real physical vorticity samples w(x_i, y_j) on an M-point x-grid (n x M, complex so
/// the imaginary residue can be checked).
inline Eigen::MatrixXcd physical_vorticity(const ModalState& s, int M) {
    const int n = static_cast<int>(s.omega[0].size());
    Eigen::MatrixXcd out(n, M);
    Eigen::FFT<double> fft;
    std::vector<cdouble> spec(M), phys(M);
    for (int j = 0; j < n; ++j) {
        std::fill(spec.begin(), spec.end(), cdouble(0.0));
        for (int k = -s.K; k <= s.K; ++k) spec[(k + M) % M] += detail::mode_at(s.omega, k, j);
        fft.inv(phys, spec);
        for (int i = 0; i < M; ++i) out(j, i) = phys[i] * static_cast<double>(M);
    }
    return out;
}

/// sqrt(sum_{|k|<=K} (1+k^2)^s sum_m (1+m^2)^s (|c_m(u1_k)|^2 + |c_m(u2_k)|^2)), c_m Chebyshev coefficients.
inline double sobolev_proxy(const SimOperators& ops, const ModalState& st, double s) {
    if (!(s >= 0.0)) throw InvalidArgument("sobolev_proxy: s must be >= 0");
    const ChebGrid& g = ops.grid();
    auto hs = [&](const ComplexProfile& f) {
        const ComplexProfile c = chebyshev_coefficients(g, f);
        double t = 0.0;
        for (int m = 0; m < c.size(); ++m) t += std::pow(1.0 + double(m) * m, s) * std::norm(c(m));
        return t;
    };
    double total = hs(st.u1_zero.cast<cdouble>());
    for (int k = 1; k <= st.K; ++k) {
        const auto v = ops.velocity(k, st.omega[k]);
        total += 2.0 * std::pow(1.0 + double(k) * k, s) * (hs(v.u1) + hs(v.u2));
    }
    return std::sqrt(total);
}

/// Neumann Crank-Nicolson stepper for the zero-mode velocity.
class ZeroModeStepper {
public:
    ZeroModeStepper(const ChebGrid& g, double nu, double dt) : g_(&g), dt_(dt) {
        const int n = g.n;
        explicit_ = Eigen::MatrixXd::Identity(n, n) + (0.5 * dt * nu) * g.d2;
        Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - (0.5 * dt * nu) * g.d2;
        a.row(0) = g.d1.row(0);
        a.row(n - 1) = g.d1.row(n - 1);
        lu_.compute(a);
    }

    /// Advance (u1)_0 one step with the forcing extrapolation g_mid (already AB2-combined).
    Eigen::VectorXd step(const Eigen::VectorXd& u1, const Eigen::VectorXd& g_mid) const {
        Eigen::VectorXd rhs = explicit_ * u1 + dt_ * g_mid;
        rhs(0) = rhs(rhs.size() - 1) = 0.0;
        return lu_.solve(rhs);
    }

    /// wbar = (u1)_0' with the wall values set to their boundary-condition value 0.
    Eigen::VectorXd vorticity(const Eigen::VectorXd& u1) const {
        Eigen::VectorXd w = g_->d1 * u1;
        w(0) = w(w.size() - 1) = 0.0;
        return w;
    }

private:
    const ChebGrid* g_;
    double dt_;
    Eigen::MatrixXd explicit_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

/// One zero-mode step with forcing (f2)_0 held at its current value. Returns the new wbar
/// and updates u1 in place.
inline Eigen::VectorXd zero_mode_step(const ChebGrid& g, Eigen::VectorXd& u1, double dt, double nu,
                                      const Eigen::VectorXd& f2_zero) {
    const ZeroModeStepper z(g, nu, dt);
    u1 = z.step(u1, f2_zero);
    return z.vorticity(u1);
}

struct EnergyParts {
    double amp = 0.0, heat = 0.0, enh = 0.0, invd = 0.0, E = 0.0;
};

struct EnergyBreakdown {
    std::vector<EnergyParts> modes;  // k = 0..K; modes[0].E = E_0 = ||wbar||_{L^inf L^2}
    double total = 0.0;              // sum over k in Z: E_0 + 2 sum_{k>=1} E_k
};

/// Online accumulation of the energy functional E_k (and the weighted forcing norms
/// used by the bootstrap check), one call per step time.
class EnergyAccumulator {
public:
    EnergyAccumulator(const SimOperators& ops, double c) : ops_(&ops), c_(c) {
        for (int k = 1; k <= ops.K(); ++k) acc_.emplace_back(ops.nu(), c);
        f1_.assign(ops.K() + 1, 0.0);
        f2_.assign(ops.K() + 1, 0.0);
        prev_f1_.assign(ops.K() + 1, 0.0);
        prev_f2_.assign(ops.K() + 1, 0.0);
    }

    void add(const ModalState& s, const NonlinearSlots* f = nullptr) {
        const ChebGrid& g = ops_->grid();
        const int m = g.interior();
        zero_sup_ = std::max(zero_sup_, l2_norm(g, s.omega[0]));
        for (int k = 1; k <= s.K; ++k) acc_[k - 1].add(s.time, mode_norms(ops_->grams(k), s.omega[k].segment(1, m)));
        if (f) {
            const double e2 = std::exp(2.0 * c_ * std::sqrt(ops_->nu()) * s.time);
            std::vector<double> a(s.K + 1), b(s.K + 1);
            for (int k = 0; k <= s.K; ++k) {
                a[k] = e2 * std::pow(l2_norm(g, f->f1[k]), 2);
                b[k] = e2 * std::pow(l2_norm(g, f->f2[k]), 2);
            }
            if (f_count_ > 0) {
                const double h = 0.5 * (s.time - prev_t_);
                for (int k = 0; k <= s.K; ++k) {
                    f1_[k] += h * (prev_f1_[k] + a[k]);
                    f2_[k] += h * (prev_f2_[k] + b[k]);
                }
            }
            prev_f1_ = a;
            prev_f2_ = b;
            prev_t_ = s.time;
            ++f_count_;
        }
    }

    EnergyBreakdown result() const {
        EnergyBreakdown e;
        e.modes.resize(acc_.size() + 1);
        e.modes[0].amp = zero_sup_;
        e.modes[0].E = zero_sup_;
        e.total = zero_sup_;
        const double nu = ops_->nu();
        for (size_t i = 0; i < acc_.size(); ++i) {
            const double k = static_cast<double>(i + 1);
            const SpaceTimeNorms n = acc_[i].result();
            EnergyParts& p = e.modes[i + 1];
            p.amp = n.w_linf_l2;
            p.heat = std::sqrt(nu) * k * std::sqrt(n.w_l2_l2);
            p.enh = std::pow(nu * k, 0.25) * std::sqrt(n.w_l2_l2);
            p.invd = std::sqrt(k) * std::sqrt(n.u_l2_l2);
            p.E = p.amp + p.heat + p.enh + p.invd;
            e.total += 2.0 * p.E;
        }
        return e;
    }

    /// Weighted L2L2 squares of f1_k, f2_k (trapezoid over the add() calls that carried slots).
    const std::vector<double>& f1_l2_l2() const { return f1_; }
    const std::vector<double>& f2_l2_l2() const { return f2_; }
    std::vector<SpaceTimeNorms> mode_norms_raw() const {
        std::vector<SpaceTimeNorms> out;
        for (const auto& a : acc_) out.push_back(a.result());
        return out;
    }

private:
    const SimOperators* ops_;
    double c_;
    std::vector<SpaceTimeAccumulator> acc_;
    double zero_sup_ = 0.0;
    std::vector<double> f1_, f2_, prev_f1_, prev_f2_;
    double prev_t_ = 0.0;
    long f_count_ = 0;
};

/// Time stepper: Crank-Nicolson on L_k (diffusion, transport, nonlocal), AB2 (Euler start)
/// on the nonlinear slots; Neumann CN for the zero-mode velocity.
class Simulator {
public:
    explicit Simulator(const SimConfig& cfg)
        : cfg_(cfg), ops_(make_grid(cfg.n), cfg.K, cfg.nu, cfg.toggles), zero_(ops_.grid(), cfg.nu, cfg.dt),
          M_(product_grid_size(cfg.K, cfg.dealias)) {
        validate(cfg);
        const int m = ops_.grid().interior();
        for (int k = 1; k <= cfg.K; ++k) {
            const Eigen::MatrixXcd half = (0.5 * cfg.dt) * ops_.matrix(k);
            explicit_.push_back(Eigen::MatrixXcd::Identity(m, m) - half);
            lu_.emplace_back(Eigen::MatrixXcd::Identity(m, m) + half);
        }
    }

    static void validate(const SimConfig& c) {
        if (!(c.nu >= 0.0)) throw InvalidArgument("SimConfig: nu must be >= 0");
        if (c.K < 1) throw InvalidArgument("SimConfig: K must be >= 1");
        if (c.n < 8) throw InvalidArgument("SimConfig: n must be >= 8");
        if (!(c.dt > 0.0)) throw InvalidArgument("SimConfig: dt must be positive");
        if (!(c.T >= 0.0)) throw InvalidArgument("SimConfig: T must be >= 0");
        if (!(c.c >= 0.0)) throw InvalidArgument("SimConfig: c must be >= 0");
        if (!(c.amplitude >= 0.0)) throw InvalidArgument("SimConfig: amplitude must be >= 0");
        if (!(c.sobolev_s >= 0.0)) throw InvalidArgument("SimConfig: sobolev_s must be >= 0");
        if (c.nu > 0.0 && c.dt > 0.1 / std::sqrt(c.nu)) throw InvalidArgument("SimConfig: dt exceeds 0.1 nu^{-1/2}");
    }

    const SimConfig& config() const { return cfg_; }
    const SimOperators& ops() const { return ops_; }
    int product_grid() const { return M_; }

    /// Largest admissible dt for a state: advection in x and y plus the nu cap.
    double max_dt(const StateVelocity& v) const {
        const int n = ops_.grid().n;
        double U = 0.0, V = 0.0;
        for (int j = 0; j < n; ++j) {
            double a = std::abs(v.u1[0](j)), b = 0.0;
            for (int k = 1; k <= cfg_.K; ++k) {
                a += 2.0 * std::abs(v.u1[k](j));
                b += 2.0 * std::abs(v.u2[k](j));
            }
            U = std::max(U, a);
            V = std::max(V, b);
        }
        double lim = 0.5 / (cfg_.K * (1.0 + U));
        if (V > 0.0) lim = std::min(lim, 2.0 / (V * n * n));
        if (cfg_.nu > 0.0) lim = std::min(lim, 0.1 / std::sqrt(cfg_.nu));
        return lim;
    }

    NonlinearSlots slots(const ModalState& s, const StateVelocity& v) const {
        return cfg_.direct_convolution ? nonlinear_term_direct(s, v) : nonlinear_term_fft(s, v, M_);
    }

    /// Advance one step. `f` must be the slots of `s` (returned by a previous call or computed
    /// fresh); on return it holds the slots of the new state when `refresh` is set.
    void step(ModalState& s, const StateVelocity& v, const NonlinearSlots& f, long step_index) {
        const ChebGrid& g = ops_.grid();
        const int m = g.interior();
        const double lim = max_dt(v);
        if (cfg_.dt > lim * (1.0 + 1e-12))
            throw InvalidArgument("step_nonlinear: dt = " + io::num(cfg_.dt) + " violates the CFL bound " + io::num(lim) +
                                  " at t = " + io::num(s.time));
        const bool nl = cfg_.nonlinear;
        std::vector<Eigen::VectorXcd> N(cfg_.K + 1);
        Eigen::VectorXd G = Eigen::VectorXd::Zero(g.n);
        if (nl) {
            for (int k = 1; k <= cfg_.K; ++k)
                N[k] = ((I * static_cast<double>(k)) * f.f1[k] + g.d1 * f.f2[k]).segment(1, m);
            G = f.f2[0].real();
        }
        const bool first = prev_.empty();
        for (int k = 1; k <= cfg_.K; ++k) {
            Eigen::VectorXcd rhs = explicit_[k - 1] * s.omega[k].segment(1, m);
            if (nl) rhs += first ? Eigen::VectorXcd(cfg_.dt * N[k]) : Eigen::VectorXcd(cfg_.dt * (1.5 * N[k] - 0.5 * prev_[k]));
            s.omega[k].segment(1, m) = lu_[k - 1].solve(rhs);
            if (!s.omega[k].allFinite())
                throw DivergenceError("step_nonlinear: non-finite mode k = " + std::to_string(k), step_index, s.time + cfg_.dt);
        }
        const Eigen::VectorXd gmid = (!nl || first) ? G : Eigen::VectorXd(1.5 * G - 0.5 * prev_zero_);
        s.u1_zero = zero_.step(s.u1_zero, gmid);
        if (!s.u1_zero.allFinite()) throw DivergenceError("step_nonlinear: non-finite zero mode", step_index, s.time + cfg_.dt);
        s.omega[0] = zero_.vorticity(s.u1_zero).cast<cdouble>();
        if (nl) {
            prev_ = std::move(N);
            prev_zero_ = G;
        }
        s.time += cfg_.dt;
    }

    /// Convenience single step that computes velocity and slots itself.
    void step(ModalState& s, long step_index = 1) {
        const auto v = state_velocity(ops_, s);
        step(s, v, slots(s, v), step_index);
    }

    void reset_history() {
        prev_.clear();
        prev_zero_.resize(0);
    }

private:
    SimConfig cfg_;
    SimOperators ops_;
    ZeroModeStepper zero_;
    int M_;
    std::vector<Eigen::MatrixXcd> explicit_;
    std::vector<Eigen::PartialPivLU<Eigen::MatrixXcd>> lu_;
    std::vector<Eigen::VectorXcd> prev_;
    Eigen::VectorXd prev_zero_;
};

/// Initial data of the requested family, rescaled so that sobolev_proxy(s) equals the amplitude.
inline ModalState init_state(const SimOperators& ops, const SimConfig& cfg) {
    const ChebGrid& g = ops.grid();
    const int K = cfg.K;
    ModalState st = zero_state(K, g.n);
    if (cfg.amplitude == 0.0) return st;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.0, 2.0 * kPi);
    auto sm = [](int m, double y) { return std::sin(m * kPi * (y + 1.0) / 2.0); };
    switch (cfg.family) {
        case InitFamily::random_sobolev: {
            const int My = std::max(4, std::min(24, g.n / 4));
            for (int k = 0; k <= K; ++k) {
                std::vector<cdouble> a(My + 1);
                for (int m = 1; m <= My; ++m) {
                    const double decay = std::pow(1.0 + double(k) * k + double(m) * m, -(cfg.sobolev_s + 1.0) / 2.0);
                    const double re = N(rng), im = N(rng);
                    a[m] = cdouble(re, k == 0 ? 0.0 : im) * decay;
                }
                st.omega[k] = sample(g, [&](double y) {
                    cdouble s = 0.0;
                    for (int m = 1; m <= My; ++m) s += a[m] * sm(m, y);
                    return s;
                });
                if (k == 0) {
                    // (u1)_0 = int wbar, zero mean: the cosines have zero mean on [-1, 1]
                    for (int j = 0; j < g.n; ++j) {
                        double u = 0.0;
                        for (int m = 1; m <= My; ++m) u -= a[m].real() * 2.0 / (m * kPi) * std::cos(m * kPi * (g.nodes(j) + 1.0) / 2.0);
                        st.u1_zero(j) = u;
                    }
                }
            }
            break;
        }
        case InitFamily::critical_layer: {
            const double yc = std::sqrt(0.5);
            for (int k = 1; k <= std::min(K, 3); ++k) {
                const double w = std::pow(std::max(cfg.nu, 1e-12) / k, 0.25);
                const cdouble phase = std::polar(1.0, U(rng)) / double(k * k);
                st.omega[k] = sample(g, [&](double y) {
                    return phase * (1.0 - y * y) *
                           (std::exp(-0.5 * std::pow((y - yc) / w, 2)) + std::exp(-0.5 * std::pow((y + yc) / w, 2)));
                });
            }
            break;
        }
        case InitFamily::optimal_linear: {
            if (!(cfg.nu > 0.0)) throw InvalidArgument("init_state: optimal_linear needs nu > 0");
            const auto op = assemble(ops.grid_ptr(), cfg.nu, 1);
            const auto tg = transient_growth(op, {1, 2, 5, 10, 20, 50}, PropagatorMethod::expm, 0.0, GrowthNorm::velocity);
            st.omega[1] = std::polar(1.0, U(rng)) * tg.optimal;
            break;
        }
    }
    for (auto& w : st.omega) w(0) = w(g.n - 1) = 0.0;
    const double p = sobolev_proxy(ops, st, cfg.sobolev_s);
    if (!(p > 0.0)) throw InternalError("init_state: zero proxy norm for nonzero amplitude");
    const double scale = cfg.amplitude / p;
    for (auto& w : st.omega) w *= scale;
    st.u1_zero *= scale;
    return st;
}

inline ModalState init_state(const SimConfig& cfg) {
    const SimOperators ops(make_grid(cfg.n), cfg.K, cfg.nu, cfg.toggles);
    return init_state(ops, cfg);
}

/// sum over k != 0 (both signs) of ||w_k||^2.
inline double nonzero_energy(const ChebGrid& g, const ModalState& s) {
    double e = 0.0;
    for (int k = 1; k <= s.K; ++k) e += 2.0 * std::pow(l2_norm(g, s.omega[k]), 2);
    return e;
}

enum class Outcome { Stable, Transitioned, Inconclusive };

inline std::string to_string(Outcome o) {
    switch (o) {
        case Outcome::Stable: return "Stable";
        case Outcome::Transitioned: return "Transitioned";
        case Outcome::Inconclusive: return "Inconclusive";
    }
    return "?";
}

inline std::optional<Outcome> parse_outcome(const std::string& s) {
    if (s == "Stable") return Outcome::Stable;
    if (s == "Transitioned") return Outcome::Transitioned;
    if (s == "Inconclusive") return Outcome::Inconclusive;
    return std::nullopt;
}

struct SeriesRow {
    double t = 0.0;
    double energy = 0.0;  // sum_{k != 0} ||w_k||^2
    double proxy = 0.0;
    std::vector<EnergyParts> parts;  // k = 1..min(K, 8), cumulative up to t
};

struct RunRecord {
    SimConfig config;
    int product_grid = 0;
    double initial_energy = 0.0;       // sum_{k != 0} ||w_k(0)||^2
    double initial_zero_energy = 0.0;  // ||wbar(0)||^2
    double final_energy = 0.0;
    double sup_energy = 0.0;
    double sup_time = 0.0;
    double end_time = 0.0;
    double initial_proxy = 0.0;
    bool diverged = false;
    std::string divergence_reason;
    std::vector<double> delta_w0;  // k = 0: ||wbar_0||; k >= 1: ||Delta_k w_{0,k}||
    EnergyBreakdown energy;
    std::vector<double> f1_l2_l2, f2_l2_l2;  // weighted forcing norms (squares) per k
    std::vector<SeriesRow> series;
    std::vector<io::Snapshot> snapshots;  // modes k = 0..K
};

/// Stable / Transitioned / Inconclusive from the nonzero-mode energy history.
inline Outcome classify_outcome(const RunRecord& r) {
    if (r.diverged) return Outcome::Transitioned;
    const double e0 = r.initial_energy;
    if (e0 == 0.0) {
        // zero-mode-only data: k != 0 modes can only pick up roundoff
        return r.sup_energy <= 1e-20 * r.initial_zero_energy ? Outcome::Stable : Outcome::Transitioned;
    }
    if (r.sup_energy > 1e2 * e0) return Outcome::Transitioned;
    if (r.final_energy <= 1e-2 * e0 && r.sup_energy <= 10.0 * e0) return Outcome::Stable;
    return Outcome::Inconclusive;
}

/// Run a simulation to T. Divergence (non-finite values or a CFL violation after t = 0)
/// ends the run and is recorded, not thrown.
inline RunRecord simulate(const SimConfig& cfg, const ModalState* initial = nullptr) {
    Simulator sim(cfg);
    const SimOperators& ops = sim.ops();
    const ChebGrid& g = ops.grid();
    ModalState s = initial ? *initial : init_state(ops, cfg);
    if (s.K != cfg.K || static_cast<int>(s.omega.size()) != cfg.K + 1) throw InvalidArgument("simulate: state K mismatch");
    for (const auto& w : s.omega)
        if (w.size() != g.n || std::abs(w(0)) != 0.0 || std::abs(w(g.n - 1)) != 0.0)
            throw InvalidArgument("simulate: initial vorticity must vanish at the walls");
    const long steps = static_cast<long>(std::ceil(cfg.T / cfg.dt - 1e-9));
    const int rec_every = cfg.record_every > 0 ? cfg.record_every : static_cast<int>(std::max(1L, steps / 1000));

    RunRecord r;
    r.config = cfg;
    r.product_grid = sim.product_grid();
    r.delta_w0.resize(cfg.K + 1);
    r.delta_w0[0] = l2_norm(g, s.omega[0]);
    for (int k = 1; k <= cfg.K; ++k) {
        ComplexProfile lap = g.d2 * s.omega[k] - double(k) * k * s.omega[k];
        lap(0) = lap(g.n - 1) = 0.0;
        r.delta_w0[k] = l2_norm(g, lap);
    }
    r.initial_energy = r.sup_energy = nonzero_energy(g, s);
    r.initial_zero_energy = std::pow(l2_norm(g, s.omega[0]), 2);
    const double blowup_ref = std::max(r.initial_energy, r.initial_zero_energy);
    r.initial_proxy = sobolev_proxy(ops, s, cfg.sobolev_s);

    EnergyAccumulator acc(ops, cfg.c);
    auto snapshot = [&](const ModalState& st) {
        io::Snapshot snap;
        snap.time = st.time;
        snap.modes = st.omega;
        r.snapshots.push_back(std::move(snap));
    };
    auto record = [&](const ModalState& st, double proxy) {
        SeriesRow row;
        row.t = st.time;
        row.energy = nonzero_energy(g, st);
        row.proxy = proxy;
        const auto e = acc.result();
        for (int k = 1; k <= std::min(cfg.K, 8); ++k) row.parts.push_back(e.modes[k]);
        r.series.push_back(std::move(row));
    };

    StateVelocity v = state_velocity(ops, s);
    NonlinearSlots f = sim.slots(s, v);
    acc.add(s, &f);
    record(s, r.initial_proxy);
    snapshot(s);
    long done = 0;
    for (long i = 1; i <= steps; ++i) {
        try {
            sim.step(s, v, f, i);
        } catch (const DivergenceError& e) {
            r.diverged = true;
            r.divergence_reason = e.what();
            break;
        } catch (const InvalidArgument& e) {
            if (i == 1) throw;  // configuration error, not dynamics
            r.diverged = true;
            r.divergence_reason = e.what();
            break;
        }
        v = state_velocity(ops, s);
        f = sim.slots(s, v);
        acc.add(s, &f);
        done = i;
        const double e = nonzero_energy(g, s);
        if (!std::isfinite(e)) {
            r.diverged = true;
            r.divergence_reason = "non-finite energy";
            break;
        }
        if (e > r.sup_energy) {
            r.sup_energy = e;
            r.sup_time = s.time;
        }
        if (i % rec_every == 0 || i == steps) record(s, sobolev_proxy(ops, s, cfg.sobolev_s));
        if (i == steps || (cfg.snapshot_every > 0 && i % cfg.snapshot_every == 0)) snapshot(s);
        if (blowup_ref > 0.0 && e > 1e8 * blowup_ref) {
            r.diverged = true;
            r.divergence_reason = "energy grew by more than 1e8";
            break;
        }
    }
    r.end_time = done * cfg.dt;
    r.final_energy = r.diverged ? std::numeric_limits<double>::infinity() : nonzero_energy(g, s);
    r.energy = acc.result();
    r.f1_l2_l2 = acc.f1_l2_l2();
    r.f2_l2_l2 = acc.f2_l2_l2();
    return r;
}

// ---------------------------------------------------------------------------
// Bootstrap diagnostics

struct ArithmeticCheck {
    long cases = 0;
    long failures = 0;      // exact rational comparison; must be 0
    long ties = 0;          // nu k^3 = 1 exactly: both sides equal
    long float_flips = 0;   // double evaluation disagrees with the exact verdict
};

using Rational = boost::multiprecision::cpp_rational;

/// Exact value of a decimal literal such as "1e-3" or "2.5e-4".
inline Rational parse_decimal(const std::string& text) {
    std::string s = text;
    long exp10 = 0;
    const auto e = s.find_first_of("eE");
    if (e != std::string::npos) {
        const std::string es = s.substr(e + 1);
        size_t used = 0;
        try {
            exp10 = std::stol(es, &used);
        } catch (const std::exception&) {
            used = std::string::npos;
        }
        if (used != es.size()) throw InvalidArgument("parse_decimal: bad exponent: " + text);
        s = s.substr(0, e);
    }
    bool neg = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
        neg = s[0] == '-';
        s = s.substr(1);
    }
    const auto dot = s.find('.');
    std::string digits = s;
    if (dot != std::string::npos) {
        exp10 -= static_cast<long>(s.size() - dot - 1);
        digits = s.substr(0, dot) + s.substr(dot + 1);
    }
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
        throw InvalidArgument("parse_decimal: not a decimal number: " + text);
    boost::multiprecision::cpp_int num(digits), pow10 = 1;
    for (long i = 0; i < std::abs(exp10); ++i) pow10 *= 10;
    Rational r = exp10 >= 0 ? Rational(num * pow10) : Rational(num, pow10);
    return neg ? Rational(-r) : r;
}

/// |k| min{(nu|k|)^{-1/4}, (nu k^2)^{-1/2}} <= nu^{-3/8} |k|^{3/8}, compared exactly through
/// 8th powers: min{k^6 / nu^2, 1 / nu^4} <= k^3 / nu^3.
inline ArithmeticCheck check_bootstrap_arithmetic(const std::vector<std::string>& nus, const std::vector<int>& ks) {
    ArithmeticCheck out;
    for (const auto& ns : nus) {
        const Rational nu = parse_decimal(ns);
        if (nu <= 0) throw InvalidArgument("check_bootstrap_arithmetic: nu must be positive");
        const double nud = std::stod(ns);
        for (int k0 : ks) {
            if (k0 == 0) throw InvalidArgument("check_bootstrap_arithmetic: k must be nonzero");
            const Rational k = std::abs(k0);
            const Rational nu2 = nu * nu, nu3 = nu2 * nu, nu4 = nu2 * nu2, k3 = k * k * k;
            const Rational a = k3 * k3 / nu2, b = 1 / nu4, rhs = k3 / nu3;
            const Rational lhs = a < b ? a : b;
            const bool ok = lhs <= rhs;
            ++out.cases;
            if (!ok) ++out.failures;
            if (lhs == rhs) ++out.ties;
            const double kd = std::abs(k0);
            const double fl = kd * std::min(std::pow(nud * kd, -0.25), std::pow(nud * kd * kd, -0.5));
            const double fr = std::pow(nud, -0.375) * std::pow(kd, 0.375);
            if ((fl <= fr) != ok) ++out.float_flips;
        }
    }
    return out;
}

/// Default sweep grid: nu in {1, 2, 5} x 10^{-4..-2} and 1e-1, k = 1..64.
inline std::pair<std::vector<std::string>, std::vector<int>> bootstrap_arithmetic_grid() {
    std::vector<std::string> nus;
    for (int d = -4; d <= -2; ++d)
        for (int m : {1, 2, 5}) nus.push_back(std::to_string(m) + "e" + std::to_string(d));
    nus.push_back("1e-1");
    std::vector<int> ks;
    for (int k = 1; k <= 64; ++k) ks.push_back(k);
    return {nus, ks};
}

struct BootstrapReport {
    std::vector<double> ratio;               // k = 0..K: E_k / (data + nu^{-p} sum E_l E_{k-l})
    std::vector<double> ratio_intermediate;  // k >= 1: E_k / (||Delta_k w0|| + nu^{-3/8}|k|^{3/8}||f1|| + nu^{-1/2}||f2||)
    double max_ratio = 0.0;
    double max_ratio_intermediate = 0.0;
    double threshold = 1e3;
    bool satisfied = true;
    ArithmeticCheck arithmetic;
};

/// Per-mode bootstrap ratios of a completed run, plus the exact exponent arithmetic.
inline BootstrapReport verify_bootstrap(const RunRecord& r) {
    const int K = r.config.K;
    const double nu = r.config.nu;
    const auto& E = r.energy.modes;
    if (static_cast<int>(E.size()) != K + 1) throw InvalidArgument("verify_bootstrap: run has no energy breakdown");
    auto Ek = [&](int k) { return std::abs(k) <= K ? E[std::abs(k)].E : 0.0; };
    BootstrapReport b;
    b.ratio.assign(K + 1, 0.0);
    b.ratio_intermediate.assign(K + 1, 0.0);
    auto ratio = [](double lhs, double rhs) {
        if (rhs > 0.0) return lhs / rhs;
        return lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    };
    {
        double conv = 0.0;
        for (int l = 1; l <= K; ++l) conv += 2.0 * Ek(l) * Ek(-l);
        b.ratio[0] = ratio(Ek(0), r.delta_w0[0] + conv / std::sqrt(nu));
    }
    for (int k = 1; k <= K; ++k) {
        double conv = 0.0;
        for (int l = std::max(-K, k - K); l <= std::min(K, k + K); ++l) conv += Ek(l) * Ek(k - l);
        b.ratio[k] = ratio(Ek(k), r.delta_w0[k] + std::pow(nu, -2.0 / 3.0) * conv);
        const double inter = r.delta_w0[k] + std::pow(nu, -0.375) * std::pow(k, 0.375) * std::sqrt(r.f1_l2_l2[k]) +
                             std::sqrt(r.f2_l2_l2[k] / nu);
        b.ratio_intermediate[k] = ratio(Ek(k), inter);
    }
    for (int k = 0; k <= K; ++k) {
        b.max_ratio = std::max(b.max_ratio, b.ratio[k]);
        b.max_ratio_intermediate = std::max(b.max_ratio_intermediate, b.ratio_intermediate[k]);
    }
    b.satisfied = b.max_ratio < b.threshold && b.max_ratio_intermediate < b.threshold;
    const auto [nus, ks] = bootstrap_arithmetic_grid();
    b.arithmetic = check_bootstrap_arithmetic(nus, ks);
    return b;
}

}  // namespace channel_stab
