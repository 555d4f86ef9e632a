#pragma once

// Chebyshev collocation calculus on y in [-1, 1].
//
// Nodes are Chebyshev-Gauss-Lobatto points ordered from +1 down to -1. All
// operators that act on profiles vanishing at both walls work on the interior
// block (indices 1..n-2); the wall values are identically zero and never stored
// in those systems.

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <string>

#include "channel_stab/errors.hpp"

namespace channel_stab {

using cdouble = std::complex<double>;
using ComplexProfile = Eigen::VectorXcd;
using RealProfile = Eigen::VectorXd;

inline constexpr cdouble I{0.0, 1.0};
inline constexpr double kPi = std::numbers::pi;

struct ChebGrid {
    int n = 0;
    Eigen::VectorXd nodes;
    Eigen::MatrixXd d1;
    Eigen::MatrixXd d2;
    Eigen::VectorXd quad_weights;

    int interior() const { return n - 2; }

    /// Interior block of d2 (Dirichlet rows/columns removed).
    Eigen::MatrixXd d2_interior() const { return d2.block(1, 1, n - 2, n - 2); }
    /// Columns of d1 acting on interior values: derivative of a profile that vanishes at the walls.
    Eigen::MatrixXd d1_from_interior() const { return d1.middleCols(1, n - 2); }
    Eigen::VectorXd interior_weights() const { return quad_weights.segment(1, n - 2); }
};

using GridPtr = std::shared_ptr<const ChebGrid>;

namespace detail {

inline Eigen::VectorXd clenshaw_curtis_weights(int n) {
    const int N = n - 1;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(N - 1);
    auto theta = [N](int j) { return kPi * j / N; };
    if (N % 2 == 0) {
        w(0) = w(N) = 1.0 / (static_cast<double>(N) * N - 1.0);
        for (int k = 1; k < N / 2; ++k)
            for (int j = 1; j < N; ++j) v(j - 1) -= 2.0 * std::cos(2.0 * k * theta(j)) / (4.0 * k * k - 1.0);
        for (int j = 1; j < N; ++j) v(j - 1) -= std::cos(N * theta(j)) / (static_cast<double>(N) * N - 1.0);
    } else {
        w(0) = w(N) = 1.0 / (static_cast<double>(N) * N);
        for (int k = 1; k <= (N - 1) / 2; ++k)
            for (int j = 1; j < N; ++j) v(j - 1) -= 2.0 * std::cos(2.0 * k * theta(j)) / (4.0 * k * k - 1.0);
    }
    w.segment(1, N - 1) = 2.0 * v / N;
    return w;
}

}  // namespace detail

/// Chebyshev-Gauss-Lobatto grid with n points, first/second differentiation
/// matrices and Clenshaw-Curtis weights.
inline ChebGrid build_grid(int n) {
    if (n < 8) throw InvalidArgument("build_grid: n must be >= 8, got " + std::to_string(n));
    const int N = n - 1;
    ChebGrid g;
    g.n = n;
    g.nodes.resize(n);
    // sin form keeps the node set exactly antisymmetric about y = 0
    for (int j = 0; j < n; ++j) g.nodes(j) = std::sin(kPi * (N - 2.0 * j) / (2.0 * N));
    g.nodes(0) = 1.0;
    g.nodes(N) = -1.0;

    g.d1 = Eigen::MatrixXd::Zero(n, n);
    auto c = [N](int j) { return (j == 0 || j == N) ? 2.0 : 1.0; };
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            // x_i - x_j via the product formula avoids cancellation near the walls
            const double diff = -2.0 * std::sin(kPi * (i + j) / (2.0 * N)) * std::sin(kPi * (i - j) / (2.0 * N));
            const double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
            g.d1(i, j) = c(i) / c(j) * sign / diff;
        }
    }
    // negative-sum trick: rows annihilate constants to rounding
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) s += g.d1(i, j);
        g.d1(i, i) = -s;
    }
    g.d2 = g.d1 * g.d1;
    g.quad_weights = detail::clenshaw_curtis_weights(n);
    return g;
}

inline GridPtr make_grid(int n) { return std::make_shared<const ChebGrid>(build_grid(n)); }

/// Evaluate a callable at every node.
template <class F>
ComplexProfile sample(const ChebGrid& g, F&& f) {
    ComplexProfile out(g.n);
    for (int j = 0; j < g.n; ++j) out(j) = cdouble(f(g.nodes(j)));
    return out;
}

/// Weighted inner product <f, g> = integral of f * conj(g).
inline cdouble inner(const ChebGrid& g, const ComplexProfile& f, const ComplexProfile& h) {
    cdouble s = 0.0;
    for (int j = 0; j < g.n; ++j) s += g.quad_weights(j) * f(j) * std::conj(h(j));
    return s;
}

inline double l2_norm(const ChebGrid& g, const ComplexProfile& f) {
    return std::sqrt((g.quad_weights.array() * f.array().abs2()).sum());
}

/// Interior Helmholtz operator d2 - k^2 with homogeneous Dirichlet conditions,
/// factorized once. Equivalent to replacing the boundary rows by identity rows.
class Helmholtz {
public:
    Helmholtz(const ChebGrid& g, int k) : n_(g.n), k_(k) {
        Eigen::MatrixXd a = g.d2_interior();
        a.diagonal().array() -= static_cast<double>(k) * k;
        lu_.compute(a);
        if (!(lu_.rcond() > 1e-15)) throw InternalError("Helmholtz: singular interior system");
    }

    int k() const { return k_; }

    /// phi on interior nodes from rhs on interior nodes.
    template <class Derived>
    auto solve_interior(const Eigen::MatrixBase<Derived>& rhs) const {
        return lu_.solve(rhs);
    }

    /// Full-length solve: (d2 - k^2) phi = rhs at interior nodes, phi(+-1) = 0.
    ComplexProfile solve(const ComplexProfile& rhs) const {
        ComplexProfile phi = ComplexProfile::Zero(n_);
        const Eigen::VectorXd re = rhs.segment(1, n_ - 2).real();
        const Eigen::VectorXd im = rhs.segment(1, n_ - 2).imag();
        Eigen::VectorXd pr = lu_.solve(re);
        Eigen::VectorXd pi = lu_.solve(im);
        for (int j = 0; j < n_ - 2; ++j) phi(j + 1) = cdouble(pr(j), pi(j));
        return phi;
    }

    /// Explicit interior inverse (d2 - k^2)^{-1}.
    Eigen::MatrixXd inverse() const { return lu_.inverse(); }

private:
    int n_;
    int k_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

inline ComplexProfile solve_helmholtz(const ChebGrid& g, int k, const ComplexProfile& rhs) {
    if (rhs.size() != g.n) throw InvalidArgument("solve_helmholtz: profile length does not match grid");
    if (!rhs.allFinite()) throw InvalidArgument("solve_helmholtz: non-finite right-hand side");
    return Helmholtz(g, k).solve(rhs);
}

/// Barycentric evaluation of the nodal interpolant at an arbitrary y in [-1, 1].
inline cdouble interpolate(const ChebGrid& g, const ComplexProfile& f, double y) {
    cdouble num = 0.0;
    double den = 0.0;
    for (int j = 0; j < g.n; ++j) {
        const double d = y - g.nodes(j);
        if (d == 0.0) return f(j);
        double w = (j % 2 == 0) ? 1.0 : -1.0;
        if (j == 0 || j == g.n - 1) w *= 0.5;
        num += w / d * f(j);
        den += w / d;
    }
    return num / den;
}

/// integral of |f| over (-1, 1) for the nodal interpolant. |f| has kinks at the zeros of
/// f, where fixed-node quadrature only converges algebraically; each inter-node interval is
/// integrated adaptively so refinement stays local to the kinks.
/// Intervals whose end values sit at rounding level of max|f| get a single rule: their relative
/// error estimate is noise and would otherwise force full-depth refinement.
inline double l1_norm(const ChebGrid& g, const ComplexProfile& f) {
    const double fmax = f.cwiseAbs().maxCoeff();
    if (fmax == 0.0) return 0.0;
    auto integrand = [&](double y) { return std::abs(interpolate(g, f, y)); };
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    double total = 0.0;
    for (int j = 0; j + 1 < g.n; ++j) {
        const double a = g.nodes(j + 1), b = g.nodes(j);
        const double edge = std::max(std::abs(f(j + 1)), std::abs(f(j)));
        // |f| has a kink only at an interior zero of f, which shows up as a phase flip between the
        // end values; a zero sitting exactly on a node (the walls) leaves |f| smooth
        const bool kink = std::real(f(j + 1) * std::conj(f(j))) < 0.0;
        const int depth = (edge < 1e-10 * fmax || !kink) ? 0 : 12;
        total += GK::integrate(integrand, a, b, depth, 1e-12);
    }
    return total;
}

/// ||(d_y, |k|) f||_{L2}.
inline double h1k_norm(const ChebGrid& g, int k, const ComplexProfile& f) {
    const double dl2 = l2_norm(g, g.d1 * f);
    const double l2 = l2_norm(g, f);
    return std::sqrt(dl2 * dl2 + static_cast<double>(k) * k * l2 * l2);
}

/// (-d2 + k^2) G = f, G(+-1) = 0  =>  ||f||_{H^-1_k} = ||G||_{H1_k} (= Re <f, G>^{1/2} in the
/// continuum). The H1_k form stays consistent with the Gram matrices at grid scale.
inline double hm1k_norm(const ChebGrid& g, int k, const ComplexProfile& f) {
    if (k == 0) throw InvalidArgument("hm1k_norm: H^{-1}_k requires k != 0");
    return h1k_norm(g, k, solve_helmholtz(g, k, f));
}

struct NormBundle {
    double l2 = 0.0;
    double l1 = 0.0;
    double linf = 0.0;
    double h1k = 0.0;
    double hm1k = 0.0;
};

/// L2, L1, Linf, H1_k = ||(d_y, |k|) f|| and the dual norm H^{-1}_k.
/// k = 0 is accepted only when the dual norm is not requested.
inline NormBundle compute_norms(const ChebGrid& g, int k, const ComplexProfile& f, bool with_dual = true) {
    if (f.size() != g.n) throw InvalidArgument("compute_norms: profile length does not match grid");
    if (with_dual && k == 0) throw InvalidArgument("compute_norms: H^{-1}_k requires k != 0");
    NormBundle nb;
    const Eigen::ArrayXd mod = f.array().abs();
    nb.l2 = std::sqrt((g.quad_weights.array() * mod.square()).sum());
    nb.l1 = l1_norm(g, f);
    nb.linf = mod.size() ? mod.maxCoeff() : 0.0;
    nb.h1k = h1k_norm(g, k, f);
    if (with_dual) nb.hm1k = hm1k_norm(g, k, f);
    return nb;
}

struct Velocity {
    ComplexProfile u1;
    ComplexProfile u2;
};

/// u = (d_y phi, -i k phi) with (d_y^2 - k^2) phi = omega, phi(+-1) = 0.
inline Velocity velocity_from_vorticity(const ChebGrid& g, int k, const ComplexProfile& omega) {
    if (k == 0) throw InvalidArgument("velocity_from_vorticity: k = 0 belongs to the zero-mode path");
    const ComplexProfile phi = solve_helmholtz(g, k, omega);
    return {g.d1 * phi, -I * static_cast<double>(k) * phi};
}

/// ||u||_{L2} of a velocity pair.
inline double velocity_l2(const ChebGrid& g, const Velocity& u) {
    const double a = l2_norm(g, u.u1);
    const double b = l2_norm(g, u.u2);
    return std::sqrt(a * a + b * b);
}

/// max over nodes of |u(y)|.
inline double velocity_linf(const Velocity& u) {
    return (u.u1.array().abs2() + u.u2.array().abs2()).sqrt().maxCoeff();
}

/// Chebyshev expansion coefficients of nodal values (f = sum c_m T_m).
inline ComplexProfile chebyshev_coefficients(const ChebGrid& g, const ComplexProfile& f) {
    const int N = g.n - 1;
    ComplexProfile c(g.n);
    for (int m = 0; m <= N; ++m) {
        cdouble s = 0.0;
        for (int j = 0; j <= N; ++j) {
            const double h = (j == 0 || j == N) ? 0.5 : 1.0;
            s += h * f(j) * std::cos(kPi * static_cast<double>(j) * m / N);
        }
        const double hm = (m == 0 || m == N) ? 0.5 : 1.0;
        c(m) = 2.0 / N * hm * s;
    }
    return c;
}

}  // namespace channel_stab
