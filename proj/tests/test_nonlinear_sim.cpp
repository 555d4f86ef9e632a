#include <gtest/gtest.h>

#include "channel_stab/nonlinear_sim.hpp"

using namespace channel_stab;

namespace {

SimConfig small_config(double amp = 1e-3, int K = 6, int n = 32) {
    SimConfig c;
    c.nu = 1e-2;
    c.K = K;
    c.n = n;
    c.dt = 0.01;
    c.T = 0.2;
    c.amplitude = amp;
    c.seed = 7;
    return c;
}

double max_abs_diff(const ModalState& a, const ModalState& b) {
    double d = std::abs(a.u1_zero.size() ? (a.u1_zero - b.u1_zero).cwiseAbs().maxCoeff() : 0.0);
    for (size_t k = 0; k < a.omega.size(); ++k) d = std::max(d, (a.omega[k] - b.omega[k]).cwiseAbs().maxCoeff());
    return d;
}

double max_abs(const ModalState& a) {
    double d = a.u1_zero.cwiseAbs().maxCoeff();
    for (const auto& w : a.omega) d = std::max(d, w.cwiseAbs().maxCoeff());
    return d;
}

// Chebyshev coefficients by solving the Vandermonde system T_m(y_j) c_m = f_j.
Eigen::VectorXcd vandermonde_coefficients(const ChebGrid& g, const ComplexProfile& f) {
    Eigen::MatrixXd V(g.n, g.n);
    for (int j = 0; j < g.n; ++j)
        for (int m = 0; m < g.n; ++m) V(j, m) = std::cos(m * std::acos(std::clamp(g.nodes(j), -1.0, 1.0)));
    return V.cast<cdouble>().partialPivLu().solve(f);
}

}  // namespace

TEST(InitState, ZeroAmplitudeIsZeroState) {
    auto c = small_config(0.0);
    const auto s = init_state(c);
    EXPECT_EQ(max_abs(s), 0.0);
    const auto r = simulate(c);
    EXPECT_EQ(r.sup_energy, 0.0);
    EXPECT_EQ(r.energy.total, 0.0);
    EXPECT_EQ(classify_outcome(r), Outcome::Stable);
}

TEST(InitState, SeedDeterminism) {
    auto c = small_config();
    const auto a = init_state(c), b = init_state(c);
    EXPECT_EQ(max_abs_diff(a, b), 0.0);
    c.seed = 8;
    EXPECT_GT(max_abs_diff(a, init_state(c)), 0.0);
}

TEST(InitState, ProxyEqualsAmplitudeForEveryFamily) {
    for (auto fam : {InitFamily::random_sobolev, InitFamily::critical_layer, InitFamily::optimal_linear}) {
        auto c = small_config(3e-4);
        c.family = fam;
        const SimOperators ops(make_grid(c.n), c.K, c.nu, c.toggles);
        const auto s = init_state(ops, c);
        EXPECT_NEAR(sobolev_proxy(ops, s, c.sobolev_s), c.amplitude, 1e-10 * c.amplitude) << to_string(fam);
        for (const auto& w : s.omega) {
            EXPECT_EQ(std::abs(w(0)), 0.0);
            EXPECT_EQ(std::abs(w(c.n - 1)), 0.0);
        }
        EXPECT_EQ(s.omega[0].imag().cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(InitState, ZeroModeVelocityIsZeroMeanAntiderivative) {
    auto c = small_config();
    const SimOperators ops(make_grid(c.n), c.K, c.nu, c.toggles);
    const auto s = init_state(ops, c);
    const ChebGrid& g = ops.grid();
    const Eigen::VectorXd u = zero_mean_antiderivative(g, s.omega[0].real());
    EXPECT_LT((u - s.u1_zero).cwiseAbs().maxCoeff(), 1e-10 * s.u1_zero.cwiseAbs().maxCoeff());
    EXPECT_LT(std::abs(g.quad_weights.dot(s.u1_zero)), 1e-14);
}

TEST(SobolevProxy, SZeroIsCoefficientL2Sum) {
    const auto c = small_config();
    const SimOperators ops(make_grid(c.n), c.K, c.nu, c.toggles);
    auto s = zero_state(c.K, c.n);
    const ChebGrid& g = ops.grid();
    s.omega[2] = sample(g, [](double y) { return cdouble(1.0 - y * y, 0.5 * y * (1.0 - y * y)); });
    const auto v = ops.velocity(2, s.omega[2]);
    const double oracle = 2.0 * (vandermonde_coefficients(g, v.u1).squaredNorm() + vandermonde_coefficients(g, v.u2).squaredNorm());
    EXPECT_NEAR(sobolev_proxy(ops, s, 0.0), std::sqrt(oracle), 1e-11 * std::sqrt(oracle));
    double prev = 0.0;
    for (double sv : {0.0, 0.5, 1.0, 2.0, 3.5, 5.0}) {
        const double p = sobolev_proxy(ops, s, sv);
        EXPECT_GT(p, prev);
        prev = p;
    }
    EXPECT_THROW(sobolev_proxy(ops, s, -1.0), InvalidArgument);
}

TEST(NonlinearTerm, FftMatchesDirectConvolution) {
    auto c = small_config(1e-2, 8, 24);
    const SimOperators ops(make_grid(c.n), c.K, c.nu, c.toggles);
    const auto s = init_state(ops, c);
    const auto v = state_velocity(ops, s);
    const auto d = nonlinear_term_direct(s, v);
    const auto f = nonlinear_term_fft(s, v, product_grid_size(c.K, true));
    const auto a = nonlinear_term_fft(s, v, product_grid_size(c.K, false));
    double scale = 0.0, err = 0.0, alias = 0.0;
    for (int k = 0; k <= c.K; ++k) {
        scale = std::max({scale, d.f1[k].cwiseAbs().maxCoeff(), d.f2[k].cwiseAbs().maxCoeff()});
        err = std::max({err, (d.f1[k] - f.f1[k]).cwiseAbs().maxCoeff(), (d.f2[k] - f.f2[k]).cwiseAbs().maxCoeff()});
        alias = std::max(alias, (d.f1[k] - a.f1[k]).cwiseAbs().maxCoeff());
    }
    EXPECT_GT(scale, 0.0);
    EXPECT_LT(err, 1e-12 * scale);
    EXPECT_GT(alias, 1e-6 * scale);  // 2K+1 points alias the top products back
    EXPECT_EQ(product_grid_size(32, true), 100);
    EXPECT_GE(product_grid_size(10, true), 31);
}

TEST(NonlinearTerm, ZeroModeAloneDrivesOnlyItself) {
    const auto c = small_config();
    const SimOperators ops(make_grid(c.n), c.K, c.nu, c.toggles);
    const ChebGrid& g = ops.grid();
    auto s = zero_state(c.K, c.n);
    s.u1_zero = sample(g, [](double y) { return cdouble(std::cos(kPi * (y + 1.0) / 2.0)); }).real();
    s.omega[0] = (g.d1 * s.u1_zero).cast<cdouble>();
    s.omega[0](0) = s.omega[0](c.n - 1) = 0.0;
    const auto f = nonlinear_term(ops, s);
    const double scale = f.f1[0].cwiseAbs().maxCoeff();
    EXPECT_GT(scale, 0.0);
    EXPECT_EQ(f.f2[0].cwiseAbs().maxCoeff(), 0.0);
    for (int k = 1; k <= c.K; ++k) {
        EXPECT_LT(f.f1[k].cwiseAbs().maxCoeff(), 1e-15 * scale);
        EXPECT_EQ(f.f2[k].cwiseAbs().maxCoeff(), 0.0);
    }
    const auto d = nonlinear_term(ops, s, true);
    for (int k = 1; k <= c.K; ++k) EXPECT_EQ(d.f1[k].cwiseAbs().maxCoeff(), 0.0);
}

TEST(ZeroMode, NeumannCosineDecaysAtHeatRate) {
    const double nu = 1e-2, dt = 1e-3;
    const auto g = build_grid(32);
    for (int m : {1, 2}) {
        const double a = m * kPi / 2.0;
        Eigen::VectorXd u = sample(g, [&](double y) { return cdouble(std::cos(a * (y + 1.0))); }).real();
        const Eigen::VectorXd u0 = u;
        const ZeroModeStepper z(g, nu, dt);
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(g.n);
        for (int i = 0; i < 1000; ++i) u = z.step(u, zero);
        const double expect = std::exp(-nu * a * a);
        EXPECT_NEAR(u.norm() / u0.norm(), expect, 1e-6);
        EXPECT_NEAR(g.quad_weights.dot(u), g.quad_weights.dot(u0), 1e-10);
    }
    Eigen::VectorXd one = Eigen::VectorXd::Ones(g.n);
    const Eigen::VectorXd w = zero_mode_step(g, one, dt, nu, Eigen::VectorXd::Zero(g.n));
    EXPECT_LT((one.array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_LT(w.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Simulate, LinearSeamMatchesLinearEvolution) {
    auto c = small_config(1e-3, 4, 32);
    c.nonlinear = false;
    c.T = 1.0;
    c.c = 0.1;
    const SimOperators ops(make_grid(c.n), c.K, c.nu, c.toggles);
    const auto s0 = init_state(ops, c);
    const auto r = simulate(c, &s0);
    ASSERT_FALSE(r.diverged);
    for (int k = 1; k <= c.K; ++k) {
        const auto op = assemble(ops.grid_ptr(), c.nu, k);
        const auto lin = evolve(op, s0.omega[k], {}, c.T, c.dt, c.c);
        const auto& n = lin.norms;
        const auto& p = r.energy.modes[k];
        const double kd = k;
        EXPECT_NEAR(p.amp, n.w_linf_l2, 1e-10 * n.w_linf_l2);
        EXPECT_NEAR(p.heat, std::sqrt(c.nu) * kd * std::sqrt(n.w_l2_l2), 1e-10 * p.heat);
        EXPECT_NEAR(p.enh, std::pow(c.nu * kd, 0.25) * std::sqrt(n.w_l2_l2), 1e-10 * p.enh);
        EXPECT_NEAR(p.invd, std::sqrt(kd) * std::sqrt(n.u_l2_l2), 1e-10 * p.invd);
        const auto& last = r.snapshots.back().modes[k];
        EXPECT_LT((last - lin.traj.states.back()).cwiseAbs().maxCoeff(), 1e-12 * s0.omega[k].cwiseAbs().maxCoeff());
    }
}

TEST(Simulate, SmallAmplitudeApproachesLinearQuadratically) {
    auto base = small_config(0.0, 8, 32);
    base.nu = 1e-3;
    base.T = 10.0;
    base.dt = 0.02;
    auto run = [&](double A, bool nl) {
        auto c = base;
        c.amplitude = A;
        c.nonlinear = nl;
        return simulate(c).snapshots.back();
    };
    auto diff = [](const io::Snapshot& a, const io::Snapshot& b) {
        double d = 0.0;
        for (size_t k = 0; k < a.modes.size(); ++k) d = std::max(d, (a.modes[k] - b.modes[k]).cwiseAbs().maxCoeff());
        return d;
    };
    auto size = [](const io::Snapshot& a) {
        double d = 0.0;
        for (const auto& m : a.modes) d = std::max(d, m.cwiseAbs().maxCoeff());
        return d;
    };
    const auto l8 = run(1e-8, false), n8 = run(1e-8, true);
    EXPECT_LT(diff(l8, n8), 1e-4 * size(l8));
    const double d6 = diff(run(1e-6, false), run(1e-6, true));
    const double d7 = diff(run(1e-7, false), run(1e-7, true));
    EXPECT_NEAR(d6 / d7, 100.0, 30.0);
}

TEST(Simulate, RealityAndWallValues) {
    auto c = small_config(5e-3);
    c.T = 0.5;
    const auto r = simulate(c);
    ASSERT_FALSE(r.diverged);
    ModalState s = zero_state(c.K, c.n);
    s.omega = r.snapshots.back().modes;
    const auto phys = physical_vorticity(s, product_grid_size(c.K, true));
    EXPECT_LT(phys.imag().cwiseAbs().maxCoeff(), 1e-12 * phys.real().cwiseAbs().maxCoeff());
    for (const auto& w : s.omega) {
        EXPECT_EQ(std::abs(w(0)), 0.0);
        EXPECT_EQ(std::abs(w(c.n - 1)), 0.0);
    }
    EXPECT_EQ(s.omega[0].imag().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Simulate, InviscidRunConservesEnstrophy) {
    auto c = small_config(5e-2, 6, 48);
    c.nu = 0.0;
    c.dt = 2e-3;
    c.T = 0.5;
    c.toggles = Toggles::all();
    c.toggles.diffusion = false;
    const SimOperators ops(make_grid(c.n), c.K, c.nu, c.toggles);
    Simulator sim(c);
    auto s = init_state(ops, c);
    const ChebGrid& g = ops.grid();
    auto enstrophy = [&](const ModalState& st) { return std::pow(l2_norm(g, st.omega[0]), 2) + nonzero_energy(g, st); };
    const double e0 = enstrophy(s);
    for (int i = 1; i <= 250; ++i) sim.step(s, i);
    EXPECT_NEAR(enstrophy(s) / e0, 1.0, 1e-3);
}

TEST(Simulate, WeightedEnergyIsMonotoneInC) {
    auto c = small_config(1e-3);
    c.T = 1.0;
    c.c = 0.0;
    const auto r0 = simulate(c);
    c.c = 0.2;
    const auto r1 = simulate(c);
    for (int k = 1; k <= c.K; ++k) EXPECT_LE(r0.energy.modes[k].E, r1.energy.modes[k].E);
    EXPECT_LE(r0.energy.total, r1.energy.total);
    EXPECT_NEAR(r0.energy.total, r0.energy.modes[0].E + 2.0 * [&] {
        double s = 0.0;
        for (int k = 1; k <= c.K; ++k) s += r0.energy.modes[k].E;
        return s;
    }(), 1e-12 * r0.energy.total);
}

TEST(Simulate, CflViolationRejected) {
    auto c = small_config(1e-3, 32, 32);
    c.dt = 0.05;  // 0.5 / K = 0.0156
    EXPECT_THROW(simulate(c), InvalidArgument);
    c.dt = -1.0;
    EXPECT_THROW(Simulator{c}, InvalidArgument);
}

TEST(Bootstrap, ArithmeticIsExact) {
    const auto [nus, ks] = bootstrap_arithmetic_grid();
    const auto a = check_bootstrap_arithmetic(nus, ks);
    EXPECT_EQ(a.cases, static_cast<long>(nus.size() * ks.size()));
    EXPECT_EQ(a.failures, 0);
    EXPECT_GE(a.ties, 1);  // nu = 1e-3, k = 10
    const auto tie = check_bootstrap_arithmetic({"1e-3"}, {10});
    EXPECT_EQ(tie.ties, 1);
    EXPECT_EQ(parse_decimal("2.5e-4"), Rational(1, 4000));
    EXPECT_EQ(parse_decimal("125"), Rational(125));
    EXPECT_THROW(parse_decimal("1e-3x"), InvalidArgument);
    EXPECT_THROW(parse_decimal("1.2.3"), InvalidArgument);
}

TEST(Bootstrap, ZeroRunAndSmallRun) {
    auto c = small_config(0.0);
    const auto z = verify_bootstrap(simulate(c));
    EXPECT_TRUE(z.satisfied);
    EXPECT_EQ(z.max_ratio, 0.0);
    c.amplitude = 1e-4;
    c.T = 1.0;
    const auto b = verify_bootstrap(simulate(c));
    EXPECT_TRUE(b.satisfied);
    EXPECT_LT(b.max_ratio, 1e3);
    EXPECT_GT(b.max_ratio, 0.0);
}

TEST(Classify, SyntheticRecords) {
    RunRecord r;
    r.initial_energy = 1.0;
    r.sup_energy = 1.0;
    r.final_energy = 1e-3;
    EXPECT_EQ(classify_outcome(r), Outcome::Stable);
    r.final_energy = 0.5;
    EXPECT_EQ(classify_outcome(r), Outcome::Inconclusive);
    r.sup_energy = 1e3;
    EXPECT_EQ(classify_outcome(r), Outcome::Transitioned);
    r.sup_energy = 20.0;
    r.final_energy = 1e-3;
    EXPECT_EQ(classify_outcome(r), Outcome::Inconclusive);
    r.sup_energy = 1.0;
    r.diverged = true;
    EXPECT_EQ(classify_outcome(r), Outcome::Transitioned);
    for (auto o : {Outcome::Stable, Outcome::Transitioned, Outcome::Inconclusive}) EXPECT_EQ(parse_outcome(to_string(o)), o);
}

TEST(Classify, SmallLinearRunDecaysToStable) {
    auto c = small_config(1e-8, 4, 32);
    c.nu = 1e-2;
    c.dt = 0.05;
    c.T = 60.0;
    const auto r = simulate(c);
    EXPECT_EQ(classify_outcome(r), Outcome::Stable) << r.final_energy / r.initial_energy;
}

TEST(Simulate, ZeroModeOnlyEvolvesAsHeat) {
    auto c = small_config(0.0, 4, 32);
    c.T = 1.0;
    const SimOperators ops(make_grid(c.n), c.K, c.nu, c.toggles);
    const ChebGrid& g = ops.grid();
    auto s = zero_state(c.K, c.n);
    auto mode = [](double y) { return std::sin(kPi * (y + 1.0) / 2.0); };
    s.u1_zero = sample(g, [](double y) { return cdouble(-2.0 / kPi * std::cos(kPi * (y + 1.0) / 2.0)); }).real();
    s.omega[0] = sample(g, [&](double y) { return cdouble(mode(y)); });
    s.omega[0](0) = s.omega[0](c.n - 1) = 0.0;
    const auto r = simulate(c, &s);
    const double decay = std::exp(-c.nu * kPi * kPi / 4.0 * c.T);
    const ComplexProfile exact = decay * sample(g, [&](double y) { return cdouble(mode(y)); });
    ComplexProfile got = r.snapshots.back().modes[0];
    got(0) = exact(0), got(c.n - 1) = exact(c.n - 1);  // walls pinned to 0, sin(.) is ~1e-16 there
    EXPECT_LT((got - exact).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT(r.sup_energy, 1e-30);  // FFT roundoff only
    EXPECT_FALSE(r.diverged);
    EXPECT_EQ(classify_outcome(r), Outcome::Stable);
}

TEST(Simulate, InviscidTransportOnlyConservesEachMode) {
    auto c = small_config(1e-2, 6, 32);
    c.nu = 0.0;
    c.nonlinear = false;
    c.toggles = Toggles::none();
    c.toggles.transport = true;
    c.T = 1.0;
    const SimOperators ops(make_grid(c.n), c.K, c.nu, c.toggles);
    const auto s0 = init_state(ops, c);
    const auto r = simulate(c, &s0);
    for (int k = 1; k <= c.K; ++k) {
        const double a = l2_norm(ops.grid(), s0.omega[k]), b = l2_norm(ops.grid(), r.snapshots.back().modes[k]);
        EXPECT_NEAR(b / a, 1.0, 1e-12) << k;
    }
}

TEST(Bootstrap, StableRunRatioSelfConverges) {
    auto c = small_config(0.0, 8, 48);
    c.nu = 1e-3;
    c.amplitude = 0.01 * std::pow(c.nu, 2.0 / 3.0);
    c.T = 20.0;
    c.dt = 0.02;
    c.record_every = 100;
    const double coarse = verify_bootstrap(simulate(c)).max_ratio;
    c.n = 64;
    c.dt = 0.01;
    const auto fine = verify_bootstrap(simulate(c));
    EXPECT_LT(fine.max_ratio, fine.threshold);
    EXPECT_NEAR(coarse / fine.max_ratio, 1.0, 0.5);
}

// -div(u w) assembled from the slots equals -u.grad(w) evaluated pointwise on a fine x-grid.
TEST(NonlinearTerm, SlotsMatchAdvectiveFormInPhysicalSpace) {
    auto c = small_config(1e-2, 5, 64);  // y-aliasing of the product: 5e-8 at n=32
    const SimOperators ops(make_grid(c.n), c.K, c.nu, c.toggles);
    const ChebGrid& g = ops.grid();
    const auto s = init_state(ops, c);
    const auto v = state_velocity(ops, s);
    const auto f = nonlinear_term_direct(s, v);
    const int M = 64;
    auto phys = [&](const std::vector<ComplexProfile>& a, int j, double x) {
        double r = a[0](j).real();
        for (int k = 1; k <= c.K; ++k) r += 2.0 * (a[k](j) * std::exp(I * (k * x))).real();
        return r;
    };
    std::vector<ComplexProfile> wx(c.K + 1), wy(c.K + 1), rhs(c.K + 1);
    for (int k = 0; k <= c.K; ++k) {
        wx[k] = (I * double(k)) * s.omega[k];
        wy[k] = g.d1 * s.omega[k];
    }
    // rhs of the k-th slot pair, projected back onto modes by the same x-quadrature
    double err = 0.0, scale = 0.0;
    for (int j = 1; j < g.n - 1; ++j)
        for (int k = 0; k <= c.K; ++k) {
            cdouble adv = 0.0;
            for (int i = 0; i < M; ++i) {
                const double x = 2.0 * kPi * i / M;
                const double a = -(phys(v.u1, j, x) * phys(wx, j, x) + phys(v.u2, j, x) * phys(wy, j, x));
                adv += a * std::exp(-I * (k * x)) / double(M);
            }
            const cdouble slot = (I * double(k)) * f.f1[k](j) + (g.d1 * f.f2[k])(j);
            err = std::max(err, std::abs(adv - slot));
            scale = std::max(scale, std::abs(slot));
        }
    EXPECT_GT(scale, 0.0);
    EXPECT_LT(err, 1e-9 * scale);
}
