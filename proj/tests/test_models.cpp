#include <gtest/gtest.h>

#include <cmath>

#include "phobs/models.hpp"
#include "phobs/sim.hpp"
#include "support.hpp"

using namespace phobs;
using phobs::testing::Gen;

// ============================================================================
// Timoshenko beam
// ============================================================================

TEST(Beam, DimensionsAndGridStep) {
    const auto sys = build_timoshenko(5, BeamParams{});
    EXPECT_EQ(sys.n(), 20);
    EXPECT_EQ(sys.m(), 4);
    EXPECT_DOUBLE_EQ(BeamStateLayout(5, BeamParams{}).h, 2.0 / 11.0);
}

TEST(Beam, DifferenceOperatorsForTwoElements) {
    const double h = BeamStateLayout(2, BeamParams{}).h;
    const auto op = beam_operators(2, h);
    EXPECT_TRUE(op.D.isApprox(Matrix{{1, 0}, {-1, 1}} / (h * h)));
    EXPECT_TRUE(op.F.isApprox(Matrix{{1, 0}, {1, 1}} / (2 * h)));
}

TEST(Beam, RejectsTooCoarseGridAndBadParameters) {
    EXPECT_THROW(build_timoshenko(1, BeamParams{}), ValidationError);
    BeamParams p;
    p.EI = 0.0;
    EXPECT_THROW(build_timoshenko(5, p), ValidationError);
    p = BeamParams{};
    p.b = p.a;
    EXPECT_THROW(build_timoshenko(5, p), ValidationError);
}

TEST(Beam, BoundaryInputEntries) {
    const int nd = 5;
    const auto sys = build_timoshenko(nd, BeamParams{});
    const double h = BeamStateLayout(nd, BeamParams{}).h;
    const Matrix& B = sys.B();
    EXPECT_DOUBLE_EQ(B(0, 0), -1.0 / h);
    EXPECT_DOUBLE_EQ(B(0, 1), -0.5);
    EXPECT_DOUBLE_EQ(B(2 * nd - 1, 2), 1.0 / h);
    EXPECT_DOUBLE_EQ(B(2 * nd, 1), -1.0 / h);
    EXPECT_DOUBLE_EQ(B(4 * nd - 1, 2), 0.5);
    EXPECT_DOUBLE_EQ(B(4 * nd - 1, 3), 1.0 / h);
    EXPECT_EQ((B.array() != 0.0).count(), 6);
}

TEST(Beam, EnergyMatrixScaling) {
    BeamParams p;
    p.T = 2.0;
    p.rho = 4.0;
    p.EI = 3.0;
    p.Irho = 5.0;
    const auto sys = build_timoshenko(3, p);
    const double h = BeamStateLayout(3, p).h;
    const Vector q = sys.Q().diagonal();
    EXPECT_DOUBLE_EQ(q(0), h * 2.0);
    EXPECT_DOUBLE_EQ(q(3), h / 4.0);
    EXPECT_DOUBLE_EQ(q(6), h * 3.0);
    EXPECT_DOUBLE_EQ(q(9), h / 5.0);
}

TEST(BeamProperty, SkewInterconnectionAndStateDimension) {
    for (int nd = 2; nd <= 40; nd += 3) {
        const auto sys = build_timoshenko(nd, BeamParams{});
        EXPECT_EQ(sys.n(), 4 * nd);
        EXPECT_LE(max_abs(sys.J() + sys.J().transpose()), 1e-14);
        EXPECT_TRUE(validate_ph(sys, Tolerances{}).pass());
    }
}

TEST(BeamInitialState, ProfilesAndLinearity) {
    const BeamParams p;
    const BeamStateLayout lay(5, p);
    const Vector x = beam_initial_state(5, p, 0.01);
    for (int i = 0; i < 5; ++i) {
        EXPECT_DOUBLE_EQ(x(lay.offset(0) + i), 0.01);
        EXPECT_DOUBLE_EQ(x(lay.offset(1) + i), 0.0);
        EXPECT_NEAR(x(lay.offset(2) + i), -0.01 * ((i + 0.5) * lay.h - 1.0), 1e-15);
        EXPECT_DOUBLE_EQ(x(lay.offset(3) + i), 0.0);
    }
    EXPECT_TRUE(beam_initial_state(5, p, 0.0).isZero(0.0));
    EXPECT_TRUE(beam_initial_state(5, p, 0.02).isApprox(2.0 * x, 1e-15));
}

TEST(BeamDeflection, ZeroStateAndConstantShear) {
    const BeamStateLayout lay(8, BeamParams{});
    const auto d0 = reconstruct_deflection(Vector::Zero(lay.n()), lay);
    for (double w : d0.w) EXPECT_EQ(w, 0.0);
    Vector x = Vector::Zero(lay.n());
    x.segment(lay.offset(0), 8).setConstant(0.3);
    const auto d = reconstruct_deflection(x, lay);
    ASSERT_EQ(d.zeta.size(), 10u);
    EXPECT_EQ(d.zeta.front(), 0.0);
    EXPECT_NEAR(d.zeta.back(), 1.0, 1e-15);
    for (std::size_t i = 0; i < d.w.size(); ++i) EXPECT_NEAR(d.w[i], 0.3 * d.zeta[i], 1e-14);
    EXPECT_THROW(reconstruct_deflection(Vector::Zero(3), lay), DimensionError);
}

TEST(BeamDeflection, StaticTipDeflectionConvergesUnderRefinement) {
    const BeamParams p;
    const double w100 = tip_deflection(beam_initial_state(100, p, 0.01), BeamStateLayout(100, p));
    const double w200 = tip_deflection(beam_initial_state(200, p, 0.01), BeamStateLayout(200, p));
    EXPECT_GT(w100, 0.0);
    EXPECT_NEAR(w100, w200, 0.01 * w200);
    // Cantilever under tip load F: w(b) = F L / T + F L^3 / (3 EI).
    EXPECT_NEAR(w200, 0.01 + 0.01 / 3.0, 1e-6);
}

// ============================================================================
// MEMS
// ============================================================================

namespace {

Vector random_mems_state(Gen& g, const MemsParams& p) {
    return Vector{{g.uniform(-0.5, 0.9) * p.qmax, g.uniform(-1e-9, 1e-9), g.uniform(-1e-10, 1e-10)}};
}

}  // namespace

TEST(MemsGradient, OriginIsAtRest) {
    const auto g = mems_gradH(MemsParams{}, Vector::Zero(3));
    EXPECT_TRUE(g.grad.isZero(0.0));
    EXPECT_EQ(g.H, 0.0);
}

TEST(MemsGradientProperty, MatchesCentralDifferences) {
    const MemsParams p;
    Gen g(21);
    for (int trial = 0; trial < 100; ++trial) {
        const Vector x = random_mems_state(g, p);
        const Vector grad = mems_gradH(p, x).grad;
        for (int i = 0; i < 3; ++i) {
            const double h = 1e-6 * std::max(std::abs(x(i)), i == 0 ? 1e-8 : (i == 1 ? 1e-12 : 1e-13));
            Vector xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            const double fd = (mems_hamiltonian(p, xp) - mems_hamiltonian(p, xm)) / (2 * h);
            const double scale = std::max(std::abs(grad(i)), 1e-12 * grad.cwiseAbs().maxCoeff());
            EXPECT_LE(std::abs(fd - grad(i)), 1e-5 * scale + 1e-18) << "trial " << trial << " component " << i;
        }
    }
}

TEST(MemsGradient, DomainGuard) {
    const MemsParams p;
    EXPECT_THROW(mems_gradH(p, Vector{{p.qmax, 0, 1e-11}}), DomainError);
    EXPECT_THROW(mems_gradH(p, Vector{{2 * p.qmax, 0, 0}}), DomainError);
    EXPECT_THROW(mems_dynamics(p, Vector{{p.qmax, 0, 0}}, 0.0), DomainError);
    EXPECT_THROW(mems_equilibrium(p, p.qmax), DomainError);
}

TEST(MemsEquilibrium, ReferenceValues) {
    const MemsParams p;
    const auto eq = mems_equilibrium(p, 0.5e-6);
    EXPECT_NEAR(eq.Q, 4.0363e-11, 1e-3 * 4.0363e-11);
    EXPECT_NEAR(eq.u, 0.1083, 1e-3 * 0.1083);
    EXPECT_EQ(eq.p, 0.0);
    EXPECT_DOUBLE_EQ(eq.y, eq.u / p.r);
    // Stationarity of the mechanical coordinate.
    EXPECT_LE(std::abs(mems_gradH(p, eq.state()).grad(0)), 1e-12 * p.k1 * eq.q);
}

TEST(MemsEquilibrium, VanishesWithDisplacement) {
    const auto eq = mems_equilibrium(MemsParams{}, 0.0);
    EXPECT_EQ(eq.Q, 0.0);
    EXPECT_EQ(eq.u, 0.0);
    const auto small = mems_equilibrium(MemsParams{}, 1e-12);
    EXPECT_LT(small.Q, 1e-13);
    EXPECT_LT(small.u, 1e-3);
}

TEST(MemsEquilibriumProperty, StationaryAcrossOperatingPoints) {
    const MemsParams p;
    Gen g(22);
    for (int trial = 0; trial < 50; ++trial) {
        const auto eq = mems_equilibrium(p, g.uniform(0.01, 0.9) * p.qmax);
        EXPECT_LE(mems_scaled_residual(p, eq.state(), eq.u), 1e-12);
        EXPECT_LE(eq.residual, 1e-12);
    }
}

TEST(MemsDynamics, RcDischargeAtRest) {
    const MemsParams p;
    const double Q0 = 3e-11;
    const Vector xdot = mems_dynamics(p, Vector{{0, 0, Q0}}, 0.0);
    const double C0 = p.epsA() / p.qmax;
    EXPECT_NEAR(xdot(2), -Q0 / (p.r * C0), 1e-12 * Q0 / (p.r * C0));
    EXPECT_EQ(xdot(0), 0.0);
}

TEST(MemsDynamics, OutputIsScaledVoltage) {
    const MemsParams p;
    const Vector x{{1e-6, 0, 2e-11}};
    EXPECT_DOUBLE_EQ(mems_output(p, x), mems_gradH(p, x).grad(2) / p.r);
}

TEST(MemsLinearization, EntriesAndSigns) {
    const MemsParams p;
    const auto eq = mems_equilibrium(p, 0.5e-6);
    const auto lin = mems_linearize(p, eq);
    EXPECT_NEAR(lin.A(1, 0), -3 * 0.46 * 0.25e-12 - 0.46, 1e-12);
    EXPECT_NEAR(lin.A(1, 0), -0.46, 1e-6);
    EXPECT_DOUBLE_EQ(lin.A(0, 1), 1.0 / p.m);
    EXPECT_DOUBLE_EQ(lin.B(2), 1.0 / p.r);
    const double cb = (lin.C * lin.B)(0, 0);
    EXPECT_GT(cb, 0.0);
    EXPECT_NEAR(cb, (p.qmax - eq.q) / (p.epsA() * p.r * p.r), 1e-12 * cb);
    EXPECT_LT(lin.C(0, 0), 0.0);  // analytic Jacobian of the output map
    EXPECT_LE(lin.fd_error, 1e-5);
    EXPECT_TRUE(validate_ph(lin.ph, Tolerances{}).pass());
    EXPECT_LE((lin.ph.A() - lin.A).norm(), 1e-12 * lin.A.norm());
    EXPECT_LE((lin.ph.C() - lin.C).norm(), 1e-12 * lin.C.norm());
}

TEST(MemsLinearization, UndampedMechanics) {
    MemsParams p;
    p.b_damp = 0.0;
    const auto lin = mems_linearize(p, mems_equilibrium(p, 0.5e-6));
    EXPECT_EQ(lin.A(1, 1), 0.0);
}

TEST(MemsLinearizationProperty, SecondOrderRemainder) {
    const MemsParams p;
    const auto eq = mems_equilibrium(p, 0.5e-6);
    const auto lin = mems_linearize(p, eq);
    Gen g(23);
    const Vector scale{{1e-7, 1e-12, 4e-12}};
    for (int trial = 0; trial < 20; ++trial) {
        const Vector dir = g.vector(3).cwiseProduct(scale);
        const double dnu = 1e-2 * g.normal();
        auto remainder = [&](double s) {
            const Vector f = mems_dynamics(p, eq.state() + s * dir, eq.u + s * dnu);
            return (f - (lin.A * (s * dir) + lin.B * (s * dnu))).norm();
        };
        const double ratio = remainder(1.0) / remainder(0.5);
        EXPECT_NEAR(ratio, 4.0, 0.3) << "trial " << trial;
    }
}

TEST(MemsEnergyProperty, BalanceAlongMidpointTrajectories) {
    const MemsParams prm;
    const auto eq = mems_equilibrium(prm, 0.5e-6);
    Gen g(24);
    for (int trial = 0; trial < 5; ++trial) {
        const double u0 = eq.u * g.uniform(0.5, 1.5);
        const double w = g.uniform(1e3, 1e4);
        auto input = [&](double t) { return u0 * (1.0 + 0.2 * std::sin(w * t)); };
        const Field f = [&](const Vector& x, double t) { return mems_dynamics(prm, x, input(t)); };
        const FieldJacobian jac = [&](const Vector& x, double) { return mems_state_jacobian(prm, x); };
        SimConfig cfg;
        cfg.dt = 1e-7;
        cfg.t_end = 2e-4;
        Vector x0 = eq.state();
        x0(2) *= g.uniform(0.8, 1.2);
        const auto tr = integrate(f, x0, cfg, jac, mems_plant(prm).state_scale);
        const double H0 = mems_hamiltonian(prm, x0);
        double balance = 0.0;
        double worst = 0.0;
        for (std::size_t k = 0; k + 1 < tr.x.size(); ++k) {
            const Vector xm = 0.5 * (tr.x[k] + tr.x[k + 1]);
            const double um = input(tr.t[k] + 0.5 * cfg.dt);
            const double ym = mems_output(prm, xm);
            const auto gm = mems_gradH(prm, xm).grad;
            const double loss = prm.b_damp * gm(1) * gm(1) + prm.r * ym * ym;
            balance += cfg.dt * (ym * um - loss);
            // dissipation inequality with the resistive output term
            const double dH = mems_hamiltonian(prm, tr.x[k + 1]) - mems_hamiltonian(prm, tr.x[k]);
            EXPECT_LE(dH, cfg.dt * (ym * um - prm.r * ym * ym) + 1e-10 * H0);
            worst = std::max(worst, std::abs(mems_hamiltonian(prm, tr.x[k + 1]) - H0 - balance));
        }
        EXPECT_LE(worst, 1e-8 * H0) << "trial " << trial;
    }
}
