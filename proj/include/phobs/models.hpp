#pragma once

// Example plants: a Timoshenko beam discretized on staggered grids and a
// MEMS optical switch with its equilibrium and linearization.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "phobs/core.hpp"

namespace phobs {

// ============================================================================
// Timoshenko beam
// ============================================================================

struct BeamParams {
    double T = 1.0;     // shear modulus
    double rho = 1.0;   // mass per unit length
    double EI = 1.0;    // bending stiffness
    double Irho = 1.0;  // rotational inertia
    double a = 0.0;
    double b = 1.0;

    void validate() const {
        if (!(T > 0 && rho > 0 && EI > 0 && Irho > 0)) throw ValidationError("beam coefficients must be positive");
        if (!(b > a)) throw ValidationError("beam domain requires b > a");
    }
};

// State x = (x1, x2, x3, x4), each block of n_d samples. Blocks 1 and 3 sit at
// a + (i - 1/2) h, blocks 2 and 4 at a + i h, i = 1..n_d.
struct BeamStateLayout {
    int n_d = 0;
    double a = 0.0;
    double b = 1.0;
    double h = 0.0;

    BeamStateLayout(int elements, const BeamParams& p) : n_d(elements), a(p.a), b(p.b) {
        if (elements < 2) throw ValidationError("beam discretization needs n_d >= 2");
        h = 2.0 * (b - a) / (2.0 * elements + 1.0);
    }

    [[nodiscard]] Eigen::Index n() const { return 4 * n_d; }
    [[nodiscard]] Eigen::Index offset(int block) const { return static_cast<Eigen::Index>(block) * n_d; }
    [[nodiscard]] double half_node(int i) const { return a + (i + 0.5) * h; }  // i = 0..n_d-1
    [[nodiscard]] double full_node(int i) const { return a + (i + 1.0) * h; }
};

struct BeamOperators {
    Matrix D;
    Matrix F;
};

inline BeamOperators beam_operators(int n_d, double h) {
    BeamOperators op{Matrix::Zero(n_d, n_d), Matrix::Zero(n_d, n_d)};
    for (int i = 0; i < n_d; ++i) {
        op.D(i, i) = 1.0;
        op.F(i, i) = 1.0;
        if (i > 0) {
            op.D(i, i - 1) = -1.0;
            op.F(i, i - 1) = 1.0;
        }
    }
    op.D /= h * h;
    op.F /= 2.0 * h;
    return op;
}

inline LinearPHSystem build_timoshenko(int n_d, const BeamParams& p) {
    p.validate();
    const BeamStateLayout lay(n_d, p);
    const auto nd = static_cast<Eigen::Index>(n_d);
    const double h = lay.h;
    const auto op = beam_operators(n_d, h);

    Matrix J = Matrix::Zero(4 * nd, 4 * nd);
    J.block(0, nd, nd, nd) = op.D;
    J.block(0, 3 * nd, nd, nd) = -op.F;
    J.block(nd, 0, nd, nd) = -op.D.transpose();
    J.block(2 * nd, 3 * nd, nd, nd) = op.D;
    J.block(3 * nd, 0, nd, nd) = op.F.transpose();
    J.block(3 * nd, 2 * nd, nd, nd) = -op.D.transpose();

    Vector q(4 * nd);
    q.segment(0, nd).setConstant(h * p.T);
    q.segment(nd, nd).setConstant(h / p.rho);
    q.segment(2 * nd, nd).setConstant(h * p.EI);
    q.segment(3 * nd, nd).setConstant(h / p.Irho);
    const Matrix Q = q.asDiagonal();

    Matrix B = Matrix::Zero(4 * nd, 4);
    B(0, 0) = -1.0 / h;              // b11
    B(0, 1) = -0.5;                  // b12
    B(nd + nd - 1, 2) = 1.0 / h;     // b23
    B(2 * nd, 1) = -1.0 / h;         // b32
    B(3 * nd + nd - 1, 2) = 0.5;     // b43
    B(3 * nd + nd - 1, 3) = 1.0 / h; // b44

    return LinearPHSystem(std::move(J), Matrix::Zero(4 * nd, 4 * nd), Q, std::move(B));
}

// Static profile of the beam clamped at a and loaded at b by a transverse tip
// force: constant shear strain and linearly decreasing curvature.
inline Vector beam_initial_state(int n_d, const BeamParams& p, double tip_force) {
    p.validate();
    const BeamStateLayout lay(n_d, p);
    Vector x = Vector::Zero(lay.n());
    for (int i = 0; i < n_d; ++i) {
        const double zeta = lay.half_node(i);
        x(lay.offset(0) + i) = tip_force / p.T;
        x(lay.offset(2) + i) = -tip_force * (zeta - p.b) / p.EI;
    }
    return x;
}

struct BeamDeflection {
    std::vector<double> zeta;  // a, half nodes, b
    std::vector<double> w;
    std::vector<double> phi;
};

// Integrates the rotation from the curvature and the deflection from
// shear strain plus rotation, clamped at a, with trapezoidal sums through the
// half nodes; the end values of z1 and z3 are extrapolated linearly.
inline BeamDeflection reconstruct_deflection(const Vector& x, const BeamStateLayout& lay) {
    if (x.size() != lay.n()) {
        throw DimensionError("reconstruct_deflection: state has " + std::to_string(x.size()) + " entries, expected " +
                             std::to_string(lay.n()));
    }
    const int nd = lay.n_d;
    const auto z1 = x.segment(lay.offset(0), nd);
    const auto z3 = x.segment(lay.offset(2), nd);
    auto extend = [&](const auto& z) {
        std::vector<double> v(nd + 2);
        for (int i = 0; i < nd; ++i) v[i + 1] = z(i);
        // nodes: a, a + h/2, a + 3h/2, ..., b - h/2, b
        v[0] = z(0) - 0.5 * (z(1) - z(0));
        v[nd + 1] = z(nd - 1) + (z(nd - 1) - z(nd - 2));
        return v;
    };
    const auto e1 = extend(z1);
    const auto e3 = extend(z3);

    BeamDeflection d;
    d.zeta.resize(nd + 2);
    d.zeta[0] = lay.a;
    for (int i = 0; i < nd; ++i) d.zeta[i + 1] = lay.half_node(i);
    d.zeta[nd + 1] = lay.b;

    d.phi.assign(nd + 2, 0.0);
    d.w.assign(nd + 2, 0.0);
    for (int k = 1; k < nd + 2; ++k) {
        const double dz = d.zeta[k] - d.zeta[k - 1];
        d.phi[k] = d.phi[k - 1] + 0.5 * dz * (e3[k] + e3[k - 1]);
        d.w[k] = d.w[k - 1] + 0.5 * dz * (e1[k] + d.phi[k] + e1[k - 1] + d.phi[k - 1]);
    }
    return d;
}

inline double tip_deflection(const Vector& x, const BeamStateLayout& lay) {
    return reconstruct_deflection(x, lay).w.back();
}

// ============================================================================
// MEMS optical switch, state x = (q, p, Q)
// ============================================================================

struct MemsParams {
    double k1 = 0.46;
    double k2 = 0.46;
    double m = 2.4e-8;
    double eps = 8.854e-12;
    double As = 4e-4;
    double qmax = 1e-5;
    double b_damp = 1e-7;
    double r = 0.5e6;

    void validate() const {
        if (!(k1 > 0 && k2 > 0 && m > 0 && eps > 0 && As > 0 && qmax > 0 && b_damp >= 0 && r > 0)) {
            throw ValidationError("MEMS parameters must be positive");
        }
    }
    [[nodiscard]] double epsA() const { return eps * As; }
};

struct MemsGradient {
    Vector grad;
    double H = 0.0;
};

inline void mems_check_domain(const MemsParams& p, const Vector& x) {
    if (x.size() != 3) throw DimensionError("MEMS state must have 3 entries");
    if (!x.allFinite()) throw DomainError("MEMS state is not finite");
    if (!(x(0) < p.qmax)) {
        std::ostringstream os;
        os << "MEMS gap closed: q = " << x(0) << " >= qmax = " << p.qmax;
        throw DomainError(os.str());
    }
}

inline MemsGradient mems_gradH(const MemsParams& p, const Vector& x) {
    mems_check_domain(p, x);
    const double q = x(0), pm = x(1), Q = x(2);
    const double ea = p.epsA();
    MemsGradient g;
    g.grad.resize(3);
    g.grad(0) = p.k1 * q + p.k2 * q * q * q - Q * Q / (2.0 * ea);
    g.grad(1) = pm / p.m;
    g.grad(2) = Q * (p.qmax - q) / ea;
    g.H = pm * pm / (2.0 * p.m) + 0.5 * p.k1 * q * q + 0.25 * p.k2 * q * q * q * q + Q * Q * (p.qmax - q) / (2.0 * ea);
    return g;
}

inline double mems_hamiltonian(const MemsParams& p, const Vector& x) { return mems_gradH(p, x).H; }

inline Matrix mems_hessian(const MemsParams& p, const Vector& x) {
    mems_check_domain(p, x);
    const double q = x(0), Q = x(2);
    const double ea = p.epsA();
    Matrix H = Matrix::Zero(3, 3);
    H(0, 0) = p.k1 + 3.0 * p.k2 * q * q;
    H(0, 2) = H(2, 0) = -Q / ea;
    H(1, 1) = 1.0 / p.m;
    H(2, 2) = (p.qmax - q) / ea;
    return H;
}

// Constant structure: x' = (J - R) grad H + g u, y = g^T grad H.
inline Matrix mems_structure(const MemsParams& p) {
    Matrix JR(3, 3);
    JR << 0, 1, 0, -1, -p.b_damp, 0, 0, 0, -1.0 / p.r;
    return JR;
}

inline Vector mems_input_map(const MemsParams& p) { return Vector::Unit(3, 2) / p.r; }

inline Vector mems_dynamics(const MemsParams& p, const Vector& x, double u) {
    return mems_structure(p) * mems_gradH(p, x).grad + mems_input_map(p) * u;
}

inline double mems_output(const MemsParams& p, const Vector& x) { return mems_gradH(p, x).grad(2) / p.r; }

inline Matrix mems_state_jacobian(const MemsParams& p, const Vector& x) {
    return mems_structure(p) * mems_hessian(p, x);
}

inline Vector mems_output_jacobian(const MemsParams& p, const Vector& x) {
    return mems_hessian(p, x).row(2).transpose() / p.r;
}

// Largest componentwise |f_i| relative to the sum of magnitudes of the terms
// that make up f_i; 0 for a component whose terms all vanish.
inline double mems_scaled_residual(const MemsParams& p, const Vector& x, double u) {
    const auto g = mems_gradH(p, x);
    const Vector f = mems_dynamics(p, x, u);
    const double q = x(0), pm = x(1), Q = x(2);
    const double ea = p.epsA();
    const double t0 = std::abs(pm / p.m);
    const double t1 = std::abs(p.k1 * q) + std::abs(p.k2 * q * q * q) + Q * Q / (2.0 * ea) +
                      std::abs(p.b_damp * pm / p.m);
    const double t2 = std::abs(g.grad(2) / p.r) + std::abs(u / p.r);
    double res = 0.0;
    const double terms[3] = {t0, t1, t2};
    for (int i = 0; i < 3; ++i)
        if (terms[i] > 0) res = std::max(res, std::abs(f(i)) / terms[i]);
    return res;
}

struct MemsEquilibrium {
    double q = 0.0, p = 0.0, Q = 0.0, u = 0.0, y = 0.0;
    double residual = 0.0;

    [[nodiscard]] Vector state() const { return Vector{{q, p, Q}}; }
};

inline MemsEquilibrium mems_equilibrium(const MemsParams& prm, double q_star) {
    prm.validate();
    if (!(q_star >= 0 && q_star < prm.qmax)) throw DomainError("equilibrium requires 0 <= q* < qmax");
    MemsEquilibrium e;
    e.q = q_star;
    e.p = 0.0;
    e.Q = std::sqrt(2.0 * prm.epsA() * (prm.k1 * q_star + prm.k2 * q_star * q_star * q_star));
    e.u = e.Q * (prm.qmax - q_star) / prm.epsA();
    e.y = e.u / prm.r;
    e.residual = mems_scaled_residual(prm, e.state(), e.u);
    if (!(e.residual <= 1e-12)) {
        std::ostringstream os;
        os << "MEMS equilibrium stationarity residual " << e.residual << " exceeds 1e-12";
        throw NumericalError(os.str());
    }
    return e;
}

struct MemsLinearization {
    Matrix A;
    Matrix B;
    Matrix C;
    LinearPHSystem ph;       // (J, R, Hessian of H at x*, g), with A = (J - R) Q
    double fd_error = 0.0;   // largest relative deviation from central differences
};

inline MemsLinearization mems_linearize(const MemsParams& p, const MemsEquilibrium& eq) {
    const Vector xs = eq.state();
    const double ea = p.epsA();
    MemsLinearization lin;
    lin.A.resize(3, 3);
    lin.A << 0, 1.0 / p.m, 0,                                          //
        -3.0 * p.k2 * eq.q * eq.q - p.k1, -p.b_damp / p.m, eq.Q / ea,  //
        eq.Q / (ea * p.r), 0, (eq.q - p.qmax) / (ea * p.r);
    lin.B = mems_input_map(p);
    lin.C.resize(1, 3);
    lin.C << -eq.Q / (ea * p.r), 0, (p.qmax - eq.q) / (ea * p.r);

    Matrix Jm(3, 3), Rm = Matrix::Zero(3, 3);
    Jm << 0, 1, 0, -1, 0, 0, 0, 0, 0;
    Rm(1, 1) = p.b_damp;
    Rm(2, 2) = 1.0 / p.r;
    lin.ph = LinearPHSystem(Jm, Rm, mems_hessian(p, xs), lin.B);

    // Central differences guard the analytic matrices.
    const Vector scale{{p.qmax, p.qmax * std::sqrt(p.m * p.k1), std::max(eq.Q, 1e-20)}};
    Matrix Afd(3, 3), Cfd(1, 3);
    for (int j = 0; j < 3; ++j) {
        const double hj = 1e-5 * scale(j);
        Vector xp = xs, xm = xs;
        xp(j) += hj;
        xm(j) -= hj;
        Afd.col(j) = (mems_dynamics(p, xp, eq.u) - mems_dynamics(p, xm, eq.u)) / (2.0 * hj);
        Cfd(0, j) = (mems_output(p, xp) - mems_output(p, xm)) / (2.0 * hj);
    }
    const double hu = 1e-5 * std::max(std::abs(eq.u), 1.0);
    const Vector Bfd = (mems_dynamics(p, xs, eq.u + hu) - mems_dynamics(p, xs, eq.u - hu)) / (2.0 * hu);

    auto rel = [](const Matrix& exact, const Matrix& fd) {
        double worst = 0.0;
        for (Eigen::Index i = 0; i < exact.rows(); ++i) {
            const double floor = 1e-9 * std::max(exact.row(i).cwiseAbs().maxCoeff(), fd.row(i).cwiseAbs().maxCoeff());
            for (Eigen::Index j = 0; j < exact.cols(); ++j) {
                const double d = std::abs(exact(i, j) - fd(i, j));
                const double s = std::max(std::abs(exact(i, j)), floor);
                if (d > 0) worst = std::max(worst, s > 0 ? d / s : std::numeric_limits<double>::infinity());
            }
        }
        return worst;
    };
    lin.fd_error = std::max({rel(lin.A, Afd), rel(lin.B, Bfd), rel(lin.C, Cfd)});
    if (!(lin.fd_error <= 1e-5)) {
        std::ostringstream os;
        os << "MEMS linearization disagrees with central differences (relative error " << lin.fd_error << ")";
        throw NumericalError(os.str());
    }
    return lin;
}

}  // namespace phobs
