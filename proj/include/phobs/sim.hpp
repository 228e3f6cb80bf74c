#pragma once

// Implicit midpoint integration of open-loop and closed-loop dynamics, with
// energy bookkeeping and trace diagnostics.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "phobs/core.hpp"
#include "phobs/models.hpp"
#include "phobs/synthesis.hpp"

namespace phobs {

struct SimConfig {
    double dt = 1e-4;
    double t_end = 1.0;
    int newton_max_iter = 25;
    double newton_tol = 1e-10;
    long record_stride = 1;

    void validate() const {
        if (!(dt > 0) || !std::isfinite(dt)) throw ValidationError("simulation step dt must be positive");
        if (!(t_end >= dt)) throw ValidationError("simulation horizon must satisfy t_end >= dt");
        if (newton_max_iter < 1 || !(newton_tol > 0)) throw ValidationError("invalid Newton settings");
        if (record_stride < 1) throw ValidationError("record_stride must be >= 1");
    }
    [[nodiscard]] long steps() const { return std::lround(t_end / dt); }
};

// ============================================================================
// Plants
// ============================================================================

// Input-affine plant x' = f(x) + G u with output y = h(x). Linear plants also
// carry (A, B, C) and take the factored fast path.
struct PlantModel {
    Eigen::Index n = 0;
    Eigen::Index m = 0;
    bool linear = false;
    Matrix A, G, C;
    std::function<Vector(const Vector&)> drift;
    std::function<Matrix(const Vector&)> drift_jacobian;
    std::function<Vector(const Vector&)> output;
    std::function<Matrix(const Vector&)> output_jacobian;
    std::function<double(const Vector&)> energy;
    std::function<double(const Vector&)> dissipation;  // power lost at x
    Vector state_scale;                                // Newton convergence floors
};

inline PlantModel linear_plant(const LinearPHSystem& sys) {
    PlantModel p;
    p.n = sys.n();
    p.m = sys.m();
    p.linear = true;
    p.A = sys.A();
    p.G = sys.B();
    p.C = sys.C();
    const Matrix A = p.A, C = p.C, Q = sys.Q(), R = sys.R();
    p.drift = [A](const Vector& x) { return Vector(A * x); };
    p.drift_jacobian = [A](const Vector&) { return A; };
    p.output = [C](const Vector& x) { return Vector(C * x); };
    p.output_jacobian = [C](const Vector&) { return C; };
    const bool q_diagonal = Matrix(Q.diagonal().asDiagonal()) == Q;
    const Vector qd = Q.diagonal();
    if (q_diagonal) {
        p.energy = [qd](const Vector& x) { return 0.5 * x.dot(qd.cwiseProduct(x)); };
    } else {
        p.energy = [Q](const Vector& x) { return 0.5 * x.dot(Q * x); };
    }
    if (R.isZero(0.0)) {
        p.dissipation = [](const Vector&) { return 0.0; };
    } else {
        p.dissipation = [Q, R](const Vector& x) {
            const Vector e = Q * x;
            return e.dot(R * e);
        };
    }
    p.state_scale = Vector::Ones(p.n);
    return p;
}

inline PlantModel mems_plant(const MemsParams& prm) {
    prm.validate();
    PlantModel p;
    p.n = 3;
    p.m = 1;
    p.G = mems_input_map(prm);
    p.drift = [prm](const Vector& x) { return Vector(mems_structure(prm) * mems_gradH(prm, x).grad); };
    p.drift_jacobian = [prm](const Vector& x) { return mems_state_jacobian(prm, x); };
    p.output = [prm](const Vector& x) { return Vector::Constant(1, mems_output(prm, x)); };
    p.output_jacobian = [prm](const Vector& x) { return Matrix(mems_output_jacobian(prm, x).transpose()); };
    p.energy = [prm](const Vector& x) { return mems_hamiltonian(prm, x); };
    p.dissipation = [prm](const Vector& x) {
        const auto g = mems_gradH(prm, x);
        return prm.b_damp * g.grad(1) * g.grad(1) + g.grad(2) * g.grad(2) / prm.r;
    };
    const double Qref = std::sqrt(2.0 * prm.epsA() * prm.k1 * prm.qmax);
    p.state_scale = Vector{{1e-3 * prm.qmax, 1e-3 * prm.qmax * std::sqrt(prm.m * prm.k1), 1e-3 * Qref}};
    return p;
}

// ============================================================================
// Generic integrator
// ============================================================================

struct Trajectory {
    std::vector<double> t;
    std::vector<Vector> x;
};

using Field = std::function<Vector(const Vector&, double)>;
using FieldJacobian = std::function<Matrix(const Vector&, double)>;

namespace detail {

inline Matrix fd_jacobian(const Field& f, const Vector& x, double t) {
    const Vector f0 = f(x, t);
    Matrix J(f0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = 1e-7 * std::max(1.0, std::abs(x(j)));
        Vector xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        J.col(j) = (f(xp, t) - f(xm, t)) / (2.0 * h);
    }
    return J;
}

// One implicit midpoint step by Newton's method; converged when every update
// component is below newton_tol relative to max(|x_i|, floor_i).
inline Vector midpoint_step(const Field& f, const FieldJacobian& jac, const Vector& xk, double t, double dt,
                            const SimConfig& cfg, const Vector& floor, long step) {
    const double tm = t + 0.5 * dt;
    Vector x = xk + dt * f(xk, t);
    const auto n = xk.size();
    for (int it = 0; it < cfg.newton_max_iter; ++it) {
        const Vector xm = 0.5 * (xk + x);
        const Vector G = x - xk - dt * f(xm, tm);
        const Matrix Jf = jac ? jac(xm, tm) : fd_jacobian(f, xm, tm);
        const Matrix JG = Matrix::Identity(n, n) - 0.5 * dt * Jf;
        const Vector delta = JG.partialPivLu().solve(G);
        if (!delta.allFinite()) break;
        x -= delta;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double s = std::max({std::abs(x(i)), std::abs(xk(i)), floor(i)});
            worst = std::max(worst, s > 0 ? std::abs(delta(i)) / s : std::abs(delta(i)));
        }
        if (worst <= cfg.newton_tol) return x;
    }
    std::ostringstream os;
    os << "implicit midpoint Newton iteration did not converge at step " << step << " (t = " << t << ")";
    throw SimulationError(os.str(), step);
}

}  // namespace detail

// x_{k+1} = x_k + dt f((x_k + x_{k+1})/2, t_k + dt/2).
inline Trajectory integrate(const Field& f, const Vector& x0, const SimConfig& cfg, const FieldJacobian& jac = {},
                            const Vector& floor = Vector()) {
    cfg.validate();
    if (!x0.allFinite()) throw ValidationError("integrate: initial state is not finite");
    const Vector fl = floor.size() == x0.size() ? floor : Vector::Constant(x0.size(), 1e-300);
    Trajectory tr;
    Vector x = x0;
    const long steps = cfg.steps();
    tr.t.push_back(0.0);
    tr.x.push_back(x);
    for (long k = 0; k < steps; ++k) {
        const double t = k * cfg.dt;
        try {
            x = detail::midpoint_step(f, jac, x, t, cfg.dt, cfg, fl, k);
        } catch (const DomainError& e) {
            throw SimulationError(std::string("integration left the model domain: ") + e.what(), k);
        }
        if ((k + 1) % cfg.record_stride == 0 || k + 1 == steps) {
            tr.t.push_back((k + 1) * cfg.dt);
            tr.x.push_back(x);
        }
    }
    return tr;
}

// Linear time-invariant field x' = A x: the step matrix is factored once.
inline Trajectory integrate_linear(const Matrix& A, const Vector& x0, const SimConfig& cfg) {
    cfg.validate();
    if (A.rows() != A.cols() || A.rows() != x0.size()) throw DimensionError("integrate_linear: shape mismatch");
    const auto n = A.rows();
    const Matrix I = Matrix::Identity(n, n);
    const Matrix Phi = (I - 0.5 * cfg.dt * A).partialPivLu().solve(I + 0.5 * cfg.dt * A);
    Trajectory tr;
    Vector x = x0;
    const long steps = cfg.steps();
    tr.t.push_back(0.0);
    tr.x.push_back(x);
    for (long k = 0; k < steps; ++k) {
        x = Phi * x;
        if ((k + 1) % cfg.record_stride == 0 || k + 1 == steps) {
            tr.t.push_back((k + 1) * cfg.dt);
            tr.x.push_back(x);
        }
    }
    return tr;
}

// ============================================================================
// Closed loop
// ============================================================================

// Deviation-variable plumbing for plants controlled about an operating point:
// the plant receives u = u* + r - y_c and the controller sees u_c = y - y*.
struct Offsets {
    Vector x_star;
    Vector u_star;
    Vector y_star;
};

using Reference = std::function<Vector(double)>;

struct ClosedLoopSetup {
    const ControllerRealization* ctrl = nullptr;  // nullptr: open loop
    std::optional<Offsets> offsets;
    Reference r;    // empty: r = 0
    Matrix model_C; // design-model output map, for the output error when dimensions differ
};

struct ClosedLoopTrace {
    std::vector<double> t;
    std::vector<Vector> x, xhat, u, y, uc, yc, yr, r;
    std::vector<double> H_plant, H_ctrl;
    std::vector<Vector> error;     // x - x* - xhat, or y - C_model xhat for mismatched dimensions
    std::vector<double> error_norm;
    bool state_error = false;      // error holds state (not output) differences
    double energy_residual = 0.0;  // max_k |H_k - H_0 - supply_k + dissipated_k| / max(|H_0|, tiny)
    double port_power_mismatch = 0.0;
    long steps = 0;
    bool aborted = false;
    long abort_step = -1;
    std::string abort_reason;

    [[nodiscard]] std::size_t size() const { return t.size(); }
};

namespace detail {

struct LoopSignals {
    Vector u, y, uc, yc, yr, r;
};

}  // namespace detail

inline ClosedLoopTrace simulate_closed_loop(const PlantModel& plant, const ClosedLoopSetup& setup, const Vector& x0,
                                            const Vector& xhat0, const SimConfig& cfg) {
    cfg.validate();
    const auto np = plant.n;
    const auto m = plant.m;
    const ControllerRealization* ctrl = setup.ctrl;
    const auto nc = ctrl ? ctrl->n() : Eigen::Index(0);
    if (x0.size() != np) throw DimensionError("simulate_closed_loop: x0 has wrong dimension");
    if (ctrl) {
        if (ctrl->m() != m) throw DimensionError("simulate_closed_loop: controller and plant port dimensions differ");
        if (xhat0.size() != nc) throw DimensionError("simulate_closed_loop: xhat0 has wrong dimension");
    }
    const Vector u_star = setup.offsets ? setup.offsets->u_star : Vector::Zero(m);
    const Vector y_star = setup.offsets ? setup.offsets->y_star : Vector::Zero(m);
    const Vector x_star = setup.offsets ? setup.offsets->x_star : Vector::Zero(np);
    if (u_star.size() != m || y_star.size() != m || x_star.size() != np) {
        throw DimensionError("simulate_closed_loop: offset dimensions do not match the plant");
    }
    auto ref = [&](double t) { return setup.r ? setup.r(t) : Vector(Vector::Zero(m)); };

    const Matrix Kc = ctrl ? Matrix(ctrl->B_c.transpose() * ctrl->Q_c) : Matrix();
    const Matrix Ac = ctrl ? ctrl->A_c() : Matrix();
    const bool matched = ctrl && nc == np;
    const bool out_err = ctrl && !matched && setup.model_C.rows() == m && setup.model_C.cols() == nc;

    auto split_x = [&](const Vector& z) { return Vector(z.head(np)); };
    auto split_xh = [&](const Vector& z) { return ctrl ? Vector(z.tail(nc)) : Vector(); };
    auto signals = [&](const Vector& z, double t) {
        detail::LoopSignals s;
        const Vector x = split_x(z);
        s.r = ref(t);
        s.y = plant.output(x);
        s.yc = ctrl ? Vector(Kc * split_xh(z)) : Vector(Vector::Zero(m));
        s.yr = ctrl ? ctrl->y_r(split_xh(z)) : Vector(Vector::Zero(m));
        s.u = u_star + s.r - s.yc;
        s.uc = s.y - y_star;
        return s;
    };
    auto field = [&](const Vector& z, double t) {
        const auto s = signals(z, t);
        Vector dz(z.size());
        dz.head(np) = plant.drift(split_x(z)) + plant.G * s.u;
        if (ctrl) dz.tail(nc) = Ac * split_xh(z) + ctrl->B_c * s.uc + ctrl->B * s.r;
        return dz;
    };
    auto field_jacobian = [&](const Vector& z, double) {
        const auto nz = z.size();
        Matrix Jz = Matrix::Zero(nz, nz);
        const Vector x = split_x(z);
        Jz.topLeftCorner(np, np) = plant.drift_jacobian(x);
        if (ctrl) {
            Jz.topRightCorner(np, nc) = -plant.G * Kc;
            Jz.bottomLeftCorner(nc, np) = ctrl->B_c * plant.output_jacobian(x);
            Jz.bottomRightCorner(nc, nc) = Ac;
        }
        return Jz;
    };

    ClosedLoopTrace tr;
    tr.state_error = matched;
    auto record = [&](const Vector& z, double t) {
        const auto s = signals(z, t);
        const Vector x = split_x(z);
        tr.t.push_back(t);
        tr.x.push_back(x);
        tr.xhat.push_back(split_xh(z));
        tr.u.push_back(s.u);
        tr.y.push_back(s.y);
        tr.uc.push_back(s.uc);
        tr.yc.push_back(s.yc);
        tr.yr.push_back(s.yr);
        tr.r.push_back(s.r);
        tr.H_plant.push_back(plant.energy(x));
        tr.H_ctrl.push_back(ctrl ? ctrl->hamiltonian(split_xh(z)) : 0.0);
        if (matched) {
            tr.error.push_back(x - x_star - split_xh(z));
        } else if (out_err) {
            tr.error.push_back(s.y - y_star - setup.model_C * split_xh(z));
        } else {
            tr.error.push_back(Vector());
        }
        tr.error_norm.push_back(tr.error.back().size() ? tr.error.back().norm() : 0.0);
        if (!setup.offsets) {
            const double plant_port = s.u.dot(s.y);
            const double ctrl_port = (s.r - s.yc).dot(s.uc);
            tr.port_power_mismatch = std::max(tr.port_power_mismatch, std::abs(plant_port - ctrl_port));
        }
    };

    Vector z(np + nc);
    z.head(np) = x0;
    if (ctrl) z.tail(nc) = xhat0;
    const long steps = cfg.steps();
    const double dt = cfg.dt;
    record(z, 0.0);
    const double H0 = plant.energy(x0);
    double balance = 0.0;  // integral of supply minus dissipation
    const double Hscale = std::max(std::abs(H0), std::numeric_limits<double>::min());

    // Linear plants: z' = M z + N r + c, factored once.
    Matrix Phi, Psi_r;
    Vector psi_c;
    if (plant.linear) {
        const auto nz = np + nc;
        Matrix M = Matrix::Zero(nz, nz), N = Matrix::Zero(nz, m);
        Vector c = Vector::Zero(nz);
        M.topLeftCorner(np, np) = plant.A;
        N.topRows(np) = plant.G;
        c.head(np) = plant.G * u_star;
        if (ctrl) {
            M.topRightCorner(np, nc) = -plant.G * Kc;
            M.bottomLeftCorner(nc, np) = ctrl->B_c * plant.C;
            M.bottomRightCorner(nc, nc) = Ac;
            N.bottomRows(nc) = ctrl->B;
            c.tail(nc) = -ctrl->B_c * y_star;
        }
        const Matrix I = Matrix::Identity(nz, nz);
        const auto lu = (I - 0.5 * dt * M).partialPivLu();
        Phi = lu.solve(I + 0.5 * dt * M);
        Psi_r = lu.solve(dt * N);
        psi_c = lu.solve(dt * c);
    }
    Vector floor(np + nc);
    floor.head(np) = plant.state_scale.size() == np ? plant.state_scale : Vector::Constant(np, 1e-300);
    if (ctrl) {
        for (Eigen::Index i = 0; i < nc; ++i) floor(np + i) = matched ? floor(i) : 1e-300;
    }

    for (long k = 0; k < steps; ++k) {
        const double t = k * dt;
        Vector znew;
        try {
            if (plant.linear) {
                znew = Phi * z + psi_c;
                if (setup.r) znew += Psi_r * ref(t + 0.5 * dt);
            } else {
                znew = detail::midpoint_step(field, field_jacobian, z, t, dt, cfg, floor, k);
            }
            if (!znew.allFinite()) throw SimulationError("state became non-finite", k);
            const Vector zm = 0.5 * (z + znew);
            const auto s = signals(zm, t + 0.5 * dt);
            balance += dt * (s.u.dot(s.y) - plant.dissipation(split_x(zm)));
            const double H = plant.energy(split_x(znew));
            tr.energy_residual = std::max(tr.energy_residual, std::abs(H - H0 - balance) / Hscale);
        } catch (const DomainError& e) {
            tr.aborted = true;
            tr.abort_step = k;
            std::ostringstream os;
            os << "model domain left at step " << k << ": " << e.what() << "; state " << split_x(z).transpose();
            tr.abort_reason = os.str();
            break;
        } catch (const SimulationError& e) {
            tr.aborted = true;
            tr.abort_step = k;
            tr.abort_reason = e.what();
            break;
        }
        z = znew;
        tr.steps = k + 1;
        if ((k + 1) % cfg.record_stride == 0 || k + 1 == steps) record(z, (k + 1) * dt);
    }
    return tr;
}

// ============================================================================
// Diagnostics
// ============================================================================

// Time after which the signal stays within frac * max|s - s_final| of its
// final value, the final value being the mean over the trailing 5% of samples.
// +inf if the trailing window itself leaves the band.
inline double settling_time(const std::vector<double>& t, const std::vector<double>& s, double frac = 0.02) {
    if (t.size() != s.size() || t.empty()) throw ValidationError("settling_time: empty or mismatched series");
    const std::size_t n = s.size();
    const std::size_t tail = std::max<std::size_t>(1, n / 20);
    double final = 0.0;
    for (std::size_t i = n - tail; i < n; ++i) final += s[i];
    final /= static_cast<double>(tail);
    double span = 0.0;
    for (double v : s) span = std::max(span, std::abs(v - final));
    if (span == 0.0) return 0.0;
    const double band = frac * span;
    std::optional<std::size_t> last_out;
    for (std::size_t i = 0; i < n; ++i)
        if (std::abs(s[i] - final) > band) last_out = i;
    if (!last_out) return 0.0;
    if (*last_out >= n - tail) return std::numeric_limits<double>::infinity();
    return t[*last_out + 1];
}

// Least-squares slope of log|e| over the second half of the horizon.
inline double decay_rate(const std::vector<double>& t, const std::vector<double>& e) {
    if (t.size() != e.size() || t.size() < 2) throw ValidationError("decay_rate: need at least two samples");
    const double t_half = 0.5 * (t.front() + t.back());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    double cnt = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < t_half) continue;
        const double a = std::abs(e[i]);
        if (!(a > 0) || !std::isfinite(a)) continue;
        const double ly = std::log(a);
        sx += t[i];
        sy += ly;
        sxx += t[i] * t[i];
        sxy += t[i] * ly;
        cnt += 1;
    }
    const double den = cnt * sxx - sx * sx;
    if (cnt < 2 || !(den > 0)) return std::numeric_limits<double>::quiet_NaN();
    return (cnt * sxy - sx * sy) / den;
}

// Largest excursion beyond the final value, in the direction of travel,
// relative to the initial distance from it.
inline double max_overshoot(const std::vector<double>& s) {
    if (s.empty()) throw ValidationError("max_overshoot: empty series");
    const std::size_t tail = std::max<std::size_t>(1, s.size() / 20);
    double final = 0.0;
    for (std::size_t i = s.size() - tail; i < s.size(); ++i) final += s[i];
    final /= static_cast<double>(tail);
    const double d0 = final - s.front();
    if (d0 == 0.0) return 0.0;
    double worst = 0.0;
    for (double v : s) worst = std::max(worst, (v - final) * (d0 > 0 ? 1.0 : -1.0));
    return worst / std::abs(d0);
}

// ||x(dt) - x(dt/2)|| / ||x(dt/2) - x(dt/4)|| for the terminal state; about 4
// for a second-order method in its asymptotic regime.
inline double step_halving_ratio(const std::function<Vector(double)>& terminal_state, double dt) {
    const Vector a = terminal_state(dt);
    const Vector b = terminal_state(0.5 * dt);
    const Vector c = terminal_state(0.25 * dt);
    const double den = (b - c).norm();
    return den > 0 ? (a - b).norm() / den : std::numeric_limits<double>::infinity();
}

struct TraceDiagnostics {
    double energy_residual = 0.0;
    double settling_time = 0.0;
    double max_overshoot = 0.0;
    std::vector<double> error_decay_rates;  // one per error channel
};

inline std::vector<double> channel(const std::vector<Vector>& series, Eigen::Index i) {
    std::vector<double> out;
    out.reserve(series.size());
    for (const auto& v : series) out.push_back(v.size() > i ? v(i) : 0.0);
    return out;
}

inline TraceDiagnostics diagnostics(const ClosedLoopTrace& tr, const std::vector<double>& monitored,
                                    double band = 0.02) {
    if (tr.t.empty()) throw ValidationError("diagnostics: empty trace");
    TraceDiagnostics d;
    d.energy_residual = tr.energy_residual;
    d.settling_time = settling_time(tr.t, monitored, band);
    d.max_overshoot = max_overshoot(monitored);
    const auto nerr = tr.error.empty() ? Eigen::Index(0) : tr.error.front().size();
    for (Eigen::Index i = 0; i < nerr; ++i) d.error_decay_rates.push_back(decay_rate(tr.t, channel(tr.error, i)));
    return d;
}

}  // namespace phobs
