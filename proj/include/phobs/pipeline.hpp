#pragma once

// End-to-end runs driven by a RunConfig: design model, observer and
// controller synthesis, closed-loop simulation and result files.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "phobs/config.hpp"
#include "phobs/core.hpp"
#include "phobs/io.hpp"
#include "phobs/models.hpp"
#include "phobs/sim.hpp"
#include "phobs/synthesis.hpp"

namespace phobs {

// ============================================================================
// Design model
// ============================================================================

struct DesignModel {
    PlantKind kind = PlantKind::beam;
    LinearPHSystem sys;
    Matrix A, B, C;
    std::optional<MemsEquilibrium> eq;
    std::optional<MemsLinearization> lin;
    std::vector<std::string> warnings;
};

inline DesignModel design_model(const RunConfig& cfg) {
    DesignModel d;
    d.kind = cfg.plant.kind;
    switch (cfg.plant.kind) {
        case PlantKind::beam:
            d.sys = build_timoshenko(cfg.plant.n_d, cfg.plant.beam);
            break;
        case PlantKind::mems:
            d.eq = mems_equilibrium(cfg.plant.mems, cfg.plant.q_star);
            d.lin = mems_linearize(cfg.plant.mems, *d.eq);
            d.sys = d.lin->ph;
            break;
        case PlantKind::matrices:
            d.sys = LinearPHSystem::create(cfg.plant.J, cfg.plant.R, cfg.plant.Q, cfg.plant.B, cfg.tol, &d.warnings);
            break;
    }
    d.A = d.lin ? d.lin->A : d.sys.A();
    d.B = d.lin ? Matrix(d.lin->B) : d.sys.B();
    d.C = d.lin ? d.lin->C : d.sys.C();
    return d;
}

// Structure report of the configured plant; explicit matrices are checked
// as given, before any repair.
inline StructureReport validate_plant(const RunConfig& cfg) {
    if (cfg.plant.kind == PlantKind::matrices) {
        const auto& p = cfg.plant;
        return validate_ph(p.J, p.R, p.Q, p.B, cfg.tol);
    }
    return validate_ph(design_model(cfg).sys, cfg.tol);
}

// ============================================================================
// Synthesis
// ============================================================================

struct SynthesisRun {
    ObserverDesign observer;
    std::vector<DesignBundle> designs;
    SpectralReport open_loop;                 // lambda(A)
    std::vector<SpectralReport> state_feedback;  // lambda(A - B K_i)
    std::vector<double> observer_identity;    // ||(A - LC)^T - (J_d - R_d) Q_d|| / ||A||
    std::vector<double> ida_identity;         // ||(J_d - R_d) Q_d - (A^T + C^T F)|| / ||A||

    [[nodiscard]] bool certificates_pass() const {
        if (!observer.spectrum.hurwitz) return false;
        for (std::size_t i = 0; i < designs.size(); ++i) {
            const auto& d = designs[i];
            const bool gamma_pos = d.ctrl.slack_r_lower >= -1e-8;
            if (!state_feedback[i].hurwitz || d.ctrl.match_residual > tol_match || !gamma_pos) return false;
            if (!d.cert.all_positive()) return false;
        }
        return true;
    }
};

inline ObserverDesign design_observer(const RunConfig& cfg, const DesignModel& model) {
    return observer_gain(model.A, model.C, cfg.observer.bounds, cfg.tol, cfg.synthesis_options());
}

inline DesignBundle design_controller(const RunConfig& cfg, const DesignModel& model, const ObserverDesign& obs,
                                      int design) {
    DesignBundle b;
    b.design = design;
    b.L = obs.L;
    b.ctrl = controller_synthesis(model.A, model.B, model.C, obs.L, cfg.design(design), cfg.tol,
                                  cfg.synthesis_options());
    b.cert = passivity_certificates(b.ctrl, cfg.tol);
    return b;
}

// designs empty: every configured controller.
inline SynthesisRun synthesize(const RunConfig& cfg, const DesignModel& model, std::vector<int> designs = {}) {
    if (cfg.observer.bounds.Lambda1.size() == 0) throw ConfigError("missing section [observer]");
    if (designs.empty())
        for (int i = 1; i <= static_cast<int>(cfg.controllers.size()); ++i) designs.push_back(i);
    SynthesisRun run;
    run.open_loop = spectrum(model.A);
    run.observer = design_observer(cfg, model);
    const auto& dual = run.observer.dual;
    const double na = model.A.norm();
    run.observer_identity.push_back(run.observer.duality_residual);
    run.ida_identity.push_back(
        ((dual.J_d - dual.R_d) * dual.Q_d - (model.A.transpose() + model.C.transpose() * dual.F)).norm() / na);
    for (int i : designs) {
        run.designs.push_back(design_controller(cfg, model, run.observer, i));
        run.state_feedback.push_back(spectrum(model.A - model.B * run.designs.back().ctrl.K));
    }
    return run;
}

inline void write_synthesis(const std::filesystem::path& out, const RunConfig& cfg, const DesignModel& model,
                            const SynthesisRun& run) {
    std::filesystem::create_directories(out);
    for (const auto& d : run.designs) write_bundle(out / ("design" + std::to_string(d.design)), d);
    {
        std::ofstream ev(out / "eigenvalues.csv");
        ev << "matrix,real,imag\n";
        write_eigenvalues_csv(ev, "A", run.open_loop.eigenvalues);
        write_eigenvalues_csv(ev, "A_L", run.observer.spectrum.eigenvalues);
        for (std::size_t i = 0; i < run.designs.size(); ++i)
            write_eigenvalues_csv(ev, "A_BK" + std::to_string(run.designs[i].design), run.state_feedback[i].eigenvalues);
    }
    std::ofstream s(out / "summary.txt");
    full_precision(s);
    s << "plant: " << to_string(cfg.plant.kind) << " (n = " << model.sys.n() << ", m = " << model.sys.m() << ")\n"
      << "observer gain L:\n" << run.observer.L << "\n"
      << "spectral abscissa of A: " << run.open_loop.spectral_abscissa << "\n"
      << "spectral abscissa of A - LC: " << run.observer.spectrum.spectral_abscissa << "\n"
      << "observer identity residual: " << run.observer_identity.front() << "\n"
      << "feedback identity residual: " << run.ida_identity.front() << "\n"
      << "observer LMI:\n" << run.observer.dual.lmi.diagnostics();
    for (std::size_t i = 0; i < run.designs.size(); ++i) {
        const auto& d = run.designs[i];
        s << "\ndesign " << d.design << "\n"
          << "  K: " << d.ctrl.K << "\n"
          << "  spectral abscissa of A - BK: " << run.state_feedback[i].spectral_abscissa << "\n"
          << "  matching residual: " << d.ctrl.match_residual << "\n"
          << "  slacks R_c - Gamma1, Gamma2 - R_c, Q_c - Delta1, Delta2 - Q_c: " << d.ctrl.slack_r_lower << ", "
          << d.ctrl.slack_r_upper << ", " << d.ctrl.slack_q_lower << ", " << d.ctrl.slack_q_upper << "\n"
          << "  SPR epsilon: " << d.cert.spr_epsilon << "\n"
          << "  OSP epsilon: " << d.cert.osp_epsilon << "\n"
          << "  ZSD: " << (d.cert.zsd ? "yes" : "no") << "\n"
          << "  controller LMI:\n" << d.ctrl.lmi.diagnostics();
        for (const auto& w : d.ctrl.warnings) s << "  warning: " << w << "\n";
    }
    s << "\ncertificates: " << (run.certificates_pass() ? "pass" : "FAIL") << "\n";
}

// ============================================================================
// Simulation
// ============================================================================

struct SimulationPlant {
    PlantModel plant;
    Vector x0;
    Vector x_star;             // regulation target
    std::optional<Offsets> offsets;
    Matrix model_C;
    Matrix energy_metric;      // regulation norm sqrt(d^T M d), d = x - x*
    std::optional<BeamStateLayout> fine, coarse;
};

inline SimulationPlant simulation_plant(const RunConfig& cfg, const DesignModel& model) {
    SimulationPlant s;
    s.model_C = model.C;
    switch (cfg.plant.kind) {
        case PlantKind::beam: {
            const auto fine = build_timoshenko(cfg.sim.plant_n_d, cfg.plant.beam);
            s.plant = linear_plant(fine);
            s.x0 = beam_initial_state(cfg.sim.plant_n_d, cfg.plant.beam, cfg.plant.tip_force);
            s.x_star = Vector::Zero(fine.n());
            s.energy_metric = fine.Q();
            s.fine.emplace(cfg.sim.plant_n_d, cfg.plant.beam);
            s.coarse.emplace(cfg.plant.n_d, cfg.plant.beam);
            break;
        }
        case PlantKind::mems: {
            const auto& eq = *model.eq;
            s.plant = mems_plant(cfg.plant.mems);
            s.x_star = eq.state();
            s.x0 = eq.state();
            s.x0(2) *= cfg.sim.charge_ratio;
            s.offsets = Offsets{eq.state(), Vector::Constant(1, eq.u), Vector::Constant(1, eq.y)};
            s.energy_metric = mems_hessian(cfg.plant.mems, eq.state());
            break;
        }
        case PlantKind::matrices:
            s.plant = linear_plant(model.sys);
            s.x0 = cfg.sim.x0.size() ? Vector(cfg.sim.x0) : Vector(Vector::Zero(model.sys.n()));
            s.x_star = Vector::Zero(model.sys.n());
            s.energy_metric = model.sys.Q();
            break;
    }
    return s;
}

struct SimulationRun {
    ClosedLoopTrace trace;
    TraceDiagnostics diag;
    std::vector<double> monitored;   // tip deflection, q, or y[0]
    std::vector<double> regulation;  // sqrt(d^T M d) / value at t = 0
    double time_to_one_percent = std::numeric_limits<double>::infinity();
    double step_halving_ratio = std::numeric_limits<double>::quiet_NaN();
    bool order_ok = false;
    std::string monitored_name;
};

inline ClosedLoopTrace run_closed_loop(const SimulationPlant& sp, const ControllerRealization* ctrl,
                                       const SimConfig& sim) {
    ClosedLoopSetup setup;
    setup.ctrl = ctrl;
    setup.offsets = sp.offsets;
    setup.model_C = sp.model_C;
    const Vector xhat0 = ctrl ? Vector(Vector::Zero(ctrl->n())) : Vector();
    return simulate_closed_loop(sp.plant, setup, sp.x0, xhat0, sim);
}

// Terminal-state step-halving ratio over `steps` steps of dt.
inline double closed_loop_order_ratio(const SimulationPlant& sp, const ControllerRealization* ctrl, double dt,
                                      long steps, const SimConfig& base) {
    auto terminal = [&](double h) {
        SimConfig c = base;
        c.dt = h;
        c.t_end = static_cast<double>(steps) * dt;
        c.record_stride = std::numeric_limits<long>::max();
        const auto tr = run_closed_loop(sp, ctrl, c);
        if (tr.aborted) throw SimulationError("order check aborted: " + tr.abort_reason, tr.abort_step);
        Vector x = tr.x.back() - sp.x_star;
        if (sp.plant.state_scale.size() == x.size() && !sp.plant.linear)
            x = (x.array() / sp.plant.state_scale.array()).matrix();
        Vector z(x.size() + tr.xhat.back().size());
        z << x, tr.xhat.back();
        return z;
    };
    return step_halving_ratio(terminal, dt);
}

inline SimulationRun simulate(const RunConfig& cfg, const DesignModel& model, const ControllerRealization* ctrl) {
    const auto sp = simulation_plant(cfg, model);
    SimulationRun run;
    run.trace = run_closed_loop(sp, ctrl, cfg.sim.cfg);
    const auto& tr = run.trace;
    for (std::size_t k = 0; k < tr.size(); ++k) {
        if (sp.fine) {
            run.monitored.push_back(tip_deflection(tr.x[k], *sp.fine));
        } else if (cfg.plant.kind == PlantKind::mems) {
            run.monitored.push_back(tr.x[k](0));
        } else {
            run.monitored.push_back(tr.y[k](0));
        }
        const Vector d = tr.x[k] - sp.x_star;
        run.regulation.push_back(std::sqrt(std::max(0.0, d.dot(sp.energy_metric * d))));
    }
    run.monitored_name = sp.fine ? "tip_deflection" : (cfg.plant.kind == PlantKind::mems ? "q" : "y0");
    const double r0 = run.regulation.front();
    if (r0 > 0)
        for (auto& r : run.regulation) r /= r0;
    for (std::size_t k = run.regulation.size(); k-- > 0;) {
        if (run.regulation[k] > 0.01) break;
        run.time_to_one_percent = tr.t[k];
    }
    if (!tr.aborted) {
        run.diag = diagnostics(tr, run.monitored, cfg.sim.settling_band);
        const long steps = std::min(cfg.sim.order_check_steps, cfg.sim.cfg.steps());
        run.step_halving_ratio = closed_loop_order_ratio(sp, ctrl, cfg.sim.cfg.dt, steps, cfg.sim.cfg);
        run.order_ok = run.step_halving_ratio >= 3.5 && run.step_halving_ratio <= 4.5;
    }
    return run;
}

inline void write_trace_csv(const std::filesystem::path& path, const ClosedLoopTrace& tr) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    full_precision(out);
    const auto nx = tr.x.empty() ? 0 : tr.x.front().size();
    const auto nh = tr.xhat.empty() ? 0 : tr.xhat.front().size();
    const auto m = tr.u.empty() ? 0 : tr.u.front().size();
    out << "t";
    for (Eigen::Index i = 0; i < nx; ++i) out << ",x" << i;
    for (Eigen::Index i = 0; i < nh; ++i) out << ",xhat" << i;
    for (Eigen::Index i = 0; i < m; ++i) out << ",u" << i;
    for (Eigen::Index i = 0; i < m; ++i) out << ",y" << i;
    for (Eigen::Index i = 0; i < m; ++i) out << ",yc" << i;
    out << ",H_plant,H_ctrl,error_norm\n";
    for (std::size_t k = 0; k < tr.size(); ++k) {
        out << tr.t[k];
        for (Eigen::Index i = 0; i < nx; ++i) out << "," << tr.x[k](i);
        for (Eigen::Index i = 0; i < nh; ++i) out << "," << tr.xhat[k](i);
        for (Eigen::Index i = 0; i < m; ++i) out << "," << tr.u[k](i);
        for (Eigen::Index i = 0; i < m; ++i) out << "," << tr.y[k](i);
        for (Eigen::Index i = 0; i < m; ++i) out << "," << tr.yc[k](i);
        out << "," << tr.H_plant[k] << "," << tr.H_ctrl[k] << "," << tr.error_norm[k] << "\n";
    }
}

inline void write_diagnostics_csv(const std::filesystem::path& path, const SimulationRun& run) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    full_precision(out);
    const auto& tr = run.trace;
    out << "key,value\n"
        << "steps," << tr.steps << "\n"
        << "aborted," << (tr.aborted ? 1 : 0) << "\n"
        << "monitored," << run.monitored_name << "\n"
        << "settling_time," << run.diag.settling_time << "\n"
        << "max_overshoot," << run.diag.max_overshoot << "\n"
        << "energy_residual," << tr.energy_residual << "\n"
        << "regulation_final," << (run.regulation.empty() ? 0.0 : run.regulation.back()) << "\n"
        << "time_to_one_percent," << run.time_to_one_percent << "\n"
        << "step_halving_ratio," << run.step_halving_ratio << "\n"
        << "order_ok," << (run.order_ok ? 1 : 0) << "\n";
    for (std::size_t i = 0; i < run.diag.error_decay_rates.size(); ++i)
        out << "error_decay_rate_" << i << "," << run.diag.error_decay_rates[i] << "\n";
    if (tr.aborted) out << "abort_reason,\"" << tr.abort_reason << "\"\n";
}

// Long format t, zeta, w, w_hat; the estimate is reconstructed on the design
// grid and interpolated linearly onto the simulation grid.
inline void write_deflection_csv(const std::filesystem::path& path, const ClosedLoopTrace& tr,
                                 const BeamStateLayout& fine, const BeamStateLayout& coarse) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    full_precision(out);
    out << "t,zeta,w,w_hat\n";
    for (std::size_t k = 0; k < tr.size(); ++k) {
        const auto w = reconstruct_deflection(tr.x[k], fine);
        std::optional<BeamDeflection> wh;
        if (tr.xhat[k].size() == coarse.n()) wh = reconstruct_deflection(tr.xhat[k], coarse);
        for (std::size_t i = 0; i < w.zeta.size(); ++i) {
            double est = 0.0;
            if (wh) {
                const auto& z = wh->zeta;
                std::size_t j = 1;
                while (j + 1 < z.size() && z[j] < w.zeta[i]) ++j;
                const double s = (w.zeta[i] - z[j - 1]) / (z[j] - z[j - 1]);
                est = wh->w[j - 1] + s * (wh->w[j] - wh->w[j - 1]);
            }
            out << tr.t[k] << "," << w.zeta[i] << "," << w.w[i] << "," << est << "\n";
        }
    }
}

inline void write_simulation(const std::filesystem::path& out, const RunConfig& cfg, const DesignModel& model,
                             const SimulationRun& run) {
    std::filesystem::create_directories(out);
    write_trace_csv(out / "trace.csv", run.trace);
    write_diagnostics_csv(out / "diagnostics.csv", run);
    if (cfg.plant.kind == PlantKind::beam) {
        const auto sp = simulation_plant(cfg, model);
        write_deflection_csv(out / "deflection.csv", run.trace, *sp.fine, *sp.coarse);
    }
}

}  // namespace phobs
