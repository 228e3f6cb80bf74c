// Command-line driver: validate | synthesize | simulate | demo-beam | demo-mems.
// Exit codes: 0 success, 2 validation failure, 3 infeasibility, 4 simulation abort.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "phobs/pipeline.hpp"

namespace fs = std::filesystem;
using namespace phobs;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_validation = 2;
constexpr int exit_infeasible = 3;
constexpr int exit_simulation = 4;

struct Args {
    std::string config;
    std::string out;
    std::string bundle;
    int design = 2;
    bool open_loop = false;
};

fs::path output_dir(const RunConfig& cfg, const Args& a) { return a.out.empty() ? cfg.out_dir : fs::path(a.out); }

int cmd_validate(const Args& a) {
    const auto cfg = load_config(a.config);
    const auto rep = validate_plant(cfg);
    const auto out = output_dir(cfg, a);
    fs::create_directories(out);
    std::ostringstream os;
    full_precision(os);
    os << "plant: " << to_string(cfg.plant.kind) << "\n" << rep.to_string();
    if (rep.pass()) {
        const auto model = design_model(cfg);
        os << "spectral abscissa of A: " << spectrum(model.A).spectral_abscissa << "\n";
        if (model.eq) {
            const auto& e = *model.eq;
            os << "equilibrium: q* = " << e.q << ", p* = " << e.p << ", Q* = " << e.Q << ", u* = " << e.u
               << ", y* = " << e.y << " (residual " << e.residual << ")\n";
        }
        if (model.lin) {
            os << "A =\n" << model.lin->A << "\nB =\n" << model.lin->B << "\nC =\n" << model.lin->C
               << "\nfinite-difference agreement: " << model.lin->fd_error << "\n";
        }
        for (const auto& w : model.warnings) os << "warning: " << w << "\n";
    }
    std::cout << os.str();
    std::ofstream(out / "validate.txt") << os.str();
    return rep.pass() ? exit_ok : exit_validation;
}

int cmd_synthesize(const Args& a) {
    const auto cfg = load_config(a.config);
    const auto model = design_model(cfg);
    const auto run = synthesize(cfg, model);
    const auto out = output_dir(cfg, a);
    write_synthesis(out, cfg, model, run);
    std::ifstream summary(out / "summary.txt");
    std::cout << summary.rdbuf() << "written to " << out.string() << "\n";
    return run.certificates_pass() ? exit_ok : exit_infeasible;
}

void print_simulation(const SimulationRun& run, const fs::path& dir) {
    const auto& tr = run.trace;
    std::cout << "steps " << tr.steps << (tr.aborted ? " (aborted)" : "") << ", settling time of "
              << run.monitored_name << ": " << run.diag.settling_time << " s, energy residual " << tr.energy_residual
              << ", regulation at t_end " << (run.regulation.empty() ? 0.0 : run.regulation.back())
              << ", step-halving ratio " << run.step_halving_ratio << (run.order_ok ? "" : " (outside [3.5, 4.5])")
              << "\n  written to " << dir.string() << "\n";
    if (tr.aborted) std::cerr << "simulation aborted: " << tr.abort_reason << "\n";
}

int cmd_simulate(const Args& a) {
    const auto cfg = load_config(a.config);
    const auto model = design_model(cfg);
    const auto out = output_dir(cfg, a);
    std::optional<DesignBundle> bundle;
    fs::path dir = out / "open-loop";
    if (!a.open_loop) {
        const fs::path bdir = a.bundle.empty() ? out / ("design" + std::to_string(a.design)) : fs::path(a.bundle);
        if (!fs::is_directory(bdir)) {
            std::cerr << "no design bundle at " << bdir.string() << "; run synthesize first or pass --open-loop\n";
            return exit_validation;
        }
        bundle = read_bundle(bdir);
        if (bundle->ctrl.n() != model.sys.n() || bundle->ctrl.m() != model.sys.m()) {
            std::cerr << "design bundle does not match the configured plant\n";
            return exit_validation;
        }
        dir = out / ("sim-design" + std::to_string(bundle->design));
    }
    const auto run = simulate(cfg, model, bundle ? &bundle->ctrl : nullptr);
    write_simulation(dir, cfg, model, run);
    print_simulation(run, dir);
    return run.trace.aborted ? exit_simulation : exit_ok;
}

int cmd_demo(const Args& a, PlantKind kind) {
    const auto cfg = load_config(a.config);
    if (cfg.plant.kind != kind) {
        std::cerr << "config describes a " << to_string(cfg.plant.kind) << " plant\n";
        return exit_validation;
    }
    const auto model = design_model(cfg);
    const auto out = output_dir(cfg, a);
    const auto syn = synthesize(cfg, model);
    write_synthesis(out, cfg, model, syn);
    std::cout << "observer: abscissa(A - LC) = " << syn.observer.spectrum.spectral_abscissa << "\n";
    for (std::size_t i = 0; i < syn.designs.size(); ++i) {
        const auto& d = syn.designs[i];
        std::cout << "design " << d.design << ": abscissa(A - BK) = " << syn.state_feedback[i].spectral_abscissa
                  << ", SPR " << d.cert.spr_epsilon << ", OSP " << d.cert.osp_epsilon << ", ZSD "
                  << (d.cert.zsd ? "yes" : "no") << "\n";
    }
    int code = syn.certificates_pass() ? exit_ok : exit_infeasible;
    auto one = [&](const ControllerRealization* c, const std::string& label) {
        const auto run = simulate(cfg, model, c);
        const fs::path dir = out / label;
        write_simulation(dir, cfg, model, run);
        std::cout << label << ": ";
        print_simulation(run, dir);
        if (run.trace.aborted) code = exit_simulation;
    };
    one(nullptr, "open-loop");
    for (const auto& d : syn.designs) one(&d.ctrl, "sim-design" + std::to_string(d.design));
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Observer-based port-Hamiltonian controller synthesis and simulation"};
    app.require_subcommand(1);
    Args a;
    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", a.config, "run configuration (INI)");
        if (config_required) opt->required()->check(CLI::ExistingFile);
        sub->add_option("--out", a.out, "output directory (default: [run] out)");
    };
    auto* validate = app.add_subcommand("validate", "check pH structure of the configured plant");
    add_common(validate, true);
    auto* synth = app.add_subcommand("synthesize", "design observer and controllers, write design bundles");
    add_common(synth, true);
    auto* sim = app.add_subcommand("simulate", "simulate a design bundle or the open loop");
    add_common(sim, true);
    sim->add_option("--design", a.design, "design index")->check(CLI::Range(1, 2));
    sim->add_option("--bundle", a.bundle, "design bundle directory (default: <out>/design<k>)");
    sim->add_flag("--open-loop", a.open_loop, "simulate without controller");
    auto* beam = app.add_subcommand("demo-beam", "full beam pipeline");
    add_common(beam, false);
    auto* mems = app.add_subcommand("demo-mems", "full MEMS pipeline");
    add_common(mems, false);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*validate) return cmd_validate(a);
        if (*synth) return cmd_synthesize(a);
        if (*sim) return cmd_simulate(a);
        if (*beam) {
            if (a.config.empty()) a.config = "configs/beam.ini";
            return cmd_demo(a, PlantKind::beam);
        }
        if (*mems) {
            if (a.config.empty()) a.config = "configs/mems.ini";
            return cmd_demo(a, PlantKind::mems);
        }
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n" << e.diagnostics();
        return exit_infeasible;
    } catch (const NumericalError& e) {
        std::cerr << "synthesis failed: " << e.what() << "\n";
        return exit_infeasible;
    } catch (const SimulationError& e) {
        std::cerr << "simulation aborted at step " << e.step() << ": " << e.what() << "\n";
        return exit_simulation;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return exit_validation;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation;
    }
    return exit_validation;
}
