#pragma once

// Run configuration: a sectioned INI document whose matrix entries accept
// `s*I`, `s*diag(d1, ..., dk)`, a bare scalar (meaning s*I) or a JSON row
// list. Identity-shaped entries take their dimension from the plant.

#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "phobs/core.hpp"
#include "phobs/lmi.hpp"
#include "phobs/models.hpp"
#include "phobs/sim.hpp"
#include "phobs/synthesis.hpp"

namespace phobs {

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// ============================================================================
// Matrix literals
// ============================================================================

class MatrixLiteral {
public:
    enum class Kind { scaled_identity, diagonal, dense };

    static MatrixLiteral parse(const std::string& text) {
        static const std::string num = R"(([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))";
        static const std::regex scalar_re("^\\s*" + num + "\\s*$");
        static const std::regex ident_re("^\\s*(?:" + num + "\\s*\\*\\s*)?I\\s*$");
        static const std::regex diag_re("^\\s*(?:" + num + "\\s*\\*\\s*)?diag\\s*\\(([^)]*)\\)\\s*$");
        MatrixLiteral s;
        s.text_ = text;
        std::smatch mt;
        if (std::regex_match(text, mt, scalar_re)) {
            s.kind_ = Kind::scaled_identity;
            s.scale_ = std::stod(mt[1]);
        } else if (std::regex_match(text, mt, ident_re)) {
            s.kind_ = Kind::scaled_identity;
            s.scale_ = mt[1].matched ? std::stod(mt[1]) : 1.0;
        } else if (std::regex_match(text, mt, diag_re)) {
            s.kind_ = Kind::diagonal;
            s.scale_ = mt[1].matched ? std::stod(mt[1]) : 1.0;
            std::stringstream ss(mt[2].str());
            std::string item;
            std::vector<double> d;
            while (std::getline(ss, item, ',')) {
                if (!std::regex_match(item, scalar_re)) throw ConfigError("bad diag entry '" + item + "' in '" + text + "'");
                d.push_back(std::stod(item));
            }
            if (d.empty()) throw ConfigError("empty diag() in '" + text + "'");
            s.values_ = Eigen::Map<Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
        } else {
            s.kind_ = Kind::dense;
            s.dense_ = parse_rows(text);
        }
        return s;
    }

    // JSON list of equally long rows; a flat list is a column vector.
    static Matrix parse_rows(const std::string& text) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("cannot parse matrix '" + text + "': " + e.what());
        }
        return from_json(j, text);
    }

    static Matrix from_json(const nlohmann::json& j, const std::string& what) {
        if (!j.is_array() || j.empty()) throw ConfigError("matrix '" + what + "' must be a non-empty list");
        if (!j.front().is_array()) {
            Matrix v(static_cast<Eigen::Index>(j.size()), 1);
            for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i), 0) = number(j[i], what);
            return v;
        }
        const auto rows = static_cast<Eigen::Index>(j.size());
        const auto cols = static_cast<Eigen::Index>(j.front().size());
        Matrix M(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto& row = j[static_cast<std::size_t>(r)];
            if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
                throw ConfigError("matrix '" + what + "' has ragged rows");
            }
            for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = number(row[static_cast<std::size_t>(c)], what);
        }
        return M;
    }

    [[nodiscard]] Kind kind() const { return kind_; }
    [[nodiscard]] const std::string& text() const { return text_; }

    [[nodiscard]] Matrix resolve(Eigen::Index n, const std::string& name) const {
        switch (kind_) {
            case Kind::scaled_identity:
                return scale_ * Matrix::Identity(n, n);
            case Kind::diagonal:
                if (values_.size() != n) {
                    throw DimensionError(name + " = '" + text_ + "' has " + std::to_string(values_.size()) +
                                         " diagonal entries, expected " + std::to_string(n));
                }
                return (scale_ * values_).asDiagonal();
            case Kind::dense:
                if (dense_.rows() != n || dense_.cols() != n) {
                    throw DimensionError(name + " is " + shape_of(dense_) + ", expected " + std::to_string(n) + "x" +
                                         std::to_string(n));
                }
                return dense_;
        }
        return {};
    }

private:
    static double number(const nlohmann::json& v, const std::string& what) {
        if (!v.is_number()) throw ConfigError("matrix '" + what + "' has a non-numeric entry");
        return v.get<double>();
    }

    Kind kind_ = Kind::scaled_identity;
    double scale_ = 1.0;
    Vector values_;
    Matrix dense_;
    std::string text_;
};

// ============================================================================
// Run configuration
// ============================================================================

enum class PlantKind { beam, mems, matrices };

inline const char* to_string(PlantKind k) {
    switch (k) {
        case PlantKind::beam: return "beam";
        case PlantKind::mems: return "mems";
        case PlantKind::matrices: return "matrices";
    }
    return "?";
}

struct PlantSection {
    PlantKind kind = PlantKind::beam;
    BeamParams beam;
    int n_d = 5;              // design-model elements
    double tip_force = 0.01;  // initial static tip load
    MemsParams mems;
    double q_star = 0.5e-6;
    std::filesystem::path matrices_file;
    Matrix J, R, Q, B;  // explicit matrices, unvalidated
};

struct ObserverSection {
    DesignBoundsIda bounds;
    AnnihilatorBasis annihilator = AnnihilatorBasis::orthonormal;
    double energy_weight = 1.0;
};

struct SimSection {
    SimConfig cfg;
    int plant_n_d = 100;        // beam simulation grid
    double charge_ratio = 0.9;  // MEMS Q(0) = charge_ratio * Q*
    Vector x0;                  // explicit-matrix plants
    double settling_band = 0.02;
    long order_check_steps = 100;
};

struct RunConfig {
    std::string name;
    std::filesystem::path source;
    std::filesystem::path out_dir;
    PlantSection plant;
    ObserverSection observer;
    std::vector<DesignBoundsCtrl> controllers;  // design i is controllers[i - 1]
    SimSection sim;
    Tolerances tol;
    lmi::SolverOptions solver;

    [[nodiscard]] SynthesisOptions synthesis_options() const {
        SynthesisOptions o;
        o.solver = solver;
        o.annihilator = observer.annihilator;
        o.energy_weight = observer.energy_weight;
        return o;
    }
    [[nodiscard]] const DesignBoundsCtrl& design(int i) const {
        if (i < 1 || i > static_cast<int>(controllers.size())) {
            throw ConfigError("design " + std::to_string(i) + " is not configured (have " +
                              std::to_string(controllers.size()) + ")");
        }
        return controllers[static_cast<std::size_t>(i - 1)];
    }
};

namespace detail {

using boost::property_tree::ptree;

inline const ptree& section(const ptree& root, const std::string& name) {
    const auto it = root.find(name);
    if (it == root.not_found()) throw ConfigError("missing section [" + name + "]");
    return it->second;
}

inline std::optional<std::string> opt_string(const ptree& sec, const std::string& key) {
    const auto it = sec.find(key);
    if (it == sec.not_found()) return std::nullopt;
    return it->second.data();
}

inline std::string req_string(const ptree& sec, const std::string& sname, const std::string& key) {
    auto v = opt_string(sec, key);
    if (!v) throw ConfigError("missing key '" + key + "' in [" + sname + "]");
    return *v;
}

inline double to_double(const std::string& text, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': '" + text + "' is not a number");
    }
}

inline double get_double(const ptree& sec, const std::string& key, double fallback) {
    auto v = opt_string(sec, key);
    return v ? to_double(*v, key) : fallback;
}

inline long get_long(const ptree& sec, const std::string& key, long fallback) {
    const double v = get_double(sec, key, static_cast<double>(fallback));
    if (v != std::floor(v)) throw ConfigError("key '" + key + "' must be an integer");
    return static_cast<long>(v);
}

inline Matrix get_matrix(const ptree& sec, const std::string& sname, const std::string& key, Eigen::Index n) {
    return MatrixLiteral::parse(req_string(sec, sname, key)).resolve(n, sname + "." + key);
}

inline void load_matrices_file(PlantSection& p) {
    std::ifstream in(p.matrices_file);
    if (!in) throw ConfigError("cannot open plant matrices file " + p.matrices_file.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("plant matrices file " + p.matrices_file.string() + ": " + e.what());
    }
    for (const char* key : {"J", "R", "Q", "B"}) {
        if (!j.contains(key)) throw ConfigError(std::string("plant matrices file lacks '") + key + "'");
    }
    p.J = MatrixLiteral::from_json(j["J"], "J");
    p.R = MatrixLiteral::from_json(j["R"], "R");
    p.Q = MatrixLiteral::from_json(j["Q"], "Q");
    p.B = MatrixLiteral::from_json(j["B"], "B");
}

}  // namespace detail

// State and port dimensions of the design model described by the plant section.
inline std::pair<Eigen::Index, Eigen::Index> design_dimensions(const PlantSection& p) {
    switch (p.kind) {
        case PlantKind::beam: return {4 * static_cast<Eigen::Index>(p.n_d), 4};
        case PlantKind::mems: return {3, 1};
        case PlantKind::matrices: return {p.Q.rows(), p.B.cols()};
    }
    return {0, 0};
}

inline RunConfig parse_config(const std::string& text, const std::filesystem::path& source = {}) {
    using detail::get_double;
    using detail::get_long;
    using detail::get_matrix;
    detail::ptree root;
    try {
        std::istringstream in(text);
        boost::property_tree::ini_parser::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config syntax: ") + e.what());
    }
    RunConfig c;
    c.source = source;
    const auto base = source.empty() ? std::filesystem::path(".") : source.parent_path();

    const detail::ptree empty;
    const auto& run = root.count("run") ? detail::section(root, "run") : empty;
    c.name = detail::opt_string(run, "name").value_or(source.stem().string());
    c.out_dir = detail::opt_string(run, "out").value_or("out/" + (c.name.empty() ? std::string("run") : c.name));
    c.solver.seed = static_cast<std::uint64_t>(get_long(run, "seed", 0));

    const auto& tol = root.count("tolerances") ? detail::section(root, "tolerances") : empty;
    c.tol.tol_struct = get_double(tol, "tol_struct", c.tol.tol_struct);
    c.tol.tol_psd = get_double(tol, "tol_psd", c.tol.tol_psd);
    c.tol.tol_pd = get_double(tol, "tol_pd", c.tol.tol_pd);
    c.tol.lmi_margin = get_double(tol, "lmi_margin", c.tol.lmi_margin);
    c.tol.newton_tol = get_double(tol, "newton_tol", c.tol.newton_tol);
    c.tol.validate();

    const auto& sol = root.count("solver") ? detail::section(root, "solver") : empty;
    c.solver.max_iter = static_cast<int>(get_long(sol, "max_iter", c.solver.max_iter));
    c.solver.x_bound = get_double(sol, "x_bound", c.solver.x_bound);
    c.solver.gap_tol = get_double(sol, "gap_tol", c.solver.gap_tol);
    c.solver.refinements = static_cast<int>(get_long(sol, "refinements", c.solver.refinements));
    c.solver.center_fraction = get_double(sol, "center_fraction", c.solver.center_fraction);

    const auto& pl = detail::section(root, "plant");
    const auto type = detail::req_string(pl, "plant", "type");
    auto& p = c.plant;
    if (type == "beam") {
        p.kind = PlantKind::beam;
        p.n_d = static_cast<int>(get_long(pl, "n_d", p.n_d));
        p.beam.T = get_double(pl, "T", p.beam.T);
        p.beam.rho = get_double(pl, "rho", p.beam.rho);
        p.beam.EI = get_double(pl, "EI", p.beam.EI);
        p.beam.Irho = get_double(pl, "Irho", p.beam.Irho);
        p.beam.a = get_double(pl, "a", p.beam.a);
        p.beam.b = get_double(pl, "b", p.beam.b);
        p.tip_force = get_double(pl, "tip_force", p.tip_force);
        p.beam.validate();
        if (p.n_d < 2) throw ConfigError("[plant] n_d must be >= 2");
    } else if (type == "mems") {
        p.kind = PlantKind::mems;
        auto& m = p.mems;
        m.k1 = get_double(pl, "k1", m.k1);
        m.k2 = get_double(pl, "k2", m.k2);
        m.m = get_double(pl, "m", m.m);
        m.eps = get_double(pl, "eps", m.eps);
        m.As = get_double(pl, "As", m.As);
        m.qmax = get_double(pl, "qmax", m.qmax);
        m.b_damp = get_double(pl, "b_damp", m.b_damp);
        m.r = get_double(pl, "r", m.r);
        p.q_star = get_double(pl, "q_star", p.q_star);
        m.validate();
        if (!(p.q_star > 0 && p.q_star < m.qmax)) throw ConfigError("[plant] q_star must lie in (0, qmax)");
    } else if (type == "matrices") {
        p.kind = PlantKind::matrices;
        p.matrices_file = base / detail::req_string(pl, "plant", "file");
        detail::load_matrices_file(p);
    } else {
        throw ConfigError("[plant] type must be beam, mems or matrices, got '" + type + "'");
    }
    const auto [n, m] = design_dimensions(p);

    const auto& sim = root.count("sim") ? detail::section(root, "sim") : empty;
    auto& s = c.sim;
    s.cfg.dt = get_double(sim, "dt", p.kind == PlantKind::mems ? 1e-6 : 1e-4);
    s.cfg.t_end = get_double(sim, "t_end", p.kind == PlantKind::mems ? 0.01 : 10.0);
    s.cfg.newton_max_iter = static_cast<int>(get_long(sim, "newton_max_iter", s.cfg.newton_max_iter));
    s.cfg.newton_tol = get_double(sim, "newton_tol", c.tol.newton_tol);
    s.cfg.record_stride = get_long(sim, "record_stride", 1);
    s.plant_n_d = static_cast<int>(get_long(sim, "plant_n_d", s.plant_n_d));
    s.charge_ratio = get_double(sim, "charge_ratio", s.charge_ratio);
    s.settling_band = get_double(sim, "settling_band", s.settling_band);
    s.order_check_steps = get_long(sim, "order_check_steps", s.order_check_steps);
    if (auto x0 = detail::opt_string(sim, "x0")) s.x0 = MatrixLiteral::parse_rows(*x0);
    s.cfg.validate();
    if (p.kind == PlantKind::beam && s.plant_n_d < 2) throw ConfigError("[sim] plant_n_d must be >= 2");
    if (!(s.settling_band > 0 && s.settling_band < 1)) throw ConfigError("[sim] settling_band must lie in (0, 1)");
    if (s.order_check_steps < 4) throw ConfigError("[sim] order_check_steps must be >= 4");
    if (p.kind == PlantKind::matrices && s.x0.size() && s.x0.size() != n) {
        throw DimensionError("[sim] x0 has " + std::to_string(s.x0.size()) + " entries, expected " + std::to_string(n));
    }

    if (root.count("observer")) {
        const auto& ob = detail::section(root, "observer");
        auto& b = c.observer.bounds;
        b.Lambda1 = get_matrix(ob, "observer", "lambda1", n);
        b.Lambda2 = get_matrix(ob, "observer", "lambda2", n);
        b.Xi1 = get_matrix(ob, "observer", "xi1", n - m);
        b.Xi2 = get_matrix(ob, "observer", "xi2", n - m);
        b.gamma = detail::to_double(detail::req_string(ob, "observer", "gamma"), "gamma");
        b.validate(n, n - m, c.tol);
        const auto basis = detail::opt_string(ob, "annihilator").value_or("orthonormal");
        if (basis == "orthonormal") {
            c.observer.annihilator = AnnihilatorBasis::orthonormal;
        } else if (basis == "echelon") {
            c.observer.annihilator = AnnihilatorBasis::echelon;
        } else {
            throw ConfigError("[observer] annihilator must be orthonormal or echelon");
        }
        c.observer.energy_weight = get_double(ob, "energy_weight", 1.0);
        if (!(c.observer.energy_weight > 0)) throw ConfigError("[observer] energy_weight must be positive");
    }

    for (int i = 1;; ++i) {
        const std::string name = "controller" + std::to_string(i);
        if (!root.count(name)) break;
        const auto& cs = detail::section(root, name);
        DesignBoundsCtrl d;
        d.Gamma1 = get_matrix(cs, name, "gamma1", n);
        d.Gamma2 = get_matrix(cs, name, "gamma2", n);
        d.Delta1 = get_matrix(cs, name, "delta1", n);
        d.Delta2 = get_matrix(cs, name, "delta2", n);
        try {
            d.validate(n, c.tol);
        } catch (const ValidationError& e) {
            throw ConfigError("[" + name + "] " + e.what());
        }
        c.controllers.push_back(std::move(d));
    }
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

}  // namespace phobs
