#pragma once

// CSV serialization of matrices and design bundles. Numbers are written with
// 17 significant digits so a write/read cycle reproduces every double exactly.

#include <complex>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "phobs/core.hpp"
#include "phobs/synthesis.hpp"

namespace phobs {

class IoError : public Error {
public:
    using Error::Error;
};

inline std::ostream& full_precision(std::ostream& os) {
    return os << std::setprecision(std::numeric_limits<double>::max_digits10);
}

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& M) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    full_precision(out);
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        for (Eigen::Index c = 0; c < M.cols(); ++c) out << (c ? "," : "") << M(r, c);
        out << "\n";
    }
    if (!out) throw IoError("write failed for " + path.string());
}

inline Matrix read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError(path.string() + ": bad number '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) throw IoError(path.string() + ": ragged rows");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError(path.string() + ": empty matrix file");
    Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (Eigen::Index r = 0; r < M.rows(); ++r)
        for (Eigen::Index c = 0; c < M.cols(); ++c) M(r, c) = rows[r][c];
    return M;
}

inline void write_eigenvalues_csv(std::ostream& out, const std::string& label,
                                  const std::vector<std::complex<double>>& ev) {
    full_precision(out);
    for (const auto& e : ev) out << label << "," << e.real() << "," << e.imag() << "\n";
}

// ============================================================================
// Design bundle: observer gain plus controller realization of one design
// ============================================================================

struct DesignBundle {
    int design = 0;
    Matrix L;
    ControllerRealization ctrl;
    PassivityCertificate cert;
};

namespace detail {

inline const std::vector<std::pair<std::string, Matrix ControllerRealization::*>>& bundle_fields() {
    static const std::vector<std::pair<std::string, Matrix ControllerRealization::*>> f = {
        {"J_c", &ControllerRealization::J_c}, {"R_c", &ControllerRealization::R_c},
        {"Q_c", &ControllerRealization::Q_c}, {"B_c", &ControllerRealization::B_c},
        {"K", &ControllerRealization::K},     {"B", &ControllerRealization::B},
        {"X", &ControllerRealization::X},     {"S_c", &ControllerRealization::S_c},
    };
    return f;
}

}  // namespace detail

inline void write_bundle(const std::filesystem::path& dir, const DesignBundle& b) {
    std::filesystem::create_directories(dir);
    write_matrix_csv(dir / "L.csv", b.L);
    for (const auto& [name, field] : detail::bundle_fields()) write_matrix_csv(dir / (name + ".csv"), b.ctrl.*field);
    std::ofstream out(dir / "certificates.csv");
    if (!out) throw IoError("cannot write certificates in " + dir.string());
    full_precision(out);
    out << "key,value\n"
        << "design," << b.design << "\n"
        << "spr_epsilon," << b.cert.spr_epsilon << "\n"
        << "spr_witness," << b.cert.spr_witness << "\n"
        << "osp_epsilon," << b.cert.osp_epsilon << "\n"
        << "osp_witness," << b.cert.osp_witness << "\n"
        << "zsd," << (b.cert.zsd ? 1 : 0) << "\n"
        << "lambda_min_rc," << b.cert.lambda_min_rc << "\n"
        << "match_residual," << b.ctrl.match_residual << "\n"
        << "slack_r_lower," << b.ctrl.slack_r_lower << "\n"
        << "slack_r_upper," << b.ctrl.slack_r_upper << "\n"
        << "slack_q_lower," << b.ctrl.slack_q_lower << "\n"
        << "slack_q_upper," << b.ctrl.slack_q_upper << "\n";
}

inline DesignBundle read_bundle(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("design bundle not found: " + dir.string());
    DesignBundle b;
    b.L = read_matrix_csv(dir / "L.csv");
    for (const auto& [name, field] : detail::bundle_fields()) b.ctrl.*field = read_matrix_csv(dir / (name + ".csv"));
    std::ifstream in(dir / "certificates.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        const auto key = line.substr(0, comma);
        const double v = std::stod(line.substr(comma + 1));
        if (key == "design") b.design = static_cast<int>(v);
        else if (key == "spr_epsilon") b.cert.spr_epsilon = v;
        else if (key == "spr_witness") b.cert.spr_witness = v;
        else if (key == "osp_epsilon") b.cert.osp_epsilon = v;
        else if (key == "osp_witness") b.cert.osp_witness = v;
        else if (key == "zsd") b.cert.zsd = v != 0.0;
        else if (key == "lambda_min_rc") b.cert.lambda_min_rc = v;
        else if (key == "match_residual") b.ctrl.match_residual = v;
        else if (key == "slack_r_lower") b.ctrl.slack_r_lower = v;
        else if (key == "slack_r_upper") b.ctrl.slack_r_upper = v;
        else if (key == "slack_q_lower") b.ctrl.slack_q_lower = v;
        else if (key == "slack_q_upper") b.ctrl.slack_q_upper = v;
    }
    const auto n = b.ctrl.Q_c.rows();
    const bool ok = b.ctrl.J_c.rows() == n && b.ctrl.R_c.rows() == n && b.ctrl.B_c.rows() == n &&
                    b.ctrl.B.rows() == n && b.L.rows() == n && b.ctrl.Q_c.cols() == n;
    if (!ok) throw IoError("design bundle " + dir.string() + " has inconsistent shapes");
    return b;
}

}  // namespace phobs
