#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phobs/errors.hpp"

namespace phobs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ============================================================================
// Tolerances
// ============================================================================

struct Tolerances {
    double tol_struct = 1e-9;  // relative, symmetry / skew-symmetry
    double tol_psd = 1e-8;     // absolute, lambda_min >= -tol_psd
    double tol_pd = 1e-10;     // absolute, lambda_min > tol_pd
    double lmi_margin = 1e-8;  // normalized strictness margin of pd LMI blocks
    double newton_tol = 1e-10;

    void validate() const {
        if (!(tol_struct > 0 && tol_psd > 0 && tol_pd > 0 && lmi_margin > 0 && newton_tol > 0)) {
            throw ValidationError("tolerances must be strictly positive");
        }
    }
};

// ============================================================================
// Small dense helpers
// ============================================================================

inline std::string shape_of(const Matrix& M) {
    return std::to_string(M.rows()) + "x" + std::to_string(M.cols());
}

inline Matrix symmetric_part(const Matrix& M) { return 0.5 * (M + M.transpose()); }

inline Matrix skew_part(const Matrix& M) { return 0.5 * (M - M.transpose()); }

inline double max_abs(const Matrix& M) { return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff(); }

// Relative size of the antisymmetric (resp. symmetric) residual.
inline double symmetry_violation(const Matrix& M) {
    return max_abs(M - M.transpose()) / std::max(max_abs(M), std::numeric_limits<double>::min());
}

inline double skew_violation(const Matrix& M) {
    return max_abs(M + M.transpose()) / std::max(max_abs(M), std::numeric_limits<double>::min());
}

// Eigenvalues of the symmetric part, ascending. Always uses the symmetric
// solver so PSD checks never see spurious imaginary parts.
inline Vector sym_eigenvalues(const Matrix& M) {
    if (M.rows() != M.cols()) throw DimensionError("sym_eigenvalues: non-square " + shape_of(M));
    if (M.size() == 0) return Vector();
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric_part(M), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

inline double lambda_min(const Matrix& M) {
    const Vector ev = sym_eigenvalues(M);
    return ev.size() ? ev(0) : std::numeric_limits<double>::infinity();
}

inline double lambda_max(const Matrix& M) {
    const Vector ev = sym_eigenvalues(M);
    return ev.size() ? ev(ev.size() - 1) : -std::numeric_limits<double>::infinity();
}

// 2-norm condition number via singular values.
inline double condition_number(const Matrix& M) {
    if (M.size() == 0) return 1.0;
    Eigen::JacobiSVD<Matrix> svd(M);
    const auto& s = svd.singularValues();
    const double smin = s(s.size() - 1);
    return smin > 0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

inline int numerical_rank(const Matrix& M) {
    if (M.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(M);
    const auto& s = svd.singularValues();
    const double tol = std::max(M.rows(), M.cols()) * std::numeric_limits<double>::epsilon() * s(0);
    return static_cast<int>((s.array() > tol).count());
}

// Inverse of a symmetric positive definite matrix through its Cholesky factor;
// the result is symmetrized.
inline Matrix spd_inverse(const Matrix& M) {
    Eigen::LLT<Matrix> llt(symmetric_part(M));
    if (llt.info() != Eigen::Success) throw NumericalError("spd_inverse: matrix is not positive definite");
    return symmetric_part(llt.solve(Matrix::Identity(M.rows(), M.cols())));
}

// ============================================================================
// Linear port-Hamiltonian system  x' = (J - R) Q x + B u,  y = B^T Q x
// ============================================================================

class LinearPHSystem {
public:
    LinearPHSystem() = default;

    // Dimension-checked constructor; no structural repair. Use `create` for
    // data that may carry roundoff in its symmetries.
    LinearPHSystem(Matrix J, Matrix R, Matrix Q, Matrix B)
        : J_(std::move(J)), R_(std::move(R)), Q_(std::move(Q)), B_(std::move(B)) {
        check_dimensions();
    }

    // Symmetries violated by at most tol_struct are repaired by projection and
    // reported in `warnings`; larger violations throw ValidationError.
    static LinearPHSystem create(Matrix J, Matrix R, Matrix Q, Matrix B, const Tolerances& tol,
                                 std::vector<std::string>* warnings = nullptr) {
        LinearPHSystem sys(std::move(J), std::move(R), std::move(Q), std::move(B));
        auto repair = [&](Matrix& M, double violation, bool skew, const char* name) {
            if (violation == 0.0) return;
            if (violation > tol.tol_struct) {
                std::ostringstream os;
                os << name << (skew ? " is not skew-symmetric" : " is not symmetric") << " (relative violation "
                   << violation << " > " << tol.tol_struct << ")";
                throw ValidationError(os.str());
            }
            M = skew ? skew_part(M) : symmetric_part(M);
            if (warnings) {
                std::ostringstream os;
                os << name << " symmetrized (relative violation " << violation << ")";
                warnings->push_back(os.str());
            }
        };
        repair(sys.J_, skew_violation(sys.J_), true, "J");
        repair(sys.R_, symmetry_violation(sys.R_), false, "R");
        repair(sys.Q_, symmetry_violation(sys.Q_), false, "Q");
        return sys;
    }

    [[nodiscard]] const Matrix& J() const noexcept { return J_; }
    [[nodiscard]] const Matrix& R() const noexcept { return R_; }
    [[nodiscard]] const Matrix& Q() const noexcept { return Q_; }
    [[nodiscard]] const Matrix& B() const noexcept { return B_; }
    [[nodiscard]] Eigen::Index n() const noexcept { return Q_.rows(); }
    [[nodiscard]] Eigen::Index m() const noexcept { return B_.cols(); }

    [[nodiscard]] Matrix A() const { return (J_ - R_) * Q_; }
    [[nodiscard]] Matrix C() const { return B_.transpose() * Q_; }

    [[nodiscard]] double hamiltonian(const Vector& x) const { return 0.5 * x.dot(Q_ * x); }

private:
    void check_dimensions() const {
        const auto n = Q_.rows();
        const bool ok = J_.rows() == n && J_.cols() == n && R_.rows() == n && R_.cols() == n && Q_.cols() == n &&
                        B_.rows() == n && n > 0;
        if (!ok) {
            throw DimensionError("LinearPHSystem: inconsistent shapes J " + shape_of(J_) + ", R " + shape_of(R_) +
                                 ", Q " + shape_of(Q_) + ", B " + shape_of(B_));
        }
    }

    Matrix J_, R_, Q_, B_;
};

struct PlantMatrices {
    Matrix A;
    Matrix C;
};

// A = (J - R) Q and C = B^T Q.
inline PlantMatrices plant_abc(const LinearPHSystem& sys) { return {sys.A(), sys.C()}; }

// ============================================================================
// Structural validation
// ============================================================================

struct StructureCheck {
    std::string name;
    double measured;   // violation magnitude or the tested eigenvalue
    double threshold;
    bool pass;
};

struct StructureReport {
    Eigen::Index n = 0;
    Eigen::Index m = 0;
    std::vector<StructureCheck> checks;

    [[nodiscard]] bool pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
    }

    [[nodiscard]] std::string to_string() const {
        std::ostringstream os;
        os << "n = " << n << ", m = " << m << "\n";
        for (const auto& c : checks) {
            os << (c.pass ? "  [pass] " : "  [FAIL] ") << c.name << ": measured " << c.measured << ", threshold "
               << c.threshold << "\n";
        }
        os << (pass() ? "structure: pass" : "structure: FAIL") << "\n";
        return os.str();
    }
};

inline StructureReport validate_ph(const Matrix& J, const Matrix& R, const Matrix& Q, const Matrix& B,
                                   const Tolerances& tol) {
    const auto n = Q.rows();
    if (J.rows() != n || J.cols() != n || R.rows() != n || R.cols() != n || Q.cols() != n || B.rows() != n) {
        throw DimensionError("validate_ph: inconsistent shapes J " + shape_of(J) + ", R " + shape_of(R) + ", Q " +
                             shape_of(Q) + ", B " + shape_of(B));
    }
    StructureReport rep;
    rep.n = n;
    rep.m = B.cols();

    const double skew = skew_violation(J);
    rep.checks.push_back({"J skew-symmetric", skew, tol.tol_struct, skew <= tol.tol_struct});

    const double rsym = symmetry_violation(R);
    rep.checks.push_back({"R symmetric", rsym, tol.tol_struct, rsym <= tol.tol_struct});
    const double rmin = lambda_min(R);
    rep.checks.push_back({"R positive semidefinite (lambda_min)", rmin, -tol.tol_psd, rmin >= -tol.tol_psd});

    const double qsym = symmetry_violation(Q);
    rep.checks.push_back({"Q symmetric", qsym, tol.tol_struct, qsym <= tol.tol_struct});
    const double qmin = lambda_min(Q);
    rep.checks.push_back({"Q positive definite (lambda_min)", qmin, tol.tol_pd, qmin > tol.tol_pd});

    const int rank = numerical_rank(B);
    const bool rank_ok = rank == B.cols() && B.cols() <= n;
    rep.checks.push_back({"B full column rank", static_cast<double>(rank), static_cast<double>(B.cols()), rank_ok});
    return rep;
}

inline StructureReport validate_ph(const LinearPHSystem& sys, const Tolerances& tol) {
    return validate_ph(sys.J(), sys.R(), sys.Q(), sys.B(), tol);
}

// ============================================================================
// Spectra
// ============================================================================

struct SpectralReport {
    std::vector<std::complex<double>> eigenvalues;  // sorted by decreasing real part
    double spectral_abscissa = -std::numeric_limits<double>::infinity();
    bool hurwitz = false;
};

inline SpectralReport spectrum(const Matrix& M) {
    if (M.rows() != M.cols()) throw DimensionError("spectrum: non-square matrix " + shape_of(M));
    if (!M.allFinite()) throw ValidationError("spectrum: matrix has non-finite entries");
    SpectralReport rep;
    if (M.size() == 0) return rep;
    Eigen::EigenSolver<Matrix> es(M, false);
    if (es.info() != Eigen::Success) throw NumericalError("spectrum: eigenvalue iteration did not converge");
    const auto& ev = es.eigenvalues();
    rep.eigenvalues.assign(ev.data(), ev.data() + ev.size());
    std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end(), [](const auto& a, const auto& b) {
        return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
    });
    rep.spectral_abscissa = rep.eigenvalues.front().real();
    rep.hurwitz = rep.spectral_abscissa < 0.0;
    return rep;
}

}  // namespace phobs
