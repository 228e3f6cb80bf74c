#pragma once

// Interconnection and damping assignment by LMIs, the dual observer problem,
// the pH observer-based controller and its passivity certificates.

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "phobs/core.hpp"
#include "phobs/lmi.hpp"

namespace phobs {

// Relative tolerance of the algebraic identities that hold by construction.
inline constexpr double tol_match = 1e-7;

// Condition number above which a linear solve or inversion is refused.
inline constexpr double max_condition = 1e12;

// ============================================================================
// Left annihilator
// ============================================================================

enum class AnnihilatorBasis {
    orthonormal,  // orthonormal basis of range(B)^perp
    echelon,      // reduced row echelon null-space basis of B^T (unit entries on free columns)
};

inline const char* to_string(AnnihilatorBasis b) { return b == AnnihilatorBasis::echelon ? "echelon" : "orthonormal"; }

// Rows of the result span the left null space of B, so that B_perp B = 0.
// The orthonormal basis comes from the full SVD of B with each row's largest
// entry made positive; the echelon basis is the rational null-space basis of
// B^T obtained by Gauss-Jordan elimination with partial pivoting. Both are
// deterministic for a fixed input.
inline Matrix left_annihilator(const Matrix& B, AnnihilatorBasis basis = AnnihilatorBasis::orthonormal) {
    const auto n = B.rows();
    const auto m = B.cols();
    if (m >= n) throw DimensionError("left_annihilator: B is " + shape_of(B) + ", need m < n");
    if (!B.allFinite()) throw ValidationError("left_annihilator: B has non-finite entries");
    if (numerical_rank(B) != m) throw ValidationError("left_annihilator: B is rank deficient");

    Matrix P(n - m, n);
    if (basis == AnnihilatorBasis::orthonormal) {
        Eigen::JacobiSVD<Matrix> svd(B, Eigen::ComputeFullU);
        P = svd.matrixU().rightCols(n - m).transpose();
        for (Eigen::Index i = 0; i < P.rows(); ++i) {
            Eigen::Index k = 0;
            P.row(i).cwiseAbs().maxCoeff(&k);
            if (P(i, k) < 0) P.row(i) *= -1.0;
        }
        return P;
    }

    Matrix R = B.transpose();  // m x n, reduced in place
    const double tol = std::max(R.rows(), R.cols()) * std::numeric_limits<double>::epsilon() * max_abs(R);
    std::vector<Eigen::Index> pivots;
    Eigen::Index row = 0;
    for (Eigen::Index col = 0; col < n && row < m; ++col) {
        Eigen::Index best = row;
        R.col(col).segment(row, m - row).cwiseAbs().maxCoeff(&best);
        best += row;
        if (std::abs(R(best, col)) <= tol) continue;
        R.row(row).swap(R.row(best));
        R.row(row) /= R(row, col);
        for (Eigen::Index i = 0; i < m; ++i)
            if (i != row) R.row(i) -= R(i, col) * R.row(row);
        pivots.push_back(col);
        ++row;
    }
    Eigen::Index k = 0;
    for (Eigen::Index col = 0; col < n; ++col) {
        if (std::find(pivots.begin(), pivots.end(), col) != pivots.end()) continue;
        P.row(k).setZero();
        P(k, col) = 1.0;
        for (std::size_t i = 0; i < pivots.size(); ++i) P(k, pivots[i]) = -R(static_cast<Eigen::Index>(i), col);
        ++k;
    }
    return P;
}

// ============================================================================
// Design types
// ============================================================================

struct SynthesisOptions {
    lmi::SolverOptions solver;
    AnnihilatorBasis annihilator = AnnihilatorBasis::orthonormal;
    // Barrier weight of the X > Lambda2^-1 block in the bounded assignment.
    // Values above 1 select solutions with larger X, i.e. Q_d closer to its
    // lower bound Lambda1; the feasible set is unchanged.
    double energy_weight = 1.0;
};

struct IdaDesign {
    Matrix J_d, R_d, Q_d, F, S_d;
    Matrix X;
    Matrix B_perp;
    double stacked_condition = 0.0;
    double match_residual = 0.0;  // ||(J_d - R_d) Q_d - (A + B F)||_F / ||A||_F
    lmi::Solution lmi;
    std::vector<std::string> warnings;
};

struct ObserverDesign {
    Matrix L;
    Matrix A_L;
    IdaDesign dual;
    double duality_residual = 0.0;  // ||(A - L C)^T - (J_d - R_d) Q_d||_F / ||A||_F
    SpectralReport spectrum;
};

struct DesignBoundsIda {
    Matrix Lambda1, Lambda2, Xi1, Xi2;
    double gamma = 0.0;

    void validate(Eigen::Index n, Eigen::Index n_perp, const Tolerances& tol) const {
        auto square = [](const Matrix& M, Eigen::Index k, const char* name) {
            if (M.rows() != k || M.cols() != k) {
                throw DimensionError(std::string(name) + " is " + shape_of(M) + ", expected " + std::to_string(k) +
                                     "x" + std::to_string(k));
            }
        };
        square(Lambda1, n, "Lambda1");
        square(Lambda2, n, "Lambda2");
        square(Xi1, n_perp, "Xi1");
        square(Xi2, n_perp, "Xi2");
        for (const auto* M : {&Lambda1, &Lambda2, &Xi1, &Xi2})
            if (symmetry_violation(*M) > tol.tol_struct) throw ValidationError("observer bounds must be symmetric");
        if (!(lambda_min(Lambda1) > tol.tol_pd)) throw ValidationError("bounds require 0 < Lambda1");
        if (!(lambda_min(Lambda2 - Lambda1) > tol.tol_pd)) throw ValidationError("bounds require Lambda1 < Lambda2");
        if (!(lambda_min(Xi1) >= -tol.tol_psd)) throw ValidationError("bounds require 0 <= Xi1");
        if (!(lambda_min(Xi2 - Xi1) > tol.tol_pd)) throw ValidationError("bounds require Xi1 < Xi2");
        if (!(gamma > 0) || !std::isfinite(gamma)) throw ValidationError("bounds require gamma > 0");
    }
};

struct DesignBoundsCtrl {
    Matrix Gamma1, Gamma2, Delta1, Delta2;

    void validate(Eigen::Index n, const Tolerances& tol) const {
        for (const auto* M : {&Gamma1, &Gamma2, &Delta1, &Delta2}) {
            if (M->rows() != n || M->cols() != n) {
                throw DimensionError("controller bound is " + shape_of(*M) + ", expected " + std::to_string(n) + "x" +
                                     std::to_string(n));
            }
            if (symmetry_violation(*M) > tol.tol_struct) throw ValidationError("controller bounds must be symmetric");
        }
        if (!(lambda_min(Gamma1) >= -tol.tol_psd)) throw ValidationError("bounds require 0 <= Gamma1");
        if (!(lambda_min(Gamma2 - Gamma1) > tol.tol_pd)) throw ValidationError("bounds require Gamma1 < Gamma2");
        if (!(lambda_min(Delta1) > tol.tol_pd)) throw ValidationError("bounds require 0 < Delta1");
        if (!(lambda_min(Delta2 - Delta1) > tol.tol_pd)) throw ValidationError("bounds require Delta1 < Delta2");
    }
};

struct ControllerRealization {
    Matrix J_c, R_c, Q_c, B_c, K, S_c;
    Matrix B;  // plant input map, drives the reference channel and y_r
    Matrix X;
    double match_residual = 0.0;
    // lambda_min of R_c - Gamma1, Gamma2 - R_c, Q_c - Delta1, Delta2 - Q_c
    double slack_r_lower = 0.0, slack_r_upper = 0.0, slack_q_lower = 0.0, slack_q_upper = 0.0;
    lmi::Solution lmi;
    std::vector<std::string> warnings;

    [[nodiscard]] Eigen::Index n() const { return Q_c.rows(); }
    [[nodiscard]] Eigen::Index m() const { return B_c.cols(); }
    [[nodiscard]] Matrix A_c() const { return (J_c - R_c) * Q_c; }
    [[nodiscard]] Vector y_c(const Vector& xhat) const { return B_c.transpose() * (Q_c * xhat); }
    [[nodiscard]] Vector y_r(const Vector& xhat) const { return B.transpose() * (Q_c * xhat); }
    [[nodiscard]] double hamiltonian(const Vector& xhat) const { return 0.5 * xhat.dot(Q_c * xhat); }
};

struct PassivityCertificate {
    double spr_epsilon = 0.0;
    double spr_witness = 0.0;  // lambda_min(2 Q_c R_c Q_c - spr_epsilon Q_c)
    double osp_epsilon = 0.0;
    double osp_witness = 0.0;  // lambda_min(R_c - osp_epsilon B_c B_c^T)
    bool zsd = false;
    double lambda_min_rc = 0.0;

    [[nodiscard]] bool all_positive() const { return spr_epsilon > 0 && osp_epsilon > 0 && zsd; }
};

// ============================================================================
// Interconnection and damping assignment
// ============================================================================

namespace detail {

inline double relative_residual(const Matrix& diff, const Matrix& A) {
    const double a = A.norm();
    const double d = diff.norm();
    return a > 0 ? d / a : d;
}

inline void check_plant_pair(const Matrix& A, const Matrix& B, const char* who) {
    if (A.rows() != A.cols()) throw DimensionError(std::string(who) + ": A must be square, got " + shape_of(A));
    if (B.rows() != A.rows()) {
        throw DimensionError(std::string(who) + ": B is " + shape_of(B) + ", A is " + shape_of(A));
    }
    if (!A.allFinite() || !B.allFinite()) throw ValidationError(std::string(who) + ": non-finite data");
}

// Builds S_d, J_d, R_d, Q_d and F from a solution X. gamma = 0 gives the
// unbounded construction.
inline IdaDesign ida_from_x(const Matrix& A, const Matrix& B, const Matrix& B_perp, const Matrix& X, double gamma) {
    const auto n = A.rows();
    const auto m = B.cols();
    IdaDesign d;
    d.X = X;
    d.B_perp = B_perp;
    const Matrix E = B_perp * A;

    Matrix stacked(n, n);
    stacked << B_perp, B.transpose();
    d.stacked_condition = condition_number(stacked);
    if (!(d.stacked_condition <= max_condition)) {
        std::ostringstream os;
        os << "stacked annihilator matrix is ill-conditioned (cond " << d.stacked_condition << ")";
        throw NumericalError(os.str());
    }
    const Matrix PPt = B_perp * B_perp.transpose();
    Matrix rhs(n, n);
    rhs.topRows(n - m) = E * X;
    rhs.bottomRows(m) = -B.transpose() * X * E.transpose() * PPt.llt().solve(B_perp) - gamma * B.transpose();
    d.S_d = stacked.partialPivLu().solve(rhs);

    d.J_d = skew_part(d.S_d);
    d.R_d = -symmetric_part(d.S_d);
    d.Q_d = spd_inverse(X);
    const Matrix BtB = B.transpose() * B;
    d.F = BtB.llt().solve(B.transpose() * (d.S_d * d.Q_d - A));
    d.match_residual = relative_residual((d.J_d - d.R_d) * d.Q_d - (A + B * d.F), A);
    return d;
}

inline void require_identity(double residual, const char* what) {
    if (!(residual <= tol_match)) {
        std::ostringstream os;
        os << what << " residual " << residual << " exceeds " << tol_match;
        throw NumericalError(os.str());
    }
}

}  // namespace detail

// Finds J_d, R_d >= 0, Q_d > 0 and F with (J_d - R_d) Q_d = A + B F. The LMI
// is homogeneous in X, so it is normalized by X <= I.
inline IdaDesign ida_design(const Matrix& A, const Matrix& B, const Tolerances& tol,
                            const SynthesisOptions& opts = {}) {
    detail::check_plant_pair(A, B, "ida_design");
    const auto n = A.rows();
    const Matrix Bp = left_annihilator(B, opts.annihilator);
    const Matrix E = Bp * A;

    lmi::Problem p;
    p.n = n;
    p.include_x_pd = true;
    p.constraints.push_back({"-(E X Bp^T + Bp X E^T) >= 0", Matrix::Zero(Bp.rows(), Bp.rows()), {{-E, Bp}},
                             lmi::Sense::psd});
    p.constraints.push_back(lmi::x_below("I - X >= 0", Matrix::Identity(n, n), lmi::Sense::psd));

    const auto sol = lmi::solve_feasible(p, tol, opts.solver);
    if (sol.status != lmi::Status::feasible) {
        throw InfeasibleError("assignment LMI is " + std::string(lmi::to_string(sol.status)) +
                                  ": the pair (A, B) is not stabilizable",
                              sol.diagnostics());
    }
    IdaDesign d = detail::ida_from_x(A, B, Bp, sol.X, 0.0);
    d.lmi = sol;
    detail::require_identity(d.match_residual, "assignment identity");
    if (!(lambda_min(d.R_d) >= -tol.tol_psd)) throw NumericalError("assignment produced R_d with negative eigenvalue");
    return d;
}

// Assignment with Lambda1 < Q_d < Lambda2, bounded damping and R_d > 0.
inline IdaDesign ida_design_bounded(const Matrix& A, const Matrix& B, const DesignBoundsIda& bounds,
                                    const Tolerances& tol, const SynthesisOptions& opts = {}) {
    detail::check_plant_pair(A, B, "ida_design_bounded");
    const auto n = A.rows();
    bounds.validate(n, n - B.cols(), tol);
    const Matrix Bp = left_annihilator(B, opts.annihilator);
    const Matrix E = Bp * A;

    std::vector<std::string> warnings;
    auto inverse_of = [&](const Matrix& M, const char* name) {
        const double c = condition_number(M);
        if (c > max_condition) {
            std::ostringstream os;
            os << name << " has condition number " << c << "; its inverse is inaccurate";
            warnings.push_back(os.str());
        }
        return spd_inverse(M);
    };
    const Matrix inv_l1 = inverse_of(bounds.Lambda1, "Lambda1");
    const Matrix inv_l2 = inverse_of(bounds.Lambda2, "Lambda2");

    lmi::Problem p;
    p.n = n;
    p.constraints.push_back(lmi::x_above("X - Lambda2^-1 > 0", inv_l2, lmi::Sense::pd));
    p.constraints.back().weight = opts.energy_weight;
    p.constraints.push_back(lmi::x_below("Lambda1^-1 - X > 0", inv_l1, lmi::Sense::pd));
    p.constraints.push_back({"-Xi1 - (E X Bp^T + Bp X E^T) >= 0", -bounds.Xi1, {{-E, Bp}}, lmi::Sense::psd});
    p.constraints.push_back({"Xi2 + (E X Bp^T + Bp X E^T) >= 0", bounds.Xi2, {{E, Bp}}, lmi::Sense::psd});

    const auto sol = lmi::solve_feasible(p, tol, opts.solver);
    if (sol.status != lmi::Status::feasible) {
        throw InfeasibleError("bounded assignment LMI is " + std::string(lmi::to_string(sol.status)),
                              sol.diagnostics());
    }
    IdaDesign d = detail::ida_from_x(A, B, Bp, sol.X, bounds.gamma);
    d.lmi = sol;
    d.warnings = std::move(warnings);
    detail::require_identity(d.match_residual, "assignment identity");

    const double lo = lambda_min(d.Q_d - bounds.Lambda1);
    const double hi = lambda_min(bounds.Lambda2 - d.Q_d);
    const double rd = lambda_min(d.R_d);
    if (!(lo > 0) || !(hi > 0) || !(rd > tol.tol_pd)) {
        std::ostringstream os;
        os << "bounded assignment failed certification: lambda_min(Q_d - Lambda1) = " << lo
           << ", lambda_min(Lambda2 - Q_d) = " << hi << ", lambda_min(R_d) = " << rd;
        throw NumericalError(os.str());
    }
    return d;
}

// Luenberger gain from the dual assignment problem on (A^T, C^T).
inline ObserverDesign observer_gain(const Matrix& A, const Matrix& C, const DesignBoundsIda& bounds,
                                    const Tolerances& tol, const SynthesisOptions& opts = {}) {
    if (C.cols() != A.rows()) throw DimensionError("observer_gain: C is " + shape_of(C) + ", A is " + shape_of(A));
    ObserverDesign o;
    try {
        o.dual = ida_design_bounded(A.transpose(), C.transpose(), bounds, tol, opts);
    } catch (const InfeasibleError& e) {
        throw InfeasibleError(std::string(e.what()) + ": the pair (A, C) is not detectable under these bounds",
                              e.diagnostics());
    }
    o.L = -o.dual.F.transpose();
    o.A_L = A - o.L * C;
    o.duality_residual =
        detail::relative_residual(o.A_L.transpose() - (o.dual.J_d - o.dual.R_d) * o.dual.Q_d, A);
    detail::require_identity(o.duality_residual, "duality identity");
    o.spectrum = phobs::spectrum(o.A_L);
    if (!o.spectrum.hurwitz) {
        std::ostringstream os;
        os << "observer error matrix A - L C is not Hurwitz (abscissa " << o.spectrum.spectral_abscissa << ")";
        throw NumericalError(os.str());
    }
    return o;
}

// ============================================================================
// Observer-based controller as a pH system
// ============================================================================

inline ControllerRealization controller_synthesis(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& L,
                                                  const DesignBoundsCtrl& bounds, const Tolerances& tol,
                                                  const SynthesisOptions& opts = {}) {
    detail::check_plant_pair(A, B, "controller_synthesis");
    const auto n = A.rows();
    if (C.rows() != B.cols() || C.cols() != n || L.rows() != n || L.cols() != B.cols()) {
        throw DimensionError("controller_synthesis: incompatible shapes B " + shape_of(B) + ", C " + shape_of(C) +
                             ", L " + shape_of(L));
    }
    bounds.validate(n, tol);

    ControllerRealization c;
    const Matrix A_L = A - L * C;
    const double abscissa = spectrum(A_L).spectral_abscissa;
    if (abscissa > 0) {
        std::ostringstream os;
        os << "A - L C is not Hurwitz (abscissa " << abscissa << ")";
        throw ValidationError(os.str());
    }
    if (abscissa >= -1e-12) {
        std::ostringstream os;
        os << "A - L C is marginally stable (abscissa " << abscissa << ")";
        c.warnings.push_back(os.str());
    }

    const Matrix BLt = B * L.transpose();
    const Matrix I = Matrix::Identity(n, n);
    lmi::Problem p;
    p.n = n;
    p.constraints.push_back(
        {"-2 Gamma1 + B L^T + L B^T - A_L X - X A_L^T >= 0", -2.0 * bounds.Gamma1 + BLt + BLt.transpose(),
         {{-A_L, I}}, lmi::Sense::psd});
    p.constraints.push_back(
        {"2 Gamma2 - B L^T - L B^T + A_L X + X A_L^T >= 0", 2.0 * bounds.Gamma2 - BLt - BLt.transpose(),
         {{A_L, I}}, lmi::Sense::psd});
    p.constraints.push_back(lmi::x_below("Delta1^-1 - X >= 0", spd_inverse(bounds.Delta1), lmi::Sense::psd));
    p.constraints.push_back(lmi::x_above("X - Delta2^-1 >= 0", spd_inverse(bounds.Delta2), lmi::Sense::psd));

    c.lmi = lmi::solve_feasible(p, tol, opts.solver);
    if (c.lmi.status != lmi::Status::feasible) {
        throw InfeasibleError("controller LMI is " + std::string(lmi::to_string(c.lmi.status)),
                              c.lmi.diagnostics());
    }
    c.X = c.lmi.X;
    const double cx = condition_number(c.X);
    if (!(cx <= max_condition) || !(lambda_min(c.X) > 0)) {
        std::ostringstream os;
        os << "controller LMI solution is near-singular (cond " << cx << ")";
        throw NumericalError(os.str());
    }

    c.S_c = A_L * c.X - BLt;
    c.J_c = skew_part(c.S_c);
    c.R_c = -symmetric_part(c.S_c);
    c.Q_c = spd_inverse(c.X);
    c.B_c = L;
    c.K = c.B_c.transpose() * c.Q_c;
    c.B = B;

    c.match_residual = detail::relative_residual(A - L * C - B * c.K - c.A_c(), A);
    detail::require_identity(c.match_residual, "matching");

    c.slack_r_lower = lambda_min(c.R_c - bounds.Gamma1);
    c.slack_r_upper = lambda_min(bounds.Gamma2 - c.R_c);
    c.slack_q_lower = lambda_min(c.Q_c - bounds.Delta1);
    c.slack_q_upper = lambda_min(bounds.Delta2 - c.Q_c);
    return c;
}

inline double verify_matching(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& L,
                              const Matrix& K, const Matrix& J_c, const Matrix& R_c, const Matrix& Q_c) {
    return detail::relative_residual(A - L * C - B * K - (J_c - R_c) * Q_c, A);
}

inline double verify_matching(const Matrix& A, const Matrix& C, const Matrix& L, const ControllerRealization& c) {
    return verify_matching(A, c.B, C, L, c.K, c.J_c, c.R_c, c.Q_c);
}

// SPR margin via the KYP choice P = Q_c, OSP index from the controller energy
// balance, and zero-state detectability from R_c > 0.
inline PassivityCertificate passivity_certificates(const Matrix& R_c, const Matrix& Q_c, const Matrix& B_c,
                                                   const Tolerances& tol) {
    const auto n = Q_c.rows();
    if (R_c.rows() != n || R_c.cols() != n || Q_c.cols() != n || B_c.rows() != n) {
        throw DimensionError("passivity_certificates: inconsistent shapes");
    }
    PassivityCertificate pc;
    const Matrix Rs = symmetric_part(R_c);
    const Matrix Qs = symmetric_part(Q_c);
    pc.lambda_min_rc = lambda_min(Rs);
    pc.zsd = pc.lambda_min_rc > tol.tol_pd;

    const Matrix QRQ2 = 2.0 * symmetric_part(Qs * Rs * Qs);
    if (pc.lambda_min_rc > 0) {
        double lo = 0.0;
        double hi = lambda_min(QRQ2) / lambda_max(Qs) * (1.0 + 1e-3);
        auto ok = [&](double eps) { return lambda_min(QRQ2 - eps * Qs) > 0; };
        if (ok(0.0) && hi > 0) {
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                (ok(mid) ? lo : hi) = mid;
            }
            pc.spr_epsilon = lo;
        }
    }
    pc.spr_witness = lambda_min(QRQ2 - pc.spr_epsilon * Qs);

    if (pc.zsd) {
        const Matrix G = B_c.transpose() * Rs.llt().solve(B_c);
        const double gmax = lambda_max(G);
        pc.osp_epsilon = gmax > 0 ? 1.0 / gmax : std::numeric_limits<double>::infinity();
        if (std::isfinite(pc.osp_epsilon)) pc.osp_witness = lambda_min(Rs - pc.osp_epsilon * B_c * B_c.transpose());
        else pc.osp_witness = pc.lambda_min_rc;
    } else {
        pc.osp_witness = pc.lambda_min_rc;
    }
    return pc;
}

inline PassivityCertificate passivity_certificates(const ControllerRealization& c, const Tolerances& tol) {
    return passivity_certificates(c.R_c, c.Q_c, c.B_c, tol);
}

}  // namespace phobs
