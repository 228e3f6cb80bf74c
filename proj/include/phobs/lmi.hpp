#pragma once

// Affine linear matrix inequalities in one symmetric unknown X, a feasibility
// solver that maximizes the worst normalized block margin, and an independent
// certificate check.
//
// A constraint block reads
//
//     F(X) = K0 + sum_i (M_i X N_i^T + N_i X M_i^T)   in {>= 0, > 0}.
//
// Every block carries a data scale s = max(||K0||_2, sum_i 2 ||M_i||_2 ||N_i||_2).
// Margins are reported both raw (lambda_min F) and normalized (lambda_min F / s),
// so that blocks whose entries differ by many orders of magnitude (e.g. a 1e15
// bound next to an O(1) Lyapunov term) are judged on equal footing; strictness
// is certified on the normalized margin.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "phobs/core.hpp"

namespace phobs::lmi {

enum class Sense { psd, pd };

inline const char* to_string(Sense s) { return s == Sense::pd ? "pd" : "psd"; }

// Contributes M X N^T + N X M^T to its block.
struct Term {
    Matrix M;
    Matrix N;
};

struct Constraint {
    std::string name;
    Matrix constant;
    std::vector<Term> terms;
    Sense sense = Sense::psd;
    // Barrier weight: selects which interior point the solver returns (a
    // weighted analytic centre); never changes the feasible set.
    double weight = 1.0;

    [[nodiscard]] Eigen::Index size() const { return constant.rows(); }
};

struct Problem {
    Eigen::Index n = 0;
    std::vector<Constraint> constraints;
    bool include_x_pd = false;
};

// ----------------------------------------------------------------------------
// Builders for the shapes that recur in the synthesis LMIs.
// ----------------------------------------------------------------------------

// coef * X
inline Term scaled_x(Eigen::Index n, double coef) {
    return {0.5 * coef * Matrix::Identity(n, n), Matrix::Identity(n, n)};
}

// X - lower
inline Constraint x_above(std::string name, const Matrix& lower, Sense sense) {
    return {std::move(name), -lower, {scaled_x(lower.rows(), 1.0)}, sense};
}

// upper - X
inline Constraint x_below(std::string name, const Matrix& upper, Sense sense) {
    return {std::move(name), upper, {scaled_x(upper.rows(), -1.0)}, sense};
}

inline double block_scale(const Constraint& c) {
    double s = 0.0;
    if (c.constant.size()) {
        Eigen::JacobiSVD<Matrix> svd(c.constant);
        s = svd.singularValues()(0);
    }
    double terms = 0.0;
    for (const auto& t : c.terms) {
        Eigen::JacobiSVD<Matrix> sm(t.M), sn(t.N);
        const double nm = t.M.size() ? sm.singularValues()(0) : 0.0;
        const double nn = t.N.size() ? sn.singularValues()(0) : 0.0;
        terms += 2.0 * nm * nn;
    }
    s = std::max(s, terms);
    return s > 0 ? s : 1.0;
}

// Constraints actually imposed, i.e. including the optional X > 0 block.
inline std::vector<Constraint> effective_constraints(const Problem& p) {
    std::vector<Constraint> out = p.constraints;
    if (p.include_x_pd) out.push_back(x_above("X > 0", Matrix::Zero(p.n, p.n), Sense::pd));
    return out;
}

inline void validate_problem(const Problem& p, const Tolerances& tol) {
    if (p.n < 1) throw DimensionError("LMI problem: unknown dimension must be >= 1");
    if (p.constraints.empty() && !p.include_x_pd) throw ValidationError("LMI problem: no constraints");
    for (const auto& c : p.constraints) {
        const auto k = c.constant.rows();
        if (c.constant.cols() != k || k == 0) {
            throw DimensionError("LMI block '" + c.name + "': constant must be square, got " + shape_of(c.constant));
        }
        if (symmetry_violation(c.constant) > tol.tol_struct) {
            throw ValidationError("LMI block '" + c.name + "': constant is not symmetric");
        }
        if (!(c.weight > 0) || !std::isfinite(c.weight)) {
            throw ValidationError("LMI block '" + c.name + "': barrier weight must be positive");
        }
        for (const auto& t : c.terms) {
            if (t.M.rows() != k || t.N.rows() != k || t.M.cols() != p.n || t.N.cols() != p.n) {
                throw DimensionError("LMI block '" + c.name + "': term shapes M " + shape_of(t.M) + ", N " +
                                     shape_of(t.N) + " do not match block size " + std::to_string(k) +
                                     " and unknown size " + std::to_string(p.n));
            }
        }
    }
}

// ----------------------------------------------------------------------------
// Independent certificate: substitutes X into every block with plain matrix
// products and measures lambda_min with the symmetric eigensolver.
// ----------------------------------------------------------------------------

struct BlockMargin {
    std::string name;
    Sense sense = Sense::psd;
    double min_eig = 0.0;     // lambda_min of the substituted block
    double scale = 1.0;       // block data scale
    double normalized = 0.0;  // min_eig / scale
    bool pass = false;
};

struct CheckReport {
    std::vector<BlockMargin> blocks;

    [[nodiscard]] bool pass() const {
        for (const auto& b : blocks)
            if (!b.pass) return false;
        return true;
    }

    [[nodiscard]] double worst_normalized() const {
        double w = std::numeric_limits<double>::infinity();
        for (const auto& b : blocks) w = std::min(w, b.normalized);
        return w;
    }

    [[nodiscard]] std::string to_string() const {
        std::ostringstream os;
        os.precision(6);
        for (const auto& b : blocks) {
            os << (b.pass ? "  [ok]   " : "  [fail] ") << b.name << " (" << lmi::to_string(b.sense)
               << "): lambda_min " << b.min_eig << ", scale " << b.scale << ", normalized " << b.normalized
               << "\n";
        }
        return os.str();
    }
};

inline Matrix substitute(const Constraint& c, const Matrix& X) {
    Matrix F = c.constant;
    for (const auto& t : c.terms) {
        const Matrix MXN = t.M * X * t.N.transpose();
        F += MXN + MXN.transpose();
    }
    return symmetric_part(F);
}

inline CheckReport check_solution(const Problem& p, const Matrix& X, const Tolerances& tol) {
    if (X.rows() != p.n || X.cols() != p.n) {
        throw DimensionError("check_solution: X is " + shape_of(X) + ", expected " + std::to_string(p.n) + "x" +
                             std::to_string(p.n));
    }
    if (symmetry_violation(X) > tol.tol_struct) throw ValidationError("check_solution: X is not symmetric");
    const Matrix Xs = symmetric_part(X);
    CheckReport rep;
    for (const auto& c : effective_constraints(p)) {
        BlockMargin b;
        b.name = c.name;
        b.sense = c.sense;
        b.min_eig = lambda_min(substitute(c, Xs));
        b.scale = block_scale(c);
        b.normalized = b.min_eig / b.scale;
        b.pass = c.sense == Sense::pd ? b.normalized >= tol.lmi_margin : b.normalized >= -tol.tol_psd;
        rep.blocks.push_back(std::move(b));
    }
    return rep;
}

// ----------------------------------------------------------------------------
// Solver
// ----------------------------------------------------------------------------

enum class Status { feasible, infeasible, marginal };

inline const char* to_string(Status s) {
    switch (s) {
        case Status::feasible: return "feasible";
        case Status::infeasible: return "infeasible";
        case Status::marginal: return "marginal";
    }
    return "?";
}

struct Solution {
    Matrix X;
    Status status = Status::infeasible;
    double best_margin = -std::numeric_limits<double>::infinity();  // common margin t of the last round
    CheckReport margins;
    int iterations = 0;
    bool converged = false;

    [[nodiscard]] std::string diagnostics() const {
        std::ostringstream os;
        os << "status " << to_string(status) << ", best margin " << best_margin << " after "
           << iterations << " Newton steps" << (converged ? "" : " (not converged)") << "\n"
           << margins.to_string();
        return os.str();
    }
};

struct SolverOptions {
    int max_iter = 1000;          // total Newton steps
    std::uint64_t seed = 0;
    double x_bound = 1e8;         // Frobenius ball keeping homogeneous problems bounded
    double gap_tol = 1e-10;       // on the normalized margin
    double barrier_growth = 10.0;
    int refinements = 2;          // equilibrated re-solves when a round ends badly conditioned
    double center_fraction = 0.5; // recentre within margin >= fraction * t*; 0 keeps the max-margin point
};

namespace detail {

// Symmetric basis E_a: X = sum_a y_a E_a with X(i,j) = X(j,i) = y_a.
struct SymBasis {
    Eigen::Index n = 0;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> index;  // (row, col), row <= col

    explicit SymBasis(Eigen::Index dim) : n(dim) {
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i <= j; ++i) index.emplace_back(i, j);
    }
    [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(index.size()); }

    [[nodiscard]] Matrix to_matrix(const Vector& y) const {
        Matrix X(n, n);
        for (Eigen::Index a = 0; a < size(); ++a) {
            const auto [i, j] = index[a];
            X(i, j) = y(a);
            X(j, i) = y(a);
        }
        return X;
    }
    [[nodiscard]] Vector from_matrix(const Matrix& X) const {
        Vector y(size());
        for (Eigen::Index a = 0; a < size(); ++a) {
            const auto [i, j] = index[a];
            y(a) = 0.5 * (X(i, j) + X(j, i));
        }
        return y;
    }
    // Frobenius weight of coordinate a.
    [[nodiscard]] double weight(Eigen::Index a) const { return index[a].first == index[a].second ? 1.0 : 2.0; }
};

// Block in the solver's own parametrization: C + sum_a y_a A_a - t I,
// everything divided by the block scale.
struct ScaledBlock {
    Eigen::Index p = 0;
    double w = 1.0;
    Matrix C;
    std::vector<Matrix> A;  // one per basis coordinate
};

inline ScaledBlock expand_block(const Constraint& c, const SymBasis& basis) {
    ScaledBlock b;
    const double s = block_scale(c);
    b.p = c.size();
    b.w = c.weight;
    b.C = symmetric_part(c.constant) / s;
    b.A.assign(basis.size(), Matrix::Zero(b.p, b.p));
    for (Eigen::Index a = 0; a < basis.size(); ++a) {
        const auto [k, l] = basis.index[a];
        Matrix Z = Matrix::Zero(b.p, b.p);
        for (const auto& t : c.terms) {
            Z.noalias() += t.M.col(k) * t.N.col(l).transpose();
            if (k != l) Z.noalias() += t.M.col(l) * t.N.col(k).transpose();
        }
        b.A[a] = (Z + Z.transpose()) / s;
    }
    return b;
}

class MarginBarrier {
public:
    MarginBarrier(std::vector<ScaledBlock> blocks, const SymBasis& basis, double radius)
        : blocks_(std::move(blocks)), basis_(basis), radius2_(radius * radius) {
        nvar_ = basis_.size() + 1;
        nu_ = 1.0;
        for (const auto& b : blocks_) nu_ += b.w * static_cast<double>(b.p);
    }

    [[nodiscard]] Eigen::Index nvar() const { return nvar_; }
    [[nodiscard]] double nu() const { return nu_; }

    [[nodiscard]] Matrix block_value(const ScaledBlock& b, const Vector& v) const {
        Matrix G = b.C;
        for (Eigen::Index a = 0; a + 1 < nvar_; ++a)
            if (v(a) != 0.0) G.noalias() += v(a) * b.A[a];
        G.diagonal().array() -= v(nvar_ - 1);
        return G;
    }

    // Smallest eigenvalue over all blocks at t = 0, i.e. the largest t that
    // keeps the point interior.
    [[nodiscard]] double max_margin_at(const Vector& v) const {
        Vector w = v;
        w(nvar_ - 1) = 0.0;
        double m = std::numeric_limits<double>::infinity();
        for (const auto& b : blocks_) m = std::min(m, lambda_min(block_value(b, w)));
        return m;
    }

    [[nodiscard]] double ball_slack(const Vector& v) const {
        double q = 0.0;
        for (Eigen::Index a = 0; a + 1 < nvar_; ++a) q += basis_.weight(a) * v(a) * v(a);
        return radius2_ - q;
    }

    // Barrier value; +inf outside the domain.
    [[nodiscard]] double value(const Vector& v, double kappa) const {
        const double slack = ball_slack(v);
        if (!(slack > 0)) return std::numeric_limits<double>::infinity();
        double f = -kappa * v(nvar_ - 1) - std::log(slack);
        for (const auto& b : blocks_) {
            Eigen::LLT<Matrix> llt(block_value(b, v));
            if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
            const auto& L = llt.matrixLLT();
            for (Eigen::Index i = 0; i < b.p; ++i) {
                const double d = L(i, i);
                if (!(d > 0) || !std::isfinite(d)) return std::numeric_limits<double>::infinity();
                f -= 2.0 * b.w * std::log(d);
            }
        }
        return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
    }

    // Gradient and Hessian at an interior point.
    void derivatives(const Vector& v, double kappa, Vector& g, Matrix& H) const {
        g = Vector::Zero(nvar_);
        H = Matrix::Zero(nvar_, nvar_);
        g(nvar_ - 1) = -kappa;
        for (const auto& b : blocks_) {
            Eigen::LLT<Matrix> llt(block_value(b, v));
            const auto L = llt.matrixL();
            // Columns of V are vec(L^-1 A_a L^-T); A_t = -I.
            Matrix V(b.p * b.p, nvar_);
            for (Eigen::Index a = 0; a < nvar_; ++a) {
                Matrix P = (a + 1 < nvar_) ? b.A[a] : Matrix(-Matrix::Identity(b.p, b.p));
                L.solveInPlace(P);
                P.transposeInPlace();
                L.solveInPlace(P);
                g(a) -= b.w * P.trace();
                V.col(a) = Eigen::Map<const Vector>(P.data(), P.size());
            }
            H.noalias() += b.w * (V.transpose() * V);
        }
        const double slack = ball_slack(v);
        Vector wy = Vector::Zero(nvar_);
        for (Eigen::Index a = 0; a + 1 < nvar_; ++a) {
            wy(a) = basis_.weight(a) * v(a);
            g(a) += 2.0 * wy(a) / slack;
            H(a, a) += 2.0 * basis_.weight(a) / slack;
        }
        H.noalias() += (4.0 / (slack * slack)) * wy * wy.transpose();
    }

    // Same with t frozen: the t row and column decouple.
    void derivatives_fixed_t(const Vector& v, Vector& g, Matrix& H) const {
        derivatives(v, 0.0, g, H);
        const auto k = nvar_ - 1;
        g(k) = 0.0;
        H.row(k).setZero();
        H.col(k).setZero();
        H(k, k) = 1.0;
    }

private:
    std::vector<ScaledBlock> blocks_;
    const SymBasis& basis_;
    double radius2_;
    Eigen::Index nvar_ = 0;
    double nu_ = 0.0;
};

// Newton direction with symmetric diagonal equilibration of the Hessian.
inline Vector newton_direction(const Matrix& H, const Vector& g) {
    Vector d = H.diagonal().cwiseAbs().cwiseMax(std::numeric_limits<double>::min()).cwiseSqrt().cwiseInverse();
    const Matrix Hs = d.asDiagonal() * H * d.asDiagonal();
    Eigen::LDLT<Matrix> ldlt(Hs);
    Vector z = ldlt.solve(-(d.asDiagonal() * g));
    if (ldlt.info() != Eigen::Success || !z.allFinite()) {
        Matrix Hr = Hs;
        Hr.diagonal().array() += 1e-12;
        z = Hr.ldlt().solve(-(d.asDiagonal() * g));
    }
    return d.asDiagonal() * z;
}

struct PathResult {
    Matrix Y;
    double t = 0.0;
    int iterations = 0;
    bool converged = false;
    bool infeasible = false;
};

// Barrier path following for max t s.t. F_i(Y)/s_i - t I >= 0, from Y0.
inline PathResult path_following(const std::vector<Constraint>& constraints, Eigen::Index n, const Matrix& Y0,
                                 int max_iter, const Tolerances& tol, const SolverOptions& opts) {
    const SymBasis basis(n);
    std::vector<ScaledBlock> blocks;
    blocks.reserve(constraints.size());
    for (const auto& c : constraints) blocks.push_back(expand_block(c, basis));
    const MarginBarrier barrier(std::move(blocks), basis, opts.x_bound);
    const Eigen::Index nv = barrier.nvar();

    Vector v(nv);
    v.head(nv - 1) = basis.from_matrix(Y0);
    v(nv - 1) = barrier.max_margin_at(v) - 1.0;

    PathResult res;
    double kappa = 1.0;
    Vector g;
    Matrix H;
    while (res.iterations < max_iter) {
        double fv = barrier.value(v, kappa);
        int stalls = 0;
        for (int inner = 0; inner < 100 && res.iterations < max_iter; ++inner) {
            barrier.derivatives(v, kappa, g, H);
            const Vector dv = newton_direction(H, g);
            const double dec2 = -g.dot(dv);
            ++res.iterations;
            if (!(dec2 > 0) || !std::isfinite(dec2)) break;
            if (0.5 * dec2 < 1e-11) break;
            double alpha = 1.0;
            double fn = std::numeric_limits<double>::infinity();
            for (int ls = 0; ls < 60; ++ls) {
                fn = barrier.value(v + alpha * dv, kappa);
                if (fn <= fv - 0.25 * alpha * dec2) break;
                alpha *= 0.5;
            }
            if (!(fn < fv)) {
                if (++stalls >= 2) break;
                continue;
            }
            v += alpha * dv;
            fv = fn;
        }
        const double t_now = barrier.max_margin_at(v);
        const double gap = barrier.nu() / kappa;
        if (gap < opts.gap_tol * std::max(1.0, std::abs(t_now))) {
            res.converged = true;
            break;
        }
        if (t_now + 2.0 * gap < -10.0 * tol.tol_psd) {
            res.infeasible = true;
            res.converged = true;
            break;
        }
        kappa *= opts.barrier_growth;
    }
    res.t = barrier.max_margin_at(v);

    // Analytic centre of {F_i(Y)/s_i >= fraction * t* I}.
    if (opts.center_fraction > 0 && !res.infeasible && res.t > 0) {
        v(nv - 1) = opts.center_fraction * res.t;
        double fv = barrier.value(v, 0.0);
        for (int inner = 0; inner < 100 && std::isfinite(fv); ++inner) {
            barrier.derivatives_fixed_t(v, g, H);
            const Vector dv = newton_direction(H, g);
            const double dec2 = -g.dot(dv);
            ++res.iterations;
            if (!(dec2 > 0) || !std::isfinite(dec2) || 0.5 * dec2 < 1e-12) break;
            double alpha = 1.0;
            double fn = std::numeric_limits<double>::infinity();
            for (int ls = 0; ls < 60; ++ls) {
                fn = barrier.value(v + alpha * dv, 0.0);
                if (fn <= fv - 0.25 * alpha * dec2) break;
                alpha *= 0.5;
            }
            if (!(fn < fv)) break;
            v += alpha * dv;
            fv = fn;
        }
    }
    res.Y = symmetric_part(basis.to_matrix(v.head(nv - 1)));
    return res;
}

// Congruence F -> T F T of every block and substitution X = D Y D.
inline std::vector<Constraint> precondition(const std::vector<Constraint>& cs, const Vector& d,
                                            const std::vector<Vector>& T) {
    std::vector<Constraint> out;
    out.reserve(cs.size());
    for (std::size_t b = 0; b < cs.size(); ++b) {
        const auto& c = cs[b];
        const auto Tb = T[b].asDiagonal();
        Constraint s{c.name, Tb * c.constant * Tb, {}, c.sense, c.weight};
        for (const auto& term : c.terms) s.terms.push_back({Tb * term.M * d.asDiagonal(), Tb * term.N * d.asDiagonal()});
        out.push_back(std::move(s));
    }
    return out;
}

inline Vector positive_sqrt_diagonal(const Matrix& M, double fallback) {
    const Vector dg = M.diagonal().cwiseAbs();
    const double top = dg.size() ? dg.maxCoeff() : 0.0;
    Vector out(dg.size());
    for (Eigen::Index i = 0; i < dg.size(); ++i) {
        const double v = std::max(dg(i), 1e-12 * top);
        out(i) = v > 0 ? std::sqrt(v) : fallback;
    }
    return out;
}

// Every block at X is positive definite with lambda_min at least 1e-6 of its
// largest diagonal entry, so a further equilibrated round would not help.
inline bool well_conditioned(const std::vector<Constraint>& cs, const Matrix& X) {
    for (const auto& c : cs) {
        const Matrix F = substitute(c, X);
        const double top = F.diagonal().cwiseAbs().maxCoeff();
        if (!(lambda_min(F) >= 1e-6 * top)) return false;
    }
    return true;
}

}  // namespace detail

// Maximizes a common margin t over all blocks by a log-det barrier
// path-following method. The first round measures block i as F_i(X)/s_i; later
// rounds substitute X = D Y D and measure T_i F_i T_i with diagonal D and T_i
// equilibrated at the previous iterate, which keeps problems posed in physical
// units (entries spanning many decades) well conditioned. Congruence leaves
// the feasible set unchanged. Each round ends when the barrier gap certifies t
// within gap_tol of its supremum, when the gap bound proves infeasibility, or
// when the Newton budget is spent, and then recentres to the analytic centre
// of the set where every block keeps center_fraction of that margin. The
// verdict comes from check_solution on the original problem.
inline Solution solve_feasible(const Problem& problem, const Tolerances& tol, const SolverOptions& opts = {}) {
    validate_problem(problem, tol);
    const auto constraints = effective_constraints(problem);
    const auto n = problem.n;

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Matrix R(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) R(i, j) = unif(rng);
    const double x0_scale = std::min(1.0, 0.1 * opts.x_bound / std::sqrt(static_cast<double>(n)));
    Matrix X = x0_scale * (Matrix::Identity(n, n) + 1e-3 * symmetric_part(R));

    Vector d = Vector::Ones(n);
    std::vector<Vector> T;
    for (const auto& c : constraints) T.push_back(Vector::Constant(c.size(), 1.0));

    Solution sol;
    int budget = opts.max_iter;
    detail::PathResult last;
    double score = -std::numeric_limits<double>::infinity();
    for (int round = 0; round <= opts.refinements && budget > 0; ++round) {
        if (round > 0) {
            d = detail::positive_sqrt_diagonal(X, 1.0);
            for (std::size_t b = 0; b < constraints.size(); ++b) {
                const Matrix F = substitute(constraints[b], X);
                T[b] = detail::positive_sqrt_diagonal(F, std::sqrt(block_scale(constraints[b]))).cwiseInverse();
            }
        }
        const Matrix Y0 = d.cwiseInverse().asDiagonal() * X * d.cwiseInverse().asDiagonal();
        auto res = detail::path_following(detail::precondition(constraints, d, T), n, Y0, budget, tol, opts);
        budget -= res.iterations;
        sol.iterations += res.iterations;
        const Matrix Xr = symmetric_part(d.asDiagonal() * res.Y * d.asDiagonal());
        // A round that lowers the smallest normalized margin is discarded; this
        // stops rescaling from drifting along recession directions.
        const double s = Xr.allFinite() ? check_solution(problem, Xr, tol).worst_normalized() : score;
        if (round > 0 && !(s >= score)) break;
        score = s;
        X = Xr;
        last = std::move(res);
        if (last.infeasible || detail::well_conditioned(constraints, X)) break;
    }

    sol.X = X;
    sol.best_margin = last.t;
    sol.converged = last.converged;
    sol.margins = check_solution(problem, sol.X, tol);
    if (sol.margins.pass() && !last.infeasible) {
        sol.status = Status::feasible;
    } else {
        bool nonneg = true;
        for (const auto& b : sol.margins.blocks) nonneg = nonneg && b.normalized >= -tol.tol_psd;
        sol.status = (nonneg && !last.infeasible) ? Status::marginal : Status::infeasible;
    }
    return sol;
}

}  // namespace phobs::lmi
