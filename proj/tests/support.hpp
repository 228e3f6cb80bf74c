#pragma once

// Hand-rolled random generators for property tests.

#include <cstdint>
#include <random>

#include "phobs/core.hpp"
#include "phobs/lmi.hpp"

namespace phobs::testing {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
    int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

    Matrix gaussian(Eigen::Index r, Eigen::Index c) {
        Matrix M(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i) M(i, j) = normal();
        return M;
    }
    Vector vector(Eigen::Index n) { return gaussian(n, 1); }

    Matrix symmetric(Eigen::Index n) { return symmetric_part(gaussian(n, n)); }
    Matrix skew(Eigen::Index n) { return skew_part(gaussian(n, n)); }

    // Symmetric with eigenvalues drawn uniformly from [lo, hi].
    Matrix spd(Eigen::Index n, double lo, double hi) {
        Eigen::HouseholderQR<Matrix> qr(gaussian(n, n));
        const Matrix U = qr.householderQ();
        Vector d(n);
        for (Eigen::Index i = 0; i < n; ++i) d(i) = uniform(lo, hi);
        return symmetric_part(U * d.asDiagonal() * U.transpose());
    }

    // Positive semidefinite of the given rank.
    Matrix psd(Eigen::Index n, Eigen::Index rank) {
        const Matrix G = gaussian(n, rank);
        return G * G.transpose();
    }

    LinearPHSystem ph(Eigen::Index n, Eigen::Index m, double damping = 1.0) {
        const Matrix R = damping * psd(n, std::max<Eigen::Index>(1, n / 2)) / static_cast<double>(n);
        return LinearPHSystem(skew(n) * 2.0, R, spd(n, 0.5, 2.0), gaussian(n, m));
    }

private:
    std::mt19937_64 rng_;
};

// Random LMI problem strictly satisfied at X_star with per-block slack
// eigenvalues in [slack_lo, slack_hi].
inline lmi::Problem feasible_problem(Gen& g, Eigen::Index n, int blocks, const Matrix& X_star, double slack_lo,
                                     double slack_hi) {
    lmi::Problem p;
    p.n = n;
    for (int b = 0; b < blocks; ++b) {
        const auto size = static_cast<Eigen::Index>(g.integer(1, static_cast<int>(n) + 1));
        lmi::Constraint c;
        c.name = "block" + std::to_string(b);
        c.sense = g.integer(0, 1) ? lmi::Sense::pd : lmi::Sense::psd;
        const int terms = g.integer(1, 2);
        for (int t = 0; t < terms; ++t) c.terms.push_back({g.gaussian(size, n), g.gaussian(size, n)});
        c.constant = Matrix::Zero(size, size);
        c.constant = -lmi::substitute(c, X_star) + g.spd(size, slack_lo, slack_hi);
        p.constraints.push_back(std::move(c));
    }
    return p;
}

// Random LMI problem with a Farkas certificate of infeasibility: weights
// Z_1 >= 0 and Z_2 = I whose adjoint terms cancel while
// <Z_1, K_1> + tr K_2 < 0.
inline lmi::Problem infeasible_problem(Gen& g, Eigen::Index n) {
    lmi::Problem p;
    p.n = n;
    const auto size = static_cast<Eigen::Index>(g.integer(1, static_cast<int>(n) + 1));
    lmi::Constraint c1;
    c1.name = "random";
    c1.terms.push_back({g.gaussian(size, n), g.gaussian(size, n)});
    c1.constant = g.symmetric(size);
    const Matrix Z1 = g.psd(size, size) + 0.1 * Matrix::Identity(size, size);
    // <Z1, M X N^T + N X M^T> = <X, S> with S = N^T Z1 M + M^T Z1 N
    const auto& t = c1.terms.front();
    const Matrix S = t.N.transpose() * Z1 * t.M + t.M.transpose() * Z1 * t.N;
    lmi::Constraint c2;
    c2.name = "cancelling";
    c2.terms.push_back({-0.5 * S, Matrix::Identity(n, n)});  // contributes -sym(S X) with trace -<S, X>
    const double budget = (Z1.cwiseProduct(c1.constant)).sum();
    Matrix K2 = g.symmetric(n);
    K2 += ((-budget - K2.trace() - g.uniform(0.5, 2.0)) / static_cast<double>(n)) * Matrix::Identity(n, n);
    c2.constant = K2;
    p.constraints.push_back(std::move(c1));
    p.constraints.push_back(std::move(c2));
    return p;
}

}  // namespace phobs::testing
