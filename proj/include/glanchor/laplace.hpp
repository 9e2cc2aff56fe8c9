#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <stdexcept>
#include <vector>

#include "glanchor/geometry.hpp"

namespace glanchor {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

/// Calls f(k, l, c) once for every grid edge with its energy coefficient.
template <class F>
void for_each_edge(const PolarGrid& g, F&& f)
{
    const int nt = g.n_theta();
    for (int i = 0; i < g.n_r(); ++i) {
        const double c = g.radial_coef(i);
        for (int j = 0; j < nt; ++j) f(g.index(i, j), g.index(i + 1, j), c);
    }
    for (int i = 0; i <= g.n_r(); ++i) {
        if (g.origin() && i == 0) continue;
        const double c = g.angular_coef(i);
        for (int j = 0; j < nt; ++j) f(g.index(i, j), g.index(i, j + 1), c);
    }
}

/// Stiffness matrix of the discrete Dirichlet form: u^T K u = sum_edges c |du|^2.
inline SpMat stiffness_matrix(const PolarGrid& g)
{
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(g.size() * 5);
    for_each_edge(g, [&](std::size_t k, std::size_t l, double c) {
        const auto a = static_cast<int>(k), b = static_cast<int>(l);
        t.emplace_back(a, a, c);
        t.emplace_back(b, b, c);
        t.emplace_back(a, b, -c);
        t.emplace_back(b, a, -c);
    });
    SpMat K(static_cast<int>(g.size()), static_cast<int>(g.size()));
    K.setFromTriplets(t.begin(), t.end());
    return K;
}

/**
 * Factorization of (K + diag(shift)) restricted to the free nodes.
 * Solves  (K + D) x = b  on free nodes with x prescribed on fixed nodes.
 */
class ReducedSolver {
public:
    ReducedSolver(const SpMat& K, const std::vector<bool>& fixed, const Vec& shift)
        : fixed_(fixed)
    {
        const int n = static_cast<int>(K.rows());
        map_.assign(n, -1);
        for (int k = 0; k < n; ++k)
            if (!fixed_[k]) map_[k] = nfree_++;
        std::vector<Eigen::Triplet<double>> tf, tc;
        for (int col = 0; col < K.outerSize(); ++col)
            for (SpMat::InnerIterator it(K, col); it; ++it) {
                const int r = static_cast<int>(it.row()), c = static_cast<int>(it.col());
                if (map_[r] < 0) continue;
                if (map_[c] >= 0) tf.emplace_back(map_[r], map_[c], it.value());
                else tc.emplace_back(map_[r], c, it.value());
            }
        for (int k = 0; k < n; ++k)
            if (map_[k] >= 0 && shift.size() == n && shift[k] != 0.0) tf.emplace_back(map_[k], map_[k], shift[k]);
        A_.resize(nfree_, nfree_);
        A_.setFromTriplets(tf.begin(), tf.end());
        C_.resize(nfree_, n);
        C_.setFromTriplets(tc.begin(), tc.end());
        ldlt_.compute(A_);
        if (ldlt_.info() != Eigen::Success) throw std::runtime_error("ReducedSolver: factorization failed");
    }

    /// x_fixed supplies values on fixed nodes (ignored elsewhere); rhs on all nodes.
    Vec solve(const Vec& rhs, const Vec& x_fixed) const
    {
        const int n = static_cast<int>(map_.size());
        Vec fixed_part = Vec::Zero(n);
        for (int k = 0; k < n; ++k)
            if (fixed_[k]) fixed_part[k] = x_fixed[k];
        Vec b(nfree_);
        for (int k = 0; k < n; ++k)
            if (map_[k] >= 0) b[map_[k]] = rhs[k];
        b -= C_ * fixed_part;
        Vec y = ldlt_.solve(b);
        Vec x = fixed_part;
        for (int k = 0; k < n; ++k)
            if (map_[k] >= 0) x[k] = y[map_[k]];
        return x;
    }

    /// Applies the inverse to a vector living on free nodes only (fixed entries zero).
    Vec apply_inverse(const Vec& r) const
    {
        const int n = static_cast<int>(map_.size());
        Vec b(nfree_);
        for (int k = 0; k < n; ++k)
            if (map_[k] >= 0) b[map_[k]] = r[k];
        Vec y = ldlt_.solve(b);
        Vec x = Vec::Zero(n);
        for (int k = 0; k < n; ++k)
            if (map_[k] >= 0) x[k] = y[map_[k]];
        return x;
    }

private:
    std::vector<bool> fixed_;
    std::vector<int> map_;
    int nfree_ = 0;
    SpMat A_, C_;
    Eigen::SimplicialLDLT<SpMat> ldlt_;
};

/// Discrete harmonic function with prescribed values on the `fixed` nodes.
inline Vec harmonic_extension(const PolarGrid& g, const std::vector<bool>& fixed, const Vec& values)
{
    const SpMat K = stiffness_matrix(g);
    ReducedSolver s(K, fixed, Vec());
    return s.solve(Vec::Zero(static_cast<Eigen::Index>(g.size())), values);
}

} // namespace glanchor
