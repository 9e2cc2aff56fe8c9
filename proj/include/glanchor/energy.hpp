#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "glanchor/field.hpp"
#include "glanchor/laplace.hpp"

namespace glanchor {

struct EnergyBreakdown {
    double dirichlet = 0.0; ///< 1/2 int |grad u|^2
    double potential = 0.0; ///< 1/(4 eps^2) int (|u|^2 - 1)^2
    double anchoring = 0.0; ///< lambda/2 int_Gamma |u - g|^2
    double total = 0.0;

    void finish() { total = dirichlet + potential + anchoring; }
    EnergyBreakdown& operator+=(const EnergyBreakdown& o)
    {
        dirichlet += o.dirichlet;
        potential += o.potential;
        anchoring += o.anchoring;
        finish();
        return *this;
    }
};

namespace detail {

/// Anchoring data indexed by grid node (zero off Gamma).
inline std::vector<cplx> anchor_on_nodes(const PolarGrid& g)
{
    std::vector<cplx> out(g.size(), cplx(0.0, 0.0));
    const auto a = anchor_values(g.spec(), g);
    for (int j = 0; j < g.n_theta(); ++j) out[g.index(g.gamma_ring(), j)] = a[j];
    return out;
}

} // namespace detail

/**
 * Energy restricted to a node set. Each edge gives half its energy to each
 * endpoint, so local energies over disjoint regions add up exactly.
 */
inline EnergyBreakdown local_energy(const OrderParameter& u, const AnchoringParams& p,
                                    const std::function<bool(std::size_t)>& region)
{
    const PolarGrid& g = *u.grid;
    EnergyBreakdown e;
    for_each_edge(g, [&](std::size_t k, std::size_t l, double c) {
        const bool ik = !region || region(k), il = !region || region(l);
        if (!ik && !il) return;
        const double de = 0.5 * c * std::norm(u[k] - u[l]);
        e.dirichlet += 0.5 * de * ((ik ? 1.0 : 0.0) + (il ? 1.0 : 0.0));
    });
    const double pc = 1.0 / (4.0 * p.eps * p.eps);
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (region && !region(k)) continue;
        const double m = std::norm(u[k]) - 1.0;
        e.potential += pc * g.area_weight(k) * m * m;
    }
    const double lam = p.lambda();
    const double s = g.boundary_weight();
    const auto gv = anchor_values(g.spec(), g);
    for (int j = 0; j < g.n_theta(); ++j) {
        const std::size_t k = g.index(g.gamma_ring(), j);
        if (region && !region(k)) continue;
        e.anchoring += 0.5 * lam * s * std::norm(u[k] - gv[j]);
    }
    e.finish();
    return e;
}

// Per-node share of the total energy: each edge splits half to either end, the
// same split local_energy uses, so summing over a node set reproduces it.
inline std::vector<double> energy_density(const OrderParameter& u, const AnchoringParams& p)
{
    const PolarGrid& g = *u.grid;
    std::vector<double> e(g.size(), 0.0);
    for_each_edge(g, [&](std::size_t k, std::size_t l, double c) {
        const double de = 0.25 * c * std::norm(u[k] - u[l]);
        e[k] += de;
        e[l] += de;
    });
    const double pc = 1.0 / (4.0 * p.eps * p.eps);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double m = std::norm(u[k]) - 1.0;
        e[k] += pc * g.area_weight(k) * m * m;
    }
    const double ls = 0.5 * p.lambda() * g.boundary_weight();
    const auto gv = anchor_values(g.spec(), g);
    for (int j = 0; j < g.n_theta(); ++j) {
        const std::size_t k = g.index(g.gamma_ring(), j);
        e[k] += ls * std::norm(u[k] - gv[j]);
    }
    return e;
}

inline EnergyBreakdown energy(const OrderParameter& u, const AnchoringParams& p)
{
    return local_energy(u, p, nullptr);
}

/**
 * Gradient of the discrete energy with respect to (Re u_k, Im u_k), packed as
 * a complex number per node. Pinned nodes are included (callers mask them).
 */
inline std::vector<cplx> energy_gradient(const OrderParameter& u, const AnchoringParams& p)
{
    const PolarGrid& g = *u.grid;
    std::vector<cplx> G(g.size(), cplx(0.0, 0.0));
    for_each_edge(g, [&](std::size_t k, std::size_t l, double c) {
        const cplx d = c * (u[k] - u[l]);
        G[k] += d;
        G[l] -= d;
    });
    const double ie2 = 1.0 / (p.eps * p.eps);
    for (std::size_t k = 0; k < g.size(); ++k) G[k] += g.area_weight(k) * ie2 * (std::norm(u[k]) - 1.0) * u[k];
    const double ls = p.lambda() * g.boundary_weight();
    const auto gv = anchor_values(g.spec(), g);
    for (int j = 0; j < g.n_theta(); ++j) {
        const std::size_t k = g.index(g.gamma_ring(), j);
        G[k] += ls * (u[k] - gv[j]);
    }
    return G;
}

/**
 * Euler-Lagrange residual. Interior nodes: gradient / area weight, which is
 * -Lap_h u + eps^-2 (|u|^2 - 1) u. Anchoring nodes: gradient / arclength
 * weight, i.e. d_nu u + lambda (u - g) plus an O(h) interior contribution.
 * Pinned nodes carry zero.
 */
struct Residual {
    std::vector<cplx> values;
    double interior_sup = 0.0;
    double boundary_sup = 0.0;
    double sup() const { return std::max(interior_sup, boundary_sup); }
};

inline Residual residual_from_gradient(const PolarGrid& g, const std::vector<cplx>& G)
{
    Residual r;
    r.values.assign(g.size(), cplx(0.0, 0.0));
    const double s = g.boundary_weight();
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (g.is_dirichlet(k)) continue;
        if (g.is_gamma(k)) {
            r.values[k] = G[k] / s;
            r.boundary_sup = std::max(r.boundary_sup, std::abs(r.values[k]));
        } else {
            r.values[k] = G[k] / g.area_weight(k);
            r.interior_sup = std::max(r.interior_sup, std::abs(r.values[k]));
        }
    }
    return r;
}

inline Residual el_residual(const OrderParameter& u, const AnchoringParams& p)
{
    return residual_from_gradient(*u.grid, energy_gradient(u, p));
}

/// Directional derivative pairing sum Re(conj(G_k) du_k).
inline double pairing(const std::vector<cplx>& G, const std::vector<cplx>& du)
{
    double s = 0.0;
    for (std::size_t k = 0; k < G.size(); ++k) s += G[k].real() * du[k].real() + G[k].imag() * du[k].imag();
    return s;
}

} // namespace glanchor
