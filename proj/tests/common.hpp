#pragma once

#include <complex>
#include <random>

#include "glanchor/field.hpp"
#include "glanchor/geometry.hpp"

namespace glanchor::test {

inline GeometrySpec spec_of(Problem p, double r_outer, int D = 2)
{
    GeometrySpec s;
    s.problem = p;
    s.r_inner = p == Problem::I ? 0.0 : 1.0;
    s.r_outer = r_outer;
    s.anchor_degree = D;
    return s;
}

inline GridPtr grid_of(Problem p, double r_outer, int n_r, int n_theta, int D = 2)
{
    const auto s = spec_of(p, r_outer, D);
    return build_grid(s, n_r, n_theta, default_radial_stretch(p));
}

inline OrderParameter random_field(const GridPtr& g, const AnchoringParams& p, std::uint64_t seed, double amp = 0.3)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-amp, amp);
    OrderParameter u(g, p);
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double th = g->spec().anchor_degree * g->theta(g->angle_of(k));
        u[k] = std::polar(1.0, th) + cplx(U(rng), U(rng));
        if (g->is_dirichlet(k)) u[k] = 1.0;
    }
    return u;
}

} // namespace glanchor::test

namespace glanchor::test {

/// Random defect configuration for the exterior problem respecting the degree
/// budget -D, with all defects more than `sep` apart and away from Gamma.
inline DefectSet random_configuration(std::mt19937_64& rng, int D, double sep, double r_max)
{
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (;;) {
        DefectSet ds;
        const int n_b = static_cast<int>(U(rng) * (std::abs(D) + 1)) % (std::abs(D) + 1);
        const int sgn = D > 0 ? -1 : 1;
        std::vector<cplx> pts;
        for (int k = 0; k < n_b; ++k) {
            const double th = kTwoPi * U(rng);
            ds.boundary.push_back({th, sgn});
            pts.push_back(std::polar(1.0, th));
        }
        for (int k = n_b; k < std::abs(D); ++k) {
            const double r = 1.0 + sep + (r_max - 1.0 - sep) * U(rng);
            const cplx z = std::polar(r, kTwoPi * U(rng));
            ds.interior.push_back({z.real(), z.imag(), sgn});
            pts.push_back(z);
        }
        bool ok = true;
        for (std::size_t a = 0; a < pts.size(); ++a)
            for (std::size_t b = 0; b < a; ++b)
                if (std::abs(pts[a] - pts[b]) < sep) ok = false;
        if (ok) return ds;
    }
}

} // namespace glanchor::test
