#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "glanchor/defects.hpp"
#include "glanchor/geometry.hpp"
#include "glanchor/laplace.hpp"
#include "glanchor/params.hpp"

namespace glanchor {

/// Complex order parameter sampled on the nodes of a polar grid.
struct OrderParameter {
    GridPtr grid;
    std::vector<cplx> values;
    AnchoringParams params;

    OrderParameter() = default;
    OrderParameter(GridPtr g, AnchoringParams p = {})
        : grid(std::move(g)), values(grid->size(), cplx(1.0, 0.0)), params(p) {}

    std::size_t size() const { return values.size(); }
    cplx& operator[](std::size_t k) { return values[k]; }
    const cplx& operator[](std::size_t k) const { return values[k]; }

    double max_modulus() const
    {
        double m = 0.0;
        for (const auto& v : values) m = std::max(m, std::abs(v));
        return m;
    }
    bool all_finite() const
    {
        for (const auto& v : values)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        return true;
    }
};

/// Director n (reported with n1 >= 0, and n2 >= 0 when n1 = 0) and order magnitude s.
struct DirectorField {
    std::vector<double> n1, n2, s;
    std::vector<bool> defined;
};

inline constexpr double kUndefinedModulus = 1e-12;

/// Half-angle director of a single value. Returns false at a defect core.
inline bool director_of(cplx u, double& n1, double& n2)
{
    if (std::abs(u) < kUndefinedModulus) {
        n1 = n2 = 0.0;
        return false;
    }
    const double phi = std::arg(u); // (-pi, pi]
    n1 = std::cos(0.5 * phi);
    n2 = std::sin(0.5 * phi);
    if (n1 < 0.0 || (n1 == 0.0 && n2 < 0.0)) {
        n1 = -n1;
        n2 = -n2;
    }
    // phi = pi gives n1 = cos(pi/2) ~ 6e-17; snap so the convention holds exactly
    if (std::abs(n1) < 1e-15) {
        n1 = 0.0;
        n2 = 1.0;
    }
    return true;
}

inline DirectorField u_to_director(const OrderParameter& u)
{
    DirectorField d;
    const std::size_t n = u.size();
    d.n1.resize(n);
    d.n2.resize(n);
    d.s.resize(n);
    d.defined.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        d.defined[k] = director_of(u[k], d.n1[k], d.n2[k]);
        d.s[k] = std::abs(u[k]);
    }
    return d;
}

/// u = s (2 n1^2 - 1 + 2 i n1 n2); invariant under n -> -n.
inline cplx director_to_u(double n1, double n2, double s)
{
    return s * cplx(2.0 * n1 * n1 - 1.0, 2.0 * n1 * n2);
}

using Mat3 = std::array<std::array<double, 3>, 3>;
using Mat2 = std::array<std::array<double, 2>, 2>;

/**
 * Three-dimensional uniaxial block form
 *   Q = (s_+/2) [[u1 + 1/3, u2, 0], [u2, 1/3 - u1, 0], [0, 0, -2/3]]
 * with u = s e^{i phi} rebuilt from the director. An undefined director gives
 * the isotropic (zero) tensor.
 */
inline Mat3 qtensor3(double n1, double n2, double s, bool defined, double s_plus = 1.0)
{
    Mat3 q{};
    if (!defined) return q;
    const cplx u = director_to_u(n1, n2, s);
    const double h = 0.5 * s_plus;
    const double third = 1.0 / 3.0;
    q[0][0] = h * (u.real() + third);
    q[1][1] = h * (third - u.real());
    q[0][1] = q[1][0] = h * u.imag();
    q[2][2] = -(q[0][0] + q[1][1]); // -2/3 * h up to rounding, keeps the trace exactly zero
    return q;
}

/// Planar reduction Q = s_+ s (n (x) n - I/2).
inline Mat2 qtensor2(double n1, double n2, double s, bool defined, double s_plus = 1.0)
{
    Mat2 q{};
    if (!defined) return q;
    const double c = s_plus * s;
    q[0][0] = c * (n1 * n1 - 0.5);
    q[1][1] = -q[0][0];
    q[0][1] = q[1][0] = c * n1 * n2;
    return q;
}

inline std::vector<Mat3> director_to_qtensor(const DirectorField& d, double s_plus = 1.0)
{
    std::vector<Mat3> out(d.s.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = qtensor3(d.n1[k], d.n2[k], d.s[k], d.defined[k], s_plus);
    return out;
}

inline std::vector<Mat2> director_to_qtensor2(const DirectorField& d, double s_plus = 1.0)
{
    std::vector<Mat2> out(d.s.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = qtensor2(d.n1[k], d.n2[k], d.s[k], d.defined[k], s_plus);
    return out;
}

/// Node mask of the anchoring ring and the pinned outer ring.
inline std::vector<bool> boundary_mask(const PolarGrid& g, bool include_gamma, bool include_dirichlet)
{
    std::vector<bool> m(g.size(), false);
    for (std::size_t k = 0; k < g.size(); ++k)
        m[k] = (include_gamma && g.is_gamma(k)) || (include_dirichlet && g.is_dirichlet(k));
    return m;
}

/**
 * S^1-valued test configuration with |D| boundary vortices.
 *
 * Along Gamma the phase follows g except on arcs of half-length eps^alpha
 * around each chosen point, where it is unwound by 2 pi sign(D) linearly in
 * arclength. The resulting lift is single valued (degree zero), and its
 * discrete harmonic extension into the domain gives the phase; on the pinned
 * outer ring of II/III the phase is the nearest multiple of 2 pi.
 */
inline OrderParameter upper_bound_initializer(const GeometrySpec& spec, GridPtr grid, const AnchoringParams& params,
                                              std::vector<double> boundary_points)
{
    const PolarGrid& g = *grid;
    const int D = spec.anchor_degree;
    if (static_cast<int>(boundary_points.size()) != std::abs(D))
        throw std::invalid_argument("upper_bound_initializer: need exactly |D| boundary points");
    const double R = spec.gamma_radius();
    const double delta = std::pow(params.eps, params.alpha); // arclength half-width
    const double half = delta / R;                            // in angle
    for (auto& a : boundary_points) a = std::fmod(std::fmod(a, kTwoPi) + kTwoPi, kTwoPi);
    std::sort(boundary_points.begin(), boundary_points.end());
    const std::size_t np = boundary_points.size();
    for (std::size_t i = 0; i < np; ++i) {
        const double gap = (i + 1 < np) ? boundary_points[i + 1] - boundary_points[i]
                                         : boundary_points[0] + kTwoPi - boundary_points[i];
        if (np > 1 && R * gap < 4.0 * delta)
            throw std::invalid_argument("upper_bound_initializer: boundary points closer than 4 eps^alpha along Gamma");
    }
    if (np > 0 && 2.0 * half * np >= kTwoPi)
        throw std::invalid_argument("upper_bound_initializer: unwinding arcs cover Gamma");

    // cut: middle of the largest gap, so no ramp straddles it
    double cut = 0.0;
    if (np > 0) {
        double best = -1.0;
        for (std::size_t i = 0; i < np; ++i) {
            const double a = boundary_points[i];
            const double b = (i + 1 < np) ? boundary_points[i + 1] : boundary_points[0] + kTwoPi;
            if (b - a > best) {
                best = b - a;
                cut = 0.5 * (a + b);
            }
        }
    }
    const double sgn = D > 0 ? 1.0 : -1.0;
    auto lift = [&](double th) {
        const double t = std::fmod(std::fmod(th - cut, kTwoPi) + kTwoPi, kTwoPi); // in [0, 2 pi)
        double ph = D * (cut + t) + spec.anchor_phase_offset;
        for (double q : boundary_points) {
            const double c = std::fmod(std::fmod(q - cut, kTwoPi) + kTwoPi, kTwoPi);
            const double s = std::clamp((t - (c - half)) / (2.0 * half), 0.0, 1.0);
            ph -= kTwoPi * sgn * s;
        }
        return ph;
    };

    const auto n = static_cast<Eigen::Index>(g.size());
    Vec fixedv = Vec::Zero(n);
    const int gr = g.gamma_ring();
    double mean = 0.0;
    for (int j = 0; j < g.n_theta(); ++j) {
        const double v = lift(g.theta(j));
        fixedv[static_cast<Eigen::Index>(g.index(gr, j))] = v;
        mean += v;
    }
    mean /= g.n_theta();
    if (g.dirichlet_ring() >= 0) {
        const double outer = kTwoPi * std::round(mean / kTwoPi);
        for (int j = 0; j < g.n_theta(); ++j) fixedv[static_cast<Eigen::Index>(g.index(g.dirichlet_ring(), j))] = outer;
    }
    const Vec phase = harmonic_extension(g, boundary_mask(g, true, true), fixedv);

    OrderParameter u(grid, params);
    for (std::size_t k = 0; k < g.size(); ++k) u[k] = std::polar(1.0, phase[static_cast<Eigen::Index>(k)]);
    return u;
}

struct CanonicalOptions {
    double interior_core = 0.0; ///< core radius of the modulus profile at interior defects (0: |u| = 1)
    double boundary_core = 0.0; ///< same for boundary defects
};

/// Modulus profile s / sqrt(s^2 + 1), s = distance / core.
inline double core_profile(double dist, double core)
{
    if (core <= 0.0) return 1.0;
    const double s = dist / core;
    return s / std::sqrt(s * s + 1.0);
}

/**
 * Raw phase of the canonical harmonic map at z (without the constant xi).
 *
 * Exterior and annulus: an interior vortex contributes
 *   d [arg(z - p) + arg(z - p*) - 2 arg z],  p* = R^2 p / |p|^2,
 * which has constant normal derivative on the unit circle and vanishes at
 * infinity; a boundary vortex contributes 2D [arg(z - q) - arg z].
 * Disk of radius R: d [arg(z - p) + arg(z - p*)] with p* = R^2 p / |p|^2,
 * and 2D arg(z - q) on the boundary.
 */
inline double canonical_phase(const DefectSet& ds, const GeometrySpec& spec, cplx z)
{
    double ph = 0.0;
    const double az = std::abs(z) > 0.0 ? std::arg(z) : 0.0;
    const bool disk = spec.problem == Problem::I;
    const double R = spec.gamma_radius();
    for (const auto& p : ds.interior) {
        const cplx pc(p.x, p.y);
        const double m2 = std::norm(pc);
        ph += p.d * std::arg(z - pc);
        if (disk) {
            if (m2 > 0.0) ph += p.d * std::arg(z - R * R * pc / m2);
        } else {
            ph += p.d * (std::arg(z - R * R * pc / m2) - 2.0 * az);
        }
    }
    for (const auto& q : ds.boundary) {
        const cplx qc = std::polar(R, q.theta);
        const cplx w = z - qc;
        const double aw = std::abs(w) > 1e-14 * R ? std::arg(w) : std::arg(qc * cplx(0.0, disk ? -1.0 : 1.0));
        ph += 2.0 * q.D * aw;
        if (!disk) ph -= 2.0 * q.D * az;
    }
    return ph;
}

/**
 * Canonical map u_* = product of unit vortex factors times e^{i xi}, with xi
 * the constant making u_* = g on Gamma. Optional core profiles modulate |u|.
 */
inline OrderParameter canonical_map(const DefectSet& ds, const GeometrySpec& spec, GridPtr grid,
                                    const AnchoringParams& params = {}, CanonicalOptions opt = {})
{
    if (ds.total_degree() != expected_total_degree(spec.problem, spec.anchor_degree))
        throw std::invalid_argument("canonical_map: defect degrees violate the degree budget");
    const PolarGrid& g = *grid;
    const double R = spec.gamma_radius();

    // xi from the circular mean of arg(g / u_raw) over Gamma nodes away from boundary vortices
    cplx acc(0.0, 0.0);
    for (int j = 0; j < g.n_theta(); ++j) {
        const double th = g.theta(j);
        bool near = false;
        for (const auto& q : ds.boundary)
            if (std::abs(wrap_angle(th - q.theta)) < 2.5 * g.dtheta()) near = true;
        if (near) continue;
        const cplx z = std::polar(R, th);
        const double target = spec.anchor_degree * th + spec.anchor_phase_offset;
        acc += std::polar(1.0, target - canonical_phase(ds, spec, z));
    }
    const double xi = std::abs(acc) > 0.0 ? std::arg(acc) : 0.0;

    OrderParameter u(grid, params);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const cplx z = g.z(k);
        double mod = 1.0;
        for (const auto& p : ds.interior) mod *= core_profile(std::abs(z - cplx(p.x, p.y)), opt.interior_core);
        for (const auto& q : ds.boundary) mod *= core_profile(std::abs(z - std::polar(R, q.theta)), opt.boundary_core);
        u[k] = std::polar(mod, canonical_phase(ds, spec, z) + xi);
    }
    return u;
}

/// Field snapshot: r, theta, x, y, re_u, im_u, abs_u, n1, n2, s.
inline void write_field_csv(const OrderParameter& u, std::ostream& os)
{
    const PolarGrid& g = *u.grid;
    os << "r,theta,x,y,re_u,im_u,abs_u,n1,n2,s\n";
    os << std::setprecision(10);
    for (std::size_t k = 0; k < g.size(); ++k) {
        double n1, n2;
        director_of(u[k], n1, n2);
        const double r = g.radius(g.ring_of(k));
        os << r << ',' << g.theta(g.angle_of(k)) << ',' << g.x(k) << ',' << g.y(k) << ',' << u[k].real() << ','
           << u[k].imag() << ',' << std::abs(u[k]) << ',' << n1 << ',' << n2 << ',' << std::abs(u[k]) << '\n';
    }
}

inline void write_field_csv(const OrderParameter& u, const std::string& path)
{
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    write_field_csv(u, f);
}

} // namespace glanchor
