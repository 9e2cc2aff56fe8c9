#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace glanchor {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a)
{
    a = std::remainder(a, kTwoPi);
    if (a <= -kPi) a += kTwoPi;
    return a;
}

/// Principal-branch phase increment from a to b, in (-pi, pi].
inline double phase_increment(cplx a, cplx b)
{
    const cplx q = std::conj(a) * b;
    return std::atan2(q.imag(), q.real());
}

/**
 * Problem geometries on concentric circles.
 *
 *  I   : disk of radius r_outer, anchoring circle is the outer boundary.
 *  II  : annulus r_inner < r < r_outer, anchoring on r_inner, u = 1 on r_outer.
 *  III : exterior of r_inner truncated at r_outer, u = 1 on the truncation circle.
 */
enum class Problem { I, II, III };

inline std::string to_string(Problem p)
{
    switch (p) {
    case Problem::I: return "I";
    case Problem::II: return "II";
    case Problem::III: return "III";
    }
    return "?";
}

inline Problem problem_from_string(const std::string& s)
{
    if (s == "I" || s == "1") return Problem::I;
    if (s == "II" || s == "2") return Problem::II;
    if (s == "III" || s == "3") return Problem::III;
    throw std::invalid_argument("unknown problem '" + s + "' (expected I, II or III)");
}

struct GeometrySpec {
    Problem problem = Problem::III;
    double r_inner = 1.0; ///< anchoring circle for II/III; must be 0 for I
    double r_outer = 8.0;
    int anchor_degree = 2;
    double anchor_phase_offset = 0.0;

    /// Radius of the anchoring circle.
    double gamma_radius() const { return problem == Problem::I ? r_outer : r_inner; }
    bool has_dirichlet_ring() const { return problem != Problem::I; }
};

/**
 * Structured polar grid.
 *
 * Rings i = 0..n_r carry nodes at radii[i]; each ring has n_theta nodes at
 * theta_j = j * dtheta, except ring 0 of problem I, which is the single origin
 * node. Nodes are stored ring-major.
 *
 * The discrete Dirichlet energy is edge based:
 *   radial edge (i,j)-(i+1,j)   coefficient radial_coef[i]
 *   angular edge (i,j)-(i,j+1)  coefficient angular_coef[i]
 * with log-radius coefficients, so ln r and functions of theta alone are
 * integrated exactly. Node area weights are exact annular sectors between the
 * radial mid-points, so they sum to the exact domain area.
 */
class PolarGrid {
public:
    PolarGrid(GeometrySpec spec, std::vector<double> radii, int n_theta)
        : spec_(spec), radii_(std::move(radii)), n_theta_(n_theta)
    {
        n_r_ = static_cast<int>(radii_.size()) - 1;
        if (n_r_ < 1) throw std::invalid_argument("PolarGrid: need at least two rings");
        if (n_theta_ < 4 || n_theta_ % 2 != 0)
            throw std::invalid_argument("PolarGrid: n_theta must be even and >= 4");
        for (int i = 0; i < n_r_; ++i)
            if (!(radii_[i + 1] > radii_[i]))
                throw std::invalid_argument("PolarGrid: radii must increase strictly");
        if (origin() && radii_[0] != 0.0)
            throw std::invalid_argument("PolarGrid: problem I grid must start at the origin");
        if (!origin() && !(radii_[0] > 0.0))
            throw std::invalid_argument("PolarGrid: annular grid needs a positive inner radius");
        dtheta_ = kTwoPi / n_theta_;
        build();
    }

    const GeometrySpec& spec() const { return spec_; }
    Problem problem() const { return spec_.problem; }
    int n_r() const { return n_r_; }
    int n_theta() const { return n_theta_; }
    double dtheta() const { return dtheta_; }
    const std::vector<double>& radii() const { return radii_; }
    double radius(int i) const { return radii_[i]; }
    double theta(int j) const { return j * dtheta_; }
    bool origin() const { return spec_.problem == Problem::I; }

    std::size_t size() const { return size_; }
    int ring_count(int i) const { return (origin() && i == 0) ? 1 : n_theta_; }
    std::size_t ring_offset(int i) const { return offsets_[i]; }
    std::size_t index(int i, int j) const
    {
        if (origin() && i == 0) return 0;
        j %= n_theta_;
        if (j < 0) j += n_theta_;
        return offsets_[i] + static_cast<std::size_t>(j);
    }
    int ring_of(std::size_t k) const { return ring_[k]; }
    int angle_of(std::size_t k) const { return angle_[k]; }

    double x(std::size_t k) const { return radii_[ring_[k]] * std::cos(theta(angle_[k])); }
    double y(std::size_t k) const { return radii_[ring_[k]] * std::sin(theta(angle_[k])); }
    cplx z(std::size_t k) const { return std::polar(radii_[ring_[k]], theta(angle_[k])); }

    /// Ring index of the anchoring circle.
    int gamma_ring() const { return origin() ? n_r_ : 0; }
    /// Ring index of the pinned u = 1 circle, or -1 for problem I.
    int dirichlet_ring() const { return origin() ? -1 : n_r_; }
    bool is_dirichlet(std::size_t k) const { return ring_[k] == dirichlet_ring(); }
    bool is_gamma(std::size_t k) const { return ring_[k] == gamma_ring(); }

    double area_weight(std::size_t k) const { return area_[ring_[k]]; }
    double ring_area_weight(int i) const { return area_[i]; }
    /// Arclength weight of each anchoring node.
    double boundary_weight() const { return spec_.gamma_radius() * dtheta_; }

    double radial_coef(int i) const { return radial_coef_[i]; }
    double angular_coef(int i) const { return angular_coef_[i]; }

    /// Radial extent of the dual cell of ring i.
    double dual_inner(int i) const { return dual_lo_[i]; }
    double dual_outer(int i) const { return dual_hi_[i]; }

    /// Smallest edge length, used to bound explicit steps.
    double min_spacing() const { return h_min_; }
    /// Largest edge length near the anchoring circle.
    double spacing_at_gamma() const
    {
        const int g = gamma_ring();
        const double dr = origin() ? radii_[n_r_] - radii_[n_r_ - 1] : radii_[1] - radii_[0];
        return std::max(dr, radii_[g] * dtheta_);
    }

    double total_area() const
    {
        double s = 0.0;
        for (int i = 0; i <= n_r_; ++i) s += area_[i] * ring_count(i);
        return s;
    }
    double total_boundary_length() const { return boundary_weight() * n_theta_; }

private:
    void build()
    {
        offsets_.resize(n_r_ + 2);
        std::size_t off = 0;
        for (int i = 0; i <= n_r_; ++i) {
            offsets_[i] = off;
            off += static_cast<std::size_t>(ring_count(i));
        }
        offsets_[n_r_ + 1] = off;
        size_ = off;
        ring_.resize(size_);
        angle_.resize(size_);
        for (int i = 0; i <= n_r_; ++i)
            for (int j = 0; j < ring_count(i); ++j) {
                ring_[offsets_[i] + j] = i;
                angle_[offsets_[i] + j] = j;
            }

        dual_lo_.resize(n_r_ + 1);
        dual_hi_.resize(n_r_ + 1);
        for (int i = 0; i <= n_r_; ++i) {
            dual_lo_[i] = (i == 0) ? radii_[0] : 0.5 * (radii_[i - 1] + radii_[i]);
            dual_hi_[i] = (i == n_r_) ? radii_[n_r_] : 0.5 * (radii_[i] + radii_[i + 1]);
        }

        area_.resize(n_r_ + 1);
        for (int i = 0; i <= n_r_; ++i) {
            const double lo = dual_lo_[i], hi = dual_hi_[i];
            area_[i] = (origin() && i == 0) ? kPi * hi * hi : 0.5 * dtheta_ * (hi * hi - lo * lo);
        }

        radial_coef_.resize(n_r_);
        for (int i = 0; i < n_r_; ++i)
            radial_coef_[i] = (origin() && i == 0) ? 0.5 * dtheta_
                                                   : dtheta_ / std::log(radii_[i + 1] / radii_[i]);

        angular_coef_.assign(n_r_ + 1, 0.0);
        for (int i = 0; i <= n_r_; ++i) {
            if (origin() && i == 0) continue;
            angular_coef_[i] = std::log(dual_hi_[i] / dual_lo_[i]) / dtheta_;
        }

        h_min_ = 1e300;
        for (int i = 0; i < n_r_; ++i) h_min_ = std::min(h_min_, radii_[i + 1] - radii_[i]);
        for (int i = 0; i <= n_r_; ++i)
            if (radii_[i] > 0.0) h_min_ = std::min(h_min_, radii_[i] * dtheta_);
    }

    GeometrySpec spec_;
    std::vector<double> radii_;
    int n_r_ = 0;
    int n_theta_ = 0;
    double dtheta_ = 0.0;
    std::size_t size_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<int> ring_, angle_;
    std::vector<double> dual_lo_, dual_hi_, area_, radial_coef_, angular_coef_;
    double h_min_ = 0.0;
};

using GridPtr = std::shared_ptr<const PolarGrid>;

/// Default outer/inner cell ratio: uniform for I/II, 4 for the truncated exterior.
inline double default_radial_stretch(Problem p) { return p == Problem::III ? 4.0 : 1.0; }

/**
 * Radial nodes on [a, b] whose cell sizes grow geometrically so that the last
 * cell is `stretch` times the first. stretch = 1 gives uniform spacing.
 */
inline std::vector<double> stretched_radii(double a, double b, int n_r, double stretch)
{
    std::vector<double> r(n_r + 1);
    if (std::abs(stretch - 1.0) < 1e-14 || n_r == 1) {
        for (int i = 0; i <= n_r; ++i) r[i] = a + (b - a) * i / n_r;
    } else {
        const double q = std::pow(stretch, 1.0 / (n_r - 1));
        const double h0 = (b - a) * (q - 1.0) / (std::pow(q, n_r) - 1.0);
        r[0] = a;
        double h = h0;
        for (int i = 1; i <= n_r; ++i) {
            r[i] = r[i - 1] + h;
            h *= q;
        }
    }
    r[n_r] = b;
    return r;
}

/// Validates the geometry and builds the polar grid.
inline GridPtr build_grid(const GeometrySpec& spec, int n_r, int n_theta, double radial_stretch)
{
    if (n_r < 8) throw std::invalid_argument("build_grid: n_r must be >= 8");
    if (n_theta < 16) throw std::invalid_argument("build_grid: n_theta must be >= 16");
    if (n_theta % 2 != 0) throw std::invalid_argument("build_grid: n_theta must be even");
    if (!(radial_stretch > 0.0)) throw std::invalid_argument("build_grid: radial_stretch must be positive");
    if (!(spec.r_outer > 0.0)) throw std::invalid_argument("build_grid: r_outer must be positive");
    if (spec.problem == Problem::I) {
        if (spec.r_inner != 0.0)
            throw std::invalid_argument("build_grid: problem I is a full disk, r_inner must be 0");
    } else {
        if (!(spec.r_inner > 0.0)) throw std::invalid_argument("build_grid: r_inner must be positive");
        if (!(spec.r_outer > spec.r_inner))
            throw std::invalid_argument("build_grid: r_outer must exceed r_inner");
    }
    auto radii = stretched_radii(spec.r_inner, spec.r_outer, n_r, radial_stretch);
    return std::make_shared<const PolarGrid>(spec, std::move(radii), n_theta);
}

/// Grid from explicit radial nodes (nested truncation grids, rescaled grids).
inline GridPtr build_grid_from_radii(const GeometrySpec& spec, std::vector<double> radii, int n_theta)
{
    return std::make_shared<const PolarGrid>(spec, std::move(radii), n_theta);
}

/// g(theta) = exp(i (D theta + offset)) at the anchoring nodes, j = 0..n_theta-1.
inline std::vector<cplx> anchor_values(const GeometrySpec& spec, const PolarGrid& grid)
{
    std::vector<cplx> g(grid.n_theta());
    for (int j = 0; j < grid.n_theta(); ++j)
        g[j] = std::polar(1.0, spec.anchor_degree * grid.theta(j) + spec.anchor_phase_offset);
    return g;
}

/// Winding number of a closed sequence of samples (sum of principal increments / 2 pi).
inline double discrete_winding(const std::vector<cplx>& loop)
{
    double s = 0.0;
    for (std::size_t k = 0; k < loop.size(); ++k) s += phase_increment(loop[k], loop[(k + 1) % loop.size()]);
    return s / kTwoPi;
}

} // namespace glanchor
