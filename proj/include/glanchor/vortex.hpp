#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "glanchor/defects.hpp"
#include "glanchor/field.hpp"

namespace glanchor {

/// Grid cell between rings i and i+1 and angles j and j+1.
struct Cell {
    int i = 0;
    int j = 0;
};

/**
 * Winding of u around one cell, counterclockwise. For the disk, cells next to
 * the origin are triangles. Returns nullopt when a corner vanishes.
 */
inline std::optional<int> plaquette_winding(const OrderParameter& u, Cell c)
{
    const PolarGrid& g = *u.grid;
    std::vector<cplx> loop;
    if (g.origin() && c.i == 0) loop = {u[0], u[g.index(1, c.j)], u[g.index(1, c.j + 1)]};
    else
        loop = {u[g.index(c.i, c.j)], u[g.index(c.i + 1, c.j)], u[g.index(c.i + 1, c.j + 1)], u[g.index(c.i, c.j + 1)]};
    for (const auto& v : loop)
        if (std::abs(v) < kUndefinedModulus) return std::nullopt;
    return static_cast<int>(std::lround(discrete_winding(loop)));
}

struct BadComponent {
    std::vector<std::size_t> nodes;
    double cx = 0.0, cy = 0.0; ///< centroid
    double diameter = 0.0;
    bool touches_gamma = false;
};

struct BadSet {
    std::vector<bool> mask;
    std::vector<BadComponent> components;
};

/// S_eps: |u| < 1/2, or |u - g| > 1/4 on Gamma, plus the corners of winding or degenerate cells.
inline BadSet bad_set(const OrderParameter& u)
{
    const PolarGrid& g = *u.grid;
    BadSet b;
    b.mask.assign(g.size(), false);
    for (std::size_t k = 0; k < g.size(); ++k)
        if (std::abs(u[k]) < 0.5) b.mask[k] = true;
    const auto gv = anchor_values(g.spec(), g);
    for (int j = 0; j < g.n_theta(); ++j) {
        const auto k = g.index(g.gamma_ring(), j);
        if (std::abs(u[k] - gv[j]) > 0.25) b.mask[k] = true;
    }
    for (int i = 0; i < g.n_r(); ++i)
        for (int j = 0; j < g.n_theta(); ++j) {
            const auto w = plaquette_winding(u, {i, j});
            if (w && *w == 0) continue;
            b.mask[g.index(i, j)] = b.mask[g.index(i + 1, j)] = b.mask[g.index(i + 1, j + 1)] = b.mask[g.index(i, j + 1)] =
                true;
        }

    // 8-connected components, periodic in theta; the origin touches all of ring 1
    std::vector<int> label(g.size(), -1);
    for (std::size_t s = 0; s < g.size(); ++s) {
        if (!b.mask[s] || label[s] >= 0) continue;
        const int id = static_cast<int>(b.components.size());
        BadComponent comp;
        std::vector<std::size_t> stack{s};
        label[s] = id;
        auto visit = [&](std::size_t n) {
            if (b.mask[n] && label[n] < 0) {
                label[n] = id;
                stack.push_back(n);
            }
        };
        while (!stack.empty()) {
            const std::size_t k = stack.back();
            stack.pop_back();
            comp.nodes.push_back(k);
            const int i = g.ring_of(k), j = g.angle_of(k);
            if (g.origin() && i == 0) {
                for (int jj = 0; jj < g.n_theta(); ++jj) visit(g.index(1, jj));
                continue;
            }
            for (int di = -1; di <= 1; ++di) {
                const int ii = i + di;
                if (ii < 0 || ii > g.n_r()) continue;
                if (g.origin() && ii == 0) {
                    visit(0);
                    continue;
                }
                for (int dj = -1; dj <= 1; ++dj)
                    if (di != 0 || dj != 0) visit(g.index(ii, j + dj));
            }
        }
        std::sort(comp.nodes.begin(), comp.nodes.end());
        for (auto k : comp.nodes) {
            comp.cx += g.x(k);
            comp.cy += g.y(k);
            if (g.is_gamma(k)) comp.touches_gamma = true;
        }
        comp.cx /= static_cast<double>(comp.nodes.size());
        comp.cy /= static_cast<double>(comp.nodes.size());
        for (auto a : comp.nodes)
            for (auto c : comp.nodes) comp.diameter = std::max(comp.diameter, std::abs(g.z(a) - g.z(c)));
        b.components.push_back(std::move(comp));
    }
    return b;
}

namespace detail {

/// Ring/angle bounding box of a node set with unwrapped angles (jmin may be negative).
struct PolarBox {
    int imin = 0, imax = 0, jmin = 0, jmax = 0;
    bool full_turn = false;
};

inline PolarBox polar_box(const PolarGrid& g, const std::vector<std::size_t>& nodes)
{
    PolarBox b;
    b.imin = g.n_r();
    b.imax = 0;
    std::vector<int> js;
    bool origin = false;
    for (auto k : nodes) {
        const int i = g.ring_of(k);
        b.imin = std::min(b.imin, i);
        b.imax = std::max(b.imax, i);
        if (g.origin() && i == 0) origin = true;
        else js.push_back(g.angle_of(k));
    }
    if (origin || js.empty()) {
        b.full_turn = true;
        return b;
    }
    std::sort(js.begin(), js.end());
    js.erase(std::unique(js.begin(), js.end()), js.end());
    // the largest angular gap decides where the box starts
    const int nt = g.n_theta();
    int best_gap = -1, start = 0;
    for (std::size_t a = 0; a < js.size(); ++a) {
        const int nxt = (a + 1 < js.size()) ? js[a + 1] : js[0] + nt;
        if (nxt - js[a] > best_gap) {
            best_gap = nxt - js[a];
            start = (a + 1 < js.size()) ? js[a + 1] : js[0];
        }
    }
    const int span = nt - best_gap; // covered angular extent in cells
    b.jmin = start;
    b.jmax = start + span;
    if (best_gap <= 1) b.full_turn = true;
    return b;
}

/// Winding along a closed polar rectangle [i0,i1] x [j0,j1], counterclockwise.
inline double rectangle_winding(const OrderParameter& u, int i0, int i1, int j0, int j1, double* min_mod = nullptr)
{
    const PolarGrid& g = *u.grid;
    std::vector<cplx> loop;
    for (int i = i0; i < i1; ++i) loop.push_back(u[g.index(i, j0)]);
    for (int j = j0; j < j1; ++j) loop.push_back(u[g.index(i1, j)]);
    for (int i = i1; i > i0; --i) loop.push_back(u[g.index(i, j1)]);
    for (int j = j1; j > j0; --j) loop.push_back(u[g.index(i0, j)]);
    if (min_mod) {
        *min_mod = 1e300;
        for (const auto& v : loop) *min_mod = std::min(*min_mod, std::abs(v));
    }
    return discrete_winding(loop);
}

/// Winding on the full ring i (counterclockwise).
inline double ring_winding(const OrderParameter& u, int i)
{
    const PolarGrid& g = *u.grid;
    std::vector<cplx> loop;
    for (int j = 0; j < g.n_theta(); ++j) loop.push_back(u[g.index(i, j)]);
    return discrete_winding(loop);
}

/// Zero of the bilinear interpolant on a cell, in (s,t) in [0,1]^2, by Newton from the centre.
inline std::optional<cplx> bilinear_zero(const OrderParameter& u, Cell c)
{
    const PolarGrid& g = *u.grid;
    if (g.origin() && c.i == 0) return std::nullopt;
    const cplx a = u[g.index(c.i, c.j)], b = u[g.index(c.i + 1, c.j)], d = u[g.index(c.i, c.j + 1)],
               e = u[g.index(c.i + 1, c.j + 1)];
    double s = 0.5, t = 0.5;
    for (int it = 0; it < 30; ++it) {
        const cplx f = a * (1 - s) * (1 - t) + b * s * (1 - t) + d * (1 - s) * t + e * s * t;
        const cplx fs = (b - a) * (1 - t) + (e - d) * t;
        const cplx ft = (d - a) * (1 - s) + (e - b) * s;
        const double det = fs.real() * ft.imag() - fs.imag() * ft.real();
        if (std::abs(det) < 1e-300) return std::nullopt;
        const double ds = (f.real() * ft.imag() - f.imag() * ft.real()) / det;
        const double dt = (fs.real() * f.imag() - fs.imag() * f.real()) / det;
        s -= ds;
        t -= dt;
        if (std::abs(ds) + std::abs(dt) < 1e-13) break;
    }
    if (s < -1e-6 || s > 1 + 1e-6 || t < -1e-6 || t > 1 + 1e-6) return std::nullopt;
    s = std::clamp(s, 0.0, 1.0);
    t = std::clamp(t, 0.0, 1.0);
    const double r = g.radius(c.i) + s * (g.radius(c.i + 1) - g.radius(c.i));
    const double th = g.theta(c.j) + t * g.dtheta();
    return std::polar(r, th);
}

inline double min_distance(const PolarGrid& g, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b)
{
    double m = 1e300;
    for (auto x : a)
        for (auto y : b) m = std::min(m, std::abs(g.z(x) - g.z(y)));
    return m;
}

inline double smoothstep(double x)
{
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
}

} // namespace detail

struct BoundaryDegreeResult {
    bool resolved = false;
    int D = 0;
    double half_circle_winding = 0.0; ///< phase increment inside Omega / 2 pi
    int D_alt = 0;                    ///< degree with the sampled smoothstep closure
    int j_start = 0, j_end = 0;       ///< unwrapped arc endpoints on Gamma
    int depth = 0;                    ///< rings used for the half-circle
};

/**
 * Boundary degree of a bad arc: winding of u along a polar half-rectangle in
 * Omega joining the arc endpoints, closed along Gamma by the extension whose
 * phase is arg g plus a linear interpolation of arg(u/g) between the endpoints.
 * The arc is given by unwrapped angle indices [j0, j1] on Gamma and a depth.
 */
inline BoundaryDegreeResult boundary_degree(const OrderParameter& u, int j0, int j1, int depth)
{
    const PolarGrid& g = *u.grid;
    const int nt = g.n_theta();
    const int D = g.spec().anchor_degree;
    const auto gv = anchor_values(g.spec(), g);
    auto gat = [&](int j) { return gv[((j % nt) + nt) % nt]; };
    const bool disk = g.origin();
    const int gr = g.gamma_ring();

    BoundaryDegreeResult res;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const int a = j0, b = j1;
        const int dmax = disk ? g.n_r() - 1 : g.n_r() - 1;
        const int dep = std::clamp(depth, 1, dmax);
        const int inner = disk ? gr - dep : gr + dep;
        const auto kA = g.index(gr, a), kB = g.index(gr, b);
        const bool ends_ok = std::abs(u[kA] - gat(a)) <= 0.25 && std::abs(u[kB] - gat(b)) <= 0.25;
        if (!ends_ok || b - a >= nt) {
            j0 -= 2;
            j1 += 2;
            depth += 2;
            continue;
        }
        // path inside Omega from A to B (exterior/annulus) or from B to A (disk), counterclockwise overall
        std::vector<cplx> path;
        if (!disk) {
            for (int i = gr; i < inner; ++i) path.push_back(u[g.index(i, a)]);
            for (int j = a; j < b; ++j) path.push_back(u[g.index(inner, j)]);
            for (int i = inner; i >= gr; --i) path.push_back(u[g.index(i, b)]);
        } else {
            for (int i = gr; i > inner; --i) path.push_back(u[g.index(i, b)]);
            for (int j = b; j > a; --j) path.push_back(u[g.index(inner, j)]);
            for (int i = inner; i <= gr; ++i) path.push_back(u[g.index(i, a)]);
        }
        double inc = 0.0;
        for (std::size_t k = 0; k + 1 < path.size(); ++k) inc += phase_increment(path[k], path[k + 1]);
        // closure along Gamma from the path end back to its start
        const int js = disk ? a : b, je = disk ? b : a; // closure runs js -> je
        const double dA = std::arg(u[g.index(gr, js)] / gat(js));
        const double dB = std::arg(u[g.index(gr, je)] / gat(je));
        const double closure = D * (je - js) * g.dtheta() + (dB - dA);
        res.half_circle_winding = inc / kTwoPi;
        res.D = static_cast<int>(std::lround((inc + closure) / kTwoPi));

        // second extension: smoothstep interpolation of arg(u/g), sampled finely
        const int m = 64 * std::max(1, std::abs(je - js));
        cplx prev = path.back();
        double inc2 = inc;
        for (int s = 1; s <= m; ++s) {
            const double f = static_cast<double>(s) / m;
            const double th = g.theta(js) + f * (je - js) * g.dtheta();
            const double ph = D * th + g.spec().anchor_phase_offset + dA + detail::smoothstep(f) * (dB - dA);
            const cplx cur = std::polar(1.0, ph);
            inc2 += phase_increment(prev, cur);
            prev = cur;
        }
        inc2 += phase_increment(prev, path.front());
        res.D_alt = static_cast<int>(std::lround(inc2 / kTwoPi));
        res.resolved = true;
        res.j_start = a;
        res.j_end = b;
        res.depth = dep;
        return res;
    }
    return res;
}

/**
 * Finds defects: bad components touching Gamma are boundary defects (one per
 * connected arc), interior components within 5 eps of each other are merged
 * and those within 5 eps of a boundary component are absorbed into it.
 * Interior degrees come from a loop two cells outside the cluster.
 */
inline DefectSet detect(const OrderParameter& u, const AnchoringParams& p)
{
    const PolarGrid& g = *u.grid;
    const GeometrySpec& spec = g.spec();
    const BadSet bs = bad_set(u);
    DefectSet ds;
    const double r_int = 5.0 * p.eps;
    const double r_bdy = 5.0 * std::pow(p.eps, p.alpha);

    std::vector<int> bidx, iidx;
    for (std::size_t c = 0; c < bs.components.size(); ++c)
        (bs.components[c].touches_gamma ? bidx : iidx).push_back(static_cast<int>(c));

    // merge interior components (union-find)
    std::vector<int> parent(bs.components.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t a = 0; a < iidx.size(); ++a)
        for (std::size_t b = a + 1; b < iidx.size(); ++b)
            if (detail::min_distance(g, bs.components[iidx[a]].nodes, bs.components[iidx[b]].nodes) < r_int)
                parent[find(iidx[a])] = find(iidx[b]);
    std::vector<bool> absorbed(bs.components.size(), false);
    for (int c : iidx)
        for (int b : bidx)
            if (detail::min_distance(g, bs.components[c].nodes, bs.components[b].nodes) < r_int) absorbed[c] = true;

    std::vector<std::vector<std::size_t>> clusters;
    {
        std::vector<int> root_to_cluster(bs.components.size(), -1);
        for (int c : iidx) {
            if (absorbed[c]) continue;
            const int r = find(c);
            if (root_to_cluster[r] < 0) {
                root_to_cluster[r] = static_cast<int>(clusters.size());
                clusters.emplace_back();
            }
            auto& v = clusters[root_to_cluster[r]];
            v.insert(v.end(), bs.components[c].nodes.begin(), bs.components[c].nodes.end());
        }
    }

    std::vector<cplx> centres; // for the cover diagnostic
    std::vector<double> radii;

    for (const auto& nodes : clusters) {
        const auto box = detail::polar_box(g, nodes);
        int d = 0;
        bool ok = true;
        if (box.full_turn) {
            // encloses the origin (disk) or wraps the hole: use a full ring outside the cluster
            const int ring = std::min(box.imax + 2, g.n_r());
            if (!g.origin() || ring >= g.n_r()) ok = false;
            else d = static_cast<int>(std::lround(detail::ring_winding(u, ring)));
        } else {
            int i0 = std::max(box.imin - 2, g.origin() ? 1 : 0);
            int i1 = std::min(box.imax + 2, g.n_r());
            double mm = 0.0;
            d = static_cast<int>(std::lround(detail::rectangle_winding(u, i0, i1, box.jmin - 2, box.jmax + 2, &mm)));
            if (mm < kUndefinedModulus) ok = false;
        }
        if (!ok) {
            ++ds.unresolved;
            continue;
        }
        if (d == 0) continue;

        // position: zero of the bilinear interpolant in a winding cell, else |u|-weighted centroid
        std::optional<cplx> pos;
        double best = 1e300;
        for (auto k : nodes) {
            const int i = g.ring_of(k), j = g.angle_of(k);
            for (int di = -1; di <= 0; ++di)
                for (int dj = -1; dj <= 0; ++dj) {
                    const int ci = i + di;
                    if (ci < 0 || ci >= g.n_r()) continue;
                    const Cell c{ci, ((j + dj) % g.n_theta() + g.n_theta()) % g.n_theta()};
                    const auto w = plaquette_winding(u, c);
                    if (!w || *w == 0) continue;
                    if (auto z = detail::bilinear_zero(u, c)) {
                        double cm = 0.0;
                        for (auto kk : {g.index(c.i, c.j), g.index(c.i + 1, c.j), g.index(c.i, c.j + 1), g.index(c.i + 1, c.j + 1)})
                            cm += std::abs(u[kk]);
                        if (cm < best) {
                            best = cm;
                            pos = z;
                        }
                    }
                }
        }
        if (!pos) {
            cplx s(0.0, 0.0);
            double ws = 0.0;
            for (auto k : nodes) {
                const double w = std::max(0.5 - std::abs(u[k]), 0.0) * g.area_weight(k) + 1e-300;
                s += w * g.z(k);
                ws += w;
            }
            pos = s / ws;
        }
        ds.interior.push_back({pos->real(), pos->imag(), d});
        centres.push_back(*pos);
        radii.push_back(r_int);
    }

    const int gr = g.gamma_ring();
    for (int b : bidx) {
        const auto& comp = bs.components[b];
        std::vector<std::size_t> gnodes;
        for (auto k : comp.nodes)
            if (g.is_gamma(k)) gnodes.push_back(k);
        const auto box = detail::polar_box(g, gnodes);
        const auto cbox = detail::polar_box(g, comp.nodes);
        const int depth = (g.origin() ? gr - cbox.imin : cbox.imax - gr) + 2;
        int jmin = box.jmin, jmax = box.jmax;
        if (!box.full_turn) {
            // extend to cover the angular extent of the whole component
            const int w = cbox.full_turn ? 0 : std::max(0, (cbox.jmax - cbox.jmin) - (jmax - jmin));
            jmin -= w;
            jmax += w;
        }
        const auto bd = box.full_turn ? BoundaryDegreeResult{} : boundary_degree(u, jmin - 2, jmax + 2, depth);
        if (!bd.resolved) {
            ++ds.unresolved;
            continue;
        }
        if (bd.D == 0 && bd.D_alt == 0) continue;
        BoundaryDefect q;
        q.theta = wrap_angle(0.5 * (box.jmin + box.jmax) * g.dtheta());
        q.D = bd.D;
        q.arc_length = (box.jmax - box.jmin) * g.boundary_weight();
        q.half_circle_winding = bd.half_circle_winding;
        q.extension_agree = bd.D == bd.D_alt;
        ds.boundary.push_back(q);
        centres.push_back(std::polar(spec.gamma_radius(), q.theta));
        radii.push_back(r_bdy);
    }

    ds.accounting_ok = ds.unresolved == 0 && ds.total_degree() == expected_total_degree(spec.problem, spec.anchor_degree);
    int sgn = 0;
    for (const auto& p_ : ds.interior) {
        if (std::abs(p_.d) != 1) ds.unit_degrees = false;
        if (sgn == 0) sgn = p_.d > 0 ? 1 : -1;
        else if ((p_.d > 0 ? 1 : -1) != sgn) ds.same_sign = false;
    }
    for (const auto& q : ds.boundary) {
        if (std::abs(q.D) != 1) ds.unit_degrees = false;
        if (!q.extension_agree) ds.accounting_ok = false;
        if (sgn == 0) sgn = q.D > 0 ? 1 : -1;
        else if ((q.D > 0 ? 1 : -1) != sgn) ds.same_sign = false;
    }
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (!bs.mask[k]) continue;
        double excess = 1e300;
        for (std::size_t c = 0; c < centres.size(); ++c)
            excess = std::min(excess, std::max(0.0, std::abs(g.z(k) - centres[c]) - radii[c]));
        if (centres.empty()) excess = 1e300;
        ds.cover_excess = std::max(ds.cover_excess, excess);
    }
    return ds;
}

/// Node mask of the union of defect covers: B(p_i, 5 eps) and B(q_j, 5 eps^alpha).
inline std::vector<bool> defect_cover(const PolarGrid& g, const DefectSet& ds, const AnchoringParams& p)
{
    std::vector<bool> m(g.size(), false);
    const double ri = 5.0 * p.eps, rb = 5.0 * std::pow(p.eps, p.alpha);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const cplx z = g.z(k);
        for (const auto& d : ds.interior)
            if (std::abs(z - cplx(d.x, d.y)) < ri) m[k] = true;
        for (const auto& q : ds.boundary)
            if (std::abs(z - std::polar(g.spec().gamma_radius(), q.theta)) < rb) m[k] = true;
    }
    return m;
}

} // namespace glanchor
