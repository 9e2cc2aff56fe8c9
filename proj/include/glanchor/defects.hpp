#pragma once

#include <cmath>
#include <vector>

#include "glanchor/geometry.hpp"

namespace glanchor {

struct InteriorDefect {
    double x = 0.0;
    double y = 0.0;
    int d = 0;
};

/// Defect on the anchoring circle, located by its polar angle.
struct BoundaryDefect {
    double theta = 0.0;
    int D = 0;
    double arc_length = 0.0;       ///< length of the bad arc (0 for synthetic input)
    double half_circle_winding = 0.0; ///< phase increment on the half-circle / 2 pi
    bool extension_agree = true;   ///< the two closure extensions give the same integer
};

struct DefectSet {
    std::vector<InteriorDefect> interior;
    std::vector<BoundaryDefect> boundary;
    bool accounting_ok = true;
    bool unit_degrees = true; ///< every |d|, |D| equals 1
    bool same_sign = true;    ///< all nonzero degrees share a sign
    int unresolved = 0;       ///< bad components whose degree could not be assigned
    double cover_excess = 0.0; ///< largest distance of a bad node outside the 5 eps / 5 eps^alpha cover

    int interior_degree() const
    {
        int s = 0;
        for (const auto& p : interior) s += p.d;
        return s;
    }
    int boundary_degree() const
    {
        int s = 0;
        for (const auto& q : boundary) s += q.D;
        return s;
    }
    int total_degree() const { return interior_degree() + boundary_degree(); }
};

/// Degree budget: +D for the disk, -D for the annulus and the exterior.
inline int expected_total_degree(Problem p, int anchor_degree)
{
    return p == Problem::I ? anchor_degree : -anchor_degree;
}

} // namespace glanchor
