#pragma once

#include <cmath>
#include <stdexcept>

namespace glanchor {

/// Anchoring parameters. lambda is derived on every call, never cached.
struct AnchoringParams {
    double eps = 0.05;
    double alpha = 0.8;
    double K = 1.0;

    double lambda() const { return K * std::pow(eps, -alpha); }

    void validate() const
    {
        if (!(eps > 0.0)) throw std::invalid_argument("AnchoringParams: eps must be positive");
        if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("AnchoringParams: alpha must lie in (0,1]");
        if (!(K > 0.0)) throw std::invalid_argument("AnchoringParams: K must be positive");
    }
};

} // namespace glanchor
