#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "glanchor/field.hpp"
#include "glanchor/laplace.hpp"

namespace glanchor {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Neumann Green's function of the exterior of the unit disk

class GreensExterior {
public:
    explicit GreensExterior(cplx p) : p_(p)
    {
        if (!(std::abs(p) >= 1.0 - 1e-14)) throw std::invalid_argument("GreensExterior: pole must satisfy |p| >= 1");
        pstar_ = p / std::norm(p);
    }
    cplx pole() const { return p_; }
    cplx reflected() const { return pstar_; }

    /// G(x,p) = -ln(|x - p| |x - p*| / |x|^2).
    double value(cplx x) const
    {
        check(x);
        return -std::log(std::abs(x - p_) * std::abs(x - pstar_) / std::norm(x));
    }

    /// grad G = 2x/|x|^2 - (x - p)/|x - p|^2 - (x - p*)/|x - p*|^2.
    cplx gradient(cplx x) const
    {
        check(x);
        const cplx a = x - p_, b = x - pstar_;
        return 2.0 * x / std::norm(x) - a / std::norm(a) - b / std::norm(b);
    }

private:
    void check(cplx x) const
    {
        if (std::abs(x - p_) < 1e-14 || std::abs(x - pstar_) < 1e-14)
            throw std::domain_error("GreensExterior: evaluation at the pole");
    }
    cplx p_, pstar_;
};

inline double greens_eval(cplx p, cplx x, cplx* grad = nullptr)
{
    GreensExterior G(p);
    if (grad) *grad = G.gradient(x);
    return G.value(x);
}

struct GreensCheck {
    std::vector<double> poles;          ///< |p| values, pole at (-|p|, 0) rotated by 0.3 rad
    std::vector<double> h;              ///< Laplacian stencil widths
    std::vector<double> laplacian_sup;  ///< sup |Lap_h G| over sample points, per h
    std::vector<double> mean_flux;      ///< (1/2 pi) int_Gamma dG/dr ds, per pole
    std::vector<double> decay_ratio;    ///< max |G| at |x| = 1000 divided by |p|, per pole
};

/**
 * Five-point Laplacian of G on a ring of sample points 1.3 <= |x| <= 4 kept
 * 0.25 away from the poles, at h = 1/n, 1/(2n), 1/(4n); mean radial flux on the
 * unit circle with n-point trapezoid on the analytic gradient; decay at 1000.
 */
inline GreensCheck greens_check(int n, const std::vector<double>& moduli = {1.5, 2.0, 5.0})
{
    if (n < 8) throw std::invalid_argument("greens_check: grid must be >= 8");
    GreensCheck c;
    c.poles = moduli;
    for (int k = 0; k < 3; ++k) c.h.push_back(1.0 / (n << k));
    c.laplacian_sup.assign(3, 0.0);
    for (double m : moduli) {
        const cplx p = std::polar(m, kPi + 0.3);
        GreensExterior G(p);
        for (int k = 0; k < 3; ++k) {
            const double h = c.h[k];
            for (double r : {1.3, 2.0, 3.0, 4.0})
                for (int a = 0; a < 24; ++a) {
                    const cplx x = std::polar(r, kTwoPi * a / 24 + 0.05);
                    if (std::abs(x - p) < 0.25 || std::abs(x - G.reflected()) < 0.25) continue;
                    const double lap = (G.value(x + h) + G.value(x - h) + G.value(x + cplx(0, h)) +
                                        G.value(x - cplx(0, h)) - 4.0 * G.value(x)) / (h * h);
                    c.laplacian_sup[k] = std::max(c.laplacian_sup[k], std::abs(lap));
                }
        }
        double flux = 0.0;
        const int nq = std::max(n, 64) * 4;
        for (int a = 0; a < nq; ++a) {
            const cplx e = std::polar(1.0, kTwoPi * (a + 0.5) / nq);
            const cplx g = G.gradient(e);
            flux += g.real() * e.real() + g.imag() * e.imag();
        }
        c.mean_flux.push_back(flux / nq);
        double dm = 0.0;
        for (int a = 0; a < 16; ++a) dm = std::max(dm, std::abs(G.value(std::polar(1000.0, kTwoPi * a / 16))));
        c.decay_ratio.push_back(dm / m);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Renormalized energies

struct WValue {
    double value = kInf;
    std::string reason; ///< non-empty when the +inf sentinel is returned
    bool finite() const { return std::isfinite(value); }
};

/**
 * Interior renormalized energy of D antivortices in the exterior domain:
 *   W = pi [ 3D sum ln|p_i| - sum_{i,j} ln|p_i - p_j*| - sum_{i != j} ln|p_i - p_j| ].
 * Optionally writes dW/dp_k (as x + i y).
 */
inline WValue w_interior(const std::vector<cplx>& p, std::vector<cplx>* grad = nullptr)
{
    WValue w;
    const std::size_t n = p.size();
    if (grad) grad->assign(n, cplx(0.0, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        if (!(std::abs(p[i]) > 1.0)) {
            w.reason = "point on or inside the unit circle";
            return w;
        }
        if (!std::isfinite(std::abs(p[i]))) {
            w.reason = "point at infinity";
            return w;
        }
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(p[i] - p[j]) == 0.0) {
                w.reason = "colliding points";
                return w;
            }
    }
    const double D = static_cast<double>(n);
    std::vector<cplx> ps(n);
    for (std::size_t i = 0; i < n; ++i) ps[i] = p[i] / std::norm(p[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s += 3.0 * D * std::log(std::abs(p[i]));
        for (std::size_t j = 0; j < n; ++j) {
            s -= std::log(std::abs(p[i] - ps[j]));
            if (i != j) s -= std::log(std::abs(p[i] - p[j]));
        }
    }
    w.value = kPi * s;
    if (grad) {
        for (std::size_t k = 0; k < n; ++k) {
            cplx gk = 3.0 * D * p[k] / std::norm(p[k]);
            for (std::size_t j = 0; j < n; ++j) {
                const cplx a = p[k] - ps[j];
                gk -= a / std::norm(a);
                if (j != k) gk -= 2.0 * (p[k] - p[j]) / std::norm(p[k] - p[j]);
            }
            // derivative through p_k* = p_k / |p_k|^2 (symmetric Jacobian (|p|^2 I - 2 p p^T) / |p|^4)
            const double m2 = std::norm(p[k]);
            for (std::size_t i = 0; i < n; ++i) {
                const cplx v = -(p[i] - ps[k]) / std::norm(p[i] - ps[k]); // d/dp* of -ln|p_i - p*|
                const double vx = -v.real(), vy = -v.imag();               // chain: d(p_i - p*)/dp* = -I
                const double px = p[k].real(), py = p[k].imag();
                const double jxx = (m2 - 2 * px * px) / (m2 * m2), jxy = -2 * px * py / (m2 * m2),
                             jyy = (m2 - 2 * py * py) / (m2 * m2);
                gk += cplx(jxx * vx + jxy * vy, jxy * vx + jyy * vy);
            }
            (*grad)[k] = kPi * gk;
        }
    }
    return w;
}

/**
 * The specialized two-vortex form for p_1 = (0, t1), p_2 = (0, -t2):
 *   ln w,  w = t1^8 t2^8 / ((t1^2 - 1)(t2^2 - 1)(t1 t2 + 1)^2).
 * It omits the pair interaction of the general formula.
 */
inline WValue w_two_vortex_specialized(double t1, double t2, double* d1 = nullptr, double* d2 = nullptr)
{
    WValue w;
    if (d1) *d1 = 0.0;
    if (d2) *d2 = 0.0;
    if (!(t1 > 1.0 && t2 > 1.0)) {
        w.reason = "point on or inside the unit circle";
        return w;
    }
    w.value = 8.0 * std::log(t1) + 8.0 * std::log(t2) - std::log(t1 * t1 - 1.0) - std::log(t2 * t2 - 1.0) -
              2.0 * std::log(t1 * t2 + 1.0);
    if (d1) *d1 = 8.0 / t1 - 2.0 * t1 / (t1 * t1 - 1.0) - 2.0 * t2 / (t1 * t2 + 1.0);
    if (d2) *d2 = 8.0 / t2 - 2.0 * t2 / (t2 * t2 - 1.0) - 2.0 * t1 / (t1 * t2 + 1.0);
    return w;
}

struct C0Result {
    double value = 0.0;         ///< mean over sample poles
    double max_deviation = 0.0; ///< max |c0(p) - mean|
    double refinement_change = 0.0; ///< |c0 with doubled order - c0|
    int poles = 0;
    bool ok() const { return max_deviation <= 1e-3; }
};

namespace detail {

/// Integral of f over [a, b] with panels graded geometrically toward a.
template <int N, class F>
double graded_toward_left(F&& f, double a, double b, int levels, double ratio)
{
    using boost::math::quadrature::gauss;
    double s = 0.0, hi = b;
    for (int k = 0; k < levels; ++k) {
        const double lo = a + (hi - a) * ratio;
        s += gauss<double, N>::integrate(f, lo, hi);
        hi = lo;
    }
    s += gauss<double, N>::integrate(f, a, hi);
    return s;
}

template <int N>
double c0_for_pole_shifted()
{
    // |e^{i(phi+t)} - e^{i phi}|^2 = 4 sin^2(t/2), which keeps full precision near the pole
    auto f = [](double t) { return std::log(4.0 * std::pow(std::sin(0.5 * t), 2)); };
    return 2.0 * graded_toward_left<N>(f, 0.0, kPi, 40, 0.2);
}

} // namespace detail

/**
 * c0 = int_Gamma ln|x - p|^2 ds on the unit circle, computed independently for
 * `poles` sample poles with panels graded toward the log singularity. The
 * spread over poles and the change under doubled Gauss order are reported.
 */
inline C0Result c0_constant(int poles = 8)
{
    using boost::math::quadrature::gauss;
    C0Result r;
    r.poles = poles;
    std::vector<double> vals;
    for (int k = 0; k < poles; ++k) {
        const double phi = kTwoPi * k / poles + 0.1234;
        const cplx p = std::polar(1.0, phi);
        // integrate in the absolute angle with breakpoints at the pole, panels graded toward it
        auto f = [&](double th) { return std::log(std::norm(std::polar(1.0, th) - p)); };
        // grading stops at 1e-11: below that phi + s loses the offset, and the rest contributes < 1e-9
        auto side = [&](double sgn) {
            return detail::graded_toward_left<20>([&](double s) { return f(phi + sgn * s); }, 0.0, kPi, 15, 0.2);
        };
        vals.push_back(side(1.0) + side(-1.0));
    }
    double m = 0.0;
    for (double v : vals) m += v;
    m /= poles;
    r.value = m;
    for (double v : vals) r.max_deviation = std::max(r.max_deviation, std::abs(v - m));
    r.refinement_change = std::abs(detail::c0_for_pole_shifted<40>() - detail::c0_for_pole_shifted<20>());
    return r;
}

/// Boundary renormalized energy: -2 pi sum_{i != j} ln|p_i - p_j| + (D^2/2) c0, p_i = e^{i theta_i}.
inline WValue w_boundary(const std::vector<double>& angles, double c0, std::vector<double>* grad = nullptr)
{
    WValue w;
    const std::size_t n = angles.size();
    if (grad) grad->assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(std::polar(1.0, angles[i]) - std::polar(1.0, angles[j])) < 1e-15) {
                w.reason = "coincident boundary points";
                return w;
            }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) s += std::log(std::abs(std::polar(1.0, angles[i]) - std::polar(1.0, angles[j])));
    const double D = static_cast<double>(n);
    w.value = -kTwoPi * s + 0.5 * D * D * c0;
    if (grad) {
        // |e^{ia} - e^{ib}| = 2 |sin((a-b)/2)|, d/da ln = cot((a-b)/2) / 2
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) (*grad)[i] -= kTwoPi * 2.0 * 0.5 / std::tan(0.5 * (angles[i] - angles[j]));
    }
    return w;
}

// ---------------------------------------------------------------------------
// Constrained minimization

enum class WMode { Interior, Boundary, InteriorSpecialized };

inline std::string to_string(WMode m)
{
    switch (m) {
    case WMode::Interior: return "interior";
    case WMode::Boundary: return "boundary";
    case WMode::InteriorSpecialized: return "interior_specialized";
    }
    return "?";
}

struct RenormReport {
    WMode mode = WMode::Interior;
    int degree = 0;
    std::string formula;             ///< which W variant was minimized
    std::vector<cplx> positions;     ///< minimizer
    std::vector<double> angles_a;    ///< a_i with p_i = |p_i| e^{i(pi - a_i)}
    double value = kInf;
    double grad_norm = kInf;         ///< in (|p_i|, free a_i) coordinates
    double constraint_residual = 0.0; ///< sum a_i mod 2 pi, wrapped
    int restarts = 0;
    bool converged = false;
    double c0 = 0.0;
};

namespace detail {

using FG = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Dense BFGS with Armijo backtracking; returns the final point.
inline Eigen::VectorXd bfgs(const FG& fg, Eigen::VectorXd x, double gtol, int max_iter, double* fval = nullptr,
                            double* gnorm = nullptr)
{
    const auto n = x.size();
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g(n), gn(n);
    double f = fg(x, g);
    for (int it = 0; it < max_iter && std::isfinite(f); ++it) {
        if (g.norm() < gtol) break;
        Eigen::VectorXd d = -H * g;
        if (d.dot(g) >= 0.0) {
            H.setIdentity();
            d = -g;
        }
        double step = 1.0, fn = kInf;
        Eigen::VectorXd xn;
        bool ok = false;
        for (int bt = 0; bt < 60; ++bt) {
            xn = x + step * d;
            fn = fg(xn, gn);
            if (std::isfinite(fn) && fn <= f + 1e-4 * step * d.dot(g)) {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if (!ok) break;
        const Eigen::VectorXd s = xn - x, y = gn - g;
        const double sy = s.dot(y);
        if (sy > 1e-300) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        x = xn;
        f = fn;
        g = gn;
    }
    if (fval) *fval = f;
    if (gnorm) *gnorm = g.norm();
    return x;
}

/// Newton polish with a central-difference Hessian of the analytic gradient.
inline Eigen::VectorXd newton_polish(const FG& fg, Eigen::VectorXd x, int iters)
{
    const auto n = x.size();
    Eigen::VectorXd g(n), gp(n), gm(n);
    for (int it = 0; it < iters; ++it) {
        const double f = fg(x, g);
        if (!std::isfinite(f)) break;
        Eigen::MatrixXd Hm(n, n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const double h = 1e-5 * std::max(1.0, std::abs(x[k]));
            Eigen::VectorXd xp = x, xm = x;
            xp[k] += h;
            xm[k] -= h;
            fg(xp, gp);
            fg(xm, gm);
            Hm.col(k) = (gp - gm) / (2.0 * h);
        }
        Hm = 0.5 * (Hm + Hm.transpose());
        Eigen::LDLT<Eigen::MatrixXd> ldlt(Hm);
        if (ldlt.info() != Eigen::Success) break;
        const Eigen::VectorXd dx = ldlt.solve(-g);
        Eigen::VectorXd xn = x + dx;
        Eigen::VectorXd gn(n);
        const double fn = fg(xn, gn);
        if (!std::isfinite(fn) || gn.norm() >= g.norm()) break;
        x = xn;
    }
    return x;
}

} // namespace detail

struct MinimizeOptions {
    int restarts = 16;
    std::uint64_t seed = 12345;
    double gtol = 1e-11;
    int max_iter = 2000;
};

/**
 * Minimizes W under the angle constraint sum a_i = 0 (mod 2 pi), with
 * p_i = |p_i| e^{i(pi - a_i)}. The last angle is -(a_1 + ... + a_{D-1}), so
 * the constraint holds exactly. Moduli are parametrized as 1 + e^{s}.
 */
inline RenormReport minimize_w(int D, WMode mode, const MinimizeOptions& opt = {})
{
    if (D < 1) throw std::invalid_argument("minimize_w: degree must be >= 1");
    RenormReport rep;
    rep.mode = mode;
    rep.degree = D;
    std::mt19937_64 rng(opt.seed);

    if (mode == WMode::InteriorSpecialized) {
        if (D != 2) throw std::invalid_argument("minimize_w: the specialized form exists for D = 2 only");
        rep.formula = "ln[t1^8 t2^8 / ((t1^2-1)(t2^2-1)(t1 t2+1)^2)], p1=(0,t1), p2=(0,-t2)";
        detail::FG fg = [](const Eigen::VectorXd& s, Eigen::VectorXd& g) {
            const double t1 = 1.0 + std::exp(s[0]), t2 = 1.0 + std::exp(s[1]);
            double d1, d2;
            const auto w = w_two_vortex_specialized(t1, t2, &d1, &d2);
            g.resize(2);
            g << d1 * (t1 - 1.0), d2 * (t2 - 1.0);
            return w.value;
        };
        std::uniform_real_distribution<double> U(-3.0, 2.0);
        double best = kInf;
        Eigen::VectorXd xb;
        for (int r = 0; r < opt.restarts; ++r) {
            Eigen::VectorXd x0(2);
            x0 << U(rng), U(rng);
            double f;
            auto x = detail::bfgs(fg, x0, opt.gtol, opt.max_iter, &f);
            x = detail::newton_polish(fg, x, 5);
            Eigen::VectorXd gg(2);
            f = fg(x, gg);
            if (f < best) {
                best = f;
                xb = x;
            }
        }
        const double t1 = 1.0 + std::exp(xb[0]), t2 = 1.0 + std::exp(xb[1]);
        double d1, d2;
        rep.value = w_two_vortex_specialized(t1, t2, &d1, &d2).value;
        rep.grad_norm = std::hypot(d1, d2);
        rep.positions = {cplx(0.0, t1), cplx(0.0, -t2)};
        rep.angles_a = {-kPi / 2, kPi / 2};
        rep.restarts = opt.restarts;
        rep.converged = rep.grad_norm < 1e-8;
        return rep;
    }

    if (mode == WMode::Boundary) {
        rep.c0 = c0_constant().value;
        rep.formula = "-2 pi sum_{i!=j} ln|p_i-p_j| + (D^2/2) c0, |p_i|=1";
        auto angles_of = [D](const Eigen::VectorXd& a) {
            std::vector<double> th(D);
            double s = 0.0;
            for (int i = 0; i < D - 1; ++i) {
                th[i] = kPi - a[i];
                s += a[i];
            }
            th[D - 1] = kPi + s; // a_D = -sum
            return th;
        };
        std::vector<double> th;
        double gnorm = 0.0;
        if (D == 1) {
            th = {kPi};
        } else {
            const double c0 = rep.c0;
            detail::FG fg = [&](const Eigen::VectorXd& a, Eigen::VectorXd& g) {
                auto t = angles_of(a);
                std::vector<double> gt;
                const auto w = w_boundary(t, c0, &gt);
                g.resize(D - 1);
                for (int i = 0; i < D - 1; ++i) g[i] = -gt[i] + gt[D - 1]; // dtheta_i/da_i = -1, dtheta_D/da_i = +1
                return w.value;
            };
            std::uniform_real_distribution<double> U(-kPi, kPi);
            double best = kInf;
            Eigen::VectorXd xb;
            for (int r = 0; r < opt.restarts; ++r) {
                Eigen::VectorXd x0(D - 1);
                for (int i = 0; i < D - 1; ++i) x0[i] = U(rng);
                double f;
                auto x = detail::bfgs(fg, x0, opt.gtol, opt.max_iter, &f);
                x = detail::newton_polish(fg, x, 5);
                Eigen::VectorXd gg(D - 1);
                f = fg(x, gg);
                if (f < best - 1e-12) {
                    best = f;
                    xb = x;
                }
            }
            Eigen::VectorXd gg(D - 1);
            fg(xb, gg);
            gnorm = gg.norm();
            th = angles_of(xb);
        }
        rep.value = w_boundary(th, rep.c0).value;
        rep.grad_norm = gnorm;
        double s = 0.0;
        for (double t : th) {
            rep.positions.push_back(std::polar(1.0, t));
            rep.angles_a.push_back(wrap_angle(kPi - t));
            s += kPi - t;
        }
        rep.constraint_residual = wrap_angle(s);
        rep.restarts = opt.restarts;
        rep.converged = rep.grad_norm < 1e-8;
        return rep;
    }

    // interior, general formula
    rep.formula = "pi[3D sum ln|p_i| - sum_{i,j} ln|p_i-p_j*| - sum_{i!=j} ln|p_i-p_j|]";
    const int nv = D + (D - 1); // s_1..s_D, a_1..a_{D-1}
    auto unpack = [D](const Eigen::VectorXd& v, std::vector<double>& t, std::vector<double>& a) {
        t.resize(D);
        a.resize(D);
        double s = 0.0;
        for (int i = 0; i < D; ++i) t[i] = 1.0 + std::exp(v[i]);
        for (int i = 0; i < D - 1; ++i) {
            a[i] = v[D + i];
            s += a[i];
        }
        a[D - 1] = -s;
    };
    // gradient in (t, a_free) coordinates
    auto tg = [D](const std::vector<double>& t, const std::vector<double>& a, Eigen::VectorXd& g) {
        std::vector<cplx> p(D), gp;
        for (int i = 0; i < D; ++i) p[i] = std::polar(t[i], kPi - a[i]);
        const auto w = w_interior(p, &gp);
        g.resize(2 * D - 1);
        std::vector<double> ga(D);
        for (int i = 0; i < D; ++i) {
            const cplx e = std::polar(1.0, kPi - a[i]);
            g[i] = gp[i].real() * e.real() + gp[i].imag() * e.imag();           // dp/dt = e
            const cplx dpa = cplx(0.0, -1.0) * p[i];                             // dp/da = -i p
            ga[i] = gp[i].real() * dpa.real() + gp[i].imag() * dpa.imag();
        }
        for (int i = 0; i < D - 1; ++i) g[D + i] = ga[i] - ga[D - 1];
        return w.value;
    };
    detail::FG fg = [&](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
        std::vector<double> t, a;
        unpack(v, t, a);
        const double f = tg(t, a, g);
        for (int i = 0; i < D; ++i) g[i] *= (t[i] - 1.0);
        return f;
    };
    std::uniform_real_distribution<double> Us(-3.0, 2.0), Ua(-kPi, kPi);
    double best = kInf;
    Eigen::VectorXd xb;
    for (int r = 0; r < opt.restarts; ++r) {
        Eigen::VectorXd x0(nv);
        for (int i = 0; i < D; ++i) x0[i] = Us(rng);
        for (int i = 0; i < D - 1; ++i) x0[D + i] = Ua(rng);
        double f;
        auto x = detail::bfgs(fg, x0, opt.gtol, opt.max_iter, &f);
        x = detail::newton_polish(fg, x, 5);
        Eigen::VectorXd gg(nv);
        f = fg(x, gg);
        if (f < best - 1e-12) {
            best = f;
            xb = x;
        }
    }
    std::vector<double> t, a;
    unpack(xb, t, a);
    Eigen::VectorXd g;
    rep.value = tg(t, a, g);
    rep.grad_norm = g.norm();
    double s = 0.0;
    for (int i = 0; i < D; ++i) {
        rep.positions.push_back(std::polar(t[i], kPi - a[i]));
        rep.angles_a.push_back(wrap_angle(a[i]));
        s += a[i];
    }
    rep.constraint_residual = wrap_angle(s);
    rep.restarts = opt.restarts;
    rep.converged = rep.grad_norm < 1e-8;
    return rep;
}

/// Predicted positions (x + i y) used to seed the solver's interior branch in the exterior problem.
inline std::vector<cplx> predicted_interior_positions(int D)
{
    if (D == 2) return minimize_w(2, WMode::InteriorSpecialized).positions;
    return minimize_w(std::max(D, 1), WMode::Interior).positions;
}

/// Predicted boundary angles (theta_j on Gamma).
inline std::vector<double> predicted_boundary_angles(int D)
{
    std::vector<double> th;
    for (const auto& p : minimize_w(std::max(D, 1), WMode::Boundary).positions) th.push_back(std::arg(p));
    return th;
}

// ---------------------------------------------------------------------------
// Annulus conjugate functions and capacity

struct AnnulusConjugate {
    GridPtr grid;
    std::vector<cplx> interior_poles;
    std::vector<double> boundary_poles; ///< angles on Gamma
    Vec H;                              ///< smooth remainder on grid nodes
    double shift = 0.0;                 ///< constant enforcing int_Gamma Phi ds = 0
    double flux_imbalance = 0.0;        ///< discrete Neumann data sum before projection
    double gamma_flux_error = 0.0;      ///< max |d_r Phi - D| on Gamma away from poles (one-sided)
    double outer_flux_error = 0.0;      ///< max |d_r Phi| on the outer circle
    double gamma_mean = 0.0;            ///< int_Gamma Phi ds after normalization
    double capacity = 0.0;              ///< int |grad psi|^2
    Vec psi;
    double beta = 0.0;                  ///< sum of defect angles a_i, b_j

    /// Singular part at x.
    double singular(cplx x) const
    {
        double s = 0.0;
        for (const auto& p : interior_poles) s -= std::log(std::abs(x - p));
        for (double b : boundary_poles) s -= 2.0 * std::log(std::abs(x - std::polar(1.0, b)));
        return s;
    }
    cplx singular_gradient(cplx x) const
    {
        cplx g(0.0, 0.0);
        for (const auto& p : interior_poles) g -= (x - p) / std::norm(x - p);
        for (double b : boundary_poles) g -= 2.0 * (x - std::polar(1.0, b)) / std::norm(x - std::polar(1.0, b));
        return g;
    }
    /// Phi at node k (the singular part may be infinite at a boundary pole node).
    double phi(std::size_t k) const { return singular(grid->z(k)) + H[static_cast<Eigen::Index>(k)] + shift; }
};

/**
 * Solves -Lap Phi = 2 pi sum delta_{p_i} in 1 < |x| < R with d_r Phi = n on
 * |x| = 1 (n = number of poles; a boundary pole carries the extra -2 pi delta)
 * and d_r Phi = 0 on |x| = R. Phi = singular part + H, and H solves a Neumann
 * problem with smooth data; the constant is fixed by int_Gamma Phi ds = 0.
 */
inline AnnulusConjugate annulus_conjugates(double R, const std::vector<cplx>& interior_poles,
                                           const std::vector<double>& boundary_poles, int n_r, int n_theta)
{
    if (!(R > 1.0)) throw std::invalid_argument("annulus_conjugates: R must exceed 1");
    for (const auto& p : interior_poles)
        if (!(std::abs(p) > 1.0 && std::abs(p) < R)) throw std::invalid_argument("annulus_conjugates: pole outside the annulus");
    GeometrySpec spec;
    spec.problem = Problem::II;
    spec.r_inner = 1.0;
    spec.r_outer = R;
    spec.anchor_degree = static_cast<int>(interior_poles.size() + boundary_poles.size());
    AnnulusConjugate ac;
    ac.grid = build_grid(spec, n_r, n_theta, 1.0);
    ac.interior_poles = interior_poles;
    ac.boundary_poles = boundary_poles;
    const PolarGrid& g = *ac.grid;
    const auto n = static_cast<Eigen::Index>(g.size());
    const double nd = static_cast<double>(spec.anchor_degree);

    // Neumann data for H: d_r H = n - d_r(sing) on Gamma, -d_r(sing) on the outer circle.
    // Boundary poles sit on Gamma: there d_r(-2 ln|x - q|) = -1 except at q, and the remainder
    // data is taken from that limit so the delta is carried by the singular part.
    auto dr_sing = [&](cplx x, bool on_gamma) {
        const cplx rh = x / std::abs(x);
        double v = 0.0;
        for (const auto& p : interior_poles) {
            const cplx gq = -(x - p) / std::norm(x - p);
            v += gq.real() * rh.real() + gq.imag() * rh.imag();
        }
        for (double b : boundary_poles) {
            if (on_gamma) v += -1.0;
            else {
                const cplx q = std::polar(1.0, b);
                const cplx gq = -2.0 * (x - q) / std::norm(x - q);
                v += gq.real() * rh.real() + gq.imag() * rh.imag();
            }
        }
        return v;
    };
    Vec rhs = Vec::Zero(n);
    const double sg = g.boundary_weight();
    const double so = R * g.dtheta();
    for (int j = 0; j < n_theta; ++j) {
        const auto kg = static_cast<Eigen::Index>(g.index(0, j));
        const auto ko = static_cast<Eigen::Index>(g.index(g.n_r(), j));
        // natural boundary term: int H d_nu H with nu the outward normal of the annulus (-r on Gamma)
        rhs[kg] = -sg * (nd - dr_sing(g.z(kg), true));
        rhs[ko] = so * (-dr_sing(g.z(ko), false));
    }
    ac.flux_imbalance = rhs.sum();
    // project onto the compatible data (weighted by boundary length)
    const double corr = ac.flux_imbalance / (n_theta * (sg + so));
    for (int j = 0; j < n_theta; ++j) {
        rhs[static_cast<Eigen::Index>(g.index(0, j))] -= corr * sg;
        rhs[static_cast<Eigen::Index>(g.index(g.n_r(), j))] -= corr * so;
    }
    const SpMat K = stiffness_matrix(g);
    std::vector<bool> fixed(g.size(), false);
    fixed[g.index(g.n_r(), 0)] = true; // removes the constant null space
    ReducedSolver solver(K, fixed, Vec());
    ac.H = solver.solve(rhs, Vec::Zero(n));

    // normalization: int_Gamma singular ds is analytic (2 pi ln|p| per interior pole, 0 per boundary pole)
    double sing_int = 0.0;
    for (const auto& p : interior_poles) sing_int -= kTwoPi * std::log(std::abs(p));
    double hint = 0.0;
    for (int j = 0; j < n_theta; ++j) hint += ac.H[static_cast<Eigen::Index>(g.index(0, j))] * sg;
    ac.shift = -(sing_int + hint) / kTwoPi;
    ac.gamma_mean = sing_int + hint + ac.shift * kTwoPi;

    // one-sided flux check away from boundary poles
    for (int j = 0; j < n_theta; ++j) {
        const auto k0 = g.index(0, j), k1 = g.index(1, j);
        bool near = false;
        for (double b : boundary_poles)
            if (std::abs(wrap_angle(g.theta(j) - b)) < 0.3) near = true;
        if (!near) {
            // analytic singular derivative plus second-order one-sided difference of H
            const auto k2 = g.index(2, j);
            const double h = g.radius(1) - g.radius(0);
            const double dH = (-3.0 * ac.H[k0] + 4.0 * ac.H[k1] - ac.H[k2]) / (2.0 * h);
            ac.gamma_flux_error = std::max(ac.gamma_flux_error, std::abs(dr_sing(g.z(k0), true) + dH - nd));
        }
        const auto ko = g.index(g.n_r(), j), ko1 = g.index(g.n_r() - 1, j), ko2 = g.index(g.n_r() - 2, j);
        const double h = g.radius(g.n_r()) - g.radius(g.n_r() - 1);
        const double dH = (3.0 * ac.H[ko] - 4.0 * ac.H[ko1] + ac.H[ko2]) / (2.0 * h);
        ac.outer_flux_error = std::max(ac.outer_flux_error, std::abs(dr_sing(g.z(ko), false) + dH));
    }

    // capacity potential: 0 on Gamma, 1 on the outer circle
    Vec pv = Vec::Zero(n);
    for (int j = 0; j < n_theta; ++j) pv[static_cast<Eigen::Index>(g.index(g.n_r(), j))] = 1.0;
    ac.psi = harmonic_extension(g, boundary_mask(g, true, true), pv);
    ac.capacity = ac.psi.dot(K * ac.psi);

    for (const auto& p : interior_poles) ac.beta += wrap_angle(kPi - std::arg(p));
    for (double b : boundary_poles) ac.beta += wrap_angle(kPi - b);
    return ac;
}

/// Single-pole conjugates: Phi^t (interior pole at (-t,0)) or Phi^1 (boundary pole at (-1,0)) when t == 1.
inline AnnulusConjugate annulus_conjugate_single(double R, double t, int n_r, int n_theta)
{
    if (!(t >= 1.0 && t < R)) throw std::invalid_argument("annulus_conjugate_single: need 1 <= t < R");
    if (t == 1.0) return annulus_conjugates(R, {}, {kPi}, n_r, n_theta);
    return annulus_conjugates(R, {cplx(-t, 0.0)}, {}, n_r, n_theta);
}

/**
 * Problem II renormalized quantity on the grid: int_{Omega_rho} |grad Phi_II|^2
 * + (2 pi / ln R) beta^2, with cells whose centre lies within rho of a pole
 * excluded. Numeric only; first-order accurate in h.
 */
inline double problem2_energy(const AnnulusConjugate& ac, double rho, double R)
{
    const PolarGrid& g = *ac.grid;
    double s = 0.0;
    for (int i = 0; i < g.n_r(); ++i)
        for (int j = 0; j < g.n_theta(); ++j) {
            const double r0 = g.radius(i), r1 = g.radius(i + 1);
            const double rc = 0.5 * (r0 + r1), tc = g.theta(j) + 0.5 * g.dtheta();
            const cplx zc = std::polar(rc, tc);
            bool excl = false;
            for (const auto& p : ac.interior_poles)
                if (std::abs(zc - p) < rho) excl = true;
            for (double b : ac.boundary_poles)
                if (std::abs(zc - std::polar(1.0, b)) < rho) excl = true;
            if (excl) continue;
            auto H = [&](int a, int b) { return ac.H[static_cast<Eigen::Index>(g.index(a, b))]; };
            const double dHr = 0.5 * ((H(i + 1, j) - H(i, j)) + (H(i + 1, j + 1) - H(i, j + 1))) / (r1 - r0);
            const double dHt = 0.5 * ((H(i, j + 1) - H(i, j)) + (H(i + 1, j + 1) - H(i + 1, j))) / (rc * g.dtheta());
            const cplx rh = std::polar(1.0, tc), th = rh * cplx(0.0, 1.0);
            const cplx gs = ac.singular_gradient(zc);
            const double gr = gs.real() * rh.real() + gs.imag() * rh.imag() + dHr;
            const double gt = gs.real() * th.real() + gs.imag() * th.imag() + dHt;
            s += (gr * gr + gt * gt) * 0.5 * (r1 * r1 - r0 * r0) * g.dtheta();
        }
    return s + kTwoPi / std::log(R) * ac.beta * ac.beta;
}

// ---------------------------------------------------------------------------
// Expansion consistency: excised Dirichlet energy of the canonical phase

/// Gradient of the exterior canonical phase for antivortices (degree -1) at p_i.
inline cplx exterior_phase_gradient(const std::vector<cplx>& p, cplx z)
{
    auto garg = [](cplx w) { return cplx(-w.imag(), w.real()) / std::norm(w); }; // grad arg(w) as x + i y
    cplx g(0.0, 0.0);
    for (const auto& q : p) g -= garg(z - q) + garg(z - q / std::norm(q)) - 2.0 * garg(z);
    return g;
}

/**
 * 1/2 int_{Omega_rho} |grad phi|^2 over |x| > 1 minus the balls B_rho(p_i),
 * by tensor Gauss-Legendre panels: local polar coordinates (log radius) around
 * each pole out to r0, and global polar coordinates with the r0-disks cut out
 * elsewhere, truncated at |x| = r_max.
 */
inline double excised_dirichlet_energy(const std::vector<cplx>& p, double rho, double r_max = 1000.0)
{
    using boost::math::quadrature::gauss;
    double r0 = 0.25;
    for (std::size_t i = 0; i < p.size(); ++i) {
        r0 = std::min(r0, 0.5 * (std::abs(p[i]) - 1.0));
        for (std::size_t j = 0; j < i; ++j) r0 = std::min(r0, 0.45 * std::abs(p[i] - p[j]));
    }
    if (!(rho < r0)) throw std::invalid_argument("excised_dirichlet_energy: rho too large for the configuration");
    auto dens = [&](cplx z) { return std::norm(exterior_phase_gradient(p, z)); };

    // local annuli rho < |x - p_i| < r0 in (ln sigma, angle); the angle rule is periodic trapezoid
    double local = 0.0;
    const int nth = 512;
    for (const auto& q : p) {
        auto ring = [&](double ls) {
            const double sg = std::exp(ls);
            double s = 0.0;
            for (int k = 0; k < nth; ++k) s += dens(q + std::polar(sg, kTwoPi * k / nth));
            return s * (kTwoPi / nth) * sg * sg;
        };
        const double a = std::log(rho), b = std::log(r0);
        const int panels = 8;
        for (int k = 0; k < panels; ++k)
            local += gauss<double, 20>::integrate(ring, a + (b - a) * k / panels, a + (b - a) * (k + 1) / panels);
    }

    // outer region: r in [1, r_max], angles outside the r0-disks
    auto theta_integral = [&](double r) {
        std::vector<std::pair<double, double>> cut;
        for (const auto& q : p) {
            const double d = std::abs(q);
            if (std::abs(r - d) >= r0) continue;
            const double c = std::clamp((r * r + d * d - r0 * r0) / (2.0 * r * d), -1.0, 1.0);
            const double h = std::acos(c);
            cut.emplace_back(std::arg(q) - h, std::arg(q) + h);
        }
        // integrate over [t0, t0 + 2 pi) minus the cut intervals; start at a point outside all cuts
        double t0 = -kPi;
        if (!cut.empty()) t0 = cut[0].second;
        std::vector<std::pair<double, double>> iv;
        for (auto [lo, hi] : cut) {
            // the disks are disjoint, so the cuts are too; shift each to start in [t0, t0 + 2 pi)
            const double width = hi - lo;
            double a = t0 + std::fmod(std::fmod(lo - t0, kTwoPi) + kTwoPi, kTwoPi);
            if (a + width > t0 + kTwoPi + 1e-12) a -= kTwoPi;
            iv.emplace_back(std::max(a, t0), a + width);
        }
        std::sort(iv.begin(), iv.end());
        std::vector<double> bp{t0};
        for (auto [lo, hi] : iv) {
            bp.push_back(lo);
            bp.push_back(hi);
        }
        bp.push_back(t0 + kTwoPi);
        // segments alternate kept / cut: kept are [bp0,bp1], [bp2,bp3], ...
        auto f = [&](double th) { return dens(std::polar(r, th)); };
        double s = 0.0;
        for (std::size_t k = 0; k + 1 < bp.size(); k += 2) {
            const double a = bp[k], b = bp[k + 1];
            if (b <= a) continue;
            const int pan = std::max(4, static_cast<int>(std::ceil((b - a) / 0.1)));
            for (int m = 0; m < pan; ++m) s += gauss<double, 20>::integrate(f, a + (b - a) * m / pan, a + (b - a) * (m + 1) / pan);
        }
        return s * r;
    };
    // radial breakpoints: tangency radii with grading toward them, then geometric growth
    std::vector<double> rb{1.0, r_max};
    for (const auto& q : p) {
        const double d = std::abs(q);
        for (double c : {d - r0, d, d + r0}) {
            rb.push_back(c);
            for (int k = 1; k <= 14; ++k) {
                const double h = r0 * std::pow(0.45, k);
                rb.push_back(c - h);
                rb.push_back(c + h);
            }
        }
    }
    for (double r = 1.25; r < r_max; r *= 1.25) rb.push_back(r);
    std::sort(rb.begin(), rb.end());
    std::vector<double> rr;
    for (double r : rb)
        if (r >= 1.0 && r <= r_max && (rr.empty() || r - rr.back() > 1e-12)) rr.push_back(r);
    double outer = 0.0;
    for (std::size_t k = 0; k + 1 < rr.size(); ++k) outer += gauss<double, 10>::integrate(theta_integral, rr[k], rr[k + 1]);
    return 0.5 * (outer + local);
}

struct ExpansionConsistency {
    std::vector<double> rho;
    std::vector<double> remainder; ///< 1/2 int - pi D ln(1/rho)
    double extrapolated = 0.0;     ///< quadratic fit in rho evaluated at rho = 0
    double w_formula = 0.0;
    double rel_error = 0.0;
};

inline ExpansionConsistency expansion_consistency(const std::vector<cplx>& p, const std::vector<double>& rhos)
{
    ExpansionConsistency ec;
    ec.rho = rhos;
    const double D = static_cast<double>(p.size());
    for (double r : rhos) ec.remainder.push_back(excised_dirichlet_energy(p, r) - kPi * D * std::log(1.0 / r));
    // least-squares polynomial in rho of degree min(2, n - 1), evaluated at 0
    const int deg = std::min<int>(2, static_cast<int>(rhos.size()) - 1);
    Eigen::MatrixXd A(rhos.size(), deg + 1);
    Eigen::VectorXd y(rhos.size());
    for (std::size_t i = 0; i < rhos.size(); ++i) {
        for (int k = 0; k <= deg; ++k) A(i, k) = std::pow(rhos[i], k);
        y[i] = ec.remainder[i];
    }
    ec.extrapolated = A.colPivHouseholderQr().solve(y)[0];
    ec.w_formula = w_interior(p).value;
    ec.rel_error = std::abs(ec.extrapolated - ec.w_formula) / std::abs(ec.w_formula);
    return ec;
}

// ---------------------------------------------------------------------------
// Fit of the expansion constants

struct ExpansionRun {
    double eps = 0.0;
    double lambda = 0.0;
    int I = 0; ///< interior defects
    int J = 0; ///< boundary defects
    double W = 0.0;
    double E = 0.0;
};

struct ExpansionFit {
    double Q_omega = std::numeric_limits<double>::quiet_NaN();
    double Q_gamma = std::numeric_limits<double>::quiet_NaN();
    bool q_omega_estimable = false;
    bool q_gamma_estimable = false;
    bool rank_deficient = false;
    std::vector<double> residuals;
    std::string note;
};

/**
 * Least squares for E - I pi |ln eps| - J 2 pi ln lambda - W = I Q_Omega + J Q_Gamma.
 * Constants whose column vanishes are flagged as not estimable; collinear columns
 * are flagged as rank deficient and neither constant is reported.
 */
inline ExpansionFit expansion_fit(const std::vector<ExpansionRun>& runs)
{
    if (runs.size() < 3) throw std::invalid_argument("expansion_fit: need at least 3 runs");
    ExpansionFit fit;
    const auto n = static_cast<Eigen::Index>(runs.size());
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd y(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& r = runs[k];
        A(k, 0) = r.I;
        A(k, 1) = r.J;
        y[k] = r.E - r.I * kPi * std::abs(std::log(r.eps)) - r.J * kTwoPi * std::log(r.lambda) - r.W;
    }
    const bool has_i = A.col(0).cwiseAbs().maxCoeff() > 0.0;
    const bool has_j = A.col(1).cwiseAbs().maxCoeff() > 0.0;
    std::vector<int> cols;
    if (has_i) cols.push_back(0);
    if (has_j) cols.push_back(1);
    if (cols.empty()) {
        fit.rank_deficient = true;
        fit.note = "no defects in any run";
        return fit;
    }
    Eigen::MatrixXd B(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) B.col(static_cast<Eigen::Index>(c)) = A.col(cols[c]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
    if (qr.rank() < static_cast<Eigen::Index>(cols.size())) {
        fit.rank_deficient = true;
        fit.note = "defect counts are proportional across runs; the two constants cannot be separated";
        return fit;
    }
    const Eigen::VectorXd q = qr.solve(y);
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c] == 0) {
            fit.Q_omega = q[static_cast<Eigen::Index>(c)];
            fit.q_omega_estimable = true;
        } else {
            fit.Q_gamma = q[static_cast<Eigen::Index>(c)];
            fit.q_gamma_estimable = true;
        }
    }
    if (!has_i) fit.note = "no interior defects: Q_Omega not estimable";
    if (!has_j) fit.note = "no boundary defects: Q_Gamma not estimable";
    const Eigen::VectorXd res = y - B * q;
    fit.residuals.assign(res.data(), res.data() + res.size());
    return fit;
}

} // namespace glanchor
