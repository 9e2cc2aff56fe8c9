#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "glanchor/energy.hpp"
#include "glanchor/field.hpp"

namespace glanchor {

enum class Method { Lbfgs, GradientFlow };
enum class Initializer { UpperBound, Canonical, Random };

inline std::string to_string(Initializer i)
{
    switch (i) {
    case Initializer::UpperBound: return "upper_bound";
    case Initializer::Canonical: return "canonical";
    case Initializer::Random: return "random";
    }
    return "?";
}

inline Initializer initializer_from_string(const std::string& s)
{
    if (s == "upper_bound") return Initializer::UpperBound;
    if (s == "canonical") return Initializer::Canonical;
    if (s == "random") return Initializer::Random;
    throw std::invalid_argument("unknown initializer '" + s + "'");
}

struct SolveConfig {
    int max_iters = 4000;
    Method method = Method::Lbfgs;
    bool backtracking = true;  ///< false: fixed step (gradient flow only)
    double fixed_step = 0.0;   ///< gradient-flow step; 0 picks 0.2 min(h^2, eps^2)
    double tol_r = 0.0;        ///< residual sup-norm; 0 means 1e-6 / eps
    double tol_e = 1e-10;      ///< relative energy-decrease stall tolerance
    int stall_window = 60;     ///< consecutive stalled iterations before stopping
    Initializer init = Initializer::UpperBound;
    std::uint64_t seed = 1;
    std::vector<double> boundary_points; ///< upper-bound initializer angles (empty: equally spaced)
    DefectSet canonical_defects;         ///< canonical initializer defects
    int lbfgs_memory = 8;
    int precond_refresh = 8;   ///< iterations between preconditioner refactorizations
    bool record_history = true;
    double max_step = 0.1;     ///< cap on the largest nodal change per step (0: none); keeps the path local

    double residual_tolerance(double eps) const { return tol_r > 0.0 ? tol_r : 1e-6 / eps; }
    void validate() const
    {
        if (max_iters < 1) throw std::invalid_argument("SolveConfig: max_iters must be >= 1");
        if (tol_r < 0.0 || !(tol_e > 0.0)) throw std::invalid_argument("SolveConfig: tolerances must be positive");
    }
};

struct HistoryRow {
    int iter = 0;
    EnergyBreakdown e;
    double residual_norm = 0.0;
};

struct SolveReport {
    OrderParameter u;
    std::vector<HistoryRow> history;
    EnergyBreakdown energy;
    int iters = 0;
    bool converged = false;
    std::string stop_reason;
    double residual = 0.0;
    double max_modulus = 0.0;
    double c0_emp = 0.0;  ///< eps * max |grad_h u|
    double phi_star = std::numeric_limits<double>::quiet_NaN();
    std::string initializer;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// eps * max over edges of |du| / edge length.
inline double gradient_bound(const OrderParameter& u, double eps)
{
    const PolarGrid& g = *u.grid;
    double m = 0.0;
    for (int i = 0; i < g.n_r(); ++i)
        for (int j = 0; j < g.n_theta(); ++j) {
            const auto k = g.index(i, j), l = g.index(i + 1, j);
            m = std::max(m, std::abs(u[k] - u[l]) / (g.radius(i + 1) - g.radius(i)));
        }
    for (int i = 0; i <= g.n_r(); ++i) {
        if (g.origin() && i == 0) continue;
        const double h = 2.0 * g.radius(i) * std::sin(0.5 * g.dtheta());
        for (int j = 0; j < g.n_theta(); ++j) m = std::max(m, std::abs(u[g.index(i, j)] - u[g.index(i, j + 1)]) / h);
    }
    return eps * m;
}

/// Circular mean of u on the ring just inside the pinned ring (problem III only).
inline double far_field_phase(const OrderParameter& u)
{
    const PolarGrid& g = *u.grid;
    if (g.problem() != Problem::III) return std::numeric_limits<double>::quiet_NaN();
    cplx s(0.0, 0.0);
    for (int j = 0; j < g.n_theta(); ++j) s += u[g.index(g.n_r() - 1, j)];
    return std::arg(s);
}

/// Equally spaced boundary points starting at angle pi / |D| + pi / 2 (the rotation class is free).
inline std::vector<double> default_boundary_points(int D)
{
    std::vector<double> a;
    const int n = std::abs(D);
    for (int i = 0; i < n; ++i) a.push_back(0.5 * kPi + kTwoPi * i / n);
    return a;
}

inline OrderParameter make_initial(const GridPtr& grid, const AnchoringParams& p, const SolveConfig& cfg)
{
    const GeometrySpec& spec = grid->spec();
    switch (cfg.init) {
    case Initializer::UpperBound: {
        auto pts = cfg.boundary_points.empty() ? default_boundary_points(spec.anchor_degree) : cfg.boundary_points;
        return upper_bound_initializer(spec, grid, p, pts);
    }
    case Initializer::Canonical: {
        CanonicalOptions o;
        o.interior_core = p.eps;
        o.boundary_core = p.eps;
        return canonical_map(cfg.canonical_defects, spec, grid, p, o);
    }
    case Initializer::Random: {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        OrderParameter u(grid, p);
        for (auto& v : u.values) v = cplx(U(rng), U(rng)) * 0.5;
        return u;
    }
    }
    throw std::logic_error("make_initial: bad initializer");
}

namespace detail {

/// Free-node packing: real vector [Re u_f0, Im u_f0, Re u_f1, ...].
struct Packing {
    std::vector<std::size_t> free;
    explicit Packing(const PolarGrid& g)
    {
        for (std::size_t k = 0; k < g.size(); ++k)
            if (!g.is_dirichlet(k)) free.push_back(k);
    }
    Eigen::Index dim() const { return static_cast<Eigen::Index>(2 * free.size()); }
    Vec pack(const std::vector<cplx>& v) const
    {
        Vec x(dim());
        for (std::size_t a = 0; a < free.size(); ++a) {
            x[2 * a] = v[free[a]].real();
            x[2 * a + 1] = v[free[a]].imag();
        }
        return x;
    }
    void unpack(const Vec& x, std::vector<cplx>& v) const
    {
        for (std::size_t a = 0; a < free.size(); ++a) v[free[a]] = cplx(x[2 * a], x[2 * a + 1]);
    }
};

/**
 * SPD approximation of the energy Hessian: stiffness on each component plus the
 * positive part of the pointwise potential Hessian and the anchoring mass.
 */
class Preconditioner {
public:
    Preconditioner(const PolarGrid& g, const Packing& pk) : g_(g), pk_(pk)
    {
        const int n = static_cast<int>(g.size());
        idx_.assign(n, -1);
        for (std::size_t a = 0; a < pk.free.size(); ++a) idx_[pk.free[a]] = static_cast<int>(a);
        for_each_edge(g, [&](std::size_t k, std::size_t l, double c) {
            const int a = idx_[k], b = idx_[l];
            for (int comp = 0; comp < 2; ++comp) {
                if (a >= 0) base_.emplace_back(2 * a + comp, 2 * a + comp, c);
                if (b >= 0) base_.emplace_back(2 * b + comp, 2 * b + comp, c);
                if (a >= 0 && b >= 0) {
                    base_.emplace_back(2 * a + comp, 2 * b + comp, -c);
                    base_.emplace_back(2 * b + comp, 2 * a + comp, -c);
                }
            }
        });
    }

    void update(const OrderParameter& u, const AnchoringParams& p)
    {
        auto t = base_;
        const double ie2 = 1.0 / (p.eps * p.eps);
        const double ls = p.lambda() * g_.boundary_weight();
        for (std::size_t a = 0; a < pk_.free.size(); ++a) {
            const std::size_t k = pk_.free[a];
            const cplx v = u[k];
            const double w = g_.area_weight(k) * ie2;
            const double m = std::max(std::norm(v) - 1.0, 0.0);
            double h00 = w * (m + 2.0 * v.real() * v.real());
            double h11 = w * (m + 2.0 * v.imag() * v.imag());
            const double h01 = w * 2.0 * v.real() * v.imag();
            // small mass keeps the matrix definite for the disk (no pinned ring)
            const double floor = 1e-10 * g_.area_weight(k);
            h00 += floor + (g_.is_gamma(k) ? ls : 0.0);
            h11 += floor + (g_.is_gamma(k) ? ls : 0.0);
            const int i0 = static_cast<int>(2 * a), i1 = i0 + 1;
            t.emplace_back(i0, i0, h00);
            t.emplace_back(i1, i1, h11);
            t.emplace_back(i0, i1, h01);
            t.emplace_back(i1, i0, h01);
        }
        A_.resize(pk_.dim(), pk_.dim());
        A_.setFromTriplets(t.begin(), t.end());
        if (!analyzed_) {
            ldlt_.analyzePattern(A_);
            analyzed_ = true;
        }
        ldlt_.factorize(A_);
        if (ldlt_.info() != Eigen::Success) throw SolverError("preconditioner factorization failed");
    }

    Vec apply(const Vec& r) const { return ldlt_.solve(r); }

private:
    const PolarGrid& g_;
    const Packing& pk_;
    std::vector<int> idx_;
    std::vector<Eigen::Triplet<double>> base_;
    SpMat A_;
    Eigen::SimplicialLDLT<SpMat> ldlt_;
    bool analyzed_ = false;
};

inline void check_finite(const OrderParameter& u, const EnergyBreakdown& e)
{
    if (!std::isfinite(e.total) || !u.all_finite()) throw SolverError("NaN or Inf detected in the field or energy");
}

} // namespace detail

/**
 * Minimizes the discrete energy from u0. Default method: limited-memory BFGS
 * preconditioned by the positive part of the Hessian, with Armijo backtracking.
 * Accepted steps never increase the energy by more than 1e-13 |E| (the
 * roundoff band, entered only once the predicted decrease is below it). The
 * pinned ring is reset to 1.
 */
inline SolveReport solve_from(OrderParameter u0, const AnchoringParams& p, const SolveConfig& cfg)
{
    p.validate();
    cfg.validate();
    const PolarGrid& g = *u0.grid;
    u0.params = p;
    for (std::size_t k = 0; k < g.size(); ++k)
        if (g.is_dirichlet(k)) u0[k] = cplx(1.0, 0.0);

    const double tol_r = cfg.residual_tolerance(p.eps);
    SolveReport rep;
    rep.u = std::move(u0);
    OrderParameter& u = rep.u;

    detail::Packing pk(g);
    auto grad_vec = [&](const OrderParameter& v, Residual* res) {
        auto G = energy_gradient(v, p);
        if (res) *res = residual_from_gradient(g, G);
        return pk.pack(G);
    };

    EnergyBreakdown e = energy(u, p);
    detail::check_finite(u, e);
    Residual res;
    Vec x = pk.pack(u.values);
    Vec gr = grad_vec(u, &res);
    auto log_row = [&](int it) {
        if (cfg.record_history) rep.history.push_back({it, e, res.sup()});
    };
    log_row(0);

    std::optional<detail::Preconditioner> pre;
    if (cfg.method == Method::Lbfgs) pre.emplace(g, pk);
    std::deque<Vec> S, Y;
    std::deque<double> RHO;

    double gf_step = cfg.fixed_step > 0.0 ? cfg.fixed_step : 0.2 * std::min(g.min_spacing() * g.min_spacing(), p.eps * p.eps);
    Vec inv_w(pk.dim());
    for (std::size_t a = 0; a < pk.free.size(); ++a) {
        const double w = g.area_weight(pk.free[a]);
        inv_w[2 * a] = inv_w[2 * a + 1] = 1.0 / w;
    }

    int stalled = 0;
    int it = 0;
    double best_res = res.sup();
    rep.stop_reason = "max_iters";
    OrderParameter trial = u;
    for (; it < cfg.max_iters; ++it) {
        if (res.sup() <= tol_r) {
            rep.converged = true;
            rep.stop_reason = "residual";
            break;
        }
        Vec dir;
        if (cfg.method == Method::Lbfgs) {
            if (it % cfg.precond_refresh == 0) pre->update(u, p);
            // two-loop recursion with the preconditioner as initial inverse Hessian
            Vec q = gr;
            std::vector<double> al(S.size());
            for (int m = static_cast<int>(S.size()) - 1; m >= 0; --m) {
                al[m] = RHO[m] * S[m].dot(q);
                q -= al[m] * Y[m];
            }
            Vec r = pre->apply(q);
            for (std::size_t m = 0; m < S.size(); ++m) {
                const double b = RHO[m] * Y[m].dot(r);
                r += (al[m] - b) * S[m];
            }
            dir = -r;
            if (!(dir.dot(gr) < 0.0)) {
                S.clear();
                Y.clear();
                RHO.clear();
                dir = -pre->apply(gr);
            }
        } else {
            dir = -gf_step * inv_w.cwiseProduct(gr);
        }

        if (cfg.max_step > 0.0) {
            double big = 0.0;
            for (Eigen::Index a = 0; a < dir.size(); a += 2) big = std::max(big, std::hypot(dir[a], dir[a + 1]));
            if (big > cfg.max_step) dir *= cfg.max_step / big;
        }
        const double slope = dir.dot(gr);
        double step = 1.0;
        bool accepted = false;
        EnergyBreakdown et;
        Vec xt;
        Vec g_round;
        Residual r_round;
        const double e_round = 1e-13 * std::abs(e.total);
        const int max_bt = (cfg.method == Method::GradientFlow && !cfg.backtracking) ? 1 : 50;
        if (cfg.method == Method::Lbfgs && -slope < e_round) {
            // predicted decrease below roundoff: energy comparisons carry no information,
            // so accept a step that keeps E within roundoff and reduces the gradient norm
            for (int bt = 0; bt < 10 && !accepted; ++bt, step *= 0.5) {
                xt = x + step * dir;
                pk.unpack(xt, trial.values);
                et = energy(trial, p);
                if (!(std::isfinite(et.total) && et.total <= e.total + e_round)) continue;
                g_round = grad_vec(trial, &r_round);
                if (g_round.norm() < gr.norm()) accepted = true;
            }
            if (accepted) step *= 2.0;
        } else {
            for (int bt = 0; bt < max_bt; ++bt) {
                xt = x + step * dir;
                pk.unpack(xt, trial.values);
                et = energy(trial, p);
                if (std::isfinite(et.total) && et.total <= e.total + 1e-4 * step * slope) {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if (!accepted) {
            if (cfg.method == Method::Lbfgs && !S.empty()) {
                S.clear();
                Y.clear();
                RHO.clear();
                continue;
            }
            if (cfg.method == Method::GradientFlow && !cfg.backtracking)
                throw SolverError("fixed step increased the energy; reduce the step");
            rep.stop_reason = "line_search";
            break;
        }
        detail::check_finite(trial, et);
        const double de = e.total - et.total;
        Residual rt = r_round;
        Vec gt = g_round.size() ? g_round : grad_vec(trial, &rt);
        if (cfg.method == Method::Lbfgs) {
            Vec s = xt - x, y = gt - gr;
            const double sy = s.dot(y);
            if (sy > 1e-12 * s.norm() * y.norm()) {
                S.push_back(s);
                Y.push_back(y);
                RHO.push_back(1.0 / sy);
                if (static_cast<int>(S.size()) > cfg.lbfgs_memory) {
                    S.pop_front();
                    Y.pop_front();
                    RHO.pop_front();
                }
            }
        } else if (cfg.backtracking && step == 1.0) {
            gf_step *= 1.2;
        } else if (cfg.backtracking) {
            gf_step *= step;
        }
        x = std::move(xt);
        gr = std::move(gt);
        std::swap(u.values, trial.values);
        e = et;
        res = rt;
        log_row(it + 1);

        // stalled: negligible energy decrease and no new best residual
        const bool progress = res.sup() < 0.99 * best_res;
        best_res = std::min(best_res, res.sup());
        stalled = (de <= cfg.tol_e * std::abs(e.total) && !progress) ? stalled + 1 : 0;
        if (stalled >= cfg.stall_window) {
            ++it;
            rep.converged = res.sup() <= tol_r;
            rep.stop_reason = rep.converged ? "residual" : "stalled";
            break;
        }
    }
    if (it >= cfg.max_iters && res.sup() <= tol_r) {
        rep.converged = true;
        rep.stop_reason = "residual";
    }
    rep.iters = it;
    rep.energy = e;
    rep.residual = res.sup();
    rep.max_modulus = u.max_modulus();
    rep.c0_emp = gradient_bound(u, p.eps);
    rep.phi_star = far_field_phase(u);
    return rep;
}

inline SolveReport solve(const GeometrySpec& spec, const GridPtr& grid, const AnchoringParams& p, const SolveConfig& cfg)
{
    if (spec.problem != grid->problem() || spec.anchor_degree != grid->spec().anchor_degree)
        throw std::invalid_argument("solve: spec does not match the grid");
    auto rep = solve_from(make_initial(grid, p, cfg), p, cfg);
    rep.initializer = to_string(cfg.init);
    return rep;
}

struct AprioriCheck {
    bool pass = true;
    double max_modulus = 0.0;
    double c0_emp = 0.0;
    std::size_t offending_node = 0;
    std::string message;
};

/// Maximum principle |u| <= 1 + 1e-8 and the empirical gradient constant.
inline AprioriCheck check_apriori(const SolveReport& r)
{
    AprioriCheck c;
    c.c0_emp = r.c0_emp;
    for (std::size_t k = 0; k < r.u.size(); ++k) {
        const double m = std::abs(r.u[k]);
        if (m > c.max_modulus) {
            c.max_modulus = m;
            c.offending_node = k;
        }
    }
    if (c.max_modulus > 1.0 + 1e-8) {
        c.pass = false;
        c.message = "max|u| exceeds 1 + 1e-8";
    }
    return c;
}

/// Ratio of the largest to the smallest empirical gradient constant across a sweep.
inline double c0_ratio(const std::vector<double>& c0)
{
    if (c0.empty()) return 1.0;
    const auto [lo, hi] = std::minmax_element(c0.begin(), c0.end());
    return *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
}

struct Branch {
    std::string label;
    double energy = 0.0;
    bool converged = false;
};

struct MultiStartReport {
    SolveReport best;
    std::vector<Branch> branches;
};

/**
 * Runs every candidate initial field and keeps the lowest final energy among
 * converged runs (all runs if none converged). Energies within tol_e |E| of
 * each other count as ties, resolved in candidate order.
 */
inline MultiStartReport solve_multistart(const std::vector<std::pair<std::string, OrderParameter>>& starts,
                                         const AnchoringParams& p, const SolveConfig& cfg)
{
    if (starts.empty()) throw std::invalid_argument("solve_multistart: no starts");
    MultiStartReport m;
    std::vector<SolveReport> runs;
    for (const auto& [label, u0] : starts) {
        auto r = solve_from(u0, p, cfg);
        r.initializer = label;
        m.branches.push_back({label, r.energy.total, r.converged});
        runs.push_back(std::move(r));
    }
    bool any = false;
    for (const auto& r : runs) any = any || r.converged;
    int best = -1;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (any && !runs[i].converged) continue;
        if (best < 0) {
            best = static_cast<int>(i);
            continue;
        }
        const double eb = runs[best].energy.total, ei = runs[i].energy.total;
        if (ei < eb - cfg.tol_e * std::abs(eb)) best = static_cast<int>(i);
    }
    m.best = std::move(runs[best]);
    return m;
}

/// Radii from r_in to r_out log-uniform with `per_octave` cells per doubling.
inline std::vector<double> log_radii(double r_in, double r_out, int per_octave)
{
    const double octaves = std::log2(r_out / r_in);
    const int n = static_cast<int>(std::lround(octaves * per_octave));
    if (std::abs(n - octaves * per_octave) > 1e-9) throw std::invalid_argument("log_radii: r_out / r_in must be a power of two");
    std::vector<double> r(n + 1);
    for (int i = 0; i <= n; ++i) r[i] = r_in * std::exp2(static_cast<double>(i) / per_octave);
    r[n] = r_out;
    return r;
}

struct TruncationResult {
    std::vector<double> radii;
    std::vector<double> energies;
    std::vector<SolveReport> reports;
    bool monotone = true;  ///< m_{0,R} non-increasing up to 2 tol_e
    bool cauchy = true;    ///< successive differences shrink
};

/**
 * Minima of the exterior problem truncated at each radius. Radial grids are
 * nested (log-uniform, `per_octave` cells per doubling), and each larger
 * truncation starts from the previous minimizer extended by 1, which is an
 * admissible competitor with the same energy.
 */
inline TruncationResult truncation_sweep(GeometrySpec spec, const AnchoringParams& p, const std::vector<double>& radii,
                                         const SolveConfig& cfg, int per_octave, int n_theta)
{
    if (spec.problem != Problem::III) throw std::invalid_argument("truncation_sweep: exterior problem only");
    for (std::size_t i = 1; i < radii.size(); ++i)
        if (!(radii[i] > radii[i - 1])) throw std::invalid_argument("truncation_sweep: radii must increase");
    TruncationResult out;
    out.radii = radii;
    std::optional<OrderParameter> prev;
    for (double R : radii) {
        spec.r_outer = R;
        auto grid = build_grid_from_radii(spec, log_radii(spec.r_inner, R, per_octave), n_theta);
        OrderParameter u0(grid, p);
        if (prev) {
            const PolarGrid& pg = *prev->grid;
            for (int i = 0; i <= grid->n_r(); ++i)
                for (int j = 0; j < n_theta; ++j)
                    u0[grid->index(i, j)] = i <= pg.n_r() ? (*prev)[pg.index(i, j)] : cplx(1.0, 0.0);
        } else {
            u0 = make_initial(grid, p, cfg);
        }
        auto r = solve_from(u0, p, cfg);
        out.energies.push_back(r.energy.total);
        prev = r.u;
        out.reports.push_back(std::move(r));
    }
    for (std::size_t i = 1; i < out.energies.size(); ++i) {
        const double tol = 2.0 * cfg.tol_e * std::max(1.0, std::abs(out.energies[i - 1]));
        if (out.energies[i] > out.energies[i - 1] + tol) out.monotone = false;
        if (i >= 2 && std::abs(out.energies[i] - out.energies[i - 1]) >
                          std::abs(out.energies[i - 1] - out.energies[i - 2]) + tol)
            out.cauchy = false;
    }
    return out;
}

} // namespace glanchor
