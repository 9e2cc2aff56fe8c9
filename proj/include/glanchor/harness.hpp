#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "glanchor/energy.hpp"
#include "glanchor/field.hpp"
#include "glanchor/renorm.hpp"
#include "glanchor/solver.hpp"
#include "glanchor/vortex.hpp"

namespace glanchor {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// Fixed-format number for CSV/JSON text (identical across runs and platforms with IEEE doubles).
inline std::string fmt(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
    GeometrySpec geometry;
    int n_r = 96;
    int n_theta = 192;
    double radial_stretch = 0.0; ///< 0: default for the problem
    double eps_ref = 0.0;        ///< > 0: grid counts scale with eps_ref / eps
    std::vector<double> eps{0.05};
    std::vector<double> alpha{0.8};
    std::vector<double> K{1.0};
    std::vector<double> r_outer; ///< empty: geometry.r_outer only
    SolveConfig solver;
    std::string policy = "multistart"; ///< multistart | upper_bound | canonical | random
    std::string out_dir = "runs";
    bool write_fields = true;

    void validate() const
    {
        if (eps.empty() || alpha.empty() || K.empty()) throw std::invalid_argument("config: parameter lists must be nonempty");
        auto e = eps;
        std::sort(e.begin(), e.end());
        if (std::adjacent_find(e.begin(), e.end()) != e.end()) throw std::invalid_argument("config: eps values must be distinct");
        for (double v : eps) AnchoringParams{v, alpha[0], K[0]}.validate();
        for (double a : alpha) AnchoringParams{eps[0], a, K[0]}.validate();
        for (double k : K) AnchoringParams{eps[0], alpha[0], k}.validate();
        if (policy != "multistart" && policy != "upper_bound" && policy != "canonical" && policy != "random")
            throw std::invalid_argument("config: unknown policy '" + policy + "'");
        solver.validate();
    }
};

namespace detail {

inline std::vector<double> number_list(const json& j, const char* key, std::vector<double> def)
{
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (v.is_number()) return {v.get<double>()};
    if (v.is_array()) return v.get<std::vector<double>>();
    throw std::invalid_argument(std::string("config: '") + key + "' must be a number or a list");
}

} // namespace detail

inline ExperimentConfig parse_config(const json& j)
{
    ExperimentConfig c;
    if (j.contains("geometry")) {
        const auto& g = j.at("geometry");
        c.geometry.problem = problem_from_string(g.value("problem", std::string("III")));
        c.geometry.r_inner = g.value("r_inner", c.geometry.problem == Problem::I ? 0.0 : 1.0);
        c.geometry.r_outer = g.value("r_outer", 8.0);
        c.geometry.anchor_degree = g.value("degree", 2);
        c.geometry.anchor_phase_offset = g.value("offset", 0.0);
        c.n_r = g.value("n_r", c.n_r);
        c.n_theta = g.value("n_theta", c.n_theta);
        c.radial_stretch = g.value("radial_stretch", 0.0);
        c.eps_ref = g.value("eps_ref", 0.0);
    } else {
        c.geometry.problem = Problem::III;
        c.geometry.r_inner = 1.0;
        c.geometry.r_outer = 8.0;
        c.geometry.anchor_degree = 2;
    }
    if (j.contains("anchoring")) {
        const auto& a = j.at("anchoring");
        c.eps = detail::number_list(a, "eps", c.eps);
        c.alpha = detail::number_list(a, "alpha", c.alpha);
        c.K = detail::number_list(a, "K", c.K);
    }
    if (j.contains("sweep")) c.r_outer = detail::number_list(j.at("sweep"), "r_outer", {});
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        c.solver.max_iters = s.value("max_iters", c.solver.max_iters);
        const auto m = s.value("method", std::string("lbfgs"));
        if (m == "lbfgs") c.solver.method = Method::Lbfgs;
        else if (m == "gradient_flow") c.solver.method = Method::GradientFlow;
        else throw std::invalid_argument("config: unknown solver method '" + m + "'");
        c.solver.backtracking = s.value("backtracking", true);
        c.solver.fixed_step = s.value("fixed_step", 0.0);
        c.solver.tol_r = s.value("tol_r", 0.0);
        c.solver.tol_e = s.value("tol_e", c.solver.tol_e);
        c.solver.stall_window = s.value("stall_window", c.solver.stall_window);
        c.solver.seed = s.value("seed", std::uint64_t{1});
        c.solver.max_step = s.value("max_step", c.solver.max_step);
        c.solver.record_history = s.value("record_history", true);
        c.policy = s.value("init", c.policy);
    }
    if (j.contains("outputs")) {
        const auto& o = j.at("outputs");
        c.out_dir = o.value("dir", c.out_dir);
        c.write_fields = o.value("fields", true);
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read config " + path);
    return parse_config(json::parse(f));
}

// ---------------------------------------------------------------------------
// Parameter points and the multi-start policy

struct SweepPoint {
    int index = 0;
    GeometrySpec geometry;
    AnchoringParams params;
    int n_r = 0;
    int n_theta = 0;
};

inline std::vector<SweepPoint> expand_points(const ExperimentConfig& c)
{
    std::vector<SweepPoint> pts;
    const auto routs = c.r_outer.empty() ? std::vector<double>{c.geometry.r_outer} : c.r_outer;
    for (double ro : routs)
        for (double e : c.eps)
            for (double a : c.alpha)
                for (double k : c.K) {
                    SweepPoint p;
                    p.index = static_cast<int>(pts.size());
                    p.geometry = c.geometry;
                    p.geometry.r_outer = ro;
                    p.params = {e, a, k};
                    const double s = c.eps_ref > 0.0 ? c.eps_ref / e : 1.0;
                    p.n_r = static_cast<int>(std::lround(c.n_r * s));
                    p.n_theta = 2 * static_cast<int>(std::lround(0.5 * c.n_theta * s));
                    pts.push_back(p);
                }
    return pts;
}

/// Interior defect guesses: renormalized-energy minimizers (scaled to Gamma) outside, radius R/2 in the disk.
inline DefectSet interior_guess(const GeometrySpec& spec)
{
    DefectSet ds;
    const int D = spec.anchor_degree;
    const int n = std::abs(D);
    if (n == 0) return ds;
    const int d = expected_total_degree(spec.problem, D) > 0 ? 1 : -1;
    if (spec.problem == Problem::I) {
        for (int i = 0; i < n; ++i) {
            const cplx z = std::polar(0.5 * spec.r_outer, 0.5 * kPi + kTwoPi * i / n);
            ds.interior.push_back({z.real(), z.imag(), d});
        }
        return ds;
    }
    for (cplx z : predicted_interior_positions(n)) {
        z *= spec.r_inner;
        if (std::abs(z) > 0.8 * spec.r_outer) z *= std::sqrt(spec.r_inner * spec.r_outer) / std::abs(z);
        ds.interior.push_back({z.real(), z.imag(), d});
    }
    return ds;
}

inline std::vector<double> boundary_guess(int D)
{
    if (D == 0) return {};
    return predicted_boundary_angles(std::abs(D));
}

/// Candidate initial fields for one parameter point.
inline std::vector<std::pair<std::string, OrderParameter>> candidates(const GridPtr& grid, const AnchoringParams& p,
                                                                      const SolveConfig& cfg, const std::string& policy)
{
    std::vector<std::pair<std::string, OrderParameter>> out;
    const GeometrySpec& spec = grid->spec();
    auto add_boundary = [&] {
        try {
            out.emplace_back("upper_bound", upper_bound_initializer(spec, grid, p, boundary_guess(spec.anchor_degree)));
        } catch (const std::invalid_argument&) {
            out.emplace_back("upper_bound", make_initial(grid, p, cfg));
        }
    };
    auto add_interior = [&] {
        if (spec.anchor_degree == 0) return;
        CanonicalOptions o{p.eps, p.eps};
        out.emplace_back("canonical", canonical_map(interior_guess(spec), spec, grid, p, o));
    };
    if (policy == "upper_bound") add_boundary();
    else if (policy == "canonical") {
        add_interior();
        if (out.empty()) add_boundary();
    } else if (policy == "random") {
        SolveConfig c = cfg;
        c.init = Initializer::Random;
        out.emplace_back("random", make_initial(grid, p, c));
    } else {
        add_boundary();
        add_interior();
    }
    return out;
}

/// boundary: J = |D| and I = 0; interior: I = |D| and J = 0; otherwise mixed.
inline std::string classify(const DefectSet& ds, int D)
{
    const auto I = ds.interior.size(), J = ds.boundary.size();
    const auto n = static_cast<std::size_t>(std::abs(D));
    if (n == 0) return (I == 0 && J == 0) ? "none" : "mixed";
    if (I == 0 && J == n) return "boundary";
    if (J == 0 && I == n) return "interior";
    return "mixed";
}

struct PointResult {
    SweepPoint point;
    bool ok = false;
    std::string error;
    SolveReport report;
    DefectSet defects;
    std::vector<Branch> branches;
    std::string classification;
    bool apriori_ok = false;
};

inline PointResult run_point(const SweepPoint& pt, const ExperimentConfig& c)
{
    PointResult r;
    r.point = pt;
    try {
        const double stretch = c.radial_stretch > 0.0 ? c.radial_stretch : default_radial_stretch(pt.geometry.problem);
        auto grid = build_grid(pt.geometry, pt.n_r, pt.n_theta, stretch);
        auto ms = solve_multistart(candidates(grid, pt.params, c.solver, c.policy), pt.params, c.solver);
        r.report = std::move(ms.best);
        r.branches = std::move(ms.branches);
        r.defects = detect(r.report.u, pt.params);
        r.classification = classify(r.defects, pt.geometry.anchor_degree);
        r.apriori_ok = check_apriori(r.report).pass;
        r.ok = true;
    } catch (const std::exception& e) {
        r.error = e.what();
        r.classification = "error";
    }
    return r;
}

// ---------------------------------------------------------------------------
// JSON and CSV writers

inline json to_json(const DefectSet& ds)
{
    json j;
    j["interior"] = json::array();
    for (const auto& p : ds.interior) j["interior"].push_back({{"x", p.x}, {"y", p.y}, {"d", p.d}});
    j["boundary"] = json::array();
    for (const auto& q : ds.boundary)
        j["boundary"].push_back({{"theta", q.theta}, {"D", q.D}, {"arc_length", q.arc_length},
                                 {"half_circle_winding", q.half_circle_winding}});
    j["accounting_ok"] = ds.accounting_ok;
    j["unit_degrees"] = ds.unit_degrees;
    j["unresolved"] = ds.unresolved;
    return j;
}

inline json to_json(const EnergyBreakdown& e)
{
    return {{"dirichlet", e.dirichlet}, {"potential", e.potential}, {"anchoring", e.anchoring}, {"total", e.total}};
}

inline json to_json(const PointResult& r)
{
    json j;
    j["index"] = r.point.index;
    j["problem"] = to_string(r.point.geometry.problem);
    j["degree"] = r.point.geometry.anchor_degree;
    j["r_inner"] = r.point.geometry.r_inner;
    j["r_outer"] = r.point.geometry.r_outer;
    j["eps"] = r.point.params.eps;
    j["alpha"] = r.point.params.alpha;
    j["K"] = r.point.params.K;
    j["lambda"] = r.point.params.lambda();
    j["grid"] = {r.point.n_r, r.point.n_theta};
    if (!r.ok) {
        j["error"] = r.error;
        return j;
    }
    j["converged"] = r.report.converged;
    j["stop_reason"] = r.report.stop_reason;
    j["iters"] = r.report.iters;
    j["energy"] = to_json(r.report.energy);
    j["residual"] = r.report.residual;
    j["max_modulus"] = r.report.max_modulus;
    j["c0_emp"] = r.report.c0_emp;
    if (std::isfinite(r.report.phi_star)) j["phi_star"] = r.report.phi_star;
    else j["phi_star"] = nullptr;
    j["initializer"] = r.report.initializer;
    j["defects"] = to_json(r.defects);
    j["classification"] = r.classification;
    j["branches"] = json::array();
    for (const auto& b : r.branches) j["branches"].push_back({{"label", b.label}, {"energy", b.energy}, {"converged", b.converged}});
    return j;
}

inline void write_history_csv(const SolveReport& r, std::ostream& os)
{
    os << "iter,dirichlet,potential,anchoring,total,residual_norm\n";
    for (const auto& h : r.history)
        os << h.iter << ',' << fmt(h.e.dirichlet) << ',' << fmt(h.e.potential) << ',' << fmt(h.e.anchoring) << ','
           << fmt(h.e.total) << ',' << fmt(h.residual_norm) << '\n';
}

inline void write_text(const fs::path& p, const std::string& s)
{
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << s;
}

/// Field CSV, history CSV and report JSON for one point.
inline void write_point(const PointResult& r, const fs::path& dir, bool fields)
{
    fs::create_directories(dir);
    if (r.ok && fields) {
        write_field_csv(r.report.u, (dir / "field.csv").string());
        std::ostringstream h;
        write_history_csv(r.report, h);
        write_text(dir / "history.csv", h.str());
    }
    write_text(dir / "report.json", to_json(r).dump(2) + "\n");
}

inline const char* kSweepHeader =
    "index,problem,degree,r_inner,r_outer,eps,alpha,K,lambda,n_r,n_theta,converged,iters,dirichlet,potential,"
    "anchoring,total,residual,max_modulus,apriori_ok,n_interior,n_boundary,interior_degree,boundary_degree,"
    "accounting_ok,classification,initializer,branch_energies,error";

inline std::string sweep_row(const PointResult& r)
{
    const auto& pt = r.point;
    std::ostringstream os;
    os << pt.index << ',' << to_string(pt.geometry.problem) << ',' << pt.geometry.anchor_degree << ','
       << fmt(pt.geometry.r_inner) << ',' << fmt(pt.geometry.r_outer) << ',' << fmt(pt.params.eps) << ','
       << fmt(pt.params.alpha) << ',' << fmt(pt.params.K) << ',' << fmt(pt.params.lambda()) << ',' << pt.n_r << ','
       << pt.n_theta << ',';
    if (!r.ok) {
        // converged..max_modulus, apriori..accounting, classification, initializer, branches
        os << "0,0,,,,,,,0,0,0,0,0,0,error,,,";
        std::string e = r.error;
        std::replace(e.begin(), e.end(), ',', ';');
        std::replace(e.begin(), e.end(), '\n', ' ');
        os << e;
        return os.str();
    }
    const auto& e = r.report.energy;
    os << (r.report.converged ? 1 : 0) << ',' << r.report.iters << ',' << fmt(e.dirichlet) << ',' << fmt(e.potential)
       << ',' << fmt(e.anchoring) << ',' << fmt(e.total) << ',' << fmt(r.report.residual) << ','
       << fmt(r.report.max_modulus) << ',' << (r.apriori_ok ? 1 : 0) << ',' << r.defects.interior.size() << ','
       << r.defects.boundary.size() << ',' << r.defects.interior_degree() << ',' << r.defects.boundary_degree() << ','
       << (r.defects.accounting_ok ? 1 : 0) << ',' << r.classification << ',' << r.report.initializer << ',';
    for (std::size_t b = 0; b < r.branches.size(); ++b)
        os << (b ? ";" : "") << r.branches[b].label << '=' << fmt(r.branches[b].energy);
    os << ',';
    return os.str();
}

inline const char* kDefectHeader = "index,kind,x,y,theta,degree";

inline std::string defect_rows(const PointResult& r)
{
    std::ostringstream os;
    if (!r.ok) return {};
    for (const auto& p : r.defects.interior)
        os << r.point.index << ",interior," << fmt(p.x) << ',' << fmt(p.y) << ',' << fmt(std::atan2(p.y, p.x)) << ','
           << p.d << '\n';
    const double R = r.point.geometry.gamma_radius();
    for (const auto& q : r.defects.boundary)
        os << r.point.index << ",boundary," << fmt(R * std::cos(q.theta)) << ',' << fmt(R * std::sin(q.theta)) << ','
           << fmt(q.theta) << ',' << q.D << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Sweeps

/// GL_ANCHOR_THREADS, defaulting to 1.
inline int worker_count()
{
    if (const char* s = std::getenv("GL_ANCHOR_THREADS")) {
        const int n = std::atoi(s);
        if (n > 0) return n;
    }
    return 1;
}

/// Runs fn(i) for i in [0, n) on a bounded pool; results are indexed, so ordering never depends on scheduling.
template <class F>
void parallel_for(std::size_t n, int threads, F&& fn)
{
    threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    for (auto& th : pool) th.join();
}

struct SweepResult {
    std::vector<PointResult> points;
    std::string csv;         ///< sweep table
    std::string defects_csv; ///< one row per detected defect
};

inline SweepResult run_sweep(const ExperimentConfig& c, int threads = worker_count())
{
    const auto pts = expand_points(c);
    SweepResult out;
    out.points.resize(pts.size());
    parallel_for(pts.size(), threads, [&](std::size_t i) { out.points[i] = run_point(pts[i], c); });
    std::ostringstream s, d;
    s << kSweepHeader << '\n';
    d << kDefectHeader << '\n';
    for (const auto& r : out.points) {
        s << sweep_row(r) << '\n';
        d << defect_rows(r);
    }
    out.csv = s.str();
    out.defects_csv = d.str();
    return out;
}

inline void write_sweep(const SweepResult& r, const ExperimentConfig& c, const fs::path& dir)
{
    fs::create_directories(dir);
    write_text(dir / "sweep.csv", r.csv);
    write_text(dir / "defects.csv", r.defects_csv);
    for (const auto& p : r.points) {
        char name[32];
        std::snprintf(name, sizeof name, "point_%04d", p.point.index);
        write_point(p, dir / "points" / name, c.write_fields);
    }
}

// ---------------------------------------------------------------------------
// Transition probe

struct RescaleCheck {
    double R = 4.0;
    double eps_unit = 0.0;
    std::string unit_class, droplet_class;
    double unit_energy = 0.0, droplet_energy = 0.0;
    bool agree = false;
};

struct TransitionRecord {
    double eps = 0.0;
    std::vector<double> K;
    std::vector<std::string> classification;
    std::vector<std::vector<Branch>> branches;
    double K0_emp = std::numeric_limits<double>::quiet_NaN(); ///< largest K with boundary classification at and below it
    double K1_emp = std::numeric_limits<double>::quiet_NaN(); ///< smallest K with interior classification at and above it
    bool monotone = true;
    std::vector<std::string> flags;
    RescaleCheck rescale;
    bool rescale_done = false;
};

/**
 * Droplet of radius R with lambda = eps_d^{-1/2} against the unit problem with
 * K = sqrt(R): x -> x / R maps one onto the other with eps_unit = eps_d / R,
 * and the grids are scaled copies, so the discrete problems coincide.
 */
inline RescaleCheck rescale_check(const ExperimentConfig& base, double R, double eps_unit)
{
    RescaleCheck rc;
    rc.R = R;
    rc.eps_unit = eps_unit;
    ExperimentConfig c = base;
    SweepPoint unit;
    unit.geometry = base.geometry;
    unit.geometry.r_inner = 1.0;
    unit.geometry.r_outer = base.geometry.r_outer / base.geometry.r_inner;
    unit.params = {eps_unit, 0.5, std::sqrt(R)};
    unit.n_r = base.n_r;
    unit.n_theta = base.n_theta;
    SweepPoint drop = unit;
    drop.geometry.r_inner = R;
    drop.geometry.r_outer = R * unit.geometry.r_outer;
    drop.params = {R * eps_unit, 0.5, 1.0};
    const auto a = run_point(unit, c), b = run_point(drop, c);
    rc.unit_class = a.classification;
    rc.droplet_class = b.classification;
    rc.unit_energy = a.ok ? a.report.energy.total : kInf;
    rc.droplet_energy = b.ok ? b.report.energy.total : kInf;
    rc.agree = a.ok && b.ok && rc.unit_class == rc.droplet_class;
    return rc;
}

inline TransitionRecord transition_probe(const ExperimentConfig& c, bool with_rescale = true, int threads = worker_count())
{
    if (c.alpha.size() != 1 || c.alpha[0] != 0.5) throw std::invalid_argument("transition_probe: alpha must be exactly 1/2");
    if (c.eps.size() != 1) throw std::invalid_argument("transition_probe: a single eps is required");
    auto K = c.K;
    std::sort(K.begin(), K.end());
    if (K.back() / K.front() < 100.0) throw std::invalid_argument("transition_probe: K grid must span at least 2 decades");
    ExperimentConfig cc = c;
    cc.K = K;
    const auto sw = run_sweep(cc, threads);
    TransitionRecord t;
    t.eps = c.eps[0];
    t.K = K;
    for (const auto& p : sw.points) {
        t.classification.push_back(p.classification);
        t.branches.push_back(p.branches);
    }
    const std::size_t n = K.size();
    // rank: boundary 0, mixed 1, interior 2; monotone means non-decreasing in K
    auto rank = [](const std::string& s) { return s == "boundary" ? 0 : s == "interior" ? 2 : 1; };
    for (std::size_t i = 1; i < n; ++i)
        if (rank(t.classification[i]) < rank(t.classification[i - 1])) {
            t.monotone = false;
            t.flags.push_back("non-monotone classification between K=" + fmt(K[i - 1]) + " and K=" + fmt(K[i]));
        }
    for (std::size_t i = 0; i < n && t.classification[i] == "boundary"; ++i) t.K0_emp = K[i];
    for (std::size_t i = n; i-- > 0 && t.classification[i] == "interior";) t.K1_emp = K[i];
    for (std::size_t i = 0; i < n; ++i)
        if (t.classification[i] == "error") t.flags.push_back("solve failed at K=" + fmt(K[i]));
    if (with_rescale) {
        // droplet eps is R times the unit eps so both resolve the core on the same grid
        t.rescale = rescale_check(c, 4.0, c.eps[0]);
        t.rescale_done = true;
    }
    return t;
}

inline json to_json(const TransitionRecord& t)
{
    json j;
    j["eps"] = t.eps;
    j["alpha"] = 0.5;
    j["rows"] = json::array();
    for (std::size_t i = 0; i < t.K.size(); ++i) {
        json b = json::array();
        for (const auto& x : t.branches[i]) b.push_back({{"label", x.label}, {"energy", x.energy}});
        j["rows"].push_back({{"K", t.K[i]}, {"classification", t.classification[i]}, {"branches", b}});
    }
    j["K0_emp"] = std::isfinite(t.K0_emp) ? json(t.K0_emp) : json(nullptr);
    j["K1_emp"] = std::isfinite(t.K1_emp) ? json(t.K1_emp) : json(nullptr);
    j["monotone"] = t.monotone;
    j["flags"] = t.flags;
    if (t.rescale_done)
        j["rescale"] = {{"R", t.rescale.R},
                        {"eps_unit", t.rescale.eps_unit},
                        {"unit_K", std::sqrt(t.rescale.R)},
                        {"unit_classification", t.rescale.unit_class},
                        {"droplet_classification", t.rescale.droplet_class},
                        {"unit_energy", t.rescale.unit_energy},
                        {"droplet_energy", t.rescale.droplet_energy},
                        {"agree", t.rescale.agree}};
    return j;
}

inline std::string transition_csv(const TransitionRecord& t)
{
    std::ostringstream os;
    os << "K,classification,branch_energies\n";
    for (std::size_t i = 0; i < t.K.size(); ++i) {
        os << fmt(t.K[i]) << ',' << t.classification[i] << ',';
        for (std::size_t b = 0; b < t.branches[i].size(); ++b)
            os << (b ? ";" : "") << t.branches[i][b].label << '=' << fmt(t.branches[i][b].energy);
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Report

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    int col(const std::string& name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw std::runtime_error("report: missing column " + name);
    }
};

inline Table read_csv(const fs::path& p)
{
    std::ifstream f(p);
    if (!f) throw std::runtime_error("cannot read " + p.string());
    Table t;
    std::string line;
    if (std::getline(f, line)) t.header = split(line, ',');
    while (std::getline(f, line))
        if (!line.empty()) t.rows.push_back(split(line, ','));
    return t;
}

inline double num(const std::string& s) { return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s); }

} // namespace detail

struct ReportSummary {
    std::string text;
    std::vector<std::string> missing;
    int runs = 0;
};

/**
 * Reads sweep.csv and defects.csv under `run_dir` (the directory itself and
 * its immediate subdirectories) and writes phase_diagram.csv,
 * defect_positions.csv, slope_fit.csv, renorm_comparison.csv and summary.txt
 * into `out_dir`.
 */
inline ReportSummary report(const fs::path& run_dir, const fs::path& out_dir)
{
    ReportSummary rs;
    std::vector<fs::path> dirs;
    if (fs::exists(run_dir / "sweep.csv")) dirs.push_back(run_dir);
    if (fs::is_directory(run_dir)) {
        std::vector<fs::path> sub;
        for (const auto& e : fs::directory_iterator(run_dir))
            if (e.is_directory() && fs::exists(e.path() / "sweep.csv")) sub.push_back(e.path());
        std::sort(sub.begin(), sub.end());
        dirs.insert(dirs.end(), sub.begin(), sub.end());
    }
    fs::create_directories(out_dir);
    if (dirs.empty()) {
        rs.text = "no runs found in " + run_dir.string() + "\n";
        write_text(out_dir / "summary.txt", rs.text);
        return rs;
    }

    std::ostringstream phase, pos, slope, ren, sum;
    phase << "run,problem,degree,eps,alpha,K,classification\n";
    pos << "run,index,kind,x,y,theta,degree\n";
    slope << "run,problem,degree,alpha,K,n_eps,slope_emp,slope_target,rel_error\n";
    ren << "run,index,eps,alpha,K,t_emp,x_max,t_specialized,t_general,err_specialized,err_general\n";
    const double t_spec = std::pow(2.0, 0.25), t_gen = std::pow(7.0 / 3.0, 0.25);

    for (const auto& d : dirs) {
        const std::string run = fs::relative(d, run_dir).string() == "." ? "." : fs::relative(d, run_dir).string();
        detail::Table sw;
        try {
            sw = detail::read_csv(d / "sweep.csv");
        } catch (const std::exception& e) {
            rs.missing.push_back((d / "sweep.csv").string());
            continue;
        }
        detail::Table df;
        const bool have_def = fs::exists(d / "defects.csv");
        if (have_def) df = detail::read_csv(d / "defects.csv");
        else rs.missing.push_back((d / "defects.csv").string());

        const int ci = sw.col("index"), cp = sw.col("problem"), cd = sw.col("degree"), ce = sw.col("eps"),
                  ca = sw.col("alpha"), ck = sw.col("K"), cc = sw.col("classification"), ct = sw.col("total"),
                  cv = sw.col("converged"), cr = sw.col("r_inner");
        std::map<std::string, std::vector<std::pair<double, double>>> groups; // key -> (ln 1/eps, E)
        std::map<std::string, std::vector<std::string>> group_info;
        for (const auto& r : sw.rows) {
            ++rs.runs;
            phase << run << ',' << r[cp] << ',' << r[cd] << ',' << r[ce] << ',' << r[ca] << ',' << r[ck] << ',' << r[cc] << '\n';
            if (r[cv] == "1") {
                const std::string key = r[cp] + "|" + r[cd] + "|" + r[ca] + "|" + r[ck];
                groups[key].push_back({std::log(1.0 / detail::num(r[ce])), detail::num(r[ct])});
                group_info[key] = {r[cp], r[cd], r[ca], r[ck]};
            }
        }
        for (const auto& [key, v] : groups) {
            if (v.size() < 2) continue;
            double mx = 0, my = 0;
            for (auto [x, y] : v) {
                mx += x;
                my += y;
            }
            mx /= v.size();
            my /= v.size();
            double sxy = 0, sxx = 0;
            for (auto [x, y] : v) {
                sxy += (x - mx) * (y - my);
                sxx += (x - mx) * (x - mx);
            }
            const auto& gi = group_info[key];
            const double s = sxy / sxx;
            const double target = kPi * std::min(2.0 * detail::num(gi[2]), 1.0) * std::abs(detail::num(gi[1]));
            slope << run << ',' << gi[0] << ',' << gi[1] << ',' << gi[2] << ',' << gi[3] << ',' << v.size() << ','
                  << fmt(s) << ',' << fmt(target) << ',' << fmt(std::abs(s - target) / target) << '\n';
        }
        if (have_def) {
            const int di = df.col("index"), dk = df.col("kind"), dx = df.col("x"), dy = df.col("y"), dt = df.col("theta"),
                      dg = df.col("degree");
            std::map<std::string, std::vector<std::pair<double, double>>> interior;
            for (const auto& r : df.rows) {
                pos << run << ',' << r[di] << ',' << r[dk] << ',' << r[dx] << ',' << r[dy] << ',' << r[dt] << ',' << r[dg] << '\n';
                if (r[dk] == "interior") interior[r[di]].push_back({detail::num(r[dx]), detail::num(r[dy])});
            }
            for (const auto& r : sw.rows) {
                if (r[cp] != "III" || r[cd] != "2" || r[cc] != "interior") continue;
                const auto it = interior.find(r[ci]);
                if (it == interior.end() || it->second.size() != 2) continue;
                const double R = detail::num(r[cr]);
                double t = 0.0, xm = 0.0;
                for (auto [x, y] : it->second) {
                    t += std::abs(y) / R / 2.0;
                    xm = std::max(xm, std::abs(x) / R);
                }
                ren << run << ',' << r[ci] << ',' << r[ce] << ',' << r[ca] << ',' << r[ck] << ',' << fmt(t) << ','
                    << fmt(xm) << ',' << fmt(t_spec) << ',' << fmt(t_gen) << ',' << fmt(t - t_spec) << ','
                    << fmt(t - t_gen) << '\n';
            }
        }
    }
    write_text(out_dir / "phase_diagram.csv", phase.str());
    write_text(out_dir / "defect_positions.csv", pos.str());
    write_text(out_dir / "slope_fit.csv", slope.str());
    write_text(out_dir / "renorm_comparison.csv", ren.str());
    sum << "runs: " << rs.runs << " in " << dirs.size() << " sweep(s)\n";
    sum << "phase diagram: phase_diagram.csv\n";
    sum << "defect positions: defect_positions.csv\n";
    sum << "energy slope vs ln(1/eps), target pi min(2 alpha, 1) |D|: slope_fit.csv\n";
    sum << "interior positions vs 2^(1/4) = " << fmt(t_spec) << " and (7/3)^(1/4) = " << fmt(t_gen)
        << ": renorm_comparison.csv\n";
    for (const auto& m : rs.missing) sum << "missing: " << m << '\n';
    rs.text = sum.str();
    write_text(out_dir / "summary.txt", rs.text);
    return rs;
}

} // namespace glanchor
