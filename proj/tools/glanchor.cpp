// Command-line front end: solve | sweep | transition | renorm-min | greens-check | report.

#include <iostream>

#include "CLI11.hpp"
#include "glanchor/harness.hpp"

using namespace glanchor;

namespace {

int cmd_solve(const std::string& config, const std::string& out)
{
    const auto c = load_config(config);
    const auto pts = expand_points(c);
    if (pts.size() != 1) {
        std::cerr << "solve: the config describes " << pts.size() << " parameter points; use sweep\n";
        return 2;
    }
    const auto r = run_point(pts[0], c);
    write_point(r, out, true);
    if (!r.ok) {
        std::cerr << "solve failed: " << r.error << "\n";
        return 1;
    }
    std::cout << "energy " << fmt(r.report.energy.total) << "  iters " << r.report.iters << "  "
              << (r.report.converged ? "converged" : "not converged (" + r.report.stop_reason + ")") << "\n"
              << "defects: " << r.defects.interior.size() << " interior, " << r.defects.boundary.size()
              << " boundary -> " << r.classification << (r.defects.accounting_ok ? "" : " (accounting violated)") << "\n";
    return r.report.converged ? 0 : 1;
}

int cmd_sweep(const std::string& config, const std::string& out, int threads)
{
    const auto c = load_config(config);
    const auto dir = out.empty() ? c.out_dir : out;
    const auto r = run_sweep(c, threads > 0 ? threads : worker_count());
    write_sweep(r, c, dir);
    int failed = 0;
    for (const auto& p : r.points) failed += p.ok ? 0 : 1;
    std::cout << r.points.size() << " points, " << failed << " failed; table in " << (fs::path(dir) / "sweep.csv").string() << "\n";
    return 0;
}

int cmd_transition(const std::string& config, const std::string& out, bool rescale, int threads)
{
    const auto c = load_config(config);
    const auto dir = fs::path(out.empty() ? c.out_dir : out);
    const auto t = transition_probe(c, rescale, threads > 0 ? threads : worker_count());
    fs::create_directories(dir);
    write_text(dir / "transition.json", to_json(t).dump(2) + "\n");
    write_text(dir / "transition.csv", transition_csv(t));
    for (std::size_t i = 0; i < t.K.size(); ++i) std::cout << "K=" << fmt(t.K[i]) << "  " << t.classification[i] << "\n";
    std::cout << "K0_emp=" << (std::isfinite(t.K0_emp) ? fmt(t.K0_emp) : "none")
              << "  K1_emp=" << (std::isfinite(t.K1_emp) ? fmt(t.K1_emp) : "none") << "\n";
    for (const auto& f : t.flags) std::cout << "flag: " << f << "\n";
    if (t.rescale_done)
        std::cout << "rescale R=4: droplet " << t.rescale.droplet_class << ", unit K=2 " << t.rescale.unit_class
                  << (t.rescale.agree ? " (agree)" : " (DISAGREE)") << "\n";
    return 0;
}

int cmd_renorm(int degree, const std::string& mode, const std::string& out, std::uint64_t seed, int restarts)
{
    WMode m;
    if (mode == "interior") m = WMode::Interior;
    else if (mode == "boundary") m = WMode::Boundary;
    else if (mode == "interior-specialized" || mode == "interior_specialized") m = WMode::InteriorSpecialized;
    else {
        std::cerr << "renorm-min: unknown mode " << mode << "\n";
        return 2;
    }
    MinimizeOptions o;
    o.seed = seed;
    o.restarts = restarts;
    const auto r = minimize_w(degree, m, o);
    json j;
    j["degree"] = degree;
    j["mode"] = to_string(m);
    j["formula"] = r.formula;
    j["value"] = r.value;
    j["grad_norm"] = r.grad_norm;
    j["converged"] = r.converged;
    j["constraint_residual"] = r.constraint_residual;
    j["restarts"] = r.restarts;
    j["seed"] = seed;
    j["positions"] = json::array();
    for (const auto& p : r.positions) j["positions"].push_back({p.real(), p.imag()});
    j["angles_a"] = r.angles_a;
    if (m == WMode::Boundary) j["c0"] = r.c0;
    if (m != WMode::Boundary && degree == 1) {
        j["stated_point_check"] = {{"point", {-2.0, 0.0}}, {"W_at_point", w_interior({cplx(-2.0, 0.0)}).value},
                                   {"note", "formula minimizer differs from the point (-2,0) stated in the source"}};
    }
    if (m == WMode::Interior && degree == 2) {
        const auto s = minimize_w(2, WMode::InteriorSpecialized, o);
        j["specialized_form"] = {{"positions", {{s.positions[0].real(), s.positions[0].imag()},
                                                {s.positions[1].real(), s.positions[1].imag()}}},
                                 {"value", s.value}};
    }
    const std::string text = j.dump(2) + "\n";
    if (out.empty()) std::cout << text;
    else {
        write_text(out, text);
        std::cout << "W=" << fmt(r.value) << " written to " << out << "\n";
    }
    return r.converged ? 0 : 1;
}

int cmd_greens(int grid, const std::string& out)
{
    const auto c = greens_check(grid);
    json j;
    j["h"] = c.h;
    j["laplacian_sup"] = c.laplacian_sup;
    j["poles"] = c.poles;
    j["mean_flux"] = c.mean_flux;
    j["decay_ratio"] = c.decay_ratio;
    std::cout << "harmonicity (five-point Laplacian sup):\n";
    for (std::size_t k = 0; k < c.h.size(); ++k) {
        std::cout << "  h=" << fmt(c.h[k]) << "  " << fmt(c.laplacian_sup[k]);
        if (k) std::cout << "  ratio " << fmt(c.laplacian_sup[k - 1] / c.laplacian_sup[k]);
        std::cout << "\n";
    }
    for (std::size_t i = 0; i < c.poles.size(); ++i)
        std::cout << "|p|=" << fmt(c.poles[i]) << "  mean flux " << fmt(c.mean_flux[i]) << "  |G|/|p| at 1000 "
                  << fmt(c.decay_ratio[i]) << "\n";
    if (!out.empty()) write_text(out, j.dump(2) + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Weak-anchoring Ginzburg-Landau laboratory"};
    app.require_subcommand(1);

    std::string config, out;
    int threads = 0;
    auto* solve = app.add_subcommand("solve", "Minimize the energy for one parameter point");
    solve->add_option("--config", config, "JSON experiment config")->required();
    solve->add_option("--out", out, "Output directory")->required();

    auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
    sweep->add_option("--config", config, "JSON experiment config")->required();
    sweep->add_option("--out", out, "Output directory (default: outputs.dir)");
    sweep->add_option("--threads", threads, "Worker count (default: GL_ANCHOR_THREADS or 1)");

    bool no_rescale = false;
    auto* trans = app.add_subcommand("transition", "Probe the alpha = 1/2 transition over K");
    trans->add_option("--config", config, "JSON experiment config")->required();
    trans->add_option("--out", out, "Output directory (default: outputs.dir)");
    trans->add_option("--threads", threads, "Worker count");
    trans->add_flag("--no-rescale", no_rescale, "Skip the droplet rescaling cross-check");

    int degree = 2, restarts = 16;
    std::string mode = "interior";
    std::uint64_t seed = 12345;
    auto* ren = app.add_subcommand("renorm-min", "Minimize the renormalized energy");
    ren->add_option("--degree", degree, "Anchoring degree")->check(CLI::PositiveNumber);
    ren->add_option("--mode", mode, "interior | boundary | interior-specialized");
    ren->add_option("--out", out, "Output JSON");
    ren->add_option("--seed", seed, "Multi-start seed");
    ren->add_option("--restarts", restarts, "Multi-start count")->check(CLI::PositiveNumber);

    int grid = 256;
    auto* gc = app.add_subcommand("greens-check", "Check the exterior Neumann Green's function");
    gc->add_option("--grid", grid, "Base stencil resolution (h = 1/grid)");
    gc->add_option("--out", out, "Output JSON");

    std::string runs;
    auto* rep = app.add_subcommand("report", "Summarize sweep outputs");
    rep->add_option("--runs", runs, "Run directory")->required();
    rep->add_option("--out", out, "Report directory (default: <runs>/report)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*solve) return cmd_solve(config, out);
        if (*sweep) return cmd_sweep(config, out, threads);
        if (*trans) return cmd_transition(config, out, !no_rescale, threads);
        if (*ren) return cmd_renorm(degree, mode, out, seed, restarts);
        if (*gc) return cmd_greens(grid, out);
        if (*rep) {
            const auto r = report(runs, out.empty() ? fs::path(runs) / "report" : fs::path(out));
            std::cout << r.text;
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
