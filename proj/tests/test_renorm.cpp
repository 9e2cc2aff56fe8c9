#include <gtest/gtest.h>

#include "glanchor/renorm.hpp"

using namespace glanchor;

namespace {
const double kT = std::pow(2.0, 0.25);
}

TEST(Greens, UnitPoleIdentity)
{
    const cplx p = std::polar(1.0, 0.8);
    for (cplx x : {cplx(2.0, 0.3), cplx(-1.5, -4.0), cplx(0.0, 1.2)}) {
        const double want = -std::log(std::norm(x - p) / std::norm(x));
        EXPECT_NEAR(greens_eval(p, x), want, 1e-14);
    }
    EXPECT_LT(std::abs(GreensExterior(p).reflected() - p), 1e-15);
}

TEST(Greens, DirectArithmetic)
{
    // |x - p| = 4, |x - p*| = |2 + 0.5| = 2.5, |x|^2 = 4
    const double d1 = std::hypot(2.0 - -2.0, 0.0), d2 = std::hypot(2.0 - -0.5, 0.0);
    EXPECT_NEAR(greens_eval({-2.0, 0.0}, {2.0, 0.0}), -std::log(d1 * d2 / 4.0), 1e-15);
    EXPECT_NEAR(greens_eval({-2.0, 0.0}, {2.0, 0.0}), -std::log(2.5), 1e-15);
}

TEST(Greens, GradientMatchesDifferences)
{
    const cplx p(-1.7, 0.9);
    for (cplx x : {cplx(2.0, 0.3), cplx(-1.2, -1.0), cplx(0.1, 3.0)}) {
        cplx g;
        greens_eval(p, x, &g);
        const double h = 1e-6;
        const double gx = (greens_eval(p, x + h) - greens_eval(p, x - h)) / (2 * h);
        const double gy = (greens_eval(p, x + cplx(0, h)) - greens_eval(p, x - cplx(0, h))) / (2 * h);
        EXPECT_NEAR(g.real(), gx, 1e-7);
        EXPECT_NEAR(g.imag(), gy, 1e-7);
    }
}

TEST(Greens, RejectsPoleAndInteriorPole)
{
    EXPECT_THROW(greens_eval({-2.0, 0.0}, {-2.0, 0.0}), std::domain_error);
    EXPECT_THROW(greens_eval({-2.0, 0.0}, {-0.5, 0.0}), std::domain_error);
    EXPECT_THROW(GreensExterior(cplx(0.5, 0.0)), std::invalid_argument);
}

// d G / d nu on |x| = 1 with nu = x, integrated against ds / 2 pi
TEST(Greens, UnitFluxOnGamma)
{
    for (double m : {1.2, 2.0, 7.0}) {
        const cplx p = std::polar(m, 2.1);
        const int n = 4096;
        double f = 0.0;
        for (int k = 0; k < n; ++k) {
            const cplx x = std::polar(1.0, kTwoPi * k / n);
            cplx g;
            greens_eval(p, x, &g);
            const double dn = g.real() * x.real() + g.imag() * x.imag();
            EXPECT_NEAR(dn, 1.0, 1e-12); // pointwise, not just on average
            f += dn / n;
        }
        EXPECT_NEAR(f, 1.0, 1e-12);
    }
}

TEST(Greens, CheckSuite)
{
    const auto c = greens_check(64);
    ASSERT_GE(c.h.size(), 3u);
    for (std::size_t k = 1; k < c.h.size(); ++k) EXPECT_GT(c.laplacian_sup[k - 1] / c.laplacian_sup[k], 3.5);
    for (std::size_t i = 0; i < c.poles.size(); ++i) {
        EXPECT_NEAR(c.mean_flux[i], 1.0, 1e-6);
        EXPECT_LT(c.decay_ratio[i], 1e-2);
    }
}

TEST(WInterior, SingleVortexFormula)
{
    const double t = std::sqrt(2.0);
    EXPECT_NEAR(w_interior({cplx(-t, 0.0)}).value, kPi * std::log(4.0), 1e-12);
    // pi ln(t^4 / (t^2 - 1)) at t = 2
    EXPECT_NEAR(w_interior({cplx(-2.0, 0.0)}).value, kPi * std::log(16.0 / 3.0), 1e-12);
}

TEST(WInterior, SpecializedTwoVortexForm)
{
    EXPECT_NEAR(w_two_vortex_specialized(kT, kT).value, std::log(16.0), 1e-12);
    double d1, d2;
    w_two_vortex_specialized(kT, kT, &d1, &d2);
    EXPECT_NEAR(d1, 0.0, 1e-12);
    EXPECT_NEAR(d2, 0.0, 1e-12);
    EXPECT_GT(w_two_vortex_specialized(1.1, kT).value, std::log(16.0));
    EXPECT_GT(w_two_vortex_specialized(kT, 2.0).value, std::log(16.0));
}

TEST(WInterior, RotationInvariant)
{
    const std::vector<cplx> p = {cplx(1.3, 0.4), cplx(-0.2, -1.9), cplx(2.2, 1.5)};
    const double w0 = w_interior(p).value;
    for (double a : {0.3, 1.7, -2.4}) {
        std::vector<cplx> q;
        for (auto z : p) q.push_back(z * std::polar(1.0, a));
        EXPECT_NEAR(w_interior(q).value, w0, 1e-12 * std::abs(w0));
    }
}

TEST(WInterior, GradientMatchesDifferences)
{
    const std::vector<cplx> p = {cplx(1.3, 0.4), cplx(-0.2, -1.9)};
    std::vector<cplx> g;
    w_interior(p, &g);
    const double h = 1e-6;
    for (std::size_t i = 0; i < p.size(); ++i)
        for (cplx dir : {cplx(1, 0), cplx(0, 1)}) {
            auto a = p, b = p;
            a[i] += h * dir;
            b[i] -= h * dir;
            const double fd = (w_interior(a).value - w_interior(b).value) / (2 * h);
            const double an = g[i].real() * dir.real() + g[i].imag() * dir.imag();
            EXPECT_NEAR(fd, an, 1e-6);
        }
}

TEST(WInterior, SentinelsAndBlowUp)
{
    EXPECT_TRUE(std::isinf(w_interior({cplx(0.5, 0.0)}).value));
    EXPECT_FALSE(w_interior({cplx(0.5, 0.0)}).reason.empty());
    EXPECT_TRUE(std::isinf(w_interior({cplx(2.0, 0.0), cplx(2.0, 0.0)}).value));
    std::vector<cplx> g;
    w_interior({cplx(1.0, 0.0)}, &g);
    ASSERT_EQ(g.size(), 1u);
    EXPECT_EQ(g[0], cplx(0.0, 0.0));
    // monotone growth along |p1| -> 1, |p1| -> infinity, |p1 - p2| -> 0
    auto path_increasing = [](auto f, std::vector<double> s) {
        for (std::size_t k = 1; k < s.size(); ++k)
            if (!(f(s[k]) > f(s[k - 1]))) return false;
        return true;
    };
    EXPECT_TRUE(path_increasing([](double s) { return w_interior({cplx(0.0, 1.0 + s), cplx(0.0, -kT)}).value; },
                                {0.05, 0.02, 0.01, 1e-3, 1e-5}));
    EXPECT_TRUE(path_increasing([](double s) { return w_interior({cplx(0.0, s), cplx(0.0, -kT)}).value; },
                                {20.0, 50.0, 100.0, 1e3, 1e5}));
    EXPECT_TRUE(path_increasing([](double s) { return w_interior({cplx(2.0, 0.0), cplx(2.0, s)}).value; },
                                {0.05, 0.01, 1e-3, 1e-6}));
}

TEST(C0, VanishesOnUnitCircle)
{
    const auto c = c0_constant(8);
    EXPECT_TRUE(c.ok());
    EXPECT_NEAR(c.value, 0.0, 1e-8);
    EXPECT_LT(c.max_deviation, 1e-3);
    EXPECT_LT(c.refinement_change, 1e-4);
    EXPECT_GE(c.poles, 8);
}

TEST(WBoundary, ClosedForms)
{
    const double c0 = 0.37; // any constant; the pair term is what is checked
    EXPECT_NEAR(w_boundary({0.5 * kPi, -0.5 * kPi}, c0).value, -2.0 * kPi * 2.0 * std::log(2.0) + 2.0 * c0, 1e-12);
    EXPECT_NEAR(w_boundary({1.234}, c0).value, 0.5 * c0, 1e-15);
    EXPECT_TRUE(std::isinf(w_boundary({1.0, 1.0}, c0).value));
    // rotation invariance and antipodes minimize the pair term
    const double w = w_boundary({0.3, 2.0, 4.1}, 0.0).value;
    EXPECT_NEAR(w_boundary({1.3, 3.0, 5.1}, 0.0).value, w, 1e-12);
    const double anti = w_boundary({0.0, kPi}, 0.0).value;
    for (int k = 1; k < 50; ++k) EXPECT_GT(w_boundary({0.0, kPi * k / 50.0}, 0.0).value, anti);
}

TEST(Minimize, SpecializedInteriorPair)
{
    const auto r = minimize_w(2, WMode::InteriorSpecialized);
    ASSERT_TRUE(r.converged);
    EXPECT_NEAR(r.value, std::log(16.0), 1e-10);
    for (const auto& p : r.positions) {
        EXPECT_NEAR(std::abs(p), kT, 1e-7);
        EXPECT_NEAR(p.real(), 0.0, 1e-7);
    }
    EXPECT_NEAR(r.positions[0].imag() + r.positions[1].imag(), 0.0, 1e-7);
}

TEST(Minimize, GeneralInteriorFormula)
{
    const auto r2 = minimize_w(2, WMode::Interior);
    ASSERT_TRUE(r2.converged);
    for (const auto& p : r2.positions) EXPECT_NEAR(std::abs(p), std::pow(7.0 / 3.0, 0.25), 1e-6);
    EXPECT_LT(r2.grad_norm, 1e-8);
    const auto r1 = minimize_w(1, WMode::Interior);
    ASSERT_TRUE(r1.converged);
    EXPECT_NEAR(r1.positions[0].real(), -std::sqrt(2.0), 1e-7);
    EXPECT_NEAR(r1.positions[0].imag(), 0.0, 1e-7);
    EXPECT_NEAR(r1.value, kPi * std::log(4.0), 1e-10);
}

TEST(Minimize, BoundaryMinimizers)
{
    const auto r2 = minimize_w(2, WMode::Boundary);
    ASSERT_TRUE(r2.converged);
    std::vector<double> ys;
    for (const auto& p : r2.positions) {
        EXPECT_NEAR(p.real(), 0.0, 1e-7);
        ys.push_back(p.imag());
    }
    std::sort(ys.begin(), ys.end());
    EXPECT_NEAR(ys[0], -1.0, 1e-7);
    EXPECT_NEAR(ys[1], 1.0, 1e-7);
    const auto r1 = minimize_w(1, WMode::Boundary);
    EXPECT_NEAR(r1.positions[0].real(), -1.0, 1e-9);
    EXPECT_NEAR(r1.positions[0].imag(), 0.0, 1e-9);
    const auto r3 = minimize_w(3, WMode::Boundary);
    ASSERT_EQ(r3.positions.size(), 3u);
    std::vector<double> a;
    for (const auto& p : r3.positions) a.push_back(std::arg(p));
    std::sort(a.begin(), a.end());
    EXPECT_NEAR(a[1] - a[0], kTwoPi / 3, 1e-6);
    EXPECT_NEAR(a[2] - a[1], kTwoPi / 3, 1e-6);
}

TEST(Minimize, ConstraintHeldExactly)
{
    for (auto m : {WMode::Interior, WMode::Boundary})
        for (int D : {1, 2, 3}) {
            const auto r = minimize_w(D, m);
            double s = 0.0;
            for (double a : r.angles_a) s += a;
            EXPECT_NEAR(wrap_angle(s), 0.0, 1e-12) << to_string(m) << " D=" << D;
            EXPECT_LT(std::abs(r.constraint_residual), 1e-12);
        }
}

TEST(Minimize, DeterministicForSeed)
{
    MinimizeOptions o;
    o.seed = 99;
    const auto a = minimize_w(3, WMode::Interior, o), b = minimize_w(3, WMode::Interior, o);
    EXPECT_EQ(a.value, b.value);
    for (std::size_t i = 0; i < a.positions.size(); ++i) EXPECT_EQ(a.positions[i], b.positions[i]);
}

TEST(Annulus, CapacityOfUnitLogRatio)
{
    const auto ac = annulus_conjugate_single(std::exp(1.0), 1.5, 128, 256);
    EXPECT_NEAR(ac.capacity, kTwoPi, 0.01 * kTwoPi);
    const PolarGrid& g = *ac.grid;
    for (int j = 0; j < g.n_theta(); ++j) {
        EXPECT_NEAR(ac.psi[static_cast<Eigen::Index>(g.index(0, j))], 0.0, 1e-14);
        EXPECT_NEAR(ac.psi[static_cast<Eigen::Index>(g.index(g.n_r(), j))], 1.0, 1e-14);
    }
}

TEST(Annulus, NormalizationAndEvenness)
{
    const auto ac = annulus_conjugate_single(3.0, 1.6, 48, 96);
    EXPECT_NEAR(ac.gamma_mean, 0.0, 1e-10);
    const PolarGrid& g = *ac.grid;
    // pole on the negative x1-axis: theta -> -theta symmetry
    for (int i = 0; i <= g.n_r(); ++i)
        for (int j = 1; j < g.n_theta(); ++j) {
            const auto a = static_cast<Eigen::Index>(g.index(i, j)), b = static_cast<Eigen::Index>(g.index(i, -j));
            EXPECT_NEAR(ac.H[a], ac.H[b], 1e-9);
        }
}

TEST(Annulus, NeumannDataConvergeUnderRefinement)
{
    const auto c = annulus_conjugate_single(3.0, 1.8, 24, 48);
    const auto f = annulus_conjugate_single(3.0, 1.8, 48, 96);
    EXPECT_LT(f.gamma_flux_error, c.gamma_flux_error);
    EXPECT_LT(f.outer_flux_error, c.outer_flux_error + 1e-12);
    EXPECT_LT(f.gamma_flux_error, 0.2);
    EXPECT_LT(std::abs(f.flux_imbalance), 1e-6);
}

TEST(Annulus, BoundaryPoleVariant)
{
    const auto ac = annulus_conjugate_single(3.0, 1.0, 48, 96);
    ASSERT_EQ(ac.boundary_poles.size(), 1u);
    EXPECT_NEAR(ac.boundary_poles[0], kPi, 0.0);
    EXPECT_NEAR(ac.gamma_mean, 0.0, 1e-8);
    EXPECT_THROW(annulus_conjugate_single(3.0, 3.0, 16, 32), std::invalid_argument);
    EXPECT_THROW(annulus_conjugates(0.5, {}, {}, 16, 32), std::invalid_argument);
}

TEST(Expansion, SyntheticConstantsRecovered)
{
    std::vector<ExpansionRun> runs;
    const std::vector<std::pair<int, int>> counts = {{2, 0}, {0, 2}, {1, 1}, {2, 0}};
    const std::vector<double> eps = {0.1, 0.05, 0.025, 0.0125};
    for (std::size_t k = 0; k < counts.size(); ++k) {
        ExpansionRun r;
        r.eps = eps[k];
        r.lambda = std::pow(eps[k], -0.6);
        r.I = counts[k].first;
        r.J = counts[k].second;
        r.W = 0.1 * k;
        r.E = r.I * (kPi * std::abs(std::log(r.eps)) + 3.0) + r.J * (kTwoPi * std::log(r.lambda) + 5.0) + r.W;
        runs.push_back(r);
    }
    const auto f = expansion_fit(runs);
    EXPECT_TRUE(f.q_omega_estimable);
    EXPECT_TRUE(f.q_gamma_estimable);
    EXPECT_NEAR(f.Q_omega, 3.0, 1e-10);
    EXPECT_NEAR(f.Q_gamma, 5.0, 1e-10);
    for (double r : f.residuals) EXPECT_NEAR(r, 0.0, 1e-10);
}

TEST(Expansion, RankLogic)
{
    std::vector<ExpansionRun> interior;
    for (double e : {0.1, 0.05, 0.025}) interior.push_back({e, std::pow(e, -0.8), 2, 0, 1.0, 10.0});
    const auto a = expansion_fit(interior);
    EXPECT_TRUE(a.q_omega_estimable);
    EXPECT_FALSE(a.q_gamma_estimable);
    EXPECT_TRUE(std::isnan(a.Q_gamma));
    EXPECT_FALSE(a.note.empty());

    std::vector<ExpansionRun> prop;
    for (double e : {0.1, 0.05, 0.025}) prop.push_back({e, std::pow(e, -0.8), 1, 1, 1.0, 10.0});
    const auto b = expansion_fit(prop);
    EXPECT_TRUE(b.rank_deficient);
    EXPECT_FALSE(b.q_omega_estimable);
    EXPECT_THROW(expansion_fit({interior[0], interior[1]}), std::invalid_argument);
}

// vortex windings cancel against the reflected images, so the phase gradient decays at least like |z|^-2
TEST(Expansion, PhaseGradientDecays)
{
    const std::vector<cplx> p = {cplx(0.0, kT), cplx(0.0, -kT)};
    const double g1 = std::abs(exterior_phase_gradient(p, cplx(100.0, 0.0)));
    const double g2 = std::abs(exterior_phase_gradient(p, cplx(200.0, 0.0)));
    EXPECT_GT(g1 / g2, 3.9);
    EXPECT_LT(g1, 1e-3);
}
