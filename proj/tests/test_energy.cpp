#include <gtest/gtest.h>

#include "common.hpp"
#include "glanchor/energy.hpp"

using namespace glanchor;
using glanchor::test::grid_of;
using glanchor::test::random_field;
using glanchor::test::spec_of;

TEST(Energy, TrivialMinimum)
{
    for (auto p : {Problem::I, Problem::II, Problem::III}) {
        auto g = grid_of(p, p == Problem::I ? 1.0 : 4.0, 16, 32, 0);
        OrderParameter u(g, {0.05, 0.8, 1.0});
        const auto e = energy(u, u.params);
        EXPECT_EQ(e.total, 0.0);
        const auto r = el_residual(u, u.params);
        EXPECT_EQ(r.sup(), 0.0);
    }
}

TEST(Energy, ZeroFieldOnAnnulus)
{
    auto g = build_grid(spec_of(Problem::II, 2.0), 32, 64, 1.0);
    AnchoringParams p{0.1, 0.5, 2.0};
    OrderParameter u(g, p);
    std::fill(u.values.begin(), u.values.end(), cplx(0.0, 0.0));
    const auto e = energy(u, p);
    EXPECT_EQ(e.dirichlet, 0.0);
    EXPECT_NEAR(e.potential, 3.0 * kPi / (4.0 * p.eps * p.eps), 1e-10);
    EXPECT_NEAR(e.anchoring, 0.5 * p.lambda() * kTwoPi, 1e-10);
    EXPECT_EQ(e.total, e.dirichlet + e.potential + e.anchoring);
    // (|u|^2 - 1) u vanishes at u = 0, so only Gamma carries a residual
    const auto r = el_residual(u, p);
    EXPECT_EQ(r.interior_sup, 0.0);
    EXPECT_NEAR(r.boundary_sup, p.lambda(), 1e-12);
}

TEST(Energy, LambdaTracksParameters)
{
    AnchoringParams p{0.05, 0.8, 1.0};
    const double l1 = p.lambda();
    p.K = 2.0;
    EXPECT_DOUBLE_EQ(p.lambda(), 2.0 * l1);
    p.eps = 0.1;
    EXPECT_DOUBLE_EQ(p.lambda(), 2.0 * std::pow(0.1, -0.8));
    EXPECT_THROW((AnchoringParams{0.0, 0.5, 1.0}.validate()), std::invalid_argument);
    EXPECT_THROW((AnchoringParams{0.1, 1.5, 1.0}.validate()), std::invalid_argument);
    EXPECT_THROW((AnchoringParams{0.1, 0.5, 0.0}.validate()), std::invalid_argument);
}

TEST(Energy, TermsNonNegativeAndSum)
{
    auto g = grid_of(Problem::III, 8.0, 24, 48);
    AnchoringParams p{0.1, 0.8, 1.0};
    auto u = random_field(g, p, 11);
    const auto e = energy(u, p);
    EXPECT_GE(e.dirichlet, 0.0);
    EXPECT_GE(e.potential, 0.0);
    EXPECT_GE(e.anchoring, 0.0);
    EXPECT_EQ(e.total, e.dirichlet + e.potential + e.anchoring);
}

TEST(LocalEnergy, WholeDomainAndAdditivity)
{
    auto g = grid_of(Problem::III, 8.0, 24, 48);
    AnchoringParams p{0.1, 0.8, 1.0};
    auto u = random_field(g, p, 12);
    const auto e = energy(u, p);
    const auto w = local_energy(u, p, [](std::size_t) { return true; });
    EXPECT_NEAR(w.total, e.total, 1e-12 * e.total);
    auto inA = [&](std::size_t k) { return g->x(k) > 0.3 * g->y(k); };
    const auto a = local_energy(u, p, inA);
    const auto b = local_energy(u, p, [&](std::size_t k) { return !inA(k); });
    EXPECT_NEAR(a.total + b.total, e.total, 1e-12 * e.total);
    EXPECT_NEAR(a.anchoring + b.anchoring, e.anchoring, 1e-12 * e.total);
}

TEST(LocalEnergy, DensitySumsToRegionEnergy)
{
    for (auto prob : {Problem::I, Problem::III}) {
        auto g = grid_of(prob, prob == Problem::I ? 1.0 : 8.0, 24, 48);
        AnchoringParams p{0.1, 0.5, 2.0};
        auto u = random_field(g, p, 31);
        const auto dens = energy_density(u, p);
        const cplx x0 = g->z(g->index(prob == Problem::I ? 20 : 1, 7));
        auto ball = [&](std::size_t k) { return std::abs(g->z(k) - x0) < 0.4; };
        double s = 0.0, all = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) {
            all += dens[k];
            if (ball(k)) s += dens[k];
        }
        const double e = energy(u, p).total;
        EXPECT_NEAR(all, e, 1e-12 * e);
        EXPECT_NEAR(s, local_energy(u, p, ball).total, 1e-12 * e);
    }
}

// central differences against the pairing with the assembled gradient
TEST(Gradient, MatchesFiniteDifferences)
{
    for (auto prob : {Problem::I, Problem::II, Problem::III}) {
        auto g = grid_of(prob, prob == Problem::I ? 1.0 : 4.0, 16, 32);
        AnchoringParams p{0.2, 0.8, 1.5};
        auto u = random_field(g, p, 21);
        const auto G = energy_gradient(u, p);
        std::mt19937_64 rng(5);
        std::normal_distribution<double> N;
        for (int t = 0; t < 5; ++t) {
            std::vector<cplx> du(u.size());
            for (auto& v : du) v = cplx(N(rng), N(rng));
            const double h = 1e-5;
            OrderParameter up = u, um = u;
            for (std::size_t k = 0; k < u.size(); ++k) {
                up[k] += h * du[k];
                um[k] -= h * du[k];
            }
            const double fd = (energy(up, p).total - energy(um, p).total) / (2.0 * h);
            const double an = pairing(G, du);
            EXPECT_NEAR(fd, an, 1e-6 * std::abs(an)) << to_string(prob) << " t=" << t;
        }
    }
}

TEST(Gradient, ResidualIsWeightedGradient)
{
    auto g = grid_of(Problem::II, 3.0, 16, 32);
    AnchoringParams p{0.1, 0.5, 1.0};
    auto u = random_field(g, p, 4);
    const auto G = energy_gradient(u, p);
    const auto r = el_residual(u, p);
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (g->is_dirichlet(k)) {
            EXPECT_EQ(r.values[k], cplx(0.0, 0.0));
            continue;
        }
        const double w = g->is_gamma(k) ? g->boundary_weight() : g->area_weight(k);
        EXPECT_LT(std::abs(r.values[k] * w - G[k]), 1e-12 * (1.0 + std::abs(G[k])));
    }
}

// -Lap_h of a smooth function approaches the continuum Laplacian at interior nodes
TEST(Laplacian, ConsistentWithContinuum)
{
    std::vector<double> err;
    for (int n : {32, 64, 128}) {
        auto g = build_grid(spec_of(Problem::II, 3.0), n, 2 * n, 1.0);
        AnchoringParams p{1e3, 0.5, 1e-12}; // potential and anchoring negligible
        OrderParameter u(g, p);
        for (std::size_t k = 0; k < u.size(); ++k) u[k] = cplx(g->x(k) * g->x(k) * g->y(k), 0.0);
        auto G = energy_gradient(u, p);
        double e = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) {
            const double r = g->radius(g->ring_of(k));
            if (r < 1.5 || r > 2.5) continue;
            const double lap = 2.0 * g->y(k); // Lap(x^2 y)
            const double pot = g->area_weight(k) * (std::norm(u[k]) - 1.0) * u[k].real() / (p.eps * p.eps);
            e = std::max(e, std::abs(-(G[k].real() - pot) / g->area_weight(k) - lap));
        }
        err.push_back(e);
    }
    EXPECT_GT(err[0] / err[1], 1.8);
    EXPECT_GT(err[1] / err[2], 1.8);
}

TEST(Energy, RotationEquivariance)
{
    auto s = spec_of(Problem::III, 8.0, 2);
    auto g = build_grid(s, 24, 64, 4.0);
    AnchoringParams p{0.1, 0.8, 1.0};
    auto u = random_field(g, p, 8, 0.5);
    const double e0 = energy(u, p).total;
    for (int shift : {1, 5, 17}) {
        const double phi = s.anchor_degree * shift * g->dtheta();
        OrderParameter v(g, p);
        for (std::size_t k = 0; k < u.size(); ++k)
            v[k] = std::polar(1.0, -phi) * u[g->index(g->ring_of(k), g->angle_of(k) + shift)];
        EXPECT_NEAR(energy(v, p).total, e0, 1e-11 * e0) << "shift " << shift;
    }
}
