#include <gtest/gtest.h>

#include "common.hpp"
#include "glanchor/energy.hpp"
#include "glanchor/renorm.hpp"
#include "glanchor/vortex.hpp"

using namespace glanchor;

namespace {

struct Synthetic {
    GeometrySpec spec;
    GridPtr grid;
    AnchoringParams p{0.05, 0.8, 1.0};
    DefectSet truth;
    OrderParameter u;
};

Synthetic synthetic(std::uint64_t seed)
{
    Synthetic s;
    s.spec = glanchor::test::spec_of(Problem::III, 8.0, 2);
    s.grid = build_grid(s.spec, 96, 192, 4.0);
    std::mt19937_64 rng(seed);
    s.truth = glanchor::test::random_configuration(rng, 2, 0.75, 3.0);
    s.u = canonical_map(s.truth, s.spec, s.grid, s.p, {s.p.eps, std::pow(s.p.eps, s.p.alpha)});
    return s;
}

} // namespace

class SyntheticField : public ::testing::TestWithParam<int> {};

TEST_P(SyntheticField, WindingAdditivity)
{
    const auto s = synthetic(1000 + GetParam());
    const PolarGrid& g = *s.grid;
    std::mt19937_64 rng(GetParam());
    std::uniform_int_distribution<int> I(0, g.n_r() - 1), J(0, g.n_theta() - 1), L(2, 60);
    for (int t = 0; t < 5; ++t) {
        const int i0 = I(rng), i1 = std::min(g.n_r(), i0 + L(rng)), j0 = J(rng), j1 = j0 + L(rng);
        if (i1 <= i0) continue;
        int sum = 0;
        for (int i = i0; i < i1; ++i)
            for (int j = j0; j < j1; ++j) sum += plaquette_winding(s.u, {i, j}).value();
        EXPECT_NEAR(detail::rectangle_winding(s.u, i0, i1, j0, j1), sum, 1e-9);
    }
    // whole ring: interior degrees plus the Gamma winding of g
    EXPECT_NEAR(detail::ring_winding(s.u, g.n_r()), 0.0, 1e-9);
}

TEST_P(SyntheticField, DetectionExact)
{
    const auto s = synthetic(1000 + GetParam());
    const PolarGrid& g = *s.grid;
    const auto ds = detect(s.u, s.p);
    ASSERT_EQ(ds.interior.size(), s.truth.interior.size());
    ASSERT_EQ(ds.boundary.size(), s.truth.boundary.size());
    EXPECT_TRUE(ds.accounting_ok);
    EXPECT_EQ(ds.unresolved, 0);
    for (const auto& q : s.truth.interior) {
        double best = 1e9;
        int deg = 0;
        for (const auto& d : ds.interior) {
            const double dist = std::hypot(d.x - q.x, d.y - q.y);
            if (dist < best) {
                best = dist;
                deg = d.d;
            }
        }
        int i = 0;
        const double r = std::hypot(q.x, q.y);
        while (g.radius(i + 1) < r) ++i;
        const double cell = std::hypot(g.radius(i + 1) - g.radius(i), g.radius(i + 1) * g.dtheta());
        EXPECT_LT(best, cell);
        EXPECT_EQ(deg, q.d);
    }
    for (const auto& q : s.truth.boundary) {
        double best = 1e9;
        int deg = 0;
        for (const auto& d : ds.boundary) {
            const double dist = std::abs(wrap_angle(d.theta - q.theta));
            if (dist < best) {
                best = dist;
                deg = d.D;
            }
        }
        EXPECT_LT(best, g.dtheta());
        EXPECT_EQ(deg, q.D);
    }
}

INSTANTIATE_TEST_SUITE_P(Fifty, SyntheticField, ::testing::Range(0, 50));

TEST(Properties, QTensorSymmetricTraceless)
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int t = 0; t < 2000; ++t) {
        const cplx u(U(rng), U(rng));
        double n1, n2;
        const bool def = director_of(u, n1, n2);
        const auto q = qtensor3(n1, n2, std::abs(u), def, 0.5 + U(rng) * 0.4);
        EXPECT_EQ(q[0][0] + q[1][1] + q[2][2], 0.0);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) EXPECT_EQ(q[a][b], q[b][a]);
    }
}

TEST(Properties, GradientConsistencyRandomFields)
{
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const auto prob = static_cast<Problem>(seed % 3);
        auto g = glanchor::test::grid_of(prob, prob == Problem::I ? 1.0 : 3.0, 12, 24);
        AnchoringParams p{0.15, 0.5, 2.0};
        auto u = glanchor::test::random_field(g, p, seed, 0.6);
        const auto G = energy_gradient(u, p);
        std::mt19937_64 rng(seed + 100);
        std::normal_distribution<double> N;
        std::vector<cplx> du(u.size());
        for (auto& v : du) v = cplx(N(rng), N(rng));
        const double h = 1e-5;
        OrderParameter a = u, b = u;
        for (std::size_t k = 0; k < u.size(); ++k) {
            a[k] += h * du[k];
            b[k] -= h * du[k];
        }
        const double fd = (energy(a, p).total - energy(b, p).total) / (2 * h);
        const double an = pairing(G, du);
        EXPECT_LT(std::abs(fd - an), 1e-6 * std::abs(an)) << "seed " << seed;
    }
}

TEST(Properties, RenormRotationChangesOnlyConstraint)
{
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        const int D = 1 + t % 3;
        std::vector<cplx> p;
        std::vector<double> ang;
        for (int k = 0; k < D; ++k) {
            p.push_back(std::polar(1.2 + 2.0 * U(rng), kTwoPi * U(rng)));
            ang.push_back(kTwoPi * U(rng));
        }
        const double a = kTwoPi * U(rng);
        std::vector<cplx> q;
        std::vector<double> bng;
        for (int k = 0; k < D; ++k) {
            q.push_back(p[k] * std::polar(1.0, a));
            bng.push_back(ang[k] + a);
        }
        const double w = w_interior(p).value, wr = w_interior(q).value;
        if (std::isfinite(w)) {
            EXPECT_NEAR(wr, w, 1e-10 * (1.0 + std::abs(w)));
        }
        const double wb = w_boundary(ang, 0.0).value;
        if (std::isfinite(wb)) {
            EXPECT_NEAR(w_boundary(bng, 0.0).value, wb, 1e-10 * (1.0 + std::abs(wb)));
        }
    }
}
