#include <gtest/gtest.h>

#include "common.hpp"
#include "glanchor/solver.hpp"

using namespace glanchor;
using glanchor::test::grid_of;
using glanchor::test::spec_of;

namespace {

void expect_monotone(const SolveReport& r)
{
    for (std::size_t i = 1; i < r.history.size(); ++i) {
        const double prev = r.history[i - 1].e.total;
        EXPECT_LE(r.history[i].e.total, prev + 1e-13 * std::abs(prev)) << "iteration " << r.history[i].iter;
    }
}

} // namespace

TEST(Solve, TrivialDegreeFromRandomStart)
{
    for (auto prob : {Problem::I, Problem::II, Problem::III}) {
        auto s = spec_of(prob, prob == Problem::I ? 1.0 : 4.0, 0);
        auto g = build_grid(s, 16, 32, default_radial_stretch(prob));
        AnchoringParams p{0.2, 0.8, 1.0};
        SolveConfig c;
        c.init = Initializer::Random;
        c.seed = 9;
        const auto r = solve(s, g, p, c);
        EXPECT_TRUE(r.converged) << to_string(prob) << " " << r.stop_reason;
        EXPECT_LT(r.energy.total, 1e-8);
        for (std::size_t k = 0; k < r.u.size(); ++k) EXPECT_LT(std::abs(r.u[k] - 1.0), 1e-4);
        expect_monotone(r);
    }
}

TEST(Solve, AnchoredExteriorSmallGrid)
{
    auto s = spec_of(Problem::III, 8.0, 2);
    auto g = build_grid(s, 32, 64, 4.0);
    AnchoringParams p{0.2, 0.8, 1.0};
    SolveConfig c;
    const auto r = solve(s, g, p, c);
    ASSERT_TRUE(r.converged) << r.stop_reason;
    EXPECT_LE(r.residual, c.residual_tolerance(p.eps));
    EXPECT_LE(r.max_modulus, 1.0 + 1e-8);
    for (int j = 0; j < g->n_theta(); ++j) EXPECT_EQ(r.u[g->index(g->n_r(), j)], cplx(1.0, 0.0));
    expect_monotone(r);
    EXPECT_EQ(r.history.front().iter, 0);
    EXPECT_NEAR(r.history.back().e.total, r.energy.total, 1e-12 * r.energy.total);
    EXPECT_TRUE(std::isfinite(r.phi_star));
    EXPECT_TRUE(check_apriori(r).pass);
}

TEST(Solve, GradientFlowDecreasesEnergy)
{
    auto s = spec_of(Problem::II, 2.0, 1);
    auto g = build_grid(s, 16, 32, 1.0);
    AnchoringParams p{0.3, 0.5, 1.0};
    SolveConfig c;
    c.method = Method::GradientFlow;
    c.max_iters = 300;
    const auto r = solve(s, g, p, c);
    expect_monotone(r);
    EXPECT_LT(r.energy.total, r.history.front().e.total);
}

TEST(Solve, FixedStepGradientFlowAlsoMonotone)
{
    auto s = spec_of(Problem::I, 1.0, 1);
    auto g = build_grid(s, 12, 32, 1.0);
    AnchoringParams p{0.3, 0.5, 1.0};
    SolveConfig c;
    c.method = Method::GradientFlow;
    c.backtracking = false;
    c.max_iters = 100;
    const auto r = solve(s, g, p, c);
    expect_monotone(r);
}

TEST(Solve, RejectsNonFiniteStart)
{
    auto g = grid_of(Problem::II, 2.0, 8, 16);
    OrderParameter u(g);
    u[5] = cplx(std::numeric_limits<double>::quiet_NaN(), 0.0);
    EXPECT_THROW(solve_from(u, {}, {}), SolverError);
}

TEST(Solve, RejectsInconsistentInput)
{
    SolveConfig c;
    c.max_iters = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.max_iters = 10;
    c.tol_e = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    auto g = grid_of(Problem::II, 2.0, 8, 16);
    EXPECT_THROW(solve(spec_of(Problem::III, 2.0), g, {}, SolveConfig{}), std::invalid_argument);
}

TEST(Apriori, ConstantField)
{
    auto g = grid_of(Problem::III, 4.0, 8, 16);
    SolveReport r;
    r.u = OrderParameter(g);
    r.c0_emp = gradient_bound(r.u, 0.1);
    const auto a = check_apriori(r);
    EXPECT_TRUE(a.pass);
    EXPECT_EQ(a.max_modulus, 1.0);
    EXPECT_EQ(a.c0_emp, 0.0);
    r.u[7] = 1.5;
    const auto b = check_apriori(r);
    EXPECT_FALSE(b.pass);
    EXPECT_EQ(b.offending_node, 7u);
    EXPECT_DOUBLE_EQ(c0_ratio({1.0, 2.0, 1.5}), 2.0);
}

TEST(Multistart, KeepsLowerEnergy)
{
    auto s = spec_of(Problem::II, 2.0, 0);
    auto g = build_grid(s, 12, 24, 1.0);
    AnchoringParams p{0.3, 0.5, 1.0};
    SolveConfig c;
    c.max_iters = 1; // neither run converges; the lower final energy wins
    OrderParameter a(g, p), b(g, p);
    for (auto& v : a.values) v = 0.2;
    for (auto& v : b.values) v = 0.9;
    const auto m = solve_multistart({{"far", a}, {"near", b}}, p, c);
    ASSERT_EQ(m.branches.size(), 2u);
    EXPECT_EQ(m.best.initializer, "near");
    EXPECT_LE(m.best.energy.total, std::min(m.branches[0].energy, m.branches[1].energy));
}

TEST(Truncation, TrivialDegreeGivesZero)
{
    auto s = spec_of(Problem::III, 4.0, 0);
    AnchoringParams p{0.2, 0.8, 1.0};
    const auto t = truncation_sweep(s, p, {4.0, 8.0, 16.0}, SolveConfig{}, 8, 32);
    for (double e : t.energies) EXPECT_LT(e, 1e-8);
    EXPECT_TRUE(t.monotone);
}

TEST(Truncation, NestedGridsAndValidation)
{
    const auto r = log_radii(1.0, 8.0, 4);
    ASSERT_EQ(r.size(), 13u);
    EXPECT_DOUBLE_EQ(r[4], 2.0);
    EXPECT_EQ(r.back(), 8.0);
    EXPECT_THROW(log_radii(1.0, 6.0, 4), std::invalid_argument);
    EXPECT_THROW(truncation_sweep(spec_of(Problem::II, 4.0), {}, {4.0}, {}, 4, 32), std::invalid_argument);
    EXPECT_THROW(truncation_sweep(spec_of(Problem::III, 4.0), {}, {8.0, 4.0}, {}, 4, 32), std::invalid_argument);
}
