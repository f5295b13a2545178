#include "support.hpp"

#include <gtest/gtest.h>

using namespace eqrom;
using eqrom::test::random_matrix;
using eqrom::test::random_vector;

namespace {

SparseMatrix sparse_spd(Index n, unsigned seed)
{
    const Matrix a = random_matrix(n, n, seed);
    Matrix k = a * a.transpose() + static_cast<double>(n) * Matrix::Identity(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (std::abs(i - j) > 2) {
                k(i, j) = 0.0;
            }
        }
    }
    return k.sparseView();
}

std::pair<Vector, Vector> dense_saddle(const Matrix& k, const Matrix& b, const Vector& f, const Vector& g)
{
    const Index n = k.rows(), m = b.rows();
    Matrix a = Matrix::Zero(n + m, n + m);
    a.topLeftCorner(n, n) = k;
    a.topRightCorner(n, m) = b.transpose();
    a.bottomLeftCorner(m, n) = b;
    Vector rhs(n + m);
    rhs << f, g;
    const Vector x = a.fullPivLu().solve(rhs);
    return {x.head(n), x.tail(m)};
}

struct PlateFixture {
    std::shared_ptr<const Mesh> mesh = eqrom::test::shared_plate(1, 1);
    HfModel model{mesh, BoundaryConditions::plate(), Loading{}};
    ElastoplasticParams params = eqrom::test::centroid_params();
};

} // namespace

TEST(Saddle, MatchesDenseOracle)
{
    const Index n = 12;
    const SparseMatrix k = sparse_spd(n, 1);
    const Matrix bd = random_matrix(3, n, 2);
    const Vector f = random_vector(n, 3), g = random_vector(3, 4);
    const auto [x, l] = solve_saddle(k, bd.sparseView(), f, g);
    const auto [xo, lo] = dense_saddle(Matrix(k), bd, f, g);
    EXPECT_LT((x - xo).norm(), 1e-11 * xo.norm());
    EXPECT_LT((l - lo).norm(), 1e-11 * lo.norm());
    EXPECT_LT((bd * x - g).norm(), 1e-12);
}

TEST(Saddle, EmptyConstraintsReduceToLinearSolve)
{
    const Index n = 9;
    const SparseMatrix k = sparse_spd(n, 5);
    const Vector f = random_vector(n, 6);
    const auto [x, l] = solve_saddle(k, SparseMatrix(0, n), f, Vector());
    EXPECT_EQ(l.size(), 0);
    EXPECT_LT((Matrix(k) * x - f).norm(), 1e-12 * f.norm());
}

TEST(Saddle, ZeroRightHandSideGivesZero)
{
    const Index n = 8;
    const Matrix bd = random_matrix(2, n, 8);
    const auto [x, l] = solve_saddle(sparse_spd(n, 7), bd.sparseView(), Vector::Zero(n), Vector::Zero(2));
    EXPECT_EQ(x.norm(), 0.0);
    EXPECT_EQ(l.norm(), 0.0);
}

TEST(Saddle, SingularSystemThrows)
{
    const Index n = 6;
    SparseMatrix k(n, n);
    EXPECT_THROW(solve_saddle(k, SparseMatrix(0, n), Vector::Ones(n), Vector()), SolverError);
}

TEST(Saddle, RefactorizationReusesPatternWithNewValues)
{
    const Index n = 10;
    const Matrix bd = random_matrix(2, n, 9);
    SaddleSolver s(bd.sparseView());
    const Vector f = random_vector(n, 10), g = random_vector(2, 11);
    for (unsigned seed : {12u, 13u}) {
        const SparseMatrix k = sparse_spd(n, seed);
        s.factorize(k);
        const auto [x, l] = s.solve(f, g);
        EXPECT_LT((x - dense_saddle(Matrix(k), bd, f, g).first).norm(), 1e-11 * x.norm());
    }
}

TEST(Newton, ZeroLoadReturnsZeroWithoutIterating)
{
    PlateFixture p;
    const auto r = newton_solve(p.model, Vector::Zero(p.mesh->dof_count()), Vector(), p.model.initial_states(), 0.0,
                                p.params, {});
    EXPECT_EQ(r.iterations, 0);
    EXPECT_EQ(r.u.norm(), 0.0);
}

TEST(Newton, ElasticStepEqualsLinearSaddleSolve)
{
    PlateFixture p;
    const double g = 0.05; // well below yield
    const auto r = newton_solve(p.model, Vector::Zero(p.mesh->dof_count()), Vector(), p.model.initial_states(), g,
                                p.params, {});
    for (const auto& s : r.states) {
        ASSERT_EQ(s.p, 0.0);
    }
    const SparseMatrix k = assemble_elastic_stiffness(*p.mesh, p.params);
    const auto& B = p.model.constraints().B;
    const auto [u, l] = solve_saddle(k, B, g * p.model.external_force(), Vector::Zero(B.rows()));
    EXPECT_LT((r.u - u).lpNorm<Eigen::Infinity>(), 1e-6 * u.lpNorm<Eigen::Infinity>());
    EXPECT_LE(r.iterations, 2);
}

TEST(Newton, ElasticResponseIndependentOfHardeningParameters)
{
    PlateFixture p;
    auto soft = p.params;
    soft.a_pui = 0.1;
    auto hard = p.params;
    hard.a_pui = 1000.0;
    const Vector u0 = Vector::Zero(p.mesh->dof_count());
    const auto a = newton_solve(p.model, u0, Vector(), p.model.initial_states(), 0.05, soft, {});
    const auto b = newton_solve(p.model, u0, Vector(), p.model.initial_states(), 0.05, hard, {});
    EXPECT_TRUE(a.u == b.u);
}

TEST(TimeMarch, PlasticTrajectoryInvariants)
{
    PlateFixture p;
    p.params.a_pui = 10.0;
    TimeGrid grid;
    grid.steps = 6;
    const auto t = hf_time_march(p.model, p.params, grid, {});
    ASSERT_EQ(t.steps(), 6);
    const auto& B = p.model.constraints().B;
    bool yielded = false;
    for (int k = 0; k < t.steps(); ++k) {
        EXPECT_DOUBLE_EQ(t.load_factors[static_cast<std::size_t>(k)], (k + 1) / 6.0);
        const Vector& u = t.displacements[static_cast<std::size_t>(k)];
        EXPECT_LT((B * u).norm(), 1e-12 * u.norm());
        for (std::size_t i = 0; i < t.states[0].size(); ++i) {
            const double pk = t.states[static_cast<std::size_t>(k)][i].p;
            if (k > 0) {
                EXPECT_GE(pk, t.states[static_cast<std::size_t>(k - 1)][i].p);
            }
            yielded |= pk > 0.0;
        }
    }
    EXPECT_TRUE(yielded);
    EXPECT_EQ(t.stress_snapshots().rows(), p.mesh->stress_size());
    EXPECT_EQ(t.displacement_snapshots().cols(), 6);
}

TEST(TimeMarch, ReactionsBalanceAppliedLoad)
{
    PlateFixture p;
    TimeGrid grid;
    grid.steps = 3;
    const auto t = hf_time_march(p.model, p.params, grid, {});
    const auto& B = p.model.constraints().B;
    // R + Bᵀλ = F_ext and R is self-equilibrated, so Bᵀλ carries the whole applied load
    const Vector reaction = B.transpose() * t.multipliers.back();
    const Vector f = p.model.external_force();
    double fy = 0.0, ry = 0.0;
    for (Index n = 0; n < p.mesh->node_count(); ++n) {
        fy += f[3 * n + 1];
        ry += reaction[3 * n + 1];
    }
    EXPECT_NEAR(fy, 150.0 * 10.0, 1e-9);
    EXPECT_NEAR(ry, fy, 1e-6 * fy);
}

TEST(TimeMarch, NewtonConvergesSuperlinearlyInPlasticSteps)
{
    PlateFixture p;
    p.params.a_pui = 10.0;
    const Vector u0 = Vector::Zero(p.mesh->dof_count());
    NewtonConfig cfg;
    cfg.eps_newt = 1e-12;
    const auto r = newton_solve(p.model, u0, Vector(), p.model.initial_states(), 1.0, p.params, cfg);
    const auto& rn = r.residual_norms;
    ASSERT_GE(rn.size(), 3u);
    bool plastic = false;
    for (const auto& s : r.states) {
        plastic |= s.p > 0.0;
    }
    ASSERT_TRUE(plastic);
    // in the asymptotic range the error exponent exceeds one
    int checked = 0;
    for (std::size_t i = 1; i + 1 < rn.size(); ++i) {
        if (rn[i] < 1e-3 && rn[i + 1] > 1e-14) {
            EXPECT_GT(std::log(rn[i + 1]) / std::log(rn[i]), 1.3) << "iterate " << i;
            ++checked;
        }
    }
    EXPECT_GT(checked, 0);
}

TEST(TimeMarch, NonConvergenceSurfacesAfterHalvings)
{
    PlateFixture p;
    p.params.a_pui = 0.1;
    NewtonConfig cfg;
    cfg.max_iters = 1;
    cfg.max_halvings = 1;
    TimeGrid grid;
    grid.steps = 1;
    EXPECT_THROW(hf_time_march(p.model, p.params, grid, cfg), SolverError);
    cfg.eps_newt = 2.0;
    EXPECT_THROW(hf_time_march(p.model, p.params, grid, cfg), InputError);
}
