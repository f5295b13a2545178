#include "support.hpp"

#include <gtest/gtest.h>

using namespace eqrom;
using eqrom::test::random_matrix;
using eqrom::test::random_vector;

namespace {

struct Desk {
    std::shared_ptr<const Mesh> mesh = eqrom::test::shared_plate(1, 1);
    HfModel model{mesh, BoundaryConditions::plate(), Loading{}};
    SparseMatrix k_bar = assemble_elastic_stiffness(*mesh, eqrom::test::centroid_params());
    const SparseMatrix& B() const { return model.constraints().B; }
};

const Desk& desk()
{
    static const Desk d;
    return d;
}

struct DeskRun {
    Trajectory traj;
    ReducedBasis zs;

    DeskRun()
    {
        auto params = eqrom::test::centroid_params();
        params.a_pui = 10.0;
        TimeGrid grid;
        grid.steps = 5;
        traj = hf_time_march(desk().model, params, grid, {});
        zs = pod(traj.stress_snapshots(), stress_inner_product(*desk().mesh), 1e-2);
    }
};

const DeskRun& run()
{
    static const DeskRun r;
    return r;
}

/// ‖r‖ in the dual of (ker B, K): one saddle solve and the K-norm of its solution.
double dual_norm(const Desk& d, const Vector& r)
{
    const auto [psi, lambda] = solve_saddle(d.k_bar, d.B(), r, Vector::Zero(d.B().rows()));
    return std::sqrt(psi.dot(d.k_bar * psi));
}

} // namespace

TEST(Riesz, ZeroModeGivesZeroElement)
{
    const auto& d = desk();
    Matrix modes = Matrix::Zero(d.mesh->stress_size(), 2);
    modes.col(1) = random_vector(d.mesh->stress_size(), 1);
    const Matrix psi = compute_riesz_elements(*d.mesh, d.k_bar, d.B(), modes, d.model.external_force());
    EXPECT_EQ(psi.col(0).norm(), 0.0);
    EXPECT_GT(psi.col(1).norm(), 0.0);
    EXPECT_LT((d.B() * psi).cwiseAbs().maxCoeff(), 1e-12 * psi.cwiseAbs().maxCoeff());
}

TEST(Riesz, MinimizesEnergyOverConstraintKernel)
{
    const auto& d = desk();
    const Vector zeta = random_vector(d.mesh->stress_size(), 2);
    const Vector f = nodal_force_of_stress(*d.mesh, zeta);
    const Vector psi = compute_riesz_elements(*d.mesh, d.k_bar, d.B(), zeta, d.model.external_force()).col(0);
    // KKT: K ψ − F lies in range(Bᵀ) and B ψ = 0
    const Matrix bt = Matrix(d.B()).transpose();
    const Vector g = d.k_bar * psi - f;
    const Vector lambda = bt.colPivHouseholderQr().solve(-g);
    EXPECT_LE((g + bt * lambda).norm(), 1e-9 * f.norm());
    EXPECT_LE((d.B() * psi).norm(), 1e-9 * psi.norm());
    auto energy = [&](const Vector& v) { return 0.5 * v.dot(d.k_bar * v) - v.dot(f); };
    const double e0 = energy(psi);
    for (unsigned s = 0; s < 10; ++s) {
        const Vector dv = eqrom::test::kernel_vector(d.B(), d.mesh->dof_count(), 50 + s);
        EXPECT_LE(e0, energy(psi + 1e-3 * psi.norm() / dv.norm() * dv));
    }
}

TEST(Gramian, MatchesDenseEvaluationAndIsPositive)
{
    const auto& d = desk();
    const Matrix modes = random_matrix(d.mesh->stress_size(), 3, 3);
    const auto data = build_indicator(*d.mesh, d.k_bar, d.B(), modes, d.model.external_force());
    ASSERT_EQ(data.gramian.rows(), 4);
    const Matrix dense = data.riesz.transpose() * Matrix(d.k_bar) * data.riesz;
    EXPECT_LT((data.gramian - dense).cwiseAbs().maxCoeff(), 1e-12 * dense.cwiseAbs().maxCoeff());
    EXPECT_TRUE(data.gramian.isApprox(data.gramian.transpose(), 0.0));
    for (Index i = 0; i < 4; ++i) {
        EXPECT_GT(data.gramian(i, i), 0.0);
    }
    EXPECT_NEAR(data.normalized_gramian()(3, 3), 1.0, 1e-13);
    const Matrix rtr = data.factor.transpose() * data.factor;
    EXPECT_LT((rtr - dense).cwiseAbs().maxCoeff(), 1e-12 * dense.cwiseAbs().maxCoeff());
    EXPECT_TRUE(data.factor.isUpperTriangular());
}

TEST(Gramian, LoadOnlyNormalizesToOne)
{
    const auto& d = desk();
    const auto data = build_indicator(*d.mesh, d.k_bar, d.B(), Matrix(d.mesh->stress_size(), 0),
                                      d.model.external_force());
    ASSERT_EQ(data.normalized_gramian().rows(), 1);
    EXPECT_NEAR(data.normalized_gramian()(0, 0), 1.0, 1e-14);
    const auto none = build_indicator(*d.mesh, d.k_bar, d.B(), Matrix(d.mesh->stress_size(), 0),
                                      Vector::Zero(d.mesh->dof_count()));
    EXPECT_THROW(none.normalized_gramian(), InputError);
    EXPECT_THROW(indicator_step(Vector(), 1.0, none), InputError);
}

TEST(Indicator, ZeroCoordinatesGiveUnitIndicatorAndZeroLoadGivesZero)
{
    const auto& d = desk();
    const auto data = build_indicator(*d.mesh, d.k_bar, d.B(), random_matrix(d.mesh->stress_size(), 2, 4),
                                      d.model.external_force());
    EXPECT_NEAR(indicator_step(Vector::Zero(2), 0.7, data), 1.0, 1e-14);
    EXPECT_EQ(indicator_step(Vector::Ones(2), 0.0, data), 0.0);
    EXPECT_THROW(indicator_step(Vector::Zero(3), 1.0, data), InputError);
}

TEST(Indicator, EquilibratedStressGivesNearZero)
{
    // a converged HF stress balances g·F_ext up to reactions, which vanish on ker B
    const auto& r = run();
    const auto& d = desk();
    const Vector s = r.traj.stress_snapshots().col(4);
    const auto data = build_indicator(*d.mesh, d.k_bar, d.B(), s, d.model.external_force());
    EXPECT_LT(indicator_step(Vector::Ones(1), r.traj.load_factors[4], data), 1e-6);
}

TEST(Indicator, AgreesWithBruteForceDualNormOnEveryStep)
{
    const auto& r = run();
    const auto& d = desk();
    ASSERT_GE(r.zs.size(), 1);
    const auto data = build_indicator(*d.mesh, d.k_bar, d.B(), r.zs.modes, d.model.external_force());
    const double load_norm = dual_norm(d, d.model.external_force());
    std::vector<Vector> alphas;
    for (int k = 0; k < r.traj.steps(); ++k) {
        const double g = r.traj.load_factors[static_cast<std::size_t>(k)];
        const Vector alpha = r.zs.project(r.traj.stress_snapshots().col(k));
        alphas.push_back(alpha);
        const Vector residual =
            nodal_force_of_stress(*d.mesh, r.zs.modes * alpha) - g * d.model.external_force();
        const double brute = dual_norm(d, residual) / (g * load_norm);
        const double gram = indicator_step(alpha, g, data);
        EXPECT_GT(brute, 0.0);
        EXPECT_NEAR(gram, brute, 1e-8 * brute) << "step " << k;
    }
    const auto trace = evaluate_indicator(alphas, r.traj.load_factors, data);
    double mean_sq = 0.0;
    for (double v : trace.per_step) {
        mean_sq += v * v;
    }
    EXPECT_NEAR(trace.average, std::sqrt(mean_sq / trace.per_step.size()), 1e-15);
}

TEST(Indicator, AgreesWithBruteForceDualNormWithFullHfStressBasis)
{
    const auto& r = run();
    const auto& d = desk();
    const auto zs = pod(r.traj.stress_snapshots(), stress_inner_product(*d.mesh), 1e-12);
    const auto data = build_indicator(*d.mesh, d.k_bar, d.B(), zs.modes, d.model.external_force());
    const double load_norm = dual_norm(d, d.model.external_force());
    for (int k = 0; k < r.traj.steps(); ++k) {
        const double g = r.traj.load_factors[static_cast<std::size_t>(k)];
        const Vector alpha = zs.project(r.traj.stress_snapshots().col(k));
        const Vector residual = nodal_force_of_stress(*d.mesh, zs.modes * alpha) - g * d.model.external_force();
        const double brute = dual_norm(d, residual) / (g * load_norm);
        // the residual is at round-off here, so both sides carry an absolute floor of order ε
        EXPECT_NEAR(indicator_step(alpha, g, data), brute, 1e-8 * brute + 1e-13) << "step " << k;
        EXPECT_LT(brute, 1e-6);
    }
}

TEST(Indicator, InvariantUnderOrthogonalMixingOfStressBasis)
{
    const auto& r = run();
    const auto& d = desk();
    const Index n = r.zs.size();
    const Matrix q = random_matrix(n, n, 5).householderQr().householderQ();
    const auto a = build_indicator(*d.mesh, d.k_bar, d.B(), r.zs.modes, d.model.external_force());
    const auto b = build_indicator(*d.mesh, d.k_bar, d.B(), r.zs.modes * q, d.model.external_force());
    const Vector alpha = r.zs.project(r.traj.stress_snapshots().col(2));
    const double g = r.traj.load_factors[2];
    EXPECT_NEAR(indicator_step(alpha, g, a), indicator_step(q.transpose() * alpha, g, b),
                1e-9 * indicator_step(alpha, g, a));
}

TEST(Indicator, ScalingLoadAndCoordinatesTogetherLeavesItUnchanged)
{
    const auto& r = run();
    const auto& d = desk();
    const auto data = build_indicator(*d.mesh, d.k_bar, d.B(), r.zs.modes, d.model.external_force());
    const Vector alpha = r.zs.project(r.traj.stress_snapshots().col(1));
    const double g = r.traj.load_factors[1];
    EXPECT_NEAR(indicator_step(3.0 * alpha, 3.0 * g, data), indicator_step(alpha, g, data), 1e-12);
}
