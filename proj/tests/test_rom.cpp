#include "support.hpp"

#include <gtest/gtest.h>

using namespace eqrom;

namespace {

struct Offline {
    std::shared_ptr<const Mesh> mesh = eqrom::test::shared_plate(1, 1);
    HfModel model{mesh, BoundaryConditions::plate(), Loading{}};
    ElastoplasticParams params = [] {
        auto p = eqrom::test::centroid_params();
        p.a_pui = 10.0;
        return p;
    }();
    TimeGrid grid = [] {
        TimeGrid g;
        g.steps = 5;
        return g;
    }();
    SparseMatrix k_bar = assemble_elastic_stiffness(*mesh, eqrom::test::centroid_params());
    Trajectory traj = hf_time_march(model, params, grid, {});
    ReducedBasis zu = pod(traj.displacement_snapshots(),
                          InnerProduct::stiffness(std::make_shared<const SparseMatrix>(k_bar)), 1e-4);
    ReducedBasis zs = pod(traj.stress_snapshots(), stress_inner_product(*mesh), 1e-4);

    std::shared_ptr<const RomArtifacts> with_delta(double delta, const ReducedBasis& u) const
    {
        return std::make_shared<const RomArtifacts>(
            build_artifacts(model, eqrom::test::centroid_params(), u, zs, traj.stress_snapshots(), k_bar, delta));
    }

    std::shared_ptr<const RomArtifacts> full() const
    {
        RomArtifacts a;
        a.mesh = mesh;
        a.constraints = model.constraints();
        a.loading = model.loading();
        a.zu = zu;
        a.zs = zs;
        a.eq = full_quadrature(*mesh, model.loading());
        a.indicator = build_indicator(*mesh, k_bar, model.constraints().B, zs.modes, model.external_force());
        a.reference = eqrom::test::centroid_params();
        return std::make_shared<const RomArtifacts>(std::move(a));
    }
};

const Offline& offline()
{
    static const Offline o;
    return o;
}

NewtonConfig tight()
{
    NewtonConfig c;
    c.eps_newt = 1e-12;
    return c;
}

/// Plain Galerkin ROM on the full mesh: Newton on Zᵀ(R(Zα) − g F_ext) with Zᵀ K Z.
std::vector<Vector> galerkin_oracle(const Offline& o, const NewtonConfig& cfg)
{
    const Mesh& m = *o.mesh;
    const Matrix& z = o.zu.modes;
    const ElementSet all = ElementSet::all(m);
    const MaterialOptions mat{cfg.tangent, cfg.return_map};
    Vector alpha = Vector::Zero(z.cols());
    StateField states = o.model.initial_states();
    std::vector<Vector> out;
    for (int k = 1; k <= o.grid.steps; ++k) {
        const double g = o.grid.load_factor(k);
        const Vector u_prev = z * alpha;
        const Vector f = g * (z.transpose() * o.model.external_force());
        AssemblyResult asmb;
        for (int it = 0; it < 50; ++it) {
            asmb = assemble_internal(m, all, z * alpha, u_prev, states, o.params, mat, true);
            const Vector r = z.transpose() * asmb.internal_force - f;
            if (r.norm() <= 1e-13 * f.norm()) {
                break;
            }
            const Matrix jr = z.transpose() * (asmb.jacobian * z);
            alpha -= jr.partialPivLu().solve(r);
        }
        states = asmb.states;
        out.push_back(alpha);
    }
    return out;
}

} // namespace

TEST(Rom, FullQuadratureEqualsPlainGalerkin)
{
    const auto& o = offline();
    const auto sol = online_solve(o.full(), o.params, o.grid, tight());
    const auto oracle = galerkin_oracle(o, tight());
    ASSERT_EQ(sol.steps(), o.grid.steps);
    for (int k = 0; k < sol.steps(); ++k) {
        const Vector& a = sol.alpha_u[static_cast<std::size_t>(k)];
        const Vector& b = oracle[static_cast<std::size_t>(k)];
        EXPECT_LT((a - b).norm(), 1e-10 * b.norm()) << "step " << k;
    }
}

TEST(Rom, ReproducesTrainingTrajectoryNearProjectionError)
{
    const auto& o = offline();
    // A truncated basis keeps the projection error well above the Newton tolerance.
    ASSERT_GE(o.zu.size(), 2);
    const ReducedBasis z = o.zu.truncated(o.zu.size() - 1);
    const auto sol = online_solve(o.with_delta(1e-7, z), o.params, o.grid, {});
    const auto err = trajectory_errors(z, o.traj.displacements, sol.alpha_u);
    EXPECT_GT(err.projection, 1e-6);
    EXPECT_GT(err.projection, 0.0);
    EXPECT_LE(err.approximation, 10.0 * err.projection);
    EXPECT_GE(err.approximation, err.projection * (1 - 1e-9));
}

TEST(Rom, TighterQuadratureDoesNotIncreaseError)
{
    const auto& o = offline();
    auto error_at = [&](double delta) {
        const auto sol = online_solve(o.with_delta(delta, o.zu), o.params, o.grid, {});
        return trajectory_errors(o.zu, o.traj.displacements, sol.alpha_u).approximation;
    };
    EXPECT_LE(error_at(1e-7), error_at(1e-1));
}

TEST(Rom, IteratesStayInConstraintKernel)
{
    const auto& o = offline();
    const auto sol = online_solve(o.with_delta(1e-5, o.zu), o.params, o.grid, {});
    for (const auto& a : sol.alpha_u) {
        const Vector u = o.zu.modes * a;
        EXPECT_LE((o.model.constraints().B * u).lpNorm<Eigen::Infinity>(), 1e-10 * u.lpNorm<Eigen::Infinity>());
    }
}

TEST(Rom, StatesLiveOnKeptElementsOnly)
{
    const auto& o = offline();
    const auto art = o.with_delta(1e-3, o.zu);
    const RomModel rom(art);
    EXPECT_EQ(rom.state_count(),
              static_cast<Index>(art->eq.reduced_mesh.kept_volume.size()) * o.mesh->points_per_element());
    EXPECT_LT(rom.state_count(), o.mesh->point_count());
    EXPECT_THROW(rom.newton_step(Vector::Zero(o.zu.size()), StateField(1), 1.0, o.params, {}), InputError);
}

TEST(Rom, ZeroLoadKeepsCoordinates)
{
    const auto& o = offline();
    const RomModel rom(o.with_delta(1e-5, o.zu));
    const auto st = rom.newton_step(Vector::Zero(o.zu.size()), StateField(static_cast<std::size_t>(rom.state_count())),
                                    0.0, o.params, {});
    EXPECT_EQ(st.iterations, 0);
    EXPECT_EQ(st.alpha.norm(), 0.0);

    TimeGrid none;
    none.steps = 1;
    none.load_scale = 0.0;
    const auto sol = rom.solve(o.params, none, {});
    ASSERT_EQ(sol.steps(), 1);
    EXPECT_EQ(sol.alpha_u[0].norm(), 0.0);
    EXPECT_EQ(sol.indicator[0], 0.0);
    EXPECT_EQ(sol.indicator_avg, 0.0);
}

TEST(Rom, GappyStressMatchesHfProjectionUnderFullQuadrature)
{
    const auto& o = offline();
    const RomModel rom(o.full());
    const StateField& hf = o.traj.states.back();
    const Vector alpha = rom.reconstruct_stress(hf);
    const Vector proj = o.zs.project(stress_vector(hf));
    EXPECT_LT((alpha - proj).norm(), 1e-8 * proj.norm());
}

TEST(Rom, ErrorMetricsOfExactProjectionCoincide)
{
    const auto& o = offline();
    std::vector<Vector> alphas;
    for (const auto& u : o.traj.displacements) {
        alphas.push_back(o.zu.project(u));
    }
    const auto e = trajectory_errors(o.zu, o.traj.displacements, alphas);
    EXPECT_NEAR(e.approximation, e.projection, 1e-10);
    EXPECT_THROW(trajectory_errors(o.zu, o.traj.displacements, {}), InputError);
}

TEST(Rom, ArtifactsWithoutDisplacementBasisAreRejected)
{
    const auto& o = offline();
    auto a = std::make_shared<RomArtifacts>(*o.full());
    a->zu = a->zu.truncated(0);
    EXPECT_THROW(RomModel{a}, InputError);
}
