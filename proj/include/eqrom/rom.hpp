#pragma once

#include "hyperreduction.hpp"
#include "indicator.hpp"
#include "reduction.hpp"
#include "solvers.hpp"

#include <Eigen/LU>

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace eqrom {

/// Everything the online stage needs: both bases, the two-level EQ rule with
/// its reduced mesh, the indicator data and the offline settings.
struct RomArtifacts {
    std::shared_ptr<const Mesh> mesh;
    ConstraintMatrix constraints;
    Loading loading;
    ReducedBasis zu;
    ReducedBasis zs;
    EqResult eq;
    IndicatorData indicator;
    ElastoplasticParams reference; // μ̄
    double delta = 0.0;
    double eps_pod_u = 0.0;
    double eps_pod_sigma = 0.0;

    void validate() const
    {
        detail::require(mesh != nullptr, "artifacts: no mesh");
        detail::require(zu.size() > 0, "artifacts: empty displacement basis");
        detail::require(zu.dimension() == mesh->dof_count(), "artifacts: displacement basis does not match the mesh");
        detail::require(zs.size() == 0 || zs.dimension() == mesh->stress_size(),
                        "artifacts: stress basis does not match the mesh");
        detail::require(indicator.gramian.rows() == zs.size() + 1 && indicator.factor.rows() == zs.size() + 1,
                        "artifacts: indicator does not match the stress basis");
        detail::require(eq.reduced_mesh.parent == mesh.get(), "artifacts: reduced mesh belongs to another mesh");
        const Index masked = eq.reduced_mesh.point_count() * 6;
        detail::require(masked >= zs.size(), "artifacts: reduced mesh has fewer stress entries than stress modes");
    }
};

/// Largest n such that the first n stress modes, restricted to the reduced-mesh
/// points, have full column rank (the Gappy fit is then well posed).
inline Index gappy_admissible_modes(const Mesh& mesh, const Matrix& stress_modes, const ReducedMesh& rm)
{
    const int qpe = mesh.points_per_element();
    const Index rows = static_cast<Index>(rm.kept_volume.size()) * 6 * qpe;
    Matrix a(rows, stress_modes.cols());
    Index r = 0;
    for (Index q : rm.kept_volume) {
        for (int j = 0; j < 6 * qpe; ++j) {
            a.row(r++) = std::sqrt(mesh.point_weight(q * qpe + j / 6)) * stress_modes.row(mesh.stress_unknown(q, j));
        }
    }
    for (Index n = std::min(stress_modes.cols(), rows); n > 0; --n) {
        Eigen::ColPivHouseholderQR<Matrix> qr(a.leftCols(n));
        qr.setThreshold(1e-12);
        if (qr.rank() == n) {
            return n;
        }
    }
    return 0;
}

/// Builds EQ rules and the indicator for given bases from the training stress
/// snapshots. The stress basis is truncated to the modes the reduced mesh can
/// identify (fewer stress modes than sampled stress entries).
inline RomArtifacts build_artifacts(const HfModel& model, const ElastoplasticParams& reference, ReducedBasis zu,
                                    ReducedBasis zs, const Matrix& stress_snapshots, const SparseMatrix& k_bar,
                                    double delta)
{
    RomArtifacts a;
    a.mesh = model.mesh_ptr();
    a.constraints = model.constraints();
    a.loading = model.loading();
    a.reference = reference;
    a.delta = delta;
    a.eq = empirical_quadrature(model.mesh(), zu.modes, stress_snapshots, model.loading(), delta);
    const Index ns = gappy_admissible_modes(model.mesh(), zs.modes, a.eq.reduced_mesh);
    if (ns < zs.size()) {
        zs = zs.truncated(ns);
    }
    a.indicator = build_indicator(model.mesh(), k_bar, model.constraints().B, zs.modes, model.external_force());
    a.zu = std::move(zu);
    a.zs = std::move(zs);
    return a;
}

struct RomSolution {
    std::vector<double> load_factors;
    std::vector<Vector> alpha_u;
    std::vector<Vector> alpha_s;
    std::vector<double> indicator;
    double indicator_avg = 0.0;
    std::vector<int> newton_iterations;
    int cutbacks = 0;
    double wall_time = 0.0;

    [[nodiscard]] int steps() const { return static_cast<int>(alpha_u.size()); }
};

struct ReducedStep {
    Vector alpha;
    StateField states; // kept-element points only
    std::vector<double> residual_norms;
    int iterations = 0;
};

/// Online hyper-reduced Galerkin model. Element restrictions of Z_u, the
/// reduced external force and the Gappy factorization are precomputed.
class RomModel {
public:
    explicit RomModel(std::shared_ptr<const RomArtifacts> artifacts) : a_(std::move(artifacts))
    {
        a_->validate();
        const Mesh& mesh = *a_->mesh;
        const auto& rm = a_->eq.reduced_mesh;
        const int ndof = mesh.dofs_per_element();
        const int qpe = mesh.points_per_element();
        const Matrix& z = a_->zu.modes;
        const Index nu = z.cols();

        zq_.reserve(rm.kept_volume.size());
        for (Index q : rm.kept_volume) {
            Matrix m(ndof, nu);
            for (int i = 0; i < ndof; ++i) {
                m.row(i) = z.row(mesh.dof(q, i));
            }
            zq_.push_back(std::move(m));
        }

        f_red_ = Vector::Zero(nu);
        const Loading& load = a_->loading;
        if (load.traction.squaredNorm() > 0.0) {
            const int nps = mesh.nodes_per_surface_element();
            for (std::size_t e = 0; e < rm.kept_surface.size(); ++e) {
                const Index s = rm.kept_surface[e];
                const auto fe = surface_traction_force(mesh, s, load.traction);
                for (int i = 0; i < 3 * nps; ++i) {
                    f_red_ += rm.surface_weights[e] * fe[i] * z.row(surface_dof(mesh, s, i)).transpose();
                }
            }
        }
        if (load.body_force.squaredNorm() > 0.0) {
            for (std::size_t e = 0; e < rm.kept_volume.size(); ++e) {
                const auto fe = element_volume_force(mesh, rm.kept_volume[e], load.body_force);
                f_red_ += rm.volume_weights[e] * (zq_[e].transpose() * fe);
            }
        }

        std::vector<Index> mask;
        Vector w(static_cast<Index>(rm.kept_volume.size()) * 6 * qpe);
        Index c = 0;
        for (Index q : rm.kept_volume) {
            for (int j = 0; j < 6 * qpe; ++j) {
                mask.push_back(mesh.stress_unknown(q, j));
                w[c++] = mesh.point_weight(q * qpe + j / 6);
            }
        }
        gappy_ = GappyReconstructor(a_->zs.modes, std::move(mask), w);
    }

    [[nodiscard]] const RomArtifacts& artifacts() const { return *a_; }
    [[nodiscard]] const Vector& reduced_external_force() const { return f_red_; }
    [[nodiscard]] Index state_count() const { return a_->eq.reduced_mesh.point_count(); }

    /// Reduced Newton for one load level: Zᵀ K_eq Z δα = −Zᵀ R_eq, stopped when
    /// ‖Zᵀ R_eq‖₂ ≤ ε ‖g Zᵀ F_ext‖₂.
    [[nodiscard]] ReducedStep newton_step(const Vector& alpha_prev, const StateField& states_prev, double load_factor,
                                          const ElastoplasticParams& params, const NewtonConfig& config) const
    {
        const Mesh& mesh = *a_->mesh;
        const auto& rm = a_->eq.reduced_mesh;
        const int qpe = mesh.points_per_element();
        const Index nu = a_->zu.size();
        detail::require(alpha_prev.size() == nu, "reduced Newton: coordinate size mismatch");
        detail::require(states_prev.size() == static_cast<std::size_t>(state_count()),
                        "reduced Newton: state size mismatch");
        const MaterialOptions mat{config.tangent, config.return_map};
        const Vector f_ext = load_factor * f_red_;
        const double f_norm = f_ext.norm();

        ReducedStep r;
        r.alpha = alpha_prev;
        r.states.resize(states_prev.size());
        for (int it = 0;; ++it) {
            Vector res = -f_ext;
            Matrix jac = Matrix::Zero(nu, nu);
            for (std::size_t e = 0; e < rm.kept_volume.size(); ++e) {
                const Index q = rm.kept_volume[e];
                const double w = rm.volume_weights[e];
                const Matrix& zq = zq_[e];
                const ElementVector u_now = zq * r.alpha;
                const ElementVector u_prev = zq * alpha_prev;
                const std::span<const PointState> prev(states_prev.data() + e * static_cast<std::size_t>(qpe),
                                                       static_cast<std::size_t>(qpe));
                auto resp = evaluate_element(mesh, q, u_now, u_prev, prev, params, mat, true);
                res.noalias() += w * (zq.transpose() * resp.internal_force);
                jac.noalias() += w * (zq.transpose() * resp.jacobian * zq);
                std::copy(resp.states.begin(), resp.states.end(),
                          r.states.begin() + static_cast<std::ptrdiff_t>(e) * qpe);
            }
            const double rn = res.norm();
            r.residual_norms.push_back(f_norm > 0.0 ? rn / f_norm : rn);
            if (rn <= config.eps_newt * f_norm || rn == 0.0) {
                return r;
            }
            if (it >= config.max_iters) {
                throw SolverError("reduced Newton did not converge in " + std::to_string(config.max_iters) +
                                  " iterations, relative residual " + std::to_string(r.residual_norms.back()));
            }
            Eigen::FullPivLU<Matrix> lu(jac);
            if (!lu.isInvertible()) {
                throw SolverError("reduced Jacobian is singular");
            }
            const Vector d = lu.solve(-res);
            if (!d.allFinite()) {
                throw SolverError("reduced Newton produced a non-finite correction");
            }
            r.alpha += d;
            ++r.iterations;
        }
    }

    /// Stress coordinates from the kept-element point stresses.
    [[nodiscard]] Vector reconstruct_stress(const StateField& states) const
    {
        Vector v(static_cast<Index>(states.size()) * 6);
        for (std::size_t p = 0; p < states.size(); ++p) {
            v.segment<6>(6 * static_cast<Index>(p)) = states[p].stress;
        }
        return gappy_.solve(v);
    }

    [[nodiscard]] double gappy_condition() const { return gappy_.condition(); }

    /// Full online trajectory from zero coordinates and zero reduced states.
    [[nodiscard]] RomSolution solve(const ElastoplasticParams& params, const TimeGrid& grid,
                                    const NewtonConfig& config) const
    {
        params.validate();
        config.validate();
        detail::require(grid.steps >= 1, "online_solve: need at least one time step");
        Stopwatch clock;
        RomSolution sol;
        Vector alpha = Vector::Zero(a_->zu.size());
        StateField states(static_cast<std::size_t>(state_count()));
        double g_prev = 0.0;
        for (int k = 1; k <= grid.steps; ++k) {
            const double g = grid.load_factor(k);
            bool done = false;
            for (int h = 0; h <= config.max_halvings && !done; ++h) {
                const int sub = 1 << h;
                Vector a_try = alpha;
                StateField s_try = states;
                int iters = 0;
                try {
                    for (int j = 1; j <= sub; ++j) {
                        const double gj = g_prev + (g - g_prev) * static_cast<double>(j) / sub;
                        auto st = newton_step(a_try, s_try, gj, params, config);
                        iters += st.iterations;
                        a_try = std::move(st.alpha);
                        s_try = std::move(st.states);
                    }
                    alpha = std::move(a_try);
                    states = std::move(s_try);
                    sol.newton_iterations.push_back(iters);
                    sol.cutbacks += h;
                    done = true;
                } catch (const SolverError& e) {
                    if (h == config.max_halvings) {
                        throw SolverError("online step " + std::to_string(k) + ": " + e.what());
                    }
                }
            }
            sol.load_factors.push_back(g);
            sol.alpha_u.push_back(alpha);
            sol.alpha_s.push_back(reconstruct_stress(states));
        }
        const auto trace = evaluate_indicator(sol.alpha_s, sol.load_factors, a_->indicator);
        sol.indicator = trace.per_step;
        sol.indicator_avg = trace.average;
        sol.wall_time = clock.seconds();
        return sol;
    }

private:
    std::shared_ptr<const RomArtifacts> a_;
    std::vector<Matrix> zq_;
    Vector f_red_;
    GappyReconstructor gappy_;
};

inline RomSolution online_solve(std::shared_ptr<const RomArtifacts> artifacts, const ElastoplasticParams& params,
                                const TimeGrid& grid, const NewtonConfig& config)
{
    return RomModel(std::move(artifacts)).solve(params, grid, config);
}

/// Time-averaged relative errors in the displacement inner-product norm:
/// projection error onto span(Z_u) and error of the ROM reconstruction.
struct TrajectoryErrors {
    double projection = 0.0;
    double approximation = 0.0;
};

inline double projection_error_avg(const ReducedBasis& zu, const std::vector<Vector>& hf)
{
    double num = 0.0;
    double den = 0.0;
    for (const auto& u : hf) {
        Vector r = u;
        if (zu.size() > 0) {
            r -= zu.modes * zu.project(u);
        }
        num += std::max(zu.inner_product.dot(r, r), 0.0);
        den += std::max(zu.inner_product.dot(u, u), 0.0);
    }
    return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

inline TrajectoryErrors trajectory_errors(const ReducedBasis& zu, const std::vector<Vector>& hf,
                                          const std::vector<Vector>& alpha_u)
{
    detail::require(hf.size() == alpha_u.size(), "trajectory_errors: step count mismatch");
    TrajectoryErrors e;
    e.projection = projection_error_avg(zu, hf);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < hf.size(); ++k) {
        const Vector d = hf[k] - zu.modes * alpha_u[k];
        num += std::max(zu.inner_product.dot(d, d), 0.0);
        den += std::max(zu.inner_product.dot(hf[k], hf[k]), 0.0);
    }
    e.approximation = den > 0.0 ? std::sqrt(num / den) : 0.0;
    return e;
}

} // namespace eqrom
