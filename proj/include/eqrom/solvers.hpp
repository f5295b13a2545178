#pragma once

#include "assembly.hpp"

#include <Eigen/SparseLU>

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace eqrom {

/// Direct solver for the bordered system [K Bᵀ; B 0] [x; λ] = [f; g].
///
/// The constraint block is scaled by the mean stiffness diagonal before
/// factorization; multipliers are returned in the original scaling. The
/// sparsity pattern is analysed once and reused while it does not change.
class SaddleSolver {
public:
    explicit SaddleSolver(SparseMatrix B) : B_(std::move(B)) {}

    void factorize(const SparseMatrix& K)
    {
        const Index n = K.rows();
        const Index m = B_.rows();
        detail::require(K.cols() == n && (m == 0 || B_.cols() == n), "SaddleSolver: dimension mismatch");
        double diag = 0.0;
        for (Index i = 0; i < n; ++i) {
            diag += std::abs(K.coeff(i, i));
        }
        scale_ = n > 0 && diag > 0.0 ? diag / static_cast<double>(n) : 1.0;

        std::vector<Triplet> t;
        t.reserve(static_cast<std::size_t>(K.nonZeros() + 2 * B_.nonZeros()));
        for (Index c = 0; c < K.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(K, c); it; ++it) {
                t.emplace_back(it.row(), it.col(), it.value());
            }
        }
        for (Index c = 0; c < B_.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(B_, c); it; ++it) {
                t.emplace_back(n + it.row(), it.col(), scale_ * it.value());
                t.emplace_back(it.col(), n + it.row(), scale_ * it.value());
            }
        }
        A_.resize(n + m, n + m);
        A_.setFromTriplets(t.begin(), t.end());
        A_.makeCompressed();
        if (!analyzed_ || A_.nonZeros() != pattern_nnz_ || A_.rows() != pattern_rows_) {
            lu_ = std::make_unique<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>>();
            lu_->analyzePattern(A_);
            analyzed_ = true;
            pattern_nnz_ = A_.nonZeros();
            pattern_rows_ = A_.rows();
        }
        lu_->factorize(A_);
        if (lu_->info() != Eigen::Success) {
            throw SolverError("saddle system is singular: " + lu_->lastErrorMessage());
        }
        n_ = n;
    }

    /// Returns (x, λ). Throws SolverError if the solution fails a residual check.
    [[nodiscard]] std::pair<Vector, Vector> solve(const Vector& rhs_u, const Vector& rhs_c) const
    {
        detail::require(lu_ != nullptr, "SaddleSolver: factorize() first");
        const Index m = B_.rows();
        Vector rhs(n_ + m);
        rhs.head(n_) = rhs_u;
        if (m > 0) {
            rhs.tail(m) = scale_ * rhs_c;
        }
        Vector sol = lu_->solve(rhs);
        // One step of iterative refinement keeps the constraint residual at round-off.
        const Vector r = rhs - A_ * sol;
        sol += lu_->solve(r);
        const double rel = (rhs - A_ * sol).norm() / std::max(rhs.norm(), 1e-300);
        if (!sol.allFinite() || (rhs.norm() > 0.0 && rel > 1e-8)) {
            throw SolverError("saddle system is singular or ill-conditioned (relative residual " +
                              std::to_string(rel) + ")");
        }
        Vector x = sol.head(n_);
        Vector lambda = m > 0 ? Vector(scale_ * sol.tail(m)) : Vector();
        return {std::move(x), std::move(lambda)};
    }

    [[nodiscard]] const SparseMatrix& constraints() const { return B_; }

private:
    SparseMatrix B_;
    SparseMatrix A_;
    std::unique_ptr<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>> lu_;
    double scale_ = 1.0;
    Index n_ = 0;
    bool analyzed_ = false;
    Index pattern_nnz_ = 0;
    Index pattern_rows_ = 0;
};

inline std::pair<Vector, Vector> solve_saddle(const SparseMatrix& K, const SparseMatrix& B, const Vector& rhs_u,
                                              const Vector& rhs_c)
{
    SaddleSolver s(B);
    s.factorize(K);
    return s.solve(rhs_u, rhs_c);
}

struct NewtonConfig {
    double eps_newt = 1e-7;
    int max_iters = 30;
    TangentMode tangent = TangentMode::Consistent;
    int max_halvings = 3;
    ReturnMapOptions return_map;

    void validate() const
    {
        if (!(eps_newt > 0.0 && eps_newt < 1.0) || max_iters < 1 || max_halvings < 0) {
            throw InputError("NewtonConfig: require 0 < eps_newt < 1, max_iters >= 1, max_halvings >= 0");
        }
    }
};

/// Uniform time grid t_k = k t_f / K with proportional load factor g(t) = scale * t / t_f.
struct TimeGrid {
    int steps = 10;
    double t_final = 1.0;
    double load_scale = 1.0;

    [[nodiscard]] double time(int k) const { return t_final * static_cast<double>(k) / steps; }
    [[nodiscard]] double load_factor(int k) const { return load_scale * static_cast<double>(k) / steps; }
    [[nodiscard]] std::vector<double> load_factors() const
    {
        std::vector<double> g;
        for (int k = 1; k <= steps; ++k) {
            g.push_back(load_factor(k));
        }
        return g;
    }
};

/// High-fidelity quasi-static problem: mesh, constraints and unit external load.
class HfModel {
public:
    HfModel(std::shared_ptr<const Mesh> mesh, const BoundaryConditions& bc, Loading loading)
        : mesh_(std::move(mesh)),
          constraints_(build_constraints(*mesh_, bc)),
          loading_(std::move(loading)),
          f_ext_(assemble_external(*mesh_, loading_))
    {
    }

    [[nodiscard]] const Mesh& mesh() const { return *mesh_; }
    [[nodiscard]] std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
    [[nodiscard]] const ConstraintMatrix& constraints() const { return constraints_; }
    [[nodiscard]] const Loading& loading() const { return loading_; }
    /// External force at unit load factor.
    [[nodiscard]] const Vector& external_force() const { return f_ext_; }

    [[nodiscard]] StateField initial_states() const
    {
        return StateField(static_cast<std::size_t>(mesh_->point_count()));
    }

private:
    std::shared_ptr<const Mesh> mesh_;
    ConstraintMatrix constraints_;
    Loading loading_;
    Vector f_ext_;
};

struct NewtonResult {
    Vector u;
    Vector lambda;
    StateField states;
    std::vector<double> residual_norms;   // relative criterion per iterate
    std::vector<double> correction_norms; // ‖Δu‖∞ per linear solve
    int iterations = 0;                   // linear solves performed
};

/// Dualized Newton–Raphson for one load step starting from u^(k−1).
/// Convergence: ‖R + Bᵀλ‖∞ ≤ ε ‖Bᵀλ − F_ext‖∞.
inline NewtonResult newton_solve(const HfModel& model, const Vector& u_prev, const Vector& lambda_prev,
                                 const StateField& states_prev, double load_factor, const ElastoplasticParams& params,
                                 const NewtonConfig& config)
{
    const Mesh& mesh = model.mesh();
    const auto& B = model.constraints().B;
    const ElementSet all = ElementSet::all(mesh);
    const MaterialOptions mat{config.tangent, config.return_map};
    const Vector f_ext = load_factor * model.external_force();
    SaddleSolver saddle(B);

    NewtonResult r;
    r.u = u_prev;
    r.lambda = lambda_prev.size() == B.rows() ? lambda_prev : Vector(Vector::Zero(B.rows()));
    for (int it = 0;; ++it) {
        auto asmb = assemble_internal(mesh, all, r.u, u_prev, states_prev, params, mat, true);
        const Vector residual = asmb.internal_force - f_ext;
        const Vector reaction = B.transpose() * r.lambda;
        const double num = (residual + reaction).lpNorm<Eigen::Infinity>();
        const double den = (reaction - f_ext).lpNorm<Eigen::Infinity>();
        r.residual_norms.push_back(den > 0.0 ? num / den : num);
        if (num <= config.eps_newt * den || num == 0.0) {
            r.states = std::move(asmb.states);
            return r;
        }
        if (it >= config.max_iters) {
            throw SolverError("Newton did not converge in " + std::to_string(config.max_iters) +
                              " iterations, relative residual " + std::to_string(r.residual_norms.back()));
        }
        saddle.factorize(asmb.jacobian);
        auto [du, dlambda] = saddle.solve(-(residual + reaction), -(B * r.u));
        r.correction_norms.push_back(du.lpNorm<Eigen::Infinity>());
        r.u += du;
        r.lambda += dlambda;
        ++r.iterations;
    }
}

/// HF trajectory: per-step displacements, multipliers and point states.
struct Trajectory {
    std::vector<double> times;
    std::vector<double> load_factors;
    std::vector<Vector> displacements;
    std::vector<Vector> multipliers;
    std::vector<StateField> states;
    std::vector<int> newton_iterations;
    int cutbacks = 0;
    double wall_time = 0.0;

    [[nodiscard]] int steps() const { return static_cast<int>(displacements.size()); }

    [[nodiscard]] Matrix displacement_snapshots() const
    {
        Matrix s(displacements.empty() ? 0 : displacements.front().size(), steps());
        for (int k = 0; k < steps(); ++k) {
            s.col(k) = displacements[static_cast<std::size_t>(k)];
        }
        return s;
    }

    [[nodiscard]] Matrix stress_snapshots() const
    {
        Matrix s(states.empty() ? 0 : 6 * static_cast<Index>(states.front().size()), steps());
        for (int k = 0; k < steps(); ++k) {
            s.col(k) = stress_vector(states[static_cast<std::size_t>(k)]);
        }
        return s;
    }
};

/// Quasi-static march over the time grid from the zero state. A failed step
/// is retried with up to `max_halvings` successive halvings of its increment.
inline Trajectory hf_time_march(const HfModel& model, const ElastoplasticParams& params, const TimeGrid& grid,
                                const NewtonConfig& config)
{
    params.validate();
    config.validate();
    detail::require(grid.steps >= 1, "hf_time_march: need at least one time step");
    Stopwatch clock;
    Trajectory traj;
    Vector u = Vector::Zero(model.mesh().dof_count());
    Vector lambda = Vector::Zero(model.constraints().rows());
    StateField states = model.initial_states();
    double g_prev = 0.0;
    for (int k = 1; k <= grid.steps; ++k) {
        const double g = grid.load_factor(k);
        int iterations = 0;
        bool done = false;
        for (int h = 0; h <= config.max_halvings && !done; ++h) {
            const int sub = 1 << h;
            Vector u_try = u;
            Vector l_try = lambda;
            StateField s_try = states;
            try {
                int iters = 0;
                for (int j = 1; j <= sub; ++j) {
                    const double gj = g_prev + (g - g_prev) * static_cast<double>(j) / sub;
                    auto res = newton_solve(model, u_try, l_try, s_try, gj, params, config);
                    iters += res.iterations;
                    u_try = std::move(res.u);
                    l_try = std::move(res.lambda);
                    s_try = std::move(res.states);
                }
                u = std::move(u_try);
                lambda = std::move(l_try);
                states = std::move(s_try);
                iterations = iters;
                traj.cutbacks += h;
                done = true;
            } catch (const SolverError& e) {
                if (h == config.max_halvings) {
                    throw SolverError("time step " + std::to_string(k) + ": " + e.what());
                }
            }
        }
        traj.times.push_back(grid.time(k));
        traj.load_factors.push_back(g);
        traj.displacements.push_back(u);
        traj.multipliers.push_back(lambda);
        traj.states.push_back(states);
        traj.newton_iterations.push_back(iterations);
        g_prev = g;
    }
    traj.wall_time = clock.seconds();
    return traj;
}

} // namespace eqrom
