#pragma once

#include "reduction.hpp"
#include "solvers.hpp"

#include <string>
#include <vector>

namespace eqrom {

/// Riesz elements of the stress modes (columns 0..N_σ−1) and of the unit
/// external load (last column) under the K_μ̄ inner product on ker(B),
/// together with their Gramian Σ and an upper-triangular factor R with Σ = RᵀR.
///
/// Indicators are evaluated as ‖R α̃‖: near equilibrium the quadratic form
/// α̃ᵀΣα̃ cancels to round-off long before the norm of R α̃ does.
struct IndicatorData {
    Matrix riesz;
    Matrix gramian;
    Matrix factor;

    [[nodiscard]] Index stress_modes() const { return gramian.rows() - 1; }
    [[nodiscard]] double load_norm_sq() const { return factor.col(factor.cols() - 1).squaredNorm(); }

    /// Gramian scaled by the squared unit-load norm (last diagonal entry 1).
    [[nodiscard]] Matrix normalized_gramian() const
    {
        const double l = load_norm_sq();
        if (!(l > 0.0)) {
            throw InputError("indicator: external load has zero dual norm, cannot normalize");
        }
        return gramian / l;
    }
};

/// Solves K ψ + Bᵀλ = F_n, Bψ = 0 for every stress mode force and for the unit load.
inline Matrix compute_riesz_elements(const Mesh& mesh, const SparseMatrix& k_bar, const SparseMatrix& B,
                                     const Matrix& stress_modes, const Vector& unit_load)
{
    detail::require(stress_modes.rows() == mesh.stress_size(), "riesz: stress mode size does not match the mesh");
    detail::require(unit_load.size() == mesh.dof_count(), "riesz: load vector size does not match the mesh");
    SaddleSolver saddle(B);
    saddle.factorize(k_bar);
    const Index ns = stress_modes.cols();
    Matrix psi(mesh.dof_count(), ns + 1);
    const Vector zero_c = Vector::Zero(B.rows());
    for (Index n = 0; n <= ns; ++n) {
        const Vector f = n < ns ? nodal_force_of_stress(mesh, stress_modes.col(n)) : unit_load;
        if (f.lpNorm<Eigen::Infinity>() == 0.0) {
            psi.col(n).setZero();
            continue;
        }
        psi.col(n) = saddle.solve(f, zero_c).first;
    }
    return psi;
}

/// Σ = Ψᵀ K_μ̄ Ψ, symmetrized.
inline Matrix build_gramian(const Matrix& riesz, const SparseMatrix& k_bar)
{
    Matrix s = riesz.transpose() * (k_bar * riesz);
    return 0.5 * (s + s.transpose());
}

/// R of the K_μ̄-orthogonal factorization Ψ = Q R (modified Gram-Schmidt, two
/// passes). Columns that are dependent on the previous ones get a zero pivot.
inline Matrix gramian_factor(const Matrix& riesz, const SparseMatrix& k_bar)
{
    const Index m = riesz.cols();
    Matrix q(riesz.rows(), m);
    Matrix kq(riesz.rows(), m);
    Matrix r = Matrix::Zero(m, m);
    for (Index j = 0; j < m; ++j) {
        Vector v = riesz.col(j);
        const double norm0 = std::sqrt(std::max(v.dot(k_bar * v), 0.0));
        for (int pass = 0; pass < 2; ++pass) {
            for (Index i = 0; i < j; ++i) {
                const double c = kq.col(i).dot(v);
                r(i, j) += c;
                v -= c * q.col(i);
            }
        }
        const Vector kv = k_bar * v;
        const double rn = std::sqrt(std::max(v.dot(kv), 0.0));
        if (rn > 1e-13 * norm0 && rn > 0.0) {
            r(j, j) = rn;
            q.col(j) = v / rn;
            kq.col(j) = kv / rn;
        } else {
            q.col(j).setZero();
            kq.col(j).setZero();
        }
    }
    return r;
}

inline IndicatorData build_indicator(const Mesh& mesh, const SparseMatrix& k_bar, const SparseMatrix& B,
                                     const Matrix& stress_modes, const Vector& unit_load)
{
    IndicatorData d;
    d.riesz = compute_riesz_elements(mesh, k_bar, B, stress_modes, unit_load);
    d.gramian = build_gramian(d.riesz, k_bar);
    d.factor = gramian_factor(d.riesz, k_bar);
    return d;
}

struct IndicatorTrace {
    std::vector<double> per_step;
    double average = 0.0;
};

/// Normalized dual-norm residual of one step under proportional loading:
/// Δ² = α̃ᵀ Σ α̃ / (g² ‖ψ_load‖²) with α̃ = [α; −g]. Zero load gives 0.
inline double indicator_step(const Vector& alpha, double load_factor, const IndicatorData& data)
{
    const Index ns = data.stress_modes();
    if (alpha.size() != ns) {
        throw InputError("indicator: expected " + std::to_string(ns) + " stress coordinates, got " +
                         std::to_string(alpha.size()));
    }
    if (load_factor == 0.0) {
        return 0.0;
    }
    const double l = data.load_norm_sq();
    if (!(l > 0.0)) {
        throw InputError("indicator: external load has zero dual norm, cannot normalize");
    }
    Vector a(ns + 1);
    a.head(ns) = alpha;
    a[ns] = -load_factor;
    return (data.factor * a).norm() / (std::abs(load_factor) * std::sqrt(l));
}

/// Per-step indicators and the time average Δ^avg = sqrt(mean Δ²).
inline IndicatorTrace evaluate_indicator(const std::vector<Vector>& alphas, const std::vector<double>& load_factors,
                                         const IndicatorData& data)
{
    detail::require(alphas.size() == load_factors.size(), "indicator: one load factor per step");
    IndicatorTrace t;
    double acc = 0.0;
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        const double d = indicator_step(alphas[k], load_factors[k], data);
        t.per_step.push_back(d);
        acc += d * d;
    }
    t.average = alphas.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(alphas.size()));
    return t;
}

} // namespace eqrom
