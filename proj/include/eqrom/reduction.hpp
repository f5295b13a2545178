#pragma once

#include "mesh.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace eqrom {

/// Snapshot inner product: a sparse SPD(-on-constraints) matrix applied as an
/// operator (displacements), or a diagonal of quadrature weights (stresses).
class InnerProduct {
public:
    enum class Kind { Stiffness, DiagonalWeights };

    InnerProduct() = default;

    static InnerProduct stiffness(std::shared_ptr<const SparseMatrix> k)
    {
        InnerProduct ip;
        ip.kind_ = Kind::Stiffness;
        ip.matrix_ = std::move(k);
        return ip;
    }

    static InnerProduct diagonal(Vector weights)
    {
        InnerProduct ip;
        ip.kind_ = Kind::DiagonalWeights;
        ip.weights_ = std::move(weights);
        return ip;
    }

    [[nodiscard]] Kind kind() const { return kind_; }
    [[nodiscard]] Index size() const { return kind_ == Kind::Stiffness ? matrix_->rows() : weights_.size(); }
    [[nodiscard]] const Vector& weights() const { return weights_; }
    [[nodiscard]] const SparseMatrix& matrix() const { return *matrix_; }

    [[nodiscard]] Matrix apply(const Matrix& v) const
    {
        if (kind_ == Kind::Stiffness) {
            return (*matrix_) * v;
        }
        return weights_.asDiagonal() * v;
    }

    [[nodiscard]] double dot(const Vector& a, const Vector& b) const
    {
        if (kind_ == Kind::Stiffness) {
            return a.dot((*matrix_) * b);
        }
        return (a.array() * weights_.array() * b.array()).sum();
    }

    [[nodiscard]] double norm(const Vector& a) const { return std::sqrt(std::max(dot(a, a), 0.0)); }

private:
    Kind kind_ = Kind::DiagonalWeights;
    std::shared_ptr<const SparseMatrix> matrix_;
    Vector weights_;
};

/// Stress inner product: HF quadrature weight of each point on its six components.
inline InnerProduct stress_inner_product(const Mesh& mesh)
{
    Vector w(mesh.stress_size());
    for (Index p = 0; p < mesh.point_count(); ++p) {
        w.segment<6>(6 * p).setConstant(mesh.point_weight(p));
    }
    return InnerProduct::diagonal(std::move(w));
}

/// Column-orthonormal modes under `inner_product`.
struct ReducedBasis {
    Matrix modes;
    Vector eigenvalues; // POD spectrum (pod) or the spectra of appended increments (hpod_update)
    InnerProduct inner_product;

    [[nodiscard]] Index size() const { return modes.cols(); }
    [[nodiscard]] Index dimension() const { return modes.rows(); }

    /// Coordinates of the X-orthogonal projection onto the span.
    [[nodiscard]] Vector project(const Vector& v) const { return modes.transpose() * inner_product.apply(v); }

    [[nodiscard]] ReducedBasis truncated(Index n) const
    {
        detail::require(n >= 0 && n <= size(), "ReducedBasis::truncated: invalid mode count");
        return {modes.leftCols(n), eigenvalues, inner_product};
    }
};

inline constexpr double eigenvalue_cutoff = 1e-14;

namespace detail {

struct Spectrum {
    Vector values;  // descending, clamped at 0
    Matrix vectors; // matching columns
};

inline Spectrum gramian_spectrum(const Matrix& snapshots, const InnerProduct& ip)
{
    Matrix c = snapshots.transpose() * ip.apply(snapshots);
    c = 0.5 * (c + c.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(c);
    if (eig.info() != Eigen::Success) {
        throw SolverError("POD: Gramian eigensolver failed");
    }
    const Index k = c.rows();
    Spectrum s{Vector(k), Matrix(k, k)};
    for (Index i = 0; i < k; ++i) {
        s.values[i] = std::max(eig.eigenvalues()[k - 1 - i], 0.0);
        s.vectors.col(i) = eig.eigenvectors().col(k - 1 - i);
    }
    return s;
}

// Modified Gram-Schmidt of `v` against the columns of `basis` (two passes).
inline void orthogonalize(Vector& v, const Matrix& basis, Index columns, const InnerProduct& ip)
{
    for (int pass = 0; pass < 2; ++pass) {
        for (Index j = 0; j < columns; ++j) {
            v -= ip.dot(basis.col(j), v) * basis.col(j);
        }
    }
}

} // namespace detail

/// Method-of-snapshots POD with the energy criterion
/// N = min{Q : Σ_{q≤Q} λ_q ≥ (1 − ε²) Σ λ}. Eigenvalues below 1e-14 λ_1 count as zero.
inline ReducedBasis pod(const Matrix& snapshots, const InnerProduct& ip, double eps_pod)
{
    detail::require(snapshots.cols() >= 1, "pod: need at least one snapshot");
    detail::require(eps_pod > 0.0 && eps_pod < 1.0, "pod: tolerance must lie in (0, 1)");
    detail::require(snapshots.rows() == ip.size(), "pod: snapshot size does not match the inner product");
    auto eig = detail::gramian_spectrum(snapshots, ip);
    ReducedBasis basis{Matrix(snapshots.rows(), 0), eig.values, ip};
    const double lead = eig.values.size() > 0 ? eig.values[0] : 0.0;
    if (!(lead > 0.0)) {
        basis.eigenvalues.setZero();
        return basis;
    }
    Index rank = 0;
    double total = 0.0;
    for (Index i = 0; i < eig.values.size(); ++i) {
        if (eig.values[i] < eigenvalue_cutoff * lead) {
            eig.values[i] = 0.0;
            continue;
        }
        ++rank;
        total += eig.values[i];
    }
    basis.eigenvalues = eig.values;
    Index n = 0;
    double acc = 0.0;
    while (n < rank && acc < (1.0 - eps_pod * eps_pod) * total) {
        acc += eig.values[n];
        ++n;
    }
    basis.modes.resize(snapshots.rows(), n);
    for (Index i = 0; i < n; ++i) {
        Vector z = snapshots * eig.vectors.col(i) / std::sqrt(eig.values[i]);
        detail::orthogonalize(z, basis.modes, i, ip);
        basis.modes.col(i) = z / ip.norm(z);
    }
    return basis;
}

/// Largest relative X-norm projection error of the snapshots onto the span of `modes`.
inline double max_relative_projection_error(const Matrix& modes, const Matrix& snapshots, const InnerProduct& ip)
{
    double worst = 0.0;
    for (Index k = 0; k < snapshots.cols(); ++k) {
        const Vector u = snapshots.col(k);
        const double nu = ip.norm(u);
        if (nu == 0.0) {
            continue;
        }
        Vector r = u;
        if (modes.cols() > 0) {
            r -= modes * (modes.transpose() * ip.apply(u));
        }
        worst = std::max(worst, ip.norm(r) / nu);
    }
    return worst;
}

/// Incremental (hierarchical) POD update.
///
/// Skips the update when every new snapshot is already within `eps_pod`
/// relative projection error. Otherwise the projected snapshots are compressed
/// and their modes are appended in descending-eigenvalue order until the
/// maximum relative projection error of the new snapshots is below `eps_pod`.
inline ReducedBasis hpod_update(const ReducedBasis& basis, const Matrix& snapshots, double eps_pod)
{
    detail::require(eps_pod > 0.0 && eps_pod < 1.0, "hpod_update: tolerance must lie in (0, 1)");
    const InnerProduct& ip = basis.inner_product;
    detail::require(snapshots.rows() == ip.size(), "hpod_update: snapshot size does not match the inner product");
    const Matrix& z = basis.modes;

    Matrix residual = snapshots;
    if (z.cols() > 0) {
        residual -= z * (z.transpose() * ip.apply(snapshots));
    }
    std::vector<double> norms(static_cast<std::size_t>(snapshots.cols()));
    for (Index k = 0; k < snapshots.cols(); ++k) {
        norms[static_cast<std::size_t>(k)] = ip.norm(snapshots.col(k));
    }
    auto worst_ratio = [&](const Matrix& r) {
        double w = 0.0;
        for (Index k = 0; k < r.cols(); ++k) {
            if (norms[static_cast<std::size_t>(k)] > 0.0) {
                w = std::max(w, ip.norm(r.col(k)) / norms[static_cast<std::size_t>(k)]);
            }
        }
        return w;
    };
    if (worst_ratio(residual) <= eps_pod) {
        return basis;
    }

    const auto spec = detail::gramian_spectrum(residual, ip);
    const double lead = spec.values[0];
    Matrix added(z.rows(), 0);
    std::vector<double> added_values;
    Matrix all = z;
    for (Index i = 0; i < spec.values.size() && spec.values[i] >= eigenvalue_cutoff * lead; ++i) {
        Vector cand = residual * spec.vectors.col(i) / std::sqrt(spec.values[i]);
        const double before = ip.norm(cand);
        detail::orthogonalize(cand, all, all.cols(), ip);
        const double after = ip.norm(cand);
        if (!(after > 1e-8 * before)) {
            continue;
        }
        cand /= after;
        all.conservativeResize(Eigen::NoChange, all.cols() + 1);
        all.col(all.cols() - 1) = cand;
        added_values.push_back(spec.values[i]);
        const Vector coeff = residual.transpose() * ip.apply(cand);
        residual -= cand * coeff.transpose();
        if (worst_ratio(residual) <= eps_pod) {
            break;
        }
    }
    ReducedBasis out;
    out.modes = std::move(all);
    out.inner_product = ip;
    out.eigenvalues.resize(basis.eigenvalues.size() + static_cast<Index>(added_values.size()));
    out.eigenvalues.head(basis.eigenvalues.size()) = basis.eigenvalues;
    for (std::size_t i = 0; i < added_values.size(); ++i) {
        out.eigenvalues[basis.eigenvalues.size() + static_cast<Index>(i)] = added_values[i];
    }
    return out;
}

/// Weighted least-squares fit of basis coordinates to masked field values.
///
/// Solves min_α ‖W^{1/2}(Z_mask α − σ_mask)‖₂ with a column-pivoted QR that is
/// factorized once for a fixed mask.
class GappyReconstructor {
public:
    GappyReconstructor() = default;

    GappyReconstructor(const Matrix& modes, std::vector<Index> mask, const Vector& mask_weights)
        : mask_(std::move(mask)), sqrt_w_(mask_weights.cwiseSqrt())
    {
        detail::require(static_cast<Index>(mask_.size()) == mask_weights.size(),
                        "gappy: one weight per masked entry");
        const Index n = modes.cols();
        if (n == 0) {
            return;
        }
        if (static_cast<Index>(mask_.size()) < n) {
            throw SolverError("gappy: " + std::to_string(mask_.size()) + " masked entries for " + std::to_string(n) +
                              " stress modes; select more EQ elements or use fewer stress modes");
        }
        Matrix a(static_cast<Index>(mask_.size()), n);
        for (std::size_t i = 0; i < mask_.size(); ++i) {
            a.row(static_cast<Index>(i)) = sqrt_w_[static_cast<Index>(i)] * modes.row(mask_[i]);
        }
        qr_.setThreshold(1e-12);
        qr_.compute(a);
        if (qr_.rank() < n) {
            throw SolverError("gappy: masked stress basis is rank deficient (rank " + std::to_string(qr_.rank()) +
                              " < " + std::to_string(n) + "); select more EQ elements or use fewer stress modes");
        }
        const auto r = qr_.matrixR().topLeftCorner(n, n).diagonal().cwiseAbs();
        condition_ = r.maxCoeff() / r.minCoeff();
        modes_ = n;
    }

    [[nodiscard]] Vector solve(const Vector& masked_values) const
    {
        detail::require(masked_values.size() == static_cast<Index>(mask_.size()), "gappy: masked value size mismatch");
        if (modes_ == 0) {
            return Vector();
        }
        return qr_.solve(Vector(sqrt_w_.cwiseProduct(masked_values)));
    }

    [[nodiscard]] double condition() const { return condition_; }
    [[nodiscard]] const std::vector<Index>& mask() const { return mask_; }

private:
    std::vector<Index> mask_;
    Vector sqrt_w_;
    Eigen::ColPivHouseholderQR<Matrix> qr_;
    Index modes_ = 0;
    double condition_ = 1.0;
};

struct GappyResult {
    Vector coordinates;
    double condition = 1.0;
};

inline GappyResult gappy_reconstruct(const Matrix& modes, const Vector& masked_values, std::vector<Index> mask,
                                     const Vector& mask_weights)
{
    GappyReconstructor g(modes, std::move(mask), mask_weights);
    return {g.solve(masked_values), g.condition()};
}

} // namespace eqrom
