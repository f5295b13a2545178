#pragma once

#include "assembly.hpp"

#include <Eigen/Jacobi>
#include <Eigen/QR>

#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace eqrom {

enum class EqLevel { Volume, Surface };

inline std::string to_string(EqLevel l) { return l == EqLevel::Volume ? "volume" : "surface"; }

enum class RowKind { Internal, External, Measure };

struct DictionaryRow {
    RowKind kind = RowKind::Internal;
    Index mode = -1;     // -1 for the measure row
    Index snapshot = -1; // -1 unless internal
};

/// Normalized EQ dictionary of one mesh level: column q holds element q's
/// contribution to every training integral, each row divided by its full-mesh total.
struct Dictionary {
    EqLevel level = EqLevel::Volume;
    Matrix G;
    Vector y;
    std::vector<DictionaryRow> rows;
    std::vector<Index> columns; // element index per column
    std::vector<DictionaryRow> dropped;
    Index internal_rows = 0;
    Index external_rows = 0;
};

namespace detail {

inline constexpr double row_drop_ratio = 1e-12;

// The last raw row is the measure row (element volumes or areas). Every other
// row r gets c_r = sign(t_r) Σ_q |G_rq| / |level| times the measure row added
// before division by its new total, so rows whose plain total cancels (modes
// orthogonal to the load) stay bounded. Rows with negligible magnitude are dropped.
inline Dictionary normalize_dictionary(EqLevel level, const Matrix& raw, std::vector<DictionaryRow> info,
                                       std::vector<Index> columns)
{
    const Index last = raw.rows() - 1;
    const Vector totals = raw.rowwise().sum();
    const Vector magnitude = raw.cwiseAbs().rowwise().sum();
    const double max_mag = magnitude.maxCoeff();
    const double measure = totals[last];
    if (!(measure > 0.0)) {
        throw InputError("EQ dictionary (" + to_string(level) + "): level has zero measure");
    }
    Dictionary d;
    d.level = level;
    d.columns = std::move(columns);
    std::vector<Index> keep;
    for (Index r = 0; r < raw.rows(); ++r) {
        if (magnitude[r] > row_drop_ratio * max_mag) {
            keep.push_back(r);
        } else {
            d.dropped.push_back(info[static_cast<std::size_t>(r)]);
        }
    }
    d.G.resize(static_cast<Index>(keep.size()), raw.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const Index r = keep[i];
        const auto& ri = info[static_cast<std::size_t>(r)];
        if (ri.kind == RowKind::Measure) {
            d.G.row(static_cast<Index>(i)) = raw.row(r) / measure;
        } else {
            const double sign = totals[r] < 0.0 ? -1.0 : 1.0;
            const double c = sign * magnitude[r] / measure;
            d.G.row(static_cast<Index>(i)) = (raw.row(r) + c * raw.row(last)) / (totals[r] + c * measure);
        }
        d.rows.push_back(ri);
        d.internal_rows += ri.kind == RowKind::Internal;
        d.external_rows += ri.kind == RowKind::External;
    }
    d.y = Vector::Ones(d.G.rows());
    return d;
}

/// Position of the measure row in a dictionary.
inline Index measure_row(const Dictionary& d)
{
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
        if (d.rows[i].kind == RowKind::Measure) {
            return static_cast<Index>(i);
        }
    }
    return -1;
}

} // namespace detail

/// Element-wise virtual work of every (mode, snapshot) pair on the volume level:
/// A_q(n, k) = Σ_{i ∈ q} w_i σ_i^(k) : ε(ζ_n)_i, an N_u × K block per element.
inline std::vector<Matrix> element_internal_work(const Mesh& mesh, const Matrix& modes, const Matrix& stress_snapshots)
{
    const int qpe = mesh.points_per_element();
    const int npe = mesh.nodes_per_element();
    const int ndof = mesh.dofs_per_element();
    std::vector<Matrix> out(static_cast<std::size_t>(mesh.volume_count()));
    Matrix zq(ndof, modes.cols());
    for (Index q = 0; q < mesh.volume_count(); ++q) {
        for (int i = 0; i < ndof; ++i) {
            zq.row(i) = modes.row(mesh.dof(q, i));
        }
        Matrix a = Matrix::Zero(modes.cols(), stress_snapshots.cols());
        for (int i = 0; i < qpe; ++i) {
            const Index point = q * qpe + i;
            const auto b = strain_matrix(mesh.point_gradients(point), npe);
            const Matrix eps = b * zq; // 6 × N_u, engineering shears
            a.noalias() += mesh.point_weight(point) * (eps.transpose() * stress_snapshots.middleRows(6 * point, 6));
        }
        out[static_cast<std::size_t>(q)] = std::move(a);
    }
    return out;
}

/// Volume-level dictionary: internal rows (mode-major over snapshots),
/// body-force rows when the body force is nonzero, then the volume row.
inline Dictionary build_volume_dictionary(const Mesh& mesh, const Matrix& modes, const Matrix& stress_snapshots,
                                          const Loading& load)
{
    detail::require(modes.rows() == mesh.dof_count(), "build_dictionary: mode size does not match the mesh");
    detail::require(stress_snapshots.rows() == mesh.stress_size(),
                    "build_dictionary: stress snapshot size does not match the mesh");
    const Index nu = modes.cols();
    const Index ks = stress_snapshots.cols();
    const bool body = load.body_force.squaredNorm() > 0.0;
    const Index n_rows = nu * ks + (body ? nu : 0) + 1;
    const Index ne = mesh.volume_count();
    Matrix raw(n_rows, ne);
    std::vector<DictionaryRow> info;
    for (Index n = 0; n < nu; ++n) {
        for (Index k = 0; k < ks; ++k) {
            info.push_back({RowKind::Internal, n, k});
        }
    }
    if (body) {
        for (Index n = 0; n < nu; ++n) {
            info.push_back({RowKind::External, n, -1});
        }
    }
    info.push_back({RowKind::Measure, -1, -1});

    const auto work = element_internal_work(mesh, modes, stress_snapshots);
    for (Index q = 0; q < ne; ++q) {
        const Matrix& a = work[static_cast<std::size_t>(q)];
        for (Index n = 0; n < nu; ++n) {
            raw.col(q).segment(n * ks, ks) = a.row(n).transpose();
        }
        if (body) {
            const auto fe = element_volume_force(mesh, q, load.body_force);
            for (Index n = 0; n < nu; ++n) {
                double s = 0.0;
                for (int i = 0; i < mesh.dofs_per_element(); ++i) {
                    s += fe[i] * modes(mesh.dof(q, i), n);
                }
                raw(nu * ks + n, q) = s;
            }
        }
        raw(n_rows - 1, q) = mesh.element_volume(q);
    }
    std::vector<Index> cols(static_cast<std::size_t>(ne));
    for (Index q = 0; q < ne; ++q) {
        cols[static_cast<std::size_t>(q)] = q;
    }
    return detail::normalize_dictionary(EqLevel::Volume, raw, std::move(info), std::move(cols));
}

/// Surface-level dictionary over the loaded surface group: traction rows per mode, then the area row.
inline Dictionary build_surface_dictionary(const Mesh& mesh, const Matrix& modes, const Loading& load)
{
    detail::require(modes.rows() == mesh.dof_count(), "build_dictionary: mode size does not match the mesh");
    const auto elems = mesh.surface_elements_in(load.traction_group);
    detail::require(!elems.empty(), "build_dictionary: traction group has no surface elements");
    const Index nu = modes.cols();
    const bool traction = load.traction.squaredNorm() > 0.0;
    const Index n_rows = (traction ? nu : 0) + 1;
    Matrix raw(n_rows, static_cast<Index>(elems.size()));
    std::vector<DictionaryRow> info;
    if (traction) {
        for (Index n = 0; n < nu; ++n) {
            info.push_back({RowKind::External, n, -1});
        }
    }
    info.push_back({RowKind::Measure, -1, -1});
    const int nps = mesh.nodes_per_surface_element();
    for (std::size_t c = 0; c < elems.size(); ++c) {
        const Index s = elems[c];
        if (traction) {
            const auto fe = surface_traction_force(mesh, s, load.traction);
            for (Index n = 0; n < nu; ++n) {
                double v = 0.0;
                for (int i = 0; i < 3 * nps; ++i) {
                    v += fe[i] * modes(surface_dof(mesh, s, i), n);
                }
                raw(n, static_cast<Index>(c)) = v;
            }
        }
        raw(n_rows - 1, static_cast<Index>(c)) = mesh.surface_area(s);
    }
    return detail::normalize_dictionary(EqLevel::Surface, raw, std::move(info), elems);
}

/// Sparse non-negative element weights on one level.
struct EqRule {
    EqLevel level = EqLevel::Volume;
    Vector weights;             // one per dictionary column
    std::vector<Index> columns; // element index per column
    double delta = 0.0;
    double achieved_residual = 0.0; // ‖Gρ − y‖₂ / ‖y‖₂
    bool converged = true;
    int iterations = 0;

    [[nodiscard]] Index support_size() const { return (weights.array() > 0.0).count(); }

    /// (element, weight) pairs with positive weight, ascending element index.
    [[nodiscard]] std::vector<std::pair<Index, double>> support() const
    {
        std::vector<std::pair<Index, double>> s;
        for (Index i = 0; i < weights.size(); ++i) {
            if (weights[i] > 0.0) {
                s.emplace_back(columns.empty() ? i : columns[static_cast<std::size_t>(i)], weights[i]);
            }
        }
        std::sort(s.begin(), s.end());
        return s;
    }
};

namespace detail {

// Thin QR of the passive columns, grown by re-orthogonalized Gram-Schmidt.
class PassiveQr {
public:
    explicit PassiveQr(const Matrix& g) : g_(g), q_(g.rows(), 0), r_(0, 0) {}

    // Appends column j; returns false (and leaves the factorization unchanged)
    // when it is numerically dependent on the current columns.
    bool add(Index j)
    {
        Vector v = g_.col(j);
        const double norm0 = v.norm();
        const Index p = q_.cols();
        Vector h = Vector::Zero(p);
        for (int pass = 0; pass < 2 && p > 0; ++pass) {
            const Vector c = q_.transpose() * v;
            v -= q_ * c;
            h += c;
        }
        const double rn = v.norm();
        if (!(rn > 1e-12 * norm0)) {
            return false;
        }
        q_.conservativeResize(Eigen::NoChange, p + 1);
        q_.col(p) = v / rn;
        Matrix r(p + 1, p + 1);
        r.setZero();
        r.topLeftCorner(p, p) = r_;
        r.col(p).head(p) = h;
        r(p, p) = rn;
        r_ = std::move(r);
        cols_.push_back(j);
        return true;
    }

    // Drops the column at position k; Givens rotations restore the triangle.
    void remove(std::size_t k)
    {
        const Index p = static_cast<Index>(cols_.size());
        Matrix r(p, p - 1);
        r.leftCols(static_cast<Index>(k)) = r_.leftCols(static_cast<Index>(k));
        r.rightCols(p - 1 - static_cast<Index>(k)) = r_.rightCols(p - 1 - static_cast<Index>(k));
        for (Index i = static_cast<Index>(k); i < p - 1; ++i) {
            Eigen::JacobiRotation<double> rot;
            rot.makeGivens(r(i, i), r(i + 1, i));
            r.applyOnTheLeft(i, i + 1, rot.adjoint());
            q_.applyOnTheRight(i, i + 1, rot);
            r(i + 1, i) = 0.0;
        }
        r_ = r.topRows(p - 1);
        q_.conservativeResize(Eigen::NoChange, p - 1);
        cols_.erase(cols_.begin() + static_cast<std::ptrdiff_t>(k));
    }

    [[nodiscard]] Vector solve(const Vector& y) const
    {
        if (cols_.empty()) {
            return Vector();
        }
        return r_.triangularView<Eigen::Upper>().solve(Vector(q_.transpose() * y));
    }

    [[nodiscard]] const std::vector<Index>& columns() const { return cols_; }
    [[nodiscard]] const Matrix& q() const { return q_; }
    [[nodiscard]] const Matrix& r() const { return r_; }

private:
    const Matrix& g_;
    Matrix q_;
    Matrix r_;
    std::vector<Index> cols_;
};

} // namespace detail

/// Lawson–Hanson active-set NNLS stopped at the first iterate with
/// ‖Gρ − y‖₂ ≤ δ‖y‖₂ and |(Gρ − y)_i| ≤ δ|y_i| on every row of `strict_rows`.
/// Entering columns are chosen by the largest positive gradient component
/// w = Gᵀr; ties go to the lowest index.
///
/// With `sparsify`, the entering column is instead the one whose addition
/// reduces the residual most (largest w_j² / ‖P g_j‖², P projecting out the
/// passive columns), and once the criterion holds passive columns are dropped
/// one at a time while it keeps holding. This gives smaller supports, but such
/// rules can leave the reduced Jacobian nearly singular at loose tolerances.
inline EqRule nnls_sparse(const Matrix& G, const Vector& y, double delta, const std::vector<Index>& strict_rows = {},
                          bool sparsify = false)
{
    detail::require(delta > 0.0, "nnls_sparse: delta must be positive");
    detail::require(G.rows() > 0 && G.cols() > 0 && G.rows() == y.size(), "nnls_sparse: empty or inconsistent system");
    for (Index i : strict_rows) {
        detail::require(i >= 0 && i < G.rows(), "nnls_sparse: strict row out of range");
    }
    const Index n = G.cols();
    const double y_norm = y.norm();
    const double target = delta * y_norm;
    EqRule rule;
    rule.delta = delta;
    rule.weights = Vector::Zero(n);
    if (y_norm == 0.0) {
        return rule;
    }
    auto satisfied = [&](const Vector& res_vec, double res) {
        if (res > target) {
            return false;
        }
        for (Index i : strict_rows) {
            if (std::abs(res_vec[i]) > delta * std::abs(y[i])) {
                return false;
            }
        }
        return true;
    };

    Vector x = Vector::Zero(n);
    Vector r = y;
    // 0 free, 1 passive, 2 rejected as dependent until the passive set shrinks
    std::vector<char> state(static_cast<std::size_t>(n), 0);
    detail::PassiveQr qr(G);
    Vector best = x;
    double best_res = y_norm;
    const double g_scale = G.cwiseAbs().maxCoeff();
    const double w_floor = 64.0 * std::numeric_limits<double>::epsilon() * g_scale * std::sqrt(double(G.rows()));
    const int max_outer = static_cast<int>(3 * n + 10);
    const Vector col_norm2 = sparsify ? Vector(G.colwise().squaredNorm().transpose()) : Vector();
    Vector proj2 = Vector::Zero(n);
    Index proj_cols = 0;
    bool proj_dirty = false;
    int outer = 0;
    bool converged = false;

    while (true) {
        const double res = r.norm();
        if (res < best_res) {
            best_res = res;
            best = x;
        }
        if (satisfied(r, res)) {
            converged = true;
            break;
        }
        if (outer >= max_outer) {
            break;
        }
        const Vector w = G.transpose() * r;
        if (sparsify && (proj_cols != static_cast<Index>(qr.columns().size()) || proj_dirty)) {
            proj2 = (qr.q().transpose() * G).colwise().squaredNorm().transpose();
            proj_cols = static_cast<Index>(qr.columns().size());
            proj_dirty = false;
        }
        Index j = -1;
        double best_gain = 0.0;
        for (Index c = 0; c < n; ++c) {
            if (state[static_cast<std::size_t>(c)] != 0 || !(w[c] > w_floor * res)) {
                continue;
            }
            double gain = w[c];
            if (sparsify) {
                const double left = std::max(col_norm2[c] - proj2[c], 0.0);
                if (!(left > 1e-24 * col_norm2[c])) {
                    continue;
                }
                gain = w[c] * w[c] / left;
            }
            if (gain > best_gain) {
                best_gain = gain;
                j = c;
            }
        }
        if (j < 0) {
            break;
        }
        ++outer;
        if (!qr.add(j)) {
            state[static_cast<std::size_t>(j)] = 2;
            continue;
        }
        if (sparsify) {
            proj2 += (G.transpose() * qr.q().col(qr.q().cols() - 1)).cwiseAbs2();
            ++proj_cols;
        }
        state[static_cast<std::size_t>(j)] = 1;

        for (int inner = 0; inner < max_outer; ++inner) {
            const auto& passive = qr.columns();
            const Vector z = qr.solve(y);
            bool feasible = true;
            for (Index i = 0; i < z.size(); ++i) {
                if (!(z[i] > 0.0)) {
                    feasible = false;
                    break;
                }
            }
            if (feasible) {
                for (std::size_t i = 0; i < passive.size(); ++i) {
                    x[passive[i]] = z[static_cast<Index>(i)];
                }
                break;
            }
            double alpha = 1.0;
            for (std::size_t i = 0; i < passive.size(); ++i) {
                const double zi = z[static_cast<Index>(i)];
                const double xi = x[passive[i]];
                if (!(zi > 0.0)) {
                    alpha = std::min(alpha, xi / (xi - zi));
                }
            }
            for (std::size_t i = 0; i < passive.size(); ++i) {
                x[passive[i]] += alpha * (z[static_cast<Index>(i)] - x[passive[i]]);
            }
            const double x_max = std::max(1.0, x.maxCoeff());
            for (std::size_t i = passive.size(); i-- > 0;) {
                const Index c = passive[i];
                if (!(x[c] > 1e-14 * x_max)) {
                    x[c] = 0.0;
                    state[static_cast<std::size_t>(c)] = 0;
                    qr.remove(i);
                    proj_dirty = true;
                }
            }
            for (auto& st : state) {
                if (st == 2) {
                    st = 0;
                }
            }
            if (qr.columns().empty()) {
                break;
            }
        }
        r = y;
        for (Index c : qr.columns()) {
            r -= x[c] * G.col(c);
        }
    }
    if (converged && sparsify) {
        // Backward pass: drop the passive column whose removal keeps the
        // criterion with the smallest residual, using the downdate of the
        // least-squares solution through M = (RᵀR)⁻¹.
        while (qr.columns().size() > 1) {
            const auto& passive = qr.columns();
            const Index p = static_cast<Index>(passive.size());
            const Matrix rinv = qr.r().triangularView<Eigen::Upper>().solve(Matrix::Identity(p, p));
            const Matrix m = rinv * rinv.transpose();
            Vector xs(p);
            for (Index i = 0; i < p; ++i) {
                xs[i] = x[passive[static_cast<std::size_t>(i)]];
            }
            const double r2 = r.squaredNorm();
            Index drop = -1;
            double drop_res = std::numeric_limits<double>::infinity();
            for (Index i = 0; i < p; ++i) {
                const double t = xs[i] / m(i, i);
                const double res2 = r2 + xs[i] * t;
                if (!(res2 <= target * target) || !(res2 < drop_res)) {
                    continue;
                }
                const Vector xn = xs - t * m.col(i);
                bool ok = true;
                for (Index k = 0; k < p && ok; ++k) {
                    ok = k == i || xn[k] > 0.0;
                }
                for (Index row : strict_rows) {
                    if (!ok) {
                        break;
                    }
                    double gm = 0.0;
                    for (Index k = 0; k < p; ++k) {
                        gm += G(row, passive[static_cast<std::size_t>(k)]) * m(k, i);
                    }
                    ok = std::abs(r[row] + t * gm) <= delta * std::abs(y[row]);
                }
                if (ok) {
                    drop = i;
                    drop_res = res2;
                }
            }
            if (drop < 0) {
                break;
            }
            const Vector kept = x;
            const Vector xn = xs - xs[drop] / m(drop, drop) * m.col(drop);
            for (Index k = 0; k < p; ++k) {
                x[passive[static_cast<std::size_t>(k)]] = k == drop ? 0.0 : xn[k];
            }
            qr.remove(static_cast<std::size_t>(drop));
            r = y;
            for (Index c : qr.columns()) {
                r -= x[c] * G.col(c);
            }
            if (!satisfied(r, r.norm())) {
                // round-off pushed it over: restore by a fresh solve on the kept set
                const Vector z = qr.solve(y);
                for (std::size_t k = 0; k < qr.columns().size(); ++k) {
                    x[qr.columns()[k]] = z[static_cast<Index>(k)];
                }
                r = y - G * x;
                if (!satisfied(r, r.norm()) || z.minCoeff() <= 0.0) {
                    x = kept;
                    break;
                }
            }
        }
    }
    rule.weights = converged ? x : best;
    const Vector res_vec = y - G * rule.weights;
    rule.achieved_residual = res_vec.norm() / y_norm;
    rule.converged = satisfied(res_vec, res_vec.norm());
    rule.iterations = outer;
    return rule;
}

/// Solves the NNLS problem of a dictionary and maps columns back to elements.
inline EqRule solve_rule(const Dictionary& d, double delta)
{
    const Index m = detail::measure_row(d);
    EqRule rule = nnls_sparse(d.G, d.y, delta, m >= 0 ? std::vector<Index>{m} : std::vector<Index>{});
    rule.level = d.level;
    rule.columns = d.columns;
    return rule;
}

struct EqResult {
    EqRule volume;
    EqRule surface;
    ReducedMesh reduced_mesh;
    Index volume_rows = 0;
    Index surface_rows = 0;
    std::vector<DictionaryRow> dropped_rows;

    [[nodiscard]] double kept_volume_fraction() const
    {
        return static_cast<double>(reduced_mesh.kept_volume.size()) /
               static_cast<double>(reduced_mesh.parent->volume_count());
    }
};

/// One NNLS call per mesh level, then the reduced mesh from the union of kept elements.
/// The surface level is skipped (empty rule) when no traction is applied.
inline EqResult empirical_quadrature(const Mesh& mesh, const Matrix& modes, const Matrix& stress_snapshots,
                                     const Loading& load, double delta)
{
    EqResult out;
    const auto dv = build_volume_dictionary(mesh, modes, stress_snapshots, load);
    out.volume = solve_rule(dv, delta);
    out.volume_rows = dv.G.rows();
    out.dropped_rows = dv.dropped;

    std::vector<Index> surf_elems;
    Vector surf_w;
    out.surface.level = EqLevel::Surface;
    out.surface.delta = delta;
    if (load.traction.squaredNorm() > 0.0) {
        const auto ds = build_surface_dictionary(mesh, modes, load);
        out.surface = solve_rule(ds, delta);
        out.surface_rows = ds.G.rows();
        surf_elems = ds.columns;
        surf_w = out.surface.weights;
        out.dropped_rows.insert(out.dropped_rows.end(), ds.dropped.begin(), ds.dropped.end());
    }
    out.reduced_mesh = extract_reduced_mesh(mesh, out.volume.weights, surf_elems, surf_w);
    return out;
}

/// Unit weights on every element of both levels (hyper-reduction switched off).
inline EqResult full_quadrature(const Mesh& mesh, const Loading& load)
{
    EqResult out;
    out.volume.level = EqLevel::Volume;
    out.volume.weights = Vector::Ones(mesh.volume_count());
    out.volume.columns.resize(static_cast<std::size_t>(mesh.volume_count()));
    for (Index q = 0; q < mesh.volume_count(); ++q) {
        out.volume.columns[static_cast<std::size_t>(q)] = q;
    }
    out.surface.level = EqLevel::Surface;
    std::vector<Index> surf;
    if (load.traction.squaredNorm() > 0.0) {
        surf = mesh.surface_elements_in(load.traction_group);
    }
    out.surface.columns = surf;
    out.surface.weights = Vector::Ones(static_cast<Index>(surf.size()));
    out.reduced_mesh = extract_reduced_mesh(mesh, out.volume.weights, surf, out.surface.weights);
    return out;
}

} // namespace eqrom
