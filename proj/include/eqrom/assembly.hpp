#pragma once

#include "materials.hpp"
#include "mesh.hpp"

#include <Eigen/SparseQR>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eqrom {

// Element-sized dense objects without heap allocation (up to T10: 30 dofs).
using ElementVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 30, 1>;
using ElementMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 30, 30>;
using StrainMatrix = Eigen::Matrix<double, 6, Eigen::Dynamic, 0, 6, 30>;

/// Per quadrature point states, element-major (same numbering as Mesh points,
/// or local to an element subset when used on a reduced mesh).
using StateField = std::vector<PointState>;

inline Vector stress_vector(const StateField& states)
{
    Vector s(6 * static_cast<Index>(states.size()));
    for (std::size_t i = 0; i < states.size(); ++i) {
        s.segment<6>(6 * static_cast<Index>(i)) = states[i].stress;
    }
    return s;
}

inline Vector cumulative_plastic_strain(const StateField& states)
{
    Vector p(static_cast<Index>(states.size()));
    for (std::size_t i = 0; i < states.size(); ++i) {
        p[static_cast<Index>(i)] = states[i].p;
    }
    return p;
}

/// Engineering-strain operator ε = B u_e at a point with physical gradients `grads`.
inline StrainMatrix strain_matrix(std::span<const double> grads, int nodes)
{
    StrainMatrix b = StrainMatrix::Zero(6, 3 * nodes);
    for (int a = 0; a < nodes; ++a) {
        const double dx = grads[static_cast<std::size_t>(3 * a)];
        const double dy = grads[static_cast<std::size_t>(3 * a + 1)];
        const double dz = grads[static_cast<std::size_t>(3 * a + 2)];
        const int c = 3 * a;
        b(0, c) = dx;
        b(1, c + 1) = dy;
        b(2, c + 2) = dz;
        b(3, c) = dy;
        b(3, c + 1) = dx;
        b(4, c + 1) = dz;
        b(4, c + 2) = dy;
        b(5, c) = dz;
        b(5, c + 2) = dx;
    }
    return b;
}

inline ElementVector gather(const Mesh& mesh, Index q, const Vector& global)
{
    const int n = mesh.dofs_per_element();
    ElementVector local(n);
    for (int i = 0; i < n; ++i) {
        local[i] = global[mesh.dof(q, i)];
    }
    return local;
}

/// ∫_{Ω_q} σ : ∇_s v dx for all local test functions; `stress` holds the element's points.
inline ElementVector element_internal_force(const Mesh& mesh, Index q, std::span<const double> stress)
{
    const int qpe = mesh.points_per_element();
    const int npe = mesh.nodes_per_element();
    ElementVector f = ElementVector::Zero(3 * npe);
    for (int i = 0; i < qpe; ++i) {
        const Index point = q * qpe + i;
        const auto b = strain_matrix(mesh.point_gradients(point), npe);
        const Eigen::Map<const Voigt> s(stress.data() + 6 * i);
        f.noalias() += mesh.point_weight(point) * (b.transpose() * s);
    }
    return f;
}

/// ∫_{Ω_q} f_v · v dx for a uniform body force.
inline ElementVector element_volume_force(const Mesh& mesh, Index q, const Vec3& body_force)
{
    const auto rule = shape::tet_rule(mesh.order());
    const int npe = mesh.nodes_per_element();
    ElementVector f = ElementVector::Zero(3 * npe);
    std::vector<double> n(static_cast<std::size_t>(npe));
    for (std::size_t i = 0; i < rule.weights.size(); ++i) {
        shape::tet_values(mesh.order(), rule.points[i], n);
        const double w = mesh.point_weight(q * static_cast<Index>(rule.weights.size()) + static_cast<Index>(i));
        for (int a = 0; a < npe; ++a) {
            f.segment<3>(3 * a) += w * n[static_cast<std::size_t>(a)] * body_force;
        }
    }
    return f;
}

/// ∫_{Γ_s} f_s · v ds for a uniform traction on surface element s.
inline ElementVector surface_traction_force(const Mesh& mesh, Index s, const Vec3& traction)
{
    const auto rule = shape::tri_rule(mesh.order());
    const int nps = mesh.nodes_per_surface_element();
    ElementVector f = ElementVector::Zero(3 * nps);
    std::vector<double> n(static_cast<std::size_t>(nps));
    for (std::size_t i = 0; i < rule.weights.size(); ++i) {
        shape::tri_values(mesh.order(), rule.points[i], n);
        const double w = mesh.surface_point_weight(s, static_cast<int>(i));
        for (int a = 0; a < nps; ++a) {
            f.segment<3>(3 * a) += w * n[static_cast<std::size_t>(a)] * traction;
        }
    }
    return f;
}

inline Index surface_dof(const Mesh& mesh, Index s, int i_loc)
{
    return 3 * mesh.surface_element(s)[static_cast<std::size_t>(i_loc / 3)] + i_loc % 3;
}

/// Result of evaluating one element at a trial displacement.
struct ElementResponse {
    ElementVector internal_force;
    ElementMatrix jacobian;
    std::vector<PointState> states;
};

struct MaterialOptions {
    TangentMode tangent = TangentMode::Consistent;
    ReturnMapOptions return_map;
};

/// Advances the element's point states from `prev_states` under the strain
/// increment of (u_now − u_prev) and integrates internal force and tangent.
inline ElementResponse evaluate_element(const Mesh& mesh, Index q, const ElementVector& u_now,
                                        const ElementVector& u_prev, std::span<const PointState> prev_states,
                                        const ElastoplasticParams& params, const MaterialOptions& opt,
                                        bool want_jacobian)
{
    const int qpe = mesh.points_per_element();
    const int npe = mesh.nodes_per_element();
    ElementResponse r;
    r.internal_force = ElementVector::Zero(3 * npe);
    if (want_jacobian) {
        r.jacobian = ElementMatrix::Zero(3 * npe, 3 * npe);
    }
    r.states.resize(static_cast<std::size_t>(qpe));
    const ElementVector du = u_now - u_prev;
    for (int i = 0; i < qpe; ++i) {
        const Index point = q * qpe + i;
        const auto b = strain_matrix(mesh.point_gradients(point), npe);
        const Voigt deps = b * du;
        const auto& prev = prev_states[static_cast<std::size_t>(i)];
        ReturnMapResult rm;
        try {
            rm = return_map(prev, deps, params, opt.return_map);
        } catch (const SolverError& e) {
            throw SolverError("element " + std::to_string(q) + ": " + e.what());
        }
        const double w = mesh.point_weight(point);
        r.internal_force.noalias() += w * (b.transpose() * rm.state.stress);
        if (want_jacobian) {
            const Voigt6x6 d = opt.tangent == TangentMode::Consistent
                                   ? consistent_tangent(prev, deps, rm.state, params)
                                   : elastic_matrix(params);
            r.jacobian.noalias() += w * (b.transpose() * d * b);
        }
        r.states[static_cast<std::size_t>(i)] = rm.state;
    }
    return r;
}

/// Elements taking part in an assembly, with optional positive weights
/// (empty weights mean unit weights on every listed element).
struct ElementSet {
    std::vector<Index> elements;
    std::vector<double> weights;

    static ElementSet all(const Mesh& mesh)
    {
        ElementSet s;
        s.elements.resize(static_cast<std::size_t>(mesh.volume_count()));
        for (Index q = 0; q < mesh.volume_count(); ++q) {
            s.elements[static_cast<std::size_t>(q)] = q;
        }
        return s;
    }

    [[nodiscard]] std::size_t size() const { return elements.size(); }
    [[nodiscard]] double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
};

struct AssemblyResult {
    Vector internal_force;
    SparseMatrix jacobian; // empty unless requested
    StateField states;     // local to the element set
};

/// Weighted internal-force (and Jacobian) assembly over an element set in
/// ascending list order. States are stored per listed element.
inline AssemblyResult assemble_internal(const Mesh& mesh, const ElementSet& set, const Vector& u, const Vector& u_prev,
                                        const StateField& prev_states, const ElastoplasticParams& params,
                                        const MaterialOptions& opt, bool want_jacobian)
{
    const int qpe = mesh.points_per_element();
    const int ndof = mesh.dofs_per_element();
    detail::require(u.size() == mesh.dof_count() && u_prev.size() == mesh.dof_count(),
                    "assemble: displacement size mismatch");
    detail::require(prev_states.size() == set.size() * static_cast<std::size_t>(qpe), "assemble: state size mismatch");
    AssemblyResult out;
    out.internal_force = Vector::Zero(mesh.dof_count());
    out.states.resize(prev_states.size());
    std::vector<Triplet> triplets;
    if (want_jacobian) {
        triplets.reserve(set.size() * static_cast<std::size_t>(ndof * ndof));
    }
    for (std::size_t e = 0; e < set.size(); ++e) {
        const Index q = set.elements[e];
        const double w = set.weight(e);
        const std::span<const PointState> prev(prev_states.data() + e * static_cast<std::size_t>(qpe),
                                               static_cast<std::size_t>(qpe));
        auto resp = evaluate_element(mesh, q, gather(mesh, q, u), gather(mesh, q, u_prev), prev, params, opt,
                                     want_jacobian);
        for (int i = 0; i < ndof; ++i) {
            out.internal_force[mesh.dof(q, i)] += set.weights.empty() ? resp.internal_force[i]
                                                                      : w * resp.internal_force[i];
        }
        if (want_jacobian) {
            for (int i = 0; i < ndof; ++i) {
                for (int j = 0; j < ndof; ++j) {
                    triplets.emplace_back(mesh.dof(q, i), mesh.dof(q, j), w * resp.jacobian(i, j));
                }
            }
        }
        std::copy(resp.states.begin(), resp.states.end(), out.states.begin() + static_cast<std::ptrdiff_t>(e) * qpe);
    }
    if (want_jacobian) {
        out.jacobian.resize(mesh.dof_count(), mesh.dof_count());
        out.jacobian.setFromTriplets(triplets.begin(), triplets.end());
    }
    return out;
}

/// Loading: uniform traction on a surface group plus uniform body force,
/// both scaled by the load factor g(t).
struct Loading {
    Vec3 traction{0.0, 150.0, 0.0};
    std::string traction_group = groups::top;
    Vec3 body_force = Vec3::Zero();
};

/// External force vector at unit load factor; optional EQ weights per level.
/// `surface_set` indexes surface elements directly.
inline Vector assemble_external(const Mesh& mesh, const Loading& load, const ElementSet& volume_set,
                                const ElementSet& surface_set)
{
    Vector f = Vector::Zero(mesh.dof_count());
    if (load.body_force.squaredNorm() > 0.0) {
        for (std::size_t e = 0; e < volume_set.size(); ++e) {
            const Index q = volume_set.elements[e];
            const auto fe = element_volume_force(mesh, q, load.body_force);
            for (int i = 0; i < mesh.dofs_per_element(); ++i) {
                f[mesh.dof(q, i)] += volume_set.weight(e) * fe[i];
            }
        }
    }
    if (load.traction.squaredNorm() > 0.0) {
        const int nps = mesh.nodes_per_surface_element();
        for (std::size_t e = 0; e < surface_set.size(); ++e) {
            const Index s = surface_set.elements[e];
            const auto fe = surface_traction_force(mesh, s, load.traction);
            for (int i = 0; i < 3 * nps; ++i) {
                f[surface_dof(mesh, s, i)] += surface_set.weight(e) * fe[i];
            }
        }
    }
    return f;
}

inline ElementSet traction_surface_set(const Mesh& mesh, const Loading& load)
{
    ElementSet s;
    s.elements = mesh.surface_elements_in(load.traction_group);
    return s;
}

inline Vector assemble_external(const Mesh& mesh, const Loading& load)
{
    return assemble_external(mesh, load, ElementSet::all(mesh), traction_surface_set(mesh, load));
}

/// Linear-elastic stiffness matrix K (the displacement inner product at the parameter centroid).
inline SparseMatrix assemble_elastic_stiffness(const Mesh& mesh, const ElastoplasticParams& params)
{
    const int qpe = mesh.points_per_element();
    const int npe = mesh.nodes_per_element();
    const int ndof = mesh.dofs_per_element();
    const Voigt6x6 d = elastic_matrix(params);
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(mesh.volume_count() * ndof * ndof));
    for (Index q = 0; q < mesh.volume_count(); ++q) {
        ElementMatrix ke = ElementMatrix::Zero(ndof, ndof);
        for (int i = 0; i < qpe; ++i) {
            const Index point = q * qpe + i;
            const auto b = strain_matrix(mesh.point_gradients(point), npe);
            ke.noalias() += mesh.point_weight(point) * (b.transpose() * d * b);
        }
        for (int i = 0; i < ndof; ++i) {
            for (int j = 0; j < ndof; ++j) {
                triplets.emplace_back(mesh.dof(q, i), mesh.dof(q, j), ke(i, j));
            }
        }
    }
    SparseMatrix k(mesh.dof_count(), mesh.dof_count());
    k.setFromTriplets(triplets.begin(), triplets.end());
    return k;
}

/// F with (F, v) = ∫ ζ : ε(v) dx, i.e. the internal force of a stress field.
inline Vector nodal_force_of_stress(const Mesh& mesh, const Vector& stress)
{
    detail::require(stress.size() == mesh.stress_size(), "nodal_force_of_stress: stress vector size mismatch");
    const int qpe = mesh.points_per_element();
    Vector f = Vector::Zero(mesh.dof_count());
    for (Index q = 0; q < mesh.volume_count(); ++q) {
        const std::span<const double> s(stress.data() + 6 * qpe * q, static_cast<std::size_t>(6 * qpe));
        const auto fe = element_internal_force(mesh, q, s);
        for (int i = 0; i < mesh.dofs_per_element(); ++i) {
            f[mesh.dof(q, i)] += fe[i];
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// Kinematic constraints B u = 0
// ---------------------------------------------------------------------------

struct BoundaryConditions {
    struct Fix {
        std::string group;
        int component;
    };
    struct Tie {
        std::string group;
        int component;
    };
    std::vector<Fix> fixes;
    std::vector<Tie> ties;

    /// Symmetry planes plus a tied (uniform) displacement component on the loaded face.
    static BoundaryConditions plate(int tie_component = 1)
    {
        BoundaryConditions bc;
        bc.fixes = {{groups::bottom, 1}, {groups::left, 0}, {groups::back, 2}};
        bc.ties = {{groups::top, tie_component}};
        return bc;
    }
};

struct ConstraintMatrix {
    SparseMatrix B; // rows x dofs
    Index fixed_rows = 0;

    [[nodiscard]] Index rows() const { return B.rows(); }
};

inline Index sparse_rank(const SparseMatrix& m)
{
    if (m.rows() == 0 || m.cols() == 0) {
        return 0;
    }
    SparseMatrix mt = m.transpose();
    mt.makeCompressed();
    Eigen::SparseQR<SparseMatrix, Eigen::COLAMDOrdering<int>> qr;
    qr.setPivotThreshold(1e-12);
    qr.compute(mt);
    if (qr.info() != Eigen::Success) {
        throw SolverError("rank check: QR factorization failed");
    }
    return qr.rank();
}

/// One unit row per fixed dof and one (+1, −1) row per tied node against the
/// group's lowest-numbered node. Duplicate fixes are merged.
inline ConstraintMatrix build_constraints(const Mesh& mesh, const BoundaryConditions& bc)
{
    std::vector<Triplet> t;
    std::vector<char> fixed(static_cast<std::size_t>(mesh.dof_count()), 0);
    Index row = 0;
    for (const auto& f : bc.fixes) {
        detail::require(f.component >= 0 && f.component < 3, "build_constraints: component must be 0, 1 or 2");
        const auto& nodes = mesh.node_group(f.group);
        detail::require(!nodes.empty(), "build_constraints: empty group " + f.group);
        for (const Index n : nodes) {
            const Index d = 3 * n + f.component;
            if (fixed[static_cast<std::size_t>(d)] != 0) {
                continue;
            }
            fixed[static_cast<std::size_t>(d)] = 1;
            t.emplace_back(row++, d, 1.0);
        }
    }
    const Index fixed_rows = row;
    for (const auto& tie : bc.ties) {
        detail::require(tie.component >= 0 && tie.component < 3, "build_constraints: component must be 0, 1 or 2");
        const auto& nodes = mesh.node_group(tie.group);
        detail::require(!nodes.empty(), "build_constraints: empty group " + tie.group);
        const Index ref = 3 * nodes.front() + tie.component;
        for (std::size_t i = 1; i < nodes.size(); ++i) {
            t.emplace_back(row, 3 * nodes[i] + tie.component, 1.0);
            t.emplace_back(row, ref, -1.0);
            ++row;
        }
    }
    ConstraintMatrix c;
    c.B.resize(row, mesh.dof_count());
    c.B.setFromTriplets(t.begin(), t.end());
    c.B.makeCompressed();
    c.fixed_rows = fixed_rows;
    if (sparse_rank(c.B) != row) {
        throw InputError("build_constraints: constraint rows are linearly dependent");
    }
    return c;
}

} // namespace eqrom
