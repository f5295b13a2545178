#pragma once

#include "common.hpp"

#include <array>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace eqrom {

enum class ElementOrder { Linear, Quadratic };

/// Reference-element quadrature (points in barycentric-free reference coordinates).
struct QuadratureRule {
    std::vector<Vec3> points;
    std::vector<double> weights;
};

namespace shape {

constexpr int tet_nodes(ElementOrder o) { return o == ElementOrder::Linear ? 4 : 10; }
constexpr int tri_nodes(ElementOrder o) { return o == ElementOrder::Linear ? 3 : 6; }

/// Degree-0 exact (T4) or degree-2 exact (T10) tetrahedral rules on the unit tetrahedron (volume 1/6).
inline QuadratureRule tet_rule(ElementOrder o)
{
    if (o == ElementOrder::Linear) {
        return {{Vec3(0.25, 0.25, 0.25)}, {1.0 / 6.0}};
    }
    const double a = 0.5854101966249685;
    const double b = 0.1381966011250105;
    return {{Vec3(b, b, b), Vec3(a, b, b), Vec3(b, a, b), Vec3(b, b, a)},
            {1.0 / 24.0, 1.0 / 24.0, 1.0 / 24.0, 1.0 / 24.0}};
}

/// Triangle rules on the unit triangle (area 1/2); z coordinate unused.
inline QuadratureRule tri_rule(ElementOrder o)
{
    if (o == ElementOrder::Linear) {
        return {{Vec3(1.0 / 3.0, 1.0 / 3.0, 0.0)}, {0.5}};
    }
    return {{Vec3(1.0 / 6.0, 1.0 / 6.0, 0.0), Vec3(2.0 / 3.0, 1.0 / 6.0, 0.0), Vec3(1.0 / 6.0, 2.0 / 3.0, 0.0)},
            {1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0}};
}

/// Local edge numbering of the quadratic tetrahedron (Gmsh convention).
inline constexpr std::array<std::array<int, 2>, 6> tet_edges{{{0, 1}, {1, 2}, {0, 2}, {0, 3}, {2, 3}, {1, 3}}};
inline constexpr std::array<std::array<int, 2>, 3> tri_edges{{{0, 1}, {1, 2}, {2, 0}}};

inline void tet_values(ElementOrder o, const Vec3& xi, std::span<double> n)
{
    const std::array<double, 4> l{1.0 - xi[0] - xi[1] - xi[2], xi[0], xi[1], xi[2]};
    if (o == ElementOrder::Linear) {
        for (int a = 0; a < 4; ++a) {
            n[a] = l[a];
        }
        return;
    }
    for (int a = 0; a < 4; ++a) {
        n[a] = l[a] * (2.0 * l[a] - 1.0);
    }
    for (int e = 0; e < 6; ++e) {
        n[4 + e] = 4.0 * l[tet_edges[e][0]] * l[tet_edges[e][1]];
    }
}

/// Reference gradients, row-major (node, xi-direction).
inline void tet_gradients(ElementOrder o, const Vec3& xi, std::span<double> dn)
{
    const std::array<double, 4> l{1.0 - xi[0] - xi[1] - xi[2], xi[0], xi[1], xi[2]};
    const std::array<Vec3, 4> dl{Vec3(-1, -1, -1), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    if (o == ElementOrder::Linear) {
        for (int a = 0; a < 4; ++a) {
            for (int d = 0; d < 3; ++d) {
                dn[3 * a + d] = dl[a][d];
            }
        }
        return;
    }
    for (int a = 0; a < 4; ++a) {
        for (int d = 0; d < 3; ++d) {
            dn[3 * a + d] = (4.0 * l[a] - 1.0) * dl[a][d];
        }
    }
    for (int e = 0; e < 6; ++e) {
        const int i = tet_edges[e][0];
        const int j = tet_edges[e][1];
        for (int d = 0; d < 3; ++d) {
            dn[3 * (4 + e) + d] = 4.0 * (dl[i][d] * l[j] + l[i] * dl[j][d]);
        }
    }
}

inline void tri_values(ElementOrder o, const Vec3& xi, std::span<double> n)
{
    const std::array<double, 3> l{1.0 - xi[0] - xi[1], xi[0], xi[1]};
    if (o == ElementOrder::Linear) {
        for (int a = 0; a < 3; ++a) {
            n[a] = l[a];
        }
        return;
    }
    for (int a = 0; a < 3; ++a) {
        n[a] = l[a] * (2.0 * l[a] - 1.0);
    }
    for (int e = 0; e < 3; ++e) {
        n[3 + e] = 4.0 * l[tri_edges[e][0]] * l[tri_edges[e][1]];
    }
}

inline void tri_gradients(ElementOrder o, const Vec3& xi, std::span<double> dn)
{
    const std::array<double, 3> l{1.0 - xi[0] - xi[1], xi[0], xi[1]};
    const std::array<std::array<double, 2>, 3> dl{{{-1, -1}, {1, 0}, {0, 1}}};
    if (o == ElementOrder::Linear) {
        for (int a = 0; a < 3; ++a) {
            dn[2 * a] = dl[a][0];
            dn[2 * a + 1] = dl[a][1];
        }
        return;
    }
    for (int a = 0; a < 3; ++a) {
        for (int d = 0; d < 2; ++d) {
            dn[2 * a + d] = (4.0 * l[a] - 1.0) * dl[a][d];
        }
    }
    for (int e = 0; e < 3; ++e) {
        const int i = tri_edges[e][0];
        const int j = tri_edges[e][1];
        for (int d = 0; d < 2; ++d) {
            dn[2 * (3 + e) + d] = 4.0 * (dl[i][d] * l[j] + l[i] * dl[j][d]);
        }
    }
}

} // namespace shape

/// Two-level tetrahedral mesh: volume elements plus tagged surface triangles.
///
/// Geometry (mapped quadrature weights and physical shape-function gradients)
/// is computed once at construction; the object is immutable afterwards.
/// Quadrature points are numbered element-major: point i of element q has
/// global index q * points_per_element() + i.
class Mesh {
public:
    Mesh() = default;

    Mesh(ElementOrder order, std::vector<Vec3> nodes, std::vector<Index> volume_connectivity,
         std::vector<Index> surface_connectivity, std::vector<std::string> surface_groups,
         std::map<std::string, std::vector<Index>> node_groups)
        : order_(order),
          nodes_(std::move(nodes)),
          volume_(std::move(volume_connectivity)),
          surface_(std::move(surface_connectivity)),
          node_groups_(std::move(node_groups))
    {
        const auto npe = static_cast<Index>(nodes_per_element());
        const auto nps = static_cast<Index>(nodes_per_surface_element());
        detail::require(!volume_.empty() && volume_.size() % npe == 0, "mesh: volume connectivity size mismatch");
        detail::require(surface_.size() % nps == 0, "mesh: surface connectivity size mismatch");
        detail::require(surface_groups.size() == surface_.size() / nps, "mesh: one group per surface element");
        for (const Index n : volume_) {
            detail::require(n >= 0 && n < node_count(), "mesh: dangling node reference in volume element");
        }
        for (const Index n : surface_) {
            detail::require(n >= 0 && n < node_count(), "mesh: dangling node reference in surface element");
        }
        for (auto& [name, ids] : node_groups_) {
            for (const Index n : ids) {
                detail::require(n >= 0 && n < node_count(), "mesh: dangling node reference in group " + name);
            }
        }
        for (const auto& g : surface_groups) {
            auto it = std::find(surface_group_names_.begin(), surface_group_names_.end(), g);
            if (it == surface_group_names_.end()) {
                surface_group_names_.push_back(g);
                surface_group_.push_back(static_cast<int>(surface_group_names_.size() - 1));
            } else {
                surface_group_.push_back(static_cast<int>(it - surface_group_names_.begin()));
            }
        }
        compute_volume_geometry();
        compute_surface_geometry();
        check_surface_faces();
    }

    [[nodiscard]] ElementOrder order() const { return order_; }
    [[nodiscard]] int nodes_per_element() const { return shape::tet_nodes(order_); }
    [[nodiscard]] int nodes_per_surface_element() const { return shape::tri_nodes(order_); }
    [[nodiscard]] int points_per_element() const { return static_cast<int>(shape::tet_rule(order_).weights.size()); }
    [[nodiscard]] int points_per_surface_element() const
    {
        return static_cast<int>(shape::tri_rule(order_).weights.size());
    }
    [[nodiscard]] int dofs_per_element() const { return 3 * nodes_per_element(); }

    [[nodiscard]] Index node_count() const { return static_cast<Index>(nodes_.size()); }
    [[nodiscard]] Index dof_count() const { return 3 * node_count(); }
    [[nodiscard]] Index volume_count() const { return static_cast<Index>(volume_.size()) / nodes_per_element(); }
    [[nodiscard]] Index surface_count() const
    {
        return static_cast<Index>(surface_.size()) / nodes_per_surface_element();
    }
    [[nodiscard]] Index point_count() const { return volume_count() * points_per_element(); }
    [[nodiscard]] Index stress_size() const { return 6 * point_count(); }

    [[nodiscard]] const std::vector<Vec3>& nodes() const { return nodes_; }
    [[nodiscard]] const std::vector<Index>& volume_connectivity() const { return volume_; }
    [[nodiscard]] const std::vector<Index>& surface_connectivity() const { return surface_; }
    [[nodiscard]] const std::map<std::string, std::vector<Index>>& node_groups() const { return node_groups_; }
    [[nodiscard]] const std::vector<std::string>& surface_group_names() const { return surface_group_names_; }

    [[nodiscard]] std::span<const Index> element(Index q) const
    {
        return {volume_.data() + q * nodes_per_element(), static_cast<std::size_t>(nodes_per_element())};
    }
    [[nodiscard]] std::span<const Index> surface_element(Index s) const
    {
        return {surface_.data() + s * nodes_per_surface_element(),
                static_cast<std::size_t>(nodes_per_surface_element())};
    }
    [[nodiscard]] const std::string& surface_group(Index s) const
    {
        return surface_group_names_[static_cast<std::size_t>(surface_group_[static_cast<std::size_t>(s)])];
    }

    /// Surface elements carrying the given group tag, ascending.
    [[nodiscard]] std::vector<Index> surface_elements_in(const std::string& group) const
    {
        std::vector<Index> out;
        for (Index s = 0; s < surface_count(); ++s) {
            if (surface_group(s) == group) {
                out.push_back(s);
            }
        }
        return out;
    }

    [[nodiscard]] const std::vector<Index>& node_group(const std::string& name) const
    {
        auto it = node_groups_.find(name);
        if (it == node_groups_.end()) {
            throw InputError("mesh: unknown node group '" + name + "'");
        }
        return it->second;
    }

    /// Mapped quadrature weight ρ^hf of a global volume quadrature point.
    [[nodiscard]] double point_weight(Index point) const { return point_weights_[static_cast<std::size_t>(point)]; }
    [[nodiscard]] const std::vector<double>& point_weights() const { return point_weights_; }

    /// Physical gradients dN_a/dx_d at a global volume point, row-major (a, d).
    [[nodiscard]] std::span<const double> point_gradients(Index point) const
    {
        const auto stride = static_cast<std::size_t>(3 * nodes_per_element());
        return {gradients_.data() + static_cast<std::size_t>(point) * stride, stride};
    }

    [[nodiscard]] double element_volume(Index q) const { return volumes_[static_cast<std::size_t>(q)]; }
    [[nodiscard]] const std::vector<double>& element_volumes() const { return volumes_; }
    [[nodiscard]] double total_volume() const
    {
        double v = 0.0;
        for (const double w : volumes_) {
            v += w;
        }
        return v;
    }

    [[nodiscard]] double surface_point_weight(Index s, int i) const
    {
        return surface_weights_[static_cast<std::size_t>(s * points_per_surface_element() + i)];
    }
    [[nodiscard]] double surface_area(Index s) const { return areas_[static_cast<std::size_t>(s)]; }

    /// Global displacement dof of local dof i_loc (node-major, xyz) of element q.
    [[nodiscard]] Index dof(Index q, int i_loc) const { return 3 * element(q)[static_cast<std::size_t>(i_loc / 3)] + i_loc % 3; }

    /// Global stress unknown of local stress unknown j_loc (point-major, Voigt) of element q.
    [[nodiscard]] Index stress_unknown(Index q, int j_loc) const
    {
        return 6 * static_cast<Index>(points_per_element()) * q + j_loc;
    }

private:
    void compute_volume_geometry()
    {
        const auto rule = shape::tet_rule(order_);
        const int npe = nodes_per_element();
        const int qpe = static_cast<int>(rule.weights.size());
        point_weights_.assign(static_cast<std::size_t>(point_count()), 0.0);
        gradients_.assign(static_cast<std::size_t>(point_count() * 3 * npe), 0.0);
        volumes_.assign(static_cast<std::size_t>(volume_count()), 0.0);
        std::vector<double> dref(static_cast<std::size_t>(3 * npe));
        for (Index q = 0; q < volume_count(); ++q) {
            auto conn = element(q);
            for (int i = 0; i < qpe; ++i) {
                shape::tet_gradients(order_, rule.points[static_cast<std::size_t>(i)], dref);
                Eigen::Matrix3d jac = Eigen::Matrix3d::Zero();
                for (int a = 0; a < npe; ++a) {
                    const Vec3& x = nodes_[static_cast<std::size_t>(conn[static_cast<std::size_t>(a)])];
                    for (int d = 0; d < 3; ++d) {
                        jac.col(d) += x * dref[static_cast<std::size_t>(3 * a + d)];
                    }
                }
                const double det = jac.determinant();
                if (!(det > 0.0)) {
                    throw InputError("mesh: element " + std::to_string(q) + " is inverted or degenerate");
                }
                const Eigen::Matrix3d inv = jac.inverse();
                const Index point = q * qpe + i;
                const double w = rule.weights[static_cast<std::size_t>(i)] * det;
                point_weights_[static_cast<std::size_t>(point)] = w;
                volumes_[static_cast<std::size_t>(q)] += w;
                double* g = gradients_.data() + static_cast<std::size_t>(point * 3 * npe);
                for (int a = 0; a < npe; ++a) {
                    const Eigen::RowVector3d ref(dref[static_cast<std::size_t>(3 * a)],
                                                 dref[static_cast<std::size_t>(3 * a + 1)],
                                                 dref[static_cast<std::size_t>(3 * a + 2)]);
                    const Eigen::RowVector3d phys = ref * inv;
                    for (int d = 0; d < 3; ++d) {
                        g[3 * a + d] = phys[d];
                    }
                }
            }
        }
    }

    void compute_surface_geometry()
    {
        const auto rule = shape::tri_rule(order_);
        const int nps = nodes_per_surface_element();
        const int qps = static_cast<int>(rule.weights.size());
        surface_weights_.assign(static_cast<std::size_t>(surface_count() * qps), 0.0);
        areas_.assign(static_cast<std::size_t>(surface_count()), 0.0);
        std::vector<double> dref(static_cast<std::size_t>(2 * nps));
        for (Index s = 0; s < surface_count(); ++s) {
            auto conn = surface_element(s);
            for (int i = 0; i < qps; ++i) {
                shape::tri_gradients(order_, rule.points[static_cast<std::size_t>(i)], dref);
                Vec3 t0 = Vec3::Zero();
                Vec3 t1 = Vec3::Zero();
                for (int a = 0; a < nps; ++a) {
                    const Vec3& x = nodes_[static_cast<std::size_t>(conn[static_cast<std::size_t>(a)])];
                    t0 += x * dref[static_cast<std::size_t>(2 * a)];
                    t1 += x * dref[static_cast<std::size_t>(2 * a + 1)];
                }
                const double jac = t0.cross(t1).norm();
                detail::require(jac > 0.0, "mesh: degenerate surface element " + std::to_string(s));
                const double w = rule.weights[static_cast<std::size_t>(i)] * jac;
                surface_weights_[static_cast<std::size_t>(s * qps + i)] = w;
                areas_[static_cast<std::size_t>(s)] += w;
            }
        }
    }

    // Every surface triangle must be a boundary face, i.e. a face of exactly one tetrahedron.
    void check_surface_faces() const
    {
        if (surface_count() == 0) {
            return;
        }
        static constexpr std::array<std::array<int, 3>, 4> faces{{{0, 1, 2}, {0, 1, 3}, {1, 2, 3}, {0, 2, 3}}};
        std::map<std::array<Index, 3>, int> owners;
        for (Index q = 0; q < volume_count(); ++q) {
            auto conn = element(q);
            for (const auto& f : faces) {
                std::array<Index, 3> key{conn[static_cast<std::size_t>(f[0])], conn[static_cast<std::size_t>(f[1])],
                                         conn[static_cast<std::size_t>(f[2])]};
                std::sort(key.begin(), key.end());
                ++owners[key];
            }
        }
        for (Index s = 0; s < surface_count(); ++s) {
            auto conn = surface_element(s);
            std::array<Index, 3> key{conn[0], conn[1], conn[2]};
            std::sort(key.begin(), key.end());
            auto it = owners.find(key);
            if (it == owners.end() || it->second != 1) {
                throw InputError("mesh: surface element " + std::to_string(s) +
                                 " is not a face of exactly one volume element");
            }
        }
    }

    ElementOrder order_ = ElementOrder::Linear;
    std::vector<Vec3> nodes_;
    std::vector<Index> volume_;
    std::vector<Index> surface_;
    std::vector<int> surface_group_;
    std::vector<std::string> surface_group_names_;
    std::map<std::string, std::vector<Index>> node_groups_;

    std::vector<double> point_weights_;
    std::vector<double> gradients_;
    std::vector<double> volumes_;
    std::vector<double> surface_weights_;
    std::vector<double> areas_;
};

/// Explicit restriction tables linking element-local numbering to global unknowns.
struct RestrictionTables {
    Index elements = 0;
    int nodal_width = 0;
    int quad_width = 0;
    std::vector<Index> nodal; // (q, i_loc) -> global dof
    std::vector<Index> quad;  // (q, j_loc) -> global stress unknown
};

inline RestrictionTables build_restriction_tables(const Mesh& mesh)
{
    RestrictionTables t;
    t.elements = mesh.volume_count();
    t.nodal_width = mesh.dofs_per_element();
    t.quad_width = 6 * mesh.points_per_element();
    t.nodal.reserve(static_cast<std::size_t>(t.elements * t.nodal_width));
    t.quad.reserve(static_cast<std::size_t>(t.elements * t.quad_width));
    for (Index q = 0; q < t.elements; ++q) {
        for (int i = 0; i < t.nodal_width; ++i) {
            t.nodal.push_back(mesh.dof(q, i));
        }
        for (int j = 0; j < t.quad_width; ++j) {
            t.quad.push_back(mesh.stress_unknown(q, j));
        }
    }
    return t;
}

/// Subset of elements with nonzero empirical-quadrature weight.
struct ReducedMesh {
    const Mesh* parent = nullptr;
    std::vector<Index> kept_volume;
    std::vector<Index> kept_surface;
    std::vector<double> volume_weights;
    std::vector<double> surface_weights;

    [[nodiscard]] Index point_count() const
    {
        return static_cast<Index>(kept_volume.size()) * parent->points_per_element();
    }
};

/// Keeps the elements with strictly positive weight on each level.
/// The surface weight vector is indexed like `surface_elements` (the loaded level).
inline ReducedMesh extract_reduced_mesh(const Mesh& mesh, const Vector& volume_weights,
                                        const std::vector<Index>& surface_elements, const Vector& surface_weights)
{
    if (volume_weights.size() != mesh.volume_count()) {
        throw InputError("extract_reduced_mesh: volume weight vector has wrong size");
    }
    if (surface_weights.size() != static_cast<Index>(surface_elements.size())) {
        throw InputError("extract_reduced_mesh: surface weight vector has wrong size");
    }
    ReducedMesh r;
    r.parent = &mesh;
    for (Index q = 0; q < volume_weights.size(); ++q) {
        detail::require(volume_weights[q] >= 0.0, "extract_reduced_mesh: negative weight");
        if (volume_weights[q] > 0.0) {
            r.kept_volume.push_back(q);
            r.volume_weights.push_back(volume_weights[q]);
        }
    }
    for (Index i = 0; i < surface_weights.size(); ++i) {
        detail::require(surface_weights[i] >= 0.0, "extract_reduced_mesh: negative weight");
        if (surface_weights[i] > 0.0) {
            r.kept_surface.push_back(surface_elements[static_cast<std::size_t>(i)]);
            r.surface_weights.push_back(surface_weights[i]);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Quarter plate with a circular hole
// ---------------------------------------------------------------------------

struct PlateGeometry {
    double lx = 10.0;
    double ly = 10.0;
    double lz = 1.0;
    double hole_radius = 2.0;
    int resolution = 1;
    int layers = 0;              // 0: same as resolution
    double radial_grading = 1.0; // > 1 clusters element rings toward the hole
    ElementOrder order = ElementOrder::Linear;
};

/// Group names used by the plate generator.
namespace groups {
inline const std::string bottom = "be"; // y = 0, symmetry, u_y = 0
inline const std::string left = "le";   // x = 0, symmetry, u_x = 0
inline const std::string back = "ba";   // z = 0, u_z = 0
inline const std::string top = "up";    // y = ly, traction, tied displacement
} // namespace groups

namespace detail {

inline std::vector<Index> nodes_on_plane(const std::vector<Vec3>& nodes, int axis, double value, double tol)
{
    std::vector<Index> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (std::abs(nodes[i][axis] - value) <= tol) {
            out.push_back(static_cast<Index>(i));
        }
    }
    return out;
}

// 2D polygon (outer boundary with a faceted quarter hole) in counter-clockwise order.
inline std::vector<std::array<double, 2>> plate_outline(const PlateGeometry& g)
{
    const int nt = 4 * g.resolution;
    std::vector<std::array<double, 2>> poly;
    poly.push_back({g.lx, 0.0});
    poly.push_back({g.lx, g.ly});
    poly.push_back({0.0, g.ly});
    for (int i = 2 * nt; i >= 0; --i) {
        const double theta = 0.5 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(2 * nt);
        poly.push_back({g.hole_radius * std::cos(theta), g.hole_radius * std::sin(theta)});
    }
    return poly;
}

} // namespace detail

/// Exact volume of the faceted geometry produced by generate_plate_with_hole (shoelace area × thickness).
inline double faceted_plate_volume(const PlateGeometry& g)
{
    const auto poly = detail::plate_outline(g);
    double area = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % poly.size()];
        area += a[0] * b[1] - b[0] * a[1];
    }
    return 0.5 * std::abs(area) * g.lz;
}

/// Structured quarter plate with a hole centred at the origin.
///
/// The 2D domain is split along the diagonal into two patches mapped between
/// the hole arc and the outer edges, triangulated, extruded in z and each
/// prism cut into three tetrahedra with a face-conforming diagonal rule.
inline Mesh generate_plate_with_hole(const PlateGeometry& g)
{
    if (!(g.hole_radius > 0.0) || g.hole_radius >= std::min(g.lx, g.ly)) {
        throw InputError("generate_plate_with_hole: hole radius must satisfy 0 < r < min(lx, ly)");
    }
    if (g.resolution < 1 || !(g.lz > 0.0) || !(g.radial_grading > 0.0)) {
        throw InputError("generate_plate_with_hole: invalid resolution, thickness or grading");
    }
    const int nt = 4 * g.resolution;
    const int nr = 4 * g.resolution;
    const int nz = g.layers > 0 ? g.layers : g.resolution;
    const int n_arc = 2 * nt + 1;
    const Index n2d = static_cast<Index>(n_arc) * (nr + 1);

    std::vector<std::array<double, 2>> pts(static_cast<std::size_t>(n2d));
    for (int i = 0; i < n_arc; ++i) {
        const double theta = 0.5 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(2 * nt);
        const std::array<double, 2> inner{g.hole_radius * std::cos(theta), g.hole_radius * std::sin(theta)};
        std::array<double, 2> outer{};
        if (i <= nt) {
            const double s = static_cast<double>(i) / nt;
            outer = {g.lx, s * g.ly};
        } else {
            const double s = static_cast<double>(i - nt) / nt;
            outer = {(1.0 - s) * g.lx, g.ly};
        }
        for (int j = 0; j <= nr; ++j) {
            const double t = std::pow(static_cast<double>(j) / nr, g.radial_grading);
            pts[static_cast<std::size_t>(i * (nr + 1) + j)] = {inner[0] + t * (outer[0] - inner[0]),
                                                              inner[1] + t * (outer[1] - inner[1])};
        }
    }

    std::vector<Vec3> nodes;
    nodes.reserve(static_cast<std::size_t>(n2d * (nz + 1)));
    for (int l = 0; l <= nz; ++l) {
        const double z = g.lz * static_cast<double>(l) / nz;
        for (const auto& p : pts) {
            nodes.emplace_back(p[0], p[1], z);
        }
    }

    auto id2d = [&](int i, int j) { return static_cast<Index>(i) * (nr + 1) + j; };
    std::vector<std::array<Index, 3>> tris;
    for (int i = 0; i + 1 < n_arc; ++i) {
        for (int j = 0; j < nr; ++j) {
            const Index a = id2d(i, j);
            const Index b = id2d(i + 1, j);
            const Index c = id2d(i + 1, j + 1);
            const Index d = id2d(i, j + 1);
            tris.push_back({a, b, c});
            tris.push_back({a, c, d});
        }
    }

    std::vector<Index> conn;
    conn.reserve(tris.size() * 3 * static_cast<std::size_t>(nz) * 4);
    auto push_tet = [&](std::array<Index, 4> t) {
        const Vec3 e1 = nodes[static_cast<std::size_t>(t[1])] - nodes[static_cast<std::size_t>(t[0])];
        const Vec3 e2 = nodes[static_cast<std::size_t>(t[2])] - nodes[static_cast<std::size_t>(t[0])];
        const Vec3 e3 = nodes[static_cast<std::size_t>(t[3])] - nodes[static_cast<std::size_t>(t[0])];
        if (e1.cross(e2).dot(e3) < 0.0) {
            std::swap(t[1], t[2]);
        }
        conn.insert(conn.end(), t.begin(), t.end());
    };
    for (int l = 0; l < nz; ++l) {
        const Index lo = static_cast<Index>(l) * n2d;
        const Index hi = lo + n2d;
        for (auto tri : tris) {
            std::sort(tri.begin(), tri.end());
            const Index v0 = lo + tri[0];
            const Index v1 = lo + tri[1];
            const Index v2 = lo + tri[2];
            const Index w0 = hi + tri[0];
            const Index w1 = hi + tri[1];
            const Index w2 = hi + tri[2];
            push_tet({v0, v1, v2, w0});
            push_tet({v1, v2, w0, w1});
            push_tet({v2, w0, w1, w2});
        }
    }

    if (g.order == ElementOrder::Quadratic) {
        std::map<std::pair<Index, Index>, Index> midpoints;
        std::vector<Index> quad;
        quad.reserve(conn.size() / 4 * 10);
        for (std::size_t e = 0; e < conn.size() / 4; ++e) {
            const Index* v = conn.data() + 4 * e;
            quad.insert(quad.end(), v, v + 4);
            for (const auto& edge : shape::tet_edges) {
                Index a = v[edge[0]];
                Index b = v[edge[1]];
                auto key = std::minmax(a, b);
                auto it = midpoints.find(key);
                if (it == midpoints.end()) {
                    nodes.push_back(0.5 * (nodes[static_cast<std::size_t>(a)] + nodes[static_cast<std::size_t>(b)]));
                    it = midpoints.emplace(key, static_cast<Index>(nodes.size() - 1)).first;
                }
                quad.push_back(it->second);
            }
        }
        conn = std::move(quad);
    }

    const double tol = 1e-9 * std::max({g.lx, g.ly, g.lz});
    std::map<std::string, std::vector<Index>> node_groups;
    node_groups[groups::bottom] = detail::nodes_on_plane(nodes, 1, 0.0, tol);
    node_groups[groups::left] = detail::nodes_on_plane(nodes, 0, 0.0, tol);
    node_groups[groups::back] = detail::nodes_on_plane(nodes, 2, 0.0, tol);
    node_groups[groups::top] = detail::nodes_on_plane(nodes, 1, g.ly, tol);

    // Traction faces: tetrahedron faces lying on y = ly.
    const int npe = shape::tet_nodes(g.order);
    const int nps = shape::tri_nodes(g.order);
    static constexpr std::array<std::array<int, 3>, 4> faces{{{0, 1, 2}, {0, 1, 3}, {1, 2, 3}, {0, 2, 3}}};
    std::vector<Index> surf;
    std::vector<std::string> surf_groups;
    for (std::size_t e = 0; e < conn.size() / static_cast<std::size_t>(npe); ++e) {
        const Index* v = conn.data() + static_cast<std::size_t>(npe) * e;
        for (const auto& f : faces) {
            bool on_top = true;
            for (int k = 0; k < 3; ++k) {
                on_top = on_top && std::abs(nodes[static_cast<std::size_t>(v[f[k]])][1] - g.ly) <= tol;
            }
            if (!on_top) {
                continue;
            }
            std::array<Index, 6> tri{v[f[0]], v[f[1]], v[f[2]], 0, 0, 0};
            if (g.order == ElementOrder::Quadratic) {
                for (int k = 0; k < 3; ++k) {
                    const int a = f[static_cast<std::size_t>(shape::tri_edges[static_cast<std::size_t>(k)][0])];
                    const int b = f[static_cast<std::size_t>(shape::tri_edges[static_cast<std::size_t>(k)][1])];
                    for (int m = 0; m < 6; ++m) {
                        const auto& te = shape::tet_edges[static_cast<std::size_t>(m)];
                        if ((te[0] == a && te[1] == b) || (te[0] == b && te[1] == a)) {
                            tri[static_cast<std::size_t>(3 + k)] = v[4 + m];
                        }
                    }
                }
            }
            surf.insert(surf.end(), tri.begin(), tri.begin() + nps);
            surf_groups.push_back(groups::top);
        }
    }

    return Mesh(g.order, std::move(nodes), std::move(conn), std::move(surf), std::move(surf_groups),
                std::move(node_groups));
}

} // namespace eqrom
