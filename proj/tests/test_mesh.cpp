#include "support.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <set>

using namespace eqrom;

namespace {

double tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d)
{
    Eigen::Matrix3d m;
    m << b - a, c - a, d - a;
    return std::abs(m.determinant()) / 6.0;
}

} // namespace

TEST(Quadrature, WeightsArePositiveAndSumToReferenceMeasure)
{
    for (auto o : {ElementOrder::Linear, ElementOrder::Quadratic}) {
        const auto t = shape::tet_rule(o);
        const auto f = shape::tri_rule(o);
        double st = 0.0, sf = 0.0;
        for (double w : t.weights) {
            EXPECT_GT(w, 0.0);
            st += w;
        }
        for (double w : f.weights) {
            EXPECT_GT(w, 0.0);
            sf += w;
        }
        EXPECT_NEAR(st, 1.0 / 6.0, 1e-15);
        EXPECT_NEAR(sf, 0.5, 1e-15);
    }
}

TEST(Quadrature, QuadraticTetRuleIntegratesQuadraticsExactly)
{
    // ∫ x² over the reference tet = 1/60, ∫ xy = 1/120.
    const auto r = shape::tet_rule(ElementOrder::Quadratic);
    double xx = 0.0, xy = 0.0;
    for (std::size_t i = 0; i < r.weights.size(); ++i) {
        xx += r.weights[i] * r.points[i][0] * r.points[i][0];
        xy += r.weights[i] * r.points[i][0] * r.points[i][1];
    }
    EXPECT_NEAR(xx, 1.0 / 60.0, 1e-15);
    EXPECT_NEAR(xy, 1.0 / 120.0, 1e-15);
}

TEST(ShapeFunctions, PartitionOfUnityAndGradientsSumToZero)
{
    const Vec3 xi(0.17, 0.23, 0.31);
    for (auto o : {ElementOrder::Linear, ElementOrder::Quadratic}) {
        const int n = shape::tet_nodes(o);
        std::vector<double> v(static_cast<std::size_t>(n)), g(static_cast<std::size_t>(3 * n));
        shape::tet_values(o, xi, v);
        shape::tet_gradients(o, xi, g);
        double s = 0.0;
        Vec3 gs = Vec3::Zero();
        for (int a = 0; a < n; ++a) {
            s += v[static_cast<std::size_t>(a)];
            for (int d = 0; d < 3; ++d) {
                gs[d] += g[static_cast<std::size_t>(3 * a + d)];
            }
        }
        EXPECT_NEAR(s, 1.0, 1e-14);
        EXPECT_LT(gs.norm(), 1e-13);
    }
}

TEST(Mesh, SingleTetVolumeIsDeterminantOverSix)
{
    const auto m = test::single_tet(2.0);
    EXPECT_EQ(m.volume_count(), 1);
    const auto& x = m.nodes();
    EXPECT_NEAR(m.total_volume(), tet_volume(x[0], x[1], x[2], x[3]), 1e-14);
    EXPECT_NEAR(m.total_volume(), 8.0 / 6.0, 1e-14);
}

TEST(Mesh, QuadratureWeightsSumToElementVolume)
{
    for (auto o : {ElementOrder::Linear, ElementOrder::Quadratic}) {
        const auto m = test::small_plate(1, 1, o);
        const int qpe = m.points_per_element();
        for (Index q = 0; q < m.volume_count(); ++q) {
            const auto c = m.element(q);
            const double exact =
                tet_volume(m.nodes()[static_cast<std::size_t>(c[0])], m.nodes()[static_cast<std::size_t>(c[1])],
                           m.nodes()[static_cast<std::size_t>(c[2])], m.nodes()[static_cast<std::size_t>(c[3])]);
            double s = 0.0;
            for (int i = 0; i < qpe; ++i) {
                s += m.point_weight(q * qpe + i);
            }
            EXPECT_NEAR(s, exact, (o == ElementOrder::Linear ? 1e-12 : 1e-8) * exact);
        }
    }
}

TEST(Mesh, RejectsDanglingNodes)
{
    std::vector<Vec3> nodes{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    EXPECT_THROW(Mesh(ElementOrder::Linear, nodes, {0, 1, 2, 7}, {}, {}, {}), InputError);
}

TEST(PlateGenerator, VolumeWithinFacetingErrorOfExactQuarterPlate)
{
    PlateGeometry g;
    const double exact = 10.0 * 10.0 * 1.0 - std::numbers::pi * 4.0 / 4.0;
    const auto m1 = generate_plate_with_hole(g);
    EXPECT_LT(std::abs(m1.total_volume() - exact) / exact, 0.05);
    g.resolution = 2;
    const auto m2 = generate_plate_with_hole(g);
    EXPECT_LT(std::abs(m2.total_volume() - exact), std::abs(m1.total_volume() - exact));
}

TEST(PlateGenerator, VolumeMatchesFacetedGeometry)
{
    PlateGeometry g;
    g.resolution = 2;
    EXPECT_NEAR(generate_plate_with_hole(g).total_volume(), faceted_plate_volume(g), 1e-10);
}

TEST(PlateGenerator, RejectsDegenerateGeometry)
{
    PlateGeometry g;
    g.hole_radius = 0.0;
    EXPECT_THROW(generate_plate_with_hole(g), InputError);
    g.hole_radius = 10.0;
    EXPECT_THROW(generate_plate_with_hole(g), InputError);
    g.hole_radius = 2.0;
    g.resolution = 0;
    EXPECT_THROW(generate_plate_with_hole(g), InputError);
}

TEST(PlateGenerator, GroupsLieOnTheirPlanes)
{
    const auto m = test::small_plate(2, 1);
    const auto check = [&](const std::string& g, int axis, double value) {
        const auto& ids = m.node_group(g);
        ASSERT_FALSE(ids.empty()) << g;
        for (Index n : ids) {
            EXPECT_NEAR(m.nodes()[static_cast<std::size_t>(n)][axis], value, 1e-12) << g;
        }
    };
    check(groups::bottom, 1, 0.0);
    check(groups::left, 0, 0.0);
    check(groups::back, 2, 0.0);
    check(groups::top, 1, 10.0);
    for (Index s = 0; s < m.surface_count(); ++s) {
        EXPECT_EQ(m.surface_group(s), groups::top);
    }
    double area = 0.0;
    for (Index s = 0; s < m.surface_count(); ++s) {
        area += m.surface_area(s);
    }
    EXPECT_NEAR(area, 10.0 * 1.0, 1e-12);
}

TEST(RestrictionTables, CoverEveryGlobalIndexAndAreInjectivePerElement)
{
    for (auto o : {ElementOrder::Linear, ElementOrder::Quadratic}) {
        const auto m = test::small_plate(1, 1, o);
        const auto t = build_restriction_tables(m);
        std::vector<char> dof_seen(static_cast<std::size_t>(m.dof_count()), 0);
        std::vector<char> quad_seen(static_cast<std::size_t>(m.stress_size()), 0);
        for (Index q = 0; q < t.elements; ++q) {
            std::set<Index> local;
            for (int i = 0; i < t.nodal_width; ++i) {
                const Index g = t.nodal[static_cast<std::size_t>(q * t.nodal_width + i)];
                local.insert(g);
                dof_seen[static_cast<std::size_t>(g)] = 1;
            }
            EXPECT_EQ(local.size(), static_cast<std::size_t>(t.nodal_width));
            for (int j = 0; j < t.quad_width; ++j) {
                quad_seen[static_cast<std::size_t>(t.quad[static_cast<std::size_t>(q * t.quad_width + j)])]++;
            }
        }
        EXPECT_EQ(std::count(dof_seen.begin(), dof_seen.end(), 0), 0);
        // each stress unknown belongs to exactly one element
        EXPECT_EQ(std::count(quad_seen.begin(), quad_seen.end(), 1), m.stress_size());
    }
}

TEST(ReducedMesh, UnitWeightsKeepEverything)
{
    const auto m = test::small_plate();
    const auto surf = m.surface_elements_in(groups::top);
    const auto r = extract_reduced_mesh(m, Vector::Ones(m.volume_count()), surf,
                                        Vector::Ones(static_cast<Index>(surf.size())));
    EXPECT_EQ(static_cast<Index>(r.kept_volume.size()), m.volume_count());
    EXPECT_EQ(r.kept_surface, surf);
    EXPECT_EQ(r.parent, &m);
    EXPECT_EQ(r.point_count(), m.point_count());
}

TEST(ReducedMesh, ZeroWeightsGiveEmptySetsAndSingleSupportIsKept)
{
    const auto m = test::small_plate();
    auto r = extract_reduced_mesh(m, Vector::Zero(m.volume_count()), {}, Vector());
    EXPECT_TRUE(r.kept_volume.empty());
    EXPECT_TRUE(r.kept_surface.empty());
    Vector w = Vector::Zero(m.volume_count());
    w[5] = 3.2;
    r = extract_reduced_mesh(m, w, {}, Vector());
    ASSERT_EQ(r.kept_volume.size(), 1u);
    EXPECT_EQ(r.kept_volume[0], 5);
    EXPECT_EQ(r.volume_weights[0], 3.2);
}

TEST(ReducedMesh, RejectsSizeMismatchAndNegativeWeights)
{
    const auto m = test::small_plate();
    EXPECT_THROW(extract_reduced_mesh(m, Vector::Ones(3), {}, Vector()), InputError);
    Vector w = Vector::Ones(m.volume_count());
    w[0] = -1.0;
    EXPECT_THROW(extract_reduced_mesh(m, w, {}, Vector()), InputError);
}

TEST(MeshIo, SingleTetImport)
{
    const std::string text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n"
                             "$EndNodes\n$Elements\n1\n1 4 2 1 1 1 2 3 4\n$EndElements\n";
    const auto m = import_msh_text(text);
    EXPECT_EQ(m.volume_count(), 1);
    EXPECT_NEAR(m.total_volume(), 1.0 / 6.0, 1e-15);
}

TEST(MeshIo, MissingNodesSectionIsAnError)
{
    const std::string text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Elements\n1\n1 4 2 1 1 1 2 3 4\n$EndElements\n";
    EXPECT_THROW(import_msh_text(text), InputError);
}

TEST(MeshIo, UnsupportedElementTypeIsAnError)
{
    const std::string text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n"
                             "$EndNodes\n$Elements\n1\n1 5 2 1 1 1 2 3 4\n$EndElements\n";
    EXPECT_THROW(import_msh_text(text), InputError);
}

TEST(MeshIo, DanglingNodeReferenceIsAnError)
{
    const std::string text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n"
                             "$EndNodes\n$Elements\n1\n1 4 2 1 1 1 2 3 9\n$EndElements\n";
    EXPECT_THROW(import_msh_text(text), InputError);
}

TEST(MeshIo, RoundTripPreservesConnectivityGroupsAndCoordinates)
{
    for (auto o : {ElementOrder::Linear, ElementOrder::Quadratic}) {
        const auto m = test::small_plate(1, 1, o);
        const auto r = import_msh_text(export_msh_text(m));
        EXPECT_EQ(r.order(), m.order());
        EXPECT_EQ(r.volume_connectivity(), m.volume_connectivity());
        EXPECT_EQ(r.surface_connectivity(), m.surface_connectivity());
        EXPECT_EQ(r.node_groups(), m.node_groups());
        ASSERT_EQ(r.node_count(), m.node_count());
        for (Index i = 0; i < m.node_count(); ++i) {
            EXPECT_EQ(r.nodes()[static_cast<std::size_t>(i)], m.nodes()[static_cast<std::size_t>(i)]);
        }
        for (Index s = 0; s < m.surface_count(); ++s) {
            EXPECT_EQ(r.surface_group(s), m.surface_group(s));
        }
    }
}

TEST(MeshIo, VtkExportListsPointsCellsAndFields)
{
    const auto m = test::small_plate();
    VtkFields f;
    f.point_vectors.emplace_back("u", Vector::Zero(m.dof_count()));
    f.cell_scalars.emplace_back("p", Vector::Ones(m.volume_count()));
    std::ostringstream out;
    export_vtk(out, m, f);
    const auto s = out.str();
    EXPECT_NE(s.find("POINTS " + std::to_string(m.node_count())), std::string::npos);
    EXPECT_NE(s.find("CELLS " + std::to_string(m.volume_count())), std::string::npos);
    EXPECT_NE(s.find("VECTORS u double"), std::string::npos);
    EXPECT_NE(s.find("SCALARS p double 1"), std::string::npos);
    f.cell_scalars[0].second = Vector::Ones(2);
    std::ostringstream bad;
    EXPECT_THROW(export_vtk(bad, m, f), InputError);
}
