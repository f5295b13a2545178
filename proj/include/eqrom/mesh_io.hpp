#pragma once

#include "mesh.hpp"

#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace eqrom {

namespace msh {

inline constexpr int point = 15;
inline constexpr int tri3 = 2;
inline constexpr int tri6 = 9;
inline constexpr int tet4 = 4;
inline constexpr int tet10 = 11;

} // namespace msh

/// Reads the Gmsh MSH 2.2 ASCII subset: tetrahedra (4/11), triangles (2/9) and
/// points (15), with physical groups mapped to surface and node group names.
/// Triangles become surface elements of their physical group and their nodes
/// join the node group of the same name; points only feed node groups.
inline Mesh import_msh(std::istream& in)
{
    std::string line;
    bool have_format = false;
    bool have_nodes = false;
    bool have_elements = false;
    std::map<int, std::string> physical_names;
    std::unordered_map<long, Index> node_index;
    std::vector<Vec3> nodes;

    struct RawElement {
        int type;
        int physical;
        std::vector<long> nodes;
    };
    std::vector<RawElement> elements;

    auto fail = [](const std::string& msg) { throw InputError("import_msh: " + msg); };

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line == "$MeshFormat") {
            std::getline(in, line);
            std::istringstream ss(line);
            double version = 0.0;
            int file_type = -1;
            ss >> version >> file_type;
            if (version < 2.0 || version >= 3.0 || file_type != 0) {
                fail("only MSH 2.x ASCII is supported");
            }
            have_format = true;
        } else if (line == "$PhysicalNames") {
            std::getline(in, line);
            const int count = std::stoi(line);
            for (int i = 0; i < count; ++i) {
                std::getline(in, line);
                std::istringstream ss(line);
                int dim = 0;
                int tag = 0;
                std::string name;
                ss >> dim >> tag;
                std::getline(ss >> std::ws, name);
                if (name.size() >= 2 && name.front() == '"') {
                    name = name.substr(1, name.find('"', 1) - 1);
                }
                physical_names[tag] = name;
            }
        } else if (line == "$Nodes") {
            std::getline(in, line);
            const long count = std::stol(line);
            nodes.reserve(static_cast<std::size_t>(count));
            for (long i = 0; i < count; ++i) {
                long id = 0;
                Vec3 x;
                if (!(in >> id >> x[0] >> x[1] >> x[2])) {
                    fail("truncated $Nodes section");
                }
                node_index[id] = static_cast<Index>(nodes.size());
                nodes.push_back(x);
            }
            have_nodes = true;
        } else if (line == "$Elements") {
            std::getline(in, line);
            const long count = std::stol(line);
            for (long i = 0; i < count; ++i) {
                long id = 0;
                int type = 0;
                int ntags = 0;
                if (!(in >> id >> type >> ntags)) {
                    fail("truncated $Elements section");
                }
                std::vector<int> tags(static_cast<std::size_t>(ntags));
                for (auto& t : tags) {
                    in >> t;
                }
                int nn = 0;
                switch (type) {
                case msh::point: nn = 1; break;
                case msh::tri3: nn = 3; break;
                case msh::tri6: nn = 6; break;
                case msh::tet4: nn = 4; break;
                case msh::tet10: nn = 10; break;
                default: fail("unsupported element type " + std::to_string(type));
                }
                RawElement e{type, ntags > 0 ? tags[0] : 0, std::vector<long>(static_cast<std::size_t>(nn))};
                for (auto& n : e.nodes) {
                    in >> n;
                }
                if (!in) {
                    fail("truncated $Elements section");
                }
                elements.push_back(std::move(e));
            }
            have_elements = true;
        }
    }
    if (!have_format) {
        fail("missing $MeshFormat section");
    }
    if (!have_nodes) {
        fail("missing $Nodes section");
    }
    if (!have_elements) {
        fail("missing $Elements section");
    }

    auto name_of = [&](int tag) {
        auto it = physical_names.find(tag);
        return it != physical_names.end() ? it->second : std::to_string(tag);
    };
    auto resolve = [&](long id) {
        auto it = node_index.find(id);
        if (it == node_index.end()) {
            fail("dangling node reference " + std::to_string(id));
        }
        return it->second;
    };

    bool linear = false;
    bool quadratic = false;
    for (const auto& e : elements) {
        linear = linear || e.type == msh::tet4 || e.type == msh::tri3;
        quadratic = quadratic || e.type == msh::tet10 || e.type == msh::tri6;
    }
    if (linear && quadratic) {
        fail("mixed linear and quadratic elements");
    }
    const ElementOrder order = quadratic ? ElementOrder::Quadratic : ElementOrder::Linear;

    std::vector<Index> volume;
    std::vector<Index> surface;
    std::vector<std::string> surface_groups;
    std::map<std::string, std::set<Index>> groups;
    for (const auto& e : elements) {
        std::vector<Index> v;
        v.reserve(e.nodes.size());
        for (const long n : e.nodes) {
            v.push_back(resolve(n));
        }
        if (e.type == msh::tet4 || e.type == msh::tet10) {
            const Vec3 e1 = nodes[static_cast<std::size_t>(v[1])] - nodes[static_cast<std::size_t>(v[0])];
            const Vec3 e2 = nodes[static_cast<std::size_t>(v[2])] - nodes[static_cast<std::size_t>(v[0])];
            const Vec3 e3 = nodes[static_cast<std::size_t>(v[3])] - nodes[static_cast<std::size_t>(v[0])];
            if (e1.cross(e2).dot(e3) < 0.0) {
                std::swap(v[1], v[2]);
                if (e.type == msh::tet10) {
                    std::swap(v[4], v[6]);
                    std::swap(v[8], v[9]);
                }
            }
            volume.insert(volume.end(), v.begin(), v.end());
        } else if (e.type == msh::tri3 || e.type == msh::tri6) {
            surface.insert(surface.end(), v.begin(), v.end());
            surface_groups.push_back(name_of(e.physical));
            groups[name_of(e.physical)].insert(v.begin(), v.end());
        } else {
            groups[name_of(e.physical)].insert(v.front());
        }
    }
    if (volume.empty()) {
        fail("no volume elements");
    }
    std::map<std::string, std::vector<Index>> node_groups;
    for (auto& [name, ids] : groups) {
        node_groups[name] = std::vector<Index>(ids.begin(), ids.end());
    }
    return Mesh(order, std::move(nodes), std::move(volume), std::move(surface), std::move(surface_groups),
                std::move(node_groups));
}

inline Mesh import_msh_text(const std::string& text)
{
    std::istringstream in(text);
    return import_msh(in);
}

/// Writes MSH 2.2 ASCII. Node groups are emitted as point elements so that
/// import_msh restores them exactly.
inline void export_msh(std::ostream& out, const Mesh& mesh)
{
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";

    std::map<std::string, int> tags;
    std::vector<std::pair<int, std::string>> names; // (dim, name)
    auto tag_for = [&](int dim, const std::string& name) {
        auto it = tags.find(name);
        if (it != tags.end()) {
            return it->second;
        }
        const int t = static_cast<int>(tags.size()) + 1;
        tags[name] = t;
        names.emplace_back(dim, name);
        return t;
    };
    const int domain_tag = tag_for(3, "domain");
    for (const auto& g : mesh.surface_group_names()) {
        tag_for(2, g);
    }
    for (const auto& [g, ids] : mesh.node_groups()) {
        tag_for(0, g);
    }
    out << "$PhysicalNames\n" << names.size() << "\n";
    for (const auto& [dim, name] : names) {
        out << dim << " " << tags[name] << " \"" << name << "\"\n";
    }
    out << "$EndPhysicalNames\n";

    out << "$Nodes\n" << mesh.node_count() << "\n";
    for (Index i = 0; i < mesh.node_count(); ++i) {
        const Vec3& x = mesh.nodes()[static_cast<std::size_t>(i)];
        out << i + 1 << " " << x[0] << " " << x[1] << " " << x[2] << "\n";
    }
    out << "$EndNodes\n";

    Index count = mesh.volume_count() + mesh.surface_count();
    for (const auto& [g, ids] : mesh.node_groups()) {
        count += static_cast<Index>(ids.size());
    }
    const bool quadratic = mesh.order() == ElementOrder::Quadratic;
    out << "$Elements\n" << count << "\n";
    Index id = 1;
    for (const auto& [g, ids] : mesh.node_groups()) {
        for (const Index n : ids) {
            out << id++ << " " << msh::point << " 2 " << tags[g] << " " << tags[g] << " " << n + 1 << "\n";
        }
    }
    for (Index s = 0; s < mesh.surface_count(); ++s) {
        const int t = tags[mesh.surface_group(s)];
        out << id++ << " " << (quadratic ? msh::tri6 : msh::tri3) << " 2 " << t << " " << t;
        for (const Index n : mesh.surface_element(s)) {
            out << " " << n + 1;
        }
        out << "\n";
    }
    for (Index q = 0; q < mesh.volume_count(); ++q) {
        out << id++ << " " << (quadratic ? msh::tet10 : msh::tet4) << " 2 " << domain_tag << " " << domain_tag;
        for (const Index n : mesh.element(q)) {
            out << " " << n + 1;
        }
        out << "\n";
    }
    out << "$EndElements\n";
}

inline std::string export_msh_text(const Mesh& mesh)
{
    std::ostringstream out;
    export_msh(out, mesh);
    return out.str();
}

/// Named fields attached to a legacy-VTK export.
struct VtkFields {
    std::vector<std::pair<std::string, Vector>> point_vectors; // length 3 * nodes
    std::vector<std::pair<std::string, Vector>> cell_scalars;  // length volume elements
};

inline void export_vtk(std::ostream& out, const Mesh& mesh, const VtkFields& fields = {})
{
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "# vtk DataFile Version 3.0\neqrom mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << mesh.node_count() << " double\n";
    for (const Vec3& x : mesh.nodes()) {
        out << x[0] << " " << x[1] << " " << x[2] << "\n";
    }
    const int npe = mesh.nodes_per_element();
    // VTK_QUADRATIC_TETRA orders edges (0,1),(1,2),(2,0),(0,3),(1,3),(2,3); ours ends (2,3),(1,3).
    static constexpr std::array<int, 10> vtk_order{0, 1, 2, 3, 4, 5, 6, 7, 9, 8};
    out << "CELLS " << mesh.volume_count() << " " << mesh.volume_count() * (npe + 1) << "\n";
    for (Index q = 0; q < mesh.volume_count(); ++q) {
        const auto conn = mesh.element(q);
        out << npe;
        for (int a = 0; a < npe; ++a) {
            out << " " << conn[static_cast<std::size_t>(vtk_order[static_cast<std::size_t>(a)])];
        }
        out << "\n";
    }
    out << "CELL_TYPES " << mesh.volume_count() << "\n";
    for (Index q = 0; q < mesh.volume_count(); ++q) {
        out << (mesh.order() == ElementOrder::Linear ? 10 : 24) << "\n";
    }
    if (!fields.point_vectors.empty()) {
        out << "POINT_DATA " << mesh.node_count() << "\n";
        for (const auto& [name, v] : fields.point_vectors) {
            detail::require(v.size() == 3 * mesh.node_count(), "export_vtk: point field size mismatch");
            out << "VECTORS " << name << " double\n";
            for (Index i = 0; i < mesh.node_count(); ++i) {
                out << v[3 * i] << " " << v[3 * i + 1] << " " << v[3 * i + 2] << "\n";
            }
        }
    }
    if (!fields.cell_scalars.empty()) {
        out << "CELL_DATA " << mesh.volume_count() << "\n";
        for (const auto& [name, v] : fields.cell_scalars) {
            detail::require(v.size() == mesh.volume_count(), "export_vtk: cell field size mismatch");
            out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
            for (Index q = 0; q < mesh.volume_count(); ++q) {
                out << v[q] << "\n";
            }
        }
    }
}

} // namespace eqrom
