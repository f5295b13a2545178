#pragma once

#include <eqrom/eqrom.hpp>

#include <memory>
#include <random>

namespace eqrom::test {

/// Reference tetrahedron scaled by `s`, no surface elements.
inline Mesh single_tet(double s = 1.0, ElementOrder order = ElementOrder::Linear)
{
    std::vector<Vec3> nodes{{0, 0, 0}, {s, 0, 0}, {0, s, 0}, {0, 0, s}};
    std::vector<Index> conn{0, 1, 2, 3};
    if (order == ElementOrder::Quadratic) {
        for (const auto& e : shape::tet_edges) {
            nodes.push_back(0.5 * (nodes[static_cast<std::size_t>(e[0])] + nodes[static_cast<std::size_t>(e[1])]));
            conn.push_back(static_cast<Index>(nodes.size()) - 1);
        }
    }
    return Mesh(order, nodes, conn, {}, {}, {});
}

inline Mesh small_plate(int resolution = 1, int layers = 1, ElementOrder order = ElementOrder::Linear)
{
    PlateGeometry g;
    g.resolution = resolution;
    g.layers = layers;
    g.order = order;
    return generate_plate_with_hole(g);
}

inline std::shared_ptr<const Mesh> shared_plate(int resolution = 1, int layers = 1)
{
    return std::make_shared<const Mesh>(small_plate(resolution, layers));
}

inline ElastoplasticParams centroid_params()
{
    return ParameterBox{}.centroid().apply(ElastoplasticParams{});
}

inline Matrix random_matrix(Index rows, Index cols, unsigned seed)
{
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) {
            m(i, j) = u(gen);
        }
    }
    return m;
}

inline Vector random_vector(Index n, unsigned seed) { return random_matrix(n, 1, seed); }

/// Vector satisfying B v = 0: projection of a random vector onto ker(B).
inline Vector kernel_vector(const SparseMatrix& B, Index n, unsigned seed)
{
    const Vector v = random_vector(n, seed);
    if (B.rows() == 0) {
        return v;
    }
    const Matrix bd = Matrix(B);
    const Vector y = (bd * bd.transpose()).ldlt().solve(bd * v);
    return v - bd.transpose() * y;
}

} // namespace eqrom::test
