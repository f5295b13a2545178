// Offline/online round trip on a small plate: HF trajectory at the centroid,
// POD of both fields, empirical quadrature, then an online solve at a new
// Poisson ratio compared against its HF trajectory.
#include <eqrom/eqrom.hpp>

#include <iostream>
#include <memory>

int main()
{
    using namespace eqrom;
    PlateGeometry geo;
    geo.resolution = 2;
    auto mesh = std::make_shared<const Mesh>(generate_plate_with_hole(geo));
    const HfModel model(mesh, BoundaryConditions::plate(), Loading{});

    ElastoplasticParams ref;
    const Parameter centroid = ParameterBox{}.centroid();
    ref = centroid.apply(ref);
    TimeGrid grid;
    NewtonConfig newton;

    const auto train = hf_time_march(model, ref, grid, newton);
    auto k_bar = std::make_shared<const SparseMatrix>(assemble_elastic_stiffness(*mesh, ref));
    auto zu = pod(train.displacement_snapshots(), InnerProduct::stiffness(k_bar), 1e-5);
    auto zs = pod(train.stress_snapshots(), stress_inner_product(*mesh), 1e-5);
    auto artifacts = std::make_shared<const RomArtifacts>(
        build_artifacts(model, ref, zu, zs, train.stress_snapshots(), *k_bar, 1e-6));

    std::cout << "elements " << mesh->volume_count() << ", kept " << artifacts->eq.reduced_mesh.kept_volume.size()
              << ", N_u " << artifacts->zu.size() << ", N_sigma " << artifacts->zs.size() << "\n";

    ElastoplasticParams test = ref;
    test.nu = 0.28;
    const auto hf = hf_time_march(model, test, grid, newton);
    const auto rom = online_solve(artifacts, test, grid, newton);
    const auto err = trajectory_errors(artifacts->zu, hf.displacements, rom.alpha_u);
    std::cout << "projection error " << err.projection << ", ROM error " << err.approximation << ", indicator "
              << rom.indicator_avg << "\nHF " << hf.wall_time << " s, online " << rom.wall_time << " s\n";
}
