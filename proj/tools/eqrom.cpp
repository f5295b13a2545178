#include <eqrom/eqrom.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using eqrom::io::json;

enum Exit { ok = 0, config_error = 2, solver_failure = 3 };

/// Flags shared by the study commands; each one overrides the config file.
struct Overrides {
    std::string config;
    std::optional<std::string> output;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> msh;
    std::optional<int> resolution;
    std::optional<int> layers;
    std::optional<int> steps;
    std::optional<double> eps_newt;
    std::optional<double> eps_pod_u;
    std::optional<double> eps_pod_sigma;
    std::optional<double> delta;

    void attach(CLI::App* app)
    {
        app->add_option("-c,--config", config, "JSON run configuration")->check(CLI::ExistingFile);
        app->add_option("-o,--output", output, "output directory");
        app->add_option("--threads", threads, "worker threads");
        app->add_option("--seed", seed, "seed echoed in reports");
        app->add_option("--msh", msh, "MSH 2.2 mesh instead of the generated plate");
        app->add_option("--resolution", resolution, "plate generator resolution");
        app->add_option("--layers", layers, "plate generator layers through the thickness");
        app->add_option("--steps", steps, "number of time steps K");
        app->add_option("--eps-newt", eps_newt, "Newton relative tolerance");
        app->add_option("--eps-pod-u", eps_pod_u, "displacement POD tolerance");
        app->add_option("--eps-pod-sigma", eps_pod_sigma, "stress POD tolerance");
        app->add_option("--delta", delta, "empirical quadrature tolerance");
    }

    [[nodiscard]] json apply(const std::string& study) const
    {
        json j = config.empty() ? json::object() : eqrom::io::read_json(config);
        if (!j.is_object()) {
            throw eqrom::InputError("config: top level must be an object");
        }
        const bool file_two_param = j.contains("study") && j["study"] == "greedy2p";
        if (!(study == "greedy1p" && file_two_param)) {
            j["study"] = study;
        }
        auto set = [&j](const char* section, const char* key, const auto& v) {
            if (v) {
                (section ? j[section][key] : j[key]) = *v;
            }
        };
        set(nullptr, "output_dir", output);
        set(nullptr, "threads", threads);
        set(nullptr, "seed", seed);
        set("mesh", "msh", msh);
        set("mesh", "resolution", resolution);
        set("mesh", "layers", layers);
        set("time", "steps", steps);
        set("tolerances", "eps_newt", eps_newt);
        set("tolerances", "eps_pod_u", eps_pod_u);
        set("tolerances", "eps_pod_sigma", eps_pod_sigma);
        set("tolerances", "delta", delta);
        return j;
    }
};

std::vector<eqrom::Parameter> parse_parameters(const std::vector<std::string>& items)
{
    std::vector<eqrom::Parameter> out;
    for (const auto& s : items) {
        const auto comma = s.find(',');
        if (comma == std::string::npos) {
            throw eqrom::InputError("--mu expects nu,a_pui, got '" + s + "'");
        }
        out.push_back({eqrom::io::parse_double(s.substr(0, comma), "--mu"),
                       eqrom::io::parse_double(s.substr(comma + 1), "--mu")});
    }
    return out;
}

void print_mesh_stats(const eqrom::Mesh& m)
{
    std::cout << "nodes " << m.node_count() << "\nvolume elements " << m.volume_count() << "\nsurface elements "
              << m.surface_count() << "\ndofs " << m.dof_count() << "\nvolume " << m.total_volume() << "\n";
    for (const auto& g : m.surface_group_names()) {
        std::cout << "surface group " << g << ": " << m.surface_elements_in(g).size() << "\n";
    }
    for (const auto& [g, ids] : m.node_groups()) {
        std::cout << "node group " << g << ": " << ids.size() << "\n";
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Reduced-order modelling of parametric elastoplasticity: HF solves, POD-Greedy with empirical "
                 "quadrature, online solves and reports."};
    app.require_subcommand(1);

    auto* mesh = app.add_subcommand("mesh", "generate or import meshes");
    mesh->require_subcommand(1);
    auto* gen = mesh->add_subcommand("gen", "generate the quarter plate with a hole");
    eqrom::PlateGeometry geo;
    std::string order = "linear";
    std::string mesh_out = "plate.msh";
    std::string vtk_out;
    gen->add_option("--lx", geo.lx, "plate half width")->capture_default_str();
    gen->add_option("--ly", geo.ly, "plate half height")->capture_default_str();
    gen->add_option("--lz", geo.lz, "thickness")->capture_default_str();
    gen->add_option("--radius", geo.hole_radius, "hole radius")->capture_default_str();
    gen->add_option("--resolution", geo.resolution, "in-plane resolution")->capture_default_str();
    gen->add_option("--layers", geo.layers, "layers through the thickness (0: resolution)")->capture_default_str();
    gen->add_option("--grading", geo.radial_grading, "radial grading toward the hole")->capture_default_str();
    gen->add_option("--order", order, "element order")->check(CLI::IsMember({"linear", "quadratic"}));
    gen->add_option("-o,--output", mesh_out, "MSH 2.2 output")->capture_default_str();
    gen->add_option("--vtk", vtk_out, "also write a legacy VTK file");

    auto* imp = mesh->add_subcommand("import", "read and check an MSH 2.2 mesh");
    std::string msh_in;
    imp->add_option("file", msh_in, "MSH 2.2 file")->required()->check(CLI::ExistingFile);
    imp->add_option("--vtk", vtk_out, "write a legacy VTK file");

    auto* hf = app.add_subcommand("hf", "high-fidelity solves");
    hf->require_subcommand(1);
    auto* hf_run = hf->add_subcommand("run", "one HF trajectory");
    Overrides hf_opts;
    hf_opts.attach(hf_run);
    std::optional<std::string> hf_mu;
    hf_run->add_option("--mu", hf_mu, "parameter nu,a_pui (default: box centroid)");

    auto* rep = app.add_subcommand("reproduce", "reproduction study over (N_u, delta)");
    Overrides rep_opts;
    rep_opts.attach(rep);

    auto* gr = app.add_subcommand("greedy", "POD-Greedy study");
    Overrides gr_opts;
    gr_opts.attach(gr);
    bool two_param = false;
    gr->add_flag("--two-param", two_param, "train over both parameters (default: nu only)");

    auto* on = app.add_subcommand("online", "online solves from stored artifacts");
    Overrides on_opts;
    on_opts.attach(on);
    std::optional<std::string> artifacts;
    std::vector<std::string> mus;
    std::vector<std::string> hf_trajs;
    on->add_option("--artifacts", artifacts, "artifacts directory");
    on->add_option("--mu", mus, "parameter nu,a_pui (repeatable)");
    on->add_option("--hf", hf_trajs, "HF trajectory container per parameter (repeatable)");

    auto* report = app.add_subcommand("report", "summarize a study output directory");
    std::string report_dir;
    report->add_option("dir", report_dir, "study output directory")->required()->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (*gen) {
            geo.order = order == "linear" ? eqrom::ElementOrder::Linear : eqrom::ElementOrder::Quadratic;
            const auto m = eqrom::generate_plate_with_hole(geo);
            eqrom::io::write_text(mesh_out, eqrom::export_msh_text(m));
            if (!vtk_out.empty()) {
                auto out = eqrom::io::open_out(vtk_out);
                eqrom::export_vtk(out, m);
            }
            print_mesh_stats(m);
        } else if (*imp) {
            std::istringstream in(eqrom::io::read_text(msh_in));
            const auto m = eqrom::import_msh(in);
            if (!vtk_out.empty()) {
                auto out = eqrom::io::open_out(vtk_out);
                eqrom::export_vtk(out, m);
            }
            print_mesh_stats(m);
        } else if (*hf_run) {
            auto j = hf_opts.apply("hf");
            if (hf_mu) {
                const auto p = parse_parameters({*hf_mu}).front();
                j["parameter"] = {{"nu", p.nu}, {"a_pui", p.a_pui}};
            }
            eqrom::run_hf(eqrom::run_config_from_json(j));
        } else if (*rep) {
            eqrom::run_reproduction_study(eqrom::run_config_from_json(rep_opts.apply("reproduce")));
        } else if (*gr) {
            const auto j = gr_opts.apply(two_param ? "greedy2p" : "greedy1p");
            eqrom::run_greedy_study(eqrom::run_config_from_json(j));
        } else if (*on) {
            auto j = on_opts.apply("online");
            if (artifacts) {
                j["online"]["artifacts"] = *artifacts;
            }
            if (!mus.empty()) {
                j["online"]["parameters"] = json::array();
                for (const auto& p : parse_parameters(mus)) {
                    j["online"]["parameters"].push_back({{"nu", p.nu}, {"a_pui", p.a_pui}});
                }
            }
            if (!hf_trajs.empty()) {
                j["online"]["hf_trajectories"] = hf_trajs;
            }
            eqrom::run_online(eqrom::run_config_from_json(j));
        } else if (*report) {
            const auto text = eqrom::summarize(report_dir);
            eqrom::io::write_text(std::filesystem::path(report_dir) / "summary.txt", text);
            std::cout << text;
        }
    } catch (const eqrom::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return config_error;
    } catch (const eqrom::Error& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return solver_failure;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return config_error;
    }
    return ok;
}
