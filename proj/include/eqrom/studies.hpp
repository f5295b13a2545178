#pragma once

#include "io.hpp"

#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace eqrom {

using Logger = std::function<void(const std::string&)>;

inline void log_to_stderr(const std::string& m) { std::clog << m << '\n'; }

enum class StudyKind { Hf, Reproduce, Greedy1p, Greedy2p, Online };

inline std::string to_string(StudyKind k)
{
    switch (k) {
    case StudyKind::Hf: return "hf";
    case StudyKind::Reproduce: return "reproduce";
    case StudyKind::Greedy1p: return "greedy1p";
    case StudyKind::Greedy2p: return "greedy2p";
    case StudyKind::Online: return "online";
    }
    return "?";
}

inline StudyKind study_kind_from(const std::string& s)
{
    for (auto k : {StudyKind::Hf, StudyKind::Reproduce, StudyKind::Greedy1p, StudyKind::Greedy2p, StudyKind::Online}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw InputError("config: unknown study '" + s + "' (hf, reproduce, greedy1p, greedy2p, online)");
}

/// Generated plate or an MSH file.
struct MeshSpec {
    std::string msh_path; // empty: use the generator
    PlateGeometry geometry;

    [[nodiscard]] Mesh build() const
    {
        if (!msh_path.empty()) {
            std::istringstream in(io::read_text(msh_path));
            return import_msh(in);
        }
        return generate_plate_with_hole(geometry);
    }
};

/// Parameters whose HF trajectory and online solution are compared.
enum class EvaluationSet { None, Train, Grid };

/// Every setting of a run. Unspecified study-dependent entries take the
/// defaults of the chosen study (K=20 for reproduction, 10 otherwise; a 20-point
/// ν grid for greedy1p, 20×20 for greedy2p).
struct RunConfig {
    StudyKind study = StudyKind::Reproduce;
    std::string output_dir = "out";
    int threads = 1;
    std::uint64_t seed = 0;

    MeshSpec mesh;
    ElastoplasticParams material;
    ParameterBox box;
    Parameter reference = ParameterBox{}.centroid();
    Parameter parameter = ParameterBox{}.centroid(); // hf study
    Loading loading;
    BoundaryConditions bc = BoundaryConditions::plate();
    TimeGrid time;
    NewtonConfig newton;

    double eps_pod_u = 1e-5;
    double eps_pod_sigma = 1e-5;
    double delta = 1e-7;

    // reproduce
    std::vector<int> n_u_values{1, 2, 3, 4, 6, 8};
    std::vector<double> deltas{1e-1, 1e-3, 1e-5, 1e-7};

    // greedy
    int train_nu = 20;
    int train_a = 1;
    int max_iters = 5;
    double stop_tol = 1e-5;
    double stagnation_tol = 0.01;
    EvaluationSet evaluation = EvaluationSet::None;
    int eval_nu = 3;
    int eval_a = 3;

    // online
    std::string artifacts_dir;
    std::vector<Parameter> online_parameters;
    std::vector<std::string> hf_trajectories; // optional, one per online parameter

    void validate() const
    {
        auto pos = [](double v) { return v > 0.0 && std::isfinite(v); };
        auto in01 = [](double v) { return v > 0.0 && v < 1.0; };
        if (threads < 1) {
            throw InputError("config: threads must be >= 1");
        }
        if (output_dir.empty()) {
            throw InputError("config: output_dir must not be empty");
        }
        material.validate();
        if (!(box.nu_min < box.nu_max) || !(box.a_min < box.a_max)) {
            throw InputError("config: parameter box bounds must be increasing");
        }
        for (const auto& p : {reference, parameter}) {
            p.apply(material).validate();
        }
        if (time.steps < 1 || !pos(time.t_final) || !std::isfinite(time.load_scale)) {
            throw InputError("config: time.steps >= 1 and time.t_final > 0 required");
        }
        newton.validate();
        if (!pos(newton.return_map.tol) || newton.return_map.max_iters < 1) {
            throw InputError("config: tol_rm must be positive");
        }
        if (!in01(eps_pod_u) || !in01(eps_pod_sigma) || !pos(delta)) {
            throw InputError("config: eps_pod_u, eps_pod_sigma in (0, 1) and delta > 0 required");
        }
        if (n_u_values.empty() || deltas.empty()) {
            throw InputError("config: reproduce.n_u and reproduce.delta must be non-empty");
        }
        for (int n : n_u_values) {
            if (n < 1) {
                throw InputError("config: reproduce.n_u entries must be >= 1");
            }
        }
        for (double d : deltas) {
            if (!pos(d)) {
                throw InputError("config: reproduce.delta entries must be positive");
            }
        }
        if (train_nu < 1 || train_a < 1 || max_iters < 1 || !pos(stop_tol) || !(stagnation_tol >= 0.0) ||
            eval_nu < 1 || eval_a < 1) {
            throw InputError("config: greedy grid sizes and max_iters must be >= 1, stop_tol > 0");
        }
        if (!hf_trajectories.empty() && hf_trajectories.size() != online_parameters.size()) {
            throw InputError("config: online.hf_trajectories needs one entry per online parameter");
        }
        if (study == StudyKind::Online && artifacts_dir.empty()) {
            throw InputError("config: online study requires online.artifacts");
        }
    }
};

namespace detail {

/// Reads a JSON object and rejects keys that were never consumed.
class ObjectReader {
public:
    ObjectReader(const io::json& j, std::string where) : j_(j), where_(std::move(where))
    {
        if (!j_.is_object()) {
            throw InputError("config: " + where_ + " must be an object");
        }
    }

    template <class T> void get(const char* key, T& out)
    {
        seen_.insert(key);
        if (!j_.contains(key)) {
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const io::json::exception&) {
            throw InputError("config: " + where_ + "." + key + " has the wrong type");
        }
    }

    [[nodiscard]] bool has(const char* key) const { return j_.contains(key); }

    const io::json* child(const char* key)
    {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const
    {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) {
                throw InputError("config: unknown key " + where_ + "." + k);
            }
        }
    }

private:
    const io::json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

inline Parameter parameter_from(const io::json& j, const std::string& where)
{
    Parameter p;
    ObjectReader r(j, where);
    r.get("nu", p.nu);
    r.get("a_pui", p.a_pui);
    r.finish();
    return p;
}

inline io::json to_json(const Parameter& p) { return {{"nu", p.nu}, {"a_pui", p.a_pui}}; }

inline std::array<double, 2> interval_from(const io::json& j, const std::string& where)
{
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw InputError("config: " + where + " must be [min, max]");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

} // namespace detail

inline io::json to_json(const RunConfig& c)
{
    using io::json;
    const auto& g = c.mesh.geometry;
    json params = json::array(), trajs = json::array();
    for (const auto& p : c.online_parameters) {
        params.push_back(detail::to_json(p));
    }
    for (const auto& t : c.hf_trajectories) {
        trajs.push_back(t);
    }
    const char* eval = c.evaluation == EvaluationSet::None ? "none" : c.evaluation == EvaluationSet::Train ? "train" : "grid";
    return {
        {"study", to_string(c.study)},
        {"output_dir", c.output_dir},
        {"threads", c.threads},
        {"seed", c.seed},
        {"mesh",
         {{"msh", c.mesh.msh_path},
          {"lx", g.lx},
          {"ly", g.ly},
          {"lz", g.lz},
          {"hole_radius", g.hole_radius},
          {"resolution", g.resolution},
          {"layers", g.layers},
          {"radial_grading", g.radial_grading},
          {"order", g.order == ElementOrder::Linear ? "linear" : "quadratic"}}},
        {"material", {{"E", c.material.E}, {"sigma_y", c.material.sigma_y}, {"n_pui", c.material.n_pui}}},
        {"box", {{"nu", {c.box.nu_min, c.box.nu_max}}, {"a_pui", {c.box.a_min, c.box.a_max}}}},
        {"reference", detail::to_json(c.reference)},
        {"parameter", detail::to_json(c.parameter)},
        {"loading", io::to_json(c.loading)},
        {"boundary_conditions", io::to_json(c.bc)},
        {"time", {{"steps", c.time.steps}, {"t_final", c.time.t_final}, {"load_scale", c.time.load_scale}}},
        {"tolerances",
         {{"eps_newt", c.newton.eps_newt},
          {"newton_max_iters", c.newton.max_iters},
          {"max_halvings", c.newton.max_halvings},
          {"tangent", c.newton.tangent == TangentMode::Consistent ? "consistent" : "elastic"},
          {"tol_rm", c.newton.return_map.tol},
          {"eps_pod_u", c.eps_pod_u},
          {"eps_pod_sigma", c.eps_pod_sigma},
          {"delta", c.delta}}},
        {"reproduce", {{"n_u", c.n_u_values}, {"delta", c.deltas}}},
        {"greedy",
         {{"train_nu", c.train_nu},
          {"train_a", c.train_a},
          {"max_iters", c.max_iters},
          {"stop_tol", c.stop_tol},
          {"stagnation_tol", c.stagnation_tol},
          {"evaluation", eval},
          {"eval_nu", c.eval_nu},
          {"eval_a", c.eval_a}}},
        {"online", {{"artifacts", c.artifacts_dir}, {"parameters", params}, {"hf_trajectories", trajs}}},
    };
}

/// Parses and validates a run configuration. Unknown keys are errors.
inline RunConfig run_config_from_json(const io::json& j)
{
    RunConfig c;
    detail::ObjectReader top(j, "config");
    std::string study = to_string(c.study);
    top.get("study", study);
    c.study = study_kind_from(study);
    top.get("output_dir", c.output_dir);
    top.get("threads", c.threads);
    top.get("seed", c.seed);

    bool steps_given = false;
    bool train_a_given = false;
    bool train_nu_given = false;
    if (const auto* m = top.child("mesh")) {
        detail::ObjectReader r(*m, "mesh");
        auto& g = c.mesh.geometry;
        r.get("msh", c.mesh.msh_path);
        r.get("lx", g.lx);
        r.get("ly", g.ly);
        r.get("lz", g.lz);
        r.get("hole_radius", g.hole_radius);
        r.get("resolution", g.resolution);
        r.get("layers", g.layers);
        r.get("radial_grading", g.radial_grading);
        std::string order = "linear";
        r.get("order", order);
        if (order != "linear" && order != "quadratic") {
            throw InputError("config: mesh.order must be linear or quadratic");
        }
        g.order = order == "linear" ? ElementOrder::Linear : ElementOrder::Quadratic;
        r.finish();
    }
    if (const auto* m = top.child("material")) {
        detail::ObjectReader r(*m, "material");
        r.get("E", c.material.E);
        r.get("sigma_y", c.material.sigma_y);
        r.get("n_pui", c.material.n_pui);
        r.finish();
    }
    if (const auto* b = top.child("box")) {
        detail::ObjectReader r(*b, "box");
        if (const auto* nu = r.child("nu")) {
            const auto v = detail::interval_from(*nu, "box.nu");
            c.box.nu_min = v[0];
            c.box.nu_max = v[1];
        }
        if (const auto* a = r.child("a_pui")) {
            const auto v = detail::interval_from(*a, "box.a_pui");
            c.box.a_min = v[0];
            c.box.a_max = v[1];
        }
        r.finish();
    }
    c.reference = c.box.centroid();
    if (const auto* p = top.child("reference")) {
        c.reference = detail::parameter_from(*p, "reference");
    }
    c.parameter = c.reference;
    if (const auto* p = top.child("parameter")) {
        c.parameter = detail::parameter_from(*p, "parameter");
    }
    if (const auto* l = top.child("loading")) {
        detail::ObjectReader r(*l, "loading");
        if (const auto* t = r.child("traction")) {
            c.loading.traction = io::vec3_from(*t, "loading.traction");
        }
        if (const auto* b = r.child("body_force")) {
            c.loading.body_force = io::vec3_from(*b, "loading.body_force");
        }
        r.get("group", c.loading.traction_group);
        r.finish();
    }
    if (const auto* b = top.child("boundary_conditions")) {
        try {
            c.bc = io::boundary_conditions_from(*b);
        } catch (const io::json::exception& e) {
            throw InputError(std::string("config: boundary_conditions: ") + e.what());
        }
    }
    if (const auto* t = top.child("time")) {
        detail::ObjectReader r(*t, "time");
        steps_given = r.has("steps");
        r.get("steps", c.time.steps);
        r.get("t_final", c.time.t_final);
        r.get("load_scale", c.time.load_scale);
        r.finish();
    }
    if (const auto* t = top.child("tolerances")) {
        detail::ObjectReader r(*t, "tolerances");
        r.get("eps_newt", c.newton.eps_newt);
        r.get("newton_max_iters", c.newton.max_iters);
        r.get("max_halvings", c.newton.max_halvings);
        std::string tangent = "consistent";
        r.get("tangent", tangent);
        if (tangent != "consistent" && tangent != "elastic") {
            throw InputError("config: tolerances.tangent must be consistent or elastic");
        }
        c.newton.tangent = tangent == "consistent" ? TangentMode::Consistent : TangentMode::Elastic;
        r.get("tol_rm", c.newton.return_map.tol);
        r.get("eps_pod_u", c.eps_pod_u);
        r.get("eps_pod_sigma", c.eps_pod_sigma);
        r.get("delta", c.delta);
        r.finish();
    }
    if (const auto* p = top.child("reproduce")) {
        detail::ObjectReader r(*p, "reproduce");
        r.get("n_u", c.n_u_values);
        r.get("delta", c.deltas);
        r.finish();
    }
    if (const auto* g = top.child("greedy")) {
        detail::ObjectReader r(*g, "greedy");
        train_nu_given = r.has("train_nu");
        train_a_given = r.has("train_a");
        r.get("train_nu", c.train_nu);
        r.get("train_a", c.train_a);
        r.get("max_iters", c.max_iters);
        r.get("stop_tol", c.stop_tol);
        r.get("stagnation_tol", c.stagnation_tol);
        std::string eval = "none";
        r.get("evaluation", eval);
        if (eval == "none") {
            c.evaluation = EvaluationSet::None;
        } else if (eval == "train") {
            c.evaluation = EvaluationSet::Train;
        } else if (eval == "grid") {
            c.evaluation = EvaluationSet::Grid;
        } else {
            throw InputError("config: greedy.evaluation must be none, train or grid");
        }
        r.get("eval_nu", c.eval_nu);
        r.get("eval_a", c.eval_a);
        r.finish();
    }
    if (const auto* o = top.child("online")) {
        detail::ObjectReader r(*o, "online");
        r.get("artifacts", c.artifacts_dir);
        if (const auto* ps = r.child("parameters")) {
            if (!ps->is_array()) {
                throw InputError("config: online.parameters must be an array");
            }
            for (std::size_t i = 0; i < ps->size(); ++i) {
                c.online_parameters.push_back(
                    detail::parameter_from((*ps)[i], "online.parameters[" + std::to_string(i) + "]"));
            }
        }
        r.get("hf_trajectories", c.hf_trajectories);
        r.finish();
    }
    top.finish();

    if (!steps_given) {
        c.time.steps = c.study == StudyKind::Reproduce ? 20 : 10;
    }
    if (c.study == StudyKind::Greedy2p) {
        if (!train_a_given) {
            c.train_a = 20;
        }
    } else if (c.study == StudyKind::Greedy1p) {
        if (!train_a_given) {
            c.train_a = 1;
        }
        if (!train_nu_given) {
            c.train_nu = 20;
        }
    }
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path)
{
    return run_config_from_json(io::read_json(path));
}

/// Hash of the fully resolved configuration (defaults filled in).
inline std::string config_hash(const RunConfig& c) { return io::hash_of(to_json(c)); }

/// Common report header: config hash, study and the resolved configuration.
inline io::json report_header(const RunConfig& c)
{
    return {{"study", to_string(c.study)},
            {"config_hash", config_hash(c)},
            {"format_version", io::format_version},
            {"config", to_json(c)}};
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

/// Mesh, HF model and K_μ̄ of a run.
struct Problem {
    std::shared_ptr<const Mesh> mesh;
    std::unique_ptr<HfModel> model;
    std::shared_ptr<const SparseMatrix> k_bar;
    ElastoplasticParams reference;

    explicit Problem(const RunConfig& c)
        : mesh(std::make_shared<const Mesh>(c.mesh.build())),
          model(std::make_unique<HfModel>(mesh, c.bc, c.loading)),
          reference(c.reference.apply(c.material))
    {
        k_bar = std::make_shared<const SparseMatrix>(assemble_elastic_stiffness(*mesh, reference));
    }
};

namespace detail {

/// Matrix CSV: rows N_u, columns δ.
inline io::Csv grid_csv(const std::vector<int>& n_u, const std::vector<double>& deltas,
                        const std::function<double(std::size_t, std::size_t)>& value)
{
    std::vector<std::string> head{"n_u"};
    for (double d : deltas) {
        head.push_back("delta=" + io::fmt(d));
    }
    io::Csv csv(head);
    for (std::size_t i = 0; i < n_u.size(); ++i) {
        std::vector<std::string> r{std::to_string(n_u[i])};
        for (std::size_t j = 0; j < deltas.size(); ++j) {
            r.push_back(io::fmt(value(i, j)));
        }
        csv.row(r);
    }
    return csv;
}

inline void write_trajectory_summary(const std::filesystem::path& dir, const Trajectory& t)
{
    io::Csv csv({"k", "time", "load_factor", "newton_iterations", "max_displacement", "max_cumulative_plastic_strain"});
    for (int k = 0; k < t.steps(); ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const Vector p = cumulative_plastic_strain(t.states[ku]);
        csv.row({std::to_string(k + 1), io::fmt(t.times[ku]), io::fmt(t.load_factors[ku]),
                 std::to_string(t.newton_iterations[ku]), io::fmt(t.displacements[ku].cwiseAbs().maxCoeff()),
                 io::fmt(p.size() ? p.maxCoeff() : 0.0)});
    }
    csv.save(dir / "steps.csv");
}

/// Element average of the cumulative plastic strain.
inline Vector element_plastic_strain(const Mesh& mesh, const StateField& states)
{
    const Vector p = cumulative_plastic_strain(states);
    const int qpe = mesh.points_per_element();
    Vector out(mesh.volume_count());
    for (Index q = 0; q < mesh.volume_count(); ++q) {
        out[q] = p.segment(q * qpe, qpe).mean();
    }
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// HF run
// ---------------------------------------------------------------------------

struct HfReport {
    Trajectory trajectory;
    io::json report;
};

/// One HF trajectory at `config.parameter`: binary container, JSON sidecar,
/// per-step CSV and a VTK file of the final state.
inline HfReport run_hf(const RunConfig& c, const Logger& log = log_to_stderr)
{
    c.validate();
    namespace fs = std::filesystem;
    const fs::path out = c.output_dir;
    Problem pb(c);
    log("hf: " + std::to_string(pb.mesh->volume_count()) + " elements, " + std::to_string(pb.mesh->dof_count()) +
        " dofs, K=" + std::to_string(c.time.steps));
    HfReport r;
    r.trajectory = hf_time_march(*pb.model, c.parameter.apply(c.material), c.time, c.newton);
    const auto& t = r.trajectory;
    io::save_trajectory(out / "trajectory.bin", t);
    detail::write_trajectory_summary(out, t);
    {
        auto vtk = io::open_out(out / "final_state.vtk");
        VtkFields f;
        f.point_vectors.emplace_back("displacement", t.displacements.back());
        f.cell_scalars.emplace_back("cumulative_plastic_strain",
                                    detail::element_plastic_strain(*pb.mesh, t.states.back()));
        export_vtk(vtk, *pb.mesh, f);
    }
    r.report = report_header(c);
    r.report["parameter"] = detail::to_json(c.parameter);
    r.report["steps"] = t.steps();
    r.report["cutbacks"] = t.cutbacks;
    r.report["newton_iterations"] = t.newton_iterations;
    r.report["wall_time"] = t.wall_time;
    r.report["mesh"] = {{"volume_elements", pb.mesh->volume_count()},
                        {"surface_elements", pb.mesh->surface_count()},
                        {"dofs", pb.mesh->dof_count()},
                        {"constraints", pb.model->constraints().rows()}};
    r.report["artifacts"] = {{"trajectory.bin", io::file_digest(out / "trajectory.bin")}};
    io::write_json(out / "trajectory.json", r.report);
    io::write_json(out / "timing" / "hf.json", {{"config_hash", config_hash(c)}, {"wall_time", t.wall_time}});
    log("hf: done in " + io::fmt(t.wall_time) + " s");
    return r;
}

// ---------------------------------------------------------------------------
// Reproduction study
// ---------------------------------------------------------------------------

struct ReproductionCell {
    int n_u = 0;
    double delta = 0.0;
    bool ok = false;
    std::string error;
    Index n_sigma = 0;
    double projection_error = 0.0;
    double approximation_error = 0.0;
    double indicator = 0.0;
    double selected_percent = 0.0;
    double eq_residual = 0.0;
    double online_time = 0.0;
    double cpu_ratio = 0.0;
};

struct ReproductionResult {
    std::vector<int> n_u;
    std::vector<double> deltas;
    std::vector<ReproductionCell> cells; // row-major over (n_u, delta)
    double hf_time = 0.0;
    double spearman = 0.0;
    io::json report;

    [[nodiscard]] const ReproductionCell& cell(std::size_t i, std::size_t j) const
    {
        return cells[i * deltas.size() + j];
    }
};

/// Train and test at μ̄: HF trajectory, full POD of both fields, then one ROM
/// per (N_u, δ) cell. Cells whose N_u exceeds the available modes are reported
/// as failed with NaN entries.
inline ReproductionResult run_reproduction_study(const RunConfig& c, const Logger& log = log_to_stderr)
{
    c.validate();
    namespace fs = std::filesystem;
    const fs::path out = c.output_dir;
    Problem pb(c);
    log("reproduce: " + std::to_string(pb.mesh->volume_count()) + " elements, K=" + std::to_string(c.time.steps));
    const auto traj = hf_time_march(*pb.model, pb.reference, c.time, c.newton);
    const Matrix su = traj.displacement_snapshots();
    const Matrix ss = traj.stress_snapshots();
    const auto zu_full = pod(su, InnerProduct::stiffness(pb.k_bar), 1e-12);
    const auto zs = pod(ss, stress_inner_product(*pb.mesh), c.eps_pod_sigma);

    ReproductionResult r;
    r.n_u = c.n_u_values;
    r.deltas = c.deltas;
    r.hf_time = traj.wall_time;
    r.cells.resize(r.n_u.size() * r.deltas.size());
    parallel_for(r.cells.size(), c.threads, [&](std::size_t idx) {
        auto& cell = r.cells[idx];
        cell.n_u = r.n_u[idx / r.deltas.size()];
        cell.delta = r.deltas[idx % r.deltas.size()];
        const double nan = std::numeric_limits<double>::quiet_NaN();
        try {
            if (cell.n_u > zu_full.size()) {
                throw InputError("only " + std::to_string(zu_full.size()) + " displacement modes available");
            }
            auto art = std::make_shared<RomArtifacts>(
                build_artifacts(*pb.model, pb.reference, zu_full.truncated(cell.n_u), zs, ss, *pb.k_bar, cell.delta));
            art->eps_pod_sigma = c.eps_pod_sigma;
            const RomModel rom(art);
            const auto sol = rom.solve(pb.reference, c.time, c.newton);
            const auto e = trajectory_errors(art->zu, traj.displacements, sol.alpha_u);
            cell.n_sigma = art->zs.size();
            cell.projection_error = e.projection;
            cell.approximation_error = e.approximation;
            cell.indicator = sol.indicator_avg;
            cell.selected_percent = 100.0 * art->eq.kept_volume_fraction();
            cell.eq_residual = art->eq.volume.achieved_residual;
            cell.online_time = sol.wall_time;
            cell.cpu_ratio = sol.wall_time / traj.wall_time;
            cell.ok = true;
        } catch (const Error& e) {
            cell.error = e.what();
            cell.projection_error = cell.approximation_error = cell.indicator = nan;
            cell.selected_percent = cell.eq_residual = cell.cpu_ratio = nan;
        }
    });

    auto value = [&](auto field) {
        return [&r, field](std::size_t i, std::size_t j) { return r.cell(i, j).*field; };
    };
    detail::grid_csv(r.n_u, r.deltas, value(&ReproductionCell::approximation_error)).save(out / "e_app.csv");
    detail::grid_csv(r.n_u, r.deltas, value(&ReproductionCell::indicator)).save(out / "indicator.csv");
    detail::grid_csv(r.n_u, r.deltas, value(&ReproductionCell::selected_percent)).save(out / "selected_percent.csv");
    detail::grid_csv(r.n_u, r.deltas, value(&ReproductionCell::cpu_ratio)).save(out / "timing" / "cpu_ratio.csv");
    io::eigenvalue_csv(zu_full.eigenvalues).save(out / "eigen_u.csv");
    io::eigenvalue_csv(pod(ss, stress_inner_product(*pb.mesh), 1e-12).eigenvalues).save(out / "eigen_sigma.csv");
    {
        io::Csv cells({"n_u", "delta", "status", "n_sigma", "projection_error", "approximation_error", "indicator",
                       "selected_percent", "eq_residual"});
        for (const auto& cell : r.cells) {
            cells.row({std::to_string(cell.n_u), io::fmt(cell.delta), cell.ok ? "ok" : cell.error,
                       std::to_string(cell.n_sigma), io::fmt(cell.projection_error), io::fmt(cell.approximation_error),
                       io::fmt(cell.indicator), io::fmt(cell.selected_percent), io::fmt(cell.eq_residual)});
        }
        cells.save(out / "cells.csv");
    }

    std::vector<double> e_app, ind;
    for (const auto& cell : r.cells) {
        if (cell.ok) {
            e_app.push_back(cell.approximation_error);
            ind.push_back(cell.indicator);
        }
    }
    r.spearman = e_app.size() >= 2 ? spearman(e_app, ind) : std::numeric_limits<double>::quiet_NaN();
    r.report = report_header(c);
    r.report["hf_steps"] = traj.steps();
    r.report["modes_available"] = {{"n_u", zu_full.size()}, {"n_sigma", zs.size()}};
    r.report["cells"] = r.cells.size();
    r.report["failed_cells"] = std::count_if(r.cells.begin(), r.cells.end(), [](const auto& x) { return !x.ok; });
    r.report["spearman_e_app_indicator"] = r.spearman;
    io::write_json(out / "report.json", r.report);
    io::write_json(out / "timing" / "timing.json", {{"config_hash", config_hash(c)}, {"hf_time", r.hf_time}});
    log("reproduce: " + std::to_string(r.cells.size()) + " cells, spearman " + io::fmt(r.spearman));
    return r;
}

// ---------------------------------------------------------------------------
// Greedy study
// ---------------------------------------------------------------------------

struct EvaluationEntry {
    Parameter mu;
    double indicator = 0.0;
    double projection_error = 0.0;
    double approximation_error = 0.0;
    double hf_time = 0.0;
    double online_time = 0.0;
    bool ok = false;
    std::string error;

    [[nodiscard]] double speedup() const { return online_time > 0.0 ? hf_time / online_time : 0.0; }
};

struct GreedyStudyResult {
    GreedyResult greedy;
    std::vector<Parameter> train;
    std::vector<EvaluationEntry> evaluation;
    bool sampled_indicator_decreases = true;
    io::json report;
};

/// For every iteration that sampled a new parameter: the indicator of the
/// previous argmax in this sweep is below its value in the previous sweep.
inline bool sampled_indicator_decreases(const GreedyTrace& t)
{
    const auto& its = t.iterations;
    for (std::size_t i = 1; i < its.size(); ++i) {
        if (its[i].resampled || its[i].table.empty() || its[i - 1].table.empty()) {
            continue;
        }
        const auto j = static_cast<std::size_t>(its[i - 1].argmax);
        if (!(its[i].table[j].indicator < its[i - 1].table[j].indicator)) {
            return false;
        }
    }
    return true;
}

inline GreedyStudyResult run_greedy_study(const RunConfig& c, const Logger& log = log_to_stderr)
{
    c.validate();
    namespace fs = std::filesystem;
    const fs::path out = c.output_dir;
    Problem pb(c);
    GreedyStudyResult r;
    GreedyConfig g;
    g.train = r.train = parameter_grid(c.box, c.train_nu, c.train_a, c.reference);
    g.reference = c.reference;
    g.base = c.material;
    g.grid = c.time;
    g.newton = c.newton;
    g.eps_pod_u = c.eps_pod_u;
    g.eps_pod_sigma = c.eps_pod_sigma;
    g.delta = c.delta;
    g.max_iters = c.max_iters;
    g.stop_tol = c.stop_tol;
    g.stagnation_tol = c.stagnation_tol;
    g.threads = c.threads;
    log("greedy: " + std::to_string(pb.mesh->volume_count()) + " elements, " + std::to_string(g.train.size()) +
        " training parameters");
    r.greedy = pod_greedy(pb.mesh, c.bc, c.loading, g);
    const auto& trace = r.greedy.trace;
    r.sampled_indicator_decreases = sampled_indicator_decreases(trace);

    const std::string hash = config_hash(c);
    io::save_artifacts(out / "artifacts", *r.greedy.artifacts, c.bc, hash);

    io::Csv iters({"iteration", "nu", "a_pui", "resampled", "max_indicator", "argmax", "n_u", "n_sigma",
                   "volume_support", "surface_support", "selected_percent", "volume_residual", "surface_residual"});
    io::Csv timing({"iteration", "hf_time", "offline_time", "sweep_time"});
    io::json trace_json = io::json::array();
    for (const auto& it : trace.iterations) {
        iters.row({std::to_string(it.iteration), io::fmt(it.sampled.nu), io::fmt(it.sampled.a_pui),
                   it.resampled ? "1" : "0", io::fmt(it.max_indicator), std::to_string(it.argmax),
                   std::to_string(it.n_u), std::to_string(it.n_sigma), std::to_string(it.volume_support),
                   std::to_string(it.surface_support), io::fmt(100.0 * it.kept_volume_fraction),
                   io::fmt(it.volume_residual), io::fmt(it.surface_residual)});
        timing.row({std::to_string(it.iteration), io::fmt(it.hf_time), io::fmt(it.offline_time),
                    io::fmt(it.sweep_time)});
        io::Csv table({"index", "nu", "a_pui", "indicator", "status"});
        for (const auto& e : it.table) {
            table.row({std::to_string(e.index), io::fmt(e.mu.nu), io::fmt(e.mu.a_pui), io::fmt(e.indicator),
                       e.ok ? "ok" : e.error});
        }
        table.save(out / ("indicator_iter" + std::to_string(it.iteration) + ".csv"));
        trace_json.push_back({{"iteration", it.iteration},
                              {"sampled", detail::to_json(it.sampled)},
                              {"resampled", it.resampled},
                              {"max_indicator", it.max_indicator},
                              {"argmax", it.argmax},
                              {"n_u", it.n_u},
                              {"n_sigma", it.n_sigma},
                              {"volume_support", it.volume_support},
                              {"surface_support", it.surface_support},
                              {"kept_volume_fraction", it.kept_volume_fraction}});
    }
    iters.save(out / "iterations.csv");
    timing.save(out / "timing" / "iterations.csv");
    {
        io::Csv train({"index", "nu", "a_pui"});
        for (std::size_t i = 0; i < r.train.size(); ++i) {
            train.row({std::to_string(i), io::fmt(r.train[i].nu), io::fmt(r.train[i].a_pui)});
        }
        train.save(out / "train.csv");
    }

    if (c.evaluation != EvaluationSet::None) {
        const auto eval = c.evaluation == EvaluationSet::Train
                              ? r.train
                              : parameter_grid(c.box, c.eval_nu, c.eval_a, c.reference);
        log("greedy: evaluating " + std::to_string(eval.size()) + " parameters against HF");
        const RomModel rom(r.greedy.artifacts);
        r.evaluation.resize(eval.size());
        for (std::size_t i = 0; i < eval.size(); ++i) {
            auto& e = r.evaluation[i];
            e.mu = eval[i];
            try {
                const auto params = eval[i].apply(c.material);
                const auto hf = hf_time_march(*pb.model, params, c.time, c.newton);
                const auto sol = rom.solve(params, c.time, c.newton);
                const auto err = trajectory_errors(r.greedy.artifacts->zu, hf.displacements, sol.alpha_u);
                e.indicator = sol.indicator_avg;
                e.projection_error = err.projection;
                e.approximation_error = err.approximation;
                e.hf_time = hf.wall_time;
                e.online_time = sol.wall_time;
                e.ok = true;
            } catch (const Error& ex) {
                e.error = ex.what();
            }
        }
        io::Csv ev({"nu", "a_pui", "status", "indicator", "projection_error", "approximation_error"});
        io::Csv evt({"nu", "a_pui", "hf_time", "online_time", "speedup"});
        for (const auto& e : r.evaluation) {
            ev.row({io::fmt(e.mu.nu), io::fmt(e.mu.a_pui), e.ok ? "ok" : e.error, io::fmt(e.indicator),
                    io::fmt(e.projection_error), io::fmt(e.approximation_error)});
            evt.row({io::fmt(e.mu.nu), io::fmt(e.mu.a_pui), io::fmt(e.hf_time), io::fmt(e.online_time),
                     io::fmt(e.speedup())});
        }
        ev.save(out / "evaluation.csv");
        evt.save(out / "timing" / "evaluation.csv");
    }

    const auto& last = trace.iterations.back();
    r.report = report_header(c);
    r.report["iterations"] = trace_json;
    r.report["iterations_executed"] = trace.iterations.size();
    r.report["sampled"] = io::json::array();
    for (const auto& p : trace.sampled) {
        r.report["sampled"].push_back(detail::to_json(p));
    }
    r.report["stop_reason"] = trace.stop_reason;
    r.report["final"] = {{"n_u", last.n_u},
                         {"n_sigma", last.n_sigma},
                         {"selected_percent", 100.0 * last.kept_volume_fraction},
                         {"max_indicator", last.max_indicator}};
    r.report["sampled_indicator_decreases"] = r.sampled_indicator_decreases;
    if (!r.evaluation.empty()) {
        std::vector<double> ind, err;
        double worst = 0.0;
        for (const auto& e : r.evaluation) {
            if (e.ok) {
                ind.push_back(e.indicator);
                err.push_back(e.approximation_error);
                worst = std::max(worst, e.approximation_error);
            }
        }
        r.report["evaluation"] = {{"parameters", r.evaluation.size()},
                                  {"failed", r.evaluation.size() - ind.size()},
                                  {"max_approximation_error", worst},
                                  {"spearman_indicator_error",
                                   ind.size() >= 2 ? spearman(ind, err) : std::numeric_limits<double>::quiet_NaN()}};
    }
    r.report["artifacts"] = io::read_json(out / "artifacts" / io::ArtifactFiles::meta).at("files");
    io::write_json(out / "trace.json", r.report);
    log("greedy: " + std::to_string(trace.iterations.size()) + " iterations, stop: " + trace.stop_reason);
    return r;
}

// ---------------------------------------------------------------------------
// Online runs from stored artifacts
// ---------------------------------------------------------------------------

struct OnlineEntry {
    Parameter mu;
    RomSolution solution;
    std::optional<TrajectoryErrors> errors;
};

/// One online solve per listed parameter; optional comparison against stored
/// HF trajectories. An empty list does nothing.
inline std::vector<OnlineEntry> run_online(const RunConfig& c, const Logger& log = log_to_stderr)
{
    c.validate();
    namespace fs = std::filesystem;
    if (c.online_parameters.empty()) {
        log("online: warning: no parameters given, nothing to do");
        return {};
    }
    const auto loaded = io::load_artifacts(c.artifacts_dir);
    const fs::path out = c.output_dir;
    const RomModel rom(loaded.artifacts);
    std::vector<OnlineEntry> entries(c.online_parameters.size());
    parallel_for(entries.size(), c.threads, [&](std::size_t i) {
        entries[i].mu = c.online_parameters[i];
        entries[i].solution = rom.solve(c.online_parameters[i].apply(c.material), c.time, c.newton);
    });
    io::Csv summary({"index", "nu", "a_pui", "indicator_avg", "projection_error", "approximation_error"});
    io::Csv timing({"index", "online_time"});
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& e = entries[i];
        const std::string tag = std::to_string(i);
        io::rom_solution_csv(e.solution).save(out / ("online_" + tag + ".csv"));
        io::indicator_csv(e.solution.indicator, e.solution.indicator_avg).save(out / ("indicator_" + tag + ".csv"));
        if (!c.hf_trajectories.empty()) {
            const auto hf = io::load_trajectory(c.hf_trajectories[i]);
            if (hf.displacements.rows() != loaded.artifacts->zu.dimension() ||
                hf.displacements.cols() != e.solution.steps()) {
                throw InputError("online: HF trajectory " + c.hf_trajectories[i] + " does not match the run");
            }
            e.errors = trajectory_errors(loaded.artifacts->zu, hf.displacement_columns(), e.solution.alpha_u);
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        summary.row({tag, io::fmt(e.mu.nu), io::fmt(e.mu.a_pui), io::fmt(e.solution.indicator_avg),
                     io::fmt(e.errors ? e.errors->projection : nan), io::fmt(e.errors ? e.errors->approximation : nan)});
        timing.row({tag, io::fmt(e.solution.wall_time)});
    }
    summary.save(out / "online_summary.csv");
    timing.save(out / "timing" / "online.csv");
    auto report = report_header(c);
    report["artifacts"] = {{"config_hash", loaded.meta.at("config_hash")}, {"files", loaded.meta.at("files")}};
    report["parameters"] = entries.size();
    io::write_json(out / "report.json", report);
    log("online: " + std::to_string(entries.size()) + " parameters solved");
    return entries;
}

/// Dispatches on the study kind.
inline void run_study(const RunConfig& c, const Logger& log = log_to_stderr)
{
    switch (c.study) {
    case StudyKind::Hf: run_hf(c, log); break;
    case StudyKind::Reproduce: run_reproduction_study(c, log); break;
    case StudyKind::Greedy1p:
    case StudyKind::Greedy2p: run_greedy_study(c, log); break;
    case StudyKind::Online: run_online(c, log); break;
    }
}

/// Human-readable summary of a study output directory.
inline std::string summarize(const std::filesystem::path& dir)
{
    namespace fs = std::filesystem;
    std::ostringstream s;
    const fs::path candidates[] = {dir / "report.json", dir / "trace.json", dir / "trajectory.json"};
    const fs::path* found = nullptr;
    for (const auto& p : candidates) {
        if (fs::exists(p)) {
            found = &p;
            break;
        }
    }
    if (!found) {
        throw InputError("report: no report.json, trace.json or trajectory.json in " + dir.string());
    }
    const auto j = io::read_json(*found);
    s << "study: " << j.value("study", "?") << "\nconfig hash: " << j.value("config_hash", "?") << "\n";
    const std::string study = j.value("study", "");
    if (study == "reproduce") {
        s << "cells: " << j.at("cells") << " (failed " << j.at("failed_cells") << ")\n";
        s << "spearman(E_app, indicator): " << j.at("spearman_e_app_indicator") << "\n";
        for (const char* f : {"e_app.csv", "indicator.csv", "selected_percent.csv"}) {
            s << "\n" << f << "\n" << io::read_text(dir / f);
        }
    } else if (study == "greedy1p" || study == "greedy2p") {
        s << "iterations: " << j.at("iterations_executed") << ", stop: " << j.at("stop_reason").get<std::string>()
          << "\n";
        s << "final: " << j.at("final").dump() << "\n";
        s << "indicator at sampled parameter decreases: " << j.at("sampled_indicator_decreases") << "\n";
        if (j.contains("evaluation")) {
            s << "evaluation: " << j.at("evaluation").dump() << "\n";
        }
        s << "\n" << io::read_text(dir / "iterations.csv");
        if (fs::exists(dir / "timing" / "evaluation.csv")) {
            s << "\n" << io::read_text(dir / "timing" / "evaluation.csv");
        }
    } else if (study == "hf") {
        s << "steps: " << j.at("steps") << ", cutbacks: " << j.at("cutbacks") << "\n";
        s << "\n" << io::read_text(dir / "steps.csv");
    } else {
        s << j.dump(2) << "\n";
    }
    return s.str();
}

} // namespace eqrom
