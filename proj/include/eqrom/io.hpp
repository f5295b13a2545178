#pragma once

#include "greedy.hpp"
#include "mesh_io.hpp"
#include "rom.hpp"

#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include <json.hpp>
#endif

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace eqrom::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int format_version = 1;

/// Shortest text that reads back to the same double.
inline std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string hash_of(const json& j) { return hex(fnv1a(j.dump())); }

// ---------------------------------------------------------------------------
// Text files
// ---------------------------------------------------------------------------

inline std::ofstream open_out(const fs::path& path)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    return out;
}

inline std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text)
{
    auto out = open_out(path);
    out << text;
}

inline json read_json(const fs::path& path)
{
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// RFC 4180 table: CRLF records, fields quoted when they contain a comma,
/// quote, CR or LF.
class Csv {
public:
    explicit Csv(std::vector<std::string> header) { row(std::move(header)); }

    static std::string quote(const std::string& f)
    {
        if (f.find_first_of(",\"\r\n") == std::string::npos) {
            return f;
        }
        std::string q = "\"";
        for (char c : f) {
            q += c;
            if (c == '"') {
                q += '"';
            }
        }
        return q + "\"";
    }

    Csv& row(const std::vector<std::string>& fields)
    {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            text_ += (i ? "," : "") + quote(fields[i]);
        }
        text_ += "\r\n";
        ++rows_;
        return *this;
    }

    [[nodiscard]] const std::string& str() const { return text_; }
    [[nodiscard]] std::size_t rows() const { return rows_; }
    void save(const fs::path& path) const { write_text(path, text_); }

private:
    std::string text_;
    std::size_t rows_ = 0;
};

/// Splits RFC 4180 text into records of fields.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text)
{
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
                ++i;
            }
            row.push_back(std::move(field));
            rows.push_back(std::move(row));
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) {
        throw InputError("csv: unterminated quoted field");
    }
    if (any) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline double parse_double(const std::string& s, const std::string& what)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw InputError(what + ": not a number: '" + s + "'");
    }
}

// ---------------------------------------------------------------------------
// Binary containers: 8-byte magic, u32 version, u32 header count, u64 header
// fields, then little-endian IEEE-754 doubles.
// ---------------------------------------------------------------------------

namespace detail {

template <class T> T to_le(T v)
{
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

class BinaryWriter {
public:
    BinaryWriter(const fs::path& path, std::string_view magic, const std::vector<std::uint64_t>& header)
        : out_(open_out(path))
    {
        std::array<char, 8> m{};
        std::copy_n(magic.begin(), std::min<std::size_t>(magic.size(), 8), m.begin());
        out_.write(m.data(), 8);
        put(to_le(static_cast<std::uint32_t>(format_version)));
        put(to_le(static_cast<std::uint32_t>(header.size())));
        for (auto h : header) {
            put(to_le(h));
        }
    }

    void doubles(const double* p, std::size_t n)
    {
        for (std::size_t i = 0; i < n; ++i) {
            put(to_le(p[i]));
        }
    }
    void matrix(const Matrix& m) { doubles(m.data(), static_cast<std::size_t>(m.size())); }
    void vector(const Vector& v) { doubles(v.data(), static_cast<std::size_t>(v.size())); }

private:
    template <class T> void put(T v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
    std::ofstream out_;
};

class BinaryReader {
public:
    BinaryReader(const fs::path& path, std::string_view magic) : in_(path, std::ios::binary), path_(path.string())
    {
        if (!in_) {
            throw InputError("cannot read " + path_);
        }
        std::array<char, 8> m{};
        in_.read(m.data(), 8);
        std::array<char, 8> want{};
        std::copy_n(magic.begin(), std::min<std::size_t>(magic.size(), 8), want.begin());
        if (!in_ || m != want) {
            throw InputError(path_ + ": not a " + std::string(magic) + " container");
        }
        if (get<std::uint32_t>() != static_cast<std::uint32_t>(format_version)) {
            throw InputError(path_ + ": unsupported container version");
        }
        const auto n = get<std::uint32_t>();
        for (std::uint32_t i = 0; i < n; ++i) {
            header_.push_back(get<std::uint64_t>());
        }
    }

    [[nodiscard]] const std::vector<std::uint64_t>& header() const { return header_; }

    Matrix matrix(Index rows, Index cols)
    {
        Matrix m(rows, cols);
        for (Index i = 0; i < m.size(); ++i) {
            m.data()[i] = get<double>();
        }
        return m;
    }
    Vector vector(Index n) { return matrix(n, 1); }

    void expect_end()
    {
        in_.peek();
        if (!in_.eof()) {
            throw InputError(path_ + ": trailing bytes");
        }
    }

private:
    template <class T> T get()
    {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in_) {
            throw InputError(path_ + ": truncated container");
        }
        return to_le(v);
    }
    std::ifstream in_;
    std::string path_;
    std::vector<std::uint64_t> header_;
};

} // namespace detail

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// Header N, N_g, N_d, K; then load factors (K), displacements (N×K),
/// stresses (N_g×K), multipliers (N_d×K), cumulative plastic strain (N_g/6×K).
inline void save_trajectory(const fs::path& path, const Trajectory& t)
{
    const auto k = static_cast<Index>(t.steps());
    const Index n = k ? t.displacements.front().size() : 0;
    const Index ng = k ? 6 * static_cast<Index>(t.states.front().size()) : 0;
    const Index nd = k ? t.multipliers.front().size() : 0;
    detail::BinaryWriter w(path, "EQROMTRJ",
                           {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(ng),
                            static_cast<std::uint64_t>(nd), static_cast<std::uint64_t>(k)});
    w.doubles(t.load_factors.data(), t.load_factors.size());
    w.matrix(t.displacement_snapshots());
    w.matrix(t.stress_snapshots());
    for (const auto& l : t.multipliers) {
        w.vector(l);
    }
    for (const auto& s : t.states) {
        w.vector(cumulative_plastic_strain(s));
    }
}

struct StoredTrajectory {
    std::vector<double> load_factors;
    Matrix displacements;
    Matrix stresses;
    Matrix multipliers;
    Matrix plastic_strain;

    [[nodiscard]] std::vector<Vector> displacement_columns() const
    {
        std::vector<Vector> v;
        for (Index k = 0; k < displacements.cols(); ++k) {
            v.emplace_back(displacements.col(k));
        }
        return v;
    }
};

inline StoredTrajectory load_trajectory(const fs::path& path)
{
    detail::BinaryReader r(path, "EQROMTRJ");
    const auto& h = r.header();
    if (h.size() != 4) {
        throw InputError(path.string() + ": trajectory header must hold 4 counts");
    }
    const auto n = static_cast<Index>(h[0]), ng = static_cast<Index>(h[1]), nd = static_cast<Index>(h[2]),
               k = static_cast<Index>(h[3]);
    StoredTrajectory t;
    const Vector g = r.vector(k);
    t.load_factors.assign(g.data(), g.data() + g.size());
    t.displacements = r.matrix(n, k);
    t.stresses = r.matrix(ng, k);
    t.multipliers = r.matrix(nd, k);
    t.plastic_strain = r.matrix(ng / 6, k);
    r.expect_end();
    return t;
}

// ---------------------------------------------------------------------------
// Bases
// ---------------------------------------------------------------------------

/// Header: dimension, N, inner-product kind (0 stiffness, 1 diagonal), eigenvalue
/// count; then modes, eigenvalues and, for the diagonal kind, its weights.
/// A stiffness inner product is not stored; the reader supplies it.
inline void save_basis(const fs::path& path, const ReducedBasis& b)
{
    const bool diag = b.inner_product.kind() == InnerProduct::Kind::DiagonalWeights;
    detail::BinaryWriter w(path, "EQROMBAS",
                           {static_cast<std::uint64_t>(b.dimension()), static_cast<std::uint64_t>(b.size()),
                            diag ? 1ULL : 0ULL, static_cast<std::uint64_t>(b.eigenvalues.size())});
    w.matrix(b.modes);
    w.vector(b.eigenvalues);
    if (diag) {
        w.vector(b.inner_product.weights());
    }
}

inline ReducedBasis load_basis(const fs::path& path, const InnerProduct& stiffness = {})
{
    detail::BinaryReader r(path, "EQROMBAS");
    const auto& h = r.header();
    if (h.size() != 4 || h[2] > 1) {
        throw InputError(path.string() + ": malformed basis header");
    }
    const auto dim = static_cast<Index>(h[0]), n = static_cast<Index>(h[1]), ne = static_cast<Index>(h[3]);
    ReducedBasis b;
    b.modes = r.matrix(dim, n);
    b.eigenvalues = r.vector(ne);
    if (h[2] == 1) {
        b.inner_product = InnerProduct::diagonal(r.vector(dim));
    } else {
        if (stiffness.kind() != InnerProduct::Kind::Stiffness || stiffness.size() != dim) {
            throw InputError(path.string() + ": stiffness inner product of size " + std::to_string(dim) + " required");
        }
        b.inner_product = stiffness;
    }
    r.expect_end();
    return b;
}

/// index, eigenvalue, relative eigenvalue, relative tail energy.
inline Csv eigenvalue_csv(const Vector& eigenvalues)
{
    Csv csv({"index", "eigenvalue", "relative", "tail_energy"});
    const double first = eigenvalues.size() ? eigenvalues[0] : 0.0;
    const double total = eigenvalues.sum();
    double tail = total;
    for (Index i = 0; i < eigenvalues.size(); ++i) {
        tail -= eigenvalues[i];
        csv.row({std::to_string(i + 1), fmt(eigenvalues[i]), fmt(first > 0.0 ? eigenvalues[i] / first : 0.0),
                 fmt(total > 0.0 ? std::max(tail, 0.0) / total : 0.0)});
    }
    return csv;
}

// ---------------------------------------------------------------------------
// EQ rules and indicator traces
// ---------------------------------------------------------------------------

inline Csv eq_rule_csv(const EqRule& rule)
{
    Csv csv({"element_index", "weight"});
    for (const auto& [e, w] : rule.support()) {
        csv.row({std::to_string(e), fmt(w)});
    }
    return csv;
}

inline json eq_rule_json(const EqRule& rule)
{
    return {{"level", to_string(rule.level)},
            {"delta", rule.delta},
            {"achieved_residual", rule.achieved_residual},
            {"support_size", rule.support_size()},
            {"candidates", rule.weights.size()},
            {"converged", rule.converged},
            {"iterations", rule.iterations}};
}

/// Reads (element_index, weight) pairs.
inline std::vector<std::pair<Index, double>> read_eq_rule_csv(const fs::path& path)
{
    const auto rows = parse_csv(read_text(path));
    if (rows.empty() || rows[0] != std::vector<std::string>{"element_index", "weight"}) {
        throw InputError(path.string() + ": expected header element_index,weight");
    }
    std::vector<std::pair<Index, double>> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 2) {
            throw InputError(path.string() + ": row " + std::to_string(i) + " must have 2 fields");
        }
        out.emplace_back(static_cast<Index>(parse_double(rows[i][0], path.string())),
                         parse_double(rows[i][1], path.string()));
    }
    return out;
}

/// (k, Δ^(k)) rows followed by a summary row ("avg", Δ^avg).
inline Csv indicator_csv(const std::vector<double>& per_step, double average)
{
    Csv csv({"k", "indicator"});
    for (std::size_t k = 0; k < per_step.size(); ++k) {
        csv.row({std::to_string(k + 1), fmt(per_step[k])});
    }
    csv.row({"avg", fmt(average)});
    return csv;
}

/// Per-step coordinates, indicator and Newton iterations of an online solve.
inline Csv rom_solution_csv(const RomSolution& s)
{
    const Index nu = s.alpha_u.empty() ? 0 : s.alpha_u.front().size();
    const Index ns = s.alpha_s.empty() ? 0 : s.alpha_s.front().size();
    std::vector<std::string> head{"k", "load_factor", "newton_iterations", "indicator"};
    for (Index i = 0; i < nu; ++i) {
        head.push_back("alpha_u_" + std::to_string(i + 1));
    }
    for (Index i = 0; i < ns; ++i) {
        head.push_back("alpha_s_" + std::to_string(i + 1));
    }
    Csv csv(head);
    for (int k = 0; k < s.steps(); ++k) {
        const auto ku = static_cast<std::size_t>(k);
        std::vector<std::string> r{std::to_string(k + 1), fmt(s.load_factors[ku]),
                                   std::to_string(s.newton_iterations[ku]), fmt(s.indicator[ku])};
        for (Index i = 0; i < nu; ++i) {
            r.push_back(fmt(s.alpha_u[ku][i]));
        }
        for (Index i = 0; i < ns; ++i) {
            r.push_back(fmt(s.alpha_s[ku][i]));
        }
        csv.row(r);
    }
    return csv;
}

// ---------------------------------------------------------------------------
// Artifacts directory
//
//   artifacts.json      metadata: format version, config hash, settings, file digests
//   mesh.msh            the HF mesh (MSH 2.2)
//   basis_u.bin         displacement basis (stiffness inner product rebuilt from μ̄)
//   basis_sigma.bin     stress basis
//   eigen_u.csv, eigen_sigma.csv
//   eq_volume.csv, eq_surface.csv, eq.json
//   indicator.bin       Riesz elements, Gramian and its triangular factor
// ---------------------------------------------------------------------------

inline json to_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

inline Vec3 vec3_from(const json& j, const std::string& what)
{
    if (!j.is_array() || j.size() != 3) {
        throw InputError(what + ": expected an array of 3 numbers");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json to_json(const ElastoplasticParams& p)
{
    return {{"E", p.E}, {"nu", p.nu}, {"sigma_y", p.sigma_y}, {"n_pui", p.n_pui}, {"a_pui", p.a_pui}};
}

inline json to_json(const Loading& l)
{
    return {{"traction", to_json(l.traction)}, {"group", l.traction_group}, {"body_force", to_json(l.body_force)}};
}

inline json to_json(const BoundaryConditions& bc)
{
    json fixes = json::array(), ties = json::array();
    for (const auto& f : bc.fixes) {
        fixes.push_back({{"group", f.group}, {"component", f.component}});
    }
    for (const auto& t : bc.ties) {
        ties.push_back({{"group", t.group}, {"component", t.component}});
    }
    return {{"fixes", fixes}, {"ties", ties}};
}

inline BoundaryConditions boundary_conditions_from(const json& j)
{
    BoundaryConditions bc;
    for (const auto& f : j.at("fixes")) {
        bc.fixes.push_back({f.at("group").get<std::string>(), f.at("component").get<int>()});
    }
    for (const auto& t : j.at("ties")) {
        bc.ties.push_back({t.at("group").get<std::string>(), t.at("component").get<int>()});
    }
    return bc;
}

struct ArtifactFiles {
    static constexpr const char* meta = "artifacts.json";
    static constexpr const char* mesh = "mesh.msh";
    static constexpr const char* basis_u = "basis_u.bin";
    static constexpr const char* basis_s = "basis_sigma.bin";
    static constexpr const char* eigen_u = "eigen_u.csv";
    static constexpr const char* eigen_s = "eigen_sigma.csv";
    static constexpr const char* eq_volume = "eq_volume.csv";
    static constexpr const char* eq_surface = "eq_surface.csv";
    static constexpr const char* eq_meta = "eq.json";
    static constexpr const char* indicator = "indicator.bin";
};

inline std::string file_digest(const fs::path& p) { return hex(fnv1a(read_text(p))); }

inline void save_artifacts(const fs::path& dir, const RomArtifacts& a, const BoundaryConditions& bc,
                           const std::string& config_hash)
{
    a.validate();
    using F = ArtifactFiles;
    fs::create_directories(dir);
    write_text(dir / F::mesh, export_msh_text(*a.mesh));
    save_basis(dir / F::basis_u, a.zu);
    save_basis(dir / F::basis_s, a.zs);
    eigenvalue_csv(a.zu.eigenvalues).save(dir / F::eigen_u);
    eigenvalue_csv(a.zs.eigenvalues).save(dir / F::eigen_s);
    eq_rule_csv(a.eq.volume).save(dir / F::eq_volume);
    eq_rule_csv(a.eq.surface).save(dir / F::eq_surface);
    write_json(dir / F::eq_meta, {{"volume", eq_rule_json(a.eq.volume)},
                                  {"surface", eq_rule_json(a.eq.surface)},
                                  {"kept_volume_elements", a.eq.reduced_mesh.kept_volume.size()},
                                  {"kept_surface_elements", a.eq.reduced_mesh.kept_surface.size()},
                                  {"kept_volume_fraction", a.eq.kept_volume_fraction()}});
    {
        detail::BinaryWriter w(dir / F::indicator, "EQROMIND",
                               {static_cast<std::uint64_t>(a.indicator.riesz.rows()),
                                static_cast<std::uint64_t>(a.indicator.riesz.cols())});
        w.matrix(a.indicator.riesz);
        w.matrix(a.indicator.gramian);
        w.matrix(a.indicator.factor);
    }
    json files = json::object();
    for (const char* f : {F::mesh, F::basis_u, F::basis_s, F::eq_volume, F::eq_surface, F::indicator}) {
        files[f] = file_digest(dir / f);
    }
    write_json(dir / F::meta, {{"format_version", format_version},
                               {"config_hash", config_hash},
                               {"reference", to_json(a.reference)},
                               {"loading", to_json(a.loading)},
                               {"boundary_conditions", to_json(bc)},
                               {"delta", a.delta},
                               {"eps_pod_u", a.eps_pod_u},
                               {"eps_pod_sigma", a.eps_pod_sigma},
                               {"n_u", a.zu.size()},
                               {"n_sigma", a.zs.size()},
                               {"files", files}});
}

/// Loaded artifacts plus the metadata needed to echo them in reports.
struct LoadedArtifacts {
    std::shared_ptr<const RomArtifacts> artifacts;
    json meta;
};

inline LoadedArtifacts load_artifacts(const fs::path& dir)
{
    using F = ArtifactFiles;
    if (!fs::is_directory(dir)) {
        throw InputError("artifacts directory not found: " + dir.string());
    }
    if (!fs::exists(dir / F::meta)) {
        throw InputError("malformed artifacts directory " + dir.string() + ": missing " + F::meta);
    }
    LoadedArtifacts out;
    out.meta = read_json(dir / F::meta);
    try {
        if (out.meta.at("format_version").get<int>() != format_version) {
            throw InputError("artifacts: unsupported format version");
        }
        for (const auto& [name, digest] : out.meta.at("files").items()) {
            if (!fs::exists(dir / name)) {
                throw InputError("malformed artifacts directory " + dir.string() + ": missing " + name);
            }
            if (file_digest(dir / name) != digest.get<std::string>()) {
                throw InputError("artifacts: " + name + " does not match its recorded digest");
            }
        }
        auto a = std::make_shared<RomArtifacts>();
        std::istringstream msh(read_text(dir / F::mesh));
        a->mesh = std::make_shared<const Mesh>(import_msh(msh));
        const Mesh& mesh = *a->mesh;
        const auto& m = out.meta;
        const auto& r = m.at("reference");
        a->reference.E = r.at("E").get<double>();
        a->reference.nu = r.at("nu").get<double>();
        a->reference.sigma_y = r.at("sigma_y").get<double>();
        a->reference.n_pui = r.at("n_pui").get<double>();
        a->reference.a_pui = r.at("a_pui").get<double>();
        a->reference.validate();
        const auto& l = m.at("loading");
        a->loading.traction = vec3_from(l.at("traction"), "loading.traction");
        a->loading.traction_group = l.at("group").get<std::string>();
        a->loading.body_force = vec3_from(l.at("body_force"), "loading.body_force");
        a->constraints = build_constraints(mesh, boundary_conditions_from(m.at("boundary_conditions")));
        a->delta = m.at("delta").get<double>();
        a->eps_pod_u = m.at("eps_pod_u").get<double>();
        a->eps_pod_sigma = m.at("eps_pod_sigma").get<double>();

        auto k_bar = std::make_shared<const SparseMatrix>(assemble_elastic_stiffness(mesh, a->reference));
        a->zu = load_basis(dir / F::basis_u, InnerProduct::stiffness(k_bar));
        a->zs = load_basis(dir / F::basis_s);

        a->eq.volume.level = EqLevel::Volume;
        a->eq.volume.delta = a->delta;
        a->eq.volume.weights = Vector::Zero(mesh.volume_count());
        for (const auto& [e, w] : read_eq_rule_csv(dir / F::eq_volume)) {
            eqrom::detail::require(e >= 0 && e < mesh.volume_count() && w > 0.0, "artifacts: invalid volume EQ entry");
            a->eq.volume.weights[e] = w;
        }
        for (Index q = 0; q < mesh.volume_count(); ++q) {
            a->eq.volume.columns.push_back(q);
        }
        a->eq.surface.level = EqLevel::Surface;
        a->eq.surface.delta = a->delta;
        const auto surf = read_eq_rule_csv(dir / F::eq_surface);
        a->eq.surface.weights.resize(static_cast<Index>(surf.size()));
        for (std::size_t i = 0; i < surf.size(); ++i) {
            eqrom::detail::require(surf[i].first >= 0 && surf[i].first < mesh.surface_count() && surf[i].second > 0.0,
                            "artifacts: invalid surface EQ entry");
            a->eq.surface.columns.push_back(surf[i].first);
            a->eq.surface.weights[static_cast<Index>(i)] = surf[i].second;
        }
        const json eqm = read_json(dir / F::eq_meta);
        a->eq.volume.achieved_residual = eqm.at("volume").at("achieved_residual").get<double>();
        a->eq.surface.achieved_residual = eqm.at("surface").at("achieved_residual").get<double>();
        a->eq.reduced_mesh =
            extract_reduced_mesh(mesh, a->eq.volume.weights, a->eq.surface.columns, a->eq.surface.weights);

        detail::BinaryReader ir(dir / F::indicator, "EQROMIND");
        eqrom::detail::require(ir.header().size() == 2, "artifacts: malformed indicator header");
        const auto rows = static_cast<Index>(ir.header()[0]), cols = static_cast<Index>(ir.header()[1]);
        a->indicator.riesz = ir.matrix(rows, cols);
        a->indicator.gramian = ir.matrix(cols, cols);
        a->indicator.factor = ir.matrix(cols, cols);
        ir.expect_end();
        a->validate();
        out.artifacts = std::move(a);
    } catch (const json::exception& e) {
        throw InputError("malformed artifacts directory " + dir.string() + ": " + e.what());
    }
    return out;
}

} // namespace eqrom::io
