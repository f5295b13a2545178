#pragma once

#include "rom.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace eqrom {

/// Point of the parameter box P = P_ν × P_a.
struct Parameter {
    double nu = 0.255;
    double a_pui = 500.05;

    [[nodiscard]] ElastoplasticParams apply(ElastoplasticParams base) const
    {
        base.nu = nu;
        base.a_pui = a_pui;
        return base;
    }

    friend bool operator==(const Parameter&, const Parameter&) = default;
};

struct ParameterBox {
    double nu_min = 0.21;
    double nu_max = 0.3;
    double a_min = 0.1;
    double a_max = 1000.0;

    [[nodiscard]] Parameter centroid() const { return {0.5 * (nu_min + nu_max), 0.5 * (a_min + a_max)}; }
};

inline std::vector<double> linspace(double lo, double hi, int n)
{
    detail::require(n >= 1, "linspace: need at least one point");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        v[static_cast<std::size_t>(i)] = n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n - 1);
    }
    return v;
}

/// Cartesian grid, ν varying fastest. A count of 1 on an axis pins it to `fixed`.
inline std::vector<Parameter> parameter_grid(const ParameterBox& box, int n_nu, int n_a, const Parameter& fixed)
{
    const auto nus = n_nu == 1 ? std::vector<double>{fixed.nu} : linspace(box.nu_min, box.nu_max, n_nu);
    const auto as = n_a == 1 ? std::vector<double>{fixed.a_pui} : linspace(box.a_min, box.a_max, n_a);
    std::vector<Parameter> g;
    for (double a : as) {
        for (double nu : nus) {
            g.push_back({nu, a});
        }
    }
    return g;
}

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers; results must be written by index.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn)
{
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                fn(i);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
}

struct SweepEntry {
    Index index = 0; // position in the training set
    Parameter mu;
    double indicator = std::numeric_limits<double>::quiet_NaN();
    double online_time = 0.0;
    bool ok = false;
    std::string error;
};

/// One online solve per training parameter. The returned table is sorted by
/// descending indicator (failed solves last, then by training index).
inline std::vector<SweepEntry> indicator_sweep(const std::shared_ptr<const RomArtifacts>& artifacts,
                                               const std::vector<Parameter>& train, const ElastoplasticParams& base,
                                               const TimeGrid& grid, const NewtonConfig& config, int threads = 1)
{
    if (!artifacts || artifacts->zu.size() == 0) {
        throw InputError("indicator_sweep: artifacts have no displacement basis");
    }
    const RomModel rom(artifacts);
    std::vector<SweepEntry> table(train.size());
    parallel_for(train.size(), threads, [&](std::size_t i) {
        SweepEntry& e = table[i];
        e.index = static_cast<Index>(i);
        e.mu = train[i];
        try {
            const auto sol = rom.solve(train[i].apply(base), grid, config);
            e.indicator = sol.indicator_avg;
            e.online_time = sol.wall_time;
            e.ok = true;
        } catch (const Error& ex) {
            e.error = ex.what();
        }
    });
    std::stable_sort(table.begin(), table.end(), [](const SweepEntry& a, const SweepEntry& b) {
        if (a.ok != b.ok) {
            return a.ok;
        }
        if (a.ok && a.indicator != b.indicator) {
            return a.indicator > b.indicator;
        }
        return a.index < b.index;
    });
    return table;
}

struct GreedyConfig {
    std::vector<Parameter> train;
    Parameter reference;          // μ̄, first sampled parameter and inner-product parameter
    ElastoplasticParams base;     // E, σ_y, n_pui
    TimeGrid grid;
    NewtonConfig newton;
    double eps_pod_u = 1e-5;
    double eps_pod_sigma = 1e-5;
    double delta = 1e-7;
    int max_iters = 5;
    double stop_tol = 1e-5;
    double stagnation_tol = 0.01;
    int threads = 1;

    void validate() const
    {
        if (train.empty()) {
            throw InputError("greedy: training set is empty");
        }
        auto in01 = [](double v) { return v > 0.0 && v < 1.0; };
        if (!in01(eps_pod_u) || !in01(eps_pod_sigma) || !(delta > 0.0) || max_iters < 1 || !(stop_tol > 0.0) ||
            !(stagnation_tol >= 0.0)) {
            throw InputError("greedy: tolerances must lie in (0, 1), delta > 0, max_iters >= 1, stop_tol > 0");
        }
        reference.apply(base).validate();
        for (const auto& p : train) {
            p.apply(base).validate();
        }
        newton.validate();
    }
};

struct GreedyIteration {
    int iteration = 0;
    Parameter sampled;
    double max_indicator = 0.0;
    Index argmax = -1; // training index of the next candidate
    Index n_u = 0;
    Index n_sigma = 0;
    Index volume_support = 0;
    Index surface_support = 0;
    double kept_volume_fraction = 0.0;
    double volume_residual = 0.0;
    double surface_residual = 0.0;
    double hf_time = 0.0;
    double offline_time = 0.0;
    double sweep_time = 0.0;
    bool resampled = false;
    std::vector<SweepEntry> table; // training order
};

struct GreedyTrace {
    std::vector<GreedyIteration> iterations;
    std::vector<Parameter> sampled;
    std::string stop_reason;
};

struct GreedyResult {
    std::shared_ptr<const RomArtifacts> artifacts;
    GreedyTrace trace;
    std::vector<Trajectory> trajectories; // per sampled parameter
};

/// POD-Greedy: HF solve at μ*, H-POD update of both bases, EQ rebuilt from
/// all sampled stress snapshots, indicator rebuilt, indicator sweep, argmax.
/// Stops on max_iters, on max indicator below stop_tol, or on relative
/// stagnation over two iterations.
///
/// An argmax that was already sampled adds no snapshot (the sampled set does
/// not change), so bases, rule and sweep stay as they are; such iterations are
/// recorded with `resampled` set and no recomputation.
inline GreedyResult pod_greedy(std::shared_ptr<const Mesh> mesh, const BoundaryConditions& bc, const Loading& load,
                               const GreedyConfig& cfg)
{
    cfg.validate();
    const HfModel model(std::move(mesh), bc, load);
    const ElastoplasticParams ref = cfg.reference.apply(cfg.base);
    auto k_bar = std::make_shared<const SparseMatrix>(assemble_elastic_stiffness(model.mesh(), ref));

    GreedyResult out;
    ReducedBasis zu{Matrix(model.mesh().dof_count(), 0), Vector(), InnerProduct::stiffness(k_bar)};
    ReducedBasis zs{Matrix(model.mesh().stress_size(), 0), Vector(), stress_inner_product(model.mesh())};
    Matrix all_stress(model.mesh().stress_size(), 0);
    Parameter mu_star = cfg.reference;
    auto& its = out.trace.iterations;

    for (int it = 1; it <= cfg.max_iters; ++it) {
        const bool fresh =
            std::find(out.trace.sampled.begin(), out.trace.sampled.end(), mu_star) == out.trace.sampled.end();
        if (!fresh) {
            GreedyIteration rec = its.back();
            rec.iteration = it;
            rec.sampled = mu_star;
            rec.resampled = true;
            rec.hf_time = rec.offline_time = rec.sweep_time = 0.0;
            its.push_back(std::move(rec));
        } else {
            GreedyIteration rec;
            rec.iteration = it;
            rec.sampled = mu_star;
            Stopwatch offline;
            auto traj = hf_time_march(model, mu_star.apply(cfg.base), cfg.grid, cfg.newton);
            rec.hf_time = traj.wall_time;
            const Matrix s = traj.stress_snapshots();
            zu = hpod_update(zu, traj.displacement_snapshots(), cfg.eps_pod_u);
            zs = hpod_update(zs, s, cfg.eps_pod_sigma);
            all_stress.conservativeResize(Eigen::NoChange, all_stress.cols() + s.cols());
            all_stress.rightCols(s.cols()) = s;
            out.trace.sampled.push_back(mu_star);
            out.trajectories.push_back(std::move(traj));

            auto art =
                std::make_shared<RomArtifacts>(build_artifacts(model, ref, zu, zs, all_stress, *k_bar, cfg.delta));
            art->eps_pod_u = cfg.eps_pod_u;
            art->eps_pod_sigma = cfg.eps_pod_sigma;
            out.artifacts = art;
            rec.offline_time = offline.seconds();
            rec.n_u = art->zu.size();
            rec.n_sigma = art->zs.size();
            rec.volume_support = art->eq.volume.support_size();
            rec.surface_support = art->eq.surface.support_size();
            rec.kept_volume_fraction = art->eq.kept_volume_fraction();
            rec.volume_residual = art->eq.volume.achieved_residual;
            rec.surface_residual = art->eq.surface.achieved_residual;

            Stopwatch sweep_clock;
            auto table = indicator_sweep(art, cfg.train, cfg.base, cfg.grid, cfg.newton, cfg.threads);
            rec.sweep_time = sweep_clock.seconds();
            if (table.empty() || !table.front().ok) {
                its.push_back(std::move(rec));
                out.trace.stop_reason = "every online solve failed";
                break;
            }
            rec.max_indicator = table.front().indicator;
            rec.argmax = table.front().index;
            std::sort(table.begin(), table.end(),
                      [](const SweepEntry& a, const SweepEntry& b) { return a.index < b.index; });
            rec.table = std::move(table);
            its.push_back(std::move(rec));
        }

        const double dmax = its.back().max_indicator;
        if (dmax < cfg.stop_tol) {
            out.trace.stop_reason = "max indicator below stop tolerance";
            break;
        }
        if (its.size() >= 3) {
            const double old = its[its.size() - 3].max_indicator;
            if (old > 0.0 && std::abs(dmax - old) / old < cfg.stagnation_tol) {
                out.trace.stop_reason = "max indicator stagnated";
                break;
            }
        }
        if (it == cfg.max_iters) {
            out.trace.stop_reason = "maximum number of iterations";
            break;
        }
        mu_star = cfg.train[static_cast<std::size_t>(its.back().argmax)];
    }
    return out;
}

} // namespace eqrom
