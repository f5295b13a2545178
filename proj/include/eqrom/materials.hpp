#pragma once

#include "common.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace eqrom {

/// Von Mises elastoplasticity with power-law isotropic hardening
/// R(p) = σ_y + σ_y (E p / (a σ_y))^(1/n).
///
/// The defaults are configuration values, not measured material data.
struct ElastoplasticParams {
    double E = 200000.0;     // MPa
    double nu = 0.3;
    double sigma_y = 200.0;  // MPa
    double n_pui = 3.0;
    double a_pui = 10.0;

    void validate() const
    {
        if (!(E > 0.0) || !(nu > 0.0 && nu < 0.5) || !(sigma_y > 0.0) || !(n_pui >= 1.0) || !(a_pui > 0.0)) {
            throw InputError("ElastoplasticParams: require E > 0, 0 < nu < 0.5, sigma_y > 0, n_pui >= 1, a_pui > 0");
        }
    }

    [[nodiscard]] double shear_modulus() const { return E / (2.0 * (1.0 + nu)); }
    [[nodiscard]] double bulk_modulus() const { return E / (3.0 * (1.0 - 2.0 * nu)); }
};

/// Local material state at one quadrature point. eps_p uses engineering shears.
struct PointState {
    Voigt stress = Voigt::Zero();
    Voigt eps_p = Voigt::Zero();
    double p = 0.0;
};

enum class TangentMode { Consistent, Elastic };

struct ReturnMapOptions {
    double tol = 1e-10; // on the consistency residual, relative to sigma_y
    int max_iters = 100;
};

namespace voigt {

inline double trace(const Voigt& v) { return v[0] + v[1] + v[2]; }

/// Deviatoric part of a stress-like (tensor-component) Voigt vector.
inline Voigt deviator(const Voigt& s)
{
    Voigt d = s;
    const double m = trace(s) / 3.0;
    d[0] -= m;
    d[1] -= m;
    d[2] -= m;
    return d;
}

/// s : s for tensor-component Voigt storage.
inline double contract(const Voigt& a, const Voigt& b)
{
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + 2.0 * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5]);
}

inline double von_mises(const Voigt& stress)
{
    const Voigt s = deviator(stress);
    return std::sqrt(1.5 * contract(s, s));
}

} // namespace voigt

/// Hardening curve value and slope. The slope at p = 0 is +inf when n_pui > 1.
inline std::pair<double, double> hardening(double p, const ElastoplasticParams& m)
{
    if (p < 0.0) {
        throw InputError("hardening: cumulative plastic strain must be non-negative");
    }
    const double scale = m.E / (m.a_pui * m.sigma_y);
    const double inv_n = 1.0 / m.n_pui;
    if (p == 0.0) {
        const double slope = m.n_pui == 1.0 ? m.sigma_y * scale : std::numeric_limits<double>::infinity();
        return {m.sigma_y, slope};
    }
    const double term = std::pow(scale * p, inv_n);
    return {m.sigma_y + m.sigma_y * term, m.sigma_y * inv_n * term / p};
}

/// Isotropic elasticity matrix mapping engineering strain to stress.
inline Voigt6x6 elastic_matrix(const ElastoplasticParams& m)
{
    const double g = m.shear_modulus();
    const double k = m.bulk_modulus();
    Voigt6x6 d = Voigt6x6::Zero();
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            d(i, j) = k - 2.0 * g / 3.0;
        }
        d(i, i) = k + 4.0 * g / 3.0;
        d(3 + i, 3 + i) = g;
    }
    return d;
}

/// σ = K tr(ε − ε^p) 1 + 2G dev(ε − ε^p).
inline Voigt elastic_stress(const Voigt& strain, const Voigt& eps_p, const ElastoplasticParams& m)
{
    return elastic_matrix(m) * (strain - eps_p);
}

struct ReturnMapResult {
    PointState state;
    double delta_p = 0.0;
    bool plastic = false;
    int iterations = 0;
};

namespace detail {

struct Trial {
    Voigt stress;
    Voigt dev;
    double eq;
};

inline Trial elastic_trial(const PointState& prev, const Voigt& delta_strain, const ElastoplasticParams& m)
{
    Trial t;
    t.stress = prev.stress + elastic_matrix(m) * delta_strain;
    t.dev = voigt::deviator(t.stress);
    t.eq = std::sqrt(1.5 * voigt::contract(t.dev, t.dev));
    return t;
}

} // namespace detail

/// Root Δp of σ_eq^trial − 3G Δp − R(p_n + Δp) = 0, secant with a bisection
/// safeguard on the bracket [0, σ_eq^trial / 3G].
inline std::pair<double, int> solve_plastic_increment(double trial_eq, double p_prev, const ElastoplasticParams& m,
                                                      const ReturnMapOptions& opt)
{
    const double g3 = 3.0 * m.shear_modulus();
    auto residual = [&](double dp) { return trial_eq - g3 * dp - hardening(p_prev + dp, m).first; };
    const double tol = opt.tol * m.sigma_y;

    double lo = 0.0;
    double hi = trial_eq / g3;
    double f_lo = residual(lo);
    double x0 = lo;
    double f0 = f_lo;
    // Linear-hardening-free estimate; bounded by hi.
    double x1 = std::min(hi, f_lo / g3);
    double f1 = residual(x1);
    for (int it = 1; it <= opt.max_iters; ++it) {
        if (std::abs(f1) <= tol) {
            return {x1, it};
        }
        if (f1 > 0.0) {
            lo = x1;
        } else {
            hi = x1;
        }
        double x2 = f1 != f0 ? x1 - f1 * (x1 - x0) / (f1 - f0) : 0.5 * (lo + hi);
        if (!(x2 > lo && x2 < hi)) {
            x2 = 0.5 * (lo + hi);
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = residual(x1);
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi && std::abs(f1) <= 1e3 * tol) {
            return {x1, it};
        }
    }
    throw SolverError("return_map: consistency equation did not converge, residual " + std::to_string(f1));
}

/// Radial return for one strain increment (rate independent, no Δt enters).
inline ReturnMapResult return_map(const PointState& prev, const Voigt& delta_strain, const ElastoplasticParams& m,
                                  const ReturnMapOptions& opt = {})
{
    const auto trial = detail::elastic_trial(prev, delta_strain, m);
    ReturnMapResult r;
    r.state = prev;
    const double yield = hardening(prev.p, m).first;
    if (trial.eq - yield <= 0.0) {
        r.state.stress = trial.stress;
        return r;
    }
    const auto [dp, iters] = solve_plastic_increment(trial.eq, prev.p, m, opt);
    const double g = m.shear_modulus();
    const double factor = 1.0 - 3.0 * g * dp / trial.eq;
    const double mean = voigt::trace(trial.stress) / 3.0;
    Voigt stress = factor * trial.dev;
    stress[0] += mean;
    stress[1] += mean;
    stress[2] += mean;
    Voigt deps_p = (1.5 * dp / trial.eq) * trial.dev;
    deps_p.tail<3>() *= 2.0; // engineering shears
    r.state.stress = stress;
    r.state.eps_p = prev.eps_p + deps_p;
    r.state.p = prev.p + dp;
    r.delta_p = dp;
    r.plastic = true;
    r.iterations = iters;
    return r;
}

/// Algorithmic tangent dσ_{n+1}/dε_{n+1} (engineering strain columns) of return_map.
inline Voigt6x6 consistent_tangent(const PointState& prev, const Voigt& delta_strain, const PointState& next,
                                   const ElastoplasticParams& m)
{
    const Voigt6x6 d_el = elastic_matrix(m);
    const double dp = next.p - prev.p;
    if (!(dp > 0.0)) {
        return d_el;
    }
    const auto trial = detail::elastic_trial(prev, delta_strain, m);
    const double g = m.shear_modulus();
    const double k = m.bulk_modulus();
    const double h = hardening(next.p, m).second;
    const double theta = 1.0 - 3.0 * g * dp / trial.eq;
    const double theta_bar = (std::isinf(h) ? 0.0 : 1.0 / (1.0 + h / (3.0 * g))) - (1.0 - theta);
    const double s_norm = std::sqrt(voigt::contract(trial.dev, trial.dev));
    const Voigt n = trial.dev / s_norm;

    Voigt6x6 d = Voigt6x6::Zero();
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            d(i, j) = k - 2.0 * g * theta / 3.0;
        }
        d(i, i) = k + 4.0 * g * theta / 3.0;
        d(3 + i, 3 + i) = g * theta;
    }
    d -= 2.0 * g * theta_bar * (n * n.transpose());
    return d;
}

} // namespace eqrom
