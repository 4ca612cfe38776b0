#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fb_analysis.hpp"
#include "solver.hpp"
#include "tab.hpp"

namespace fbtrans {

/// u_r(x) = u(r x) / r on the grid of spacing h/r and radius R/r carrying the
/// same lattice indices, so every value is read at an existing node.
template <int N>
GridSolution<N> rescale_solution(const GridSolution<N>& u, double r)
{
    require(r > 0.0 && r <= 1.0, "rescale factor must lie in (0, 1]");
    const auto& g = *u.grid;
    require(g.kind() == GridKind::half_ball, "rescaling is defined on half-ball grids");
    auto target = build_half_ball_grid<N>(g.radius() / r, g.spacing() / r);
    require(target->size() == g.size(), "rescaled lattice does not match the source lattice");
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const long j = g.find(target->index(i));
        require(j >= 0, "rescaled lattice does not match the source lattice");
        v[i] = u.values[static_cast<std::size_t>(j)] / r;
    }
    return GridSolution<N>(std::move(target), std::move(v));
}

/// u_r on a prescribed half-ball grid of radius `radius` and spacing
/// `spacing`: r * spacing / h must be a positive integer and r * radius <= R.
template <int N>
GridSolution<N> rescale_solution(const GridSolution<N>& u, double r, double radius, double spacing)
{
    require(r > 0.0 && r <= 1.0, "rescale factor must lie in (0, 1]");
    const auto& g = *u.grid;
    const double ratio = r * spacing / g.spacing();
    const long m = std::lround(ratio);
    require(m >= 1 && std::abs(ratio - static_cast<double>(m)) <= 1e-9 * std::max(1.0, ratio),
            "rescale factor does not map the target lattice into the source lattice");
    require(r * radius <= g.radius() * (1.0 + 1e-12), "rescaled domain exceeds the source domain");
    auto target = build_half_ball_grid<N>(radius, spacing);
    std::vector<double> v(target->size());
    for (std::size_t i = 0; i < target->size(); ++i) {
        LatticeIndex<N> q = target->index(i);
        for (int d = 0; d < N; ++d) q[d] *= static_cast<int>(m);
        const long j = g.find(q);
        if (j < 0) throw MissingNeighborError("rescaled node falls outside the source grid");
        v[i] = u.values[static_cast<std::size_t>(j)] / r;
    }
    return GridSolution<N>(std::move(target), std::move(v));
}

struct ProfileFit {
    double c = 0.0;
    double residual = 0.0;
};

/// Fits c x_N^+ to T_{sqrt a+, sqrt a-}(u) in the sup norm over B_{radius}^+
/// (R/2 by default) by golden-section search on c >= 0.
template <int N>
ProfileFit fit_global_profile(const GridSolution<N>& u, double a_plus, double a_minus, double radius = -1.0)
{
    const auto& g = *u.grid;
    const double rad = radius > 0.0 ? radius : 0.5 * g.radius();
    const auto w = apply_tab(u.view(), std::sqrt(a_plus), std::sqrt(a_minus));
    std::vector<std::size_t> ball;
    double wmax = 0.0, xmax = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.node(i).norm() > rad * (1.0 + 1e-12)) continue;
        ball.push_back(i);
        wmax = std::max(wmax, std::abs(w[i]));
        xmax = std::max(xmax, g.node(i)[N - 1]);
    }
    auto misfit = [&](double c) {
        double s = 0.0;
        for (std::size_t i : ball) s = std::max(s, std::abs(w[i] - c * std::max(0.0, g.node(i)[N - 1])));
        return s;
    };
    if (ball.empty() || xmax == 0.0) return {0.0, misfit(0.0)};
    // beyond this slope the misfit at the highest node exceeds misfit(0)
    double lo = 0.0, hi = 4.0 * wmax / xmax + 1e-300;
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = misfit(x1), f2 = misfit(x2);
    for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = misfit(x1);
        }
        else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = misfit(x2);
        }
    }
    const double c = 0.5 * (lo + hi);
    return {c, misfit(c)};
}

template <int N>
struct BlowupRecord {
    double r = 1.0;
    GridSolution<N> solution;
    ProblemSpec<N> spec_r;
    bool converged = false;
    std::string error;
    double energy = 0.0;
    double dirichlet_energy_on_unit_ball = 0.0;
    double growth_constant = 0.0;
    double holder_half = 0.0;
    /// Sup over B_1^+ of the difference to the previous (larger r) level.
    std::optional<double> cauchy_difference;
    /// Sup over B_1^+ of the difference to the finest level.
    double sup_norm_distance_to_limit = 0.0;
    /// Volume of the symmetric difference of {u > 0} with the previous level on B_1^+.
    std::optional<double> positivity_symmetric_difference;
    ProfileFit profile_fit;
    double positive_density_unit = 0.0;
};

struct SweepOptions {
    double grid_radius = 2.0;
    double grid_spacing = 1.0 / 64;
    int workers = 0;  // 0: hardware concurrency
};

namespace detail {

inline bool is_dyadic(double r)
{
    int e = 0;
    const double m = std::frexp(r, &e);
    return m == 0.5;
}

template <int N>
double positivity_symmetric_difference(const CellComplex<N>& cx, std::span<const double> a,
                                       std::span<const double> b, double rho)
{
    double v = 0.0;
    for (const auto& cell : cx.cells())
        if ((cx.cell_value(cell, a) > 0.0) != (cx.cell_value(cell, b) > 0.0)) v += cx.volume(cell, rho);
    return v;
}

template <int N>
double sup_difference(const Grid<N>& g, std::span<const double> a, std::span<const double> b, double rho)
{
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g.node(i).norm() <= rho * (1.0 + 1e-12)) s = std::max(s, std::abs(a[i] - b[i]));
    return s;
}

}  // namespace detail

/// Re-solves rescale_spec(spec, r) on one fixed half-ball grid for every r and
/// compares the levels on B_1^+. A failing level keeps its error message and
/// the sweep continues.
template <int N>
std::vector<BlowupRecord<N>> blowup_sweep(const ProblemSpec<N>& spec, const std::vector<double>& radii,
                                          const SolveOptions& opts, const SweepOptions& sweep = {})
{
    require(!radii.empty(), "sweep needs at least one radius");
    for (std::size_t k = 0; k < radii.size(); ++k) {
        require(radii[k] > 0.0 && radii[k] <= 1.0 && detail::is_dyadic(radii[k]), "sweep radii must be dyadic in (0, 1]");
        if (k > 0) require(radii[k] < radii[k - 1], "sweep radii must be decreasing");
    }
    require(sweep.grid_radius >= 1.0, "sweep grid must contain the unit half ball");
    auto grid = build_half_ball_grid<N>(sweep.grid_radius, sweep.grid_spacing);

    std::vector<BlowupRecord<N>> recs(radii.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t k = next++; k < radii.size(); k = next++) {
            auto& rec = recs[k];
            rec.r = radii[k];
            rec.spec_r = rescale_spec(spec, radii[k]);
            try {
                auto res = minimize(rec.spec_r, grid, opts);
                rec.converged = res.converged;
                rec.energy = res.energy;
                rec.solution = std::move(res.solution);
            }
            catch (const std::exception& e) {
                rec.error = e.what();
            }
        }
    };
    int workers = sweep.workers > 0 ? sweep.workers : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, static_cast<int>(radii.size()));
    if (workers == 1) {
        work();
    }
    else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    const CellComplex<N> cx(grid);
    const BlowupRecord<N>* finest = nullptr;
    for (auto it = recs.rbegin(); it != recs.rend() && !finest; ++it)
        if (it->error.empty()) finest = &*it;
    const BlowupRecord<N>* prev = nullptr;
    for (auto& rec : recs) {
        if (!rec.error.empty()) {
            prev = nullptr;
            continue;
        }
        const auto v = rec.solution.view();
        rec.dirichlet_energy_on_unit_ball = dirichlet_seminorm(cx, v, 1.0);
        rec.growth_constant = linear_growth_constant(rec.solution);
        rec.holder_half = holder_seminorm(rec.solution, 0.5);
        rec.positive_density_unit = positivity_density(rec.solution, 1.0);
        const Point<N> o = Point<N>::Zero();
        rec.profile_fit = fit_global_profile(rec.solution, detail::mean_isotropic<N>(rec.spec_r.a_plus(o)),
                                             detail::mean_isotropic<N>(rec.spec_r.a_minus(o)), 0.5);
        rec.sup_norm_distance_to_limit = detail::sup_difference(*grid, v, finest->solution.view(), 1.0);
        if (prev) {
            rec.cauchy_difference = detail::sup_difference(*grid, v, prev->solution.view(), 1.0);
            rec.positivity_symmetric_difference =
                detail::positivity_symmetric_difference(cx, v, prev->solution.view(), 1.0);
        }
        prev = &rec;
    }
    return recs;
}

template <int N>
nlohmann::json to_json(const BlowupRecord<N>& r)
{
    nlohmann::json j = {{"r", r.r},
                        {"converged", r.converged},
                        {"energy", r.energy},
                        {"dirichlet_energy_on_unit_ball", r.dirichlet_energy_on_unit_ball},
                        {"growth_constant", r.growth_constant},
                        {"holder_half", r.holder_half},
                        {"sup_norm_distance_to_limit", r.sup_norm_distance_to_limit},
                        {"positive_density_unit", r.positive_density_unit},
                        {"profile_fit", {{"c", r.profile_fit.c}, {"residual", r.profile_fit.residual}}}};
    j["cauchy_difference"] = r.cauchy_difference ? nlohmann::json(*r.cauchy_difference) : nlohmann::json(nullptr);
    j["positivity_symmetric_difference"] = r.positivity_symmetric_difference
                                               ? nlohmann::json(*r.positivity_symmetric_difference)
                                               : nlohmann::json(nullptr);
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

}  // namespace fbtrans
