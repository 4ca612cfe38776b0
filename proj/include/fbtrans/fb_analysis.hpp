#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "energy.hpp"

namespace fbtrans {

/// Interpolated zero crossings of u on grid edges separating {u > 0} from
/// {u <= 0}, restricted to x_N > 0 and |x| < R.
template <int N>
struct FreeBoundarySet {
    std::vector<Point<N>> points;
    /// Some point lies within 2h of the origin.
    bool origin_contact = false;
    double radius = 0.0;
    double spacing = 0.0;

    bool empty() const { return points.empty(); }
};

template <int N>
FreeBoundarySet<N> extract_free_boundary(const GridSolution<N>& u)
{
    const auto& g = *u.grid;
    detail::check_finite(u.view());
    const double h = g.spacing();
    const double R = g.radius();
    FreeBoundarySet<N> F;
    F.radius = R;
    F.spacing = h;

    // buckets of size h/4 for deduplication
    const double bucket = 0.25 * h;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> seen;
    auto key_of = [&](const LatticeIndex<N>& k) {
        std::uint64_t key = 0;
        for (int d = 0; d < N; ++d) key = key * 0x100000001b3ULL + static_cast<std::uint64_t>(k[d] + (1 << 20));
        return key;
    };
    auto insert = [&](const Point<N>& p) {
        LatticeIndex<N> b;
        for (int d = 0; d < N; ++d) b[d] = static_cast<int>(std::floor(p[d] / bucket));
        LatticeIndex<N> off;
        off.fill(-1);
        while (true) {
            LatticeIndex<N> q = b;
            for (int d = 0; d < N; ++d) q[d] += off[d];
            auto it = seen.find(key_of(q));
            if (it != seen.end())
                for (std::size_t id : it->second)
                    if ((F.points[id] - p).norm() < bucket) return;
            int d = 0;
            for (; d < N; ++d) {
                if (++off[d] <= 1) break;
                off[d] = -1;
            }
            if (d == N) break;
        }
        seen[key_of(b)].push_back(F.points.size());
        F.points.push_back(p);
    };

    for (std::size_t i = 0; i < g.size(); ++i) {
        for (int d = 0; d < N; ++d) {
            LatticeIndex<N> q = g.index(i);
            ++q[d];
            const long j = g.find(q);
            if (j < 0) continue;
            const double ua = u.values[i], ub = u.values[static_cast<std::size_t>(j)];
            if ((ua > 0.0) == (ub > 0.0)) continue;
            // walk from the nonpositive end towards the positive one
            const bool a_pos = ua > 0.0;
            const Point<N>& xp = a_pos ? g.node(i) : g.node(static_cast<std::size_t>(j));
            const Point<N>& xn = a_pos ? g.node(static_cast<std::size_t>(j)) : g.node(i);
            const double vp = a_pos ? ua : ub;
            const double vn = a_pos ? ub : ua;
            const Point<N> p = xn + (vn / (vn - vp)) * (xp - xn);
            if (!(p[N - 1] > 0.0) || !(p.norm() < R)) continue;
            insert(p);
        }
    }
    for (const auto& p : F.points)
        if (p.norm() <= 2.0 * h) F.origin_contact = true;
    return F;
}

/// Cell-counted volume fraction of {u > 0} in B_rho^+.
template <int N>
double positivity_density(const GridSolution<N>& u, double rho)
{
    const auto& g = *u.grid;
    require(rho >= 4.0 * g.spacing(), "density radius must be at least 4h");
    require(rho <= g.radius() * (1.0 + 1e-12), "density radius exceeds the domain");
    CellComplex<N> cx(u.grid);
    const double total = domain_volume(cx, rho);
    return total > 0.0 ? positive_volume(cx, u.view(), rho) / total : 0.0;
}

/// Multilinear interpolation of nodal values at x. Throws MissingNeighborError
/// when a corner of the enclosing cell is off the grid.
template <int N>
double interpolate(const GridSolution<N>& u, const Point<N>& x)
{
    const auto& g = *u.grid;
    const double h = g.spacing();
    LatticeIndex<N> base;
    Point<N> t;
    for (int d = 0; d < N; ++d) {
        const double s = x[d] / h;
        base[d] = static_cast<int>(std::floor(s));
        t[d] = s - base[d];
    }
    double v = 0.0;
    for (int k = 0; k < (1 << N); ++k) {
        LatticeIndex<N> q = base;
        double w = 1.0;
        for (int d = 0; d < N; ++d) {
            if (k & (1 << d)) {
                ++q[d];
                w *= t[d];
            }
            else {
                w *= 1.0 - t[d];
            }
        }
        if (w == 0.0) continue;
        const long n = g.find(q);
        if (n < 0) throw MissingNeighborError("interpolation stencil leaves the grid");
        v += w * u.values[static_cast<std::size_t>(n)];
    }
    return v;
}

namespace detail {

template <int N>
void check_probe_ball(const Grid<N>& g, const Point<N>& x0, double r)
{
    require(r >= 4.0 * g.spacing(), "probe radius must be at least 4h");
    require(x0[N - 1] - r > 0.0 && x0.norm() + r < g.radius() - g.spacing(),
            "probe ball must lie compactly inside the half ball");
}

}  // namespace detail

/// (1/r) times the mean of u^+ over the sphere of radius r around x0.
template <int N>
double sphere_average_plus(const GridSolution<N>& u, const Point<N>& x0, double r)
{
    const auto& g = *u.grid;
    detail::check_probe_ball(g, x0, r);
    const double h = g.spacing();
    constexpr double pi = std::numbers::pi;
    double sum = 0.0, weight = 0.0;
    if constexpr (N == 2) {
        const int m = std::max(64, static_cast<int>(std::ceil(16.0 * pi * r / h)));
        for (int k = 0; k < m; ++k) {
            const double th = 2.0 * pi * k / m;
            const Point<N> x = x0 + r * Point<N>(std::cos(th), std::sin(th));
            sum += std::max(0.0, interpolate(u, x));
            weight += 1.0;
        }
    }
    else {
        const int nt = std::max(16, static_cast<int>(std::ceil(4.0 * pi * r / h)));
        const int np = 2 * nt;
        for (int i = 0; i < nt; ++i) {
            const double th = pi * (i + 0.5) / nt;
            const double w = std::sin(th);
            for (int j = 0; j < np; ++j) {
                const double ph = 2.0 * pi * j / np;
                const Point<N> x =
                    x0 + r * Point<N>(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
                sum += w * std::max(0.0, interpolate(u, x));
                weight += w;
            }
        }
    }
    return sum / weight / r;
}

enum class NondegeneracyOutcome { vanishes_as_predicted, persists, above_threshold };

inline const char* to_string(NondegeneracyOutcome o)
{
    switch (o) {
    case NondegeneracyOutcome::vanishes_as_predicted: return "VanishesAsPredicted";
    case NondegeneracyOutcome::persists: return "Persists";
    case NondegeneracyOutcome::above_threshold: return "AboveThreshold";
    }
    return "?";
}

/// Below the threshold the positive part must vanish on B_{kappa r}(x0):
/// sup u^+ there <= vanish_tol.
template <int N>
NondegeneracyOutcome nondegeneracy_probe(const GridSolution<N>& u, const Point<N>& x0, double r, double kappa,
                                         double c_threshold, double vanish_tol)
{
    require(kappa > 0.0 && kappa < 1.0, "kappa must lie in (0, 1)");
    const double avg = sphere_average_plus(u, x0, r);
    if (avg >= c_threshold) return NondegeneracyOutcome::above_threshold;
    const auto& g = *u.grid;
    const double rad = kappa * r;
    double sup = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if ((g.node(i) - x0).norm() <= rad) sup = std::max(sup, u.values[i]);
    return sup <= vanish_tol ? NondegeneracyOutcome::vanishes_as_predicted : NondegeneracyOutcome::persists;
}

struct ProbeBall {
    std::vector<double> center;
    double radius = 0.0;
};

/// Random balls B_r(x0) with 4h <= r <= R/4, compactly inside the half ball.
template <int N>
std::vector<ProbeBall> random_probe_balls(const Grid<N>& g, int count, std::uint64_t seed)
{
    const double h = g.spacing(), R = g.radius();
    require(R / 4.0 >= 4.0 * h, "grid too coarse for probe balls");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<ProbeBall> out;
    while (static_cast<int>(out.size()) < count) {
        const double r = 4.0 * h + unit(rng) * (R / 4.0 - 4.0 * h);
        Point<N> x;
        for (int d = 0; d < N - 1; ++d) x[d] = (2.0 * unit(rng) - 1.0) * R;
        x[N - 1] = unit(rng) * R;
        if (x[N - 1] - r > 0.0 && x.norm() + r < R - 2.0 * h)
            out.push_back({std::vector<double>(x.data(), x.data() + N), r});
    }
    return out;
}

/// sigma(rho) = max x_N / |x| over F within B_rho, 0 when no point qualifies.
template <int N>
std::vector<double> contact_modulus(const FreeBoundarySet<N>& F, std::span<const double> radii)
{
    std::vector<double> out;
    out.reserve(radii.size());
    for (double rho : radii) {
        double s = 0.0;
        for (const auto& p : F.points) {
            const double n = p.norm();
            if (n <= rho && n > 0.0) s = std::max(s, p[N - 1] / n);
        }
        out.push_back(s);
    }
    return out;
}

/// Largest dyadic rho = R / 2^k (k >= 1, rho >= 8h) such that no F point with
/// |x| <= rho lies in the cone x_N >= eps |x'|; 0 when none qualifies and R/2
/// for an empty F.
template <int N>
double cone_exclusion_radius(const FreeBoundarySet<N>& F, double eps)
{
    require(eps > 0.0, "cone aperture must be positive");
    const double R = F.radius;
    if (F.empty()) return 0.5 * R;
    // smallest |x| of an F point inside the cone
    double nearest = std::numeric_limits<double>::infinity();
    const Cone cone{eps};
    for (const auto& p : F.points)
        if (in_cone<N>(p, cone)) nearest = std::min(nearest, p.norm());
    const double floor = F.spacing > 0.0 ? 8.0 * F.spacing : 0.0;
    for (double rho = 0.5 * R; rho >= floor && rho > 0.0; rho *= 0.5) {
        if (rho < nearest) return rho;
        if (floor == 0.0 && rho < 1e-12 * R) break;
    }
    return 0.0;
}

/// max |u(x) - u(y)| / |x - y|^beta over axis and diagonal node pairs at
/// dyadic lattice offsets.
template <int N>
double holder_seminorm(const GridSolution<N>& u, double beta)
{
    require(beta > 0.0 && beta <= 1.0, "Hoelder exponent must lie in (0, 1]");
    const auto& g = *u.grid;
    detail::check_finite(u.view());
    // directions with first nonzero component positive
    std::vector<LatticeIndex<N>> dirs;
    LatticeIndex<N> o;
    o.fill(-1);
    while (true) {
        int first = 0;
        for (int d = 0; d < N; ++d)
            if (o[d] != 0) {
                first = o[d];
                break;
            }
        if (first > 0) dirs.push_back(o);
        int d = 0;
        for (; d < N; ++d) {
            if (++o[d] <= 1) break;
            o[d] = -1;
        }
        if (d == N) break;
    }
    int span = 0;
    for (int d = 0; d < N; ++d) span = std::max(span, g.upper()[d] - g.lower()[d]);
    double best = 0.0;
    for (int step = 1; step <= span; step *= 2) {
        for (const auto& dir : dirs) {
            double len2 = 0.0;
            for (int d = 0; d < N; ++d) len2 += static_cast<double>(dir[d] * dir[d]);
            const double dist = std::sqrt(len2) * step * g.spacing();
            const double scale = std::pow(dist, -beta);
            for (std::size_t i = 0; i < g.size(); ++i) {
                LatticeIndex<N> q = g.index(i);
                for (int d = 0; d < N; ++d) q[d] += step * dir[d];
                const long j = g.find(q);
                if (j < 0) continue;
                best = std::max(best, std::abs(u.values[i] - u.values[static_cast<std::size_t>(j)]) * scale);
            }
        }
    }
    return best;
}

struct AnalysisOptions {
    std::vector<double> radii;     // sigma and density radii; empty: dyadic R/2 ... >= 8h
    std::vector<double> eps_list{0.25, 0.5, 1.0};
    double kappa = 0.5;
    double c_threshold = 0.5;
    double vanish_tol = 1e-6;
    int probes = 20;
    std::uint64_t seed = 0;
    std::vector<double> holder_exponents{0.5};
};

struct ProbeRecord {
    ProbeBall ball;
    double average = 0.0;
    NondegeneracyOutcome outcome = NondegeneracyOutcome::above_threshold;
};

template <int N>
struct AnalysisReport {
    std::vector<double> radii;
    std::vector<double> density;
    std::vector<double> sigma;
    std::vector<std::pair<double, double>> cone_radii;  // (eps, radius)
    std::vector<ProbeRecord> probes;
    std::vector<std::pair<double, double>> holder;  // (beta, seminorm)
    double growth_constant = 0.0;
    std::size_t free_boundary_points = 0;
    bool origin_contact = false;
};

/// Dyadic radii R/2, R/4, ... down to 8h, in increasing order.
template <int N>
std::vector<double> default_analysis_radii(const Grid<N>& g)
{
    std::vector<double> r;
    for (double rho = 0.5 * g.radius(); rho >= 8.0 * g.spacing() * (1.0 - 1e-12); rho *= 0.5) r.push_back(rho);
    std::reverse(r.begin(), r.end());
    return r;
}

/// max |u(x)| / |x| over nodes with 2h <= |x| <= radius.
template <int N>
double linear_growth_constant(const GridSolution<N>& u,
                              double radius = std::numeric_limits<double>::infinity())
{
    const auto& g = *u.grid;
    double best = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double n = g.node(i).norm();
        if (n < 2.0 * g.spacing() * (1.0 - 1e-12) || n > radius) continue;
        best = std::max(best, std::abs(u.values[i]) / n);
    }
    return best;
}

template <int N>
AnalysisReport<N> analyze(const GridSolution<N>& u, const AnalysisOptions& opts)
{
    const auto& g = *u.grid;
    AnalysisReport<N> rep;
    rep.radii = opts.radii.empty() ? default_analysis_radii(g) : opts.radii;
    const auto F = extract_free_boundary(u);
    rep.free_boundary_points = F.points.size();
    rep.origin_contact = F.origin_contact;
    for (double rho : rep.radii) rep.density.push_back(positivity_density(u, rho));
    rep.sigma = contact_modulus(F, rep.radii);
    for (double eps : opts.eps_list) rep.cone_radii.emplace_back(eps, cone_exclusion_radius(F, eps));
    if (opts.probes > 0) {
        for (const auto& ball : random_probe_balls(g, opts.probes, opts.seed)) {
            Point<N> x0;
            for (int d = 0; d < N; ++d) x0[d] = ball.center[static_cast<std::size_t>(d)];
            ProbeRecord pr;
            pr.ball = ball;
            pr.average = sphere_average_plus(u, x0, ball.radius);
            pr.outcome = nondegeneracy_probe(u, x0, ball.radius, opts.kappa, opts.c_threshold, opts.vanish_tol);
            rep.probes.push_back(pr);
        }
    }
    for (double beta : opts.holder_exponents) rep.holder.emplace_back(beta, holder_seminorm(u, beta));
    rep.growth_constant = linear_growth_constant(u);
    return rep;
}

template <int N>
nlohmann::json to_json(const AnalysisReport<N>& r)
{
    nlohmann::json cone = nlohmann::json::array(), probes = nlohmann::json::array(),
                   holder = nlohmann::json::array();
    for (const auto& [eps, rad] : r.cone_radii) cone.push_back({{"eps", eps}, {"radius", rad}});
    for (const auto& p : r.probes)
        probes.push_back({{"center", p.ball.center},
                          {"radius", p.ball.radius},
                          {"average", p.average},
                          {"outcome", to_string(p.outcome)}});
    for (const auto& [beta, v] : r.holder) holder.push_back({{"beta", beta}, {"seminorm", v}});
    return {{"radii", r.radii},
            {"density", r.density},
            {"sigma", r.sigma},
            {"cone_radii", cone},
            {"nondegeneracy", probes},
            {"holder", holder},
            {"growth_constant", r.growth_constant},
            {"free_boundary_points", r.free_boundary_points},
            {"origin_contact", r.origin_contact}};
}

}  // namespace fbtrans
