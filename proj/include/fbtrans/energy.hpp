#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "geometry.hpp"
#include "problem.hpp"

namespace fbtrans {

/// Nodal field on a grid. The phase of a node is strict positivity of its value.
template <int N>
struct GridSolution {
    GridPtr<N> grid;
    std::vector<double> values;

    GridSolution() = default;
    GridSolution(GridPtr<N> g, std::vector<double> v) : grid(std::move(g)), values(std::move(v))
    {
        require(grid && values.size() == grid->size(), "one value per grid node expected");
    }

    bool positive(std::size_t i) const { return values[i] > 0.0; }

    double sup_norm() const
    {
        double s = 0.0;
        for (double v : values) s = std::max(s, std::abs(v));
        return s;
    }

    std::span<const double> view() const { return values; }
};

/// Samples a closed-form field at every node.
template <int N, class F>
GridSolution<N> sample(GridPtr<N> grid, F&& f)
{
    std::vector<double> v(grid->size());
    for (std::size_t i = 0; i < grid->size(); ++i) v[i] = f(grid->node(i));
    return GridSolution<N>(std::move(grid), std::move(v));
}

/// The boundary data at every node (interior nodes included).
template <int N>
GridSolution<N> sample_boundary(GridPtr<N> grid, const ProblemSpec<N>& spec)
{
    return sample<N>(std::move(grid), [&](const Point<N>& x) { return spec.boundary(x); });
}

/// One lattice cell touching the grid. Corners are numbered by bit pattern:
/// bit d of the corner number selects the upper node along axis d.
template <int N>
struct Cell {
    static constexpr int corner_count = 1 << N;

    std::array<long, corner_count> node{};  // -1 when the corner is off the grid
    int present = 0;
    /// Bit k set when corner k and its N in-cell edge neighbours are on the grid;
    /// only such corners carry a one-sided gradient.
    unsigned valid = 0;
    int valid_count = 0;
    Point<N> center;
};

/// All lattice cells touching at least one grid node, with the quadrature used
/// for the functional: midpoint rule, coefficients at the cell centre, volume
/// fraction by corner counting, phase from the mean of the present corners and
/// the gradient term averaged over the one-sided corner gradients.
template <int N>
class CellComplex {
public:
    static constexpr int corner_count = Cell<N>::corner_count;

    explicit CellComplex(GridPtr<N> grid) : grid_(std::move(grid))
    {
        const auto& g = *grid_;
        LatticeIndex<N> lo = g.lower(), hi = g.upper();
        if (g.kind() == GridKind::half_ball) {
            for (int d = 0; d < N - 1; ++d) --lo[d];
        }
        else {
            for (int d = 0; d < N; ++d) --hi[d];
        }
        // cells below the flat boundary never exist
        lo[N - 1] = std::max(lo[N - 1], 0);

        box_lo_ = lo;
        box_hi_ = hi;
        std::size_t total = 1;
        for (int d = 0; d < N; ++d) total *= static_cast<std::size_t>(hi[d] - lo[d] + 1);
        cell_lookup_.assign(total, -1);

        LatticeIndex<N> c = lo;
        for (std::size_t lin = 0; lin < total; ++lin) {
            Cell<N> cell;
            for (int k = 0; k < corner_count; ++k) {
                LatticeIndex<N> idx = c;
                for (int d = 0; d < N; ++d)
                    if (k & (1 << d)) ++idx[d];
                cell.node[k] = g.find(idx);
                if (cell.node[k] >= 0) ++cell.present;
            }
            if (cell.present > 0) {
                for (int k = 0; k < corner_count; ++k) {
                    if (cell.node[k] < 0) continue;
                    bool ok = true;
                    for (int d = 0; d < N && ok; ++d) ok = cell.node[k ^ (1 << d)] >= 0;
                    if (ok) {
                        cell.valid |= 1u << k;
                        ++cell.valid_count;
                    }
                }
                for (int d = 0; d < N; ++d) cell.center[d] = (c[d] + 0.5) * g.spacing();
                cell_lookup_[lin] = static_cast<long>(cells_.size());
                cells_.push_back(cell);
                lower_.push_back(c);
            }
            for (int d = 0; d < N; ++d) {
                if (++c[d] <= hi[d]) break;
                c[d] = lo[d];
            }
        }

        full_volume_ = std::pow(g.spacing(), N);
    }

    const Grid<N>& grid() const { return *grid_; }
    const GridPtr<N>& grid_ptr() const { return grid_; }
    const std::vector<Cell<N>>& cells() const { return cells_; }
    std::size_t size() const { return cells_.size(); }
    const LatticeIndex<N>& lower_corner(std::size_t c) const { return lower_[c]; }
    double full_volume() const { return full_volume_; }

    /// Cell id by lower-corner lattice index, or -1.
    long find(const LatticeIndex<N>& c) const
    {
        std::size_t lin = 0, stride = 1;
        for (int d = 0; d < N; ++d) {
            if (c[d] < box_lo_[d] || c[d] > box_hi_[d]) return -1;
            lin += static_cast<std::size_t>(c[d] - box_lo_[d]) * stride;
            stride *= static_cast<std::size_t>(box_hi_[d] - box_lo_[d] + 1);
        }
        return cell_lookup_[lin];
    }

    /// Cell volume counted inside the grid and inside the ball |x| <= rho.
    /// Complete cells cut by the sphere are measured on a 16^N midpoint
    /// subgrid; cells missing corners count their present corners inside.
    double volume(const Cell<N>& cell, double rho = std::numeric_limits<double>::infinity()) const
    {
        if (!std::isfinite(rho)) return full_volume_ * cell.present / corner_count;
        const double h = grid_->spacing();
        const double bound = (rho / h) * (rho / h) * (1.0 + 1e-12);
        int inside = 0;
        for (int k = 0; k < corner_count; ++k) {
            if (cell.node[k] < 0) continue;
            const auto& idx = grid_->index(static_cast<std::size_t>(cell.node[k]));
            double n2 = 0.0;
            for (int d = 0; d < N; ++d) n2 += static_cast<double>(idx[d]) * idx[d];
            if (n2 <= bound) ++inside;
        }
        if (cell.present < corner_count || inside == corner_count) return full_volume_ * inside / corner_count;
        // the nearest point of the cell decides whether the sphere cuts it
        double near2 = 0.0;
        for (int d = 0; d < N; ++d) {
            const double lo = cell.center[d] - 0.5 * h;
            const double hi = cell.center[d] + 0.5 * h;
            const double q = lo > 0.0 ? lo : (hi < 0.0 ? hi : 0.0);
            near2 += q * q;
        }
        if (near2 > rho * rho) return 0.0;
        constexpr int m = 16;
        int total = 1;
        for (int d = 0; d < N; ++d) total *= m;
        int hits = 0;
        for (int s = 0; s < total; ++s) {
            double n2 = 0.0;
            int rest = s;
            for (int d = 0; d < N; ++d) {
                const double x = cell.center[d] - 0.5 * h + ((rest % m) + 0.5) * h / m;
                rest /= m;
                n2 += x * x;
            }
            if (n2 <= rho * rho) ++hits;
        }
        return full_volume_ * hits / total;
    }

    /// Interpolated cell-centre value: mean of the present corners.
    double cell_value(const Cell<N>& cell, std::span<const double> u) const
    {
        double s = 0.0;
        for (int k = 0; k < corner_count; ++k)
            if (cell.node[k] >= 0) s += u[static_cast<std::size_t>(cell.node[k])];
        return s / cell.present;
    }

    /// One-sided gradient at corner k of the cell.
    Point<N> corner_gradient(const Cell<N>& cell, int k, std::span<const double> u) const
    {
        Point<N> g;
        const double inv_h = 1.0 / grid_->spacing();
        for (int d = 0; d < N; ++d) {
            const int bit = 1 << d;
            const double hi = u[static_cast<std::size_t>(cell.node[k | bit])];
            const double lo = u[static_cast<std::size_t>(cell.node[k & ~bit])];
            g[d] = (hi - lo) * inv_h;
        }
        return g;
    }

    /// Mean over valid corners of <A g_k, g_k>; zero when no corner is valid.
    double dirichlet_density(const Cell<N>& cell, std::span<const double> u, const Matrix<N>& A) const
    {
        if (cell.valid_count == 0) return 0.0;
        double s = 0.0;
        for (int k = 0; k < corner_count; ++k) {
            if (!(cell.valid & (1u << k))) continue;
            const Point<N> g = corner_gradient(cell, k, u);
            s += g.dot(A * g);
        }
        return s / cell.valid_count;
    }

    /// Mean over valid corners of |g_k|^2.
    double gradient_density(const Cell<N>& cell, std::span<const double> u) const
    {
        if (cell.valid_count == 0) return 0.0;
        double s = 0.0;
        for (int k = 0; k < corner_count; ++k)
            if (cell.valid & (1u << k)) s += corner_gradient(cell, k, u).squaredNorm();
        return s / cell.valid_count;
    }

private:
    GridPtr<N> grid_;
    std::vector<Cell<N>> cells_;
    std::vector<LatticeIndex<N>> lower_;
    std::vector<long> cell_lookup_;
    LatticeIndex<N> box_lo_{};
    LatticeIndex<N> box_hi_{};
    double full_volume_ = 0.0;
};

/// The four addends of the functional.
struct PhaseEnergies {
    double dirichlet_plus = 0.0;
    double dirichlet_minus = 0.0;
    double volume_plus = 0.0;
    double volume_minus = 0.0;

    double total() const { return dirichlet_plus + dirichlet_minus + volume_plus + volume_minus; }
};

inline nlohmann::json to_json(const PhaseEnergies& e, double h, double R)
{
    return {{"total", e.total()},       {"dirichlet_plus", e.dirichlet_plus},
            {"dirichlet_minus", e.dirichlet_minus}, {"volume_plus", e.volume_plus},
            {"volume_minus", e.volume_minus}, {"h", h},
            {"R", R}};
}

namespace detail {

inline void check_finite(std::span<const double> u)
{
    for (double v : u)
        if (!std::isfinite(v)) throw NonFiniteError("field contains a non-finite value");
}

}  // namespace detail

template <int N>
PhaseEnergies phase_energies(const CellComplex<N>& cx, std::span<const double> u, const ProblemSpec<N>& spec,
                             double rho = std::numeric_limits<double>::infinity())
{
    detail::check_finite(u);
    PhaseEnergies e;
    for (const auto& cell : cx.cells()) {
        const double w = cx.volume(cell, rho);
        if (w == 0.0) continue;
        const bool plus = cx.cell_value(cell, u) > 0.0;
        const Matrix<N> A = plus ? spec.a_plus(cell.center) : spec.a_minus(cell.center);
        const double dir = w * cx.dirichlet_density(cell, u, A);
        const double vol = w * spec.weight(cell.center) * (plus ? spec.phases.lambda_plus : spec.phases.lambda_minus);
        if (plus) {
            e.dirichlet_plus += dir;
            e.volume_plus += vol;
        }
        else {
            e.dirichlet_minus += dir;
            e.volume_minus += vol;
        }
    }
    return e;
}

template <int N>
PhaseEnergies phase_energies(const GridSolution<N>& u, const ProblemSpec<N>& spec,
                             double rho = std::numeric_limits<double>::infinity())
{
    return phase_energies(CellComplex<N>(u.grid), u.view(), spec, rho);
}

/// J(u) restricted to B_rho (whole grid by default).
template <int N>
double evaluate_energy(const CellComplex<N>& cx, std::span<const double> u, const ProblemSpec<N>& spec,
                       double rho = std::numeric_limits<double>::infinity())
{
    detail::check_finite(u);
    double total = 0.0;
    for (const auto& cell : cx.cells()) {
        const double w = cx.volume(cell, rho);
        if (w == 0.0) continue;
        const double s = cx.cell_value(cell, u);
        const Matrix<N> A = spec.coefficient(cell.center, s);
        total += w * (cx.dirichlet_density(cell, u, A) + spec.weight(cell.center) * lambda_of(s, spec.phases));
    }
    if (!std::isfinite(total)) throw NonFiniteError("energy is not finite");
    return total;
}

template <int N>
double evaluate_energy(const GridSolution<N>& u, const ProblemSpec<N>& spec,
                       double rho = std::numeric_limits<double>::infinity())
{
    return evaluate_energy(CellComplex<N>(u.grid), u.view(), spec, rho);
}

/// Integral of |grad u|^2 over B_rho^+.
template <int N>
double dirichlet_seminorm(const CellComplex<N>& cx, std::span<const double> u, double rho)
{
    detail::check_finite(u);
    double total = 0.0;
    for (const auto& cell : cx.cells()) {
        const double w = cx.volume(cell, rho);
        if (w != 0.0) total += w * cx.gradient_density(cell, u);
    }
    return total;
}

template <int N>
double dirichlet_seminorm(const GridSolution<N>& u, double rho = std::numeric_limits<double>::infinity())
{
    require(!std::isfinite(rho) || rho <= u.grid->radius() * (1.0 + 1e-12), "sub-ball radius exceeds the domain");
    return dirichlet_seminorm(CellComplex<N>(u.grid), u.view(), rho);
}

/// Volume of {u > 0} inside B_rho, counted cell by cell.
template <int N>
double positive_volume(const CellComplex<N>& cx, std::span<const double> u, double rho)
{
    double v = 0.0;
    for (const auto& cell : cx.cells())
        if (cx.cell_value(cell, u) > 0.0) v += cx.volume(cell, rho);
    return v;
}

template <int N>
double domain_volume(const CellComplex<N>& cx, double rho)
{
    double v = 0.0;
    for (const auto& cell : cx.cells()) v += cx.volume(cell, rho);
    return v;
}

}  // namespace fbtrans
