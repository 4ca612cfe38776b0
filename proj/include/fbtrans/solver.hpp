#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "discretization.hpp"

namespace fbtrans {

struct SolveOptions {
    /// Smoothing widths of the continuation stage, strictly decreasing.
    /// Empty selects a ladder proportional to h (see default_eps_levels).
    std::vector<double> eps_levels;
    double inner_tol = 1e-10;
    int max_outer = 60;
    double stall = 1e-9;
    std::uint64_t seed = 0;
    /// Gradient steps per continuation level.
    int descent_iterations = 200;
    /// Relative energy decrease that ends a continuation level.
    double descent_tol = 1e-9;
    /// Coordinate sweeps per sharp round.
    int sweeps = 8;

    void validate() const
    {
        for (std::size_t k = 0; k < eps_levels.size(); ++k) {
            require(eps_levels[k] > 0.0 && std::isfinite(eps_levels[k]), "smoothing widths must be positive");
            if (k > 0) require(eps_levels[k] < eps_levels[k - 1], "smoothing widths must be strictly decreasing");
        }
        require(inner_tol > 0.0 && stall > 0.0 && descent_tol > 0.0, "tolerances must be positive");
        require(max_outer >= 1 && descent_iterations >= 0 && sweeps >= 0, "iteration counts must be nonnegative");
    }
};

inline nlohmann::json to_json(const SolveOptions& o)
{
    return {{"eps_levels", o.eps_levels},         {"inner_tol", o.inner_tol},
            {"max_outer", o.max_outer},           {"stall", o.stall},
            {"seed", o.seed},                     {"descent_iterations", o.descent_iterations},
            {"descent_tol", o.descent_tol},       {"sweeps", o.sweeps}};
}

inline SolveOptions solve_options_from_json(const nlohmann::json& j)
{
    SolveOptions o;
    o.eps_levels = j.value("eps_levels", o.eps_levels);
    o.inner_tol = j.value("inner_tol", o.inner_tol);
    o.max_outer = j.value("max_outer", o.max_outer);
    o.stall = j.value("stall", o.stall);
    o.seed = j.value("seed", o.seed);
    o.descent_iterations = j.value("descent_iterations", o.descent_iterations);
    o.descent_tol = j.value("descent_tol", o.descent_tol);
    o.sweeps = j.value("sweeps", o.sweeps);
    o.validate();
    return o;
}

template <int N>
struct SolveResult {
    GridSolution<N> solution;
    double energy = 0.0;
    /// Sharp energy at the start of the sharp stage and after every round.
    std::vector<double> history;
    bool converged = false;
    int outer_iterations = 0;
    int descent_steps = 0;
    /// Relative residual of the last phase-fixed linear solve.
    double linear_residual = 0.0;
    double boundary_error = 0.0;
    /// Phases re-derived from the final values match the last linear solve.
    bool phase_consistent = false;
    std::vector<double> eps_levels;
};

template <int N>
nlohmann::json to_json(const SolveResult<N>& r)
{
    return {{"energy", r.energy},
            {"converged", r.converged},
            {"outer_iterations", r.outer_iterations},
            {"descent_steps", r.descent_steps},
            {"linear_residual", r.linear_residual},
            {"boundary_error", r.boundary_error},
            {"phase_consistent", r.phase_consistent},
            {"eps_levels", r.eps_levels},
            {"history", r.history}};
}

namespace detail {

/// Piecewise-cubic step: 0 for s <= 0, 1 for s >= eps, 3t^2 - 2t^3 between.
inline double smooth_step(double s, double eps)
{
    if (s <= 0.0) return 0.0;
    if (s >= eps) return 1.0;
    const double t = s / eps;
    return t * t * (3.0 - 2.0 * t);
}

inline double smooth_step_derivative(double s, double eps)
{
    if (s <= 0.0 || s >= eps) return 0.0;
    const double t = s / eps;
    return 6.0 * t * (1.0 - t) / eps;
}

template <int N>
double mean_isotropic(const Matrix<N>& A)
{
    return A.trace() / N;
}

/// Slope scale of a problem: boundary oscillation over the domain size, or the
/// free-boundary slope when that is larger.
template <int N>
double slope_scale(const Discretization<N>& d)
{
    const auto& g = d.grid();
    double sup = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g.is_fixed(i)) sup = std::max(sup, std::abs(d.boundary_values()[i]));
    const double extent = g.kind() == GridKind::slab ? g.depth() : g.radius();
    const Point<N> o = Point<N>::Zero();
    const double jump = d.spec().phases.lambda_plus - d.spec().phases.lambda_minus;
    const double a = mean_isotropic<N>(d.spec().a_plus(o));
    const double bern = jump > 0.0 && a > 0.0 ? std::sqrt(std::abs(d.spec().weight(o)) * jump / a) : 0.0;
    const double s = std::max(sup / extent, bern);
    return s > 0.0 ? s : 1.0;
}

}  // namespace detail

/// Default continuation ladder: slope_scale * h * {16, 8, 4, 2, 1}.
template <int N>
std::vector<double> default_eps_levels(const Discretization<N>& d)
{
    const double base = detail::slope_scale(d) * d.grid().spacing();
    return {16.0 * base, 8.0 * base, 4.0 * base, 2.0 * base, base};
}

namespace detail {

/// Minimizer state for one problem instance. Owns the factorizations so
/// that their symbolic analysis is shared between rounds.
template <int N>
class Minimizer {
public:
    Minimizer(const ProblemSpec<N>& spec, GridPtr<N> grid, const SolveOptions& opts)
        : disc_(spec, std::move(grid)), opts_(opts)
    {
        opts_.validate();
        if (disc_.free_count() == 0) return;
        ref_.resize(disc_.cell_count());
        for (std::size_t c = 0; c < disc_.cell_count(); ++c) ref_[c] = 0.5 * (disc_.a_plus(c) + disc_.a_minus(c));
        double sup = 0.0;
        for (std::size_t i = 0; i < disc_.grid().size(); ++i)
            if (disc_.grid().is_fixed(i)) sup = std::max(sup, std::abs(disc_.boundary_values()[i]));
        value_scale_ = sup + disc_.grid().spacing();
    }

    const Discretization<N>& discretization() const { return disc_; }

    SolveResult<N> run(const std::vector<double>* warm = nullptr)
    {
        SolveResult<N> res;
        std::vector<double> u = disc_.boundary_values();
        if (disc_.free_count() == 0) {
            res.energy = disc_.energy(u);
            res.history = {res.energy};
            res.converged = true;
            res.phase_consistent = true;
            res.solution = GridSolution<N>(disc_.grid_ptr(), std::move(u));
            return res;
        }

        // harmonic extension with A_plus
        std::vector<double> init = u;
        linear_solve(
            init, [&](std::size_t c) -> const Matrix<N>& { return disc_.a_plus(c); }, nullptr, true);
        detail::check_finite(init);

        res.eps_levels = opts_.eps_levels.empty() ? default_eps_levels(disc_) : opts_.eps_levels;
        std::vector<double> cont = init;
        for (double eps : res.eps_levels) res.descent_steps += descend(cont, eps);

        const double j_init = disc_.energy(init);
        const double j_cont = disc_.energy(cont);
        u = j_cont <= j_init ? std::move(cont) : std::move(init);
        double energy = std::min(j_cont, j_init);
        if (warm) {
            require(warm->size() == u.size(), "warm start needs one value per node");
            std::vector<double> w = disc_.boundary_values();
            for (std::size_t i : disc_.free_nodes()) w[i] = (*warm)[i];
            detail::check_finite(w);
            const double j_warm = disc_.energy(w);
            if (j_warm < energy) {
                u = std::move(w);
                energy = j_warm;
            }
        }
        res.history.push_back(energy);

        std::vector<char> solved_phases;
        for (int round = 0; round < opts_.max_outer; ++round) {
            ++res.outer_iterations;
            const double start = energy;
            const std::vector<char> before = disc_.phases(u);

            const int moves = coordinate_descent(u);

            // phase-interior solve with the interface band held
            solved_phases = disc_.phases(u);
            std::vector<char> held = dilate(mixed_nodes(solved_phases), 1);
            std::vector<double> target;
            auto select = [&](std::size_t c) -> const Matrix<N>& {
                return solved_phases[c] ? disc_.a_plus(c) : disc_.a_minus(c);
            };
            for (int pass = 0; pass < 8; ++pass) {
                target = u;
                res.linear_residual = linear_solve(target, select, &held, true);
                // cells pushed across zero pin their nodes for the next pass
                std::vector<char> pin(held.size(), 0);
                bool flipped = false;
                for (std::size_t c = 0; c < disc_.cell_count(); ++c) {
                    if ((disc_.cell_value(c, target) > 0.0) == static_cast<bool>(solved_phases[c])) continue;
                    flipped = true;
                    for (long n : disc_.complex().cells()[c].node)
                        if (n >= 0) pin[static_cast<std::size_t>(n)] = 1;
                }
                if (!flipped) break;
                const std::vector<char> grown = dilate(pin, 1);
                for (std::size_t i = 0; i < held.size(); ++i) held[i] = held[i] || grown[i];
            }
            detail::check_finite(target);
            double current = disc_.energy(u);
            bool full_step = false;
            std::vector<double> trial(u.size());
            for (int k = 0; k <= 10; ++k) {
                const double t = std::ldexp(1.0, -k);
                for (std::size_t i = 0; i < u.size(); ++i) trial[i] = u[i] + t * (target[i] - u[i]);
                const double jt = disc_.energy(trial);
                if (jt <= current) {
                    u.swap(trial);
                    current = jt;
                    full_step = k == 0;
                    break;
                }
            }
            energy = std::min(current, res.history.back());
            res.history.push_back(energy);

            const bool phase_change = disc_.phases(u) != before;
            const bool settled = moves == 0 && full_step && !phase_change;
            if (settled || start - energy <= opts_.stall * std::abs(start)) {
                res.converged = true;
                break;
            }
        }

        res.phase_consistent = disc_.phases(u) == solved_phases;
        res.energy = disc_.energy(u);
        double berr = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i)
            if (disc_.grid().is_fixed(i)) berr = std::max(berr, std::abs(u[i] - disc_.boundary_values()[i]));
        res.boundary_error = berr;
        res.solution = GridSolution<N>(disc_.grid_ptr(), std::move(u));
        return res;
    }

    /// Smoothed functional and its gradient (free nodes only).
    double smoothed_energy(std::span<const double> u, double eps, std::vector<double>* grad) const
    {
        const auto& cx = disc_.complex();
        const double dl = disc_.spec().phases.lambda_plus - disc_.spec().phases.lambda_minus;
        const double lm = disc_.spec().phases.lambda_minus;
        const double inv_h = 1.0 / disc_.grid().spacing();
        if (grad) grad->assign(u.size(), 0.0);
        double total = 0.0;
        std::array<Point<N>, Cell<N>::corner_count> g;
        for (std::size_t c = 0; c < cx.size(); ++c) {
            const auto& cell = cx.cells()[c];
            const double w = disc_.weight(c);
            const double s = cx.cell_value(cell, u);
            const double H = smooth_step(s, eps);
            const double dH = smooth_step_derivative(s, eps);
            const Matrix<N>& Ap = disc_.a_plus(c);
            const Matrix<N>& Am = disc_.a_minus(c);
            double dp = 0.0, dm = 0.0;
            for (int k = 0; k < Cell<N>::corner_count; ++k) {
                if (!(cell.valid & (1u << k))) continue;
                g[k] = cx.corner_gradient(cell, k, u);
                dp += g[k].dot(Ap * g[k]);
                dm += g[k].dot(Am * g[k]);
            }
            if (cell.valid_count > 0) {
                dp /= cell.valid_count;
                dm /= cell.valid_count;
            }
            const double qc = disc_.q(c);
            total += w * ((1.0 - H) * dm + H * dp + qc * (lm + dl * H));
            if (!grad) continue;
            auto& gr = *grad;
            if (cell.valid_count > 0) {
                const Matrix<N> B = (1.0 - H) * Am + H * Ap;
                const double f = 2.0 * w / cell.valid_count * inv_h;
                for (int k = 0; k < Cell<N>::corner_count; ++k) {
                    if (!(cell.valid & (1u << k))) continue;
                    const Point<N> t = f * (B * g[k]);
                    for (int d = 0; d < N; ++d) {
                        gr[static_cast<std::size_t>(cell.node[k | (1 << d)])] += t[d];
                        gr[static_cast<std::size_t>(cell.node[k & ~(1 << d)])] -= t[d];
                    }
                }
            }
            if (dH != 0.0) {
                const double f = w * dH * (dp - dm + qc * dl) / cell.present;
                for (int k = 0; k < Cell<N>::corner_count; ++k)
                    if (cell.node[k] >= 0) gr[static_cast<std::size_t>(cell.node[k])] += f;
            }
        }
        if (grad) {
            for (std::size_t i = 0; i < u.size(); ++i)
                if (disc_.grid().is_fixed(i)) (*grad)[i] = 0.0;
        }
        if (!std::isfinite(total)) throw NonFiniteError("smoothed energy is not finite");
        return total;
    }

    /// Exact minimization of J over the value at one free node, all other
    /// values fixed. Returns true when the value moved.
    bool relax_node(std::size_t i, std::vector<double>& u) const
    {
        const auto& inc = disc_.incidence(i);
        const auto& cx = disc_.complex();
        const int m = inc.count;
        const double u0 = u[i];
        std::array<double, Cell<N>::corner_count> bp, ap, bpl, am, bm;
        for (int j = 0; j < m; ++j) {
            const std::size_t c = static_cast<std::size_t>(inc.cell[j]);
            const auto& cell = cx.cells()[c];
            double other = 0.0;
            for (int k = 0; k < Cell<N>::corner_count; ++k)
                if (cell.node[k] >= 0 && k != inc.corner[j]) other += u[static_cast<std::size_t>(cell.node[k])];
            bp[j] = -other;
            const double w = disc_.weight(c);
            double d0p, d1p, dmp, d0m, d1m, dmm;
            u[i] = 0.0;
            d0p = cx.dirichlet_density(cell, u, disc_.a_plus(c));
            d0m = cx.dirichlet_density(cell, u, disc_.a_minus(c));
            u[i] = 1.0;
            d1p = cx.dirichlet_density(cell, u, disc_.a_plus(c));
            d1m = cx.dirichlet_density(cell, u, disc_.a_minus(c));
            u[i] = -1.0;
            dmp = cx.dirichlet_density(cell, u, disc_.a_plus(c));
            dmm = cx.dirichlet_density(cell, u, disc_.a_minus(c));
            ap[j] = w * (0.5 * (d1p + dmp) - d0p);
            bpl[j] = w * 0.5 * (d1p - dmp);
            am[j] = w * (0.5 * (d1m + dmm) - d0m);
            bm[j] = w * 0.5 * (d1m - dmm);
        }
        u[i] = u0;
        const double e0 = local_energy(i, u);

        std::array<double, Cell<N>::corner_count> sorted;
        std::copy(bp.begin(), bp.begin() + m, sorted.begin());
        std::sort(sorted.begin(), sorted.begin() + m);

        double best_v = u0, best_e = e0;
        constexpr double inf = std::numeric_limits<double>::infinity();
        for (int j = 0; j <= m; ++j) {
            const double lo = j == 0 ? -inf : sorted[j - 1];
            const double hi = j == m ? inf : sorted[j];
            if (!(hi > lo)) continue;
            double A = 0.0, B = 0.0;
            for (int l = 0; l < m; ++l) {
                if (bp[l] <= lo) {
                    A += ap[l];
                    B += bpl[l];
                }
                else {
                    A += am[l];
                    B += bm[l];
                }
            }
            if (!(A > 0.0)) continue;
            double v = -B / (2.0 * A);
            if (v > hi) v = hi;
            if (v <= lo) v = lo + 1e-10 * (std::abs(lo) + value_scale_);
            u[i] = v;
            const double e = local_energy(i, u);
            if (e < best_e) {
                best_e = e;
                best_v = v;
            }
        }
        const double margin = 1e-13 * std::abs(e0) + 1e-300;
        if (best_e < e0 - margin) {
            u[i] = best_v;
            return true;
        }
        u[i] = u0;
        return false;
    }

    double local_energy(std::size_t i, std::span<const double> u) const
    {
        const auto& inc = disc_.incidence(i);
        double e = 0.0;
        for (int j = 0; j < inc.count; ++j) e += disc_.cell_energy(static_cast<std::size_t>(inc.cell[j]), u);
        return e;
    }

    /// Nodes whose incident cells do not all share one phase.
    std::vector<char> mixed_nodes(const std::vector<char>& p) const
    {
        std::vector<char> mixed(disc_.grid().size(), 0);
        for (std::size_t i = 0; i < mixed.size(); ++i) {
            const auto& inc = disc_.incidence(i);
            for (int j = 1; j < inc.count && !mixed[i]; ++j)
                mixed[i] = p[static_cast<std::size_t>(inc.cell[j])] != p[static_cast<std::size_t>(inc.cell[0])];
        }
        return mixed;
    }

    /// Marks every node within lattice box radius `radius` of a marked node.
    std::vector<char> dilate(const std::vector<char>& marked, int radius) const
    {
        const auto& g = disc_.grid();
        std::vector<char> out(g.size(), 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!marked[i]) continue;
            LatticeIndex<N> off;
            off.fill(-radius);
            while (true) {
                LatticeIndex<N> q = g.index(i);
                for (int d = 0; d < N; ++d) q[d] += off[d];
                const long n = g.find(q);
                if (n >= 0) out[static_cast<std::size_t>(n)] = 1;
                int d = 0;
                for (; d < N; ++d) {
                    if (++off[d] <= radius) break;
                    off[d] = -radius;
                }
                if (d == N) break;
            }
        }
        return out;
    }

    /// Free nodes within lattice box radius 2 of a mixed node.
    std::vector<std::size_t> active_nodes(std::span<const double> u) const
    {
        const auto& g = disc_.grid();
        const std::vector<char> mark = dilate(mixed_nodes(disc_.phases(u)), 2);
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (mark[i] && !g.is_fixed(i)) out.push_back(i);
        return out;
    }

    int coordinate_descent(std::vector<double>& u) const
    {
        int moves = 0;
        for (int sweep = 0; sweep < opts_.sweeps; ++sweep) {
            int changed = 0;
            for (std::size_t i : active_nodes(u))
                if (relax_node(i, u)) ++changed;
            moves += changed;
            if (changed == 0) break;
        }
        return moves;
    }

private:
    /// Minimizes sum_c w_c D_c(u; B_c) over the free values, holding the
    /// fixed nodes and the nodes flagged in `held`; overwrites the free values.
    /// `direct` factorizes the system, otherwise preconditioned conjugate
    /// gradients start from the current values. Returns the relative residual.
    template <class Select>
    double linear_solve(std::vector<double>& u, Select select, const std::vector<char>* held, bool direct)
    {
        const std::size_t nf = disc_.free_count();
        const auto& free = disc_.free_nodes();
        auto is_held = [&](std::size_t node) { return held && (*held)[node]; };
        Eigen::SparseMatrix<double> K = disc_.assemble(select);
        if (held) {
            for (long j = 0; j < K.outerSize(); ++j) {
                const bool hj = is_held(free[static_cast<std::size_t>(j)]);
                for (Eigen::SparseMatrix<double>::InnerIterator it(K, j); it; ++it) {
                    const bool hi = is_held(free[static_cast<std::size_t>(it.row())]);
                    if (hi || hj) it.valueRef() = it.row() == j ? 1.0 : 0.0;
                }
            }
        }
        std::vector<double> fixed(u.size(), 0.0);
        for (std::size_t i = 0; i < u.size(); ++i)
            if (disc_.grid().is_fixed(i) || is_held(i)) fixed[i] = u[i];
        std::vector<double> y(u.size(), 0.0);
        disc_.add_dirichlet_gradient(fixed, y, 0.5, select);
        Eigen::VectorXd b(static_cast<long>(nf)), x(static_cast<long>(nf));
        Eigen::VectorXd keep = Eigen::VectorXd::Ones(static_cast<long>(nf));
        for (std::size_t f = 0; f < nf; ++f) {
            const std::size_t node = free[f];
            const long k = static_cast<long>(f);
            b[k] = is_held(node) ? u[node] : -y[node];
            x[k] = u[node];
            if (is_held(node)) keep[k] = 0.0;
        }

        double rel = 0.0;
        const double bn = b.norm();
        if (direct) {
            CholeskySolver& chol = phase_solver_;
            chol.factorize(K);
            x = chol.solve(b);
            Eigen::VectorXd r = b - K * x;
            x += chol.solve(r);
            r = b - K * x;
            rel = bn > 0.0 ? r.norm() / bn : r.norm();
        }
        else {
            ensure_preconditioner();
            auto apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return K * v; };
            auto precondition = [&](const Eigen::VectorXd& r) -> Eigen::VectorXd {
                Eigen::VectorXd z = preconditioner_.solve(keep.cwiseProduct(r));
                return keep.cwiseProduct(z) + (Eigen::VectorXd::Ones(r.size()) - keep).cwiseProduct(r);
            };
            rel = pcg(apply, precondition, b, x, linear_tolerance(), 2000);
        }
        for (std::size_t f = 0; f < nf; ++f) u[free[f]] = x[static_cast<long>(f)];
        return rel;
    }

    double linear_tolerance() const { return std::min(1e-4 * opts_.inner_tol, 1e-13); }

    void ensure_preconditioner()
    {
        if (preconditioner_ready_) return;
        const Eigen::SparseMatrix<double> P =
            2.0 * disc_.assemble([&](std::size_t c) -> const Matrix<N>& { return ref_[c]; });
        preconditioner_.factorize(P);
        preconditioner_ready_ = true;
    }

    /// Preconditioned gradient descent with Armijo backtracking on the
    /// smoothed functional. Returns the number of accepted steps.
    int descend(std::vector<double>& u, double eps)
    {
        ensure_preconditioner();
        const std::size_t nf = disc_.free_count();
        std::vector<double> grad, trial(u.size());
        double e = smoothed_energy(u, eps, &grad);
        double t = 1.0;
        int steps = 0;
        Eigen::VectorXd gf(static_cast<long>(nf));
        for (int it = 0; it < opts_.descent_iterations; ++it) {
            for (std::size_t f = 0; f < nf; ++f) gf[static_cast<long>(f)] = grad[disc_.free_nodes()[f]];
            const Eigen::VectorXd dir = -preconditioner_.solve(gf);
            const double slope = gf.dot(dir);
            if (!(slope < 0.0)) break;
            t = std::min(1.0, 2.0 * t);
            double et = e;
            bool accepted = false;
            for (int k = 0; k < 40; ++k) {
                trial = u;
                for (std::size_t f = 0; f < nf; ++f) trial[disc_.free_nodes()[f]] += t * dir[static_cast<long>(f)];
                et = smoothed_energy(trial, eps, nullptr);
                if (et <= e + 1e-4 * t * slope) {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) break;
            u.swap(trial);
            ++steps;
            const double decrease = e - et;
            e = smoothed_energy(u, eps, &grad);
            if (decrease <= opts_.descent_tol * std::abs(e)) break;
        }
        return steps;
    }

    Discretization<N> disc_;
    SolveOptions opts_;
    std::vector<Matrix<N>> ref_;
    double value_scale_ = 1.0;
    CholeskySolver phase_solver_;
    CholeskySolver preconditioner_;
    bool preconditioner_ready_ = false;
};

}  // namespace detail

/// Discrete minimizer of J with u = phi on every fixed node.
template <int N>
SolveResult<N> minimize(const ProblemSpec<N>& spec, GridPtr<N> grid, const SolveOptions& opts = {})
{
    require(grid != nullptr, "grid must be built");
    detail::Minimizer<N> m(spec, std::move(grid), opts);
    return m.run();
}

/// As minimize, with `warm` (boundary nodes replaced by the data) as a third
/// candidate start next to the harmonic extension and the continuation.
template <int N>
SolveResult<N> minimize(const ProblemSpec<N>& spec, GridPtr<N> grid, const SolveOptions& opts,
                        const std::vector<double>& warm)
{
    require(grid != nullptr, "grid must be built");
    detail::Minimizer<N> m(spec, std::move(grid), opts);
    return m.run(&warm);
}

/// Solution of a linear elliptic problem on a node region.
struct PhasePdeSolution {
    std::vector<double> values;
    double residual = 0.0;
};

/// Solves div(A grad w) = 0 on the nodes flagged in `region`, with w equal to
/// `values` on every other node. Cells touching the region enter the
/// quadrature; for diagonal A this is the 5/7-point stencil.
template <int N>
PhasePdeSolution solve_phase_pde(GridPtr<N> grid, const std::vector<char>& region, const EllipticField<N>& A,
                                 std::vector<double> values)
{
    const std::size_t n = grid->size();
    require(region.size() == n && values.size() == n, "region and values need one entry per node");
    CellComplex<N> cx(grid);
    std::vector<long> unknown(n, -1);
    std::vector<std::size_t> nodes;
    for (std::size_t i = 0; i < n; ++i)
        if (region[i]) {
            unknown[i] = static_cast<long>(nodes.size());
            nodes.push_back(i);
        }
    if (nodes.empty()) return {std::move(values), 0.0};

    std::vector<double> weight(cx.size(), 0.0);
    std::vector<Matrix<N>> coef(cx.size());
    bool anchored = false;
    for (std::size_t c = 0; c < cx.size(); ++c) {
        const auto& cell = cx.cells()[c];
        bool touches = false, fixed = false;
        for (int k = 0; k < Cell<N>::corner_count; ++k) {
            if (cell.node[k] < 0) continue;
            if (region[static_cast<std::size_t>(cell.node[k])]) touches = true;
            else fixed = true;
        }
        if (!touches) continue;
        anchored = anchored || fixed;
        weight[c] = cx.volume(cell);
        coef[c] = A(cell.center);
    }
    if (!anchored) throw SingularSystemError("region has no boundary nodes");

    auto wsel = [&](std::size_t c) { return weight[c]; };
    auto csel = [&](std::size_t c) -> const Matrix<N>& { return coef[c]; };
    const Eigen::SparseMatrix<double> K = assemble_quadratic(cx, unknown, nodes.size(), wsel, csel);
    CholeskySolver chol(K);

    // right-hand side: -(K_fc w_c), via the gradient of the quadratic form
    std::vector<double> fixed(n, 0.0), y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (!region[i]) fixed[i] = values[i];
    const double inv_h = 1.0 / grid->spacing();
    for (std::size_t c = 0; c < cx.size(); ++c) {
        const auto& cell = cx.cells()[c];
        if (weight[c] == 0.0 || cell.valid_count == 0) continue;
        const double s = weight[c] / cell.valid_count * inv_h;
        for (int k = 0; k < Cell<N>::corner_count; ++k) {
            if (!(cell.valid & (1u << k))) continue;
            const Point<N> t = s * (coef[c] * cx.corner_gradient(cell, k, fixed));
            for (int d = 0; d < N; ++d) {
                y[static_cast<std::size_t>(cell.node[k | (1 << d)])] += t[d];
                y[static_cast<std::size_t>(cell.node[k & ~(1 << d)])] -= t[d];
            }
        }
    }
    Eigen::VectorXd b(static_cast<long>(nodes.size()));
    for (std::size_t f = 0; f < nodes.size(); ++f) b[static_cast<long>(f)] = -y[nodes[f]];
    Eigen::VectorXd x = chol.solve(b);
    Eigen::VectorXd r = b - K * x;
    x += chol.solve(r);
    r = b - K * x;
    for (std::size_t f = 0; f < nodes.size(); ++f) values[nodes[f]] = x[static_cast<long>(f)];
    const double bn = b.norm();
    return {std::move(values), bn > 0.0 ? r.norm() / bn : r.norm()};
}

enum class Phase { positive, negative };

struct ResidualReport {
    double norm = 0.0;
    double max_abs = 0.0;
    std::size_t nodes = 0;
    bool empty_phase = false;
};

inline nlohmann::json to_json(const ResidualReport& r)
{
    return {{"norm", r.norm}, {"max_abs", r.max_abs}, {"nodes", r.nodes}, {"empty_phase", r.empty_phase}};
}

/// Discrete L2 norm of div(A grad u) over free nodes whose whole box of
/// lattice radius 2 lies on the grid and in the chosen phase.
template <int N>
ResidualReport pde_residual(const GridSolution<N>& u, const ProblemSpec<N>& spec, Phase phase)
{
    const auto& g = *u.grid;
    detail::check_finite(u.view());
    auto in_phase = [&](std::size_t i) { return phase == Phase::positive ? u.values[i] > 0.0 : u.values[i] <= 0.0; };
    ResidualReport rep;
    bool any = false;
    for (std::size_t i = 0; i < g.size(); ++i) any = any || in_phase(i);
    if (!any) {
        rep.empty_phase = true;
        return rep;
    }

    CellComplex<N> cx(u.grid);
    std::vector<char> qualifies(g.size(), 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.is_fixed(i) || !in_phase(i)) continue;
        bool ok = true;
        LatticeIndex<N> off;
        off.fill(-2);
        while (ok) {
            LatticeIndex<N> q = g.index(i);
            for (int d = 0; d < N; ++d) q[d] += off[d];
            const long n = g.find(q);
            ok = n >= 0 && in_phase(static_cast<std::size_t>(n));
            int d = 0;
            for (; d < N; ++d) {
                if (++off[d] <= 2) break;
                off[d] = -2;
            }
            if (d == N) break;
        }
        qualifies[i] = ok;
    }

    // K u at qualifying nodes; every cell around them lies in the phase
    std::vector<double> y(g.size(), 0.0);
    const double inv_h = 1.0 / g.spacing();
    for (const auto& cell : cx.cells()) {
        bool needed = false;
        for (int k = 0; k < Cell<N>::corner_count && !needed; ++k)
            needed = cell.node[k] >= 0 && qualifies[static_cast<std::size_t>(cell.node[k])];
        if (!needed || cell.valid_count == 0) continue;
        const Matrix<N> A = phase == Phase::positive ? spec.a_plus(cell.center) : spec.a_minus(cell.center);
        const double s = cx.volume(cell) / cell.valid_count * inv_h;
        for (int k = 0; k < Cell<N>::corner_count; ++k) {
            if (!(cell.valid & (1u << k))) continue;
            const Point<N> t = s * (A * cx.corner_gradient(cell, k, u.view()));
            for (int d = 0; d < N; ++d) {
                y[static_cast<std::size_t>(cell.node[k | (1 << d)])] += t[d];
                y[static_cast<std::size_t>(cell.node[k & ~(1 << d)])] -= t[d];
            }
        }
    }
    const double hn = cx.full_volume();
    double sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!qualifies[i]) continue;
        const double r = -y[i] / hn;
        sum += r * r * hn;
        rep.max_abs = std::max(rep.max_abs, std::abs(r));
        ++rep.nodes;
    }
    rep.norm = std::sqrt(sum);
    return rep;
}

struct PerturbationWitness {
    std::vector<double> center;
    double radius = 0.0;
    double amplitude = 0.0;
    double delta = 0.0;
};

struct MinimalityReport {
    int trials = 0;
    int failures = 0;
    double energy = 0.0;
    double tolerance = 0.0;
    /// Smallest energy change observed over all trials.
    double worst_delta = std::numeric_limits<double>::infinity();
    std::vector<PerturbationWitness> witnesses;
};

inline nlohmann::json to_json(const MinimalityReport& r)
{
    nlohmann::json w = nlohmann::json::array();
    for (const auto& x : r.witnesses)
        w.push_back({{"center", x.center}, {"radius", x.radius}, {"amplitude", x.amplitude}, {"delta", x.delta}});
    return {{"trials", r.trials},           {"failures", r.failures}, {"energy", r.energy},
            {"tolerance", r.tolerance},     {"worst_delta", r.worst_delta}, {"witnesses", w}};
}

/// Random bump perturbations delta = amp (1 - |x - c|^2 / rho^2)^2 supported
/// in B_rho(c) and zero on fixed nodes; a trial fails when
/// J(u + delta) < J(u) - tolerance. A negative tolerance selects 1e-8 J(u).
template <int N>
MinimalityReport local_minimality_test(const GridSolution<N>& u, const ProblemSpec<N>& spec, int trials,
                                       std::uint64_t seed, double tolerance = -1.0)
{
    require(trials >= 0, "trial count must be nonnegative");
    const auto& g = *u.grid;
    const Discretization<N> disc(spec, u.grid);
    MinimalityReport rep;
    rep.trials = trials;
    rep.energy = disc.energy(u.view());
    rep.tolerance = tolerance >= 0.0 ? tolerance : 1e-8 * std::abs(rep.energy);

    const double R = g.kind() == GridKind::slab ? 0.5 * std::min(g.width(), g.depth()) : g.radius();
    const double h = g.spacing();
    const double sup = u.sup_norm();
    const double amp_scale = sup > 0.0 ? sup : 1.0;
    const double rmin = 2.0 * h, rmax = std::max(rmin, R / 4.0);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> v = u.values;
    std::vector<long> stamp(disc.cell_count(), -1);
    std::vector<std::size_t> touched_nodes, touched_cells;

    for (int t = 0; t < trials; ++t) {
        Point<N> c;
        if (g.kind() == GridKind::slab) {
            for (int d = 0; d < N - 1; ++d) c[d] = (unit(rng) - 0.5) * g.width();
            c[N - 1] = unit(rng) * g.depth();
        }
        else {
            do {
                for (int d = 0; d < N - 1; ++d) c[d] = (2.0 * unit(rng) - 1.0) * R;
                c[N - 1] = unit(rng) * R;
            } while (c.norm() >= R);
        }
        const double rho = rmin + unit(rng) * (rmax - rmin);
        const double amp = (unit(rng) - 0.5) * amp_scale;

        touched_nodes.clear();
        touched_cells.clear();
        LatticeIndex<N> lo, hi;
        for (int d = 0; d < N; ++d) {
            lo[d] = static_cast<int>(std::floor((c[d] - rho) / h));
            hi[d] = static_cast<int>(std::ceil((c[d] + rho) / h));
        }
        LatticeIndex<N> q = lo;
        while (true) {
            const long n = g.find(q);
            if (n >= 0 && !g.is_fixed(static_cast<std::size_t>(n))) {
                const double r2 = (g.node(static_cast<std::size_t>(n)) - c).squaredNorm() / (rho * rho);
                if (r2 < 1.0) touched_nodes.push_back(static_cast<std::size_t>(n));
            }
            int d = 0;
            for (; d < N; ++d) {
                if (++q[d] <= hi[d]) break;
                q[d] = lo[d];
            }
            if (d == N) break;
        }
        for (std::size_t n : touched_nodes) {
            const auto& inc = disc.incidence(n);
            for (int j = 0; j < inc.count; ++j) {
                const auto cid = static_cast<std::size_t>(inc.cell[j]);
                if (stamp[cid] != t) {
                    stamp[cid] = t;
                    touched_cells.push_back(cid);
                }
            }
        }
        double before = 0.0;
        for (std::size_t cid : touched_cells) before += disc.cell_energy(cid, v);
        for (std::size_t n : touched_nodes) {
            const double r2 = (g.node(n) - c).squaredNorm() / (rho * rho);
            v[n] += amp * (1.0 - r2) * (1.0 - r2);
        }
        double after = 0.0;
        for (std::size_t cid : touched_cells) after += disc.cell_energy(cid, v);
        for (std::size_t n : touched_nodes) v[n] = u.values[n];

        const double delta = after - before;
        rep.worst_delta = std::min(rep.worst_delta, delta);
        if (delta < -rep.tolerance) {
            ++rep.failures;
            rep.witnesses.push_back({std::vector<double>(c.data(), c.data() + N), rho, amp, delta});
        }
    }
    if (trials == 0) rep.worst_delta = 0.0;
    return rep;
}

struct OneDOracle {
    double energy = 0.0;
    double break_point = 0.0;
    /// Interior free-boundary slope sqrt(q0 (lambda_plus - lambda_minus) / a_plus).
    double slope = 0.0;
    /// Slope of the best candidate on its linear part.
    double candidate_slope = 0.0;
};

/// Brute-force minimum of the one-dimensional functional over profiles that
/// vanish on [0, t] and rise linearly to h_bc at L, t on a K-point mesh.
inline OneDOracle one_d_oracle(double a_plus, double lambda_plus, double lambda_minus, double q0, double h_bc,
                               double L, int K)
{
    require(a_plus > 0.0 && lambda_plus > 0.0 && lambda_minus > 0.0 && q0 > 0.0 && h_bc > 0.0 && L > 0.0,
            "oracle inputs must be positive");
    require(K >= 1000, "oracle needs at least 1000 candidates");
    OneDOracle best;
    best.energy = std::numeric_limits<double>::infinity();
    for (int j = 0; j < K; ++j) {
        const double t = L * j / K;
        const double len = L - t;
        const double e = a_plus * h_bc * h_bc / len + q0 * (lambda_minus * t + lambda_plus * len);
        if (e < best.energy) {
            best.energy = e;
            best.break_point = t;
            best.candidate_slope = h_bc / len;
        }
    }
    const double jump = lambda_plus - lambda_minus;
    best.slope = jump > 0.0 ? std::sqrt(q0 * jump / a_plus) : 0.0;
    return best;
}

}  // namespace fbtrans
