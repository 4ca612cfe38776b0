#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#ifdef FBTRANS_WITH_CHOLMOD
#include <Eigen/CholmodSupport>
#endif

#include "energy.hpp"

namespace fbtrans {

/// Sparse matrix of u -> sum_c weight(c) D_c(u; B_c) over the unknowns
/// numbered by `unknown` (-1 marks a node held fixed). Cells with zero weight
/// are skipped. The pattern depends only on the grid and the numbering.
template <int N, class Weight, class Select>
Eigen::SparseMatrix<double> assemble_quadratic(const CellComplex<N>& cx, const std::vector<long>& unknown,
                                               std::size_t count, Weight weight, Select select)
{
    constexpr int corners = Cell<N>::corner_count;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(cx.size() * corners * N * N * 4);
    auto add = [&](long i, long j, double v) {
        const long fi = unknown[static_cast<std::size_t>(i)], fj = unknown[static_cast<std::size_t>(j)];
        if (fi >= 0 && fj >= 0) trip.emplace_back(fi, fj, v);
    };
    const double inv_h2 = 1.0 / (cx.grid().spacing() * cx.grid().spacing());
    for (std::size_t c = 0; c < cx.size(); ++c) {
        const auto& cell = cx.cells()[c];
        const double w = weight(c);
        if (cell.valid_count == 0 || w == 0.0) continue;
        const Matrix<N>& B = select(c);
        const double s = w / cell.valid_count * inv_h2;
        for (int k = 0; k < corners; ++k) {
            if (!(cell.valid & (1u << k))) continue;
            // g_d = (u[hi_d] - u[lo_d]) / h
            for (int d = 0; d < N; ++d) {
                const long hd = cell.node[k | (1 << d)], ld = cell.node[k & ~(1 << d)];
                for (int e = 0; e < N; ++e) {
                    const long he = cell.node[k | (1 << e)], le = cell.node[k & ~(1 << e)];
                    const double b = s * B(d, e);
                    add(hd, he, b);
                    add(hd, le, -b);
                    add(ld, he, -b);
                    add(ld, le, b);
                }
            }
        }
    }
    Eigen::SparseMatrix<double> K(static_cast<long>(count), static_cast<long>(count));
    K.setFromTriplets(trip.begin(), trip.end());
    return K;
}

/// Cell-wise data of the discrete functional for one problem instance:
/// coefficients frozen at cell centres, volume weights, Dirichlet values and
/// the node/cell incidence needed by local updates.
template <int N>
class Discretization {
public:
    static constexpr int corner_count = Cell<N>::corner_count;

    struct Incidence {
        std::array<long, corner_count> cell;
        std::array<int, corner_count> corner;
        int count = 0;
    };

    Discretization(const ProblemSpec<N>& spec, GridPtr<N> grid) : cx_(grid), spec_(spec)
    {
        const auto& g = *grid;
        const std::size_t nc = cx_.size();
        a_plus_.resize(nc);
        a_minus_.resize(nc);
        q_.resize(nc);
        weight_.resize(nc);
        for (std::size_t c = 0; c < nc; ++c) {
            const auto& cell = cx_.cells()[c];
            a_plus_[c] = spec.a_plus(cell.center);
            a_minus_[c] = spec.a_minus(cell.center);
            q_[c] = spec.weight(cell.center);
            weight_[c] = cx_.volume(cell);
        }

        free_index_.assign(g.size(), -1);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!g.is_fixed(i)) {
                free_index_[i] = static_cast<long>(free_nodes_.size());
                free_nodes_.push_back(i);
            }
        }

        incidence_.resize(g.size());
        for (std::size_t c = 0; c < nc; ++c) {
            const auto& cell = cx_.cells()[c];
            for (int k = 0; k < corner_count; ++k) {
                if (cell.node[k] < 0) continue;
                auto& inc = incidence_[static_cast<std::size_t>(cell.node[k])];
                inc.cell[inc.count] = static_cast<long>(c);
                inc.corner[inc.count] = k;
                ++inc.count;
            }
        }

        boundary_.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) boundary_[i] = spec.boundary(g.node(i));
    }

    const CellComplex<N>& complex() const { return cx_; }
    const Grid<N>& grid() const { return cx_.grid(); }
    const GridPtr<N>& grid_ptr() const { return cx_.grid_ptr(); }
    const ProblemSpec<N>& spec() const { return spec_; }
    std::size_t cell_count() const { return cx_.size(); }
    std::size_t free_count() const { return free_nodes_.size(); }
    const std::vector<std::size_t>& free_nodes() const { return free_nodes_; }
    long free_index(std::size_t node) const { return free_index_[node]; }
    const Incidence& incidence(std::size_t node) const { return incidence_[node]; }
    const std::vector<double>& boundary_values() const { return boundary_; }
    const Matrix<N>& a_plus(std::size_t c) const { return a_plus_[c]; }
    const Matrix<N>& a_minus(std::size_t c) const { return a_minus_[c]; }
    double weight(std::size_t c) const { return weight_[c]; }
    double q(std::size_t c) const { return q_[c]; }

    double cell_value(std::size_t c, std::span<const double> u) const { return cx_.cell_value(cx_.cells()[c], u); }

    /// Sharp contribution of one cell to J.
    double cell_energy(std::size_t c, std::span<const double> u) const
    {
        const auto& cell = cx_.cells()[c];
        const bool plus = cx_.cell_value(cell, u) > 0.0;
        const auto& A = plus ? a_plus_[c] : a_minus_[c];
        const double lam = plus ? spec_.phases.lambda_plus : spec_.phases.lambda_minus;
        return weight_[c] * (cx_.dirichlet_density(cell, u, A) + q_[c] * lam);
    }

    double energy(std::span<const double> u) const
    {
        double total = 0.0;
        for (std::size_t c = 0; c < cx_.size(); ++c) total += cell_energy(c, u);
        if (!std::isfinite(total)) throw NonFiniteError("energy is not finite");
        return total;
    }

    /// Cell phases (true = positive) of a field.
    std::vector<char> phases(std::span<const double> u) const
    {
        std::vector<char> p(cx_.size());
        for (std::size_t c = 0; c < cx_.size(); ++c) p[c] = cell_value(c, u) > 0.0;
        return p;
    }

    /// y += factor * grad_u (sum_c w_c D_c(u; B_c)) for per-cell matrices B_c
    /// chosen by `select(c)`. The gradient of u^T K u is 2 K u.
    template <class Select>
    void add_dirichlet_gradient(std::span<const double> u, std::span<double> y, double factor, Select select) const
    {
        const double inv_h = 1.0 / grid().spacing();
        for (std::size_t c = 0; c < cx_.size(); ++c) {
            const auto& cell = cx_.cells()[c];
            if (cell.valid_count == 0) continue;
            const Matrix<N>& B = select(c);
            const double s = factor * 2.0 * weight_[c] / cell.valid_count;
            for (int k = 0; k < corner_count; ++k) {
                if (!(cell.valid & (1u << k))) continue;
                const Point<N> g = cx_.corner_gradient(cell, k, u);
                const Point<N> t = (s * inv_h) * (B * g);
                for (int d = 0; d < N; ++d) {
                    const int bit = 1 << d;
                    y[static_cast<std::size_t>(cell.node[k | bit])] += t[d];
                    y[static_cast<std::size_t>(cell.node[k & ~bit])] -= t[d];
                }
            }
        }
    }

    /// Sparse matrix K_ff of the quadratic form sum_c w_c D_c(u; B_c) restricted
    /// to free nodes (energy = u^T K u).
    template <class Select>
    Eigen::SparseMatrix<double> assemble(Select select) const
    {
        return assemble_quadratic(
            cx_, free_index_, free_count(), [&](std::size_t c) { return weight_[c]; }, select);
    }

private:
    CellComplex<N> cx_;
    ProblemSpec<N> spec_;
    std::vector<Matrix<N>> a_plus_;
    std::vector<Matrix<N>> a_minus_;
    std::vector<double> q_;
    std::vector<double> weight_;
    std::vector<long> free_index_;
    std::vector<std::size_t> free_nodes_;
    std::vector<Incidence> incidence_;
    std::vector<double> boundary_;
};

/// Sparse Cholesky factorization of an SPD matrix. Uses CHOLMOD's supernodal
/// factorization when built with FBTRANS_WITH_CHOLMOD.
class CholeskySolver {
public:
    CholeskySolver() = default;
    explicit CholeskySolver(const Eigen::SparseMatrix<double>& K) { factorize(K); }

    /// Numeric factorization; the symbolic analysis is kept from the first call,
    /// so later matrices must share its sparsity pattern.
    void factorize(const Eigen::SparseMatrix<double>& K)
    {
        if (!analyzed_) {
            llt_.analyzePattern(K);
            analyzed_ = true;
        }
        llt_.factorize(K);
        if (llt_.info() != Eigen::Success) throw SingularSystemError("matrix is not positive definite");
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return llt_.solve(b); }

private:
#ifdef FBTRANS_WITH_CHOLMOD
    Eigen::CholmodSupernodalLLT<Eigen::SparseMatrix<double>, Eigen::Lower> llt_;
#else
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
#endif
    bool analyzed_ = false;
};

/// Preconditioned conjugate gradients for an SPD operator.
/// Returns the achieved relative residual.
template <class Apply, class Precondition>
double pcg(Apply apply, Precondition precondition, const Eigen::VectorXd& b, Eigen::VectorXd& x, double tol,
           int max_iter)
{
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        x.setZero();
        return 0.0;
    }
    Eigen::VectorXd r = b - apply(x);
    double rel = r.norm() / bnorm;
    if (rel <= tol) return rel;
    Eigen::VectorXd z = precondition(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd Ap = apply(p);
        const double pAp = p.dot(Ap);
        if (!(pAp > 0.0)) break;
        const double alpha = rz / pAp;
        x += alpha * p;
        r -= alpha * Ap;
        rel = r.norm() / bnorm;
        if (rel <= tol) break;
        z = precondition(r);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    return rel;
}

}  // namespace fbtrans
