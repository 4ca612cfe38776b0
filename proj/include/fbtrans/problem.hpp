#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "geometry.hpp"
#include "types.hpp"

namespace fbtrans {

// ---------------------------------------------------------------------------
// Coefficient families. All evaluators are closed-form so that rescaling only
// multiplies the argument; no interpolation is ever needed.
// ---------------------------------------------------------------------------

enum class MatrixFamily { constant, diagonal, affine, holder_trig };

/// Matrix coefficient x -> A(scale * x).
///
///   constant     base * Id
///   diagonal     diag(diagonal)
///   affine       (base + slope . y) * Id
///   holder_trig  base * Id + amplitude |y|^exponent S(y),
///                S_ij = cos(frequency (y_i + y_j) + i + j) / N
///
/// The holder_trig perturbation vanishes at the origin, so A(0) = base * Id.
template <int N>
struct EllipticField {
    MatrixFamily family = MatrixFamily::constant;
    double base = 1.0;
    std::array<double, 3> diagonal{1.0, 1.0, 1.0};
    std::array<double, 3> slope{0.0, 0.0, 0.0};
    double amplitude = 0.0;
    double exponent = 0.5;
    double frequency = 1.0;
    double scale = 1.0;

    Matrix<N> operator()(const Point<N>& x) const
    {
        const Point<N> y = scale * x;
        Matrix<N> A = Matrix<N>::Zero();
        switch (family) {
        case MatrixFamily::constant: A.diagonal().setConstant(base); break;
        case MatrixFamily::diagonal:
            for (int d = 0; d < N; ++d) A(d, d) = diagonal[d];
            break;
        case MatrixFamily::affine: {
            double s = base;
            for (int d = 0; d < N; ++d) s += slope[d] * y[d];
            A.diagonal().setConstant(s);
            break;
        }
        case MatrixFamily::holder_trig: {
            A.diagonal().setConstant(base);
            const double r = y.norm();
            if (r > 0.0 && amplitude != 0.0) {
                const double f = amplitude * std::pow(r, exponent) / N;
                for (int i = 0; i < N; ++i)
                    for (int j = i; j < N; ++j) {
                        const double v = f * std::cos(frequency * (y[i] + y[j]) + i + j);
                        A(i, j) += v;
                        if (i != j) A(j, i) += v;
                    }
            }
            break;
        }
        }
        return A;
    }

    bool operator==(const EllipticField&) const = default;
};

enum class WeightFamily { constant, affine, trig };

/// Scalar weight Q(scale * x).
///   constant  base;  affine  base + slope . y;  trig  base (1 + amplitude sin(frequency y_0))
template <int N>
struct WeightField {
    WeightFamily family = WeightFamily::constant;
    double base = 1.0;
    std::array<double, 3> slope{0.0, 0.0, 0.0};
    double amplitude = 0.0;
    double frequency = 1.0;
    double scale = 1.0;
    /// Samples (separation, oscillation bound) of the modulus of continuity.
    /// Stored and serialized; not enforced beyond the q-bounds.
    std::vector<std::pair<double, double>> modulus;

    double operator()(const Point<N>& x) const
    {
        const Point<N> y = scale * x;
        switch (family) {
        case WeightFamily::constant: return base;
        case WeightFamily::affine: {
            double s = base;
            for (int d = 0; d < N; ++d) s += slope[d] * y[d];
            return s;
        }
        case WeightFamily::trig: return base * (1.0 + amplitude * std::sin(frequency * y[0]));
        }
        return base;
    }

    bool operator==(const WeightField&) const = default;
};

enum class BoundaryFamily { zero, linear, signed_power, positive_power, radial_power };

/// Boundary data phi(scale * x) / scale.
///   zero            0
///   linear          linear . y
///   signed_power    c sgn(y_0) |y_0|^p + kappa y_N
///   positive_power  c (y_0^+)^p + kappa y_N
///   radial_power    c |y'|^p + kappa y_N
/// where c = coefficient, p = power, kappa = normal_slope.
template <int N>
struct BoundaryData {
    BoundaryFamily family = BoundaryFamily::zero;
    std::array<double, 3> linear{0.0, 0.0, 0.0};
    double coefficient = 1.0;
    double power = 2.0;
    double normal_slope = 0.0;
    double scale = 1.0;

    double operator()(const Point<N>& x) const
    {
        const Point<N> y = scale * x;
        double v = 0.0;
        switch (family) {
        case BoundaryFamily::zero: return 0.0;
        case BoundaryFamily::linear:
            for (int d = 0; d < N; ++d) v += linear[d] * y[d];
            return v / scale;
        case BoundaryFamily::signed_power:
            v = coefficient * std::copysign(std::pow(std::abs(y[0]), power), y[0]);
            break;
        case BoundaryFamily::positive_power:
            v = y[0] > 0.0 ? coefficient * std::pow(y[0], power) : 0.0;
            break;
        case BoundaryFamily::radial_power:
            v = coefficient * std::pow(tangential_norm<N>(y), power);
            break;
        }
        return (v + normal_slope * y[N - 1]) / scale;
    }

    bool operator==(const BoundaryData&) const = default;
};

/// Lambda(s) weights: lambda_plus on {s > 0}, lambda_minus on {s <= 0}.
struct PhaseConstants {
    double lambda_plus = 2.0;
    double lambda_minus = 1.0;

    bool operator==(const PhaseConstants&) const = default;
};

inline double lambda_of(double s, const PhaseConstants& phases)
{
    return s > 0.0 ? phases.lambda_plus : phases.lambda_minus;
}

/// Parameters of the admissible class (mu, M, alpha, q) together with the
/// Hoelder seminorm bounds of A and grad phi and the current blow-up scale.
struct ClassParameters {
    double mu = 0.5;
    double M = 4.0;
    double alpha = 0.5;
    double q = 0.5;
    double holder_bound_A = 4.0;
    double holder_bound_grad_phi = 4.0;
    double scale = 1.0;

    bool operator==(const ClassParameters&) const = default;
};

template <int N>
struct ProblemSpec {
    std::string name = "unnamed";
    EllipticField<N> a_plus;
    EllipticField<N> a_minus;
    WeightField<N> weight;
    PhaseConstants phases;
    BoundaryData<N> boundary;
    ClassParameters params;
    double density_floor = 0.1;
    double density_radius = 0.5;

    bool operator==(const ProblemSpec&) const = default;

    /// A(x, s): A_plus where s > 0, A_minus otherwise.
    Matrix<N> coefficient(const Point<N>& x, double s) const { return s > 0.0 ? a_plus(x) : a_minus(x); }
};

/// Coefficients A^r(x) = A(rx), Q^r(x) = Q(rx), boundary data phi_r(x) = phi(rx)/r.
template <int N>
ProblemSpec<N> rescale_spec(const ProblemSpec<N>& spec, double r)
{
    require(r > 0.0 && r <= 1.0, "rescale factor must lie in (0, 1]");
    ProblemSpec<N> out = spec;
    out.a_plus.scale *= r;
    out.a_minus.scale *= r;
    out.weight.scale *= r;
    out.boundary.scale *= r;
    const double shrink = std::pow(r, spec.params.alpha);
    out.params.holder_bound_A *= shrink;
    out.params.holder_bound_grad_phi *= shrink;
    out.params.scale *= r;
    return out;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool pass = true;
    /// Largest violation ratio observed (<= 1 means satisfied) or raw witness value.
    double worst = 0.0;
    std::optional<std::vector<double>> witness;
    std::string message;
};

struct ValidationReport {
    std::vector<CheckResult> checks;

    bool all_pass() const
    {
        return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
    }

    const CheckResult& check(const std::string& name) const
    {
        for (const auto& c : checks)
            if (c.name == name) return c;
        throw std::out_of_range("no check named " + name);
    }
};

inline nlohmann::json to_json(const ValidationReport& report)
{
    nlohmann::json j;
    j["pass"] = report.all_pass();
    for (const auto& c : report.checks) {
        nlohmann::json jc{{"name", c.name}, {"pass", c.pass}, {"worst", c.worst}, {"message", c.message}};
        if (c.witness) jc["witness"] = *c.witness;
        j["checks"].push_back(jc);
    }
    return j;
}

namespace detail {

template <int N>
std::vector<double> as_vector(const Point<N>& x)
{
    return std::vector<double>(x.data(), x.data() + N);
}

/// Records the node with the largest violation ratio into a CheckResult.
template <int N>
struct WorstTracker {
    CheckResult& result;
    double ratio = -std::numeric_limits<double>::infinity();

    void offer(double r, const Point<N>& x, const std::string& what)
    {
        if (r > ratio) {
            ratio = r;
            result.worst = r;
            if (r > 1.0) {
                result.pass = false;
                result.witness = as_vector<N>(x);
                result.message = what;
            }
        }
    }
};

/// Max over node pairs (x, x + 2^k h e_d) of |A(x) - A(y)|_max / |x - y|^alpha.
template <int N>
double sampled_holder_seminorm(const EllipticField<N>& A, const Grid<N>& grid, double alpha)
{
    double best = 0.0;
    const double h = grid.spacing();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto Ai = A(grid.node(i));
        for (int d = 0; d < N; ++d) {
            for (int step = 1; step <= 64; step *= 4) {
                LatticeIndex<N> nb = grid.index(i);
                nb[d] += step;
                const long j = grid.find(nb);
                if (j < 0) break;
                const double diff = (Ai - A(grid.node(static_cast<std::size_t>(j)))).cwiseAbs().maxCoeff();
                best = std::max(best, diff / std::pow(step * h, alpha));
            }
        }
    }
    return best;
}

}  // namespace detail

/// Checks the structural conditions M1, M2, M3 and DPT on the grid nodes.
/// Minimality (M4) and the density condition (M6) are verified by the solver
/// and the free-boundary analysis respectively.
template <int N>
ValidationReport validate_spec(const ProblemSpec<N>& spec, const Grid<N>& grid)
{
    ValidationReport report;
    const auto& p = spec.params;
    const double h = grid.spacing();

    // -- class parameters
    {
        CheckResult c;
        c.name = "params";
        c.worst = 0.0;
        auto fail = [&](const std::string& m) {
            c.pass = false;
            c.message = m;
        };
        if (!(p.mu > 0.0 && p.mu <= 1.0)) fail("mu must lie in (0, 1]");
        if (!(p.q > 0.0 && p.q < 1.0)) fail("q must lie in (0, 1)");
        if (!(p.alpha > 0.0 && p.alpha < 1.0)) fail("alpha must lie in (0, 1)");
        if (!(spec.density_floor > 0.0 && spec.density_floor < 1.0)) fail("density floor D must lie in (0, 1)");
        if (!(spec.density_radius > 0.0)) fail("density radius r0 must be positive");
        report.checks.push_back(c);
    }

    // -- M1: sup bounds, Hoelder seminorm of A, gradient of phi, growth of phi on the flat boundary
    {
        CheckResult c;
        c.name = "M1";
        detail::WorstTracker<N> worst{c};
        const double growth_bound = p.M * std::pow(p.scale, p.alpha);
        const double eps = 0.25 * h;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const auto& x = grid.node(i);
            for (const auto* A : {&spec.a_plus, &spec.a_minus}) {
                const double sup = (*A)(x).cwiseAbs().maxCoeff();
                worst.offer(sup / p.M, x, "(M1) coefficient entry exceeds M");
            }
            Point<N> grad;
            for (int d = 0; d < N; ++d) {
                Point<N> e = Point<N>::Zero();
                e[d] = eps;
                grad[d] = (spec.boundary(x + e) - spec.boundary(x - e)) / (2.0 * eps);
            }
            worst.offer(grad.norm() / p.M, x, "(M1) |grad phi| exceeds M");
            if (grid.index(i)[N - 1] == 0) {
                const double r = tangential_norm<N>(x);
                const double phi = std::abs(spec.boundary(x));
                const double bound = growth_bound * std::pow(r, 1.0 + p.alpha);
                const double ratio = phi == 0.0 ? 0.0 : (bound > 0.0 ? phi / bound : std::numeric_limits<double>::infinity());
                worst.offer(ratio, x, "(M1) |phi(x')| exceeds M |x'|^(1+alpha)");
            }
        }
        for (const auto* A : {&spec.a_plus, &spec.a_minus}) {
            const double semi = detail::sampled_holder_seminorm(*A, grid, p.alpha);
            worst.offer(p.holder_bound_A > 0.0 ? semi / p.holder_bound_A : std::numeric_limits<double>::infinity(),
                        Point<N>::Zero(), "(M1) Hoelder seminorm of A exceeds its bound");
        }
        report.checks.push_back(c);
    }

    // -- M2: uniform ellipticity, A(0) = a Id
    {
        CheckResult c;
        c.name = "M2";
        detail::WorstTracker<N> worst{c};
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const auto& x = grid.node(i);
            for (const auto* A : {&spec.a_plus, &spec.a_minus}) {
                Eigen::SelfAdjointEigenSolver<Matrix<N>> eig((*A)(x), Eigen::EigenvaluesOnly);
                const double lo = eig.eigenvalues().minCoeff();
                const double hi = eig.eigenvalues().maxCoeff();
                worst.offer(lo > 0.0 ? p.mu / lo : std::numeric_limits<double>::infinity(), x,
                            "(M2) smallest eigenvalue " + format_double(lo) + " below mu");
                worst.offer(hi * p.mu, x, "(M2) largest eigenvalue " + format_double(hi) + " above 1/mu");
            }
        }
        for (const auto* A : {&spec.a_plus, &spec.a_minus}) {
            const Matrix<N> A0 = (*A)(Point<N>::Zero());
            const double a = A0(0, 0);
            const double off = (A0 - a * Matrix<N>::Identity()).cwiseAbs().maxCoeff();
            if (off > 1e-12 * std::max(1.0, std::abs(a))) {
                c.pass = false;
                c.message = "(M2) A(0) is not a multiple of the identity";
                c.witness = std::vector<double>(N, 0.0);
            }
            if (a < p.mu || a > 1.0 / p.mu) {
                c.pass = false;
                c.message = "(M2) A(0) = a Id with a outside [mu, 1/mu]";
                c.witness = std::vector<double>(N, 0.0);
            }
        }
        report.checks.push_back(c);
    }

    // -- M3: phase constants and bounds on Q
    {
        CheckResult c;
        c.name = "M3";
        detail::WorstTracker<N> worst{c};
        const auto& ph = spec.phases;
        if (!(ph.lambda_minus > 0.0 && ph.lambda_minus < ph.lambda_plus)) {
            c.pass = false;
            c.worst = ph.lambda_minus / ph.lambda_plus;
            c.message = "(M3) requires 0 < lambda_minus < lambda_plus";
        }
        else {
            for (std::size_t i = 0; i < grid.size(); ++i) {
                const auto& x = grid.node(i);
                const double Q = spec.weight(x);
                worst.offer(Q > 0.0 ? p.q / Q : std::numeric_limits<double>::infinity(), x, "(M3) Q below q");
                worst.offer(Q * p.q, x, "(M3) Q above 1/q");
            }
        }
        report.checks.push_back(c);
    }

    // -- DPT: where phi vanishes on the flat boundary its tangential gradient vanishes
    {
        CheckResult c;
        c.name = "DPT";
        c.worst = 0.0;
        const double zero_tol = 1e-8 * p.M;
        const double grad_tol = 10.0 * h;
        std::vector<double> phi(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) phi[i] = spec.boundary(grid.node(i));
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (grid.index(i)[N - 1] != 0 || !has_lateral_neighbors(grid, i)) continue;
            if (std::abs(phi[i]) > zero_tol) continue;
            const double g = tangential_gradient(grid, std::span<const double>(phi), i).norm();
            if (g > c.worst) {
                c.worst = g;
                if (g > grad_tol) {
                    c.pass = false;
                    c.witness = detail::as_vector<N>(grid.node(i));
                    c.message = "(DPT) phi vanishes with tangential slope " + format_double(g);
                }
            }
        }
        report.checks.push_back(c);
    }
    return report;
}

}  // namespace fbtrans
