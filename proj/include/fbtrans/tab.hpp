#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "energy.hpp"

namespace fbtrans {

namespace detail {

inline void check_tab_factors(double a, double b)
{
    require(a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b), "T transform factors must be positive");
}

}  // namespace detail

/// T_{a,b}(v) = a v^+ - b v^- at one value. Zero maps to zero.
inline double tab(double v, double a, double b)
{
    return v > 0.0 ? a * v : (v < 0.0 ? b * v : 0.0);
}

inline std::vector<double> apply_tab(std::span<const double> v, double a, double b)
{
    detail::check_tab_factors(a, b);
    std::vector<double> w(v.size());
    std::transform(v.begin(), v.end(), w.begin(), [=](double x) { return tab(x, a, b); });
    return w;
}

/// Inverse transform. Each branch divides by its factor, which is exact for
/// power-of-two factors and within one rounding otherwise.
inline std::vector<double> invert_tab(std::span<const double> w, double a, double b)
{
    detail::check_tab_factors(a, b);
    std::vector<double> v(w.size());
    std::transform(w.begin(), w.end(), v.begin(),
                   [=](double x) { return x > 0.0 ? x / a : (x < 0.0 ? x / b : 0.0); });
    return v;
}

template <int N>
GridSolution<N> apply_tab(const GridSolution<N>& u, double a, double b)
{
    return GridSolution<N>(u.grid, apply_tab(u.view(), a, b));
}

template <int N>
GridSolution<N> invert_tab(const GridSolution<N>& u, double a, double b)
{
    return GridSolution<N>(u.grid, invert_tab(u.view(), a, b));
}

}  // namespace fbtrans
