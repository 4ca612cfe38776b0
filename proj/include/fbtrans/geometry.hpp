#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "types.hpp"

namespace fbtrans {

enum class NodeClass : std::uint8_t { interior, flat_boundary, curved_boundary };

enum class GridKind : std::uint8_t { half_ball, slab };

inline const char* to_string(NodeClass c)
{
    switch (c) {
    case NodeClass::interior: return "interior";
    case NodeClass::flat_boundary: return "flat";
    case NodeClass::curved_boundary: return "curved";
    }
    return "?";
}

inline NodeClass node_class_from_string(const std::string& s)
{
    if (s == "interior") return NodeClass::interior;
    if (s == "flat") return NodeClass::flat_boundary;
    if (s == "curved") return NodeClass::curved_boundary;
    throw std::runtime_error("unknown node class tag '" + s + "'");
}

inline const char* to_string(GridKind k) { return k == GridKind::half_ball ? "half_ball" : "slab"; }

/// Axis-aligned lattice discretization of a half ball B_R^+ (or of a slab used
/// for one-dimensional cross-checks).
///
/// Nodes sit at index * h. Every non-interior node carries Dirichlet data:
/// flat_boundary nodes lie on {x_N = 0}; curved_boundary nodes are the lattice
/// nodes closest to the sphere |x| = R, i.e. those missing at least one axis
/// neighbour inside the closed ball. For a slab the curved class tags the top
/// face x_N = depth and the lateral faces are free (natural boundary).
///
/// A grid is immutable once built and may be shared between threads.
template <int N>
class Grid {
    static_assert(N == 2 || N == 3, "only N = 2 and N = 3 are supported");

public:
    GridKind kind() const { return kind_; }
    double radius() const { return radius_; }
    double spacing() const { return h_; }
    double width() const { return width_; }
    double depth() const { return depth_; }
    std::size_t size() const { return nodes_.size(); }

    const Point<N>& node(std::size_t i) const { return nodes_[i]; }
    const LatticeIndex<N>& index(std::size_t i) const { return index_[i]; }
    NodeClass node_class(std::size_t i) const { return class_[i]; }
    bool is_fixed(std::size_t i) const { return class_[i] != NodeClass::interior; }

    const LatticeIndex<N>& lower() const { return lo_; }
    const LatticeIndex<N>& upper() const { return hi_; }

    /// Node id at a lattice index, or -1 when the index is not part of the grid.
    long find(const LatticeIndex<N>& idx) const
    {
        std::size_t lin = 0;
        std::size_t stride = 1;
        for (int d = 0; d < N; ++d) {
            if (idx[d] < lo_[d] || idx[d] > hi_[d]) return -1;
            lin += static_cast<std::size_t>(idx[d] - lo_[d]) * stride;
            stride *= static_cast<std::size_t>(hi_[d] - lo_[d] + 1);
        }
        return lookup_[lin];
    }

    Point<N> position(const LatticeIndex<N>& idx) const
    {
        Point<N> x;
        for (int d = 0; d < N; ++d) x[d] = static_cast<double>(idx[d]) * h_;
        return x;
    }

    /// Largest |x| over all nodes.
    double extent() const { return extent_; }

private:
    template <int M>
    friend std::shared_ptr<const Grid<M>> build_half_ball_grid(double R, double h);
    template <int M>
    friend std::shared_ptr<const Grid<M>> build_slab_grid(double width, double depth, double h);

    Grid() = default;

    void allocate_box()
    {
        std::size_t total = 1;
        for (int d = 0; d < N; ++d) total *= static_cast<std::size_t>(hi_[d] - lo_[d] + 1);
        lookup_.assign(total, -1);
    }

    template <class Predicate>
    void populate(Predicate inside)
    {
        allocate_box();
        LatticeIndex<N> idx = lo_;
        for (std::size_t lin = 0; lin < lookup_.size(); ++lin) {
            if (inside(idx)) {
                lookup_[lin] = static_cast<long>(index_.size());
                index_.push_back(idx);
                nodes_.push_back(position(idx));
            }
            for (int d = 0; d < N; ++d) {
                if (++idx[d] <= hi_[d]) break;
                idx[d] = lo_[d];
            }
        }
        extent_ = 0.0;
        for (const auto& x : nodes_) extent_ = std::max(extent_, x.norm());
    }

    GridKind kind_ = GridKind::half_ball;
    double radius_ = 0.0;
    double h_ = 0.0;
    double width_ = 0.0;
    double depth_ = 0.0;
    double extent_ = 0.0;
    LatticeIndex<N> lo_{};
    LatticeIndex<N> hi_{};
    std::vector<long> lookup_;
    std::vector<LatticeIndex<N>> index_;
    std::vector<Point<N>> nodes_;
    std::vector<NodeClass> class_;
};

template <int N>
using GridPtr = std::shared_ptr<const Grid<N>>;

/// Lattice of spacing h intersected with the closed half ball of radius R.
template <int N>
std::shared_ptr<const Grid<N>> build_half_ball_grid(double R, double h)
{
    require(R > 0.0 && std::isfinite(R), "radius must be positive");
    require(h > 0.0 && std::isfinite(h), "spacing must be positive");
    require(h <= R / 8.0 * (1.0 + 1e-12), "spacing too coarse: need h <= R/8");

    auto g = std::shared_ptr<Grid<N>>(new Grid<N>());
    g->kind_ = GridKind::half_ball;
    g->radius_ = R;
    g->h_ = h;
    const double ratio = R / h;
    const int n = static_cast<int>(std::floor(ratio + 1e-9));
    const double bound = ratio * ratio * (1.0 + 1e-12);
    for (int d = 0; d < N - 1; ++d) {
        g->lo_[d] = -n;
        g->hi_[d] = n;
    }
    g->lo_[N - 1] = 0;
    g->hi_[N - 1] = n;

    auto norm2 = [](const LatticeIndex<N>& idx) {
        double s = 0.0;
        for (int d = 0; d < N; ++d) s += static_cast<double>(idx[d]) * idx[d];
        return s;
    };
    g->populate([&](const LatticeIndex<N>& idx) { return norm2(idx) <= bound; });

    g->class_.resize(g->index_.size());
    for (std::size_t i = 0; i < g->index_.size(); ++i) {
        const auto& idx = g->index_[i];
        bool missing = false;
        for (int d = 0; d < N && !missing; ++d) {
            for (int s : {-1, 1}) {
                if (d == N - 1 && s < 0 && idx[d] == 0) continue;  // below the flat boundary
                LatticeIndex<N> nb = idx;
                nb[d] += s;
                if (g->find(nb) < 0) {
                    missing = true;
                    break;
                }
            }
        }
        if (missing)
            g->class_[i] = NodeClass::curved_boundary;
        else if (idx[N - 1] == 0)
            g->class_[i] = NodeClass::flat_boundary;
        else
            g->class_[i] = NodeClass::interior;
    }
    return g;
}

/// Box [-width/2, width/2]^{N-1} x [0, depth]: Dirichlet on the bottom (flat)
/// and top faces, natural boundary on the lateral faces.
template <int N>
std::shared_ptr<const Grid<N>> build_slab_grid(double width, double depth, double h)
{
    require(width > 0.0 && depth > 0.0 && h > 0.0, "slab extents and spacing must be positive");
    const double half_cells = width / (2.0 * h);
    const double depth_cells = depth / h;
    const int m = static_cast<int>(std::lround(half_cells));
    const int n = static_cast<int>(std::lround(depth_cells));
    require(m >= 1 && std::abs(half_cells - m) < 1e-6, "slab width must be an even multiple of h");
    require(n >= 8 && std::abs(depth_cells - n) < 1e-6, "slab depth must be a multiple of h with >= 8 cells");

    auto g = std::shared_ptr<Grid<N>>(new Grid<N>());
    g->kind_ = GridKind::slab;
    g->h_ = h;
    g->width_ = 2.0 * m * h;
    g->depth_ = n * h;
    for (int d = 0; d < N - 1; ++d) {
        g->lo_[d] = -m;
        g->hi_[d] = m;
    }
    g->lo_[N - 1] = 0;
    g->hi_[N - 1] = n;
    g->populate([](const LatticeIndex<N>&) { return true; });
    g->radius_ = g->extent_;
    g->class_.resize(g->index_.size());
    for (std::size_t i = 0; i < g->index_.size(); ++i) {
        const int k = g->index_[i][N - 1];
        g->class_[i] = k == 0 ? NodeClass::flat_boundary
                              : (k == n ? NodeClass::curved_boundary : NodeClass::interior);
    }
    return g;
}

/// Cone K_eps = { x : x_N >= eps |x'| }.
struct Cone {
    double aperture;
};

template <int N>
bool in_cone(const Point<N>& x, const Cone& cone)
{
    return x[N - 1] >= cone.aperture * tangential_norm<N>(x);
}

/// Central-difference tangential gradient of nodal values at a node on {x_N = 0}.
template <int N>
Eigen::Matrix<double, N - 1, 1> tangential_gradient(const Grid<N>& grid, std::span<const double> values,
                                                    std::size_t node)
{
    require(values.size() == grid.size(), "one value per grid node expected");
    const auto& idx = grid.index(node);
    require(idx[N - 1] == 0, "tangential gradient is taken on the flat boundary");
    Eigen::Matrix<double, N - 1, 1> grad;
    for (int d = 0; d < N - 1; ++d) {
        LatticeIndex<N> plus = idx, minus = idx;
        ++plus[d];
        --minus[d];
        const long ip = grid.find(plus);
        const long im = grid.find(minus);
        if (ip < 0 || im < 0)
            throw MissingNeighborError("flat node has no lateral neighbour along axis " + std::to_string(d));
        grad[d] = (values[static_cast<std::size_t>(ip)] - values[static_cast<std::size_t>(im)]) /
                  (2.0 * grid.spacing());
    }
    return grad;
}

/// True when every lateral neighbour needed by tangential_gradient exists.
template <int N>
bool has_lateral_neighbors(const Grid<N>& grid, std::size_t node)
{
    const auto& idx = grid.index(node);
    for (int d = 0; d < N - 1; ++d) {
        for (int s : {-1, 1}) {
            LatticeIndex<N> nb = idx;
            nb[d] += s;
            if (grid.find(nb) < 0) return false;
        }
    }
    return true;
}

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <int N>
nlohmann::json grid_header(const Grid<N>& grid)
{
    nlohmann::json j;
    j["kind"] = to_string(grid.kind());
    j["R"] = grid.radius();
    j["h"] = grid.spacing();
    j["N"] = N;
    j["nodes"] = grid.size();
    if (grid.kind() == GridKind::slab) {
        j["width"] = grid.width();
        j["depth"] = grid.depth();
    }
    return j;
}

/// Rebuilds a grid from its JSON header.
template <int N>
std::shared_ptr<const Grid<N>> grid_from_header(const nlohmann::json& j)
{
    if (j.at("N").get<int>() != N) throw std::runtime_error("grid header dimension mismatch");
    std::shared_ptr<const Grid<N>> g;
    if (j.at("kind").get<std::string>() == "slab")
        g = build_slab_grid<N>(j.at("width").get<double>(), j.at("depth").get<double>(), j.at("h").get<double>());
    else
        g = build_half_ball_grid<N>(j.at("R").get<double>(), j.at("h").get<double>());
    if (g->size() != j.at("nodes").get<std::size_t>()) throw std::runtime_error("grid header node count mismatch");
    return g;
}

/// JSON header line followed by CSV rows "x0,...,x{N-1},class".
template <int N>
void write_grid(std::ostream& os, const Grid<N>& grid)
{
    os << grid_header(grid).dump() << '\n';
    for (int d = 0; d < N; ++d) os << 'x' << d << ',';
    os << "class\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (int d = 0; d < N; ++d) os << format_double(grid.node(i)[d]) << ',';
        os << to_string(grid.node_class(i)) << '\n';
    }
}

template <int N>
std::shared_ptr<const Grid<N>> read_grid(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty grid stream");
    auto g = grid_from_header<N>(nlohmann::json::parse(line));
    std::getline(is, line);  // column names
    for (std::size_t i = 0; i < g->size(); ++i) {
        if (!std::getline(is, line)) throw std::runtime_error("grid body truncated");
        std::stringstream ss(line);
        std::string cell;
        for (int d = 0; d < N; ++d) {
            std::getline(ss, cell, ',');
            if (std::stod(cell) != g->node(i)[d]) throw std::runtime_error("grid body disagrees with header");
        }
        std::getline(ss, cell);
        if (node_class_from_string(cell) != g->node_class(i))
            throw std::runtime_error("grid body class tag disagrees with header");
    }
    return g;
}

}  // namespace fbtrans
