#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "solver.hpp"
#include "spec_io.hpp"

namespace fbtrans {

/// Raised for snapshot files that cannot be read or are inconsistent.
class SnapshotError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A snapshot is one JSON metadata line followed by CSV rows
/// "x0,...,x{N-1},value" with values printed to 17 significant digits.
template <int N>
struct Snapshot {
    nlohmann::json meta;
    GridSolution<N> solution;
};

/// Metadata for a finished solve: spec, its hash, grid header, options,
/// energies, and residuals of both phases.
template <int N>
nlohmann::json solve_metadata(const ProblemSpec<N>& spec, const SolveOptions& opts, const SolveResult<N>& res)
{
    const auto& u = res.solution;
    const auto pe = phase_energies(u, spec);
    nlohmann::json m;
    m["format"] = "fbtrans-snapshot";
    m["version"] = 1;
    m["spec_hash"] = spec_hash(spec);
    m["spec"] = spec_to_json(spec);
    m["grid"] = grid_header(*u.grid);
    m["options"] = to_json(opts);
    m["result"] = to_json(res);
    m["energies"] = to_json(pe, u.grid->spacing(), u.grid->radius());
    m["residuals"] = {{"linear", res.linear_residual},
                      {"boundary", res.boundary_error},
                      {"pde_plus", to_json(pde_residual(u, spec, Phase::positive))},
                      {"pde_minus", to_json(pde_residual(u, spec, Phase::negative))}};
    return m;
}

template <int N>
void write_snapshot(std::ostream& os, const GridSolution<N>& u, nlohmann::json meta)
{
    meta["grid"] = grid_header(*u.grid);
    if (!meta.contains("format")) meta["format"] = "fbtrans-snapshot";
    os << meta.dump() << '\n';
    for (int d = 0; d < N; ++d) os << 'x' << d << ',';
    os << "value\n";
    const auto& g = *u.grid;
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (int d = 0; d < N; ++d) os << format_double(g.node(i)[d]) << ',';
        os << format_double(u.values[i]) << '\n';
    }
}

template <int N>
void write_snapshot(const std::string& path, const GridSolution<N>& u, const nlohmann::json& meta)
{
    std::ofstream out(path);
    if (!out) throw SnapshotError("cannot write " + path);
    write_snapshot(out, u, meta);
    if (!out) throw SnapshotError("write failed for " + path);
}

inline nlohmann::json read_snapshot_meta(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line)) throw SnapshotError("empty snapshot");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(line);
    }
    catch (const nlohmann::json::parse_error& e) {
        throw SnapshotError(std::string("bad snapshot header: ") + e.what());
    }
    if (meta.value("format", "") != "fbtrans-snapshot" || !meta.contains("grid"))
        throw SnapshotError("not a snapshot file");
    return meta;
}

/// Dimension recorded in a snapshot file header.
inline int snapshot_dimension(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw SnapshotError("cannot open " + path);
    const auto meta = read_snapshot_meta(in);
    return meta.at("grid").value("N", 0);
}

template <int N>
Snapshot<N> read_snapshot(std::istream& is)
{
    Snapshot<N> s;
    s.meta = read_snapshot_meta(is);
    GridPtr<N> g;
    try {
        g = grid_from_header<N>(s.meta.at("grid"));
    }
    catch (const std::exception& e) {
        throw SnapshotError(std::string("bad grid header: ") + e.what());
    }
    std::string line, cell;
    std::getline(is, line);
    std::vector<double> v(g->size());
    for (std::size_t i = 0; i < g->size(); ++i) {
        if (!std::getline(is, line)) throw SnapshotError("snapshot body truncated");
        std::stringstream ss(line);
        try {
            for (int d = 0; d < N; ++d) {
                std::getline(ss, cell, ',');
                if (std::stod(cell) != g->node(i)[d]) throw SnapshotError("snapshot node disagrees with grid header");
            }
            std::getline(ss, cell);
            v[i] = std::stod(cell);
        }
        catch (const std::logic_error&) {
            throw SnapshotError("unparsable snapshot row " + std::to_string(i + 2));
        }
    }
    s.solution = GridSolution<N>(std::move(g), std::move(v));
    return s;
}

template <int N>
Snapshot<N> read_snapshot(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw SnapshotError("cannot open " + path);
    return read_snapshot<N>(in);
}

}  // namespace fbtrans
