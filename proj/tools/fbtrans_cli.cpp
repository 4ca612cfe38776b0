// Batch front end: validate, solve, blowup, analyze.
// Exit codes: 0 ok, 1 failed checks, 2 unreadable or ill-formed input, 3 solver did not converge.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fbtrans/fbtrans.hpp"

namespace {

enum Exit { ok = 0, check_failed = 1, io_error = 2, not_converged = 3 };

struct Flags {
    std::string spec;
    std::string snapshot;
    std::string out;
    double grid_h = 1.0 / 64;
    double grid_R = 2.0;
    int dim = 0;
    std::string radii;
    std::string eps_list;
    double kappa = 0.5;
    double c_threshold = 0.5;
    int probes = 20;
    std::uint64_t seed = 0;
    int workers = 0;
    int max_iter = 0;
};

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<double> parse_list(const std::string& s, const char* what)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto slash = item.find('/');
        try {
            if (slash == std::string::npos)
                out.push_back(std::stod(item));
            else
                out.push_back(std::stod(item.substr(0, slash)) / std::stod(item.substr(slash + 1)));
        }
        catch (const std::logic_error&) {
            throw InputError(std::string("cannot parse ") + what + " entry '" + item + "'");
        }
    }
    return out;
}

void setup_logging()
{
    auto logger = spdlog::stderr_color_mt("fbtrans");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* lvl = std::getenv("FBTRANS_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

void emit(const nlohmann::json& j, const std::string& path)
{
    if (path.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << j.dump(2) << '\n';
}

fbtrans::SolveOptions solve_options(const Flags& f)
{
    fbtrans::SolveOptions o;
    o.seed = f.seed;
    if (f.max_iter > 0) o.max_outer = f.max_iter;
    return o;
}

int spec_dim(const Flags& f, const nlohmann::json& doc)
{
    if (!doc.is_object()) throw fbtrans::SpecFormatError("spec: expected an object");
    if (!doc.contains("dim")) return f.dim > 0 ? f.dim : 2;
    const int d = fbtrans::spec_dimension(doc);
    if (f.dim > 0 && f.dim != d) throw fbtrans::SpecFormatError("--dim disagrees with the spec's dim");
    return d;
}

template <int N>
nlohmann::json with_dim(nlohmann::json doc)
{
    doc["dim"] = N;
    return doc;
}

template <int N>
int validate(const Flags& f, const nlohmann::json& doc)
{
    const auto spec = fbtrans::spec_from_json<N>(with_dim<N>(doc));
    const auto grid = fbtrans::build_half_ball_grid<N>(f.grid_R, f.grid_h);
    const auto report = fbtrans::validate_spec(spec, *grid);
    auto j = fbtrans::to_json(report);
    j["spec"] = spec.name;
    emit(j, f.out);
    for (const auto& c : report.checks)
        if (!c.pass) spdlog::warn("{} failed: {}", c.name, c.message);
    return report.all_pass() ? ok : check_failed;
}

template <int N>
int solve(const Flags& f, const nlohmann::json& doc)
{
    if (f.out.empty()) throw InputError("solve needs --out");
    const auto spec = fbtrans::spec_from_json<N>(with_dim<N>(doc));
    const auto grid = fbtrans::build_half_ball_grid<N>(f.grid_R, f.grid_h);
    const auto report = fbtrans::validate_spec(spec, *grid);
    if (!report.all_pass()) {
        std::cout << fbtrans::to_json(report).dump(2) << '\n';
        return check_failed;
    }
    const auto opts = solve_options(f);
    spdlog::info("solving '{}' on {} nodes", spec.name, grid->size());
    const auto res = fbtrans::minimize(spec, grid, opts);
    spdlog::info("energy {} after {} rounds, converged {}", res.energy, res.outer_iterations, res.converged);
    fbtrans::write_snapshot(f.out, res.solution, fbtrans::solve_metadata(spec, opts, res));
    std::cout << fbtrans::to_json(res).dump(2) << '\n';
    return res.converged ? ok : not_converged;
}

template <int N>
int blowup(const Flags& f, const nlohmann::json& doc)
{
    if (f.out.empty()) throw InputError("blowup needs --out (a directory)");
    const auto spec = fbtrans::spec_from_json<N>(with_dim<N>(doc));
    const auto radii = f.radii.empty() ? std::vector<double>{1.0, 0.5, 0.25, 0.125} : parse_list(f.radii, "--radii");
    const auto grid = fbtrans::build_half_ball_grid<N>(f.grid_R, f.grid_h);
    const auto report = fbtrans::validate_spec(spec, *grid);
    if (!report.all_pass()) {
        std::cout << fbtrans::to_json(report).dump(2) << '\n';
        return check_failed;
    }
    std::filesystem::create_directories(f.out);
    const auto opts = solve_options(f);
    const auto recs = fbtrans::blowup_sweep(spec, radii, opts, {f.grid_R, f.grid_h, f.workers});
    nlohmann::json sweep = {{"spec_hash", fbtrans::spec_hash(spec)},
                            {"spec", fbtrans::spec_to_json(spec)},
                            {"options", fbtrans::to_json(opts)},
                            {"levels", nlohmann::json::array()}};
    std::size_t converged = 0;
    for (std::size_t k = 0; k < recs.size(); ++k) {
        const auto& rec = recs[k];
        auto entry = fbtrans::to_json(rec);
        if (rec.error.empty()) {
            const auto name = "level_" + std::to_string(k) + ".csv";
            nlohmann::json meta = {{"format", "fbtrans-snapshot"},
                                   {"version", 1},
                                   {"r", rec.r},
                                   {"spec_hash", fbtrans::spec_hash(rec.spec_r)},
                                   {"spec", fbtrans::spec_to_json(rec.spec_r)},
                                   {"options", fbtrans::to_json(opts)},
                                   {"result", {{"energy", rec.energy}, {"converged", rec.converged}}}};
            fbtrans::write_snapshot((std::filesystem::path(f.out) / name).string(), rec.solution, meta);
            entry["snapshot"] = name;
        }
        else {
            spdlog::warn("level r={} failed: {}", rec.r, rec.error);
        }
        if (rec.converged) ++converged;
        sweep["levels"].push_back(entry);
    }
    emit(sweep, (std::filesystem::path(f.out) / "sweep.json").string());
    std::cout << sweep["levels"].dump(2) << '\n';
    return 2 * converged >= recs.size() ? ok : not_converged;
}

template <int N>
int analyze(const Flags& f)
{
    fbtrans::Snapshot<N> snap;
    try {
        snap = fbtrans::read_snapshot<N>(f.snapshot);
    }
    catch (const std::exception& e) {
        throw InputError(e.what());
    }
    const auto& u = snap.solution;
    fbtrans::AnalysisOptions opts;
    if (!f.radii.empty()) opts.radii = parse_list(f.radii, "--radii");
    if (!f.eps_list.empty()) opts.eps_list = parse_list(f.eps_list, "--eps-list");
    opts.kappa = f.kappa;
    opts.c_threshold = f.c_threshold;
    opts.probes = f.probes;
    opts.seed = f.seed;
    double boundary_sup = 0.0;
    for (std::size_t i = 0; i < u.grid->size(); ++i)
        if (u.grid->is_fixed(i)) boundary_sup = std::max(boundary_sup, std::abs(u.values[i]));
    opts.vanish_tol = 1e-6 * boundary_sup;
    auto rep = fbtrans::to_json(fbtrans::analyze(u, opts));
    if (snap.meta.contains("spec_hash")) rep["spec_hash"] = snap.meta["spec_hash"];
    emit(rep, f.out);
    return ok;
}

template <int N>
int dispatch(const std::string& cmd, const Flags& f, const nlohmann::json& doc)
{
    if (cmd == "validate") return validate<N>(f, doc);
    if (cmd == "solve") return solve<N>(f, doc);
    return blowup<N>(f, doc);
}

}  // namespace

int main(int argc, char** argv)
{
    setup_logging();
    CLI::App app{"Two-phase transmission free boundary solver"};
    app.require_subcommand(1);
    Flags f;

    auto add_grid = [&](CLI::App* s) {
        s->add_option("--grid-h", f.grid_h, "lattice spacing")->check(CLI::PositiveNumber);
        s->add_option("--grid-R", f.grid_R, "half-ball radius")->check(CLI::PositiveNumber);
        s->add_option("--dim", f.dim, "dimension (2 or 3)")->check(CLI::IsMember({2, 3}));
    };
    auto* v = app.add_subcommand("validate", "check a spec against the class conditions");
    v->add_option("--spec", f.spec, "spec file")->required();
    v->add_option("--out", f.out, "report path (stdout when absent)");
    add_grid(v);

    auto* s = app.add_subcommand("solve", "minimize and write a snapshot");
    s->add_option("--spec", f.spec, "spec file")->required();
    s->add_option("--out", f.out, "snapshot path")->required();
    s->add_option("--seed", f.seed, "random seed");
    s->add_option("--max-iter", f.max_iter, "sharp-stage round limit")->check(CLI::PositiveNumber);
    add_grid(s);

    auto* b = app.add_subcommand("blowup", "re-solve the rescaled problem for each r");
    b->add_option("--spec", f.spec, "spec file")->required();
    b->add_option("--out", f.out, "output directory")->required();
    b->add_option("--radii", f.radii, "decreasing dyadic list, e.g. 1,0.5,0.25");
    b->add_option("--workers", f.workers, "parallel levels (0: all cores)")->check(CLI::NonNegativeNumber);
    b->add_option("--seed", f.seed, "random seed");
    b->add_option("--max-iter", f.max_iter, "sharp-stage round limit")->check(CLI::PositiveNumber);
    add_grid(b);

    auto* a = app.add_subcommand("analyze", "free-boundary statistics of a snapshot");
    a->add_option("snapshot,--snapshot", f.snapshot, "snapshot file")->required();
    a->add_option("--out", f.out, "report path (stdout when absent)");
    a->add_option("--radii", f.radii, "radii for density and contact modulus");
    a->add_option("--eps-list", f.eps_list, "cone apertures");
    a->add_option("--kappa", f.kappa, "inner ball fraction")->check(CLI::Range(0.0, 1.0));
    a->add_option("--c-threshold", f.c_threshold, "non-degeneracy threshold")->check(CLI::PositiveNumber);
    a->add_option("--probes", f.probes, "random probe balls")->check(CLI::NonNegativeNumber);
    a->add_option("--seed", f.seed, "probe seed");
    a->add_option("--dim", f.dim, "ignored; read from the snapshot");

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e) {
        app.exit(e);
        return io_error;
    }

    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        if (cmd == "analyze") {
            int dim = 0;
            try {
                dim = fbtrans::snapshot_dimension(f.snapshot);
            }
            catch (const std::exception& e) {
                throw InputError(e.what());
            }
            if (dim == 2) return analyze<2>(f);
            if (dim == 3) return analyze<3>(f);
            throw InputError("snapshot has unsupported dimension");
        }
        const auto doc = fbtrans::read_json_file(f.spec);
        const int dim = spec_dim(f, doc);
        return dim == 2 ? dispatch<2>(cmd, f, doc) : dispatch<3>(cmd, f, doc);
    }
    catch (const fbtrans::SpecFormatError& e) {
        spdlog::error("{}", e.what());
        std::cerr << "error: " << e.what() << '\n';
        return io_error;
    }
    catch (const InputError& e) {
        spdlog::error("{}", e.what());
        std::cerr << "error: " << e.what() << '\n';
        return io_error;
    }
    catch (const fbtrans::PreconditionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io_error;
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return not_converged;
    }
}
