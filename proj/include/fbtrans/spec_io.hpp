#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "problem.hpp"

namespace fbtrans {

/// Raised for spec documents that cannot be read or do not follow the schema.
class SpecFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

NLOHMANN_JSON_SERIALIZE_ENUM(MatrixFamily, {{MatrixFamily::constant, "constant"},
                                            {MatrixFamily::diagonal, "diagonal"},
                                            {MatrixFamily::affine, "affine"},
                                            {MatrixFamily::holder_trig, "holder_trig"}})
NLOHMANN_JSON_SERIALIZE_ENUM(WeightFamily, {{WeightFamily::constant, "constant"},
                                            {WeightFamily::affine, "affine"},
                                            {WeightFamily::trig, "trig"}})
NLOHMANN_JSON_SERIALIZE_ENUM(BoundaryFamily, {{BoundaryFamily::zero, "zero"},
                                              {BoundaryFamily::linear, "linear"},
                                              {BoundaryFamily::signed_power, "signed_power"},
                                              {BoundaryFamily::positive_power, "positive_power"},
                                              {BoundaryFamily::radial_power, "radial_power"}})

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where)
{
    if (!j.is_object()) throw SpecFormatError(where + ": expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items())
        if (!ok.count(key)) throw SpecFormatError(where + ": unknown key '" + key + "'");
}

template <class E>
E parse_family(const nlohmann::json& j, const std::string& where, E fallback)
{
    if (!j.contains("family")) return fallback;
    const auto& f = j.at("family");
    if (!f.is_string()) throw SpecFormatError(where + ": family must be a string");
    const E e = f.get<E>();
    // unknown strings map to the first enumerator, so compare back
    if (nlohmann::json(e).get<std::string>() != f.get<std::string>())
        throw SpecFormatError(where + ": unknown family '" + f.get<std::string>() + "'");
    return e;
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const std::string& where)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    }
    catch (const nlohmann::json::exception& e) {
        throw SpecFormatError(where + "." + key + ": " + e.what());
    }
}

inline void read_vec3(const nlohmann::json& j, const char* key, std::array<double, 3>& out, const std::string& where)
{
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() > 3) throw SpecFormatError(where + "." + key + ": expected at most three numbers");
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (!a[k].is_number()) throw SpecFormatError(where + "." + key + ": expected numbers");
        out[k] = a[k].get<double>();
    }
}

template <int N>
nlohmann::json field_to_json(const EllipticField<N>& a)
{
    return {{"family", a.family},       {"base", a.base},         {"diagonal", a.diagonal},
            {"slope", a.slope},         {"amplitude", a.amplitude}, {"exponent", a.exponent},
            {"frequency", a.frequency}, {"scale", a.scale}};
}

template <int N>
EllipticField<N> field_from_json(const nlohmann::json& j, const std::string& where)
{
    check_keys(j, {"family", "base", "diagonal", "slope", "amplitude", "exponent", "frequency", "scale"}, where);
    EllipticField<N> a;
    a.family = parse_family(j, where, a.family);
    read_opt(j, "base", a.base, where);
    read_vec3(j, "diagonal", a.diagonal, where);
    read_vec3(j, "slope", a.slope, where);
    read_opt(j, "amplitude", a.amplitude, where);
    read_opt(j, "exponent", a.exponent, where);
    read_opt(j, "frequency", a.frequency, where);
    read_opt(j, "scale", a.scale, where);
    return a;
}

}  // namespace detail

/// JSON document for a spec. Every field is written, so reading it back
/// reproduces the spec exactly.
template <int N>
nlohmann::json spec_to_json(const ProblemSpec<N>& s)
{
    nlohmann::json modulus = nlohmann::json::array();
    for (const auto& [sep, osc] : s.weight.modulus) modulus.push_back({sep, osc});
    return {{"name", s.name},
            {"dim", N},
            {"a_plus", detail::field_to_json(s.a_plus)},
            {"a_minus", detail::field_to_json(s.a_minus)},
            {"weight",
             {{"family", s.weight.family},
              {"base", s.weight.base},
              {"slope", s.weight.slope},
              {"amplitude", s.weight.amplitude},
              {"frequency", s.weight.frequency},
              {"scale", s.weight.scale},
              {"modulus", modulus}}},
            {"phases", {{"lambda_plus", s.phases.lambda_plus}, {"lambda_minus", s.phases.lambda_minus}}},
            {"boundary",
             {{"family", s.boundary.family},
              {"linear", s.boundary.linear},
              {"coefficient", s.boundary.coefficient},
              {"power", s.boundary.power},
              {"normal_slope", s.boundary.normal_slope},
              {"scale", s.boundary.scale}}},
            {"params",
             {{"mu", s.params.mu},
              {"M", s.params.M},
              {"alpha", s.params.alpha},
              {"q", s.params.q},
              {"holder_bound_A", s.params.holder_bound_A},
              {"holder_bound_grad_phi", s.params.holder_bound_grad_phi},
              {"scale", s.params.scale}}},
            {"density_floor", s.density_floor},
            {"density_radius", s.density_radius}};
}

/// Dimension named in a spec document (2 when absent).
inline int spec_dimension(const nlohmann::json& j)
{
    if (!j.is_object()) throw SpecFormatError("spec: expected an object");
    const int dim = j.value("dim", 2);
    if (dim != 2 && dim != 3) throw SpecFormatError("spec: dim must be 2 or 3");
    return dim;
}

/// Parses a spec document. Structural problems throw SpecFormatError; value
/// ranges (mu, lambda ordering, ...) are left to validate_spec.
template <int N>
ProblemSpec<N> spec_from_json(const nlohmann::json& j)
{
    using namespace detail;
    check_keys(j, {"name", "dim", "a_plus", "a_minus", "weight", "phases", "boundary", "params", "density_floor",
                   "density_radius"},
               "spec");
    if (spec_dimension(j) != N) throw SpecFormatError("spec: dimension mismatch");
    for (const char* key : {"a_plus", "a_minus", "phases", "boundary"})
        if (!j.contains(key)) throw SpecFormatError(std::string("spec: missing '") + key + "'");
    ProblemSpec<N> s;
    read_opt(j, "name", s.name, "spec");
    s.a_plus = field_from_json<N>(j.at("a_plus"), "a_plus");
    s.a_minus = field_from_json<N>(j.at("a_minus"), "a_minus");
    if (j.contains("weight")) {
        const auto& w = j.at("weight");
        check_keys(w, {"family", "base", "slope", "amplitude", "frequency", "scale", "modulus"}, "weight");
        s.weight.family = parse_family(w, "weight", s.weight.family);
        read_opt(w, "base", s.weight.base, "weight");
        read_vec3(w, "slope", s.weight.slope, "weight");
        read_opt(w, "amplitude", s.weight.amplitude, "weight");
        read_opt(w, "frequency", s.weight.frequency, "weight");
        read_opt(w, "scale", s.weight.scale, "weight");
        read_opt(w, "modulus", s.weight.modulus, "weight");
    }
    {
        const auto& p = j.at("phases");
        check_keys(p, {"lambda_plus", "lambda_minus"}, "phases");
        if (!p.contains("lambda_plus") || !p.contains("lambda_minus"))
            throw SpecFormatError("phases: lambda_plus and lambda_minus are required");
        read_opt(p, "lambda_plus", s.phases.lambda_plus, "phases");
        read_opt(p, "lambda_minus", s.phases.lambda_minus, "phases");
    }
    {
        const auto& b = j.at("boundary");
        check_keys(b, {"family", "linear", "coefficient", "power", "normal_slope", "scale"}, "boundary");
        s.boundary.family = parse_family(b, "boundary", s.boundary.family);
        read_vec3(b, "linear", s.boundary.linear, "boundary");
        read_opt(b, "coefficient", s.boundary.coefficient, "boundary");
        read_opt(b, "power", s.boundary.power, "boundary");
        read_opt(b, "normal_slope", s.boundary.normal_slope, "boundary");
        read_opt(b, "scale", s.boundary.scale, "boundary");
    }
    if (j.contains("params")) {
        const auto& p = j.at("params");
        check_keys(p, {"mu", "M", "alpha", "q", "holder_bound_A", "holder_bound_grad_phi", "scale"}, "params");
        read_opt(p, "mu", s.params.mu, "params");
        read_opt(p, "M", s.params.M, "params");
        read_opt(p, "alpha", s.params.alpha, "params");
        read_opt(p, "q", s.params.q, "params");
        read_opt(p, "holder_bound_A", s.params.holder_bound_A, "params");
        read_opt(p, "holder_bound_grad_phi", s.params.holder_bound_grad_phi, "params");
        read_opt(p, "scale", s.params.scale, "params");
    }
    read_opt(j, "density_floor", s.density_floor, "spec");
    read_opt(j, "density_radius", s.density_radius, "spec");
    return s;
}

inline nlohmann::json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw SpecFormatError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::parse_error& e) {
        throw SpecFormatError(path + ": " + e.what());
    }
}

template <int N>
ProblemSpec<N> read_spec(const std::string& path)
{
    return spec_from_json<N>(read_json_file(path));
}

template <int N>
void write_spec(const std::string& path, const ProblemSpec<N>& spec)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << spec_to_json(spec).dump(2) << '\n';
}

/// 64-bit FNV-1a of a byte string, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

template <int N>
std::string spec_hash(const ProblemSpec<N>& spec)
{
    return fnv1a_hex(spec_to_json(spec).dump());
}

}  // namespace fbtrans
