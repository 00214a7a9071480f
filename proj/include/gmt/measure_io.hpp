#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "generators.hpp"
#include "measure.hpp"

namespace gmt {

inline nlohmann::ordered_json to_json(const DiscreteMeasure& mu) {
    nlohmann::ordered_json j;
    j["scale"] = mu.scale();
    auto& arr = j["atoms"] = nlohmann::ordered_json::array();
    for (const auto& a : mu.atoms()) arr.push_back({{"x", a.p.x}, {"y", a.p.y}, {"w", a.w}});
    return j;
}

inline DiscreteMeasure measure_from_json(const nlohmann::json& j) {
    if (!j.contains("scale") || !j.contains("atoms") || !j["atoms"].is_array()) throw Error("measure JSON needs 'scale' and 'atoms'");
    std::vector<Atom> atoms;
    for (const auto& a : j["atoms"]) atoms.push_back({{a.at("x").get<double>(), a.at("y").get<double>()}, a.at("w").get<double>()});
    return DiscreteMeasure(std::move(atoms), j["scale"].get<double>());
}

inline void save_measure(const DiscreteMeasure& mu, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << to_json(mu).dump(1) << '\n';
}

inline DiscreteMeasure load_measure(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed measure JSON in " + path + ": " + e.what());
    }
    return measure_from_json(j);
}

/// A path to an existing JSON file, otherwise a generator recipe.
inline DiscreteMeasure load_or_generate(const std::string& spec, std::uint64_t seed) {
    std::ifstream probe(spec);
    if (probe.good()) return load_measure(spec);
    return generate(spec, seed);
}

}  // namespace gmt
