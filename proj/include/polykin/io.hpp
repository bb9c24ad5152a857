#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "polykin/diagnostics.hpp"
#include "polykin/integrator.hpp"
#include "polykin/operator.hpp"
#include "polykin/state.hpp"

namespace polykin {

using Json = nlohmann::json;

// Thrown with every problem found while validating a configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
    const std::vector<std::string>& problems() const { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string s;
        for (const auto& x : p) s += (s.empty() ? "" : "\n") + x;
        return s;
    }
    std::vector<std::string> problems_;
};

struct InitialCondition {
    enum class Kind { Maxwellian, TwoTemperature, File };
    Kind kind = Kind::Maxwellian;
    std::vector<double> density;      // per species, defaults to 1
    std::vector<double> temperature;  // per species
    std::vector<Vec3> drift;          // per species
    std::string path;                 // state file for Kind::File
    int build_index = -1;             // build_initial index; -1 follows the truncation, 0 skips
};

struct RunConfig {
    SpeciesTable table;
    GridSpec grid;
    CrossSectionModel cross_section;
    std::map<std::pair<int, int>, CrossSectionModel> pair_cross_sections;
    int truncation = 0;
    QuadratureRule rule;
    TimeStepConfig time;
    InitialCondition initial;
    std::string output_directory = "out";
    int state_every = 0;
    std::uint64_t seed = 1;

    CollisionModel collision_model() const {
        return CollisionModel::with_overrides(table, cross_section, pair_cross_sections, truncation);
    }
};

namespace detail {

// Walks one JSON object, collecting problems instead of stopping at the
// first one. Keys that were never read are reported as unknown.
class Section {
public:
    Section(const Json* node, std::string path, std::vector<std::string>& errors)
        : node_(node), path_(std::move(path)), errors_(errors) {
        if (node_ && !node_->is_object()) {
            error("must be an object");
            node_ = nullptr;
        }
    }

    ~Section() {
        if (!node_) return;
        for (auto it = node_->begin(); it != node_->end(); ++it)
            if (!seen_.count(it.key())) errors_.push_back(join(it.key()) + ": unknown key");
    }

    Section child(const std::string& key) {
        seen_.insert(key);
        const Json* c = (node_ && node_->contains(key)) ? &(*node_)[key] : nullptr;
        return Section(c, join(key), errors_);
    }

    bool has(const std::string& key) const { return node_ && node_->contains(key); }
    const Json* raw(const std::string& key) {
        seen_.insert(key);
        return has(key) ? &(*node_)[key] : nullptr;
    }

    double number(const std::string& key, double fallback) {
        const Json* v = raw(key);
        if (!v) return fallback;
        if (!v->is_number()) {
            errors_.push_back(join(key) + ": must be a number");
            return fallback;
        }
        return v->get<double>();
    }

    long integer(const std::string& key, long fallback) {
        const Json* v = raw(key);
        if (!v) return fallback;
        if (!v->is_number_integer()) {
            errors_.push_back(join(key) + ": must be an integer");
            return fallback;
        }
        return v->get<long>();
    }

    bool boolean(const std::string& key, bool fallback) {
        const Json* v = raw(key);
        if (!v) return fallback;
        if (!v->is_boolean()) {
            errors_.push_back(join(key) + ": must be true or false");
            return fallback;
        }
        return v->get<bool>();
    }

    std::string text(const std::string& key, const std::string& fallback) {
        const Json* v = raw(key);
        if (!v) return fallback;
        if (!v->is_string()) {
            errors_.push_back(join(key) + ": must be a string");
            return fallback;
        }
        return v->get<std::string>();
    }

    std::vector<double> numbers(const std::string& key) {
        std::vector<double> out;
        const Json* v = raw(key);
        if (!v) return out;
        if (v->is_number()) return {v->get<double>()};
        if (!v->is_array()) {
            errors_.push_back(join(key) + ": must be a list of numbers");
            return out;
        }
        for (const auto& x : *v) {
            if (!x.is_number()) {
                errors_.push_back(join(key) + ": must be a list of numbers");
                return {};
            }
            out.push_back(x.get<double>());
        }
        return out;
    }

    void error(const std::string& msg) { errors_.push_back((path_.empty() ? std::string("config") : path_) + ": " + msg); }
    void error(const std::string& key, const std::string& msg) { errors_.push_back(join(key) + ": " + msg); }
    const Json* node() const { return node_; }

private:
    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const Json* node_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

inline std::optional<CrossSectionModel> read_cross_section(Section& s, std::vector<std::string>& errors,
                                                           const CrossSectionModel& fallback) {
    const std::string kind = s.text("kind", fallback.kind == CrossSectionModel::Kind::Constant ? "constant" : "power_law");
    CrossSectionModel cs;
    if (kind == "constant") {
        cs = CrossSectionModel::constant(s.number("amplitude", fallback.amplitude));
        if (s.has("exponent")) s.error("exponent", "not used by a constant cross section");
        s.raw("exponent");
    } else if (kind == "power_law") {
        cs = CrossSectionModel::power_law(s.number("amplitude", fallback.amplitude), s.number("exponent", fallback.exponent));
    } else {
        s.error("kind", "must be constant or power_law");
        return std::nullopt;
    }
    const std::size_t before = errors.size();
    for (const auto& p : cs.problems()) s.error(p);
    if (errors.size() != before) return std::nullopt;
    return cs;
}

inline std::vector<double> broadcast(Section& s, const std::string& key, std::size_t count, double fallback) {
    auto v = s.numbers(key);
    if (v.empty()) return std::vector<double>(count, fallback);
    if (v.size() == 1) return std::vector<double>(count, v[0]);
    if (v.size() != count) {
        s.error(key, "needs one value or one per species");
        return std::vector<double>(count, fallback);
    }
    return v;
}

}  // namespace detail

// Validates a JSON configuration. `base` resolves relative file paths.
// Every problem found is reported through ConfigError.
inline RunConfig parse_config_json(const Json& doc, const std::filesystem::path& base = ".") {
    std::vector<std::string> errors;
    RunConfig cfg;
    {
        detail::Section root(&doc, "", errors);

        // species
        std::size_t species_count = 0;
        {
            auto s = root.child("species");
            if (!s.node()) s.error("is required");
            auto masses = s.numbers("masses");
            auto dofs = s.numbers("dofs");
            if (s.node() && masses.empty()) s.error("masses", "is required");
            if (dofs.empty()) dofs.assign(masses.size(), 2.0);
            long leading = 0;
            while (leading < static_cast<long>(dofs.size()) && dofs[leading] == 2.0) ++leading;
            const long mono = s.integer("monatomic", leading);
            auto problems = SpeciesTable::check(masses, dofs, static_cast<int>(mono));
            for (const auto& p : problems) s.error(p);
            if (problems.empty()) cfg.table = SpeciesTable(masses, dofs, static_cast<int>(mono));
            species_count = masses.size();
        }

        // grid
        {
            auto g = root.child("grid");
            cfg.grid.velocity.n = static_cast<int>(g.integer("velocity_points", 16));
            cfg.grid.velocity.vmax = g.number("velocity_max", 4.5);
            const int ni = static_cast<int>(g.integer("internal_points", 16));
            const double imax = g.number("internal_max", 14.0);
            const std::string spacing = g.text("internal_spacing", "uniform");
            const double ratio = g.number("internal_ratio", 1.2);
            if (ni < 2) g.error("internal_points", "must be at least 2");
            if (!(imax > 0.0)) g.error("internal_max", "must be positive");
            if (spacing != "uniform" && spacing != "geometric") g.error("internal_spacing", "must be uniform or geometric");
            if (spacing == "geometric" && !(ratio > 1.0)) g.error("internal_ratio", "must exceed 1");
            if (ni >= 2 && imax > 0.0) {
                if (spacing == "geometric" && ratio > 1.0) cfg.grid.internal = InternalGrid::make_geometric(ni, imax, ratio);
                else cfg.grid.internal = InternalGrid::make_uniform(ni, imax);
            }
            cfg.grid.spatial.dim = static_cast<int>(g.integer("spatial_dim", 0));
            cfg.grid.spatial.n = static_cast<int>(g.integer("spatial_points", 1));
            cfg.grid.spatial.length = g.number("spatial_length", 1.0);
            if (cfg.grid.velocity.n > 128) g.error("velocity_points", "must not exceed 128");
            for (const auto& p : cfg.grid.problems())
                if (p.find("internal") == std::string::npos) g.error(p);
        }

        // collision model
        {
            auto k = root.child("kernel");
            cfg.truncation = static_cast<int>(k.integer("truncation", 0));
            if (cfg.truncation < 0) k.error("truncation", "must be nonnegative");
            {
                auto cs = k.child("cross_section");
                if (auto m = detail::read_cross_section(cs, errors, CrossSectionModel::constant())) cfg.cross_section = *m;
            }
            if (const Json* pairs = k.raw("pairs")) {
                if (!pairs->is_array()) {
                    k.error("pairs", "must be a list");
                } else {
                    for (std::size_t i = 0; i < pairs->size(); ++i) {
                        detail::Section p(&(*pairs)[i], "kernel.pairs[" + std::to_string(i) + "]", errors);
                        const Json* sp = p.raw("species");
                        if (!sp || !sp->is_array() || sp->size() != 2 || !(*sp)[0].is_number_integer() || !(*sp)[1].is_number_integer()) {
                            p.error("species", "must be a pair of species indices");
                            continue;
                        }
                        const int a = (*sp)[0].get<int>(), b = (*sp)[1].get<int>();
                        if (a < 0 || b < 0 || a >= static_cast<int>(species_count) || b >= static_cast<int>(species_count)) {
                            p.error("species", "index out of range");
                            continue;
                        }
                        auto m = detail::read_cross_section(p, errors, cfg.cross_section);
                        const auto key = std::minmax(a, b);
                        if (cfg.pair_cross_sections.count({key.first, key.second})) {
                            p.error("species", "pair (" + std::to_string(a) + "," + std::to_string(b) +
                                                   ") is already given; the reversed pair is derived by symmetry");
                            continue;
                        }
                        if (m) cfg.pair_cross_sections[{key.first, key.second}] = *m;
                    }
                }
            }
        }

        // quadrature
        {
            auto q = root.child("quadrature");
            const std::string kind = q.text("kind", "monte_carlo");
            if (kind == "monte_carlo") cfg.rule.kind = QuadratureRule::Kind::MonteCarlo;
            else if (kind == "deterministic") cfg.rule.kind = QuadratureRule::Kind::Deterministic;
            else q.error("kind", "must be monte_carlo or deterministic");
            cfg.rule.samples = static_cast<int>(q.integer("samples", cfg.rule.samples));
            cfg.rule.defensive = q.number("defensive", cfg.rule.defensive);
            cfg.rule.share_nodes = static_cast<int>(q.integer("share_nodes", cfg.rule.share_nodes));
            cfg.rule.split_nodes = static_cast<int>(q.integer("split_nodes", cfg.rule.split_nodes));
            cfg.rule.polar_nodes = static_cast<int>(q.integer("polar_nodes", cfg.rule.polar_nodes));
            cfg.rule.azimuth_nodes = static_cast<int>(q.integer("azimuth_nodes", cfg.rule.azimuth_nodes));
            cfg.rule.mirrored = q.boolean("mirrored", false);
            const std::string interp = q.text("interpolation", "log_quadratic");
            if (interp == "log_quadratic") cfg.rule.interpolation = QuadratureRule::Interpolation::LogQuadratic;
            else if (interp == "linear") cfg.rule.interpolation = QuadratureRule::Interpolation::Linear;
            else q.error("interpolation", "must be log_quadratic or linear");
            for (const auto& p : cfg.rule.problems()) q.error(p);
        }

        // time stepping
        {
            auto t = root.child("time");
            cfg.time.dt = t.number("dt", 0.002);
            cfg.time.steps = static_cast<int>(t.integer("steps", 10));
            const std::string scheme = t.text("scheme", "exponential_euler");
            if (scheme == "exponential_euler") cfg.time.scheme = TimeStepConfig::Scheme::ExponentialEuler;
            else if (scheme == "picard") cfg.time.scheme = TimeStepConfig::Scheme::Picard;
            else t.error("scheme", "must be exponential_euler or picard");
            cfg.time.picard_tolerance = t.number("picard_tolerance", cfg.time.picard_tolerance);
            cfg.time.picard_max_iterations = static_cast<int>(t.integer("picard_max_iterations", cfg.time.picard_max_iterations));
            cfg.time.project = t.boolean("project", true);
            cfg.time.rate_cap = t.number("rate_cap", cfg.time.rate_cap);
            cfg.time.truncation = cfg.truncation;
            cfg.time.transport = cfg.grid.spatial.dim > 0;
            for (const auto& p : cfg.time.problems())
                if (p.find("truncation") == std::string::npos) t.error(p);
        }

        // initial condition
        {
            auto ic = root.child("initial");
            const std::string kind = ic.text("kind", "maxwellian");
            const std::size_t s = species_count;
            if (kind == "maxwellian") cfg.initial.kind = InitialCondition::Kind::Maxwellian;
            else if (kind == "two_temperature") cfg.initial.kind = InitialCondition::Kind::TwoTemperature;
            else if (kind == "file") cfg.initial.kind = InitialCondition::Kind::File;
            else ic.error("kind", "must be maxwellian, two_temperature or file");
            cfg.initial.density = detail::broadcast(ic, "density", s, 1.0);
            if (cfg.initial.kind == InitialCondition::Kind::TwoTemperature) {
                auto T = ic.numbers("temperature");
                if (T.size() != s) ic.error("temperature", "needs one temperature per species");
                cfg.initial.temperature = T.size() == s ? T : std::vector<double>(s, 1.0);
            } else {
                cfg.initial.temperature = detail::broadcast(ic, "temperature", s, 1.0);
            }
            cfg.initial.drift.assign(s, Vec3{0, 0, 0});
            if (const Json* d = ic.raw("drift")) {
                bool ok = d->is_array() && (d->size() == s || d->size() == 1);
                if (ok)
                    for (const auto& v : *d) ok = ok && v.is_array() && v.size() == 3 && v[0].is_number() && v[1].is_number() && v[2].is_number();
                if (!ok) {
                    ic.error("drift", "needs one 3-vector or one per species");
                } else {
                    for (std::size_t a = 0; a < s; ++a) {
                        const auto& v = (*d)[d->size() == 1 ? 0 : a];
                        cfg.initial.drift[a] = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
                    }
                }
            }
            for (double x : cfg.initial.density)
                if (!(x > 0.0)) {
                    ic.error("density", "must be positive");
                    break;
                }
            for (double x : cfg.initial.temperature)
                if (!(x > 0.0)) {
                    ic.error("temperature", "must be positive");
                    break;
                }
            cfg.initial.path = ic.text("path", "");
            if (cfg.initial.kind == InitialCondition::Kind::File) {
                if (cfg.initial.path.empty()) {
                    ic.error("path", "is required for a file initial condition");
                } else {
                    std::filesystem::path p(cfg.initial.path);
                    if (p.is_relative()) p = base / p;
                    cfg.initial.path = p.string();
                    if (!std::filesystem::exists(p)) ic.error("path", "file " + p.string() + " does not exist");
                }
            } else if (!cfg.initial.path.empty()) {
                ic.error("path", "only used by a file initial condition");
            }
            cfg.initial.build_index = static_cast<int>(ic.integer("build_index", -1));
            if (cfg.initial.build_index < -1) ic.error("build_index", "must be -1, 0 or positive");
        }

        // output and seed
        {
            auto o = root.child("output");
            cfg.output_directory = o.text("directory", cfg.output_directory);
            cfg.state_every = static_cast<int>(o.integer("state_every", 0));
            if (cfg.state_every < 0) o.error("state_every", "must be nonnegative");
        }
        const long seed = root.integer("seed", 1);
        if (seed < 0) root.error("seed", "must be nonnegative");
        cfg.seed = static_cast<std::uint64_t>(seed);
        cfg.rule.seed = cfg.seed;
    }
    if (!errors.empty()) throw ConfigError(errors);
    return cfg;
}

inline RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base = ".") {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError({std::string("config: not valid JSON: ") + e.what()});
    }
    return parse_config_json(doc, base);
}

inline RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"config: cannot read " + path.string()});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.parent_path());
}

namespace detail {

inline Json cross_section_json(const CrossSectionModel& cs) {
    Json j;
    j["amplitude"] = cs.amplitude;
    if (cs.kind == CrossSectionModel::Kind::Constant) {
        j["kind"] = "constant";
    } else {
        j["kind"] = "power_law";
        j["exponent"] = cs.exponent;
    }
    return j;
}

}  // namespace detail

// Fully resolved configuration with every default written out. Parsing the
// echo gives back the same configuration.
inline Json config_echo(const RunConfig& c) {
    Json j;
    j["species"] = {{"masses", c.table.masses()}, {"dofs", c.table.dofs()}, {"monatomic", c.table.monatomic_count()}};
    const auto& in = c.grid.internal;
    Json g = {{"velocity_points", c.grid.velocity.n},
              {"velocity_max", c.grid.velocity.vmax},
              {"internal_points", in.size()},
              {"internal_max", in.upper()},
              {"internal_spacing", in.uniform ? "uniform" : "geometric"},
              {"spatial_dim", c.grid.spatial.dim},
              {"spatial_points", c.grid.spatial.n},
              {"spatial_length", c.grid.spatial.length}};
    if (!in.uniform && in.size() >= 2) g["internal_ratio"] = in.weights[1] / in.weights[0];
    j["grid"] = g;
    Json pairs = Json::array();
    for (const auto& [key, cs] : c.pair_cross_sections) {
        Json p = detail::cross_section_json(cs);
        p["species"] = {key.first, key.second};
        pairs.push_back(p);
    }
    j["kernel"] = {{"truncation", c.truncation}, {"cross_section", detail::cross_section_json(c.cross_section)}, {"pairs", pairs}};
    const auto& r = c.rule;
    j["quadrature"] = {{"kind", r.kind == QuadratureRule::Kind::MonteCarlo ? "monte_carlo" : "deterministic"},
                       {"samples", r.samples},
                       {"defensive", r.defensive},
                       {"share_nodes", r.share_nodes},
                       {"split_nodes", r.split_nodes},
                       {"polar_nodes", r.polar_nodes},
                       {"azimuth_nodes", r.azimuth_nodes},
                       {"mirrored", r.mirrored},
                       {"interpolation", r.interpolation == QuadratureRule::Interpolation::LogQuadratic ? "log_quadratic" : "linear"}};
    j["time"] = {{"dt", c.time.dt},
                 {"steps", c.time.steps},
                 {"scheme", c.time.scheme == TimeStepConfig::Scheme::Picard ? "picard" : "exponential_euler"},
                 {"picard_tolerance", c.time.picard_tolerance},
                 {"picard_max_iterations", c.time.picard_max_iterations},
                 {"project", c.time.project},
                 {"rate_cap", c.time.rate_cap}};
    const char* kinds[] = {"maxwellian", "two_temperature", "file"};
    Json drift = Json::array();
    for (const auto& d : c.initial.drift) drift.push_back({d[0], d[1], d[2]});
    Json ic = {{"kind", kinds[static_cast<int>(c.initial.kind)]},
               {"density", c.initial.density},
               {"temperature", c.initial.temperature},
               {"drift", drift},
               {"build_index", c.initial.build_index}};
    if (c.initial.kind == InitialCondition::Kind::File) ic["path"] = c.initial.path;
    j["initial"] = ic;
    j["output"] = {{"directory", c.output_directory}, {"state_every", c.state_every}};
    j["seed"] = c.seed;
    return j;
}

// Shortest decimal text that reads back to the same double.
inline std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline std::vector<std::string> trajectory_columns(const SpeciesTable& t) {
    std::vector<std::string> cols{"t"};
    for (int a = 0; a < t.count(); ++a) {
        const std::string s = std::to_string(a);
        for (const char* c : {"mass_", "momentum_x_", "momentum_y_", "momentum_z_", "energy_"}) cols.push_back(c + s);
    }
    for (const char* c : {"H", "dissipation", "floor_ratio_min", "mass_leak"}) cols.emplace_back(c);
    return cols;
}

// One row per recorded step. `dissipation` is the sum over species of the
// integrated entropy dissipation density; `floor_ratio_min` the running
// minimum of f over the positivity floor.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& tr, const SpeciesTable& t) {
    const auto cols = trajectory_columns(t);
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << "\n";
    double running_floor = std::numeric_limits<double>::infinity();
    for (const auto& p : tr.points) {
        running_floor = std::min(running_floor, p.floor_ratio);
        std::vector<double> row{p.time};
        for (int a = 0; a < t.count(); ++a) {
            const auto& s = p.moments.species[a];
            row.insert(row.end(), {s.mass, s.momentum[0], s.momentum[1], s.momentum[2], s.energy()});
        }
        double e = 0.0;
        for (double x : p.dissipation) e += x;
        row.insert(row.end(), {p.entropy, e, running_floor, p.leak});
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
        out << "\n";
    }
}

// Binary state layout, all little endian:
//   "PKST" | u32 version | u32 species | u32 monatomic
//   per species: f64 mass, f64 dof
//   u32 velocity points | f64 velocity max
//   u32 internal points | u32 uniform flag | internal nodes f64[] | weights f64[]
//   u32 spatial dim | u32 spatial points | f64 spatial length
//   f64 time | per species: u64 value count, values f64[]
inline constexpr std::uint32_t state_format_version = 1;

namespace detail {

template <class T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

template <class T>
void put(std::ostream& out, T v) {
    v = to_little(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("state file is truncated");
    return to_little(v);
}

}  // namespace detail

inline void write_state(std::ostream& out, const DistributionGrid& f) {
    out.write("PKST", 4);
    const auto& t = f.table();
    const auto& g = f.grid();
    detail::put<std::uint32_t>(out, state_format_version);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.count()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.monatomic_count()));
    for (int a = 0; a < t.count(); ++a) {
        detail::put<double>(out, t.mass(a));
        detail::put<double>(out, t.dof(a));
    }
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(g.velocity.n));
    detail::put<double>(out, g.velocity.vmax);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(g.internal.size()));
    detail::put<std::uint32_t>(out, g.internal.uniform ? 1u : 0u);
    for (double x : g.internal.nodes) detail::put<double>(out, x);
    for (double x : g.internal.weights) detail::put<double>(out, x);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(g.spatial.dim));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(g.spatial.n));
    detail::put<double>(out, g.spatial.length);
    detail::put<double>(out, f.time());
    for (int a = 0; a < t.count(); ++a) {
        detail::put<std::uint64_t>(out, f.values(a).size());
        for (double x : f.values(a)) detail::put<double>(out, x);
    }
}

inline DistributionGrid read_state(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "PKST", 4) != 0) throw std::runtime_error("not a state file");
    const auto version = detail::get<std::uint32_t>(in);
    if (version != state_format_version) throw std::runtime_error("unsupported state file version");
    const auto count = detail::get<std::uint32_t>(in);
    const auto mono = detail::get<std::uint32_t>(in);
    if (count < 1 || count > static_cast<std::uint32_t>(SpeciesTable::max_species)) throw std::runtime_error("bad species count");
    std::vector<double> masses, dofs;
    for (std::uint32_t a = 0; a < count; ++a) {
        masses.push_back(detail::get<double>(in));
        dofs.push_back(detail::get<double>(in));
    }
    SpeciesTable table(masses, dofs, static_cast<int>(mono));
    GridSpec g;
    g.velocity.n = static_cast<int>(detail::get<std::uint32_t>(in));
    g.velocity.vmax = detail::get<double>(in);
    const auto ni = detail::get<std::uint32_t>(in);
    if (ni > (1u << 20)) throw std::runtime_error("bad internal grid size");
    g.internal.uniform = detail::get<std::uint32_t>(in) != 0;
    g.internal.nodes.resize(ni);
    g.internal.weights.resize(ni);
    for (auto& x : g.internal.nodes) x = detail::get<double>(in);
    for (auto& x : g.internal.weights) x = detail::get<double>(in);
    g.spatial.dim = static_cast<int>(detail::get<std::uint32_t>(in));
    g.spatial.n = static_cast<int>(detail::get<std::uint32_t>(in));
    g.spatial.length = detail::get<double>(in);
    const double time = detail::get<double>(in);
    auto problems = g.problems();
    if (!problems.empty()) throw std::runtime_error("state file grid: " + problems.front());
    DistributionGrid f(table, g, time);
    for (int a = 0; a < table.count(); ++a) {
        const auto n = detail::get<std::uint64_t>(in);
        if (n != f.values(a).size()) throw std::runtime_error("state file value count does not match its grid");
        for (auto& x : f.values(a)) x = detail::get<double>(in);
    }
    return f;
}

inline void write_state_file(const std::filesystem::path& path, const DistributionGrid& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_state(out, f);
}

inline DistributionGrid read_state_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return read_state(in);
}

// One row per node: species, cell, velocity, internal energy, value.
inline void write_state_csv(std::ostream& out, const DistributionGrid& f) {
    out << "species,cell,xi_x,xi_y,xi_z,I,f\n";
    const auto& vg = f.grid().velocity;
    for (int a = 0; a < f.species(); ++a)
        for (std::size_t c = 0; c < f.cells(); ++c)
            for (std::size_t v = 0; v < vg.size(); ++v) {
                const Vec3 xi = vg.velocity(v);
                for (int k = 0; k < f.internal_count(a); ++k)
                    out << a << "," << c << "," << format_double(xi[0]) << "," << format_double(xi[1]) << ","
                        << format_double(xi[2]) << "," << format_double(f.internal_at(a, k)) << ","
                        << format_double(f.values(a)[f.index(a, c, v, k)]) << "\n";
            }
}

inline DistributionGrid initial_state(const RunConfig& c) {
    DistributionGrid raw;
    if (c.initial.kind == InitialCondition::Kind::File) {
        raw = read_state_file(c.initial.path);
        if (raw.table().masses() != c.table.masses() || raw.table().dofs() != c.table.dofs() ||
            raw.table().monatomic_count() != c.table.monatomic_count())
            throw std::runtime_error("state file species differ from the configuration");
        const auto& g = raw.grid();
        if (g.velocity.n != c.grid.velocity.n || g.velocity.vmax != c.grid.velocity.vmax ||
            g.internal.nodes != c.grid.internal.nodes || g.spatial.dim != c.grid.spatial.dim ||
            g.spatial.n != c.grid.spatial.n || g.spatial.length != c.grid.spatial.length)
            throw std::runtime_error("state file grid differs from the configuration");
    } else {
        raw = DistributionGrid(c.table, c.grid);
        for (int a = 0; a < c.table.count(); ++a)
            raw.values(a) = maxwellian(raw, a, c.initial.density[a], c.initial.drift[a], c.initial.temperature[a]);
    }
    const int n = c.initial.build_index < 0 ? c.truncation : c.initial.build_index;
    return n > 0 ? build_initial(raw, n) : raw;
}

// build_initial, then the time loop with per-step diagnostics.
inline Trajectory run_scenario(const RunConfig& c, const RunOptions& ropt = {}) {
    const auto f0 = initial_state(c);
    CollisionOperator op(c.collision_model(), c.grid, c.rule);
    Trajectory tr = picard_solve(op, f0, c.time, ropt);
    tr.config_echo = config_echo(c).dump(2);
    return tr;
}

inline Json report_json(const OracleReport& r) {
    auto num = [](double x) -> Json {
        if (std::isfinite(x)) return x;
        return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
    };
    return {{"name", r.name},        {"statistic", num(r.statistic)}, {"sigma", num(r.sigma)},
            {"tolerance", num(r.tolerance)}, {"scale", num(r.scale)}, {"pass", r.pass},
            {"samples", r.samples},  {"seed", r.seed},                {"note", r.note}};
}

inline Json verify_report_json(const std::vector<OracleReport>& reports, std::uint64_t seed, const std::string& profile) {
    Json j;
    j["format"] = "polykin-verify";
    j["version"] = 1;
    j["seed"] = seed;
    j["profile"] = profile;
    bool all = true;
    Json list = Json::array();
    for (const auto& r : reports) {
        list.push_back(report_json(r));
        all = all && r.pass;
    }
    j["reports"] = list;
    j["all_pass"] = all;
    return j;
}

}  // namespace polykin
