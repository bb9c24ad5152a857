#pragma once

#include <chrono>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "polykin/diagnostics.hpp"
#include "polykin/io.hpp"

namespace polykin {

// Sample counts and resolutions for one run of the property suite.
struct SuiteProfile {
    std::string name;
    std::uint64_t frames = 100000;
    std::uint64_t involution_frames = 10000;
    std::uint64_t identity_samples = 5000;
    std::uint64_t mc_samples = 1000000;
    int velocity_points = 16;
    double velocity_max = 4.5;
    int internal_points = 16;
    double internal_max = 14.0;
    int gain_samples = 16;
    int random_states = 10;
    int arkeryd_states = 5;
    int steps = 100;
    double dt = 0.002;
    int probes = 20;
    int determinism_steps = 3;
};

inline SuiteProfile desk_profile() {
    SuiteProfile p;
    p.name = "desk";
    return p;
}

inline SuiteProfile quick_profile() {
    SuiteProfile p;
    p.name = "quick";
    p.frames = 20000;
    p.involution_frames = 5000;
    p.identity_samples = 1000;
    p.mc_samples = 200000;
    p.velocity_points = 8;
    p.internal_points = 8;
    p.random_states = 3;
    p.arkeryd_states = 2;
    p.steps = 10;
    p.determinism_steps = 2;
    return p;
}

struct CriterionResult {
    int id = 0;
    std::string title;
    bool pass = false;
    double seconds = 0.0;
    std::string summary;
    std::vector<OracleReport> reports;
};

namespace suite {

// Two monatomic and two polyatomic types: every ordered pair family occurs.
inline SpeciesTable four_types() { return SpeciesTable({1.0, 2.5, 0.7, 1.9}, {2.0, 2.0, 4.0, 5.5}, 2); }

// The two-species desk mixture: one monatomic, one polyatomic with dof 5.
inline SpeciesTable desk_mixture() { return SpeciesTable({1.0, 1.5}, {2.0, 5.0}, 1); }

inline GridSpec desk_grid(const SuiteProfile& p, int velocity_points) {
    GridSpec g;
    g.velocity = {velocity_points, p.velocity_max};
    g.internal = InternalGrid::make_uniform(p.internal_points, p.internal_max);
    return g;
}

inline QuadratureRule gain_rule(const SuiteProfile& p, std::uint64_t seed) {
    QuadratureRule r;
    r.samples = p.gain_samples;
    r.seed = seed;
    return r;
}

inline std::vector<DistributionGrid> random_states(const SpeciesTable& t, const GridSpec& g, int count, std::uint64_t seed) {
    std::vector<DistributionGrid> out;
    for (int k = 0; k < count; ++k) out.push_back(random_state(t, g, stream_key({seed, static_cast<std::uint64_t>(k)})));
    return out;
}

inline bool all_pass(const std::vector<OracleReport>& rs) {
    for (const auto& r : rs)
        if (!r.pass) return false;
    return !rs.empty();
}

inline std::string format_sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

inline std::vector<OracleReport> collision_frames(const SuiteProfile& p, std::uint64_t seed) {
    return {frame_conservation_check(four_types(), p.frames, oracle_seed(seed, "frames"))};
}

inline std::vector<OracleReport> involution(const SuiteProfile& p, std::uint64_t seed) {
    return {involution_check(four_types(), p.involution_frames, oracle_seed(seed, "involution"))};
}

inline std::vector<OracleReport> kernel_identities(const SuiteProfile& p, std::uint64_t seed) {
    return kernel_identity_suite(four_types(),
                                 {CrossSectionModel::constant(1.3), CrossSectionModel::power_law(0.8, 0.6),
                                  CrossSectionModel::power_law(1.1, -0.5)},
                                 {0, 4, 16}, p.identity_samples, oracle_seed(seed, "identities"));
}

inline std::vector<OracleReport> measure_invariance(const SuiteProfile& p, std::uint64_t seed) {
    const auto t = four_types();
    std::vector<OracleReport> out;
    const auto cs = CrossSectionModel::power_law(1.0, 0.5);
    for (auto [a, b] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{3, 1}, std::pair{2, 3}})
        for (auto swap : {MeasureSwap::PrePost, MeasureSwap::Partner, MeasureSwap::Combined}) {
            auto r = measure_invariance_mc(t, a, b, cs, TestFunctional::FirstEnergy, swap, p.mc_samples,
                                           oracle_seed(seed, "measure " + std::to_string(a) + std::to_string(b)));
            out.push_back(r);
        }
    out.push_back(jacobian_check(t, 2, 3, p.mc_samples, oracle_seed(seed, "jacobian")));
    return out;
}

inline std::vector<OracleReport> weak_form(const SuiteProfile& p, std::uint64_t seed) {
    const auto t = desk_mixture();
    const auto g = desk_grid(p, p.velocity_points);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant()), g, gain_rule(p, oracle_seed(seed, "gain")));
    const auto states = random_states(t, g, p.random_states, oracle_seed(seed, "weak form states"));
    auto out = weak_form_check(op, states, false, 5e-2);
    auto projected = weak_form_check(op, states, true, 1e-12);
    out.insert(out.end(), projected.begin(), projected.end());
    return out;
}

inline std::vector<OracleReport> h_theorem(const SuiteProfile& p, std::uint64_t seed) {
    const auto t = desk_mixture();
    const auto g = desk_grid(p, p.velocity_points);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant()), g, gain_rule(p, oracle_seed(seed, "gain")));
    const auto states = random_states(t, g, p.random_states, oracle_seed(seed, "entropy states"));
    return {h_theorem_random(op, states), h_theorem_strict(op, temperature_mixture(t, g, {0.6, 1.4}), "entropy production, two temperatures"),
            h_theorem_equilibrium(op, equilibrium_mixture(t, g))};
}

// The default log-quadratic interpolation reproduces Maxwellians, so its
// residual sits at round-off at every resolution. The resolution trend is
// measured with linear interpolation of the reduced kernel instead.
inline std::vector<OracleReport> equilibrium_fixed_point(const SuiteProfile& p, std::uint64_t seed) {
    const auto t = desk_mixture();
    const auto model = CollisionModel::uniform(t, CrossSectionModel::constant());
    auto residual = [&](int n, QuadratureRule::Interpolation mode) {
        const auto g = desk_grid(p, n);
        auto rule = gain_rule(p, oracle_seed(seed, "equilibrium"));
        rule.interpolation = mode;
        CollisionOperator op(model, g, rule);
        return equilibrium_residual(op, equilibrium_mixture(t, g));
    };
    const int coarse = p.velocity_points, fine = 2 * p.velocity_points;
    std::vector<OracleReport> out;
    const double r_default = residual(coarse, QuadratureRule::Interpolation::LogQuadratic);
    auto d = detail::threshold_report("equilibrium residual, log-quadratic, N=" + std::to_string(coarse), r_default, 5e-2, 1, seed);
    out.push_back(d);
    const double r_coarse = residual(coarse, QuadratureRule::Interpolation::Linear);
    const double r_fine = residual(fine, QuadratureRule::Interpolation::Linear);
    OracleReport trend;
    trend.name = "equilibrium residual reduction, linear, N=" + std::to_string(coarse) + " to " + std::to_string(fine);
    trend.statistic = r_fine > 0.0 ? r_coarse / r_fine : std::numeric_limits<double>::infinity();
    trend.tolerance = 1.5;
    trend.scale = r_coarse;
    trend.pass = trend.statistic >= trend.tolerance;
    trend.samples = 2;
    trend.seed = seed;
    trend.note = "statistic is the residual ratio coarse / fine; residuals " + format_sci(r_coarse) + " and " + format_sci(r_fine);
    out.push_back(trend);
    return out;
}

inline std::vector<OracleReport> trajectory(const SuiteProfile& p, std::uint64_t seed) {
    const auto t = desk_mixture();
    const auto g = desk_grid(p, p.velocity_points);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant()), g, gain_rule(p, oracle_seed(seed, "gain")));
    DistributionGrid f0(t, g);
    f0.values(0) = maxwellian(f0, 0, 1.0, {0.4, 0, 0}, 0.7);
    f0.values(1) = maxwellian(f0, 1, 0.8, {-0.3, 0, 0}, 1.3);
    TimeStepConfig cfg;
    cfg.dt = p.dt;
    cfg.steps = p.steps;
    const auto tr = picard_solve(op, f0, cfg);
    std::vector<OracleReport> out;
    OracleReport floor;
    floor.name = "positivity floor ratio";
    floor.statistic = min_floor_ratio(tr);
    floor.tolerance = 1.0;
    floor.pass = floor.statistic >= 1.0;
    floor.samples = tr.points.size();
    floor.seed = seed;
    floor.note = "minimum of f over the floor; must stay at or above 1";
    out.push_back(floor);
    for (auto& r : conservation_ledger(tr, t, 1e-10, true)) out.push_back(r);
    OracleReport h;
    h.name = "entropy increase beyond the step tolerance";
    h.statistic = entropy_excess(tr);
    h.tolerance = 0.0;
    h.pass = h.statistic <= 0.0;
    h.samples = tr.points.size() - 1;
    h.seed = seed;
    h.note = "largest H(t+dt) - H(t) - eps_step; eps_step is the curvature term plus 3 sigma of the sampled production";
    out.push_back(h);
    return out;
}

inline std::vector<OracleReport> arkeryd(const SuiteProfile& p, std::uint64_t seed) {
    const auto t = desk_mixture();
    const auto g = desk_grid(p, p.velocity_points);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant()), g, gain_rule(p, oracle_seed(seed, "gain")));
    return {arkeryd_check(op, random_states(t, g, p.arkeryd_states, oracle_seed(seed, "arkeryd states")), {2.0, 10.0})};
}

inline std::vector<OracleReport> approximation(const SuiteProfile& p, std::uint64_t seed) {
    const auto t = four_types();
    std::vector<OracleReport> out{
        truncation_convergence(t, CrossSectionModel::constant(), p.probes, oracle_seed(seed, "truncation constant")),
        truncation_convergence(t, CrossSectionModel::power_law(1.0, 0.5), p.probes, oracle_seed(seed, "truncation power"))};
    const auto raw = random_state(desk_mixture(), desk_grid(p, p.velocity_points), oracle_seed(seed, "initial data"));
    for (auto& r : initial_data_convergence(raw)) out.push_back(r);
    return out;
}

// Config text used by the determinism check and the shipped example.
inline std::string determinism_config(const SuiteProfile& p, std::uint64_t seed) {
    Json j = {{"species", {{"masses", {1.0, 1.5}}, {"dofs", {2, 5}}}},
              {"grid", {{"velocity_points", p.velocity_points}, {"velocity_max", p.velocity_max},
                        {"internal_points", p.internal_points}, {"internal_max", p.internal_max}}},
              {"quadrature", {{"samples", p.gain_samples}}},
              {"time", {{"dt", p.dt}, {"steps", p.determinism_steps}}},
              {"initial", {{"kind", "two_temperature"}, {"temperature", {0.7, 1.3}}}},
              {"seed", seed}};
    return j.dump();
}

inline std::vector<OracleReport> determinism(const SuiteProfile& p, std::uint64_t seed) {
    const auto cfg = parse_config_text(determinism_config(p, seed));
    auto outputs = [&] {
        const auto tr = run_scenario(cfg);
        std::ostringstream csv, state, report;
        write_trajectory_csv(csv, tr, cfg.table);
        write_state(state, tr.final_state);
        report << verify_report_json(conservation_ledger(tr, cfg.table), seed, p.name).dump(2);
        return std::vector<std::string>{csv.str(), state.str(), report.str(), tr.config_echo};
    };
    const auto first = outputs(), second = outputs();
    const char* names[] = {"trajectory csv", "state file", "json report", "config echo"};
    std::vector<OracleReport> out;
    for (std::size_t k = 0; k < first.size(); ++k) {
        OracleReport r;
        r.name = std::string("byte identity, ") + names[k];
        r.statistic = first[k] == second[k] ? 0.0 : 1.0;
        r.scale = static_cast<double>(first[k].size());
        r.pass = first[k] == second[k];
        r.samples = 2;
        r.seed = seed;
        r.note = std::to_string(first[k].size()) + " bytes";
        out.push_back(r);
    }
    return out;
}

struct Criterion {
    int id;
    const char* title;
    std::vector<OracleReport> (*run)(const SuiteProfile&, std::uint64_t);
};

inline const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> list{
        {1, "collision-frame conservation", collision_frames},
        {2, "involution", involution},
        {3, "kernel identities", kernel_identities},
        {4, "measure invariance and jacobian", measure_invariance},
        {5, "weak-form orthogonality", weak_form},
        {6, "H-theorem", h_theorem},
        {7, "equilibrium fixed point", equilibrium_fixed_point},
        {8, "trajectory suite", trajectory},
        {9, "Arkeryd inequality", arkeryd},
        {10, "approximation convergence", approximation},
        {11, "determinism", determinism},
    };
    return list;
}

}  // namespace suite

// Runs the selected criteria (all when `only` is empty). An oracle that
// throws fails its criterion with the message recorded.
inline std::vector<CriterionResult> run_suite(const SuiteProfile& p, std::uint64_t seed, const std::vector<int>& only = {},
                                              const std::function<void(const CriterionResult&)>& on_done = {}) {
    std::vector<CriterionResult> out;
    for (const auto& c : suite::criteria()) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        CriterionResult res;
        res.id = c.id;
        res.title = c.title;
        const auto start = std::chrono::steady_clock::now();
        try {
            res.reports = c.run(p, seed);
            res.pass = suite::all_pass(res.reports);
        } catch (const std::exception& e) {
            OracleReport r;
            r.name = std::string(c.title) + " raised an error";
            r.statistic = std::numeric_limits<double>::quiet_NaN();
            r.seed = seed;
            r.note = e.what();
            res.reports.push_back(r);
            res.pass = false;
        }
        res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::string worst;
        for (const auto& r : res.reports)
            if (!r.pass) {
                worst = r.name + ": " + suite::format_sci(r.statistic) + " vs " + suite::format_sci(r.tolerance);
                break;
            }
        res.summary = worst.empty() ? std::to_string(res.reports.size()) + " checks" : worst;
        if (on_done) on_done(res);
        out.push_back(std::move(res));
    }
    return out;
}

inline std::vector<OracleReport> flatten(const std::vector<CriterionResult>& results) {
    std::vector<OracleReport> out;
    for (const auto& c : results)
        for (auto r : c.reports) {
            r.name = "AC" + std::to_string(c.id) + " " + r.name;
            out.push_back(std::move(r));
        }
    return out;
}

}  // namespace polykin
