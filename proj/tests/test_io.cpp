#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "polykin/io.hpp"

using namespace polykin;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"({
  "species": {"masses": [1.0, 1.5], "dofs": [2, 5]},
  "grid": {"velocity_points": 6, "velocity_max": 3.0, "internal_points": 4, "internal_max": 8.0},
  "quadrature": {"samples": 4},
  "time": {"dt": 0.002, "steps": 2},
  "seed": 11
})";

std::vector<std::string> problems_of(const std::string& text, const fs::path& base = ".") {
    try {
        parse_config_text(text, base);
    } catch (const ConfigError& e) {
        return e.problems();
    }
    return {};
}

bool mentions(const std::vector<std::string>& problems, const std::string& needle) {
    return std::any_of(problems.begin(), problems.end(), [&](const auto& p) { return p.find(needle) != std::string::npos; });
}

fs::path scratch_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("polykin_io_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST(Config, DefaultsFillMissingSections) {
    auto c = parse_config_text(R"({"species": {"masses": [2.0]}})");
    EXPECT_EQ(c.table.count(), 1);
    EXPECT_EQ(c.table.monatomic_count(), 1);
    EXPECT_EQ(c.grid.velocity.n, 16);
    EXPECT_EQ(c.truncation, 0);
    EXPECT_EQ(c.seed, 1u);
}

TEST(Config, MonatomicCountDefaultsToLeadingDofTwo) {
    auto c = parse_config_text(R"({"species": {"masses": [1, 1, 1], "dofs": [2, 2, 3.5]}})");
    EXPECT_EQ(c.table.monatomic_count(), 2);
}

TEST(Config, EchoRoundTrips) {
    auto c = parse_config_text(kSmall);
    const Json echo = config_echo(c);
    EXPECT_EQ(config_echo(parse_config_json(echo)), echo);
}

TEST(Config, EchoOfGeometricGridRoundTrips) {
    auto c = parse_config_text(
        R"({"species": {"masses": [1.0], "dofs": [4], "monatomic": 0},
            "grid": {"internal_points": 6, "internal_max": 10.0, "internal_spacing": "geometric", "internal_ratio": 1.25}})");
    auto back = parse_config_json(config_echo(c));
    ASSERT_EQ(back.grid.internal.size(), 6);
    for (int k = 0; k < 6; ++k) EXPECT_NEAR(back.grid.internal.weights[k], c.grid.internal.weights[k], 1e-12);
}

TEST(Config, CollectsEveryProblem) {
    auto p = problems_of(R"({
      "species": {"masses": [1.0, -2.0], "dofs": [2, 1]},
      "grid": {"velocity_points": 1, "colour": "red"},
      "time": {"dt": -1},
      "quadrature": {"interpolation": "cubic"},
      "extra": true
    })");
    EXPECT_TRUE(mentions(p, "mass of species 1"));
    EXPECT_TRUE(mentions(p, "dof below 2 for species 1"));
    EXPECT_TRUE(mentions(p, "grid.colour: unknown key"));
    EXPECT_TRUE(mentions(p, "velocity grid needs"));
    EXPECT_TRUE(mentions(p, "time step must be nonnegative"));
    EXPECT_TRUE(mentions(p, "quadrature.interpolation"));
    EXPECT_TRUE(mentions(p, "extra: unknown key"));
    EXPECT_GE(p.size(), 7u);
}

TEST(Config, WrongTypesAreReportedWithPath) {
    auto p = problems_of(R"({"species": {"masses": "heavy"}, "time": {"steps": 2.5}, "seed": "x"})");
    EXPECT_TRUE(mentions(p, "species.masses: must be a list of numbers"));
    EXPECT_TRUE(mentions(p, "time.steps: must be an integer"));
    EXPECT_TRUE(mentions(p, "seed: must be an integer"));
}

TEST(Config, ReversedPairIsRejected) {
    auto p = problems_of(R"({"species": {"masses": [1, 2]},
      "kernel": {"pairs": [{"species": [0, 1], "amplitude": 2.0}, {"species": [1, 0], "amplitude": 3.0}]}})");
    ASSERT_EQ(p.size(), 1u);
    EXPECT_TRUE(mentions(p, "kernel.pairs[1].species"));
}

TEST(Config, PairOverrideReachesModel) {
    auto c = parse_config_text(R"({"species": {"masses": [1, 2]},
      "kernel": {"pairs": [{"species": [1, 0], "kind": "power_law", "amplitude": 2.0, "exponent": 0.5}]}})");
    auto m = c.collision_model();
    EXPECT_EQ(m.pair(0, 1).spec.cross_section.amplitude, 2.0);
    EXPECT_EQ(m.pair(1, 0).spec.cross_section.amplitude, 2.0);
    EXPECT_EQ(m.pair(0, 0).spec.cross_section.amplitude, 1.0);
}

TEST(Config, CrossSectionBoundsChecked) {
    auto p = problems_of(R"({"species": {"masses": [1]}, "kernel": {"cross_section": {"kind": "power_law", "exponent": 1.5}}})");
    EXPECT_TRUE(mentions(p, "kernel.cross_section: cross-section exponent"));
}

TEST(Config, InvalidJsonIsAConfigError) {
    auto p = problems_of("{\"species\": ");
    ASSERT_EQ(p.size(), 1u);
    EXPECT_TRUE(mentions(p, "not valid JSON"));
}

TEST(Config, FilePathResolvedAgainstConfigDirectory) {
    auto d = scratch_dir("path");
    const std::string text = R"({"species": {"masses": [1]}, "initial": {"kind": "file", "path": "start.pkst"}})";
    EXPECT_TRUE(mentions(problems_of(text, d), "does not exist"));
    SpeciesTable t({1.0}, {2.0}, 1);
    GridSpec g;
    write_state_file(d / "start.pkst", DistributionGrid(t, g));
    auto c = parse_config_text(text, d);
    EXPECT_EQ(fs::path(c.initial.path), d / "start.pkst");
}

TEST(Config, ParseConfigReadsFile) {
    auto d = scratch_dir("file");
    std::ofstream(d / "run.json") << kSmall;
    EXPECT_EQ(parse_config(d / "run.json").seed, 11u);
    EXPECT_THROW(parse_config(d / "missing.json"), ConfigError);
}

TEST(StateFile, BinaryRoundTripIsExact) {
    SpeciesTable t({1.0, 1.5}, {2.0, 5.0}, 1);
    GridSpec g;
    g.velocity = {6, 3.0};
    g.internal = InternalGrid::make_geometric(5, 9.0, 1.3);
    g.spatial = {1, 3, 2.0};
    DistributionGrid f(t, g, 0.125);
    for (int a = 0; a < 2; ++a)
        for (std::size_t i = 0; i < f.values(a).size(); ++i) f.values(a)[i] = 1.0 / (1.0 + i) + a * 1e-17;
    std::stringstream buf;
    write_state(buf, f);
    auto back = read_state(buf);
    EXPECT_EQ(back.time(), 0.125);
    EXPECT_EQ(back.table().masses(), t.masses());
    EXPECT_EQ(back.grid().internal.nodes, g.internal.nodes);
    EXPECT_FALSE(back.grid().internal.uniform);
    EXPECT_EQ(back.grid().spatial.n, 3);
    for (int a = 0; a < 2; ++a) EXPECT_EQ(back.values(a), f.values(a));
}

TEST(StateFile, RejectsForeignAndTruncatedInput) {
    std::stringstream junk("NOPE....");
    EXPECT_THROW(read_state(junk), std::runtime_error);
    SpeciesTable t({1.0}, {2.0}, 1);
    GridSpec g;
    g.velocity = {4, 2.0};
    std::stringstream buf;
    write_state(buf, DistributionGrid(t, g));
    std::string bytes = buf.str();
    std::stringstream cut(bytes.substr(0, bytes.size() - 8));
    EXPECT_THROW(read_state(cut), std::runtime_error);
}

TEST(StateFile, CsvHasOneRowPerNode) {
    SpeciesTable t({1.0, 1.5}, {2.0, 4.0}, 1);
    GridSpec g;
    g.velocity = {2, 1.0};
    g.internal = InternalGrid::make_uniform(3, 3.0);
    std::stringstream out;
    write_state_csv(out, DistributionGrid(t, g));
    const auto rows = std::count(std::istreambuf_iterator<char>(out), std::istreambuf_iterator<char>(), '\n');
    EXPECT_EQ(rows, 1 + 8 + 8 * 3);
}

TEST(FormatDouble, ShortestRoundTrip) {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(std::stod(format_double(x)), x);
    EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Scenario, TrajectoryCsvShapeAndConservation) {
    auto c = parse_config_text(kSmall);
    auto tr = run_scenario(c);
    ASSERT_EQ(tr.points.size(), 3u);
    std::stringstream csv;
    write_trajectory_csv(csv, tr, c.table);
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), 14);
    EXPECT_EQ(header.rfind("t,mass_0,", 0), 0u);
    int rows = 0;
    for (std::string line; std::getline(csv, line);) ++rows;
    EXPECT_EQ(rows, 3);
    for (auto& r : conservation_ledger(tr, c.table)) EXPECT_TRUE(r.pass) << r.name << " " << r.statistic;
    EXPECT_FALSE(tr.config_echo.empty());
}

TEST(Scenario, SameSeedGivesIdenticalBytes) {
    auto c = parse_config_text(kSmall);
    auto bytes = [&] {
        std::stringstream s;
        write_state(s, run_scenario(c).final_state);
        return s.str();
    };
    EXPECT_EQ(bytes(), bytes());
}

TEST(Scenario, FileInitialConditionMustMatchGrid) {
    auto d = scratch_dir("mismatch");
    auto c = parse_config_text(kSmall);
    GridSpec other = c.grid;
    other.velocity.n = 8;
    write_state_file(d / "s.pkst", DistributionGrid(c.table, other));
    c.initial.kind = InitialCondition::Kind::File;
    c.initial.path = (d / "s.pkst").string();
    EXPECT_THROW(initial_state(c), std::runtime_error);
}

TEST(VerifyReport, AllPassIsConjunction) {
    OracleReport ok{"a", 0.0, 0.0, 1.0, 1.0, true, 10, 1, ""};
    OracleReport bad{"b", 2.0, 0.0, 1.0, 1.0, false, 10, 2, "over"};
    EXPECT_TRUE(verify_report_json({ok}, 3, "quick")["all_pass"].get<bool>());
    auto j = verify_report_json({ok, bad}, 3, "quick");
    EXPECT_FALSE(j["all_pass"].get<bool>());
    EXPECT_EQ(j["reports"].size(), 2u);
    bad.statistic = std::numeric_limits<double>::infinity();
    EXPECT_EQ(report_json(bad)["statistic"], "inf");
}
