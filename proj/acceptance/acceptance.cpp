// Desk-scale acceptance run: one PASS/FAIL line per criterion, followed by
// the individual oracle reports of any criterion that failed.
#include <cstdio>
#include <cstdlib>

#include "polykin/suite.hpp"

int main(int argc, char** argv) {
    using namespace polykin;
    const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 20240601ull;
    const auto results = run_suite(desk_profile(), seed, {}, [](const CriterionResult& c) {
        std::printf("AC%-2d %s  %-34s %7.1f s  %s\n", c.id, c.pass ? "PASS" : "FAIL", c.title.c_str(), c.seconds,
                    c.summary.c_str());
        for (const auto& r : c.reports)
            std::printf("       %s %-62s stat %.3e  tol %.3e  sigma %.2e%s%s\n", r.pass ? "ok  " : "FAIL", r.name.c_str(),
                        r.statistic, r.tolerance, r.sigma, r.note.empty() ? "" : "  ", r.note.c_str());
        std::fflush(stdout);
    });
    int failures = 0;
    for (const auto& c : results) failures += !c.pass;
    std::printf("%d of %zu criteria passed\n", static_cast<int>(results.size()) - failures, results.size());
    return failures == 0 ? 0 : 1;
}
