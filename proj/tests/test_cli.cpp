#include <isomortar/scenarios.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace isomortar;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("isomortar_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + ISOMORTAR_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Second row of patch_error.csv: p_bar, stress_error, pressure_error.
std::vector<double> patch_errors(const fs::path& dir) {
    std::istringstream is(slurp(dir / "patch_error.csv"));
    std::string header, row;
    std::getline(is, header);
    std::getline(is, row);
    std::vector<double> v;
    std::istringstream rs(row);
    for (std::string cell; std::getline(rs, cell, ',');) v.push_back(std::stod(cell));
    return v;
}

}  // namespace

TEST(Cli, PatchTestXmPassesSmFails) {
    const fs::path d = scratch("patch");
    ASSERT_EQ(cli("run --scenario patch1 --formulation xm --pass 2hp --ngp 5 --out " + (d / "xm").string(), d / "xm.log"), 0)
        << slurp(d / "xm.log");
    ASSERT_EQ(cli("run --scenario patch1 --formulation sm --pass 2hp --ngp 5 --out " + (d / "sm").string(), d / "sm.log"), 0)
        << slurp(d / "sm.log");
    const auto xm = patch_errors(d / "xm"), sm = patch_errors(d / "sm");
    ASSERT_EQ(xm.size(), 3u);
    ASSERT_EQ(sm.size(), 3u);
    EXPECT_LT(xm[2], 1e-9);
    EXPECT_GT(sm[2], 1e-3);
    for (const char* f : {"loaddisp.csv", "pressure_trace.csv", "manifest.txt", "fields_step2.txt"})
        EXPECT_TRUE(fs::exists(d / "xm" / f)) << f;
}

TEST(Cli, SweepWritesOneDirectoryPerPoint) {
    const fs::path d = scratch("sweep");
    ASSERT_EQ(cli("run --scenario patch1 --formulation gpts,xm --ngp 3,5 --out " + d.string(), d / "log"), 0)
        << slurp(d / "log");
    int dirs = 0;
    for (const auto& e : fs::directory_iterator(d))
        if (e.is_directory()) ++dirs;
    EXPECT_EQ(dirs, 4);
}

TEST(Cli, ConfigErrorsExitWithOne) {
    const fs::path d = scratch("errors");
    EXPECT_EQ(cli("run --scenario patch1 --bogus", d / "a.log"), 1);
    EXPECT_EQ(cli("run --scenario nope --out " + d.string(), d / "b.log"), 1);
    EXPECT_NE(slurp(d / "b.log").find("unknown scenario"), std::string::npos);
    EXPECT_EQ(cli("run --out " + d.string(), d / "c.log"), 1);
    EXPECT_EQ(cli("run --scenario patch1 --formulation xm --ngp 0 --out " + d.string(), d / "d.log"), 1);
    EXPECT_EQ(cli("run --scene " + (d / "missing.scene").string() + " --out " + d.string(), d / "e.log"), 1);
}

TEST(Cli, SolverAbortExitsWithTwo) {
    const fs::path d = scratch("abort");
    std::string scene = serialize_scene(make_indent2d(-2.0, 16, 8, 1));
    {
        std::ofstream os(d / "hard.scene");
        os << scene << "\n[solver]\nmax_iterations 1\nmax_cuts 0\n";
    }
    EXPECT_EQ(cli("run --scene " + (d / "hard.scene").string() + " --formulation gpts --out " + (d / "out").string(), d / "log"), 2)
        << slurp(d / "log");
    EXPECT_NE(slurp(d / "out" / "manifest.txt").find("aborted 1"), std::string::npos);
}

TEST(Cli, SceneRoundTripReproducesRun) {
    const fs::path d = scratch("scene");
    ASSERT_EQ(cli("scene --scenario patch2 --out " + (d / "p2.scene").string(), d / "s.log"), 0) << slurp(d / "s.log");
    const Scene s = load_scene(slurp(d / "p2.scene"));
    EXPECT_EQ(serialize_scene(s), serialize_scene(make_patch2()));

    const std::string opts = " --formulation xm --pass 2hp --ngp 5 --patch-body upper";
    ASSERT_EQ(cli("run --scene " + (d / "p2.scene").string() + opts + " --out " + (d / "a").string(), d / "a.log"), 0)
        << slurp(d / "a.log");
    ASSERT_EQ(cli("run --scenario patch2" + opts + " --out " + (d / "b").string(), d / "b.log"), 0) << slurp(d / "b.log");
    for (const char* f : {"loaddisp.csv", "patch_error.csv", "pressure_trace.csv", "fields_step2.txt"})
        EXPECT_EQ(slurp(d / "a" / f), slurp(d / "b" / f)) << f;
}

TEST(Cli, RunsAreByteIdentical) {
    const fs::path d = scratch("repro");
    for (const char* sub : {"a", "b"})
        ASSERT_EQ(cli(std::string("run --scenario indent2d --formulation xm --pass 2hp --out ") + (d / sub).string(),
                      d / (std::string(sub) + ".log")),
                  0);
    for (const auto& e : fs::directory_iterator(d / "a"))
        EXPECT_EQ(slurp(e.path()), slurp(d / "b" / e.path().filename())) << e.path().filename();
}
