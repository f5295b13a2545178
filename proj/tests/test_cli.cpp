#include <eqrom/eqrom.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("eqrom_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

/// Exit status of the command line tool with `args`; output goes to `log`.
int cli(const std::string& args, const fs::path& log)
{
    const std::string cmd = std::string(EQROM_CLI) + " " + args + " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string tiny(const fs::path& out) { return "--resolution 1 --layers 1 --steps 4 -o " + out.string(); }

} // namespace

TEST(Cli, ExitCodes)
{
    const auto d = scratch("codes");
    EXPECT_EQ(cli("--help", d / "log"), 0);
    EXPECT_EQ(cli("", d / "log"), 2);
    EXPECT_EQ(cli("frobnicate", d / "log"), 2);
    EXPECT_EQ(cli("hf run --steps notanumber", d / "log"), 2);
    EXPECT_EQ(cli("hf run --mu 0.9,1 " + tiny(d / "bad"), d / "log"), 2);
    EXPECT_EQ(cli("online -o " + (d / "o").string(), d / "log"), 2);
    EXPECT_EQ(cli("online --artifacts " + (d / "absent").string() + " --mu 0.25,10 -o " + (d / "o").string(),
                  d / "log"),
              2);
    eqrom::io::write_text(d / "bad.json", "{\"unknown_key\": 1}");
    EXPECT_EQ(cli("hf run -c " + (d / "bad.json").string(), d / "log"), 2);
    eqrom::io::write_text(d / "diverge.json", "{\"tolerances\": {\"newton_max_iters\": 1, \"max_halvings\": 0}}");
    EXPECT_EQ(cli("hf run -c " + (d / "diverge.json").string() + " " + tiny(d / "div"), d / "log"), 3);
}

TEST(Cli, MeshGenerationAndImport)
{
    const auto d = scratch("mesh");
    ASSERT_EQ(cli("mesh gen --resolution 1 --layers 1 -o " + (d / "p.msh").string(), d / "gen"), 0);
    ASSERT_EQ(cli("mesh import " + (d / "p.msh").string() + " --vtk " + (d / "p.vtk").string(), d / "imp"), 0);
    EXPECT_EQ(eqrom::io::read_text(d / "gen"), eqrom::io::read_text(d / "imp"));
    EXPECT_TRUE(fs::exists(d / "p.vtk"));
}

TEST(Cli, GreedyThenOnlineIsDeterministic)
{
    const auto d = scratch("flow");
    eqrom::io::write_text(d / "g.json",
                          "{\"greedy\": {\"train_nu\": 3, \"max_iters\": 2}, \"tolerances\": {\"delta\": 1e-5}}");
    const std::string g = "greedy -c " + (d / "g.json").string() + " ";
    ASSERT_EQ(cli(g + tiny(d / "g1"), d / "log1"), 0) << eqrom::io::read_text(d / "log1");
    ASSERT_EQ(cli(g + tiny(d / "g2") + " --threads 2", d / "log2"), 0);
    for (const char* f : {"iterations.csv", "indicator_iter1.csv", "artifacts/basis_u.bin", "artifacts/eq_volume.csv",
                          "artifacts/indicator.bin"}) {
        EXPECT_EQ(eqrom::io::read_text(d / "g1" / f), eqrom::io::read_text(d / "g2" / f)) << f;
    }

    ASSERT_EQ(cli("hf run --mu 0.25,20 " + tiny(d / "hf"), d / "log3"), 0);
    const auto hf = eqrom::io::read_json(d / "hf" / "trajectory.json");
    EXPECT_TRUE(hf.contains("wall_time"));
    const std::string on = "online --artifacts " + (d / "g1" / "artifacts").string() +
                           " --mu 0.25,20 --hf " + (d / "hf" / "trajectory.bin").string() + " " + tiny(d / "on");
    ASSERT_EQ(cli(on, d / "log4"), 0) << eqrom::io::read_text(d / "log4");
    const auto rows = eqrom::io::parse_csv(eqrom::io::read_text(d / "on" / "online_summary.csv"));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_GE(eqrom::io::parse_double(rows[1][5], "e_app"), eqrom::io::parse_double(rows[1][4], "e_proj") * 0.999);

    ASSERT_EQ(cli("report " + (d / "g1").string(), d / "log5"), 0);
    EXPECT_TRUE(fs::exists(d / "g1" / "summary.txt"));
    EXPECT_EQ(cli("report " + d.string(), d / "log6"), 2);
}
