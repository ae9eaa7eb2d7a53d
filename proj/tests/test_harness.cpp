#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <sys/wait.h>

#include "esi/config.hpp"
#include "esi/harness.hpp"
#include "esi/io.hpp"

using namespace esi;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = ESI_SCENARIO_DIR;

std::string config_error(const std::string& text) {
    std::istringstream in(text);
    try {
        config::parse_scenario(in, "test.ini");
    } catch (const config::ConfigError& e) {
        return e.what();
    }
    return "";
}

fs::path temp_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("esi_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(ESI_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, SyntaxErrorReportsLine) {
    const auto msg = config_error("[run]\nseed = 1\n[broken\n");
    EXPECT_EQ(msg.rfind("test.ini:3:", 0), 0u) << msg;
}

TEST(Config, UnknownKeyNamesSectionAndKey) {
    const auto msg = config_error("[run]\nseed = 1\n[scheme]\nkind = entangled\ntelescoops = 2\n");
    EXPECT_NE(msg.find("[scheme]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("telescoops"), std::string::npos) << msg;
}

TEST(Config, FieldValidationMessage) {
    const auto msg = config_error("[scheme]\nkind = w_state\ntelescopes = 1\n");
    EXPECT_NE(msg.find("telescopes: must be >= 2 (got 1)"), std::string::npos) << msg;
}

TEST(Config, UnknownSectionAndBadValues) {
    EXPECT_NE(config_error("[runn]\nseed = 1\n").find("unknown section"), std::string::npos);
    EXPECT_NE(config_error("[run]\nslots = many\n").find("slots"), std::string::npos);
    EXPECT_NE(config_error("[run]\npipeline = simulate\n").find("[scheme]"), std::string::npos);
    EXPECT_NE(config_error("[repeater]\nmethod = guess\n").find("method"), std::string::npos);
}

TEST(Config, ParsesScenarioFiles) {
    const auto c = config::load_scenario(kScenarios / "chara_like.ini");
    ASSERT_TRUE(c.scheme);
    EXPECT_EQ(c.scheme->delta_schedule.size(), 8u);
    ASSERT_EQ(c.baselines.size(), 1u);
    EXPECT_EQ(c.baselines[0].bx, 330.0);
    EXPECT_TRUE(c.wants("sensitivity"));
    const auto r = config::load_scenario(kScenarios / "repeater_chain.ini");
    ASSERT_TRUE(r.chain);
    EXPECT_NEAR(r.chain->link.length_km, 25.0, 1e-12);
    EXPECT_TRUE(r.r_from_chain);
}

TEST(EventLog, RoundTrip) {
    auto cfg = config::load_scenario(kScenarios / "w_state.ini");
    cfg.slots = 5000;
    const auto log = harness::simulate(cfg, 3);
    ASSERT_FALSE(log.records.empty());
    const auto text = io::event_log_string(log);
    std::istringstream first(text);
    std::string header;
    std::getline(first, header);
    EXPECT_NE(header.find("\"schema\":\"esi.eventlog\""), std::string::npos);
    EXPECT_NE(header.find("\"version\":1"), std::string::npos);
    std::istringstream in(text);
    const auto back = io::read_event_log(in);
    EXPECT_EQ(back.records, log.records);
    EXPECT_EQ(back.telescopes, log.telescopes);
    EXPECT_EQ(back.slots, log.slots);
    EXPECT_EQ(io::event_log_string(back), text);
}

TEST(EventLog, ReaderDiagnostics) {
    std::istringstream bad_header("{\"schema\":\"other\",\"version\":1}\n");
    EXPECT_ANY_THROW(io::read_event_log(bad_header));
    schemes::EventLog log;
    log.records = {{5, 0, 1, true, 0.0}, {3, 1, 1, true, 0.0}};
    std::istringstream unordered(io::event_log_string(log));
    try {
        io::read_event_log(unordered);
        FAIL();
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(Harness, SimulationIsDeterministic) {
    auto cfg = config::load_scenario(kScenarios / "chara_like.ini");
    cfg.slots = 100000;
    EXPECT_EQ(io::event_log_string(harness::simulate(cfg, 1, 1)), io::event_log_string(harness::simulate(cfg, 1, 3)));
}

TEST(Harness, StagesWriteVersionedArtifacts) {
    const auto dir = temp_dir("stages");
    auto cfg = config::load_scenario(kScenarios / "chara_like.ini");
    cfg.slots = 100000;
    harness::RunOptions opt;
    opt.out_dir = dir.string();
    std::ostringstream log;
    harness::run_scenario(harness::Context(cfg, opt, log));
    EXPECT_EQ(slurp(dir / "summary.csv").rfind("# esi.summary v1\n", 0), 0u);
    EXPECT_EQ(slurp(dir / "fits.csv").rfind("# esi.fits v1\n", 0), 0u);
    EXPECT_EQ(slurp(dir / "budget.csv").rfind("# esi.budget v1\n", 0), 0u);
    EXPECT_EQ(slurp(dir / "budget.txt").rfind("# esi.budget_text v1\n", 0), 0u);
    EXPECT_TRUE(fs::exists(dir / "events.jsonl"));
    EXPECT_TRUE(fs::exists(dir / "fringe_0_1.csv"));
}

TEST(Cli, SensitivityDefault) {
    const auto dir = temp_dir("cli_sens");
    ASSERT_EQ(run_cli("sensitivity --out-dir " + dir.string()), 0);
    const auto text = slurp(dir / "budget.txt");
    std::smatch m;
    ASSERT_TRUE(std::regex_search(text, m, std::regex(R"(limiting magnitude\s+([0-9.]+))")));
    EXPECT_NEAR(std::stod(m[1]), 7.4, 0.1);
    const auto improved = temp_dir("cli_sens_improved");
    ASSERT_EQ(run_cli("sensitivity --budget improved --out-dir " + improved.string()), 0);
}

TEST(Cli, RunScenarios) {
    const auto dir = temp_dir("cli_run");
    EXPECT_EQ(run_cli("run --config " + (kScenarios / "repeater_chain.ini").string() + " --out-dir " + dir.string()), 0);
    EXPECT_EQ(slurp(dir / "chain.csv").rfind("# esi.chain v1\n", 0), 0u);
    EXPECT_EQ(run_cli("run --config " + (kScenarios / "binary_image.ini").string() + " --out-dir " + dir.string()), 0);
    const auto pgm = slurp(dir / "image.pgm");
    EXPECT_EQ(pgm.rfind("P2\n# esi.image v1\n", 0), 0u);
}

TEST(Cli, EstimateFromEventLog) {
    const auto dir = temp_dir("cli_est");
    auto cfg = config::load_scenario(kScenarios / "direct.ini");
    const auto log = harness::simulate(cfg, 7);
    {
        std::ofstream f(dir / "events.jsonl", std::ios::binary);
        io::write_event_log(f, log);
    }
    EXPECT_EQ(run_cli("estimate --events " + (dir / "events.jsonl").string() + " --out-dir " + dir.string()), 0);
    EXPECT_EQ(slurp(dir / "fits.csv").rfind("# esi.fits v1\n", 0), 0u);
}

TEST(Cli, ExitCodes) {
    const auto dir = temp_dir("cli_codes");
    {
        std::ofstream f(dir / "bad.ini");
        f << "[scheme]\nkind = w_state\ntelescopes = 1\n";
    }
    EXPECT_EQ(run_cli("run --config " + (dir / "bad.ini").string()), harness::kConfigError);
    {
        std::ofstream f(dir / "dark.ini");
        f << "[sensitivity]\nr = 0\n";
    }
    EXPECT_EQ(run_cli("sensitivity --config " + (dir / "dark.ini").string() + " --out-dir " + dir.string()),
              harness::kInfeasibleBudget);
    EXPECT_NE(run_cli("no-such-command"), 0);
    EXPECT_NE(run_cli("run --analytic --monte-carlo --config x.ini"), 0);
}
