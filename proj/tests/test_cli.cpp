#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "dpc/cli/commands.hpp"

namespace fs = std::filesystem;
using namespace dpc;
using namespace dpc::cli;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("dpc_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string write(const std::string& name, const std::string& text) {
        const fs::path p = dir_ / name;
        std::ofstream(p) << text;
        return p.string();
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    /// A short 4-stage run: 40 us at 5 MHz, activation after 10 us.
    std::string short_scenario(const std::string& solver_extra = "") {
        return write("short.scenario",
                     "chain:\n  - {axis: S1}\n  - {axis: S3}\n  - {axis: S1}\n  - {axis: S3}\n"
                     "loop:\n  sample_rate_hz: 5.0e6\n  activation_time_s: 1.0e-5\n  duration_s: 4.0e-5\n"
                     "  phi_initial: [0.5, -1.5, 0.2, 1.8]\n"
                     "solver:\n  method: gradient_projection\n" +
                         solver_extra);
    }

    fs::path dir_;
    std::ostringstream out_;
    std::ostringstream err_;
};

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_F(CliTest, SimulateWritesCsvAndSummary) {
    const std::string csv = path("trace.csv");
    ASSERT_EQ(cmd_simulate(short_scenario(), csv, 10, out_, err_), kOk) << err_.str();
    const std::string text = slurp(csv);
    EXPECT_EQ(text.substr(0, text.find('\n')), "t,s1,s2,s3,err,phi_1,phi_2,phi_3,phi_4,ns_active,sigma2");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 20);
    for (const char* field : {"convergence_time", "steady_state_error", "max_abs_phi", "nullspace_duty",
                              "bounded_fraction"}) {
        EXPECT_NE(out_.str().find(field), std::string::npos) << field;
    }
}

TEST_F(CliTest, SimulateConfigErrorLeavesNoCsv) {
    const std::string bad = write("bad.scenario", "chain:\n  - {axis: S1}\nloop:\n  target_sop: [0, 0, 0]\n");
    const std::string csv = path("never.csv");
    EXPECT_EQ(cmd_simulate(bad, csv, 10, out_, err_), kConfigError);
    EXPECT_FALSE(fs::exists(csv));
    EXPECT_NE(err_.str().find("bad.scenario:4:"), std::string::npos) << err_.str();
}

TEST_F(CliTest, SimulateIoErrors) {
    EXPECT_EQ(cmd_simulate(path("missing.scenario"), path("x.csv"), 10, out_, err_), kIoError);
    EXPECT_EQ(cmd_simulate(short_scenario(), (dir_ / "no" / "such" / "dir.csv").string(), 10, out_, err_), kIoError);
    EXPECT_EQ(cmd_simulate(short_scenario(), path("x.csv"), 0, out_, err_), kConfigError);
}

TEST_F(CliTest, SimulateIsDeterministic) {
    const std::string sc = short_scenario();
    ASSERT_EQ(cmd_simulate(sc, path("a.csv"), 1, out_, err_), kOk);
    ASSERT_EQ(cmd_simulate(sc, path("b.csv"), 1, out_, err_), kOk);
    EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
}

TEST_F(CliTest, CheckJacobianPassesOnBundledChains) {
    for (const char* name : {"fig3.scenario", "fig4.scenario"}) {
        JacobianCheckReport rep;
        ASSERT_EQ(cmd_check_jacobian(std::string(DPC_SCENARIO_DIR) + "/" + name, 1000, 5, out_, err_, &rep), kOk)
            << err_.str();
        EXPECT_EQ(rep.trials, 1000);
        EXPECT_LT(rep.max_fd_error, 1e-5);
        EXPECT_LT(rep.max_orthogonality, 1e-9);
        EXPECT_LT(rep.max_manipulability, 1e-12);
        EXPECT_LT(rep.max_minor_norm, 1e-9);
    }
    EXPECT_NE(out_.str().find("minor"), std::string::npos);
}

TEST_F(CliTest, CheckJacobianRejectsZeroTrials) {
    EXPECT_EQ(cmd_check_jacobian(short_scenario(), 0, 1, out_, err_), kConfigError);
    EXPECT_EQ(cmd_check_jacobian(path("missing.scenario"), 10, 1, out_, err_), kIoError);
}

TEST_F(CliTest, SweepMu) {
    const std::string outdir = path("mu");
    ASSERT_EQ(cmd_sweep(short_scenario(), "mu=0.05,0.1,0.2", outdir, 10, out_, err_), kOk) << err_.str();
    for (int i = 0; i < 3; ++i) {
        EXPECT_TRUE(fs::exists(fs::path(outdir) / ("mu_" + std::to_string(i) + ".csv")));
    }
    const std::string table = slurp((fs::path(outdir) / "summary.csv").string());
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 4);
    EXPECT_NE(table.find("solver.mu,0.2,mu_2.csv"), std::string::npos) << table;
}

TEST_F(CliTest, SweepThresholdTable) {
    // Duty is not monotone in the threshold on every trace (a lower threshold
    // also pulls the signals back sooner), so only the ends are pinned here.
    const std::string outdir = path("thr");
    const std::string sc = short_scenario("  nullspace_threshold: 1.0\n");
    ASSERT_EQ(cmd_sweep(sc, "nullspace_threshold=0.5,1.0,1.5,100", outdir, 10, out_, err_), kOk) << err_.str();
    std::ifstream table(fs::path(outdir) / "summary.csv");
    std::string line;
    std::getline(table, line);
    std::vector<double> duty;
    while (std::getline(table, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) {
            cells.push_back(c);
        }
        ASSERT_EQ(cells.size(), 10u);
        duty.push_back(std::stod(cells[7]));
        EXPECT_GE(duty.back(), 0.0);
        EXPECT_LE(duty.back(), 1.0);
    }
    ASSERT_EQ(duty.size(), 4u);
    EXPECT_GT(duty[0], 0.0);
    EXPECT_EQ(duty[3], 0.0);
    EXPECT_GE(duty[0], duty[2]);
}

TEST_F(CliTest, SweepRejectsBadSpecs) {
    const std::string sc = short_scenario();
    EXPECT_EQ(cmd_sweep(sc, "mu=", path("a"), 10, out_, err_), kConfigError);
    EXPECT_EQ(cmd_sweep(sc, "warp_factor=1,2", path("b"), 10, out_, err_), kConfigError);
    EXPECT_EQ(cmd_sweep(sc, "mu=0.1,x", path("c"), 10, out_, err_), kConfigError);
    EXPECT_EQ(cmd_sweep(sc, "mu=0.1,1.5", path("d"), 10, out_, err_), kConfigError);
    EXPECT_FALSE(fs::exists(path("d")));
}

TEST(SweepKeys, ResolveSuffixes) {
    EXPECT_EQ(resolve_sweep_key("mu"), "solver.mu");
    EXPECT_EQ(resolve_sweep_key("solver.nullspace_threshold"), "solver.nullspace_threshold");
    EXPECT_EQ(resolve_sweep_key("drift_rate_rad_s"), "scrambler.drift_rate_rad_s");
    EXPECT_EQ(resolve_sweep_key("nope"), "");
}

TEST(Binary, ExitCodes) {
    const std::string exe = DPC_CLI_PATH;
    auto status = [](const std::string& cmd) {
        const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    const std::string fig3 = std::string(DPC_SCENARIO_DIR) + "/fig3.scenario";
    EXPECT_EQ(status(exe + " check-jacobian " + fig3 + " --trials 50"), 0);
    EXPECT_EQ(status(exe + " check-jacobian " + fig3 + " --trials 0"), 2);
    EXPECT_EQ(status(exe + " frobnicate"), 2);
    EXPECT_EQ(status(exe + " simulate /nonexistent.scenario --out /tmp/x.csv"), 3);
}
