#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "retc/config.hpp"
#include "retc/errors.hpp"
#include "retc/presets.hpp"

using namespace retc;

namespace {

// Scratch directory for config files and CLI artifacts; removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("retc_cli_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }

    std::string file(const std::string& name, const std::string& content) const {
        const auto p = path / name;
        std::ofstream out(p, std::ios::binary);
        out << content;
        return p.string();
    }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

size_t count_lines(const std::string& text) {
    size_t lines = 0;
    for (char ch : text) {
        if (ch == '\n') ++lines;
    }
    return lines;
}

// Splits one CSV line into cells (emitted cells never contain commas).
std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

std::vector<std::string> csv_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    return lines;
}

int run_cli(const std::string& args, const TempDir& dir, const std::string& tag) {
    const char* exe = std::getenv("RETC_CLI");
    REQUIRE_MESSAGE(exe != nullptr, "RETC_CLI must point at the CLI binary");
    const std::string cmd = std::string("\"") + exe + "\" " + args + " > " +
                            dir.sub(tag + ".out") + " 2> " + dir.sub(tag + ".err");
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

const char* kTmsTtcConfig = R"({
  "schema_version": 1,
  "preset": "two_mass_spring",
  "controller": {"kind": "ttc"}
})";

const char* kBrRolloutConfig = R"({
  "schema_version": 1,
  "preset": "batch_reactor",
  "controller": {"kind": "rollout", "variant": 1, "N_bar": 3},
  "horizon_steps": 150
})";

}  // namespace

TEST_SUITE("config_parsing") {
    TEST_CASE("oscillator preset loads the published model") {
        const ExperimentConfig cfg = parse_config_text(kTmsTtcConfig, "inline");
        CHECK(cfg.schema_version == 1);
        CHECK(cfg.preset_name == "two_mass_spring");
        REQUIRE(cfg.plant.n() == 4);
        REQUIRE(cfg.plant.m() == 1);

        // Discretized dynamics as printed (4 decimal places) in the source
        // the preset reproduces.
        Eigen::MatrixXd A_ref(4, 4);
        A_ref << 0.9045, 0.0955, 0.0968, 0.0032,
                 0.0955, 0.9045, 0.0032, 0.0968,
                -1.8466, 1.8466, 0.9045, 0.0955,
                 1.8466, -1.8466, 0.0955, 0.9045;
        Eigen::VectorXd B_ref(4);
        B_ref << 0.0049, 0.0001, 0.0968, 0.0032;
        CHECK((cfg.plant.A - A_ref).cwiseAbs().maxCoeff() <= 1e-4);
        CHECK((cfg.plant.B - B_ref).cwiseAbs().maxCoeff() <= 1e-4);

        CHECK((cfg.plant.Q - 10.0 * Eigen::MatrixXd::Identity(4, 4)).norm() == 0.0);
        CHECK(cfg.plant.R(0, 0) == 1.0);
        CHECK_FALSE(cfg.plant.state_box.has_value());
        CHECK(cfg.spec.g == 1);
        CHECK(cfg.spec.c == 6);
        CHECK(cfg.spec.b == 22);
        Eigen::VectorXd x0_ref(4);
        x0_ref << 1, 0, 1, 0;
        CHECK((cfg.x0 - x0_ref).norm() == 0.0);
        CHECK(cfg.u0.size() == 1);
        CHECK(cfg.u0(0) == 0.0);
        CHECK(cfg.beta0 == 5);
        CHECK(cfg.horizon_steps == 500);
        CHECK(cfg.convergence_tol == 1e-6);
        CHECK(cfg.etc_grid_size == 1001);
        CHECK(cfg.timing_repetitions == 5);
    }

    TEST_CASE("reactor preset loads the published model") {
        const ExperimentConfig cfg = parse_config_text(R"({
            "schema_version": 1,
            "preset": "batch_reactor",
            "controller": {"kind": "rollout", "N_bar": 3}
        })", "inline");
        REQUIRE(cfg.plant.n() == 4);
        REQUIRE(cfg.plant.m() == 2);

        Eigen::MatrixXd A_ref(4, 4);
        A_ref << 1.178, 0.001, 0.512, -0.403,
                -0.051, 0.662, -0.011, 0.061,
                 0.076, 0.335, 0.561, 0.382,
                -0.001, 0.335, 0.089, 0.850;
        Eigen::MatrixXd B_ref(4, 2);
        B_ref << 0.004, -0.0880,
                 0.467, 0.001,
                 0.213, -0.235,
                 0.213, -0.016;
        CHECK((cfg.plant.A - A_ref).cwiseAbs().maxCoeff() <= 1e-3);
        CHECK((cfg.plant.B - B_ref).cwiseAbs().maxCoeff() <= 1e-3);

        CHECK((cfg.plant.Q - 10.0 * Eigen::MatrixXd::Identity(4, 4)).norm() == 0.0);
        CHECK((cfg.plant.R - Eigen::MatrixXd::Identity(2, 2)).norm() == 0.0);
        CHECK(cfg.spec.g == 3);
        CHECK(cfg.spec.c == 8);
        CHECK(cfg.spec.b == 22);
        CHECK(cfg.beta0 == 6);
        CHECK(cfg.u0.size() == 2);
    }

    TEST_CASE("constrained preset carries the boxes") {
        const ExperimentConfig cfg = parse_config_text(R"({
            "schema_version": 1,
            "preset": "two_mass_spring_constrained",
            "controller": {"kind": "rollout", "N_bar": 6}
        })", "inline");
        REQUIRE(cfg.plant.state_box.has_value());
        REQUIRE(cfg.plant.input_box.has_value());
        Eigen::VectorXd hi(4);
        hi << 2, 2, 5, 5;
        CHECK((cfg.plant.state_box->hi - hi).norm() == 0.0);
        CHECK((cfg.plant.state_box->lo + hi).norm() == 0.0);
        CHECK(cfg.plant.input_box->hi(0) == 12.0);
        CHECK(cfg.plant.input_box->lo(0) == -12.0);
    }

    TEST_CASE("fields override preset defaults") {
        const ExperimentConfig cfg = parse_config_text(R"({
            "schema_version": 1,
            "preset": "batch_reactor",
            "controller": {"kind": "rollout", "variant": 2, "N_bar": 5, "sigma_bucket": 1e-6},
            "beta0": 14,
            "horizon_steps": 100,
            "x0": [0.5, 0, 0.5, 0],
            "sweep_horizons": [1, 2, 3],
            "etc_grid_size": 11,
            "timing_horizons": [4, 5],
            "timing_repetitions": 2
        })", "inline");
        CHECK(cfg.beta0 == 14);
        CHECK(cfg.horizon_steps == 100);
        CHECK(cfg.x0(0) == 0.5);
        CHECK(cfg.controller.variant == Variant::V2);
        CHECK(cfg.controller.N_bar == 5);
        CHECK(cfg.controller.sigma_bucket == 1e-6);
        CHECK(cfg.sweep_horizons == std::vector<int>{1, 2, 3});
        CHECK(cfg.etc_grid_size == 11);
        CHECK(cfg.timing_horizons == std::vector<int>{4, 5});
        CHECK(cfg.timing_repetitions == 2);
    }

    TEST_CASE("explicit plant without a preset") {
        const ExperimentConfig cfg = parse_config_text(R"({
            "schema_version": 1,
            "plant": {
                "A": [[0.9, 0.1], [0.0, 1.1]],
                "B": [[0.0], [1.0]],
                "Q": [[1.0, 0.0], [0.0, 2.0]],
                "R": [[0.5]]
            },
            "token_bucket": {"g": 1, "c": 3, "b": 9},
            "controller": {"kind": "rollout", "N_bar": 3},
            "x0": [1.0, -1.0],
            "beta0": 2
        })", "inline");
        CHECK(cfg.preset_name.empty());
        CHECK(cfg.plant.n() == 2);
        CHECK(cfg.plant.A(1, 1) == 1.1);
        CHECK(cfg.spec.c == 3);
        CHECK(cfg.beta0 == 2);
        CHECK(cfg.u0.size() == 1);  // defaults to zero when omitted
        CHECK(cfg.u0(0) == 0.0);
    }

    TEST_CASE("capacity below transmission cost is rejected") {
        CHECK_THROWS_AS(parse_config_text(R"({
            "schema_version": 1,
            "preset": "two_mass_spring",
            "token_bucket": {"g": 1, "c": 6, "b": 4},
            "controller": {"kind": "ttc"}
        })", "inline"), ValidationError);
    }

    TEST_CASE("unknown keys are rejected at every level") {
        for (const char* text : {
                 R"({"schema_version": 1, "preset": "two_mass_spring",
                     "controller": {"kind": "ttc"}, "bogus": 3})",
                 R"({"schema_version": 1, "preset": "two_mass_spring",
                     "controller": {"kind": "ttc", "bogus": 3}})",
                 R"({"schema_version": 1, "preset": "two_mass_spring",
                     "token_bucket": {"g": 1, "c": 6, "b": 22, "bogus": 3},
                     "controller": {"kind": "ttc"}})",
                 R"({"schema_version": 1,
                     "plant": {"A": [[1]], "B": [[1]], "Q": [[1]], "R": [[1]], "bogus": 3},
                     "token_bucket": {"g": 1, "c": 3, "b": 9},
                     "controller": {"kind": "ttc"}, "x0": [1], "beta0": 0})",
             }) {
            try {
                (void)parse_config_text(text, "inline");
                FAIL("expected a validation error for: " << text);
            } catch (const ValidationError& e) {
                CHECK(std::string(e.what()).find("unknown key 'bogus'") != std::string::npos);
            }
        }
    }

    TEST_CASE("schema version must be present and supported") {
        CHECK_THROWS_AS(parse_config_text(R"({
            "preset": "two_mass_spring", "controller": {"kind": "ttc"}
        })", "inline"), ValidationError);
        CHECK_THROWS_AS(parse_config_text(R"({
            "schema_version": 2,
            "preset": "two_mass_spring", "controller": {"kind": "ttc"}
        })", "inline"), ValidationError);
    }

    TEST_CASE("controller kind is constrained") {
        CHECK_THROWS_AS(parse_config_text(R"({
            "schema_version": 1,
            "preset": "two_mass_spring",
            "controller": {"kind": "mpc"}
        })", "inline"), ValidationError);
    }

    TEST_CASE("preset and explicit plant are mutually exclusive") {
        try {
            (void)parse_config_text(R"({
                "schema_version": 1,
                "preset": "two_mass_spring",
                "plant": {"A": [[1]], "B": [[1]], "Q": [[1]], "R": [[1]]},
                "controller": {"kind": "ttc"}
            })", "inline");
            FAIL("expected a validation error");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("not both") != std::string::npos);
        }
    }

    TEST_CASE("malformed JSON reports line and column") {
        try {
            (void)parse_config_text("{\n  \"schema_version\": 1,\n  !\n}", "cfg.json");
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("cfg.json:3:") != std::string::npos);
        }
    }

    TEST_CASE("all problems are reported together") {
        try {
            (void)parse_config_text(R"({
                "schema_version": 9,
                "preset": "two_mass_spring",
                "token_bucket": {"g": 1, "c": 6, "b": 4},
                "controller": {"kind": "ttc"},
                "horizon_steps": 0,
                "mystery": true
            })", "inline");
            FAIL("expected a validation error");
        } catch (const ValidationError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("schema_version") != std::string::npos);
            CHECK(msg.find("unknown key 'mystery'") != std::string::npos);
            CHECK(msg.find("horizon_steps") != std::string::npos);
            CHECK(msg.find("b") != std::string::npos);
        }
    }

    TEST_CASE("trigger level bounds are enforced for the event-triggered kind") {
        CHECK_THROWS_AS(parse_config_text(R"({
            "schema_version": 1,
            "preset": "two_mass_spring",
            "controller": {"kind": "etc", "sigma_trigger": 1.5}
        })", "inline"), ValidationError);
        // The same field is inert for other kinds.
        CHECK_NOTHROW(parse_config_text(R"({
            "schema_version": 1,
            "preset": "two_mass_spring",
            "controller": {"kind": "ttc", "sigma_trigger": 1.5}
        })", "inline"));
    }

    TEST_CASE("missing config file raises a parse error") {
        CHECK_THROWS_AS(load_config("/nonexistent/retc.json"), ParseError);
    }

    TEST_CASE("load_config round-trips through the filesystem") {
        TempDir dir("load");
        const std::string path = dir.file("cfg.json", kTmsTtcConfig);
        const ExperimentConfig cfg = load_config(path);
        CHECK(cfg.preset_name == "two_mass_spring");
    }

    TEST_CASE("preset catalogue") {
        const auto names = preset_names();
        for (const char* expected :
             {"two_mass_spring", "two_mass_spring_constrained", "batch_reactor"}) {
            CHECK(std::find(names.begin(), names.end(), expected) != names.end());
        }
        CHECK_THROWS_AS(make_preset("unheard_of"), ValidationError);
    }
}

TEST_SUITE("cli_subprocess") {
    TEST_CASE("run emits trace, summary, and ingredients") {
        TempDir dir("run");
        const std::string cfg = dir.file("ttc.json", kTmsTtcConfig);
        const int code =
            run_cli("run \"" + cfg + "\" --out " + dir.sub("out") + " --quiet", dir, "run");
        CHECK(code == 0);

        const std::string trace = read_file(dir.sub("out/trace.csv"));
        CHECK(count_lines(trace) == 501);  // header + 500 steps
        const auto lines = csv_lines(trace);
        CHECK(split_csv(lines[0])[0] == "k");

        const std::string summary = read_file(dir.sub("out/summary.csv"));
        const auto srows = csv_lines(summary);
        REQUIRE(srows.size() == 2);
        const auto header = split_csv(srows[0]);
        const auto row = split_csv(srows[1]);
        REQUIRE(header.size() == row.size());
        REQUIRE(header[0] == "total_cost");
        const double total_cost = std::stod(row[0]);
        CHECK(std::abs(total_cost - 3010.0) <= 0.01 * 3010.0);

        CHECK(read_file(dir.sub("out/ingredients.csv")).find("P_x") != std::string::npos);

        // --quiet suppresses all progress output.
        CHECK(read_file(dir.sub("run.out")).empty());
    }

    TEST_CASE("identical configs produce byte-identical artifacts") {
        TempDir dir("det");
        const std::string cfg = dir.file("br.json", kBrRolloutConfig);
        REQUIRE(run_cli("run \"" + cfg + "\" --out " + dir.sub("a") + " --quiet", dir, "a") == 0);
        REQUIRE(run_cli("run \"" + cfg + "\" --out " + dir.sub("b") + " --quiet", dir, "b") == 0);
        for (const char* name : {"trace.csv", "summary.csv", "ingredients.csv"}) {
            CHECK(read_file(dir.sub(std::string("a/") + name)) ==
                  read_file(dir.sub(std::string("b/") + name)));
        }
    }

    TEST_CASE("malformed and invalid configs exit with the validation code") {
        TempDir dir("bad");
        const std::string broken = dir.file("broken.json", "{ not json");
        CHECK(run_cli("run \"" + broken + "\" --quiet", dir, "broken") == 2);

        const std::string invalid = dir.file("invalid.json", R"({
            "schema_version": 1,
            "preset": "two_mass_spring",
            "token_bucket": {"g": 1, "c": 6, "b": 4},
            "controller": {"kind": "ttc"}
        })");
        CHECK(run_cli("run \"" + invalid + "\" --quiet", dir, "invalid") == 2);

        const std::string empty_horizon = dir.file("empty_horizon.json", R"({
            "schema_version": 1,
            "preset": "two_mass_spring",
            "controller": {"kind": "ttc"},
            "horizon_steps": 0
        })");
        CHECK(run_cli("run \"" + empty_horizon + "\" --quiet", dir, "empty") == 2);

        const std::string missing = dir.sub("missing.json");
        CHECK(run_cli("run \"" + missing + "\" --quiet", dir, "missing") == 2);

        // Usage problems share the validation exit code.
        CHECK(run_cli("frobnicate", dir, "verb") == 2);
        CHECK(run_cli("run", dir, "noarg") == 2);
    }

    TEST_CASE("infeasible program exits with the infeasibility code") {
        TempDir dir("infeasible");
        const std::string cfg = dir.file("tight.json", R"({
            "schema_version": 1,
            "preset": "two_mass_spring_constrained",
            "controller": {"kind": "rollout", "variant": 1, "N_bar": 6},
            "beta0": 22,
            "horizon_steps": 10
        })");
        CHECK(run_cli("run \"" + cfg + "\" --out " + dir.sub("out") + " --quiet", dir, "run") ==
              3);
        const std::string err = read_file(dir.sub("run.err"));
        CHECK(err.find("no feasible schedule") != std::string::npos);
    }

    TEST_CASE("sweep-horizon tabulates cost against the horizon") {
        TempDir dir("sweep");
        const std::string cfg = dir.file("sweep.json", R"({
            "schema_version": 1,
            "preset": "batch_reactor",
            "controller": {"kind": "rollout", "variant": 2, "N_bar": 3},
            "sweep_horizons": [1, 2, 3],
            "horizon_steps": 200
        })");
        CHECK(run_cli("sweep-horizon \"" + cfg + "\" --out " + dir.sub("out") + " --quiet", dir,
                      "sweep") == 0);
        const auto lines = csv_lines(read_file(dir.sub("out/sweep.csv")));
        REQUIRE(lines.size() == 4);
        CHECK(split_csv(lines[0]) ==
              std::vector<std::string>{"N_bar", "variant", "total_cost", "transmissions",
                                       "converged"});
        for (size_t i = 1; i < lines.size(); ++i) {
            const auto row = split_csv(lines[i]);
            REQUIRE(row.size() == 5);
            CHECK(row[0] == std::to_string(i));
            CHECK(row[1] == "2");
            CHECK(std::stod(row[2]) > 0.0);
            CHECK(row[4] == "1");
        }

        // The verb refuses non-rollout controllers.
        const std::string ttc = dir.file("ttc.json", kTmsTtcConfig);
        CHECK(run_cli("sweep-horizon \"" + ttc + "\" --quiet", dir, "wrongkind") == 2);
    }

    TEST_CASE("etc-search writes the grid and the summary") {
        TempDir dir("etc");
        const std::string cfg = dir.file("etc.json", R"({
            "schema_version": 1,
            "preset": "two_mass_spring",
            "controller": {"kind": "etc"},
            "etc_grid_size": 5,
            "horizon_steps": 120
        })");
        CHECK(run_cli("etc-search \"" + cfg + "\" --out " + dir.sub("out") + " --quiet", dir,
                      "etc") == 0);
        const auto grid = csv_lines(read_file(dir.sub("out/etc_grid.csv")));
        REQUIRE(grid.size() == 6);  // header + 5 grid points
        CHECK(split_csv(grid[1])[0] == "0");
        CHECK(split_csv(grid[5])[0] == "1");

        const auto summary = csv_lines(read_file(dir.sub("out/etc_summary.csv")));
        REQUIRE(summary.size() == 2);
        const auto header = split_csv(summary[0]);
        CHECK(header[0] == "best_sigma");
        CHECK(split_csv(summary[1]).size() == header.size());
    }

    TEST_CASE("timing reports one row per horizon") {
        TempDir dir("timing");
        const std::string cfg = dir.file("timing.json", R"({
            "schema_version": 1,
            "preset": "two_mass_spring",
            "controller": {"kind": "rollout", "variant": 2, "N_bar": 2},
            "timing_horizons": [1, 2],
            "timing_repetitions": 1
        })");
        CHECK(run_cli("timing \"" + cfg + "\" --out " + dir.sub("out") + " --quiet", dir,
                      "timing") == 0);
        const auto lines = csv_lines(read_file(dir.sub("out/timing.csv")));
        REQUIRE(lines.size() == 3);
        for (size_t i = 1; i < lines.size(); ++i) {
            const auto row = split_csv(lines[i]);
            REQUIRE(row.size() == 4);
            CHECK(row[0] == std::to_string(i));
            CHECK(std::stod(row[1]) > 0.0);            // median seconds
            CHECK(std::stod(row[3]) >= 1.0);           // schedules examined
        }
    }

    TEST_CASE("verify-ingredients certifies the decrease conditions") {
        TempDir dir("verify");
        const std::string v1 = dir.file("v1.json", R"({
            "schema_version": 1,
            "preset": "two_mass_spring",
            "controller": {"kind": "rollout", "variant": 1, "N_bar": 8}
        })");
        CHECK(run_cli("verify-ingredients \"" + v1 + "\" --out " + dir.sub("v1") + " --quiet",
                      dir, "v1") == 0);
        const auto lines1 = csv_lines(read_file(dir.sub("v1/verify.csv")));
        REQUIRE(lines1.size() == 2);  // whole-cycle certificate: one inequality
        CHECK(std::stod(split_csv(lines1[1])[1]) <= 1e-8);

        const std::string v2 = dir.file("v2.json", R"({
            "schema_version": 1,
            "preset": "two_mass_spring",
            "controller": {"kind": "rollout", "variant": 2, "N_bar": 4}
        })");
        CHECK(run_cli("verify-ingredients \"" + v2 + "\" --out " + dir.sub("v2") + " --quiet",
                      dir, "v2") == 0);
        const auto lines2 = csv_lines(read_file(dir.sub("v2/verify.csv")));
        REQUIRE(lines2.size() == 7);  // one inequality per cycle phase
        for (size_t i = 1; i < lines2.size(); ++i) {
            CHECK(std::stod(split_csv(lines2[i])[1]) <= 1e-8);
        }
    }
}
