#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "mvlat/commands.hpp"
#include "mvlat/io.hpp"

using namespace mvlat;
namespace fs = std::filesystem;

#ifndef MVLAT_CLI_PATH
#define MVLAT_CLI_PATH "/tmp/mvlat_cli"
#endif

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("mvlat_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str(const std::string& child = "") const {
        return child.empty() ? path.string() : (path / child).string();
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> parse_table(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

// Small experiment: N = 200, width-8 nets, two outer iterations.
ExperimentConfig tiny_experiment(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.gen.n = 200;
    cfg.gen.seed = 5;
    cfg.model.hidden_width = 8;
    cfg.model.hidden_layers = 2;
    cfg.train.batch_b1 = 32;
    cfg.train.batch_b2 = 32;
    cfg.train.inner_epochs = 1;
    cfg.train.max_outer_iters = 2;
    cfg.train.stop_matching_loss = 0.0;
    cfg.train.seed = 5;
    cfg.eval.fresh_eval_seed = 900;
    cfg.output_dir = out_dir;
    return cfg;
}

std::string write_config(const TempDir& dir, const ExperimentConfig& cfg,
                         const std::string& name = "config.json") {
    const std::string path = dir.str(name);
    std::ofstream out(path);
    out << experiment_config_to_json(cfg).dump(2) << "\n";
    return path;
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(MVLAT_CLI_PATH) + " " + args).c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("gen writes a loadable dataset and reruns byte-identically", "[cli][gen]") {
    TempDir dir;
    const std::string cfg_path = write_config(dir, tiny_experiment(dir.str("out_a")));
    std::ostringstream log;
    REQUIRE(cmd_gen(cfg_path, "", std::nullopt, log) == 0);
    CHECK(log.str().find("SPR view1") != std::string::npos);

    const Dataset ds = load_dataset(dir.str("out_a"));
    CHECK(ds.x1.rows() == 200);

    REQUIRE(cmd_gen(cfg_path, dir.str("out_b"), std::nullopt, log) == 0);
    for (const char* name : {"view1.csv", "view2.csv", "latents.csv", "provenance.json"})
        CHECK(slurp(dir.str("out_a") + "/" + name) == slurp(dir.str("out_b") + "/" + name));

    SECTION("seed override changes the data") {
        REQUIRE(cmd_gen(cfg_path, dir.str("out_c"), 77, log) == 0);
        CHECK(slurp(dir.str("out_a") + "/view1.csv") != slurp(dir.str("out_c") + "/view1.csv"));
    }
    SECTION("invalid shared dimension surfaces as an exception") {
        ExperimentConfig bad = tiny_experiment(dir.str("out_bad"));
        bad.gen.d_shared = 3;
        bad.gen.mixer_hidden = 8;  // wide enough that the mixer itself is fine
        const std::string bad_path = write_config(dir, bad, "bad.json");
        CHECK_THROWS_WITH(cmd_gen(bad_path, "", std::nullopt, log),
                          Catch::Matchers::ContainsSubstring("2-D"));
    }
}

TEST_CASE("train emits checkpoint, slack and history with exit-code semantics", "[cli][train]") {
    TempDir dir;
    ExperimentConfig cfg = tiny_experiment(dir.str("run"));
    const std::string cfg_path = write_config(dir, cfg);
    std::ostringstream log;
    REQUIRE(cmd_gen(cfg_path, dir.str("data"), std::nullopt, log) == 0);

    SECTION("iteration-capped run returns 3") {
        CHECK(cmd_train(cfg_path, dir.str("data"), "", std::nullopt, std::nullopt, log) == 3);
        CHECK(fs::exists(dir.str("run") + "/checkpoint.json"));
        CHECK(fs::exists(dir.str("run") + "/slack.csv"));
        const auto history = parse_table(slurp(dir.str("run") + "/history.csv"));
        REQUIRE(history.size() == 3);  // header + 2 outer iterations
        CHECK(history[0][0] == "outer_iter");
        CHECK(log.str().find("iteration-capped") != std::string::npos);

        const ModelBundle loaded = load_checkpoint(dir.str("run") + "/checkpoint.json");
        CHECK(loaded.dims.d == 2);

        const CsvTable slack = read_csv(dir.str("run") + "/slack.csv");
        CHECK(slack.headers == std::vector<std::string>{"u_0", "u_1"});
        CHECK(slack.data.rows() == 200);
    }
    SECTION("a generous stopping rule returns 0") {
        ExperimentConfig easy = cfg;
        easy.train.stop_matching_loss = 1e9;
        easy.output_dir = dir.str("easy");
        const std::string easy_path = write_config(dir, easy, "easy.json");
        CHECK(cmd_train(easy_path, dir.str("data"), "", std::nullopt, std::nullopt, log) == 0);
        CHECK(log.str().find("converged") != std::string::npos);
    }
    SECTION("max-outer-iters 0 writes the initial checkpoint") {
        CHECK(cmd_train(cfg_path, dir.str("data"), dir.str("zero"), std::nullopt, 0, log) == 3);
        const auto history = parse_table(slurp(dir.str("zero") + "/history.csv"));
        CHECK(history.size() == 1);  // header only
        CHECK(fs::exists(dir.str("zero") + "/checkpoint.json"));
    }
    SECTION("seed override changes history but not its schema") {
        REQUIRE(cmd_train(cfg_path, dir.str("data"), dir.str("s5"), std::nullopt, std::nullopt,
                          log) == 3);
        REQUIRE(cmd_train(cfg_path, dir.str("data"), dir.str("s6"), 6, std::nullopt, log) == 3);
        const std::string h5 = slurp(dir.str("s5") + "/history.csv");
        const std::string h6 = slurp(dir.str("s6") + "/history.csv");
        CHECK(h5 != h6);
        CHECK(parse_table(h5)[0] == parse_table(h6)[0]);
    }
    SECTION("rerun is byte-identical") {
        REQUIRE(cmd_train(cfg_path, dir.str("data"), dir.str("r1"), std::nullopt, std::nullopt,
                          log) == 3);
        REQUIRE(cmd_train(cfg_path, dir.str("data"), dir.str("r2"), std::nullopt, std::nullopt,
                          log) == 3);
        for (const char* name : {"checkpoint.json", "slack.csv", "history.csv"})
            CHECK(slurp(dir.str("r1") + "/" + name) == slurp(dir.str("r2") + "/" + name));
    }
    SECTION("small B2 prints the bias warning") {
        ExperimentConfig warn = cfg;
        warn.train.batch_b2 = 8;
        warn.output_dir = dir.str("warn");
        const std::string warn_path = write_config(dir, warn, "warn.json");
        std::ostringstream wlog;
        cmd_train(warn_path, dir.str("data"), "", std::nullopt, 1, wlog);
        CHECK(wlog.str().find("warning") != std::string::npos);
    }
    SECTION("config dims must match the dataset") {
        ExperimentConfig other = cfg;
        other.gen.d_private1 = 2;
        const std::string other_path = write_config(dir, other, "other.json");
        CHECK_THROWS_WITH(
            cmd_train(other_path, dir.str("data"), "", std::nullopt, std::nullopt, log),
            Catch::Matchers::ContainsSubstring("do not match"));
    }
}

TEST_CASE("eval writes the report pair deterministically", "[cli][eval]") {
    TempDir dir;
    ExperimentConfig cfg = tiny_experiment(dir.str("run"));
    const std::string cfg_path = write_config(dir, cfg);
    std::ostringstream log;
    REQUIRE(cmd_gen(cfg_path, dir.str("data"), std::nullopt, log) == 0);
    REQUIRE(cmd_train(cfg_path, dir.str("data"), "", std::nullopt, std::nullopt, log) == 3);
    const std::string ckpt = dir.str("run") + "/checkpoint.json";

    REQUIRE(cmd_eval(cfg_path, ckpt, dir.str("data"), dir.str("e1"), std::nullopt, log) == 0);
    const auto report = parse_table(slurp(dir.str("e1") + "/mi_report.csv"));
    REQUIRE(report.size() == 2);
    REQUIRE(report[0].size() == 10);
    CHECK(report[0][0] == "mi_z1_z");
    CHECK(report[0][7] == "mi_c2_z");
    CHECK(report[0][8] == "config_hash");
    CHECK(report[0][9] == "seed");
    for (std::size_t j = 0; j < 8; ++j)
        CHECK(std::isfinite(std::stod(report[1][j])));

    const auto jac = parse_table(slurp(dir.str("e1") + "/jacobian_metric.csv"));
    REQUIRE(jac.size() == 3);
    CHECK(jac[0] == std::vector<std::string>{"view", "value", "rows_used", "rows_skipped"});
    CHECK(std::stod(jac[1][1]) >= 0.0);
    CHECK(std::stod(jac[2][1]) >= 0.0);

    SECTION("rerun is byte-identical") {
        REQUIRE(cmd_eval(cfg_path, ckpt, dir.str("data"), dir.str("e2"), std::nullopt, log) == 0);
        CHECK(slurp(dir.str("e1") + "/mi_report.csv") == slurp(dir.str("e2") + "/mi_report.csv"));
        CHECK(slurp(dir.str("e1") + "/jacobian_metric.csv") ==
              slurp(dir.str("e2") + "/jacobian_metric.csv"));
    }
    SECTION("fresh-eval seed override changes the report") {
        REQUIRE(cmd_eval(cfg_path, ckpt, dir.str("data"), dir.str("e3"), 901, log) == 0);
        CHECK(slurp(dir.str("e1") + "/mi_report.csv") != slurp(dir.str("e3") + "/mi_report.csv"));
    }
    SECTION("missing checkpoint throws") {
        CHECK_THROWS(cmd_eval(cfg_path, dir.str("nope.json"), dir.str("data"), "", std::nullopt,
                              log));
    }
    SECTION("checkpoint dims must match the config") {
        ExperimentConfig wide = cfg;
        wide.gen.d_private1 = 2;
        wide.output_dir = dir.str("wide");
        const std::string wide_path = write_config(dir, wide, "wide.json");
        CHECK_THROWS_WITH(cmd_eval(wide_path, ckpt, dir.str("data"), "", std::nullopt, log),
                          Catch::Matchers::ContainsSubstring("checkpoint"));
    }
}

TEST_CASE("ablate emits the five labelled variants", "[cli][ablate]") {
    TempDir dir;
    ExperimentConfig cfg = tiny_experiment(dir.str("abl"));
    cfg.train.max_outer_iters = 1;
    const std::string cfg_path = write_config(dir, cfg);
    std::ostringstream log;
    REQUIRE(cmd_ablate(cfg_path, "", std::nullopt, log) == 0);

    const auto table = parse_table(slurp(dir.str("abl") + "/ablation_table.csv"));
    REQUIRE(table.size() == 6);
    REQUIRE(table[0].size() == 11);
    CHECK(table[0][0] == "variant");
    CHECK(table[0][9] == "config_hash");
    const std::vector<std::string> labels = {"L", "L+V", "L+R", "L+V+R", "L+V+HSIC"};
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(table[i + 1][0] == labels[i]);
        for (std::size_t j = 1; j < 9; ++j)
            CHECK(std::isfinite(std::stod(table[i + 1][j])));
    }
    CHECK(log.str().find("[L+V+HSIC]") != std::string::npos);
}

TEST_CASE("spr sweep emits one averaged row per target", "[cli][sweep]") {
    TempDir dir;
    ExperimentConfig cfg = tiny_experiment(dir.str("sweep"));
    cfg.train.max_outer_iters = 1;
    cfg.spr_list_db = {-5.0, -15.0};
    cfg.seeds = {1};
    const std::string cfg_path = write_config(dir, cfg);
    std::ostringstream log;
    REQUIRE(cmd_spr_sweep(cfg_path, {}, "", std::nullopt, log) == 0);

    const auto table = parse_table(slurp(dir.str("sweep") + "/spr_table.csv"));
    REQUIRE(table.size() == 3);
    CHECK(table[0][0] == "spr_db");
    CHECK(table[0][9] == "seeds_ok");
    CHECK(std::stod(table[1][0]) == Catch::Approx(-5.0).margin(1e-6));
    CHECK(std::stod(table[2][0]) == Catch::Approx(-15.0).margin(1e-6));
    CHECK(table[1][9] == "1");
    CHECK(table[1][10] == "0");

    SECTION("--spr override replaces the config list") {
        REQUIRE(cmd_spr_sweep(cfg_path, {-8.0}, dir.str("ovr"), 2, log) == 0);
        const auto ovr = parse_table(slurp(dir.str("ovr") + "/spr_table.csv"));
        REQUIRE(ovr.size() == 2);
        CHECK(std::stod(ovr[1][0]) == Catch::Approx(-8.0).margin(1e-6));
    }
    SECTION("no targets anywhere is an error") {
        ExperimentConfig empty = cfg;
        empty.spr_list_db.clear();
        const std::string empty_path = write_config(dir, empty, "empty.json");
        CHECK_THROWS_WITH(cmd_spr_sweep(empty_path, {}, "", std::nullopt, log),
                          Catch::Matchers::ContainsSubstring("spr_list_db"));
    }
}

TEST_CASE("gradcheck command reports per-loss errors and passes", "[cli][gradcheck]") {
    std::ostringstream log;
    CHECK(cmd_gradcheck(log) == 0);
    CHECK(log.str().find("PASS") != std::string::npos);
    CHECK(log.str().find("max_rel_err") != std::string::npos);
    CHECK(log.str().find("FAIL") == std::string::npos);
}

TEST_CASE("binary front end maps errors and verbs to exit codes", "[cli][binary]") {
    TempDir dir;
    ExperimentConfig cfg = tiny_experiment(dir.str("brun"));
    cfg.train.max_outer_iters = 1;
    const std::string cfg_path = write_config(dir, cfg);

    SECTION("full gen/train/eval round trip through the binary") {
        REQUIRE(run_cli("gen --config " + cfg_path + " --out " + dir.str("bdata") +
                        " > /dev/null") == 0);
        REQUIRE(run_cli("train --config " + cfg_path + " --data " + dir.str("bdata") +
                        " > /dev/null") == 3);
        REQUIRE(run_cli("eval --config " + cfg_path + " --checkpoint " + dir.str("brun") +
                        "/checkpoint.json --data " + dir.str("bdata") + " > /dev/null") == 0);
        CHECK(fs::exists(dir.str("brun") + "/mi_report.csv"));
    }
    SECTION("missing checkpoint exits 1 with a diagnostic") {
        REQUIRE(run_cli("gen --config " + cfg_path + " --out " + dir.str("bdata") +
                        " > /dev/null") == 0);
        const std::string err = dir.str("err.txt");
        CHECK(run_cli("eval --config " + cfg_path + " --checkpoint " + dir.str("absent.json") +
                      " --data " + dir.str("bdata") + " 2> " + err + " > /dev/null") == 1);
        CHECK(slurp(err).find("error:") != std::string::npos);
    }
    SECTION("unreadable config exits 1") {
        CHECK(run_cli("gen --config " + dir.str("missing.json") + " 2> /dev/null") == 1);
    }
    SECTION("no subcommand is a usage error") {
        CHECK(run_cli("2> /dev/null") != 0);
    }
    SECTION("unknown flag is a usage error") {
        CHECK(run_cli("gen --config " + cfg_path + " --bogus 2> /dev/null") != 0);
    }
}
