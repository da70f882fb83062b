#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "fvb/rng.hpp"

using nlohmann::json;

namespace {

int run_counter = 0;

struct RunResult {
    int exit_code = -1;
    std::string out, err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << content;
}

RunResult run(const std::string& args) {
    std::string tag = std::string(FVB_WORK_DIR) + "/cli_run_" + std::to_string(run_counter++);
    std::string cmd = std::string(FVB_CLI_PATH) + " " + args + " > " + tag + ".out 2> " +
                      tag + ".err";
    int rc = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(tag + ".out");
    r.err = slurp(tag + ".err");
    return r;
}

std::string work(const std::string& name) {
    return std::string(FVB_WORK_DIR) + "/" + name;
}

// Two separated planar clusters, written once per process.
std::string gmm_data_file() {
    static std::string path = [] {
        std::string p = work("cli_gmm_data.csv");
        fvb::Rng rng(314, {0x636c69ULL});
        std::string text = "x,y\n";
        for (int i = 0; i < 90; ++i) {
            double cx = rng.uniform() < 0.6 ? 0.0 : 6.0;
            text += std::to_string(cx + rng.normal()) + "," +
                    std::to_string(cx + rng.normal()) + "\n";
        }
        spit(p, text);
        return p;
    }();
    return path;
}

std::string bmlr_data_file() {
    static std::string path = [] {
        std::string p = work("cli_bmlr_data.csv");
        fvb::Rng rng(159, {0x636c69ULL});
        std::string text = "dataset,y,x1\n";
        for (int u = 0; u < 12; ++u) {
            double slope = u % 2 == 0 ? 2.0 : -2.0;
            for (int t = 0; t < 6; ++t) {
                double x = rng.normal();
                double y = slope * x + 0.3 * rng.normal();
                text += std::to_string(u) + "," + std::to_string(y) + "," +
                        std::to_string(x) + "\n";
            }
        }
        spit(p, text);
        return p;
    }();
    return path;
}

std::string faithful_path() { return std::string(FVB_DATA_DIR) + "/faithful.csv"; }

}  // namespace

TEST_CASE("fitting the geyser data converges to a two cluster posterior") {
    std::string out = work("cli_fit_faithful.json");
    auto r = run("fit-gmm --input " + faithful_path() + " --out " + out);
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("converged") != std::string::npos);
    json doc = json::parse(slurp(out));
    CHECK(doc.at("provenance").at("command") == "fit-gmm");
    CHECK(doc.at("provenance").contains("version"));
    CHECK(doc.at("provenance").contains("config_hash"));
    const json& fit = doc.at("fit");
    CHECK(fit.at("model") == "gmm");
    CHECK(fit.at("converged").get<bool>());
    CHECK(fit.at("alpha").size() == 2);
    auto mix = fit.at("mixing_mean").get<std::vector<double>>();
    double top = std::max(mix[0], mix[1]);
    CHECK(top > 0.55);
    CHECK(top < 0.75);
}

TEST_CASE("bad inputs map to distinct exit codes") {
    SUBCASE("missing file is an io error") {
        auto r = run("fit-gmm --input " + work("no_such_file.csv"));
        CHECK(r.exit_code == 2);
        CHECK(r.err.find("error: [io]") != std::string::npos);
    }
    SUBCASE("an empty file is a schema error") {
        std::string p = work("cli_empty.csv");
        spit(p, "");
        auto r = run("fit-gmm --input " + p);
        CHECK(r.exit_code == 3);
        CHECK(r.err.find("error: [schema]") != std::string::npos);
    }
    SUBCASE("a zero fraction is a numeric error") {
        auto r = run("fit-gmm --input " + gmm_data_file() + " --omega 0");
        CHECK(r.exit_code == 4);
        CHECK(r.err.find("error: [numeric]") != std::string::npos);
        auto r2 = run("fit-gmm --input " + gmm_data_file() + " --omega 1.5");
        CHECK(r2.exit_code == 4);
    }
    SUBCASE("unknown configuration keys are rejected by name") {
        std::string p = work("cli_bad_cfg.json");
        spit(p, "{\"K\": 2, \"bogus_knob\": 1}");
        auto r = run("fit-gmm --input " + gmm_data_file() + " --config " + p);
        CHECK(r.exit_code == 3);
        CHECK(r.err.find("bogus_knob") != std::string::npos);
    }
    SUBCASE("config values of the wrong type are schema errors") {
        std::string p = work("cli_bad_type.json");
        spit(p, "{\"K\": \"two\"}");
        auto r = run("fit-gmm --input " + gmm_data_file() + " --config " + p);
        CHECK(r.exit_code == 3);
    }
    SUBCASE("unknown calibration modes, functionals, and models are rejected") {
        auto r = run("calibrate --input " + gmm_data_file() + " --mode bogus");
        CHECK(r.exit_code == 3);
        CHECK(r.err.find("mode must be") != std::string::npos);
        auto r2 = run("calibrate --input " + gmm_data_file() + " --functional zeta");
        CHECK(r2.exit_code == 3);
        auto r3 = run("calibrate --input " + gmm_data_file() + " --model tree");
        CHECK(r3.exit_code == 3);
    }
    SUBCASE("usage problems exit with one") {
        auto r = run("no-such-command");
        CHECK(r.exit_code == 1);
        CHECK(r.err.find("error: [usage]") != std::string::npos);
        auto r2 = run("fit-gmm");  // --input is required
        CHECK(r2.exit_code == 1);
    }
}

TEST_CASE("identical seeds produce byte identical artifacts") {
    std::string o1 = work("cli_det_1.json");
    std::string o2 = work("cli_det_2.json");
    std::string o3 = work("cli_det_3.json");
    std::string base = "fit-gmm --input " + gmm_data_file() + " --seed 99 --out ";
    CHECK(run(base + o1).exit_code == 0);
    CHECK(run(base + o2).exit_code == 0);
    CHECK(slurp(o1) == slurp(o2));
    CHECK(run("fit-gmm --input " + gmm_data_file() + " --seed 100 --out " + o3).exit_code == 0);
    CHECK(slurp(o1) != slurp(o3));
}

TEST_CASE("a persisted table is reused for a second functional with zero fits") {
    std::string table = work("cli_reuse.table");
    std::remove(table.c_str());
    std::string o1 = work("cli_cal_1.json");
    std::string o2 = work("cli_cal_2.json");
    std::string base = "calibrate --input " + gmm_data_file() +
                       " --mode grid --grid log:0.2:1:4 --B 12 --seed 5 --table " + table;

    auto r1 = run(base + " --functional pi --out " + o1);
    CHECK(r1.exit_code == 0);
    json d1 = json::parse(slurp(o1));
    CHECK(d1.at("detail").at("table_loaded") == false);
    CHECK(std::ifstream(table).good());

    auto r2 = run(base + " --functional mu:1,1 --out " + o2);
    CHECK(r2.exit_code == 0);
    json d2 = json::parse(slurp(o2));
    CHECK(d2.at("detail").at("table_loaded") == true);
    CHECK(d2.at("detail").at("fits_during_utilization") == 0);
    CHECK(d2.at("functional") == "mu:1,1");
    double lo = d2.at("interval").at("lo").get<double>();
    double hi = d2.at("interval").at("hi").get<double>();
    CHECK(lo < hi);
    double omega = d2.at("omega").get<double>();
    CHECK(omega > 0.0);
    CHECK(omega <= 1.0);
    CHECK(d2.at("detail").at("curve").size() == 4);
}

TEST_CASE("sequential mode with a zero iteration budget reports fraction one") {
    std::string cfg = work("cli_seq0.json");
    spit(cfg, "{\"calib_max_iter\": 0}");
    std::string out = work("cli_seq0_out.json");
    auto r = run("calibrate --input " + gmm_data_file() + " --mode seq --B 8 --config " +
                 cfg + " --out " + out);
    CHECK(r.exit_code == 0);
    json doc = json::parse(slurp(out));
    CHECK(doc.at("omega") == 1.0);
    CHECK(doc.at("detail").at("converged") == false);
    CHECK(doc.at("detail").at("iterations") == 0);
    CHECK(doc.at("detail").at("trace").empty());
}

TEST_CASE("the full data mode runs the same machinery without a split") {
    std::string out = work("cli_gpc_out.json");
    auto r = run("calibrate --input " + gmm_data_file() +
                 " --mode gpc --B 8 --seed 3 --out " + out);
    CHECK(r.exit_code == 0);
    json doc = json::parse(slurp(out));
    double omega = doc.at("omega").get<double>();
    CHECK(omega > 0.0);
    CHECK(omega <= 1.0);
    CHECK(!doc.at("detail").at("trace").empty());
}

TEST_CASE("table construction reports the stored scalar budget") {
    std::string table = work("cli_built.table");
    auto r = run("build-table --input " + gmm_data_file() +
                 " --grid log:0.2:1:3 --B 12 --seed 5 --out " + table);
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("3 columns") != std::string::npos);
    // (B + 2)(N + p + p^2 + 3)K = 14 * 99 * 2 per column at N=90, p=2, K=2
    CHECK(r.out.find("2772") != std::string::npos);

    std::string out = work("cli_cal_prebuilt.json");
    auto r2 = run("calibrate --input " + gmm_data_file() +
                  " --mode grid --functional pi --table " + table + " --out " + out);
    CHECK(r2.exit_code == 0);
    json doc = json::parse(slurp(out));
    CHECK(doc.at("detail").at("table_loaded") == true);
    CHECK(doc.at("detail").at("fits_during_utilization") == 0);
}

TEST_CASE("the regression front end fits grouped datasets") {
    std::string out = work("cli_bmlr_fit.json");
    auto r = run("fit-bmlr --input " + bmlr_data_file() + " --out " + out);
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("converged") != std::string::npos);
    json doc = json::parse(slurp(out));
    CHECK(doc.at("fit").at("model") == "bmlr");
    CHECK(doc.at("fit").at("alpha").size() == 2);
    // slopes near +/-2 in some order
    auto m = doc.at("fit").at("m").get<std::vector<std::vector<double>>>();
    REQUIRE(m.size() == 1);  // p = 1
    double a = m[0][0], b = m[0][1];
    CHECK(std::min(a, b) == doctest::Approx(-2.0).epsilon(0.2));
    CHECK(std::max(a, b) == doctest::Approx(2.0).epsilon(0.2));

    // a mixture-format file is not a grouped regression file
    auto bad = run("fit-bmlr --input " + gmm_data_file());
    CHECK(bad.exit_code == 3);
    CHECK(bad.err.find("dataset") != std::string::npos);
}

TEST_CASE("simulation writes a summary report and a per replication log") {
    std::string cfg = work("cli_sim.json");
    spit(cfg,
         "{\"model\": \"gmm\", \"N\": 60, \"replications\": 10, \"methods\": [\"vb\"], "
         "\"B\": 4}");
    std::string rep1 = work("cli_sim_report_1.csv");
    std::string rep2 = work("cli_sim_report_2.csv");
    std::string base = " simulate --config " + cfg + " --seed 12 --workers 2 --out ";
    auto r1 = run(base + rep1);
    CHECK(r1.exit_code == 0);

    std::string report = slurp(rep1);
    CHECK(report.rfind("method,n,coverage,", 0) == 0);
    CHECK(std::count(report.begin(), report.end(), '\n') == 2);  // header + one method

    std::string log = slurp(rep1 + ".log");
    CHECK(log.rfind("method,replication,seed,omega,lo,hi,covered,failed\n", 0) == 0);
    CHECK(std::count(log.begin(), log.end(), '\n') == 11);  // header + ten rows

    CHECK(std::ifstream(rep1 + ".meta.json").good());

    auto r2 = run(base + rep2);
    CHECK(r2.exit_code == 0);
    CHECK(slurp(rep2) == report);
    CHECK(slurp(rep2 + ".log") == log);
}

TEST_CASE("unknown simulation methods and models are named in the error") {
    std::string cfg = work("cli_sim_bad.json");
    spit(cfg, "{\"methods\": [\"vb\", \"wavelet\"], \"replications\": 2, \"N\": 40}");
    auto r = run("simulate --config " + cfg + " --out " + work("cli_sim_bad.csv"));
    CHECK(r.exit_code == 3);
    CHECK(r.err.find("wavelet") != std::string::npos);

    std::string cfg2 = work("cli_sim_bad2.json");
    spit(cfg2, "{\"model\": \"tree\", \"replications\": 2}");
    auto r2 = run("simulate --config " + cfg2 + " --out " + work("cli_sim_bad2.csv"));
    CHECK(r2.exit_code == 3);
    CHECK(r2.err.find("gmm or bmlr") != std::string::npos);
}

TEST_CASE("the packaged analysis emits one calibrated interval per functional") {
    std::string out = work("cli_faithful_small.json");
    std::string table = work("cli_faithful_small.table");
    std::remove(table.c_str());
    auto r = run("analyze-faithful --input " + gmm_data_file() +
                 " --grid log:0.1:1:4 --B 8 --seed 2 --table " + table + " --out " + out);
    CHECK(r.exit_code == 0);
    json doc = json::parse(slurp(out));
    CHECK(doc.at("vb_fit").at("model") == "gmm");
    const json& results = doc.at("results");
    REQUIRE(results.size() == 7);
    for (const auto& e : results) {
        CHECK(e.contains("functional"));
        CHECK(e.at("vb").at("lo").get<double>() <= e.at("vb").at("hi").get<double>());
        CHECK(e.at("calibrated").at("lo").get<double>() <= e.at("calibrated").at("hi").get<double>());
        double om = e.at("omega").get<double>();
        CHECK(om > 0.0);
        CHECK(om <= 1.0);
    }
}
