#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli() {
    const char* p = std::getenv("FLOWMAP_CLI");
    REQUIRE_MESSAGE(p, "FLOWMAP_CLI must point at the built binary");
    return p;
}

std::string fixture(const std::string& name) {
    const char* dir = std::getenv("FLOWMAP_FIXTURES");
    return (fs::path(dir ? dir : "fixtures") / name).string();
}

struct CmdResult {
    int code = -1;
    std::string output;
};

CmdResult run(const std::string& args) {
    static int n = 0;
    auto log = fs::temp_directory_path() / ("flowmap_cli_test_" + std::to_string(n++) + ".log");
    std::string cmd = cli() + " " + args + " > " + log.string() + " 2>&1";
    int status = std::system(cmd.c_str());
    CmdResult r;
    r.code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
    std::ifstream f(log);
    std::stringstream ss;
    ss << f.rdbuf();
    r.output = ss.str();
    fs::remove(log);
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("flowmap_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("validate reports node and edge counts") {
    auto r = run("validate --network " + fixture("yolov3_tiny_small.json"));
    CHECK(r.code == 0);
    CHECK(r.output.find("ok:") != std::string::npos);
}

TEST_CASE("missing files exit 2 and name the path") {
    auto r = run("validate --network /nonexistent/net.json");
    CHECK(r.code == 2);
    CHECK(r.output.find("/nonexistent/net.json") != std::string::npos);
    CHECK(r.output.find("error[") != std::string::npos);

    auto dir = scratch("missing_platform");
    auto r2 = run("dse --network " + fixture("yolov5n_small.json") +
                  " --platform /nonexistent/plat.json --out-dir " + (dir / "o").string());
    CHECK(r2.code == 2);
    CHECK(r2.output.find("/nonexistent/plat.json") != std::string::npos);
}

TEST_CASE("an undersized platform is reported as infeasible") {
    auto dir = scratch("infeasible");
    auto plat = dir / "tiny.json";
    std::ofstream(plat) << R"({"dsp_total": 1, "onchip_bits": 100000000,
                              "f_clk": 1e8, "offchip_bw": 1e11})";
    auto r = run("dse --network " + fixture("yolov3_tiny_small.json") +
                 " --platform " + plat.string() + " --out-dir " + (dir / "o").string());
    CHECK(r.code == 3);
    CHECK(r.output.find("error[dse]") != std::string::npos);
}

TEST_CASE("flow produces the full artifact set within budget") {
    auto dir = scratch("flow");
    auto r = run("flow --network " + fixture("yolov5n_small.json") + " --platform " +
                 fixture("platform_zcu104.json") + " --out-dir " + dir.string());
    REQUIRE_MESSAGE(r.code == 0, r.output);
    for (const auto* f : {"report.json", "report.csv", "design.json",
                          "weights_quantized.satq", "manifest.json"})
        CHECK_MESSAGE(fs::exists(dir / f), f);

    auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["dsp_used"].get<std::int64_t>() <= rep["dsp_total"].get<std::int64_t>());
    CHECK(rep["total_latency_s"].get<double>() > 0.0);

    auto man = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(man.contains("config_hash"));
    CHECK(man.contains("stages"));
}

TEST_CASE("repeated runs are byte-identical") {
    auto d1 = scratch("det1"), d2 = scratch("det2");
    std::string args = " --network " + fixture("yolov5n_small.json") + " --platform " +
                       fixture("platform_zcu104.json") + " --seed 5 --out-dir ";
    REQUIRE(run("flow" + args + d1.string()).code == 0);
    REQUIRE(run("flow" + args + d2.string()).code == 0);
    for (const auto* f : {"report.json", "report.csv", "design.json"})
        CHECK_MESSAGE(slurp(d1 / f) == slurp(d2 / f), f);
}

TEST_CASE("simulate checks against the reference and honors the design") {
    auto dir = scratch("simulate");
    std::string net = fixture("yolov5n_small.json");
    std::string plat = fixture("platform_zcu104.json");
    REQUIRE(run("dse --network " + net + " --platform " + plat + " --out-dir " +
                dir.string())
                .code == 0);

    auto r = run("simulate --network " + net + " --platform " + plat + " --design " +
                 (dir / "design.json").string() + " --check --out-dir " +
                 (dir / "sim").string());
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(r.output.find("match") != std::string::npos);
    CHECK(fs::exists(dir / "sim" / "sim.json"));

    // a design that skips a node is rejected before simulation
    auto partial = dir / "partial.json";
    std::ofstream(partial) << R"({"parallelism": {"stem": 1}})";
    auto r2 = run("simulate --network " + net + " --platform " + plat + " --design " +
                  partial.string() + " --out-dir " + (dir / "sim2").string());
    CHECK(r2.code == 2);
}

TEST_CASE("a starved channel capacity is reported as deadlock") {
    auto dir = scratch("deadlock");
    std::string net = fixture("yolov3_tiny_small.json");
    std::string plat = fixture("platform_zcu104.json");
    REQUIRE(run("dse --network " + net + " --platform " + plat + " --out-dir " +
                dir.string())
                .code == 0);
    // clamp the skip edge feeding the concat to a uselessly small depth
    auto design = nlohmann::json::parse(slurp(dir / "design.json"));
    design["channel_capacities"]["leaky2->merge"] = 2;
    std::ofstream(dir / "tight.json") << design.dump(2);

    auto r = run("simulate --network " + net + " --platform " + plat + " --design " +
                 (dir / "tight.json").string() + " --out-dir " + (dir / "sim").string());
    CHECK(r.code == 4);
    CHECK(r.output.find("deadlock") != std::string::npos);
}

TEST_CASE("ablation sweep is monotone in the off-chip count") {
    auto dir = scratch("ablation");
    auto r = run("ablation --network " + fixture("yolov3_tiny_small.json") +
                 " --platform " + fixture("platform_zcu104.json") + " --top-k 2" +
                 " --out-dir " + dir.string());
    REQUIRE_MESSAGE(r.code == 0, r.output);
    auto csv = slurp(dir / "ablation.csv");
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);  // header
    CHECK(line == "k,mem_skip_bits,mem_total_bits,offchip_bw_bits_per_s");
    std::vector<std::array<double, 4>> rows;
    while (std::getline(lines, line)) {
        std::array<double, 4> row{};
        std::istringstream ls(line);
        std::string cell;
        for (int i = 0; i < 4 && std::getline(ls, cell, ','); ++i)
            row[size_t(i)] = std::stod(cell);
        rows.push_back(row);
    }
    REQUIRE(rows.size() >= 2);
    CHECK(rows[0][0] == 0.0);
    for (size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i][1] <= rows[i - 1][1]);  // on-chip skip bits shrink
        CHECK(rows[i][3] >= rows[i - 1][3]);  // off-chip traffic grows
    }
}
