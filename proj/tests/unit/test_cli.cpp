#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "netcpd/bench.hpp"
#include "netcpd/cascade_sim.hpp"
#include "netcpd/detector.hpp"

namespace fs = std::filesystem;
using namespace netcpd;

namespace {

const std::string kCli = NETCPD_CLI;
const std::string kData = NETCPD_DATA_DIR;

struct Run {
    int code;
    std::string out;
};

// Runs a shell command, capturing stdout (and stderr when asked).
Run run(const std::string& args, bool merge_stderr = false) {
    const std::string cmd = kCli + " " + args + (merge_stderr ? " 2>&1" : " 2>/dev/null");
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[4096];
    std::size_t got = 0;
    while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) {
        out.append(buf, got);
    }
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), out};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

int count_lines(const std::string& text) {
    return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("netcpd_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("simulate writes deterministic cascade and panel files") {
    const auto dir = scratch("simulate");
    const auto a = run("simulate --graph " + kData + "/two_node.csv --seed 7 --ticks 30 --out " + (dir / "a").string());
    REQUIRE(a.code == 0);
    const auto cascade = slurp(dir / "a" / "cascade.csv");
    CHECK(cascade.rfind("node,tau\n", 0) == 0);
    CHECK(count_lines(cascade) == 3);
    CHECK(count_lines(slurp(dir / "a" / "panel.csv")) == 31);

    REQUIRE(run("simulate --graph " + kData + "/two_node.csv --seed 7 --ticks 30 --out " + (dir / "b").string()).code == 0);
    CHECK(slurp(dir / "a" / "cascade.csv") == slurp(dir / "b" / "cascade.csv"));
    CHECK(slurp(dir / "a" / "panel.csv") == slurp(dir / "b" / "panel.csv"));

    REQUIRE(run("simulate --graph " + kData + "/case300.m --alpha0 0.1 --ticks 5 --out " + (dir / "grid").string()).code ==
            0);
    CHECK(count_lines(slurp(dir / "grid" / "cascade.csv")) == 301);

    const auto bad = run("simulate --graph " + kData + "/two_node.csv --seed-node 9 --out " + (dir / "c").string(), true);
    CHECK(bad.code != 0);
    CHECK(count_lines(bad.out) == 1);
    CHECK(bad.out.rfind("error: ", 0) == 0);
    CHECK(run("simulate --graph " + kData + "/case300.m --out " + (dir / "d").string()).code != 0);
}

TEST_CASE("detect alarms at the first window with b = -inf") {
    const auto dir = scratch("detect_low");
    REQUIRE(run("simulate --graph " + kData + "/two_node.csv --ticks 40 --out " + dir.string()).code == 0);
    std::ofstream(dir / "cfg.txt") << "window=15\nmax_path=2\n";
    const auto r = run("detect --graph " + kData + "/two_node.csv --config " + (dir / "cfg.txt").string() +
                       " --threshold -inf --panel " + (dir / "panel.csv").string() + " --out " +
                       (dir / "trace.csv").string());
    REQUIRE(r.code == 0);
    CHECK(r.out == "alarm at tick 15\n");
    const auto trace = slurp(dir / "trace.csv");
    CHECK(trace.find("window=15 max_path=2") != std::string::npos);
    CHECK(trace.find("t,S_eta,alarm\n15,") != std::string::npos);
}

TEST_CASE("detect finds an injected cascade near its first failure") {
    const auto dir = scratch("detect_cascade");
    std::ofstream(dir / "g.csv") << "1,2,0.3\n1,3,0.3\n2,3,0.3\n3,4,0.3\n";
    REQUIRE(run("simulate --graph " + (dir / "g.csv").string() +
                " --seed 5 --seed-node 2 --seed-time 45.5 --mu 5 --ticks 80 --out " + dir.string())
                .code == 0);
    std::ifstream cascade_in(dir / "cascade.csv");
    const auto tau = read_cascade_csv(cascade_in);
    const int oracle_tick = first_affected_tick(tau.first());
    REQUIRE(oracle_tick == 46);

    std::ofstream(dir / "cfg.txt") << "window=20\nmax_path=3\nsamples=1\npercentile=0.8\nl1=0.0067\neta=1\nb=30\n";
    const auto r = run("detect --graph " + (dir / "g.csv").string() + " --config " + (dir / "cfg.txt").string() +
                       " --panel " + (dir / "panel.csv").string() + " --out " + (dir / "trace.csv").string());
    REQUIRE(r.code == 0);
    int alarm = 0;
    REQUIRE(std::sscanf(r.out.c_str(), "alarm at tick %d", &alarm) == 1);
    CHECK(alarm >= oracle_tick);
    CHECK(alarm <= oracle_tick + 2);

    // Streaming mode over stdin gives the same trace.
    const auto streamed = run("detect --graph " + (dir / "g.csv").string() + " --config " +
                              (dir / "cfg.txt").string() + " < " + (dir / "panel.csv").string());
    REQUIRE(streamed.code == 0);
    CHECK(streamed.out == slurp(dir / "trace.csv"));
}

TEST_CASE("detect rejects malformed input") {
    const auto dir = scratch("detect_bad");
    std::ofstream(dir / "wide.csv") << "t,x_1,x_2,x_3\n1,0,0,0\n";
    const auto wide = run("detect --graph " + kData + "/two_node.csv --panel " + (dir / "wide.csv").string(), true);
    CHECK(wide.code != 0);
    std::ofstream(dir / "cfg.txt") << "window=5\nmax_path=2\n";
    std::ofstream(dir / "junk.csv") << "0.1,0.2\n0.3,oops\n";
    const auto junk = run("detect --graph " + kData + "/two_node.csv --config " + (dir / "cfg.txt").string() +
                              " --panel " + (dir / "junk.csv").string(),
                          true);
    CHECK(junk.code != 0);
    CHECK(junk.out.find("line 2") != std::string::npos);
    CHECK(run("detect --graph " + kData + "/two_node.csv --config /nonexistent.cfg").code != 0);
}

TEST_CASE("bench emits one row per method") {
    const auto dir = scratch("bench");
    const auto r = run("bench --spec " + kData + "/specs/smoke.json --out " + (dir / "results.csv").string());
    REQUIRE(r.code == 0);
    std::ifstream in(dir / "results.csv");
    const auto report = read_report_csv(in);
    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].method == "proposed");
    CHECK(report.rows[1].method == "cusum");
    CHECK(report.rows[2].method == "window_glr");

    std::ofstream(dir / "bad.json") << R"({"name": "x", "methods": [], "trials": 5})";
    const auto bad = run("bench --spec " + (dir / "bad.json").string(), true);
    CHECK(bad.code != 0);
    CHECK(bad.out.find("experiment spec") != std::string::npos);
    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(run("bench --spec " + (dir / "broken.json").string()).code != 0);
}

TEST_CASE("calibrate prints a threshold per method") {
    const auto r = run("calibrate --spec " + kData + "/specs/smoke.json --method cusum --target 60");
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("cusum,threshold=", 0) == 0);
    CHECK(count_lines(r.out) == 1);
}

TEST_CASE("every produced CSV is re-ingestible by convert") {
    const auto dir = scratch("convert");
    REQUIRE(run("simulate --graph " + kData + "/two_node.csv --ticks 30 --out " + dir.string()).code == 0);
    std::ofstream(dir / "cfg.txt") << "window=10\nmax_path=2\n";
    REQUIRE(run("detect --graph " + kData + "/two_node.csv --config " + (dir / "cfg.txt").string() + " --panel " +
                (dir / "panel.csv").string() + " --out " + (dir / "trace.csv").string())
                .code == 0);
    REQUIRE(run("bench --spec " + kData + "/specs/smoke.json --trials 10 --out " + (dir / "results.csv").string())
                .code == 0);
    for (const auto* name : {"cascade.csv", "panel.csv", "results.csv"}) {
        const auto r = run("convert --in " + (dir / name).string());
        REQUIRE(r.code == 0);
        CHECK(r.out == slurp(dir / name));
        CHECK(run("convert --format json --in " + (dir / name).string()).code == 0);
    }
    const auto trace = run("convert --in " + (dir / "trace.csv").string());
    REQUIRE(trace.code == 0);
    CHECK(trace.out.rfind("t,S_eta,alarm\n", 0) == 0);
    CHECK(slurp(dir / "trace.csv").find(trace.out.substr(trace.out.find('\n') + 1)) != std::string::npos);

    const auto graph_json = run("convert --format json --in " + kData + "/two_node.csv --out " +
                                (dir / "g.json").string());
    REQUIRE(graph_json.code == 0);
    const auto back = run("convert --in " + (dir / "g.json").string());
    CHECK(back.out == "1,2,0.5,0.5\n");
    CHECK(run("convert --format yaml --in " + kData + "/two_node.csv").code != 0);
}

TEST_CASE("usage errors exit nonzero") {
    CHECK(run("").code != 0);
    CHECK(run("frobnicate").code != 0);
    CHECK(run("detect").code != 0);
}
